//! Closed-form equalizer and weight updates, and the power-constrained
//! digital-precoder subproblem.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::linalg::{frob_sq, hermitian_part, range_eig, CMat, C64};
use crate::model::{mse_from_gains, sinr_from_gains, DigitalPrecoders, NoiseGrid};

/// Upper cap on MSE weights; reached only when an MSE underflows.
pub const MAX_WEIGHT: f64 = 1e14;

/// `G_n = P^H H_n`, or `H_n` itself when the analog stage is the identity.
pub(crate) fn steer(channel: &FreqChannel, p: Option<&CMat>) -> Result<Vec<CMat>> {
    match p {
        None => Ok(channel.subcarriers().to_vec()),
        Some(p) => {
            if p.nrows() != channel.n_tx() {
                return Err(Error::dims("analog matrix rows", channel.n_tx(), p.nrows()));
            }
            let ph = p.adjoint();
            Ok(channel.subcarriers().iter().map(|h| &ph * h).collect())
        }
    }
}

/// Effective gains `E_n = G_n^H W_n` (`K x K`, row `k` is what user `k` sees).
pub(crate) fn gains(steered: &[CMat], w: &DigitalPrecoders) -> Result<Vec<CMat>> {
    if steered.len() != w.n_subcarriers() {
        return Err(Error::dims(
            "precoder subcarriers",
            steered.len(),
            w.n_subcarriers(),
        ));
    }
    steered
        .iter()
        .zip(w.blocks())
        .map(|(g, wn)| {
            if g.nrows() != wn.nrows() {
                return Err(Error::dims("precoder rows (N_RF)", g.nrows(), wn.nrows()));
            }
            Ok(g.adjoint() * wn)
        })
        .collect()
}

fn check_noise(e: &[CMat], noise: &NoiseGrid) -> Result<()> {
    let k = e.first().map_or(0, |m| m.nrows());
    if noise.dims() != (k, e.len()) {
        return Err(Error::dims(
            "noise grid",
            format!("{:?}", (k, e.len())),
            format!("{:?}", noise.dims()),
        ));
    }
    if let Some(v) = noise.0.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveNoise(*v));
    }
    Ok(())
}

pub(crate) fn equalizers_from_gains(e: &[CMat], noise: &NoiseGrid) -> Result<DMatrix<C64>> {
    check_noise(e, noise)?;
    let k_n = noise.dims().0;
    Ok(DMatrix::from_fn(k_n, e.len(), |k, n| {
        let row = e[n].row(k);
        let total: f64 = row.iter().map(|g| g.norm_sqr()).sum::<f64>() + noise.get(k, n);
        row[k] / total
    }))
}

pub(crate) fn mse_grid(e: &[CMat], u: &DMatrix<C64>, noise: &NoiseGrid) -> DMatrix<f64> {
    DMatrix::from_fn(u.nrows(), u.ncols(), |k, n| {
        mse_from_gains(u[(k, n)], e[n].row(k).iter().cloned(), k, noise.get(k, n))
    })
}

pub(crate) fn weights_from_gains(
    e: &[CMat],
    u: &DMatrix<C64>,
    noise: &NoiseGrid,
) -> Result<DMatrix<f64>> {
    check_noise(e, noise)?;
    if u.shape() != noise.dims() {
        return Err(Error::dims(
            "equalizer grid",
            format!("{:?}", noise.dims()),
            format!("{:?}", u.shape()),
        ));
    }
    let mse = mse_grid(e, u, noise);
    let mut capped = 0;
    let omega = mse.map(|m| {
        if m * MAX_WEIGHT > 1.0 {
            1.0 / m
        } else {
            capped += 1;
            MAX_WEIGHT
        }
    });
    if capped > 0 {
        warn!("{capped} MSE weight(s) capped at {MAX_WEIGHT:e}");
    }
    Ok(omega)
}

pub(crate) fn sumrate_from_gains(e: &[CMat], noise: &NoiseGrid) -> f64 {
    let mut total = 0.0;
    for (n, en) in e.iter().enumerate() {
        for k in 0..en.nrows() {
            total += (1.0 + sinr_from_gains(en.row(k).iter().cloned(), k, noise.get(k, n))).log2();
        }
    }
    total / e.len().max(1) as f64
}

pub(crate) fn objective_from_gains(
    e: &[CMat],
    u: &DMatrix<C64>,
    omega: &DMatrix<f64>,
    noise: &NoiseGrid,
) -> Result<f64> {
    crate::model::wmmse_objective(omega, &mse_grid(e, u, noise))
}

/// MMSE receive equalizers,
/// `u_{k,n} = h^H P w_k / (sum_j |h^H P w_j|^2 + sigma_tilde^2)`, as a `K x N` grid.
pub fn update_equalizers(
    channel: &FreqChannel,
    p: &CMat,
    w: &DigitalPrecoders,
    noise: &NoiseGrid,
) -> Result<DMatrix<C64>> {
    equalizers_from_gains(&gains(&steer(channel, Some(p))?, w)?, noise)
}

/// MSE weights `omega_{k,n} = 1 / E_{k,n}(u)`. At the MMSE equalizer this
/// equals `1 + SINR_{k,n}`.
pub fn update_weights(
    channel: &FreqChannel,
    p: &CMat,
    w: &DigitalPrecoders,
    u: &DMatrix<C64>,
    noise: &NoiseGrid,
) -> Result<DMatrix<f64>> {
    weights_from_gains(&gains(&steer(channel, Some(p))?, w)?, u, noise)
}

/// One subcarrier of the precoder subproblem, `Q = B diag(lambda) B^H` with
/// `a = B c + r` split into its range and null-space parts.
#[derive(Debug, Clone)]
struct SubcarrierQcqp {
    basis: CMat,
    eig: Vec<f64>,
    coeffs: CMat,
    residual: CMat,
}

impl SubcarrierQcqp {
    fn from_basis(basis: CMat, eig: Vec<f64>, a: &CMat) -> Self {
        let coeffs = basis.adjoint() * a;
        let residual = a - &basis * &coeffs;
        SubcarrierQcqp {
            basis,
            eig,
            coeffs,
            residual,
        }
    }
}

/// Digital-precoder subproblem
///
/// ```text
/// minimise  sum_n sum_k (w^H Q_n w - 2 Re a_{k,n}^H w)   s.t.  sum_n ||W_n||_F^2 <= P_T
/// ```
///
/// solved through `W_n(mu) = (Q_n + mu I)^{-1} A_n` with one multiplier `mu`
/// shared by all subcarriers.
#[derive(Debug, Clone)]
pub struct WSubproblem {
    parts: Vec<SubcarrierQcqp>,
    n_users: usize,
    /// Eigenvalues at or below this are treated as zero when `mu = 0`.
    null_tol: f64,
    a_energy: f64,
}

/// Result of the precoder subproblem.
#[derive(Debug, Clone)]
pub struct WSolution {
    pub w: DigitalPrecoders,
    pub mu: f64,
    pub bisection_steps: usize,
}

impl WSubproblem {
    fn from_parts(parts: Vec<SubcarrierQcqp>, n_users: usize) -> Self {
        let lmax = parts
            .iter()
            .flat_map(|p| p.eig.iter().cloned())
            .fold(0.0, f64::max);
        let a_energy = parts
            .iter()
            .map(|p| frob_sq(&p.coeffs) + frob_sq(&p.residual))
            .sum();
        WSubproblem {
            parts,
            n_users,
            null_tol: 1e-12 * lmax,
            a_energy,
        }
    }

    /// From explicit Hermitian PSD `Q_n` (`N_RF x N_RF`) and right-hand sides
    /// `A_n = [a_{1,n}, ..., a_{K,n}]`.
    pub fn from_explicit(q: &[CMat], a: &[CMat]) -> Result<Self> {
        if q.len() != a.len() || q.is_empty() {
            return Err(Error::dims("WSubproblem::from_explicit", q.len(), a.len()));
        }
        let n_users = a[0].ncols();
        let mut parts = Vec::with_capacity(q.len());
        for (qn, an) in q.iter().zip(a) {
            if !qn.is_square() || qn.nrows() != an.nrows() || an.ncols() != n_users {
                return Err(Error::dims(
                    "WSubproblem::from_explicit",
                    format!("{0}x{0} / {0}x{n_users}", an.nrows()),
                    format!("{:?} / {:?}", qn.shape(), an.shape()),
                ));
            }
            let eig = SymmetricEigen::new(hermitian_part(qn));
            let vals = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            parts.push(SubcarrierQcqp::from_basis(eig.eigenvectors, vals, an));
        }
        Ok(Self::from_parts(parts, n_users))
    }

    /// From the current BCD state: `Q_n = G_n diag(omega |u|^2) G_n^H` and
    /// `a_{k,n} = omega u G_n e_k` with `G_n = P^H H_n`.
    pub fn from_state(
        channel: &FreqChannel,
        p: &CMat,
        u: &DMatrix<C64>,
        omega: &DMatrix<f64>,
    ) -> Result<Self> {
        Self::from_steered(&steer(channel, Some(p))?, u, omega)
    }

    pub(crate) fn from_steered(g: &[CMat], u: &DMatrix<C64>, omega: &DMatrix<f64>) -> Result<Self> {
        let k_n = g.first().map_or(0, |m| m.ncols());
        if u.shape() != (k_n, g.len()) || omega.shape() != u.shape() {
            return Err(Error::dims(
                "WSubproblem::from_state",
                format!("{:?}", (k_n, g.len())),
                format!("{:?} / {:?}", u.shape(), omega.shape()),
            ));
        }
        let parts = g
            .iter()
            .enumerate()
            .map(|(n, gn)| {
                let mut f = gn.clone();
                let mut a = gn.clone();
                for k in 0..k_n {
                    let (om, uk) = (omega[(k, n)], u[(k, n)]);
                    f.column_mut(k).scale_mut((om * uk.norm_sqr()).sqrt());
                    let col = a.column(k) * (uk * om);
                    a.set_column(k, &col);
                }
                let (basis, eig) = range_eig(&f);
                SubcarrierQcqp::from_basis(basis, eig, &a)
            })
            .collect();
        Ok(Self::from_parts(parts, k_n))
    }

    pub fn n_subcarriers(&self) -> usize {
        self.parts.len()
    }

    /// `Q_n`, materialised.
    pub fn q(&self, n: usize) -> CMat {
        let p = &self.parts[n];
        let mut scaled = p.basis.clone();
        for (i, l) in p.eig.iter().enumerate() {
            scaled.column_mut(i).scale_mut(*l);
        }
        scaled * p.basis.adjoint()
    }

    /// `A_n`, materialised.
    pub fn a(&self, n: usize) -> CMat {
        let p = &self.parts[n];
        &p.basis * &p.coeffs + &p.residual
    }

    /// Energy of the right-hand side outside the range of `Q` (the part that
    /// makes `mu = 0` unbounded).
    fn null_energy(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| {
                let mut e = frob_sq(&p.residual);
                for (i, l) in p.eig.iter().enumerate() {
                    if *l <= self.null_tol {
                        e += p.coeffs.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
                    }
                }
                e
            })
            .sum()
    }

    fn zero_multiplier_feasible(&self) -> bool {
        self.null_energy() <= 1e-20 * self.a_energy
    }

    /// `sum_n ||W_n(mu)||_F^2`. At `mu = 0` this is the minimum-norm
    /// (pseudo-inverse) solution, or infinity if the objective is unbounded.
    pub fn power(&self, mu: f64) -> f64 {
        if mu <= 0.0 && !self.zero_multiplier_feasible() {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for p in &self.parts {
            for (i, l) in p.eig.iter().enumerate() {
                let d = if mu > 0.0 {
                    l + mu
                } else if *l > self.null_tol {
                    *l
                } else {
                    continue;
                };
                total += p.coeffs.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / (d * d);
            }
            if mu > 0.0 {
                total += frob_sq(&p.residual) / (mu * mu);
            }
        }
        total
    }

    /// `W_n(mu) = (Q_n + mu I)^{-1} A_n`; pseudo-inverse at `mu = 0`.
    pub fn precoders_at(&self, mu: f64) -> DigitalPrecoders {
        let blocks = self
            .parts
            .iter()
            .map(|p| {
                let mut c = p.coeffs.clone();
                for (i, l) in p.eig.iter().enumerate() {
                    let s = if mu > 0.0 {
                        1.0 / (l + mu)
                    } else if *l > self.null_tol {
                        1.0 / l
                    } else {
                        0.0
                    };
                    c.row_mut(i).scale_mut(s);
                }
                let mut w = &p.basis * c;
                if mu > 0.0 {
                    w += &p.residual * C64::new(1.0 / mu, 0.0);
                }
                w
            })
            .collect();
        DigitalPrecoders::new(blocks).expect("consistent block shapes")
    }

    /// Solve for the smallest feasible multiplier by bisection.
    pub fn solve(&self, total_power: f64, tol: f64) -> Result<WSolution> {
        if !(total_power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "total power must be positive, got {total_power}"
            )));
        }
        if self.power(0.0) <= total_power {
            return Ok(WSolution {
                w: self.precoders_at(0.0),
                mu: 0.0,
                bisection_steps: 0,
            });
        }
        let mut hi = 1.0;
        let mut steps = 0;
        while self.power(hi) > total_power {
            hi *= 2.0;
            steps += 1;
            if !hi.is_finite() {
                return Err(Error::Numerical("multiplier bracket diverged".into()));
            }
        }
        let mut lo = 0.0;
        while steps < 400 {
            if self.power(hi) >= total_power * (1.0 - tol) || hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.power(mid) > total_power {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        Ok(WSolution {
            w: self.precoders_at(hi),
            mu: hi,
            bisection_steps: steps,
        })
    }

    /// `sum_n sum_k (w^H Q_n w - 2 Re a^H w)`.
    pub fn objective(&self, w: &DigitalPrecoders) -> f64 {
        self.parts
            .iter()
            .zip(w.blocks())
            .map(|(p, wn)| {
                let x = p.basis.adjoint() * wn;
                let quad: f64 = p
                    .eig
                    .iter()
                    .enumerate()
                    .map(|(i, l)| l * x.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum();
                let a = &p.basis * &p.coeffs + &p.residual;
                quad - 2.0 * crate::linalg::inner(&a, wn).re
            })
            .sum()
    }

    /// `max_{k,n} ||(Q_n + mu I) w - a|| / max_{k,n} ||a||`, the stationarity
    /// residual of the Lagrangian.
    pub fn stationarity_residual(&self, w: &DigitalPrecoders, mu: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (n, (p, wn)) in self.parts.iter().zip(w.blocks()).enumerate() {
            let a = self.a(n);
            let mut x = p.basis.adjoint() * wn;
            for (i, l) in p.eig.iter().enumerate() {
                x.row_mut(i).scale_mut(*l);
            }
            let r = &p.basis * x + wn * C64::new(mu, 0.0) - &a;
            for k in 0..self.n_users {
                worst = worst.max(r.column(k).norm());
                scale = scale.max(a.column(k).norm());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }
}

/// Solve the precoder subproblem at the given `(P, u, omega)`.
pub fn update_digital_precoders(
    channel: &FreqChannel,
    p: &CMat,
    u: &DMatrix<C64>,
    omega: &DMatrix<f64>,
    total_power: f64,
    tol: f64,
) -> Result<WSolution> {
    WSubproblem::from_state(channel, p, u, omega)?.solve(total_power, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cn_matrix;
    use crate::model::compute_mse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(seed: u64) -> (FreqChannel, CMat, DigitalPrecoders, NoiseGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch =
            FreqChannel::new((0..3).map(|_| cn_matrix(&mut rng, 5, 2, 1.0)).collect()).unwrap();
        let p =
            crate::optimizer::project_spectral_ball(&cn_matrix(&mut rng, 5, 3, 1.0)).into_inner();
        let w = DigitalPrecoders::new((0..3).map(|_| cn_matrix(&mut rng, 3, 2, 1.0)).collect())
            .unwrap();
        (ch, p, w, NoiseGrid::uniform(2, 3, 0.7))
    }

    #[test]
    fn equalizer_minimises_mse_over_a_grid() {
        let (ch, p, w, noise) = random_state(1);
        let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
        for n in 0..3 {
            for k in 0..2 {
                let h = ch.h(k, n);
                let best = compute_mse(u[(k, n)], &p, w.block(n), &h, k, 0.7).unwrap();
                let mut grid_best = f64::INFINITY;
                for i in -40..=40 {
                    for j in -40..=40 {
                        let z = u[(k, n)] + C64::new(i as f64, j as f64) * 0.005;
                        grid_best =
                            grid_best.min(compute_mse(z, &p, w.block(n), &h, k, 0.7).unwrap());
                    }
                }
                assert!(best <= grid_best + 1e-12);
            }
        }
    }

    #[test]
    fn weights_equal_one_plus_sinr() {
        let (ch, p, w, noise) = random_state(2);
        let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
        let om = update_weights(&ch, &p, &w, &u, &noise).unwrap();
        for n in 0..3 {
            for k in 0..2 {
                let r =
                    crate::model::compute_user_rate(&ch.h(k, n), &p, w.block(n), k, 0.7).unwrap();
                let sinr = 2f64.powf(r) - 1.0;
                assert!((om[(k, n)] - (1.0 + sinr)).abs() < 1e-10 * om[(k, n)]);
            }
        }
    }

    #[test]
    fn zero_gain_gives_zero_equalizer_and_unit_weight() {
        let ch = FreqChannel::new(vec![CMat::zeros(4, 2)]).unwrap();
        let p = CMat::identity(4, 2);
        let w = DigitalPrecoders::zeros(1, 2, 2);
        let noise = NoiseGrid::uniform(2, 1, 1.0);
        let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
        assert!(u.iter().all(|z| *z == C64::new(0.0, 0.0)));
        let om = update_weights(&ch, &p, &w, &u, &noise).unwrap();
        assert!(om.iter().all(|x| *x == 1.0));
        assert!(update_equalizers(&ch, &p, &w, &NoiseGrid::uniform(2, 1, 0.0)).is_err());
    }

    #[test]
    fn identity_quadratic_has_closed_form_multiplier() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<CMat> = (0..4).map(|_| cn_matrix(&mut rng, 3, 2, 1.0)).collect();
        let q: Vec<CMat> = (0..4).map(|_| CMat::identity(3, 3)).collect();
        let sub = WSubproblem::from_explicit(&q, &a).unwrap();
        let energy: f64 = a.iter().map(frob_sq).sum();
        let pt = 0.1 * energy;
        let sol = sub.solve(pt, 1e-12).unwrap();
        let mu_ref = (energy / pt).sqrt() - 1.0;
        assert!((sol.mu - mu_ref).abs() < 1e-8 * mu_ref);
        assert!(sol.w.power() <= pt * (1.0 + 1e-12));
        // loose budget: unconstrained optimum W = A
        let sol = sub.solve(10.0 * energy, 1e-12).unwrap();
        assert_eq!(sol.mu, 0.0);
        for (wn, an) in sol.w.blocks().iter().zip(&a) {
            assert!((wn - an).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_precoder() {
        let q = vec![CMat::zeros(2, 2)];
        let a = vec![CMat::zeros(2, 2)];
        let sol = WSubproblem::from_explicit(&q, &a)
            .unwrap()
            .solve(1.0, 1e-8)
            .unwrap();
        assert_eq!(sol.w.power(), 0.0);
        assert_eq!(sol.mu, 0.0);
    }

    #[test]
    fn rank_deficient_quadratic_activates_budget() {
        // Q = 0 with nonzero a: objective unbounded at mu = 0, solution a / mu
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = vec![cn_matrix(&mut rng, 3, 2, 1.0)];
        let sub = WSubproblem::from_explicit(&[CMat::zeros(3, 3)], &a).unwrap();
        assert!(sub.power(0.0).is_infinite());
        let sol = sub.solve(2.0, 1e-12).unwrap();
        assert!((sol.w.power() - 2.0).abs() < 1e-10);
        let dir = &a[0] * C64::new((2.0 / frob_sq(&a[0])).sqrt(), 0.0);
        assert!((sol.w.block(0) - dir).norm() < 1e-6);
    }

    #[test]
    fn state_and_explicit_forms_agree() {
        let (ch, p, w, noise) = random_state(5);
        let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
        let om = update_weights(&ch, &p, &w, &u, &noise).unwrap();
        let sub = WSubproblem::from_state(&ch, &p, &u, &om).unwrap();
        let mut q = Vec::new();
        let mut a = Vec::new();
        for n in 0..3 {
            let mut qn = CMat::zeros(3, 3);
            let mut an = CMat::zeros(3, 2);
            for k in 0..2 {
                let g = p.adjoint() * ch.h(k, n);
                qn += &g * g.adjoint() * C64::new(om[(k, n)] * u[(k, n)].norm_sqr(), 0.0);
                an.set_column(k, &(g * (u[(k, n)] * om[(k, n)])));
            }
            assert!((sub.q(n) - &qn).norm() < 1e-10 * qn.norm());
            assert!((sub.a(n) - &an).norm() < 1e-10 * an.norm());
            q.push(qn);
            a.push(an);
        }
        let s1 = sub.solve(2.0, 1e-12).unwrap();
        let s2 = WSubproblem::from_explicit(&q, &a)
            .unwrap()
            .solve(2.0, 1e-12)
            .unwrap();
        for (x, y) in s1.w.blocks().iter().zip(s2.w.blocks()) {
            assert!((x - y).norm() < 1e-6 * x.norm().max(1e-12));
        }
    }
}
