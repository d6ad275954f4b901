//! Projected gradient descent for the analog-matrix block.
//!
//! The subproblem is
//!
//! ```text
//! minimise  f(P) = sum_n Tr(P^H M_n P C_n) - 2 Re Tr(D_n P)   s.t. ||P||_2 <= 1
//! ```
//!
//! with `M_n = sum_k omega |u|^2 h h^H`, `C_n = W_n W_n^H` and
//! `D_n = sum_k omega u^* w_k h^H`. Both `M_n` and `C_n` are kept in factored
//! form, `M_n = F_n F_n^H` and `C_n = W_n W_n^H`, and all subcarriers are
//! stacked so one iterate costs two dense products.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::linalg::{inner, spectral_norm, CMat, C64};
use crate::model::{hconcat, DigitalPrecoders, MiLACMatrix};

/// Maximum number of step halvings in the phase-shifter acceptance rule.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone)]
pub struct PgdWorkspace {
    /// `[F_1, ..., F_N]`, `N_T x sum_n r_n`, with `M_n = F_n F_n^H`.
    f_all: CMat,
    /// Column offsets of each `F_n` inside `f_all`.
    f_offsets: Vec<usize>,
    /// `W_n` factors with `C_n = W_n W_n^H`.
    w: Vec<CMat>,
    /// `sum_n D_n^H`, `N_T x N_RF`.
    d_adj_sum: CMat,
    m_norms: Vec<f64>,
    w_norms_sq: Vec<f64>,
}

fn psd_factor(a: &CMat) -> CMat {
    let eig = SymmetricEigen::new(crate::linalg::hermitian_part(a));
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 0.0)
        .collect();
    let mut f = CMat::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        f.set_column(c, &(eig.eigenvectors.column(i) * C64::new(s, 0.0)));
    }
    f
}

impl PgdWorkspace {
    fn from_factors(f: Vec<CMat>, w: Vec<CMat>, d_adj_sum: CMat) -> Result<Self> {
        if f.len() != w.len() {
            return Err(Error::dims("PgdWorkspace", f.len(), w.len()));
        }
        let n_tx = d_adj_sum.nrows();
        let n_rf = d_adj_sum.ncols();
        for (fi, wi) in f.iter().zip(&w) {
            if fi.nrows() != n_tx || wi.nrows() != n_rf {
                return Err(Error::dims(
                    "PgdWorkspace factors",
                    format!("{n_tx} / {n_rf} rows"),
                    format!("{} / {} rows", fi.nrows(), wi.nrows()),
                ));
            }
        }
        let mut f_offsets = Vec::with_capacity(f.len() + 1);
        let mut off = 0;
        for fi in &f {
            f_offsets.push(off);
            off += fi.ncols();
        }
        f_offsets.push(off);
        let m_norms = f.iter().map(|fi| spectral_norm(fi).powi(2)).collect();
        let w_norms_sq = w.iter().map(|wi| spectral_norm(wi).powi(2)).collect();
        let f_all = if f.is_empty() {
            CMat::zeros(n_tx, 0)
        } else {
            hconcat(&f)
        };
        Ok(PgdWorkspace {
            f_all,
            f_offsets,
            w,
            d_adj_sum,
            m_norms,
            w_norms_sq,
        })
    }

    /// Build from explicit `M_n`, `C_n` (Hermitian PSD) and `D_n`.
    pub fn from_explicit(m: &[CMat], c: &[CMat], d: &[CMat]) -> Result<Self> {
        if m.len() != c.len() || m.len() != d.len() || m.is_empty() {
            return Err(Error::dims(
                "PgdWorkspace::from_explicit",
                m.len(),
                format!("{} / {}", c.len(), d.len()),
            ));
        }
        let mut d_adj_sum = CMat::zeros(d[0].ncols(), d[0].nrows());
        for dn in d {
            d_adj_sum += dn.adjoint();
        }
        Self::from_factors(
            m.iter().map(psd_factor).collect(),
            c.iter().map(psd_factor).collect(),
            d_adj_sum,
        )
    }

    /// Build from the current BCD state.
    pub fn from_state(
        channel: &FreqChannel,
        w: &DigitalPrecoders,
        u: &DMatrix<C64>,
        omega: &DMatrix<f64>,
    ) -> Result<Self> {
        let n_sc = channel.n_subcarriers();
        let k_n = channel.n_users();
        if w.n_subcarriers() != n_sc || u.shape() != (k_n, n_sc) || omega.shape() != (k_n, n_sc) {
            return Err(Error::dims(
                "PgdWorkspace::from_state",
                format!("K={k_n}, N={n_sc}"),
                format!(
                    "W over {} subcarriers, u {:?}",
                    w.n_subcarriers(),
                    u.shape()
                ),
            ));
        }
        let n_rf = w.n_rf();
        let mut d_adj_sum = CMat::zeros(channel.n_tx(), n_rf);
        let mut f = Vec::with_capacity(n_sc);
        for n in 0..n_sc {
            let h = channel.subcarrier(n);
            let mut fn_ = h.clone();
            let mut hd = h.clone();
            for k in 0..k_n {
                let om = omega[(k, n)];
                let uk = u[(k, n)];
                fn_.column_mut(k).scale_mut((om * uk.norm_sqr()).sqrt());
                hd.column_mut(k).scale_mut(1.0);
                let col = hd.column(k) * (uk * om);
                hd.set_column(k, &col);
            }
            d_adj_sum += hd * w.block(n).adjoint();
            f.push(fn_);
        }
        Self::from_factors(f, w.blocks().to_vec(), d_adj_sum)
    }

    pub fn n_subcarriers(&self) -> usize {
        self.w.len()
    }

    pub fn n_tx(&self) -> usize {
        self.d_adj_sum.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.d_adj_sum.ncols()
    }

    fn f(&self, n: usize) -> nalgebra::DMatrixView<'_, C64> {
        let lo = self.f_offsets[n];
        self.f_all.columns(lo, self.f_offsets[n + 1] - lo)
    }

    /// `M_n`, materialised.
    pub fn m(&self, n: usize) -> CMat {
        let f = self.f(n);
        &f * f.adjoint()
    }

    /// `C_n`, materialised.
    pub fn c(&self, n: usize) -> CMat {
        &self.w[n] * self.w[n].adjoint()
    }

    pub fn d_adjoint_sum(&self) -> &CMat {
        &self.d_adj_sum
    }

    pub fn m_norms(&self) -> &[f64] {
        &self.m_norms
    }

    fn check_p(&self, p: &CMat) -> Result<()> {
        if p.shape() != self.d_adj_sum.shape() {
            return Err(Error::dims(
                "PGD iterate",
                format!("{:?}", self.d_adj_sum.shape()),
                format!("{:?}", p.shape()),
            ));
        }
        Ok(())
    }

    /// Evaluate `f(P)` and, optionally, `Grad(P)` sharing the `F^H P` product.
    fn eval(&self, p: &CMat, want_grad: bool) -> (f64, Option<CMat>) {
        let a = self.f_all.adjoint() * p;
        let mut quad = 0.0;
        let mut b = if want_grad {
            Some(CMat::zeros(a.nrows(), a.ncols()))
        } else {
            None
        };
        for (n, wn) in self.w.iter().enumerate() {
            let lo = self.f_offsets[n];
            let r = self.f_offsets[n + 1] - lo;
            if r == 0 {
                continue;
            }
            let t = a.rows(lo, r) * wn;
            quad += t.norm_squared();
            if let Some(b) = b.as_mut() {
                b.rows_mut(lo, r).copy_from(&(t * wn.adjoint()));
            }
        }
        let value = quad - 2.0 * inner(&self.d_adj_sum, p).re;
        let grad = b.map(|b| (&self.f_all * b - &self.d_adj_sum) * C64::new(2.0, 0.0));
        (value, grad)
    }

    /// `f(P) = sum_n Tr(P^H M_n P C_n) - 2 Re Tr(D_n P)`.
    pub fn objective(&self, p: &CMat) -> Result<f64> {
        self.check_p(p)?;
        Ok(self.eval(p, false).0)
    }
}

/// `Grad(P) = 2 sum_n (M_n P C_n - D_n^H)`, the conjugate-coordinate gradient
/// `2 df/dP̄`: `f(P + t Δ) = f(P) + t Re<Grad, Δ> + O(t^2)`.
pub fn pgd_gradient(p: &CMat, ws: &PgdWorkspace) -> Result<CMat> {
    ws.check_p(p)?;
    Ok(ws.eval(p, true).1.expect("gradient requested"))
}

/// Step `1 / (2 sum_n ||M_n||_2 ||W_n||_2^2)`; `None` when the quadratic term
/// vanishes and the gradient is constant.
pub fn lipschitz_step(ws: &PgdWorkspace) -> Option<f64> {
    let l: f64 = 2.0
        * ws.m_norms
            .iter()
            .zip(&ws.w_norms_sq)
            .map(|(m, w)| m * w)
            .sum::<f64>();
    if l > 0.0 && l.is_finite() {
        Some(1.0 / l)
    } else {
        None
    }
}

/// Euclidean projection onto `{P : ||P||_2 <= 1}` by clipping singular values
/// at one.
pub fn project_spectral_ball(x: &CMat) -> MiLACMatrix {
    MiLACMatrix::new_unchecked(clip_singular_values(x))
}

fn clip_singular_values(x: &CMat) -> CMat {
    if x.ncols() > x.nrows() {
        return clip_singular_values(&x.adjoint()).adjoint();
    }
    // X = U S V^H  =>  U min(S, 1) V^H = X V diag(min(1, 1/s)) V^H
    let gram = crate::linalg::hermitian_part(&(x.adjoint() * x));
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().all(|&l| l <= 1.0) {
        return x.clone();
    }
    let v = &eig.eigenvectors;
    let mut vs = v.clone();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 1.0 {
            vs.column_mut(i).scale_mut(1.0 / l.sqrt());
        }
    }
    x * (vs * v.adjoint())
}

/// Entrywise projection onto matrices whose entries all have modulus
/// `1/sqrt(N_T)` (fully-connected phase-shifter network). Zero entries map to
/// phase 0.
pub fn project_phase_shifter(x: &CMat) -> CMat {
    let m = 1.0 / (x.nrows() as f64).sqrt();
    x.map(|z| {
        if z.norm() > 0.0 {
            C64::from_polar(m, z.arg())
        } else {
            C64::new(m, 0.0)
        }
    })
}

/// Constraint set for the analog matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalogConstraint {
    /// `||P||_2 <= 1` (lossless reciprocal MiLAC).
    SpectralBall,
    /// Constant-modulus entries (phase shifters), handled with a monotone
    /// acceptance rule since the set is not convex.
    PhaseShifter,
}

#[derive(Debug, Clone, Copy)]
pub struct PgdSettings {
    pub max_iters: usize,
    pub tol: f64,
}

/// Projected gradient descent on the analog block, warm-started at `p0`.
///
/// Stops when the relative objective decrease falls below `tol` or after
/// `max_iters` iterations. Returns the final iterate and the number of
/// iterations run.
pub fn update_analog_matrix(
    p0: &CMat,
    ws: &PgdWorkspace,
    constraint: AnalogConstraint,
    settings: PgdSettings,
) -> Result<(CMat, usize)> {
    ws.check_p(p0)?;
    let Some(eta) = lipschitz_step(ws) else {
        return Ok((p0.clone(), 0));
    };
    let project = |x: &CMat| match constraint {
        AnalogConstraint::SpectralBall => clip_singular_values(x),
        AnalogConstraint::PhaseShifter => project_phase_shifter(x),
    };
    let mut p = p0.clone();
    let (mut f, g) = ws.eval(&p, true);
    let mut g = g.expect("gradient");
    let mut iters = 0;
    while iters < settings.max_iters {
        iters += 1;
        let mut step = eta;
        let mut accepted = None;
        for attempt in 0..=MAX_HALVINGS {
            let cand = project(&(&p - &g * C64::new(step, 0.0)));
            let (fc, gc) = ws.eval(&cand, true);
            // the spectral-ball step is a guaranteed descent at eta = 1/L;
            // only reject it if round-off made it worse
            if fc <= f || (constraint == AnalogConstraint::SpectralBall && attempt == MAX_HALVINGS)
            {
                accepted = Some((cand, fc, gc.expect("gradient")));
                break;
            }
            if constraint == AnalogConstraint::SpectralBall && fc <= f + 1e-12 * f.abs().max(1e-300)
            {
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        if fc > f {
            break;
        }
        let decrease = f - fc;
        p = cand;
        g = gc;
        let prev = f;
        f = fc;
        if decrease <= settings.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((p, iters))
}

/// PGD on the spectral-norm ball from a feasible `p0`.
pub fn update_milac_matrix(
    p0: &MiLACMatrix,
    ws: &PgdWorkspace,
    settings: PgdSettings,
) -> Result<(MiLACMatrix, usize)> {
    let (p, it) = update_analog_matrix(p0, ws, AnalogConstraint::SpectralBall, settings)?;
    Ok((MiLACMatrix::new_unchecked(p), it))
}
