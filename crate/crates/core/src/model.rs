//! Domain types and rate / MSE evaluation for the hybrid digital-MiLAC
//! downlink.
//!
//! Throughout the crate the analog stage is carried in its scaled form
//! `P = 2 P^M`, so that the feasible set of a lossless reciprocal MiLAC is the
//! spectral-norm unit ball and the noise enters as `sigma_tilde^2 = 4 sigma^2`.

use std::f64::consts::LN_2;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::linalg::{frob_sq, spectral_norm, CMat, CVec, C64, ONE};

/// Feasibility slack for `||P||_2 <= 1`.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Relative feasibility slack for the digital power budget.
pub const POWER_TOL: f64 = 1e-10;

/// System dimensions, power budget, noise and channel statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_subcarriers: usize,
    pub n_tx: usize,
    pub n_users: usize,
    pub n_rf: usize,
    /// Total digital power `P_T`, linear scale.
    pub total_power: f64,
    /// Common noise variance `sigma^2`, used where `noise_vars` is absent.
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    /// Optional per-(user, subcarrier) noise variances, `n_users` rows of
    /// `n_subcarriers` values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_vars: Option<Vec<Vec<f64>>>,
    pub n_taps: usize,
    pub pdp_decay: f64,
    /// Bandwidth in Hz. Metadata only.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// Cyclic prefix length in samples. Metadata only.
    #[serde(default = "default_cp")]
    pub cp_len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    1.0
}
fn default_bandwidth() -> f64 {
    300e6
}
fn default_cp() -> usize {
    15
}

impl SystemConfig {
    /// Full-size setup: N = 64 subcarriers, 64 antennas, 4 users, 16 taps.
    pub fn full_size() -> Self {
        let mut cfg = SystemConfig {
            n_subcarriers: 64,
            n_tx: 64,
            n_users: 4,
            n_rf: 4,
            total_power: 1.0,
            noise_var: 1.0,
            noise_vars: None,
            n_taps: 16,
            pdp_decay: 0.8,
            bandwidth_hz: 300e6,
            cp_len: 15,
            seed: 0,
        };
        cfg.set_snr_db(10.0);
        cfg
    }

    /// Reduced preset for CI: N = 16, N_T = 16, K = 2.
    pub fn small() -> Self {
        let mut cfg = SystemConfig {
            n_subcarriers: 16,
            n_tx: 16,
            n_users: 2,
            n_rf: 2,
            n_taps: 8,
            ..Self::full_size()
        };
        cfg.set_snr_db(10.0);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_subcarriers == 0 || self.n_tx == 0 || self.n_users == 0 || self.n_rf == 0 {
            return bad("all dimensions must be positive".into());
        }
        if self.n_rf > self.n_tx {
            return bad(format!("n_rf ({}) exceeds n_tx ({})", self.n_rf, self.n_tx));
        }
        if self.n_taps == 0 || self.n_taps > self.n_subcarriers {
            return bad(format!(
                "n_taps ({}) must lie in 1..=n_subcarriers ({})",
                self.n_taps, self.n_subcarriers
            ));
        }
        if !(self.total_power > 0.0) || !self.total_power.is_finite() {
            return bad(format!(
                "total_power must be positive, got {}",
                self.total_power
            ));
        }
        if !(self.pdp_decay > 0.0) {
            return bad(format!(
                "pdp_decay must be positive, got {}",
                self.pdp_decay
            ));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::NonPositiveNoise(self.noise_var));
        }
        if let Some(rows) = &self.noise_vars {
            if rows.len() != self.n_users || rows.iter().any(|r| r.len() != self.n_subcarriers) {
                return bad("noise_vars must be n_users rows of n_subcarriers values".into());
            }
            if let Some(v) = rows.iter().flatten().find(|v| !(**v > 0.0)) {
                return Err(Error::NonPositiveNoise(*v));
            }
        }
        Ok(())
    }

    /// SNR in dB, `P_T / N` at unit noise.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.n_subcarriers as f64).log10()
    }

    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.total_power = self.n_subcarriers as f64 * 10f64.powf(snr_db / 10.0);
    }

    pub fn noise_var_at(&self, k: usize, n: usize) -> f64 {
        match &self.noise_vars {
            Some(rows) => rows[k][n],
            None => self.noise_var,
        }
    }

    /// Physical noise variances `sigma^2_{k,n}`.
    pub fn noise_grid(&self) -> NoiseGrid {
        NoiseGrid(DMatrix::from_fn(
            self.n_users,
            self.n_subcarriers,
            |k, n| self.noise_var_at(k, n),
        ))
    }

    /// Scaled noise variances `sigma_tilde^2 = 4 sigma^2` entering the
    /// optimisation problem.
    pub fn scaled_noise_grid(&self) -> NoiseGrid {
        self.noise_grid().scaled_for_milac()
    }
}

/// Per-(user, subcarrier) noise variances, `K x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid(pub DMatrix<f64>);

impl NoiseGrid {
    pub fn uniform(n_users: usize, n_subcarriers: usize, var: f64) -> Self {
        NoiseGrid(DMatrix::from_element(n_users, n_subcarriers, var))
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.0[(k, n)]
    }

    pub fn scaled_for_milac(&self) -> Self {
        NoiseGrid(&self.0 * 4.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// Scaled analog beamforming matrix `P = 2 P^M`, `N_T x N_RF`, with
/// `||P||_2 <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiLACMatrix(CMat);

impl MiLACMatrix {
    pub fn new(p: CMat) -> Result<Self> {
        let s = spectral_norm(&p);
        if s > 1.0 + SPECTRAL_TOL {
            return Err(Error::Numerical(format!(
                "MiLAC matrix has spectral norm {s} > 1"
            )));
        }
        Ok(MiLACMatrix(p))
    }

    /// Wrap without checking; callers guarantee membership.
    pub(crate) fn new_unchecked(p: CMat) -> Self {
        MiLACMatrix(p)
    }

    /// Build from the physical baseband response `P^M`.
    pub fn from_physical(pm: &CMat) -> Result<Self> {
        Self::new(pm * C64::new(2.0, 0.0))
    }

    pub fn identity(n: usize) -> Self {
        MiLACMatrix(CMat::identity(n, n))
    }

    /// Physical response `P^M = P / 2`.
    pub fn physical(&self) -> CMat {
        &self.0 * C64::new(0.5, 0.0)
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn n_tx(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.0.ncols()
    }
}

impl Deref for MiLACMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl AsRef<CMat> for MiLACMatrix {
    fn as_ref(&self) -> &CMat {
        &self.0
    }
}

/// Per-subcarrier digital precoders `W_n`, each `N_RF x K`, sharing one
/// power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoders {
    blocks: Vec<CMat>,
}

impl DigitalPrecoders {
    pub fn new(blocks: Vec<CMat>) -> Result<Self> {
        if let Some(first) = blocks.first() {
            let shape = first.shape();
            if let Some(b) = blocks.iter().find(|b| b.shape() != shape) {
                return Err(Error::dims(
                    "DigitalPrecoders",
                    format!("{shape:?}"),
                    format!("{:?}", b.shape()),
                ));
            }
        }
        Ok(DigitalPrecoders { blocks })
    }

    pub fn zeros(n_subcarriers: usize, n_rf: usize, n_users: usize) -> Self {
        DigitalPrecoders {
            blocks: vec![CMat::zeros(n_rf, n_users); n_subcarriers],
        }
    }

    /// `W_n = c I_K` on every subcarrier.
    pub fn scaled_identity(n_subcarriers: usize, n_users: usize, c: f64) -> Self {
        DigitalPrecoders {
            blocks: vec![CMat::identity(n_users, n_users) * C64::new(c, 0.0); n_subcarriers],
        }
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    pub fn block(&self, n: usize) -> &CMat {
        &self.blocks[n]
    }

    pub fn n_subcarriers(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_rf(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    pub fn n_users(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    /// `sum_n ||W_n||_F^2`.
    pub fn power(&self) -> f64 {
        self.blocks.iter().map(frob_sq).sum()
    }

    pub fn within_budget(&self, total_power: f64) -> bool {
        self.power() <= total_power * (1.0 + POWER_TOL)
    }

    /// Horizontal concatenation `[W_1, ..., W_N]`.
    pub fn aggregate(&self) -> CMat {
        hconcat(&self.blocks)
    }

    pub fn scale(&mut self, c: f64) {
        for b in self.blocks.iter_mut() {
            *b *= C64::new(c, 0.0);
        }
    }
}

pub(crate) fn hconcat(blocks: &[CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.columns_mut(c0, b.ncols()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Receive equalizers `u_{k,n}` and MSE weights `omega_{k,n}`, both `K x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVars {
    pub u: DMatrix<C64>,
    pub omega: DMatrix<f64>,
}

/// Per-iteration record of a block-coordinate-descent run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerTrace {
    /// WMMSE objective at the end of each outer iteration.
    pub objective_per_iter: Vec<f64>,
    /// WMMSE objective right after the equalizer/weight update of each
    /// iteration. At that point it equals `K/ln 2` minus the average
    /// sum-rate of the previous iterate.
    pub objective_after_uw: Vec<f64>,
    /// Average sum-rate (bits/s/Hz) at the end of each outer iteration.
    pub sumrate_per_iter: Vec<f64>,
    /// Average sum-rate of the initial point.
    pub initial_sumrate: f64,
    pub inner_pgd_iters: Vec<usize>,
    pub wall_time: f64,
    pub converged: bool,
}

impl OptimizerTrace {
    pub fn iterations(&self) -> usize {
        self.objective_per_iter.len()
    }

    pub fn final_sumrate(&self) -> f64 {
        self.sumrate_per_iter
            .last()
            .copied()
            .unwrap_or(self.initial_sumrate)
    }

    /// Largest relative increase between consecutive recorded objective
    /// values, interleaving the post-(u, omega) and end-of-iteration values.
    pub fn max_relative_increase(&self) -> f64 {
        let mut seq = Vec::with_capacity(2 * self.objective_per_iter.len());
        for (i, end) in self.objective_per_iter.iter().enumerate() {
            if let Some(uw) = self.objective_after_uw.get(i) {
                seq.push(*uw);
            }
            seq.push(*end);
        }
        seq.windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.max_relative_increase() <= slack
    }
}

/// Effective gains `[H_n^H P W_n]_{k,j} = h_{k,n}^H P w_{j,n}`.
pub fn effective_gains(h_n: &CMat, p: &CMat, w_n: &CMat) -> Result<CMat> {
    if h_n.nrows() != p.nrows() {
        return Err(Error::dims("effective_gains (N_T)", p.nrows(), h_n.nrows()));
    }
    if p.ncols() != w_n.nrows() {
        return Err(Error::dims(
            "effective_gains (N_RF)",
            p.ncols(),
            w_n.nrows(),
        ));
    }
    Ok((p.adjoint() * h_n).adjoint() * w_n)
}

/// SINR of user `k` from its row of effective gains.
pub(crate) fn sinr_from_gains(gains_row: impl Iterator<Item = C64>, k: usize, noise: f64) -> f64 {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, g) in gains_row.enumerate() {
        if j == k {
            signal = g.norm_sqr();
        } else {
            interference += g.norm_sqr();
        }
    }
    signal / (interference + noise)
}

fn check_noise(noise: f64) -> Result<()> {
    if noise > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveNoise(noise))
    }
}

/// Achievable rate of user `k` in bits/s/Hz,
/// `log2(1 + |h^H P w_k|^2 / (sum_{j != k} |h^H P w_j|^2 + sigma_tilde^2))`.
pub fn compute_user_rate(
    h: &CVec,
    p: &CMat,
    w_n: &CMat,
    k: usize,
    sigma_tilde_sq: f64,
) -> Result<f64> {
    check_noise(sigma_tilde_sq)?;
    if k >= w_n.ncols() {
        return Err(Error::dims(
            "compute_user_rate (user index)",
            w_n.ncols(),
            k,
        ));
    }
    let hm = CMat::from_column_slice(h.len(), 1, h.as_slice());
    let g = effective_gains(&hm, p, w_n)?;
    let sinr = sinr_from_gains(g.row(0).iter().cloned(), k, sigma_tilde_sq);
    Ok((1.0 + sinr).log2())
}

/// `(1/N) sum_n sum_k R_{k,n}`.
pub fn compute_avg_sum_rate(
    channel: &FreqChannel,
    p: &CMat,
    w: &DigitalPrecoders,
    noise: &NoiseGrid,
) -> Result<f64> {
    let n_sc = channel.n_subcarriers();
    let k_users = channel.n_users();
    if w.n_subcarriers() != n_sc {
        return Err(Error::dims(
            "compute_avg_sum_rate (N)",
            n_sc,
            w.n_subcarriers(),
        ));
    }
    if w.n_users() != k_users {
        return Err(Error::dims(
            "compute_avg_sum_rate (K)",
            k_users,
            w.n_users(),
        ));
    }
    if noise.dims() != (k_users, n_sc) {
        return Err(Error::dims(
            "compute_avg_sum_rate (noise grid)",
            format!("{:?}", (k_users, n_sc)),
            format!("{:?}", noise.dims()),
        ));
    }
    let mut total = 0.0;
    for n in 0..n_sc {
        let g = effective_gains(channel.subcarrier(n), p, w.block(n))?;
        for k in 0..k_users {
            let s2 = noise.get(k, n);
            check_noise(s2)?;
            total += (1.0 + sinr_from_gains(g.row(k).iter().cloned(), k, s2)).log2();
        }
    }
    Ok(total / n_sc as f64)
}

/// MSE of user `k` under equalizer `u`:
/// `|1 - u* h^H P w_k|^2 + |u|^2 (sum_{j != k} |h^H P w_j|^2 + sigma_tilde^2)`.
pub fn compute_mse(
    u: C64,
    p: &CMat,
    w_n: &CMat,
    h: &CVec,
    k: usize,
    sigma_tilde_sq: f64,
) -> Result<f64> {
    check_noise(sigma_tilde_sq)?;
    if k >= w_n.ncols() {
        return Err(Error::dims("compute_mse (user index)", w_n.ncols(), k));
    }
    let hm = CMat::from_column_slice(h.len(), 1, h.as_slice());
    let g = effective_gains(&hm, p, w_n)?;
    Ok(mse_from_gains(
        u,
        g.row(0).iter().cloned(),
        k,
        sigma_tilde_sq,
    ))
}

pub(crate) fn mse_from_gains(
    u: C64,
    gains_row: impl Iterator<Item = C64>,
    k: usize,
    noise: f64,
) -> f64 {
    let mut direct = ONE;
    let mut interference = 0.0;
    for (j, g) in gains_row.enumerate() {
        if j == k {
            direct = ONE - u.conj() * g;
        } else {
            interference += g.norm_sqr();
        }
    }
    direct.norm_sqr() + u.norm_sqr() * (interference + noise)
}

/// WMMSE objective `(1/N) sum_{n,k} (omega E / ln 2 - log2 omega)`, with `omega`
/// and `E` both `K x N`.
pub fn wmmse_objective(omega: &DMatrix<f64>, mse: &DMatrix<f64>) -> Result<f64> {
    if omega.shape() != mse.shape() {
        return Err(Error::dims(
            "wmmse_objective",
            format!("{:?}", omega.shape()),
            format!("{:?}", mse.shape()),
        ));
    }
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::NonPositiveWeight(*w));
    }
    let n = omega.ncols().max(1) as f64;
    let s: f64 = omega
        .iter()
        .zip(mse.iter())
        .map(|(w, e)| w * e / LN_2 - w.log2())
        .sum();
    Ok(s / n)
}

/// Normalised DFT matrix, `[F]_{i,j} = e^{-j 2 pi i j / N} / sqrt(N)`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |i, j| {
        let ang = -2.0 * std::f64::consts::PI * ((i * j) % n) as f64 / n as f64;
        C64::from_polar(scale, ang)
    })
}

/// Block-diagonal matrix from equally sized blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cn_matrix, kron};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[C64]) -> CVec {
        CVec::from_column_slice(v)
    }

    #[test]
    fn zero_precoder_gives_zero_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = CVec::from_iterator(4, (0..4).map(|_| crate::linalg::cn_sample(&mut rng, 1.0)));
        let p = cn_matrix(&mut rng, 4, 2, 0.1);
        let w = CMat::zeros(2, 3);
        for k in 0..3 {
            assert_eq!(compute_user_rate(&h, &p, &w, k, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_user_sinr_four() {
        // h^H P w = 2 with sigma_tilde^2 = 1
        let h = col(&[ONE]);
        let p = CMat::identity(1, 1);
        let w = CMat::from_element(1, 1, C64::new(2.0, 0.0));
        let r = compute_user_rate(&h, &p, &w, 0, 1.0).unwrap();
        assert!((r - 5f64.log2()).abs() < 1e-12);
        assert!((r - 2.3219).abs() < 1e-4);
    }

    #[test]
    fn rate_rejects_bad_input() {
        let h = col(&[ONE, ONE]);
        let p = CMat::identity(2, 2);
        let w = CMat::identity(2, 2);
        assert!(matches!(
            compute_user_rate(&h, &p, &w, 0, 0.0),
            Err(Error::NonPositiveNoise(_))
        ));
        let p3 = CMat::identity(3, 3);
        assert!(matches!(
            compute_user_rate(&h, &p3, &w, 0, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rate_matches_physical_model() {
        // Evaluate R with T = P W / 2 and sigma^2 directly, by explicit
        // second-order statistics of r = h^H T s + z.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let h = CVec::from_iterator(6, (0..6).map(|_| crate::linalg::cn_sample(&mut rng, 1.0)));
            let p = cn_matrix(&mut rng, 6, 3, 0.2);
            let w = cn_matrix(&mut rng, 3, 2, 1.0);
            let sigma2 = 0.3;
            let t = (&p * &w) * C64::new(0.5, 0.0);
            for k in 0..2 {
                let mut sig = 0.0;
                let mut intf = 0.0;
                for j in 0..2 {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..6 {
                        acc += h[i].conj() * t[(i, j)];
                    }
                    if j == k {
                        sig += acc.norm_sqr();
                    } else {
                        intf += acc.norm_sqr();
                    }
                }
                let expect = (1.0 + sig / (intf + sigma2)).log2();
                let got = compute_user_rate(&h, &p, &w, k, 4.0 * sigma2).unwrap();
                assert!((got - expect).abs() <= 1e-12 * expect.max(1e-300));
            }
        }
    }

    #[test]
    fn mse_examples() {
        let h = col(&[ONE]);
        let p = CMat::identity(1, 1);
        let w = CMat::from_element(1, 1, ONE);
        assert_eq!(
            compute_mse(C64::new(0.0, 0.0), &p, &w, &h, 0, 1.0).unwrap(),
            1.0
        );
        let e = compute_mse(C64::new(0.5, 0.0), &p, &w, &h, 0, 1.0).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_monte_carlo_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nt = 4;
        let h = CVec::from_iterator(nt, (0..nt).map(|_| crate::linalg::cn_sample(&mut rng, 1.0)));
        let p = cn_matrix(&mut rng, nt, 2, 0.25);
        let w = cn_matrix(&mut rng, 2, 3, 1.0);
        let s2 = 0.7;
        let u = C64::new(0.3, -0.2);
        let k = 1;
        let exact = compute_mse(u, &p, &w, &h, k, s2).unwrap();
        let g = (p.adjoint() * CMat::from_column_slice(nt, 1, h.as_slice())).adjoint() * &w;
        let trials = 100_000;
        let mut samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let s: Vec<C64> = (0..3)
                .map(|_| crate::linalg::cn_sample(&mut rng, 1.0))
                .collect();
            let z = crate::linalg::cn_sample(&mut rng, s2);
            let r: C64 = (0..3).map(|j| g[(0, j)] * s[j]).sum::<C64>() + z;
            samples.push((u.conj() * r - s[k]).norm_sqr());
        }
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mc {mean} exact {exact} se {se}"
        );
    }

    #[test]
    fn objective_examples() {
        let ones = DMatrix::from_element(3, 5, 1.0);
        let v = wmmse_objective(&ones, &ones).unwrap();
        assert!((v - 3.0 / LN_2).abs() < 1e-12);
        let w = DMatrix::from_element(1, 1, 2.0);
        let e = DMatrix::from_element(1, 1, 0.5);
        let v = wmmse_objective(&w, &e).unwrap();
        assert!((v - (1.0 / LN_2 - 1.0)).abs() < 1e-12);
        assert!((v - 0.4427).abs() < 1e-4);
        let bad = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            wmmse_objective(&bad, &e),
            Err(Error::NonPositiveWeight(_))
        ));
    }

    #[test]
    fn milac_commutes_with_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2usize, 4, 8] {
            let (nt, nrf) = (5, 3);
            let pm = cn_matrix(&mut rng, nt, nrf, 1.0);
            let x = cn_matrix(&mut rng, n * nrf, 1, 1.0);
            let f = dft_matrix(n);
            let lhs = kron(&f, &CMat::identity(nt, nt))
                * kron(&CMat::identity(n, n), &pm)
                * kron(&f.adjoint(), &CMat::identity(nrf, nrf))
                * &x;
            let rhs = kron(&CMat::identity(n, n), &pm) * &x;
            assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
        }
    }

    #[test]
    fn dft_is_unitary() {
        let f = dft_matrix(8);
        assert!((f.adjoint() * &f - CMat::identity(8, 8)).norm() < 1e-12);
    }

    #[test]
    fn config_presets_validate() {
        let cfg = SystemConfig::full_size();
        cfg.validate().unwrap();
        assert!((cfg.snr_db() - 10.0).abs() < 1e-12);
        assert_eq!(cfg.total_power, 640.0);
        SystemConfig::small().validate().unwrap();
        let mut bad = cfg.clone();
        bad.n_rf = 65;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.n_taps = 65;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn milac_matrix_rejects_infeasible() {
        assert!(MiLACMatrix::new(CMat::identity(3, 2) * C64::new(1.5, 0.0)).is_err());
        let p = MiLACMatrix::new(CMat::identity(3, 2)).unwrap();
        assert!((p.physical()[(0, 0)].re - 0.5).abs() < 1e-15);
    }
}
