//! Frequency-selective multi-tap channels: exponential power delay profile,
//! seeded tap generation, per-subcarrier responses and a time-domain OFDM
//! simulation used to check the per-subcarrier model.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::{cn_matrix, cn_sample, CMat, CVec, C64};
use crate::model::{DigitalPrecoders, SystemConfig};
use crate::textio::ComplexArray3;

/// Normalised exponential power delay profile, `p_d ∝ exp(-d / decay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    powers: Vec<f64>,
    decay: f64,
}

impl PowerDelayProfile {
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn n_taps(&self) -> usize {
        self.powers.len()
    }

    /// Arbitrary normalised profile; used for delay-spread evaluation of
    /// profiles that are not exponential.
    pub fn from_powers(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() || powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig(
                "power delay profile must be non-empty and non-negative".into(),
            ));
        }
        let total: f64 = powers.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "power delay profile sums to {total}, expected 1"
            )));
        }
        Ok(PowerDelayProfile {
            powers,
            decay: f64::NAN,
        })
    }
}

pub fn generate_pdp(n_taps: usize, decay: f64) -> Result<PowerDelayProfile> {
    if n_taps < 1 {
        return Err(Error::InvalidConfig("PDP needs at least one tap".into()));
    }
    if !(decay > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "PDP decay must be positive, got {decay}"
        )));
    }
    // exp(-d/eps) relative to the first tap; no overflow for any eps > 0
    let raw: Vec<f64> = (0..n_taps).map(|d| (-(d as f64) / decay).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(PowerDelayProfile {
        powers: raw.into_iter().map(|p| p / total).collect(),
        decay,
    })
}

/// RMS delay spread `T_s * sqrt(sum_d p_d (d - d_mean)^2)`.
pub fn rms_delay_spread(pdp: &PowerDelayProfile, sample_period: f64) -> f64 {
    let p = pdp.powers();
    let mean: f64 = p.iter().enumerate().map(|(d, w)| w * d as f64).sum();
    let var: f64 = p
        .iter()
        .enumerate()
        .map(|(d, w)| w * (d as f64 - mean).powi(2))
        .sum();
    sample_period * var.max(0.0).sqrt()
}

/// Time-domain taps. `taps[k]` is `N_T x D`; column `d` is `h̄_{k,d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    taps: Vec<CMat>,
}

impl TapChannel {
    pub fn new(taps: Vec<CMat>) -> Result<Self> {
        if let Some(first) = taps.first() {
            if taps.iter().any(|t| t.shape() != first.shape()) {
                return Err(Error::dims(
                    "TapChannel",
                    format!("{:?}", first.shape()),
                    "mixed shapes",
                ));
            }
        }
        Ok(TapChannel { taps })
    }

    pub fn n_users(&self) -> usize {
        self.taps.len()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.first().map_or(0, |t| t.ncols())
    }

    pub fn n_tx(&self) -> usize {
        self.taps.first().map_or(0, |t| t.nrows())
    }

    pub fn user(&self, k: usize) -> &CMat {
        &self.taps[k]
    }

    pub fn tap(&self, k: usize, d: usize) -> CVec {
        self.taps[k].column(d).into_owned()
    }

    pub fn to_array(&self) -> ComplexArray3 {
        let (k_n, d_n, nt) = (self.n_users(), self.n_taps(), self.n_tx());
        let mut data = Vec::with_capacity(k_n * d_n * nt);
        for t in &self.taps {
            for d in 0..d_n {
                data.extend(t.column(d).iter().cloned());
            }
        }
        ComplexArray3 {
            kind: "taps".into(),
            dims: [k_n, d_n, nt],
            data,
        }
    }

    pub fn from_array(a: ComplexArray3) -> Result<Self> {
        let a = a.expect_kind("taps")?;
        let [k_n, d_n, nt] = a.dims;
        let taps = (0..k_n)
            .map(|k| CMat::from_fn(nt, d_n, |i, d| a.get(k, d, i)))
            .collect();
        TapChannel::new(taps)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        self.to_array().write(path)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        Self::from_array(ComplexArray3::read(path)?)
    }
}

/// Frequency-domain channel. `per_subcarrier[n]` is `N_T x K`; column `k` is
/// `h_{k,n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    per_subcarrier: Vec<CMat>,
}

impl FreqChannel {
    pub fn new(per_subcarrier: Vec<CMat>) -> Result<Self> {
        if let Some(first) = per_subcarrier.first() {
            if per_subcarrier.iter().any(|h| h.shape() != first.shape()) {
                return Err(Error::dims(
                    "FreqChannel",
                    format!("{:?}", first.shape()),
                    "mixed shapes",
                ));
            }
        }
        Ok(FreqChannel { per_subcarrier })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }

    pub fn n_users(&self) -> usize {
        self.per_subcarrier.first().map_or(0, |h| h.ncols())
    }

    pub fn n_tx(&self) -> usize {
        self.per_subcarrier.first().map_or(0, |h| h.nrows())
    }

    /// `H_n = [h_{1,n}, ..., h_{K,n}]`.
    pub fn subcarrier(&self, n: usize) -> &CMat {
        &self.per_subcarrier[n]
    }

    pub fn subcarriers(&self) -> &[CMat] {
        &self.per_subcarrier
    }

    pub fn h(&self, k: usize, n: usize) -> CVec {
        self.per_subcarrier[n].column(k).into_owned()
    }

    /// All channel vectors side by side, `N_T x KN`, subcarrier-major.
    pub fn stacked(&self) -> CMat {
        crate::model::hconcat(&self.per_subcarrier)
    }

    /// 64-bit FNV-1a fingerprint over the exact bit patterns.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.n_subcarriers() as u64);
        eat(self.n_tx() as u64);
        eat(self.n_users() as u64);
        for m in &self.per_subcarrier {
            for z in m.iter() {
                eat(z.re.to_bits());
                eat(z.im.to_bits());
            }
        }
        h
    }

    pub fn to_array(&self) -> ComplexArray3 {
        let (k_n, n_n, nt) = (self.n_users(), self.n_subcarriers(), self.n_tx());
        let mut data = Vec::with_capacity(k_n * n_n * nt);
        for k in 0..k_n {
            for h in &self.per_subcarrier {
                data.extend(h.column(k).iter().cloned());
            }
        }
        ComplexArray3 {
            kind: "freq".into(),
            dims: [k_n, n_n, nt],
            data,
        }
    }

    pub fn from_array(a: ComplexArray3) -> Result<Self> {
        let a = a.expect_kind("freq")?;
        let [k_n, n_n, nt] = a.dims;
        let per = (0..n_n)
            .map(|n| CMat::from_fn(nt, k_n, |i, k| a.get(k, n, i)))
            .collect();
        FreqChannel::new(per)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        self.to_array().write(path)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        Self::from_array(ComplexArray3::read(path)?)
    }
}

/// Draw `h̄_{k,d} ~ CN(0, p_d I)` for every user and tap.
///
/// Each `(k, d)` pair reads from its own ChaCha20 stream (`stream = k << 32 | d`)
/// keyed by `seed`, so the output does not depend on generation order and
/// adding users or taps leaves existing draws unchanged.
pub fn generate_taps(config: &SystemConfig, seed: u64) -> Result<TapChannel> {
    let pdp = generate_pdp(config.n_taps, config.pdp_decay)?;
    let nt = config.n_tx;
    let taps = (0..config.n_users)
        .map(|k| {
            let mut t = CMat::zeros(nt, config.n_taps);
            for (d, &pd) in pdp.powers().iter().enumerate() {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(((k as u64) << 32) | d as u64);
                for i in 0..nt {
                    t[(i, d)] = cn_sample(&mut rng, pd);
                }
            }
            t
        })
        .collect();
    TapChannel::new(taps)
}

/// `h_{k,n} = sum_d h̄_{k,d} exp(-j 2 pi n d / N)` for `n = 0..N-1`.
pub fn taps_to_frequency(taps: &TapChannel, n_subcarriers: usize) -> Result<FreqChannel> {
    let d_n = taps.n_taps();
    if d_n > n_subcarriers {
        return Err(Error::InvalidConfig(format!(
            "{d_n} taps exceed {n_subcarriers} subcarriers"
        )));
    }
    // D x N twiddle matrix; the index product is reduced mod N for accuracy
    let twiddle = CMat::from_fn(d_n, n_subcarriers, |d, n| {
        C64::from_polar(
            1.0,
            -2.0 * PI * ((n * d) % n_subcarriers) as f64 / n_subcarriers as f64,
        )
    });
    let per_user: Vec<CMat> = (0..taps.n_users())
        .map(|k| taps.user(k) * &twiddle)
        .collect();
    let nt = taps.n_tx();
    let per = (0..n_subcarriers)
        .map(|n| {
            let mut h = CMat::zeros(nt, taps.n_users());
            for (k, hk) in per_user.iter().enumerate() {
                h.set_column(k, &hk.column(n));
            }
            h
        })
        .collect();
    FreqChannel::new(per)
}

/// Generate the frequency-domain channel for `config` from `seed`.
pub fn generate_channel(config: &SystemConfig, seed: u64) -> Result<FreqChannel> {
    taps_to_frequency(&generate_taps(config, seed)?, config.n_subcarriers)
}

/// Simulate one OFDM block end to end in the time domain and compare with
/// the per-subcarrier model `h^H P^M W_n s_n` (noiseless).
///
/// Pipeline: per-subcarrier precoding, per-RF-chain IDFT, the MiLAC applied to
/// every time sample, causal circular convolution with the taps (ideal cyclic
/// prefix), and a DFT at each user. With `h_{k,n}` defined through
/// `exp(-j 2 pi n d / N)`, the causal convolution lands the model of bin `n`
/// on receiver bin `(N - n) mod N`, which is the pairing compared here.
///
/// `p` is the scaled matrix `P = 2 P^M`. Returns the largest absolute
/// deviation divided by the largest model output magnitude.
pub fn verify_time_frequency_equivalence<R: Rng + ?Sized>(
    taps: &TapChannel,
    p: &CMat,
    w: &DigitalPrecoders,
    rng: &mut R,
) -> Result<f64> {
    let n_sc = w.n_subcarriers();
    let k_n = taps.n_users();
    let nrf = w.n_rf();
    if p.nrows() != taps.n_tx() || p.ncols() != nrf {
        return Err(Error::dims(
            "verify_time_frequency_equivalence (P)",
            format!("{}x{}", taps.n_tx(), nrf),
            format!("{}x{}", p.nrows(), p.ncols()),
        ));
    }
    if w.n_users() != k_n {
        return Err(Error::dims(
            "verify_time_frequency_equivalence (K)",
            k_n,
            w.n_users(),
        ));
    }
    let freq = taps_to_frequency(taps, n_sc)?;
    let pm = p * C64::new(0.5, 0.0);
    let symbols = cn_matrix(rng, k_n, n_sc, 1.0);
    let nf = n_sc as f64;
    let scale = 1.0 / nf.sqrt();
    let tw = |sign: f64, a: usize, b: usize| {
        C64::from_polar(1.0, sign * 2.0 * PI * ((a * b) % n_sc) as f64 / nf)
    };

    // precoded frequency-domain RF signals, N_RF x N
    let mut s_freq = CMat::zeros(nrf, n_sc);
    for n in 0..n_sc {
        s_freq.set_column(n, &(w.block(n) * symbols.column(n)));
    }
    // IDFT per RF chain
    let s_time = CMat::from_fn(nrf, n_sc, |r, m| {
        (0..n_sc)
            .map(|n| s_freq[(r, n)] * tw(1.0, m, n))
            .sum::<C64>()
            * scale
    });
    // MiLAC on each time sample, N_T x N
    let x_time = &pm * s_time;

    let mut max_dev: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for k in 0..k_n {
        let hk = taps.user(k);
        let y: Vec<C64> = (0..n_sc)
            .map(|m| {
                (0..taps.n_taps())
                    .map(|d| hk.column(d).dotc(&x_time.column((m + n_sc - d) % n_sc)))
                    .sum()
            })
            .collect();
        for n in 0..n_sc {
            let y_freq: C64 = (0..n_sc).map(|m| y[m] * tw(-1.0, m, n)).sum::<C64>() * scale;
            let mirrored = (n_sc - n) % n_sc;
            let h = freq.subcarrier(mirrored).column(k);
            let model = h.dotc(&(&pm * w.block(n) * symbols.column(n)));
            max_dev = max_dev.max((y_freq - model).norm());
            max_ref = max_ref.max(model.norm());
        }
    }
    if max_ref == 0.0 {
        return Ok(max_dev);
    }
    Ok(max_dev / max_ref)
}
