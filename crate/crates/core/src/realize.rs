//! Realising fully-digital per-subcarrier beamformers with a hybrid
//! digital-MiLAC transmitter.
//!
//! With `B̃ = [W^D_1, ..., W^D_N]` (`N_T x KN`), a compact SVD `B̃ = U S V^H`
//! gives `P = U` (orthonormal columns, so `||P||_2 = 1`) and
//! `[W_1, ..., W_N] = S V^H` with the same Frobenius norm as `B̃`. The number
//! of RF chains needed is the numerical rank of `B̃`, at most
//! `min(N_T, KN)`; with fewer chains the residual is bounded below by the
//! discarded singular values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{frob, orthonormal_complement, range_eig, CMat};
use crate::model::{hconcat, DigitalPrecoders, MiLACMatrix};
use crate::textio::ComplexArray3;

/// Default numerical-rank threshold relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Fully-digital beamformers `W^D_n`, each `N_T x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTargetSet {
    blocks: Vec<CMat>,
}

impl DigitalTargetSet {
    pub fn new(blocks: Vec<CMat>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidConfig("target set has no subcarriers".into()));
        }
        let shape = blocks[0].shape();
        if blocks.iter().any(|b| b.shape() != shape) {
            return Err(Error::dims(
                "DigitalTargetSet",
                format!("{shape:?}"),
                "mixed shapes",
            ));
        }
        Ok(DigitalTargetSet { blocks })
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn n_subcarriers(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_tx(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn n_users(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// `[W^D_1, ..., W^D_N]`, `N_T x KN`.
    pub fn aggregate(&self) -> CMat {
        hconcat(&self.blocks)
    }

    pub fn power(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn to_array(&self) -> ComplexArray3 {
        let (n_n, nt, k_n) = (self.n_subcarriers(), self.n_tx(), self.n_users());
        let mut data = Vec::with_capacity(n_n * nt * k_n);
        for b in &self.blocks {
            for i in 0..nt {
                data.extend(b.row(i).iter().cloned());
            }
        }
        ComplexArray3 {
            kind: "targets".into(),
            dims: [n_n, nt, k_n],
            data,
        }
    }

    pub fn from_array(a: ComplexArray3) -> Result<Self> {
        let a = a.expect_kind("targets")?;
        let [n_n, nt, k_n] = a.dims;
        Self::new(
            (0..n_n)
                .map(|n| CMat::from_fn(nt, k_n, |i, k| a.get(n, i, k)))
                .collect(),
        )
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        self.to_array().write(path)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        Self::from_array(ComplexArray3::read(path)?)
    }
}

impl From<DigitalPrecoders> for DigitalTargetSet {
    fn from(w: DigitalPrecoders) -> Self {
        DigitalTargetSet {
            blocks: w.into_blocks(),
        }
    }
}

/// RF chains needed to realise every fully-digital beamformer set.
pub fn min_rf_chains(n_tx: usize, n_users: usize, n_subcarriers: usize) -> usize {
    n_tx.min(n_users * n_subcarriers)
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub p: MiLACMatrix,
    pub w: DigitalPrecoders,
    /// Numerical rank actually used, `<= p.ncols()`.
    pub n_rf_used: usize,
    /// Singular values of the aggregate target, descending.
    pub singular_values: Vec<f64>,
}

/// Descending compact SVD `(U, s, S V^H)` of `a`. The third factor comes
/// back already scaled by the singular values, as `U^H a`.
///
/// Singular values are the row norms of `U^H a`, which stay accurate to
/// `eps * s_max` even where the eigenvalues of `a a^H` do not.
pub(crate) fn sorted_svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (u, _) = range_eig(a);
    let b = u.adjoint() * a;
    let norms: Vec<f64> = b.row_iter().map(|r| r.norm()).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s = order.iter().map(|&i| norms[i]).collect();
    let u = CMat::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let b = CMat::from_rows(&order.iter().map(|&i| b.row(i)).collect::<Vec<_>>());
    (u, s, b)
}

/// Realise `targets` as `P W̃`.
///
/// `n_rf = None` uses exactly the numerical rank `r`. A larger `n_rf` pads
/// `P` with further orthonormal columns and `W̃` with zero rows; a smaller one
/// keeps the `n_rf` dominant singular triplets (best rank-`n_rf` fit).
pub fn realize_fully_digital(
    targets: &DigitalTargetSet,
    rank_tol: f64,
    n_rf: Option<usize>,
) -> Result<Realization> {
    let agg = targets.aggregate();
    let (u, s, sv) = sorted_svd(&agg);
    let smax = s.first().copied().unwrap_or(0.0);
    if !(smax > 0.0) {
        return Err(Error::ZeroTarget);
    }
    let rank = s.iter().take_while(|&&x| x > rank_tol * smax).count();
    let n_tx = targets.n_tx();
    let chains = n_rf.unwrap_or(rank);
    if chains == 0 || chains > n_tx {
        return Err(Error::InvalidConfig(format!(
            "n_rf must lie in 1..={n_tx}, got {chains}"
        )));
    }
    let used = rank.min(chains);

    let mut p = CMat::zeros(n_tx, chains);
    p.columns_mut(0, used).copy_from(&u.columns(0, used));
    if chains > used {
        let avail = u.ncols() - used;
        let take = avail.min(chains - used);
        p.columns_mut(used, take).copy_from(&u.columns(used, take));
        if chains > used + take {
            let basis = p.columns(0, used + take).into_owned();
            let extra = orthonormal_complement(&basis, chains - used - take);
            p.columns_mut(used + take, extra.ncols()).copy_from(&extra);
        }
    }

    let kn = agg.ncols();
    let mut w_agg = CMat::zeros(chains, kn);
    for i in 0..used {
        w_agg.set_row(i, &sv.row(i));
    }
    let k = targets.n_users();
    let blocks = (0..targets.n_subcarriers())
        .map(|n| w_agg.columns(n * k, k).into_owned())
        .collect();
    Ok(Realization {
        p: MiLACMatrix::new_unchecked(p),
        w: DigitalPrecoders::new(blocks)?,
        n_rf_used: used,
        singular_values: s,
    })
}

/// `||P W̃ - W̃_D||_F / ||W̃_D||_F`.
pub fn realization_residual(
    p: &CMat,
    w: &DigitalPrecoders,
    targets: &DigitalTargetSet,
) -> Result<f64> {
    let target = targets.aggregate();
    let scale = frob(&target);
    if !(scale > 0.0) {
        return Err(Error::ZeroTarget);
    }
    let w_agg = w.aggregate();
    if p.ncols() != w_agg.nrows() || p.nrows() != target.nrows() || w_agg.ncols() != target.ncols()
    {
        return Err(Error::dims(
            "realization_residual",
            format!("{}x{}", target.nrows(), target.ncols()),
            format!(
                "({}x{})*({}x{})",
                p.nrows(),
                p.ncols(),
                w_agg.nrows(),
                w_agg.ncols()
            ),
        ));
    }
    Ok(frob(&(p * w_agg - target)) / scale)
}
