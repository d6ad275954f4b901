//! Complex dense matrix aliases and the handful of helpers shared by every
//! module. Everything is backed by `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Squared Frobenius norm.
pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob(m: &CMat) -> f64 {
    frob_sq(m).sqrt()
}

/// `Tr(A^H B)`, the Frobenius inner product.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Draw a circularly-symmetric complex Gaussian sample with variance `var`:
/// real and imaginary parts are independent `N(0, var/2)`.
pub fn cn_sample<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Matrix with i.i.d. `CN(0, var)` entries, filled column-major.
pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn_sample(rng, var))
}

/// Largest singular value. Zero for empty or all-zero input.
///
/// Computed from the Gram matrix of the smaller side. The complex SVD in
/// nalgebra returns wrong factors for some rank-deficient inputs, so nothing
/// in this crate calls it.
pub fn spectral_norm(x: &CMat) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let gram = if x.nrows() >= x.ncols() {
        x.adjoint() * x
    } else {
        x * x.adjoint()
    };
    let eig = SymmetricEigen::new(hermitian_part(&gram));
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .sqrt()
}

/// Eigen-decomposition of `F F^H` in factored form: an orthonormal
/// `rows x min(rows, cols)` basis `U` and eigenvalues `lambda` (descending,
/// clamped at zero) with `F F^H = U diag(lambda) U^H`.
///
/// Tall inputs go through a Householder QR first, so only a
/// `cols x cols` Hermitian problem is solved.
pub fn range_eig(f: &CMat) -> (CMat, Vec<f64>) {
    let (q, small) = if f.nrows() > f.ncols() {
        let qr = f.clone().qr();
        let r = qr.r();
        (Some(qr.q()), &r * r.adjoint())
    } else {
        (None, f * f.adjoint())
    };
    let eig = SymmetricEigen::new(hermitian_part(&small));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vecs = CMat::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    let basis = match q {
        Some(q) => q * vecs,
        None => vecs,
    };
    (basis, vals)
}

/// Hermitian part `(A + A^H)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Extend the orthonormal columns of `u` with `extra` further orthonormal
/// columns by Gram-Schmidt over the standard basis.
pub fn orthonormal_complement(u: &CMat, extra: usize) -> CMat {
    let n = u.nrows();
    let mut basis: Vec<CVec> = u.column_iter().map(|c| c.into_owned()).collect();
    let mut added = Vec::with_capacity(extra);
    for i in 0..n {
        if added.len() == extra {
            break;
        }
        let mut v = CVec::zeros(n);
        v[i] = ONE;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in basis.iter() {
                let c = b.dotc(&v);
                v.axpy(-c, b, ONE);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            v.unscale_mut(nrm);
            basis.push(v.clone());
            added.push(v);
        }
    }
    CMat::from_columns(&added)
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `max(|a|, floor)` for relative comparisons against values that may be zero.
pub fn rel_scale(a: f64, floor: f64) -> f64 {
    a.abs().max(floor)
}
