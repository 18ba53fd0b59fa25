//! `W C W = D` for Hermitian PD `C` and Hermitian PSD `D`.
//!
//! The stable invariant subspace of `E = [[0, -C], [-D, 0]]` is spanned by
//! `[J; I]` with `J = L Y`, `I = D J Λ^{-1/2}`, where `C = L L^H` and
//! `L^H D L = Y Λ Y^H`: indeed `-D j = -sqrt(λ) i` and
//! `-C i = -C D L y / sqrt(λ) = -sqrt(λ) L y`. Building the subspace this way
//! keeps the solve well defined when `D` is rank deficient, where `E` has a
//! defective zero eigenvalue and a generic eigen-solver gives no basis.

use crate::linalg::{self, C64};

/// Threshold on `||W C W - D||_F / ||D||_F` above which a solve is rejected.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiFailure {
    /// `C` is not numerically positive definite.
    IndefiniteC,
    /// The `J` block of the stable subspace is singular.
    SingularJ,
    /// The solution misses the equation by more than [`RESIDUAL_TOL`].
    Residual,
}

/// Hermitian PSD solution `W` of `W C W = D`.
pub fn solve_riccati(c: &[C64], d: &[C64], m: usize) -> Result<Vec<C64>, RiccatiFailure> {
    let l = linalg::cholesky(c, m).ok_or(RiccatiFailure::IndefiniteC)?;
    let lh = linalg::adjoint(&l, m);
    let k = linalg::matmul(&linalg::matmul(&lh, d, m), &l, m);
    let (vals, y) = linalg::hermitian_eigen(&k, m);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let j = linalg::matmul(&l, &y, m);
    let mut i_blk = linalg::matmul(d, &j, m);
    for col in 0..m {
        let lam = vals[col];
        let scale = if lam > 1e-14 * top && lam > 0.0 { 1.0 / lam.sqrt() } else { 0.0 };
        for row in 0..m {
            i_blk[row * m + col] *= scale;
        }
    }
    let j_inv = linalg::invert(&j, m).ok_or(RiccatiFailure::SingularJ)?;
    let mut w = linalg::matmul(&i_blk, &j_inv, m);
    linalg::hermitize(&mut w, m);

    if residual(&w, c, d, m) > RESIDUAL_TOL {
        return Err(RiccatiFailure::Residual);
    }
    Ok(w)
}

/// `||W C W - D||_F / ||D||_F`, or the absolute norm when `D = 0`.
pub fn residual(w: &[C64], c: &[C64], d: &[C64], m: usize) -> f64 {
    let wcw = linalg::matmul(&linalg::matmul(w, c, m), w, m);
    let diff: f64 = wcw.iter().zip(d).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let dn = linalg::frobenius_norm(d);
    if dn > 0.0 {
        diff / dn
    } else {
        diff
    }
}
