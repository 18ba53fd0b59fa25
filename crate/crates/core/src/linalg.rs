//! Dense kernels for the small (M x M, M rarely above 4) complex matrices
//! that appear once per time-frequency bin. Matrices are row-major slices
//! of length `n * n`.

use num_complex::Complex64;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn identity(n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        out[i * n + i] = ONE;
    }
    out
}

/// `out = a * b`.
pub fn matmul_into(a: &[C64], b: &[C64], n: usize, out: &mut [C64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

pub fn matmul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    matmul_into(a, b, n, &mut out);
    out
}

pub fn adjoint(a: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j].conj();
        }
    }
    out
}

pub fn trace(a: &[C64], n: usize) -> C64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// `tr(A B)` as `sum_ij A_ij B_ji`, without forming the product.
pub fn trace_product(a: &[C64], b: &[C64], n: usize) -> C64 {
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[i * n + j] * b[j * n + i];
        }
    }
    acc
}

/// Real part of `tr(A B)` for Hermitian `A`, `B`, where the imaginary part
/// vanishes analytically.
#[inline]
pub fn trace_product_re(a: &[C64], b: &[C64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[i * n + j];
            let y = b[j * n + i];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn frobenius_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Replaces `a` by `(a + a^H) / 2`.
pub fn hermitize(a: &mut [C64], n: usize) {
    for i in 0..n {
        a[i * n + i].im = 0.0;
        for j in (i + 1)..n {
            let avg = (a[i * n + j] + a[j * n + i].conj()) * 0.5;
            a[i * n + j] = avg;
            a[j * n + i] = avg.conj();
        }
    }
}

/// `||A - A^H||_F`.
pub fn hermitian_defect(a: &[C64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[i * n + j] - a[j * n + i].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Gauss-Jordan inverse with partial pivoting. `work` is clobbered.
/// Returns `false` when a pivot falls below `tol` times the largest
/// absolute entry of the input.
pub fn invert_into(work: &mut [C64], n: usize, out: &mut [C64], tol: f64) -> bool {
    let scale = work.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(scale.is_finite()) || scale == 0.0 {
        return false;
    }
    out.fill(ZERO);
    for i in 0..n {
        out[i * n + i] = ONE;
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = work[col * n + col].norm();
        for row in (col + 1)..n {
            let v = work[row * n + col].norm();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best <= tol * scale {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                work.swap(col * n + k, pivot * n + k);
                out.swap(col * n + k, pivot * n + k);
            }
        }
        let inv = ONE / work[col * n + col];
        for k in 0..n {
            work[col * n + k] *= inv;
            out[col * n + k] *= inv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = work[row * n + col];
            if factor == ZERO {
                continue;
            }
            for k in 0..n {
                let w = work[col * n + k];
                let o = out[col * n + k];
                work[row * n + k] -= factor * w;
                out[row * n + k] -= factor * o;
            }
        }
    }
    true
}

pub fn invert(a: &[C64], n: usize) -> Option<Vec<C64>> {
    let mut work = a.to_vec();
    let mut out = vec![ZERO; n * n];
    invert_into(&mut work, n, &mut out, 1e-14).then_some(out)
}

/// Lower Cholesky factor `L` with `A = L L^H`. `None` unless `A` is
/// numerically positive definite.
pub fn cholesky(a: &[C64], n: usize) -> Option<Vec<C64>> {
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// `log det A` for Hermitian positive definite `A`.
pub fn log_det_hpd(a: &[C64], n: usize) -> Option<f64> {
    let l = cholesky(a, n)?;
    Some((0..n).map(|i| 2.0 * l[i * n + i].re.ln()).sum())
}

/// `log det (A + delta I)` and `(A + delta I)^-1` for Hermitian PSD `A`,
/// taken from the eigenvalues of `A` clamped at zero. Slower than Cholesky
/// but exact where `A` is rank deficient and far larger than `delta`, so
/// that the shifted matrix is definite only below roundoff.
pub fn shifted_psd_logdet_inverse(a: &[C64], n: usize, delta: f64, out: &mut [C64]) -> Option<f64> {
    let (vals, vecs) = hermitian_eigen(a, n);
    let shifted: Vec<f64> = vals.iter().map(|l| l.max(0.0) + delta).collect();
    if shifted.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return None;
    }
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| vecs[i * n + k] * vecs[j * n + k].conj() / shifted[k]).sum();
        }
    }
    Some(shifted.iter().map(|l| l.ln()).sum())
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues ascend; eigenvector `k` is column `k` of the
/// returned row-major matrix.
pub fn hermitian_eigen(a: &[C64], n: usize) -> (Vec<f64>, Vec<C64>) {
    let mut m = a.to_vec();
    hermitize(&mut m, n);
    let mut v = identity(n);
    let total = frobenius_norm(&m);
    if total == 0.0 || n == 1 {
        let vals = (0..n).map(|i| m[i * n + i].re).collect();
        return (vals, v);
    }

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-17 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let beta = m[p * n + q];
                let abs_beta = beta.norm();
                if abs_beta <= 1e-300 {
                    continue;
                }
                let phase = beta / abs_beta;
                let alpha = m[p * n + p].re;
                let gamma = m[q * n + q].re;
                let theta = (gamma - alpha) / (2.0 * abs_beta);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U restricted to (p, q) = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let upp = C64::new(c, 0.0);
                let upq = C64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = akp * upp + akq * uqp;
                    m[k * n + q] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = upp.conj() * apk + uqp.conj() * aqk;
                    m[q * n + k] = upq.conj() * apk + uqq.conj() * aqk;
                }
                m[p * n + q] = ZERO;
                m[q * n + p] = ZERO;
                m[p * n + p].im = 0.0;
                m[q * n + q].im = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * upp + vkq * uqp;
                    v[k * n + q] = vkp * upq + vkq * uqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].re.total_cmp(&m[j * n + j].re));
    let vals = order.iter().map(|&i| m[i * n + i].re).collect();
    let mut vecs = vec![ZERO; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + dst] = v[k * n + src];
        }
    }
    (vals, vecs)
}
