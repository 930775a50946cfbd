//! Dense linear-algebra helpers not provided directly by `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector, Dyn, Schur, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex<f64>>;
pub type CVector = DVector<Complex<f64>>;

/// Iteration budget of the QR-type decompositions. `nalgebra` iterates
/// without bound unless given one, and its real Schur sweep can stall.
fn max_iterations(n: usize) -> usize {
    300 * n.max(1)
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

/// Real Schur factorisation of `Z' m Z` for an orthogonal `Z`, returned as
/// `(Z, schur)`. A stalled attempt is retried after a random orthogonal
/// similarity, which leaves the spectrum unchanged.
fn schur_with_restarts(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Schur<f64, Dyn>)> {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4);
    let mut z = DMatrix::identity(n, n);
    for _ in 0..4 {
        let work = z.transpose() * m * &z;
        if let Some(s) = Schur::try_new(work, f64::EPSILON, max_iterations(n)) {
            return Ok((z, s));
        }
        z = random_orthogonal(n, &mut rng);
    }
    Err(Error::numerical("schur", format!("QR iteration did not converge on a {n}x{n} matrix")))
}

/// Real Schur form `m = U T U'`, returned as `(U, T)`.
pub fn schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (z, s) = schur_with_restarts(m)?;
    let (u, t) = s.unpack();
    Ok((z * u, t))
}

pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Result<CVector> {
    Ok(schur_with_restarts(m)?.1.complex_eigenvalues())
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, max_iterations(m.nrows()))
        .map(|e| e.eigenvalues)
        .ok_or_else(|| Error::numerical("symmetric_eigen", "Jacobi-QR iteration did not converge"))
}

/// Singular value decomposition with singular values in decreasing order.
pub fn svd(m: &DMatrix<f64>, compute_u: bool, compute_v: bool) -> Result<SVD<f64, Dyn, Dyn>> {
    SVD::try_new(m.clone(), compute_u, compute_v, f64::EPSILON, max_iterations(m.nrows().max(m.ncols())))
        .ok_or_else(|| Error::numerical("svd", "bidiagonal QR iteration did not converge"))
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(svd(m, false, false)?.singular_values)
}

pub fn complex_singular_values(m: &CMatrix) -> Result<DVector<f64>> {
    SVD::try_new(m.clone(), false, false, f64::EPSILON, max_iterations(m.nrows().max(m.ncols())))
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::numerical("svd", "bidiagonal QR iteration did not converge"))
}

/// Largest singular value; zero for empty matrices. Falls back to the
/// Frobenius norm, an upper bound, if the SVD does not converge.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).map(|sv| sv.max()).unwrap_or_else(|_| m.norm())
}

/// Splits a quasi-upper-triangular Schur factor into its 1x1 / 2x2
/// diagonal blocks, returned as `(start, size)`.
pub fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let two = i + 1 < n && {
            let sub = t[(i + 1, i)].abs();
            sub > 1e-14 * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs()).max(f64::MIN_POSITIVE)
        };
        if two {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves the continuous Lyapunov equation `A^T X + X A = C` by the
/// Bartels-Stewart method on the real Schur form of `A`.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let (u, t) = schur(a)?;
    let rhs = u.transpose() * c * &u;
    let blocks = schur_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(k0, p) in &blocks {
        for &(l0, q) in &blocks {
            // C_kl - sum_{i<k} T_ik^T Y_il - sum_{j<l} Y_kj T_jl
            let mut r = rhs.view((k0, l0), (p, q)).into_owned();
            if k0 > 0 {
                r -= t.view((0, k0), (k0, p)).transpose() * y.view((0, l0), (k0, q));
            }
            if l0 > 0 {
                r -= y.view((k0, 0), (p, l0)) * t.view((0, l0), (l0, q));
            }
            let tkk = t.view((k0, k0), (p, p));
            let tll = t.view((l0, l0), (q, q));
            // vec(Tkk^T X + X Tll) = (I_q ⊗ Tkk^T + Tll^T ⊗ I_p) vec(X)
            let dim = p * q;
            let mut sys = DMatrix::<f64>::zeros(dim, dim);
            for jq in 0..q {
                for ip in 0..p {
                    let row = jq * p + ip;
                    for kp in 0..p {
                        sys[(row, jq * p + kp)] += tkk[(kp, ip)];
                    }
                    for kq in 0..q {
                        sys[(row, kq * p + ip)] += tll[(kq, jq)];
                    }
                }
            }
            let rv = DVector::from_iterator(dim, r.iter().copied());
            let sol = sys.lu().solve(&rv).ok_or_else(|| {
                Error::numerical("lyapunov", "singular Sylvester block: A and -A share an eigenvalue")
            })?;
            for jq in 0..q {
                for ip in 0..p {
                    y[(k0 + ip, l0 + jq)] = sol[jq * p + ip];
                }
            }
        }
    }
    let x = &u * y * u.transpose();
    Ok(x)
}

/// Matrix exponential.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.exp()
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// Determinant of a complex matrix by partial-pivoting LU.
pub fn complex_det(m: &CMatrix) -> Complex<f64> {
    if m.is_empty() {
        return Complex::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Smallest-to-largest singular value ratio (2-norm condition number).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let Ok(sv) = singular_values(m) else {
        return f64::INFINITY;
    };
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// Diagonal equilibration factors `(r, c)` such that `diag(r) A diag(c)`
/// has rows and columns of comparable infinity norm (Ruiz iteration,
/// factors rounded to powers of two so scaling is exact).
pub fn equilibrate(a: &DMatrix<f64>, sweeps: usize) -> (DVector<f64>, DVector<f64>) {
    let (nr, nc) = a.shape();
    let mut r = DVector::from_element(nr, 1.0);
    let mut c = DVector::from_element(nc, 1.0);
    let mut work = a.abs();
    for _ in 0..sweeps {
        let mut done = true;
        for i in 0..nr {
            let mx = work.row(i).max();
            if mx > 0.0 {
                let f = pow2(1.0 / mx.sqrt());
                if f != 1.0 {
                    done = false;
                }
                r[i] *= f;
                work.row_mut(i).scale_mut(f);
            }
        }
        for j in 0..nc {
            let mx = work.column(j).max();
            if mx > 0.0 {
                let f = pow2(1.0 / mx.sqrt());
                if f != 1.0 {
                    done = false;
                }
                c[j] *= f;
                work.column_mut(j).scale_mut(f);
            }
        }
        if done {
            break;
        }
    }
    (r, c)
}

fn pow2(x: f64) -> f64 {
    2f64.powi(x.log2().round() as i32)
}
