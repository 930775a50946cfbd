//! Optimality pencil of the singular-arc system and its Weierstraß form.
//!
//! On a singular arc the state, costate and input satisfy the linear DAE
//!
//! ```text
//! D xi' = M xi + f,   xi = (x, λ, u),   f = (E d, -r, p)
//! D = blkdiag(I, I, 0),   M = [A 0 B; -Q -A' -S'; S B' 0]
//! ```
//!
//! For a regular pencil `sD - M` we compute nonsingular `P`, `Q` with
//! `P (sD - M) Q = blkdiag(sI - J, sN - I)`, `N` nilpotent. The dynamic part
//! is then an ODE driven by `f1 = (P f)_1` and the algebraic part is the
//! finite sum `xi2 = -sum_i N^i f2^(i)`. The turnpike is the unique solution
//! that stays bounded on the whole time axis.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::network::StateSpaceModel;
use crate::problem::{CostData, InputBox};
use crate::signal::Signal;

/// Resonance threshold on `||(i k w0 I - J)^-1||`.
pub const RESONANCE_LIMIT: f64 = 1e10;
/// Maximum tolerated relative residual of the block decoupling.
pub const DECOUPLING_TOL: f64 = 1e-6;
/// Largest accepted relative defect of `P (sD - M) Q` against the canonical
/// form.
pub const RECONSTRUCTION_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct OptimalityPencil {
    pub d: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// `f = (E d, -r, p)`.
    pub forcing: Signal,
    pub states: usize,
    pub inputs: usize,
}

/// Assembles `(D, M, f)` from the model, cost and disturbance.
pub fn build_pencil(model: &StateSpaceModel, cost: &CostData, disturbance: &Signal) -> Result<OptimalityPencil> {
    let (n, m) = (model.n(), model.m());
    cost.validate(n, m)?;
    if disturbance.dim() != model.w() {
        return Err(Error::validation("/cost/d", format!("d must have dimension {}", model.w())));
    }
    let size = 2 * n + m;
    let mut d = DMatrix::zeros(size, size);
    d.view_mut((0, 0), (2 * n, 2 * n)).fill_with_identity();

    let mut mm = DMatrix::zeros(size, size);
    mm.view_mut((0, 0), (n, n)).copy_from(&model.a);
    mm.view_mut((0, 2 * n), (n, m)).copy_from(&model.b);
    mm.view_mut((n, 0), (n, n)).copy_from(&(-&cost.q));
    mm.view_mut((n, n), (n, n)).copy_from(&(-model.a.transpose()));
    mm.view_mut((n, 2 * n), (n, m)).copy_from(&(-cost.s.transpose()));
    mm.view_mut((2 * n, 0), (m, n)).copy_from(&cost.s);
    mm.view_mut((2 * n, n), (m, n)).copy_from(&model.b.transpose());

    let ed = disturbance.left_mul(&model.e)?;
    let forcing = Signal::stack(&[&ed, &cost.r.scale(-1.0), &cost.p]);
    Ok(OptimalityPencil {
        d,
        m: mm,
        forcing,
        states: n,
        inputs: m,
    })
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub regular: bool,
    /// `(s_j, det(s_j D - M))` for the scaled pencil.
    pub samples: Vec<(Complex<f64>, Complex<f64>)>,
    /// `|det| / prod_i ||row_i||` per sample (Hadamard ratio, in `[0, 1]`).
    pub ratios: Vec<f64>,
    pub tolerance: f64,
}

impl OptimalityPencil {
    pub fn size(&self) -> usize {
        self.d.nrows()
    }

    /// Row/column scaling of the pencil, `sD' - M' = Dl (sD - M) Dr`.
    fn scaled(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let (r, c) = linalg::equilibrate(&(self.d.abs() + self.m.abs()), 30);
        let dl = DMatrix::from_diagonal(&r);
        let dr = DMatrix::from_diagonal(&c);
        (&dl * &self.d * &dr, &dl * &self.m * &dr, r, c)
    }

    /// Decides whether `det(sD - M)` is the zero polynomial by sampling it
    /// at `size + 1` seeded points (the degree is at most `rank D`).
    pub fn check_regularity(&self, seed: u64) -> RegularityReport {
        let size = self.size();
        let (d, m, _, _) = self.scaled();
        let (dc, mc) = (linalg::to_complex(&d), linalg::to_complex(&m));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tolerance = f64::EPSILON.sqrt();
        let mut samples = Vec::with_capacity(size + 1);
        let mut ratios = Vec::with_capacity(size + 1);
        for _ in 0..=size {
            let radius = rng.random_range(0.5..2.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let s = Complex::from_polar(radius, angle);
            let pencil: CMatrix = &dc * s - &mc;
            let det = linalg::complex_det(&pencil);
            let hadamard: f64 = pencil.row_iter().map(|r| r.norm()).product();
            let ratio = if hadamard > 0.0 { det.norm() / hadamard } else { 0.0 };
            samples.push((s, det));
            ratios.push(ratio);
        }
        let regular = ratios.iter().any(|&q| q > tolerance);
        RegularityReport {
            regular,
            samples,
            ratios,
            tolerance,
        }
    }

    /// Weierstraß canonical form. Different seeds choose different shifts
    /// and different bases of the deflating subspaces.
    pub fn weierstrass(&self, seed: u64) -> Result<WeierstrassDecomposition> {
        let report = self.check_regularity(seed);
        if !report.regular {
            return Err(Error::IrregularPencil {
                samples: report.samples.len(),
                max_abs_det: report.samples.iter().map(|(_, d)| d.norm()).fold(0.0, f64::max),
                tolerance: report.tolerance,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let (ds, ms, r, c) = self.scaled();
        // J and N are read off the transformed pencil rather than from the
        // shift-inverted matrix, so a unit-size shift loses no accuracy even
        // when the finite spectrum is small; retry if it hits an eigenvalue.
        let mut attempt = Err(Error::numerical("weierstrass", "no admissible shift"));
        for _ in 0..8 {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            attempt = decompose_scaled(&ds, &ms, sign * rng.random_range(0.7..1.3), &mut rng);
            if attempt.is_ok() {
                break;
            }
        }
        let wd = attempt?;

        // Undo the scaling: P = P' Dl, Q = Dr Q'.
        let p = &wd.p * DMatrix::from_diagonal(&r);
        let q = DMatrix::from_diagonal(&c) * &wd.q;
        Ok(WeierstrassDecomposition {
            p,
            q,
            j: wd.j,
            nil: wd.nil,
            index: wd.index,
            finite_dim: wd.finite_dim,
            shift: wd.shift,
            separation_condition: wd.separation_condition,
        })
    }

    /// `max_t ||D xi'(t) - M xi(t) - f(t)||` relative to
    /// `||D|| ||xi'|| + ||M|| ||xi|| + ||f||`, over the given times.
    pub fn relative_residual(&self, xi: &Signal, times: &[f64]) -> f64 {
        let dxi = xi.derivative(1);
        let (dn, mn) = (self.d.norm(), self.m.norm());
        times
            .iter()
            .map(|&t| {
                let (x, dx, f) = (xi.eval(t), dxi.eval(t), self.forcing.eval(t));
                let res = &self.d * &dx - &self.m * &x - &f;
                res.norm() / (dn * dx.norm() + mn * x.norm() + f.norm()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// `max_t ||D xi' - M xi - f|| / (1 + ||xi||)`.
    pub fn absolute_residual(&self, xi: &Signal, times: &[f64]) -> f64 {
        let dxi = xi.derivative(1);
        times
            .iter()
            .map(|&t| {
                let (x, dx, f) = (xi.eval(t), dxi.eval(t), self.forcing.eval(t));
                (&self.d * &dx - &self.m * &x - &f).norm() / (1.0 + x.norm())
            })
            .fold(0.0, f64::max)
    }
}

struct ScaledDecomposition {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    j: DMatrix<f64>,
    nil: DMatrix<f64>,
    index: usize,
    finite_dim: usize,
    shift: f64,
    separation_condition: f64,
}

fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if dim == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q()
}

/// Orthonormal basis of the trailing `dim` right singular vectors of `m`.
fn null_space(m: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let cols = m.ncols();
    // thin SVD of a wide matrix omits the null space; pad it square
    let padded = if m.nrows() < cols { m.clone().resize_vertically(cols, 0.0) } else { m.clone() };
    let vt = linalg::svd(&padded, false, true)?.v_t.expect("v_t requested");
    Ok(vt.rows(cols - dim, dim).transpose())
}

/// Orthonormal basis of `ker K^ν` (`ν` the first power at which the kernel
/// stops growing) and the ranks of `K, K^2, ..., K^ν`. Step `j` finds
/// `ker K^j` as the kernel of `(I - Z Z') K`, `Z` spanning `ker K^(j-1)`.
fn kernel_flag(k: &DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let size = k.nrows();
    let mut z = DMatrix::<f64>::zeros(size, 0);
    let mut ranks = Vec::new();
    loop {
        let step = k - &z * (z.transpose() * k);
        let sv = linalg::singular_values(&step)?;
        let kernel = sv.iter().filter(|&&s| s <= noise).count();
        if kernel <= z.ncols() {
            return Ok((z, ranks));
        }
        if ranks.len() >= size {
            return Err(Error::numerical("weierstrass", "kernel flag of the shifted pencil did not stabilise"));
        }
        z = null_space(&step, kernel)?;
        ranks.push(size - kernel);
    }
}

/// Shift-and-invert construction on the (already equilibrated) pencil.
///
/// With `K = (s0 D - M)^-1 D`, finite eigenvalues `λ` of the pencil map to
/// eigenvalues `1/(s0 - λ)` of `K` and infinite ones to zero. The deflating
/// subspaces are `range(K^ν)` and `ker(K^ν)`, `ν` the nilpotency index.
fn decompose_scaled(d: &DMatrix<f64>, m: &DMatrix<f64>, shift: f64, rng: &mut ChaCha8Rng) -> Result<ScaledDecomposition> {
    let size = d.nrows();
    let shifted = d * shift - m;
    let lu = shifted.clone().lu();
    let k = lu
        .solve(d)
        .ok_or_else(|| Error::numerical("weierstrass", format!("shift {shift:e} is an eigenvalue of the pencil")))?;

    // Kernel flags ker K ⊂ ker K^2 ⊂ ... built one step at a time, so no
    // power of K is ever formed: with eigenvalues of K spread over several
    // decades, K^j would push the slow finite modes below rounding noise.
    let knorm = linalg::spectral_norm(&k);
    let noise = 1e2 * size as f64 * f64::EPSILON * knorm;
    let (v2, ranks) = kernel_flag(&k, noise)?;
    let (left_kernel, _) = kernel_flag(&k.transpose(), noise)?;
    if left_kernel.ncols() != v2.ncols() {
        return Err(Error::numerical(
            "weierstrass",
            format!("left and right infinite subspaces differ in dimension ({} vs {})", left_kernel.ncols(), v2.ncols()),
        ));
    }
    let index = ranks.len();
    let inf_dim = v2.ncols();
    let finite_dim = size - inf_dim;
    // range(K^ν) is the orthogonal complement of ker (K')^ν
    let v1 = null_space(&left_kernel.transpose(), finite_dim)?;
    let v1 = v1 * random_orthogonal(finite_dim, rng);
    let v2 = v2 * random_orthogonal(inf_dim, rng);
    let mut t = DMatrix::zeros(size, size);
    t.columns_mut(0, finite_dim).copy_from(&v1);
    t.columns_mut(finite_dim, inf_dim).copy_from(&v2);
    let separation_condition = linalg::condition_number(&t);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("weierstrass", "deflating subspaces are not complementary"))?;

    let blocks = &t_inv * &k * &t;
    let off = blocks.view((0, finite_dim), (finite_dim, inf_dim)).norm()
        + blocks.view((finite_dim, 0), (inf_dim, finite_dim)).norm();
    let rel = off / blocks.norm().max(f64::MIN_POSITIVE);
    if rel > DECOUPLING_TOL {
        return Err(Error::numerical(
            "weierstrass",
            format!("ill-conditioned decoupling: off-diagonal residual {rel:e}, cond(T) = {separation_condition:e}"),
        ));
    }
    let k1 = blocks.view((0, 0), (finite_dim, finite_dim)).into_owned();
    let k0 = blocks.view((finite_dim, finite_dim), (inf_dim, inf_dim)).into_owned();
    let k1_inv = k1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("weierstrass", "finite block of the shifted pencil is singular"))?;
    let kk = DMatrix::identity(inf_dim, inf_dim) - &k0 * shift;
    let kk_inv = kk
        .try_inverse()
        .ok_or_else(|| Error::numerical("weierstrass", "I - s0 K0 is singular"))?;

    // P = blkdiag(K1^-1, -(I - s0 K0)^-1) T^-1 (s0 D - M)^-1
    let left = lu
        .solve(&DMatrix::identity(size, size))
        .ok_or_else(|| Error::numerical("weierstrass", "shifted pencil is singular"))?;
    let tl = &t_inv * left;
    let mut p = DMatrix::zeros(size, size);
    p.rows_mut(0, finite_dim).copy_from(&(&k1_inv * tl.rows(0, finite_dim)));
    p.rows_mut(finite_dim, inf_dim).copy_from(&(-&kk_inv * tl.rows(finite_dim, inf_dim)));
    let mut q = t;

    // Real Schur forms of both blocks; J and N are then read off the
    // transformed pencil directly.
    if finite_dim > 0 {
        let j0 = p.rows(0, finite_dim) * m * q.columns(0, finite_dim);
        let (u, _) = linalg::schur(&j0)?;
        let p1 = u.transpose() * p.rows(0, finite_dim);
        let q1 = q.columns(0, finite_dim) * &u;
        p.rows_mut(0, finite_dim).copy_from(&p1);
        q.columns_mut(0, finite_dim).copy_from(&q1);
    }
    // Nilpotent part: orthonormal basis adapted to ker N ⊂ ker N^2 ⊂ ...,
    // in which N is block strictly upper triangular.
    let mut level = vec![0usize; inf_dim];
    if inf_dim > 0 {
        let n0 = p.rows(finite_dim, inf_dim) * d * q.columns(finite_dim, inf_dim);
        let mut w = DMatrix::<f64>::zeros(inf_dim, 0);
        let mut npow = DMatrix::identity(inf_dim, inf_dim);
        for (j, &rk) in ranks.iter().enumerate() {
            npow = &n0 * npow;
            let kd = size - rk;
            // ker N^(j+1) ∩ span(W)^⊥ is the null space of [N^(j+1); W']
            let add = kd - w.ncols();
            let mut stacked = DMatrix::zeros(inf_dim + w.ncols(), inf_dim);
            stacked.rows_mut(0, inf_dim).copy_from(&npow);
            stacked.rows_mut(inf_dim, w.ncols()).copy_from(&w.transpose());
            let vt = linalg::svd(&stacked, false, true)?.v_t.expect("v_t requested");
            let cols = vt.rows(inf_dim - add, add).transpose();
            let start = w.ncols();
            w = w.resize_horizontally(start + add, 0.0);
            w.columns_mut(start, add).copy_from(&cols);
            level[start..start + add].fill(j);
        }
        let p2 = w.transpose() * p.rows(finite_dim, inf_dim);
        let q2 = q.columns(finite_dim, inf_dim) * &w;
        p.rows_mut(finite_dim, inf_dim).copy_from(&p2);
        q.columns_mut(finite_dim, inf_dim).copy_from(&q2);
    }
    let j = p.rows(0, finite_dim) * m * q.columns(0, finite_dim);
    let mut nil = p.rows(finite_dim, inf_dim) * d * q.columns(finite_dim, inf_dim);
    for c in 0..inf_dim {
        for r in 0..inf_dim {
            if level[r] >= level[c] {
                nil[(r, c)] = 0.0;
            }
        }
    }
    // A wrong rank decision shows up as a reconstruction defect; reject it
    // so the caller retries with another shift.
    let canon = |s: f64| {
        let mut c = DMatrix::zeros(size, size);
        c.view_mut((0, 0), (finite_dim, finite_dim))
            .copy_from(&(DMatrix::identity(finite_dim, finite_dim) * s - &j));
        c.view_mut((finite_dim, finite_dim), (inf_dim, inf_dim))
            .copy_from(&(&nil * s - DMatrix::identity(inf_dim, inf_dim)));
        c
    };
    for s in [0.0, 1.0] {
        let pencil = d * s - m;
        let defect = (&p * &pencil * &q - canon(s)).norm() / (p.norm() * pencil.norm() * q.norm());
        if !(defect <= RECONSTRUCTION_TOL) {
            return Err(Error::numerical(
                "weierstrass",
                format!("reconstruction defect {defect:e} at s = {s} (shift {shift:e}, {finite_dim} finite eigenvalues)"),
            ));
        }
    }
    Ok(ScaledDecomposition {
        p,
        q,
        j,
        nil,
        index,
        finite_dim,
        shift,
        separation_condition,
    })
}

/// `P (sD - M) Q = blkdiag(sI - J, sN - I)`.
#[derive(Debug, Clone)]
pub struct WeierstrassDecomposition {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Real quasi-triangular (Schur) representative of the finite part.
    pub j: DMatrix<f64>,
    /// Strictly upper triangular nilpotent block.
    pub nil: DMatrix<f64>,
    /// Nilpotency index `ν` of `N` (0 when there is no infinite part).
    pub index: usize,
    /// Number of finite eigenvalues (= degree of `det(sD - M)`).
    pub finite_dim: usize,
    /// Shift used in the construction (scaled units).
    pub shift: f64,
    /// Condition number of the deflating-subspace basis.
    pub separation_condition: f64,
}

impl WeierstrassDecomposition {
    pub fn infinite_dim(&self) -> usize {
        self.nil.nrows()
    }

    /// `||P (sD - M) Q - blkdiag(sI - J, sN - I)||_F / (||P|| ||sD - M|| ||Q||)`.
    pub fn reconstruction_residual(&self, pencil: &OptimalityPencil, s: f64) -> f64 {
        let size = pencil.size();
        let lhs = &self.p * (&pencil.d * s - &pencil.m) * &self.q;
        let mut canon = DMatrix::zeros(size, size);
        let fd = self.finite_dim;
        let id = self.infinite_dim();
        canon
            .view_mut((0, 0), (fd, fd))
            .copy_from(&(DMatrix::identity(fd, fd) * s - &self.j));
        canon
            .view_mut((fd, fd), (id, id))
            .copy_from(&(&self.nil * s - DMatrix::identity(id, id)));
        (lhs - canon).norm() / (self.p.norm() * (&pencil.d * s - &pencil.m).norm() * self.q.norm())
    }

    /// `(f1, f2) = P f` split into dynamic and algebraic parts.
    pub fn transformed_forcing(&self, f: &Signal) -> Result<(Signal, Signal)> {
        let pf = f.left_mul(&self.p)?;
        Ok((pf.rows(0, self.finite_dim), pf.rows(self.finite_dim, self.infinite_dim())))
    }

    /// Algebraic part `xi2 = -sum_{i<ν} N^i f2^(i)` for the original forcing.
    pub fn algebraic_part(&self, f: &Signal) -> Result<Signal> {
        let (_, f2) = self.transformed_forcing(f)?;
        algebraic_solution(&self.nil, self.index, &f2)
    }

    /// The exact turnpike: the unique solution of the optimality DAE that is
    /// bounded on the whole time axis.
    pub fn bounded_particular_solution(&self, pencil: &OptimalityPencil) -> Result<TurnpikeTrajectory> {
        let (f1, f2) = self.transformed_forcing(&pencil.forcing)?;
        let (xi1, w0) = bounded_periodic_solution(&self.j, &f1)?;
        let xi2 = algebraic_solution(&self.nil, self.index, &f2)?;
        let xi = Signal::stack(&[&xi1, &xi2]).left_mul(&self.q)?;
        Ok(TurnpikeTrajectory::from_xi(xi, pencil.states, pencil.inputs, w0))
    }
}

/// `-sum_{i=0}^{ν-1} N^i f^(i)`; powers at or beyond the nilpotency index
/// vanish.
pub fn algebraic_solution(nil: &DMatrix<f64>, index: usize, f2: &Signal) -> Result<Signal> {
    let dim = nil.nrows();
    if f2.dim() != dim {
        return Err(Error::Signal(format!(
            "algebraic forcing has dimension {} but N is {dim}x{dim}",
            f2.dim()
        )));
    }
    let mut acc = Signal::zeros(dim);
    let mut power = DMatrix::identity(dim, dim);
    for i in 0..index {
        acc = acc.add(&f2.derivative(i).left_mul(&power)?)?;
        power = &power * nil;
    }
    Ok(acc.scale(-1.0))
}

/// Bounded solution of `z' = J z + f` for a trigonometric polynomial `f`,
/// computed harmonic by harmonic as `z_k = (i k w0 I - J)^-1 f_k`. Returns
/// the solution and the base frequency used.
pub fn bounded_periodic_solution(j: &DMatrix<f64>, f: &Signal) -> Result<(Signal, Option<f64>)> {
    let dim = j.nrows();
    if dim == 0 {
        return Ok((Signal::zeros(0), f.base_frequency()));
    }
    if !f.is_trigonometric() {
        return Err(Error::Signal(
            "dynamic forcing must be a trigonometric polynomial plus constant to admit a bounded solution".into(),
        ));
    }
    let w0 = f.base_frequency();
    let comps = f.fourier_components(w0.unwrap_or(1.0))?;
    let jc = linalg::to_complex(j);
    let mut harmonics: Vec<(i64, CVector)> = Vec::new();
    for (k, fk) in comps.into_iter().filter(|(k, _)| *k >= 0) {
        let iw = Complex::new(0.0, k as f64 * w0.unwrap_or(0.0));
        let sys: CMatrix = CMatrix::identity(dim, dim) * iw - &jc;
        let sv = linalg::complex_singular_values(&sys)?;
        let inv_norm = 1.0 / sv.min();
        if !(inv_norm <= RESONANCE_LIMIT) {
            return Err(Error::Resonance { harmonic: k, norm: inv_norm });
        }
        let z = sys
            .lu()
            .solve(&fk)
            .ok_or(Error::Resonance { harmonic: k, norm: f64::INFINITY })?;
        harmonics.push((k, z));
    }
    Ok((Signal::from_harmonics(dim, w0.unwrap_or(1.0), &harmonics), w0))
}

/// Closed-form turnpike triple `(x, λ, u)`.
#[derive(Debug, Clone)]
pub struct TurnpikeTrajectory {
    pub xi: Signal,
    pub x: Signal,
    pub lambda: Signal,
    pub u: Signal,
    /// Base angular frequency of the periodic turnpike, `None` if constant.
    pub base_frequency: Option<f64>,
}

impl TurnpikeTrajectory {
    pub fn from_xi(xi: Signal, n: usize, m: usize, base_frequency: Option<f64>) -> Self {
        TurnpikeTrajectory {
            x: xi.rows(0, n),
            lambda: xi.rows(n, n),
            u: xi.rows(2 * n, m),
            xi,
            base_frequency,
        }
    }

    pub fn period(&self) -> Option<f64> {
        self.base_frequency.map(|w| std::f64::consts::TAU / w)
    }

    /// `min_t` distance of `u(t)` to the boundary of `U` over `samples`
    /// uniformly spaced points of `[0, horizon]`; negative if outside.
    pub fn interiority_margin(&self, bounds: &InputBox, horizon: f64, samples: usize) -> f64 {
        uniform(0.0, horizon, samples)
            .map(|t| bounds.margin(&self.u.eval(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_t min(||u_min - u(t)||, ||u_max - u(t)||)`.
    pub fn epsilon_hat(&self, bounds: &InputBox, horizon: f64, samples: usize) -> f64 {
        uniform(0.0, horizon, samples)
            .map(|t| {
                let u = self.u.eval(t);
                (&bounds.lower - &u).norm().min((&bounds.upper - &u).norm())
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_t ||S x + B' λ + p||_inf` scaled by `1 + max_t ||(S x, B' λ, p)||_inf`:
    /// the last block row of the optimality DAE.
    pub fn switching_residual(&self, pencil: &OptimalityPencil, times: &[f64]) -> f64 {
        let (n, m) = (pencil.states, pencil.inputs);
        let rows = pencil.m.view((2 * n, 0), (m, 2 * n)).into_owned();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for &t in times {
            let xi = self.xi.eval(t);
            let lin = &rows * xi.rows(0, 2 * n);
            let p = pencil.forcing.eval(t).rows(2 * n, m).into_owned();
            worst = worst.max((&lin + &p).amax());
            scale = scale.max(lin.amax()).max(p.amax());
        }
        worst / (1.0 + scale)
    }
}

pub(crate) fn uniform(t0: f64, t1: f64, samples: usize) -> impl Iterator<Item = f64> {
    let n = samples.max(2);
    (0..n).map(move |i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, NetworkGraph, Vertex, VertexRole};

    fn scalar_pencil(q: f64, s: f64) -> OptimalityPencil {
        let graph = NetworkGraph {
            vertices: vec![Vertex {
                id: "a".into(),
                mass: 1.0,
                loss: 1.0,
                role: VertexRole::Producer,
            }],
            edges: vec![],
        };
        let model = graph.assemble_model().unwrap();
        let cost = CostData {
            q: DMatrix::from_element(1, 1, q),
            s: DMatrix::from_element(1, 1, s),
            r: Signal::zeros(1),
            p: Signal::zeros(1),
        };
        build_pencil(&model, &cost, &Signal::zeros(0)).unwrap()
    }

    fn raw_pencil(d: DMatrix<f64>, m: DMatrix<f64>) -> OptimalityPencil {
        let size = d.nrows();
        OptimalityPencil {
            d,
            m,
            forcing: Signal::zeros(size),
            states: 0,
            inputs: 0,
        }
    }

    #[test]
    fn scalar_pencil_blocks() {
        let (q, s) = (2.5, 0.7);
        let p = scalar_pencil(q, s);
        let expected = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 1.0, -q, 1.0, -s, s, 1.0, 0.0]);
        assert_eq!(p.m, expected);
        assert_eq!(p.d, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
    }

    #[test]
    fn regularity_examples() {
        let ode = raw_pencil(DMatrix::identity(3, 3), DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64));
        assert!(ode.check_regularity(1).regular);
        let zero = raw_pencil(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        assert!(!zero.check_regularity(1).regular);
        // det(sD - M) = q + 2 s for the scalar problem with A = -1, B = 1
        assert!(scalar_pencil(1.0, 1.0).check_regularity(3).regular);
        let singular = scalar_pencil(-2.0, 1.0);
        let report = singular.check_regularity(3);
        assert!(!report.regular, "{:?}", report.ratios);
        assert!(matches!(singular.weierstrass(3), Err(Error::IrregularPencil { .. })));
    }

    #[test]
    fn scalar_problem_determinant_matches_elimination() {
        // Expanding det(sD - M) by hand gives the constant q + 2 s.
        let (q, s) = (3.0, 0.25);
        let p = scalar_pencil(q, s);
        for z in [Complex::new(0.3, 0.1), Complex::new(-2.0, 1.0)] {
            let det = linalg::complex_det(&(linalg::to_complex(&p.d) * z - linalg::to_complex(&p.m)));
            assert!((det - Complex::new(q + 2.0 * s, 0.0)).norm() < 1e-12);
        }
        let w = p.weierstrass(5).unwrap();
        assert_eq!(w.finite_dim, 0);
        // u enters only after two differentiations of S x + λ + p = 0
        assert_eq!(w.index, 3);
        assert!(w.nil.pow(3).amax() < 1e-12 && w.nil.pow(2).amax() > 1e-6);
        for s in [0.1, -1.7, 3.0] {
            let res = w.reconstruction_residual(&p, s);
            assert!(res < 1e-12, "{res:e} {} {}", w.nil, w.p);
        }
    }

    #[test]
    fn pure_ode_pencil() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -0.5, -3.0]);
        let p = raw_pencil(DMatrix::identity(2, 2), a.clone());
        let w = p.weierstrass(0).unwrap();
        assert_eq!(w.infinite_dim(), 0);
        assert_eq!(w.index, 0);
        let mut e1: Vec<f64> = linalg::complex_eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        let mut e2: Vec<f64> = linalg::complex_eigenvalues(&w.j).unwrap().iter().map(|z| z.re).collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (x, y) in e1.iter().zip(&e2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_pencil() {
        // blkdiag(s - 1, s*0 - 1)
        let p = raw_pencil(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            DMatrix::identity(2, 2),
        );
        let w = p.weierstrass(2).unwrap();
        assert_eq!((w.finite_dim, w.index), (1, 1));
        assert!((w.j[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(w.nil, DMatrix::zeros(1, 1));
    }

    #[test]
    fn algebraic_examples() {
        let c = DVector::from_vec(vec![2.0, -1.0]);
        let x = algebraic_solution(&DMatrix::zeros(2, 2), 1, &Signal::constant(c.clone())).unwrap();
        assert_eq!(x.eval(0.7), -c);
        let x = algebraic_solution(&DMatrix::zeros(2, 2), 1, &Signal::zeros(2)).unwrap();
        assert_eq!(x, Signal::zeros(2));

        // index-2 block N = [0 1; 0 0] with f2 = (sin t, sin t):
        // xi2 = -(sin t + cos t, sin t), and N xi2' = xi2 + f2.
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let f2 = Signal::sinusoid(DVector::from_element(2, 1.0), 1.0, 0.0);
        let xi2 = algebraic_solution(&nil, 2, &f2).unwrap();
        let dxi2 = xi2.derivative(1);
        for i in 0..20 {
            let t = 0.37 * i as f64;
            let expected = DVector::from_vec(vec![-(t.sin() + t.cos()), -t.sin()]);
            assert!((xi2.eval(t) - expected).amax() < 1e-14);
            let res = &nil * dxi2.eval(t) - xi2.eval(t) - f2.eval(t);
            assert!(res.amax() <= 1e-10);
        }
    }

    #[test]
    fn bounded_solution_of_unstable_scalar_ode() {
        // z' = z + sin t has the bounded solution -(sin t + cos t)/2
        let j = DMatrix::from_element(1, 1, 1.0);
        let f = Signal::sinusoid(DVector::from_element(1, 1.0), 1.0, 0.0);
        let (z, w0) = bounded_periodic_solution(&j, &f).unwrap();
        assert_eq!(w0, Some(1.0));
        let dz = z.derivative(1);
        for i in 0..50 {
            let t = -10.0 + 0.5 * i as f64;
            assert!((z.eval(t)[0] + 0.5 * (t.sin() + t.cos())).abs() < 1e-14);
            assert!((dz.eval(t)[0] - z.eval(t)[0] - t.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn resonance_detected() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let f = Signal::sinusoid(DVector::from_element(2, 1.0), 1.0, 0.0);
        assert!(matches!(bounded_periodic_solution(&j, &f), Err(Error::Resonance { harmonic: 1, .. })));
    }

    #[test]
    fn constant_forcing_gives_steady_state() {
        // two-cycle network with a producer and a consumer, constant data
        let graph = NetworkGraph {
            vertices: vec![
                Vertex { id: "1".into(), mass: 1.0, loss: 1.0, role: VertexRole::Producer },
                Vertex { id: "2".into(), mass: 1.0, loss: 2.0, role: VertexRole::Consumer },
            ],
            edges: vec![
                Edge { from: "1".into(), to: "2".into(), flow: 1.0 },
                Edge { from: "2".into(), to: "1".into(), flow: 1.0 },
            ],
        };
        let model = graph.assemble_model().unwrap();
        let q = DMatrix::identity(2, 2) * 10.0;
        let xn = DVector::from_vec(vec![1.0, 0.8]);
        let cost = CostData {
            r: Signal::constant(-(&q * &xn)),
            q,
            s: model.b.transpose(),
            p: Signal::constant(DVector::from_element(1, 0.3)),
        };
        let d = Signal::constant(DVector::from_element(1, -0.5));
        let pencil = build_pencil(&model, &cost, &d).unwrap();
        let w = pencil.weierstrass(11).unwrap();
        let tp = w.bounded_particular_solution(&pencil).unwrap();
        let f = pencil.forcing.eval(0.0);
        let steady = pencil.m.clone().lu().solve(&(-f)).unwrap();
        let got = tp.xi.eval(1.3);
        assert!((&got - &steady).norm() <= 1e-9 * steady.norm(), "{got} vs {steady}");
    }
}
