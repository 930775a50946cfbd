//! Box-constrained quadratic programs
//!
//! ```text
//! min 1/2 u'Hu + g'u   s.t.  l <= u <= h
//! ```
//!
//! solved by a projected Newton method: Newton steps on the free variables,
//! variables with a binding bound moved onto it, and an exact minimisation of
//! the objective along the projected search path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const KKT_TOL: f64 = 1e-9;
/// Number of deterministic restarts when the reduced Hessian is indefinite.
pub const RESTARTS: usize = 8;

#[derive(Debug, Clone)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// `1/2 u'Hu + g'u` (no constant).
    pub value: f64,
    /// `Hu + g`; positive entries at the lower bound, negative at the upper.
    pub gradient: DVector<f64>,
    pub iterations: usize,
    /// `||u - P(u - D^-1 grad)||_inf`, `D = diag(|H_ii|)`.
    pub kkt_residual: f64,
    /// Smallest eigenvalue of `H` restricted to the free variables.
    pub reduced_min_eig: f64,
    /// Per variable: -1 at lower bound, +1 at upper bound, 0 free.
    pub active: Vec<i8>,
    pub nonconvex: bool,
    pub restarts: usize,
}

impl BoxQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u)
    }

    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Diagonal scaling of the gradient: `|H_ii|`, or the largest diagonal
    /// magnitude where that vanishes.
    fn diagonal_scale(&self) -> DVector<f64> {
        let top = self.h.diagonal().amax().max(f64::MIN_POSITIVE);
        DVector::from_fn(self.dim(), |i, _| {
            let d = self.h[(i, i)].abs();
            if d > 1e-12 * top {
                d
            } else {
                top
            }
        })
    }

    /// `||u - P(u - D^-1 grad)||_inf`: a KKT measure in the units of `u`.
    fn projected_gradient(&self, u: &DVector<f64>, grad: &DVector<f64>, scale: &DVector<f64>) -> f64 {
        (0..u.len())
            .map(|i| (u[i] - (u[i] - grad[i] / scale[i]).clamp(self.lower[i], self.upper[i])).abs())
            .fold(0.0, f64::max)
    }

    /// Tolerance on the scaled projected gradient.
    fn tolerance(&self) -> f64 {
        let width = (&self.upper - &self.lower).amax();
        let size = self.lower.amax().max(self.upper.amax());
        KKT_TOL * width.max(size).max(f64::MIN_POSITIVE)
    }

    /// Solves from the box midpoint; on an indefinite reduced Hessian the
    /// solve is repeated from seeded random starts and the best point kept.
    pub fn solve(&self, seed: u64) -> Result<QpSolution> {
        let mid = (&self.lower + &self.upper) * 0.5;
        let mut best = self.solve_from(mid)?;
        if best.reduced_min_eig > 0.0 {
            return Ok(best);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RESTARTS {
            let start = DVector::from_fn(self.dim(), |i, _| {
                if self.upper[i] > self.lower[i] {
                    rng.random_range(self.lower[i]..=self.upper[i])
                } else {
                    self.lower[i]
                }
            });
            let cand = self.solve_from(start)?;
            if cand.value < best.value {
                best = cand;
            }
        }
        best.nonconvex = true;
        best.restarts = RESTARTS;
        Ok(best)
    }

    pub fn solve_from(&self, start: DVector<f64>) -> Result<QpSolution> {
        let n = self.dim();
        if n == 0 {
            return Ok(QpSolution {
                u: DVector::zeros(0),
                value: 0.0,
                gradient: DVector::zeros(0),
                iterations: 0,
                kkt_residual: 0.0,
                reduced_min_eig: f64::INFINITY,
                active: Vec::new(),
                nonconvex: false,
                restarts: 0,
            });
        }
        let tol = self.tolerance();
        let scale = self.diagonal_scale();
        let mut u = self.project(&start);
        let mut grad = &self.h * &u + &self.g;
        let mut nonconvex = false;
        let mut iterations = 0;
        loop {
            let res = self.projected_gradient(&u, &grad, &scale);
            if res <= tol {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: res,
                });
            }
            iterations += 1;

            // Variables within `eps` of a bound with the gradient pushing
            // outwards are fixed onto that bound for this step.
            let eps = res.min(1e-3 * (&self.upper - &self.lower).amax());
            let mut dir = DVector::zeros(n);
            let mut free = Vec::with_capacity(n);
            for i in 0..n {
                if u[i] - self.lower[i] <= eps && grad[i] > 0.0 {
                    dir[i] = self.lower[i] - u[i];
                } else if self.upper[i] - u[i] <= eps && grad[i] < 0.0 {
                    dir[i] = self.upper[i] - u[i];
                } else {
                    free.push(i);
                }
            }
            if !free.is_empty() {
                let rhs = DVector::from_fn(free.len(), |k, _| {
                    let i = free[k];
                    -(grad[i] + (0..n).map(|j| self.h[(i, j)] * dir[j]).sum::<f64>())
                });
                let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| self.h[(free[a], free[b])]);
                let (step, pd) = newton_step(&hff, &rhs);
                nonconvex |= !pd;
                for (k, &i) in free.iter().enumerate() {
                    dir[i] = step[k];
                }
            }
            let (next, moved) = self.path_search(&u, &grad, &dir);
            u = next;
            grad = &self.h * &u + &self.g;
            if !moved {
                // Newton direction failed to descend: fall back to steepest
                // descent along the projected path.
                let sd = -&grad;
                let (next, moved) = self.path_search(&u, &grad, &sd);
                if !moved {
                    break;
                }
                u = next;
                grad = &self.h * &u + &self.g;
            }
        }
        let res = self.projected_gradient(&u, &grad, &scale);
        let active: Vec<i8> = (0..n)
            .map(|i| {
                if u[i] <= self.lower[i] && grad[i] >= 0.0 {
                    -1
                } else if u[i] >= self.upper[i] && grad[i] <= 0.0 {
                    1
                } else {
                    0
                }
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| active[i] == 0).collect();
        let reduced_min_eig = if free.is_empty() {
            f64::INFINITY
        } else {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| self.h[(free[a], free[b])]);
            crate::linalg::symmetric_eigenvalues(&hff)?.min()
        };
        Ok(QpSolution {
            value: self.value(&u),
            u,
            gradient: grad,
            iterations,
            kkt_residual: res,
            reduced_min_eig,
            active,
            nonconvex: nonconvex || reduced_min_eig <= 0.0,
            restarts: 0,
        })
    }

    /// First local minimiser of `q(P(u + a d))` over `a in [0, 1]`. The
    /// path is piecewise linear, so each segment is minimised in closed form.
    /// Returns the new point and whether the objective decreased.
    fn path_search(&self, u: &DVector<f64>, grad: &DVector<f64>, dir: &DVector<f64>) -> (DVector<f64>, bool) {
        let n = u.len();
        let mut x = u.clone();
        let mut p = dir.clone();
        let mut breaks: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            let t = if p[i] > 0.0 {
                (self.upper[i] - x[i]) / p[i]
            } else if p[i] < 0.0 {
                (self.lower[i] - x[i]) / p[i]
            } else {
                continue;
            };
            if t <= 0.0 {
                p[i] = 0.0;
            } else if t < 1.0 {
                breaks.push((t, i));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut hp = &self.h * &p;
        let mut gr = grad.clone();
        let mut t_prev = 0.0;
        let mut k = 0;
        let mut stop = None;
        loop {
            let t_next = if k < breaks.len() { breaks[k].0 } else { 1.0 };
            let span = t_next - t_prev;
            let f1 = gr.dot(&p);
            let f2 = p.dot(&hp);
            if f1 >= 0.0 {
                stop = Some(0.0);
            } else if f2 > 0.0 && -f1 / f2 < span {
                stop = Some(-f1 / f2);
            }
            if let Some(a) = stop {
                x.axpy(a, &p, 1.0);
                break;
            }
            x.axpy(span, &p, 1.0);
            gr.axpy(span, &hp, 1.0);
            if k >= breaks.len() {
                break;
            }
            // clamp every component reaching its bound at this breakpoint
            while k < breaks.len() && breaks[k].0 <= t_next {
                let i = breaks[k].1;
                x[i] = if p[i] > 0.0 { self.upper[i] } else { self.lower[i] };
                let pi = p[i];
                if pi != 0.0 {
                    hp.axpy(-pi, &self.h.column(i), 1.0);
                    p[i] = 0.0;
                }
                k += 1;
            }
            t_prev = t_next;
        }
        let x = self.project(&x);
        let moved = self.value(&x) < self.value(u);
        (if moved { x } else { u.clone() }, moved)
    }
}

/// Newton step `H d = r`. On a non positive definite `H` a multiple of the
/// identity is added until the Cholesky factorisation succeeds; the flag
/// reports whether `H` itself was positive definite.
fn newton_step(h: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = h.clone().cholesky() {
        let mut d = ch.solve(rhs);
        // one step of iterative refinement for the ill-conditioned singular
        // directions
        let r = rhs - h * &d;
        d += ch.solve(&r);
        return (d, true);
    }
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let mut shift = 1e-10 * scale;
    loop {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * shift;
        if let Some(ch) = shifted.cholesky() {
            return (ch.solve(rhs), false);
        }
        shift *= 10.0;
    }
}
