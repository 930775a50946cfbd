//! Closed-form vector signals with exact derivatives.
//!
//! A [`Signal`] is a finite sum of constant, monomial, sinusoidal and
//! exponential terms. The class is closed under differentiation and under
//! left multiplication by constant matrices, which is all the turnpike
//! construction needs.

use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVector;

/// Relative tolerance for deciding that two frequencies are commensurate.
pub const FREQ_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Constant(DVector<f64>),
    /// `coeff * t^power`, `power >= 1`.
    Monomial { power: u32, coeff: DVector<f64> },
    /// `sin * sin(omega t) + cos * cos(omega t)` componentwise, `omega > 0`.
    Sinusoid {
        omega: f64,
        sin: DVector<f64>,
        cos: DVector<f64>,
    },
    /// `coeff * exp(rate t)`, `rate != 0`.
    Exponential { rate: f64, coeff: DVector<f64> },
}

impl Term {
    fn dim(&self) -> usize {
        match self {
            Term::Constant(c) => c.len(),
            Term::Monomial { coeff, .. } | Term::Exponential { coeff, .. } => coeff.len(),
            Term::Sinusoid { sin, .. } => sin.len(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Term::Constant(c) => c.iter().all(|v| *v == 0.0),
            Term::Monomial { coeff, .. } | Term::Exponential { coeff, .. } => {
                coeff.iter().all(|v| *v == 0.0)
            }
            Term::Sinusoid { sin, cos, .. } => sin.iter().chain(cos.iter()).all(|v| *v == 0.0),
        }
    }

    fn map_coeffs(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Term {
        match self {
            Term::Constant(c) => Term::Constant(f(c)),
            Term::Monomial { power, coeff } => Term::Monomial {
                power: *power,
                coeff: f(coeff),
            },
            Term::Sinusoid { omega, sin, cos } => Term::Sinusoid {
                omega: *omega,
                sin: f(sin),
                cos: f(cos),
            },
            Term::Exponential { rate, coeff } => Term::Exponential {
                rate: *rate,
                coeff: f(coeff),
            },
        }
    }

    fn derivative(&self) -> Option<Term> {
        match self {
            Term::Constant(_) => None,
            Term::Monomial { power, coeff } => {
                let c = coeff * f64::from(*power);
                if *power == 1 {
                    Some(Term::Constant(c))
                } else {
                    Some(Term::Monomial {
                        power: power - 1,
                        coeff: c,
                    })
                }
            }
            // d/dt (a sin + b cos) = -w b sin + w a cos
            Term::Sinusoid { omega, sin, cos } => Some(Term::Sinusoid {
                omega: *omega,
                sin: cos * -omega,
                cos: sin * *omega,
            }),
            Term::Exponential { rate, coeff } => Some(Term::Exponential {
                rate: *rate,
                coeff: coeff * *rate,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dim: usize,
    terms: Vec<Term>,
}

impl Signal {
    pub fn zeros(dim: usize) -> Self {
        Signal {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(value: DVector<f64>) -> Self {
        Signal {
            dim: value.len(),
            terms: vec![Term::Constant(value)],
        }
        .simplified()
    }

    /// `amplitude * sin(omega t + phase)`.
    pub fn sinusoid(amplitude: DVector<f64>, omega: f64, phase: f64) -> Self {
        let dim = amplitude.len();
        Signal::from_terms(
            dim,
            vec![Term::Sinusoid {
                omega,
                sin: &amplitude * phase.cos(),
                cos: &amplitude * phase.sin(),
            }],
        )
        .expect("dimensions agree")
    }

    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            if t.dim() != dim {
                return Err(Error::Signal(format!(
                    "term of dimension {} in signal of dimension {dim}",
                    t.dim()
                )));
            }
            let t = match t {
                Term::Monomial { power: 0, coeff } => Term::Constant(coeff),
                Term::Exponential { rate, coeff } if rate == 0.0 => Term::Constant(coeff),
                Term::Sinusoid { omega, sin, cos } if omega < 0.0 => Term::Sinusoid {
                    omega: -omega,
                    sin: -sin,
                    cos,
                },
                Term::Sinusoid { omega, cos, .. } if omega == 0.0 => Term::Constant(cos),
                t => t,
            };
            out.push(t);
        }
        Ok(Signal { dim, terms: out }.simplified())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Merges like terms and drops zero terms.
    fn simplified(self) -> Self {
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for term in self.terms {
            let slot = merged.iter_mut().find(|m| match (&**m, &term) {
                (Term::Constant(_), Term::Constant(_)) => true,
                (Term::Monomial { power: p, .. }, Term::Monomial { power: q, .. }) => p == q,
                (Term::Sinusoid { omega: a, .. }, Term::Sinusoid { omega: b, .. }) => a == b,
                (Term::Exponential { rate: a, .. }, Term::Exponential { rate: b, .. }) => a == b,
                _ => false,
            });
            match slot {
                None => merged.push(term),
                Some(slot) => match (slot, term) {
                    (Term::Constant(a), Term::Constant(b)) => *a += b,
                    (Term::Monomial { coeff: a, .. }, Term::Monomial { coeff: b, .. })
                    | (Term::Exponential { coeff: a, .. }, Term::Exponential { coeff: b, .. }) => {
                        *a += b
                    }
                    (
                        Term::Sinusoid { sin: a, cos: c, .. },
                        Term::Sinusoid { sin: b, cos: d, .. },
                    ) => {
                        *a += b;
                        *c += d;
                    }
                    _ => unreachable!(),
                },
            }
        }
        merged.retain(|t| !t.is_zero());
        Signal {
            dim: self.dim,
            terms: merged,
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for term in &self.terms {
            match term {
                Term::Constant(c) => out += c,
                Term::Monomial { power, coeff } => out.axpy(t.powi(*power as i32), coeff, 1.0),
                Term::Sinusoid { omega, sin, cos } => {
                    let (s, c) = (omega * t).sin_cos();
                    out.axpy(s, sin, 1.0);
                    out.axpy(c, cos, 1.0);
                }
                Term::Exponential { rate, coeff } => out.axpy((rate * t).exp(), coeff, 1.0),
            }
        }
        out
    }

    /// Exact derivative of the given order.
    pub fn derivative(&self, order: usize) -> Signal {
        let mut s = self.clone();
        for _ in 0..order {
            s = Signal {
                dim: s.dim,
                terms: s.terms.iter().filter_map(Term::derivative).collect(),
            }
            .simplified();
        }
        s
    }

    pub fn scale(&self, factor: f64) -> Signal {
        Signal {
            dim: self.dim,
            terms: self.terms.iter().map(|t| t.map_coeffs(|c| c * factor)).collect(),
        }
        .simplified()
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        if self.dim != other.dim {
            return Err(Error::Signal(format!(
                "cannot add signals of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Signal {
            dim: self.dim,
            terms,
        }
        .simplified())
    }

    /// `matrix * signal`.
    pub fn left_mul(&self, matrix: &DMatrix<f64>) -> Result<Signal> {
        if matrix.ncols() != self.dim {
            return Err(Error::Signal(format!(
                "matrix with {} columns applied to signal of dimension {}",
                matrix.ncols(),
                self.dim
            )));
        }
        Ok(Signal {
            dim: matrix.nrows(),
            terms: self.terms.iter().map(|t| t.map_coeffs(|c| matrix * c)).collect(),
        }
        .simplified())
    }

    /// Components `[start, start + len)` as a signal.
    pub fn rows(&self, start: usize, len: usize) -> Signal {
        Signal {
            dim: len,
            terms: self
                .terms
                .iter()
                .map(|t| t.map_coeffs(|c| c.rows(start, len).into_owned()))
                .collect(),
        }
        .simplified()
    }

    /// Stacks signals vertically.
    pub fn stack(parts: &[&Signal]) -> Signal {
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut terms = Vec::new();
        let mut offset = 0;
        for p in parts {
            for t in &p.terms {
                terms.push(t.map_coeffs(|c| {
                    let mut v = DVector::zeros(dim);
                    v.rows_mut(offset, p.dim).copy_from(c);
                    v
                }));
            }
            offset += p.dim;
        }
        Signal { dim, terms }.simplified()
    }

    /// Bounded on `[0, inf)`: no growing monomials or exponentials.
    pub fn is_bounded(&self) -> bool {
        self.terms.iter().all(|t| match t {
            Term::Monomial { .. } => false,
            Term::Exponential { rate, .. } => *rate < 0.0,
            _ => true,
        })
    }

    /// Upper bound on `sup_{t >= 0} ||s(t)||`, infinite for unbounded signals.
    pub fn sup_norm_bound(&self) -> f64 {
        if !self.is_bounded() {
            return f64::INFINITY;
        }
        self.terms
            .iter()
            .map(|t| match t {
                Term::Constant(c) => c.norm(),
                Term::Sinusoid { sin, cos, .. } => (sin.norm_squared() + cos.norm_squared()).sqrt(),
                Term::Exponential { coeff, .. } => coeff.norm(),
                Term::Monomial { .. } => f64::INFINITY,
            })
            .sum()
    }

    /// True if the signal is a trigonometric polynomial plus constant.
    pub fn is_trigonometric(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t, Term::Constant(_) | Term::Sinusoid { .. }))
    }

    /// Smallest `w0` such that every sinusoid frequency is an integer
    /// multiple of it (searching `min_freq / j`, `j <= 64`). `None` when the
    /// signal has no sinusoid.
    pub fn base_frequency(&self) -> Option<f64> {
        let freqs: Vec<f64> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                Term::Sinusoid { omega, .. } => Some(*omega),
                _ => None,
            })
            .collect();
        let min = freqs.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return None;
        }
        (1..=64).map(|j| min / j as f64).find(|w0| {
            freqs.iter().all(|w| {
                let k = (w / w0).round();
                (w - k * w0).abs() <= FREQ_RTOL * w
            })
        })
    }

    /// Exact complex-exponential decomposition
    /// `s(t) = sum_k c_k exp(i k w0 t)` for a trigonometric polynomial whose
    /// frequencies are integer multiples of `w0`. Harmonics are returned in
    /// increasing `k`, including negative indices.
    pub fn fourier_components(&self, w0: f64) -> Result<Vec<(i64, CVector)>> {
        let mut bad = Vec::new();
        let mut comps: Vec<(i64, CVector)> = Vec::new();
        let mut push = |k: i64, v: CVector| match comps.iter_mut().find(|(j, _)| *j == k) {
            Some((_, c)) => *c += v,
            None => comps.push((k, v)),
        };
        let cplx = |v: &DVector<f64>, re: f64, im: f64| v.map(|x| Complex::new(re * x, im * x));
        for (i, t) in self.terms.iter().enumerate() {
            match t {
                Term::Constant(c) => push(0, cplx(c, 1.0, 0.0)),
                Term::Sinusoid { omega, sin, cos } => {
                    let k = (omega / w0).round();
                    if k < 1.0 || (omega - k * w0).abs() > FREQ_RTOL * omega {
                        bad.push(format!("term {i}: omega {omega:e} is not a multiple of {w0:e}"));
                        continue;
                    }
                    let k = k as i64;
                    // a sin + b cos = (b - i a)/2 e^{i k w t} + (b + i a)/2 e^{-i k w t}
                    let plus = cos.zip_map(sin, |b, a| Complex::new(0.5 * b, -0.5 * a));
                    let minus = plus.map(|z| z.conj());
                    push(k, plus);
                    push(-k, minus);
                }
                Term::Monomial { power, .. } => bad.push(format!("term {i}: monomial t^{power}")),
                Term::Exponential { rate, .. } => bad.push(format!("term {i}: exponential rate {rate:e}")),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Signal(format!(
                "not a trigonometric polynomial with base frequency {w0:e}: {}",
                bad.join("; ")
            )));
        }
        comps.sort_by_key(|(k, _)| *k);
        Ok(comps)
    }

    /// Real signal `Re(c_0) + sum_{k>0} 2 Re(c_k exp(i k w0 t))` built from
    /// one-sided harmonics `(k, c_k)`, `k >= 0`.
    pub fn from_harmonics(dim: usize, w0: f64, harmonics: &[(i64, CVector)]) -> Signal {
        let mut terms = Vec::new();
        for (k, c) in harmonics {
            if *k == 0 {
                terms.push(Term::Constant(c.map(|z| z.re)));
            } else if *k > 0 {
                terms.push(Term::Sinusoid {
                    omega: *k as f64 * w0,
                    sin: c.map(|z| -2.0 * z.im),
                    cos: c.map(|z| 2.0 * z.re),
                });
            }
        }
        Signal::from_terms(dim, terms).expect("harmonic dimensions agree")
    }

    /// Linear exosystem `eta' = S eta`, `s(t) = C eta(t)` reproducing the
    /// signal exactly. Returns `(S, C)`; the state at time `t` is
    /// [`Signal::exo_state`].
    pub fn exosystem(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.exo_dim();
        let mut s = DMatrix::zeros(q, q);
        let mut c = DMatrix::zeros(self.dim, q);
        let mut o = 0;
        for t in &self.terms {
            match t {
                Term::Constant(v) => {
                    c.column_mut(o).copy_from(v);
                    o += 1;
                }
                // eta_j = t^j / j!, j = 0..=k
                Term::Monomial { power, coeff } => {
                    let k = *power as usize;
                    for j in 1..=k {
                        s[(o + j, o + j - 1)] = 1.0;
                    }
                    let fact: f64 = (1..=k).map(|j| j as f64).product();
                    c.column_mut(o + k).copy_from(&(coeff * fact));
                    o += k + 1;
                }
                Term::Sinusoid { omega, sin, cos } => {
                    s[(o, o + 1)] = *omega;
                    s[(o + 1, o)] = -omega;
                    c.column_mut(o).copy_from(sin);
                    c.column_mut(o + 1).copy_from(cos);
                    o += 2;
                }
                Term::Exponential { rate, coeff } => {
                    s[(o, o)] = *rate;
                    c.column_mut(o).copy_from(coeff);
                    o += 1;
                }
            }
        }
        (s, c)
    }

    pub fn exo_dim(&self) -> usize {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Constant(_) | Term::Exponential { .. } => 1,
                Term::Monomial { power, .. } => *power as usize + 1,
                Term::Sinusoid { .. } => 2,
            })
            .sum()
    }

    pub fn exo_state(&self, t: f64) -> DVector<f64> {
        let mut eta = DVector::zeros(self.exo_dim());
        let mut o = 0;
        for term in &self.terms {
            match term {
                Term::Constant(_) => {
                    eta[o] = 1.0;
                    o += 1;
                }
                Term::Monomial { power, .. } => {
                    let mut v = 1.0;
                    for j in 0..=*power as usize {
                        if j > 0 {
                            v *= t / j as f64;
                        }
                        eta[o + j] = v;
                    }
                    o += *power as usize + 1;
                }
                Term::Sinusoid { omega, .. } => {
                    let (s, c) = (omega * t).sin_cos();
                    eta[o] = s;
                    eta[o + 1] = c;
                    o += 2;
                }
                Term::Exponential { rate, .. } => {
                    eta[o] = (rate * t).exp();
                    o += 1;
                }
            }
        }
        eta
    }
}

/// Scalar or per-component value in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ValueSpec {
    pub fn to_vector(&self, dim: usize, path: &str) -> Result<DVector<f64>> {
        match self {
            ValueSpec::Scalar(v) => Ok(DVector::from_element(dim, *v)),
            ValueSpec::Vector(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
            ValueSpec::Vector(v) => Err(Error::validation(
                path,
                format!("expected {dim} components, got {}", v.len()),
            )),
        }
    }
}

/// One term of a signal as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TermSpec {
    Const {
        value: ValueSpec,
    },
    Sin {
        amplitude: ValueSpec,
        period_s: f64,
        #[serde(default)]
        phase_rad: ValueSpec0,
    },
    /// `sum_j coeffs[j] t^j`.
    Poly {
        coeffs: Vec<ValueSpec>,
    },
    Exp {
        amplitude: ValueSpec,
        rate_per_s: f64,
    },
}

/// Phase defaulting to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueSpec0(pub ValueSpec);

impl Default for ValueSpec0 {
    fn default() -> Self {
        ValueSpec0(ValueSpec::Scalar(0.0))
    }
}

/// Builds a signal of dimension `dim` from scenario-file terms.
pub fn signal_from_spec(terms: &[TermSpec], dim: usize, path: &str) -> Result<Signal> {
    let mut out = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        let p = format!("{path}/{i}");
        match t {
            TermSpec::Const { value } => {
                out.push(Term::Constant(value.to_vector(dim, &format!("{p}/value"))?))
            }
            TermSpec::Sin {
                amplitude,
                period_s,
                phase_rad,
            } => {
                if !(period_s.is_finite() && *period_s > 0.0) {
                    return Err(Error::validation(format!("{p}/period_s"), "period must be positive"));
                }
                let amp = amplitude.to_vector(dim, &format!("{p}/amplitude"))?;
                let phase = phase_rad.0.to_vector(dim, &format!("{p}/phase_rad"))?;
                out.push(Term::Sinusoid {
                    omega: TAU / period_s,
                    sin: amp.zip_map(&phase, |a, f| a * f.cos()),
                    cos: amp.zip_map(&phase, |a, f| a * f.sin()),
                });
            }
            TermSpec::Poly { coeffs } => {
                for (j, c) in coeffs.iter().enumerate() {
                    out.push(Term::Monomial {
                        power: j as u32,
                        coeff: c.to_vector(dim, &format!("{p}/coeffs/{j}"))?,
                    });
                }
            }
            TermSpec::Exp {
                amplitude,
                rate_per_s,
            } => out.push(Term::Exponential {
                rate: *rate_per_s,
                coeff: amplitude.to_vector(dim, &format!("{p}/amplitude"))?,
            }),
        }
    }
    Signal::from_terms(dim, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn central_difference(s: &Signal, t: f64, h: f64) -> DVector<f64> {
        (s.eval(t + h) - s.eval(t - h)) / (2.0 * h)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Signal::constant(v(&[5.0])).eval(3.0)[0], 5.0);
        let w = 0.7;
        assert_eq!(Signal::sinusoid(v(&[1.0]), w, 0.0).eval(0.0)[0], 0.0);
        let day = 24.0 * 3600.0;
        let s = Signal::sinusoid(v(&[2.0]), TAU / day, 0.0)
            .add(&Signal::constant(v(&[3.0])))
            .unwrap();
        assert!((s.eval(6.0 * 3600.0)[0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Signal::constant(v(&[2.0, 1.0])).derivative(1), Signal::zeros(2));
        let w = 1.3;
        let d = Signal::sinusoid(v(&[1.0]), w, 0.0).derivative(1);
        for t in [0.0, 0.4, 2.0] {
            assert!((d.eval(t)[0] - w * (w * t).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn third_derivative_matches_finite_differences() {
        // a t^2 + sin(w t): third derivative is -w^3 cos(w t)
        let (a, w) = (0.8, 1.7);
        let s = Signal::from_terms(
            1,
            vec![
                Term::Monomial {
                    power: 2,
                    coeff: v(&[a]),
                },
                Term::Sinusoid {
                    omega: w,
                    sin: v(&[1.0]),
                    cos: v(&[0.0]),
                },
            ],
        )
        .unwrap();
        let d2 = s.derivative(2);
        let d3 = s.derivative(3);
        for i in 0..10 {
            let t = 0.3 + 0.55 * i as f64;
            let expected = -w.powi(3) * (w * t).cos();
            assert!((d3.eval(t)[0] - expected).abs() < 1e-12);
            // oracle: central difference of the second derivative
            let fd = central_difference(&d2, t, 1e-4)[0];
            assert!((fd - expected).abs() < 1e-6, "{fd} vs {expected}");
        }
    }

    #[test]
    fn first_derivative_is_second_order_accurate() {
        let s = Signal::from_terms(
            2,
            vec![
                Term::Sinusoid {
                    omega: 2.0,
                    sin: v(&[1.0, -0.5]),
                    cos: v(&[0.3, 2.0]),
                },
                Term::Exponential {
                    rate: -0.4,
                    coeff: v(&[1.0, 1.0]),
                },
                Term::Monomial {
                    power: 3,
                    coeff: v(&[0.1, 0.0]),
                },
            ],
        )
        .unwrap();
        let d = s.derivative(1);
        let t = 1.1;
        let e1 = (central_difference(&s, t, 1e-2) - d.eval(t)).amax();
        let e2 = (central_difference(&s, t, 5e-3) - d.eval(t)).amax();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn fourier_examples() {
        let w0 = 0.25;
        let c = Signal::constant(v(&[4.0])).fourier_components(w0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].0, 0);
        assert_eq!(c[0].1[0], Complex::new(4.0, 0.0));

        let s = Signal::sinusoid(v(&[1.0]), w0, 0.0).fourier_components(w0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], (-1, DVector::from_element(1, Complex::new(0.0, 0.5))));
        assert_eq!(s[1], (1, DVector::from_element(1, Complex::new(0.0, -0.5))));

        let s = Signal::constant(v(&[3.0]))
            .add(&Signal::sinusoid(v(&[2.0]), 2.0 * w0, PI / 2.0))
            .unwrap();
        let comps = s.fourier_components(w0).unwrap();
        let ks: Vec<i64> = comps.iter().map(|(k, _)| *k).collect();
        assert_eq!(ks, vec![-2, 0, 2]);
        for (k, c) in &comps {
            let expected = if *k == 0 { 3.0 } else { 1.0 };
            assert!((c[0] - Complex::new(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn non_commensurate_frequencies_rejected() {
        let s = Signal::sinusoid(v(&[1.0]), 1.0, 0.0)
            .add(&Signal::sinusoid(v(&[1.0]), 2f64.sqrt(), 0.0))
            .unwrap();
        let err = s.fourier_components(1.0).unwrap_err().to_string();
        assert!(err.contains("term 1"), "{err}");
        assert_eq!(s.base_frequency(), None);
        let s = Signal::sinusoid(v(&[1.0]), 2.0, 0.0)
            .add(&Signal::sinusoid(v(&[1.0]), 3.0, 0.0))
            .unwrap();
        assert!((s.base_frequency().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exosystem_reproduces_signal() {
        let s = Signal::from_terms(
            2,
            vec![
                Term::Constant(v(&[1.0, 2.0])),
                Term::Monomial {
                    power: 2,
                    coeff: v(&[0.5, -1.0]),
                },
                Term::Sinusoid {
                    omega: 0.9,
                    sin: v(&[1.0, 0.0]),
                    cos: v(&[0.2, 3.0]),
                },
                Term::Exponential {
                    rate: -0.3,
                    coeff: v(&[1.0, 1.0]),
                },
            ],
        )
        .unwrap();
        let (sm, cm) = s.exosystem();
        let eta0 = s.exo_state(0.0);
        for t in [0.0, 0.7, 2.5] {
            let via_exp = &cm * crate::linalg::expm(&(&sm * t)) * &eta0;
            assert!((via_exp - s.eval(t)).amax() < 1e-12);
            assert!((&cm * s.exo_state(t) - s.eval(t)).amax() < 1e-13);
        }
    }

    #[test]
    fn spec_terms_parse() {
        let json = r#"[{"type":"sin","amplitude":2.0,"period_s":86400,"phase_rad":0.0},
                       {"type":"const","value":[3.0, 1.0]},
                       {"type":"poly","coeffs":[0.0, 0.5]}]"#;
        let terms: Vec<TermSpec> = serde_json::from_str(json).unwrap();
        let s = signal_from_spec(&terms, 2, "/p").unwrap();
        let t = 21600.0;
        let val = s.eval(t);
        assert!((val[0] - (2.0 + 3.0 + 0.5 * t)).abs() < 1e-9);
        assert!((val[1] - (2.0 + 1.0 + 0.5 * t)).abs() < 1e-9);
        assert!(!s.is_bounded());
        let err = signal_from_spec(&terms, 3, "/p").unwrap_err().to_string();
        assert!(err.contains("/p/1/value"), "{err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_signal() -> impl Strategy<Value = Signal> {
            let term = prop_oneof![
                prop::collection::vec(-5.0..5.0f64, 2).prop_map(|c| Term::Constant(v(&c))),
                (1u32..4, prop::collection::vec(-2.0..2.0f64, 2))
                    .prop_map(|(power, c)| Term::Monomial { power, coeff: v(&c) }),
                (1usize..5, prop::collection::vec(-3.0..3.0f64, 4)).prop_map(|(k, c)| {
                    Term::Sinusoid {
                        omega: 0.5 * k as f64,
                        sin: v(&c[..2]),
                        cos: v(&c[2..]),
                    }
                }),
                (-1.0..0.5f64, prop::collection::vec(-2.0..2.0f64, 2))
                    .prop_map(|(rate, c)| Term::Exponential { rate, coeff: v(&c) }),
            ];
            prop::collection::vec(term, 0..6).prop_map(|terms| Signal::from_terms(2, terms).unwrap())
        }

        fn trig_signal() -> impl Strategy<Value = Signal> {
            arb_signal().prop_map(|s| {
                let terms = s
                    .terms()
                    .iter()
                    .filter(|t| matches!(t, Term::Constant(_) | Term::Sinusoid { .. }))
                    .cloned()
                    .collect();
                Signal::from_terms(2, terms).unwrap()
            })
        }

        proptest! {
            #[test]
            fn derivative_is_linear(s1 in arb_signal(), s2 in arb_signal(),
                                    a in -3.0..3.0f64, b in -3.0..3.0f64,
                                    order in 0usize..4, t in 0.0..5.0f64) {
                let combo = s1.scale(a).add(&s2.scale(b)).unwrap();
                let lhs = combo.derivative(order).eval(t);
                let rhs = s1.derivative(order).eval(t) * a + s2.derivative(order).eval(t) * b;
                let scale = 1.0 + lhs.amax().max(rhs.amax());
                prop_assert!((lhs - rhs).amax() <= 1e-12 * scale);
            }

            #[test]
            fn fourier_reconstruction(s in trig_signal(), times in prop::collection::vec(0.0..100.0f64, 100)) {
                let w0 = 0.5;
                let comps = s.fourier_components(w0).unwrap();
                for t in times {
                    let mut acc = DVector::from_element(2, Complex::new(0.0, 0.0));
                    for (k, c) in &comps {
                        acc += c * Complex::new(0.0, *k as f64 * w0 * t).exp();
                    }
                    let direct = s.eval(t);
                    let scale = 1.0 + direct.amax();
                    for i in 0..2 {
                        prop_assert!((acc[i].re - direct[i]).abs() <= 1e-12 * scale);
                        prop_assert!(acc[i].im.abs() <= 1e-12 * scale);
                    }
                }
            }
        }
    }
}
