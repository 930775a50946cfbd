//! Costates, switching functions and arc classification of a solved pair.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg;
use crate::ocp::{TrajectoryPair, SUBSTEPS};
use crate::problem::OcpScenario;
use crate::signal::Signal;

/// Costate on the transcription grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// `λ` on the quarter-step grid, `4N + 1` points.
    pub dense: Vec<DVector<f64>>,
    /// `λ(t_j)`, `j = 0..=N`.
    pub nodes: Vec<DVector<f64>>,
    /// `λ(t_j + h/2)`, `j = 0..N`.
    pub midpoints: Vec<DVector<f64>>,
    /// `||λ(T)||`.
    pub terminal_residual: f64,
}

/// Solves `λ' = -A'λ - (Q x + S'u + r)`, `λ(T) = 0` backwards and exactly:
/// `(λ, x, u)` and an exosystem state reproducing `d` and `r` are propagated
/// by one matrix exponential per quarter step, and the `λ` block is inverted
/// in closed form since it is `exp(-A' h/4)`.
pub fn costate(pair: &TrajectoryPair, scenario: &OcpScenario) -> AdjointTrajectory {
    let model = &scenario.model;
    let cost = &scenario.cost;
    let (n, m) = (model.n(), model.m());
    let nd = scenario.disturbance.dim();
    let exo = Signal::stack(&[&scenario.disturbance, &cost.r]);
    let (se, ce) = exo.exosystem();
    let q = se.nrows();
    let size = 2 * n + m + q;
    let (il, ix, iu, iw) = (0, n, 2 * n, 2 * n + m);
    let mut z = DMatrix::zeros(size, size);
    z.view_mut((il, il), (n, n)).copy_from(&(-model.a.transpose()));
    z.view_mut((il, ix), (n, n)).copy_from(&(-&cost.q));
    z.view_mut((il, iu), (n, m)).copy_from(&(-cost.s.transpose()));
    z.view_mut((il, iw), (n, q)).copy_from(&(-ce.rows(nd, n)));
    z.view_mut((ix, ix), (n, n)).copy_from(&model.a);
    z.view_mut((ix, iu), (n, m)).copy_from(&model.b);
    z.view_mut((ix, iw), (n, q)).copy_from(&(&model.e * ce.rows(0, nd)));
    z.view_mut((iw, iw), (q, q)).copy_from(&se);
    let quarter = pair.step / SUBSTEPS as f64;
    let phi = linalg::expm(&(z * quarter));
    let inv_ll = linalg::expm(&(model.a.transpose() * quarter));
    let p_lx = phi.view((il, ix), (n, n)).into_owned();
    let p_lu = phi.view((il, iu), (n, m)).into_owned();
    let p_lw = phi.view((il, iw), (n, q)).into_owned();

    let total = pair.dense.len();
    let mut dense = vec![DVector::zeros(n); total];
    for k in (0..total - 1).rev() {
        let t = k as f64 * quarter;
        let u = &pair.inputs[k / SUBSTEPS];
        let rhs = &dense[k + 1] - &p_lx * &pair.dense[k] - &p_lu * u - &p_lw * exo.exo_state(t);
        dense[k] = &inv_ll * rhs;
    }
    let nodes: Vec<DVector<f64>> = dense.iter().step_by(SUBSTEPS).cloned().collect();
    let midpoints = (0..pair.intervals()).map(|j| dense[SUBSTEPS * j + SUBSTEPS / 2].clone()).collect();
    AdjointTrajectory {
        terminal_residual: nodes.last().map(|l| l.norm()).unwrap_or(0.0),
        dense,
        nodes,
        midpoints,
    }
}

/// Sup-relative distance between costates of an `N` and a `2N` solution of
/// the same problem, compared at the coarse nodes.
pub fn refinement_difference(coarse: &AdjointTrajectory, fine: &AdjointTrajectory) -> f64 {
    let mut scale = 0.0f64;
    let mut diff = 0.0f64;
    for (j, l) in coarse.nodes.iter().enumerate() {
        let Some(f) = fine.nodes.get(2 * j) else { break };
        scale = scale.max(l.amax());
        diff = diff.max((l - f).amax());
    }
    if scale > 0.0 { diff / scale } else { diff }
}

/// Interval averages `1/h int s(t) dt` of `s = S x + B'λ + p` (Simpson on
/// the quarter-step grid), one per held input `u_j`. On singular arcs the
/// pointwise `s` of a piecewise-constant solution oscillates within each
/// interval; its average is what the discrete optimality conditions see.
pub fn switching_functions(
    pair: &TrajectoryPair,
    adjoint: &AdjointTrajectory,
    scenario: &OcpScenario,
) -> Vec<DVector<f64>> {
    let bt = scenario.model.b.transpose();
    let w = [1.0, 4.0, 2.0, 4.0, 1.0].map(|v| v / 12.0);
    let quarter = pair.step / SUBSTEPS as f64;
    (0..pair.intervals())
        .map(|j| {
            let mut acc = DVector::zeros(scenario.model.m());
            for (k, wk) in w.iter().enumerate() {
                let i = SUBSTEPS * j + k;
                let t = i as f64 * quarter;
                acc += (&scenario.cost.s * &pair.dense[i] + &bt * &adjoint.dense[i] + scenario.cost.p.eval(t)) * *wk;
            }
            acc
        })
        .collect()
}

/// Switching function at the grid nodes `t_0..t_N`.
pub fn switching_at_nodes(
    pair: &TrajectoryPair,
    adjoint: &AdjointTrajectory,
    scenario: &OcpScenario,
) -> Vec<DVector<f64>> {
    let bt = scenario.model.b.transpose();
    pair.times
        .iter()
        .zip(&pair.states)
        .zip(&adjoint.nodes)
        .map(|((&t, x), l)| &scenario.cost.s * x + &bt * l + scenario.cost.p.eval(t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    LowerBound,
    UpperBound,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arc {
    pub kind: ArcKind,
    /// First and last sample index covered.
    pub first: usize,
    pub last: usize,
    /// Covered time interval (s).
    pub start: f64,
    pub end: f64,
}

impl Arc {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcPartition {
    /// Per input, ordered disjoint arcs covering `[0, T]`.
    pub arcs: Vec<Vec<Arc>>,
    pub delta: f64,
    /// Per sample and input, the label after island merging.
    #[serde(skip)]
    pub labels: Vec<Vec<ArcKind>>,
}

impl ArcPartition {
    /// Longest arc on which every input is singular, as `(start, end)`.
    pub fn largest_joint_singular(&self, step: f64) -> Option<(f64, f64)> {
        let count = self.labels.len();
        let mut best: Option<(usize, usize)> = None;
        let mut run_start = None;
        for j in 0..=count {
            let joint = j < count && self.labels[j].iter().all(|k| *k == ArcKind::Singular);
            match (joint, run_start) {
                (true, None) => run_start = Some(j),
                (false, Some(s)) => {
                    if best.is_none_or(|(a, b)| j - s > b - a) {
                        best = Some((s, j));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        best.map(|(a, b)| (a as f64 * step, b as f64 * step))
    }
}

/// Default classification threshold: `1e-4 median(|s|)` over samples where
/// the solver holds the input at a bound, floored at `1e-8`.
pub fn default_delta(s: &[DVector<f64>], pair: &TrajectoryPair) -> f64 {
    let mut mags: Vec<f64> = Vec::new();
    for (j, sj) in s.iter().enumerate() {
        for i in 0..sj.len() {
            if pair.diagnostics.active[j][i] != 0 {
                mags.push(sj[i].abs());
            }
        }
    }
    if mags.is_empty() {
        mags = s.iter().flat_map(|v| v.iter().map(|x| x.abs())).collect();
    }
    if mags.is_empty() {
        return 1e-8;
    }
    mags.sort_by(f64::total_cmp);
    (1e-4 * mags[mags.len() / 2]).max(1e-8)
}

/// Labels samples `s > δ` lower-bound, `s < -δ` upper-bound, otherwise
/// singular; sample `j` covers `[j h, (j+1) h]`. Single-sample islands are
/// absorbed by their neighbours.
pub fn classify_arcs(s: &[DVector<f64>], step: f64, delta: f64) -> ArcPartition {
    let count = s.len();
    let m = s.first().map(|v| v.len()).unwrap_or(0);
    let mut labels = vec![vec![ArcKind::Singular; m]; count];
    let mut arcs = Vec::with_capacity(m);
    for i in 0..m {
        let mut lab: Vec<ArcKind> = s
            .iter()
            .map(|v| {
                if v[i] > delta {
                    ArcKind::LowerBound
                } else if v[i] < -delta {
                    ArcKind::UpperBound
                } else {
                    ArcKind::Singular
                }
            })
            .collect();
        merge_islands(&mut lab);
        let mut list: Vec<Arc> = Vec::new();
        for (j, &k) in lab.iter().enumerate() {
            labels[j][i] = k;
            match list.last_mut() {
                Some(a) if a.kind == k => {
                    a.last = j;
                    a.end = (j + 1) as f64 * step;
                }
                _ => list.push(Arc {
                    kind: k,
                    first: j,
                    last: j,
                    start: j as f64 * step,
                    end: (j + 1) as f64 * step,
                }),
            }
        }
        arcs.push(list);
    }
    ArcPartition { arcs, delta, labels }
}

fn merge_islands(lab: &mut [ArcKind]) {
    let n = lab.len();
    if n < 2 {
        return;
    }
    let orig = lab.to_vec();
    for j in 0..n {
        let prev = if j > 0 { Some(orig[j - 1]) } else { None };
        let next = if j + 1 < n { Some(orig[j + 1]) } else { None };
        let isolated = prev != Some(orig[j]) && next != Some(orig[j]);
        if !isolated {
            continue;
        }
        lab[j] = match (prev, next) {
            (Some(a), Some(b)) if a == b => a,
            (None, Some(b)) => b,
            (Some(a), None) => a,
            // between two different arcs: keep the label
            _ => orig[j],
        };
    }
}

/// Fraction of samples on bang arcs where the input sits at the matching
/// bound within `tol`; `1` when there are no bang samples.
pub fn bang_consistency(partition: &ArcPartition, pair: &TrajectoryPair, scenario: &OcpScenario, tol: f64) -> f64 {
    let mut total = 0usize;
    let mut good = 0usize;
    for (j, row) in partition.labels.iter().enumerate() {
        for (i, k) in row.iter().enumerate() {
            let u = pair.inputs[j][i];
            let ok = match k {
                ArcKind::LowerBound => (u - scenario.bounds.lower[i]).abs() <= tol,
                ArcKind::UpperBound => (u - scenario.bounds.upper[i]).abs() <= tol,
                ArcKind::Singular => continue,
            };
            total += 1;
            good += ok as usize;
        }
    }
    if total == 0 {
        1.0
    } else {
        good as f64 / total as f64
    }
}
