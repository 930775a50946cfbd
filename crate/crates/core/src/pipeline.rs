//! End-to-end stages over a scenario: model, turnpike, the `(x0, T)` run
//! matrix, the turnpike report and the storage audit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{self, DeviationNorm, ExactnessReport, MeasureRow, RunDeviation, SampleLayout};
use crate::dissipativity::{self, RotatedCost, StorageEstimate, WeightFit};
use crate::error::{Error, Result};
use crate::network::{self, HurwitzCertificate};
use crate::ocp::{self, TrajectoryPair};
use crate::pencil::{self, OptimalityPencil, RegularityReport, TurnpikeTrajectory, WeierstrassDecomposition};
use crate::pmp::{self, AdjointTrajectory, Arc, ArcKind, ArcPartition};
use crate::problem::OcpScenario;
use crate::scenario::{EpsilonScale, Scenario};

/// Multiple of the refinement error used as the numerical zero.
pub const EPS_NUM_FACTOR: f64 = 10.0;
/// Bang samples must sit at their bound within this fraction of the box width.
pub const BANG_TOLERANCE: f64 = 1e-6;
/// Relative tolerance of the dissipation inequality in the weight fit.
pub const SDI_TOLERANCE: f64 = 1e-8;

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub scenario: String,
    pub vertex_ids: Vec<String>,
    pub producers: Vec<String>,
    pub consumers: Vec<String>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub certificate: HurwitzCertificate,
    /// `||B'B - I||`, `||E'E - I||`, `||B'E||` (max entries).
    pub selection_residuals: [f64; 3],
}

pub fn model_report(sc: &Scenario) -> Result<ModelReport> {
    let m = &sc.model;
    let ids = |idx: &[usize]| idx.iter().map(|&i| m.vertex_ids[i].clone()).collect();
    Ok(ModelReport {
        scenario: sc.name.clone(),
        vertex_ids: m.vertex_ids.clone(),
        producers: ids(&m.producers),
        consumers: ids(&m.consumers),
        a: rows_of(&m.a),
        b: rows_of(&m.b),
        e: rows_of(&m.e),
        certificate: m.hurwitz_certificate()?,
        selection_residuals: network::selection_residuals(m),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeSummary {
    pub regular: bool,
    /// Largest `|det| / Hadamard bound` over the sample points.
    pub regularity_ratio: f64,
    pub regularity_tolerance: f64,
    pub pencil_size: usize,
    pub finite_dim: usize,
    pub infinite_dim: usize,
    pub index: usize,
    pub shift: f64,
    pub separation_condition: f64,
    pub reconstruction_residual: f64,
    /// DAE residual of the turnpike on the residual grid (relative).
    pub dae_residual: f64,
    pub switching_residual: f64,
    /// Sup-relative distance to the turnpike from a second decomposition
    /// with a different shift and basis ordering.
    pub ordering_agreement: f64,
    pub period_s: Option<f64>,
    /// Smallest componentwise distance of `u_bar` to the box boundary.
    pub interiority_margin: f64,
    pub epsilon_hat: f64,
    /// `sup ||(x_bar, u_bar)||` over one period (or the longest horizon).
    pub sup_norm: f64,
    pub grid_points: usize,
    pub grid_end_s: f64,
}

#[derive(Debug, Clone)]
pub struct TurnpikeAnalysis {
    pub pencil: OptimalityPencil,
    pub regularity: RegularityReport,
    pub decomposition: WeierstrassDecomposition,
    pub turnpike: TurnpikeTrajectory,
    pub summary: TurnpikeSummary,
}

impl TurnpikeAnalysis {
    /// Residual grid used for the checks and the turnpike CSV.
    pub fn grid(&self) -> Vec<f64> {
        let (end, k) = (self.summary.grid_end_s, self.summary.grid_points);
        (0..k).map(|i| end * i as f64 / (k - 1) as f64).collect()
    }
}

fn longest_horizon(sc: &Scenario) -> f64 {
    sc.horizons
        .iter()
        .chain(&sc.outputs.storage_horizons_s)
        .copied()
        .fold(0.0, f64::max)
}

/// Pencil regularity, Weierstraß form and the bounded turnpike, with
/// residual checks on a uniform grid over the longest horizon.
pub fn analyze_turnpike(sc: &Scenario, seed: u64) -> Result<TurnpikeAnalysis> {
    let pencil = pencil::build_pencil(&sc.model, &sc.cost, &sc.disturbance)?;
    let regularity = pencil.check_regularity(seed);
    if !regularity.regular {
        return Err(Error::IrregularPencil {
            samples: regularity.samples.len(),
            max_abs_det: regularity.samples.iter().map(|(_, d)| d.norm()).fold(0.0, f64::max),
            tolerance: regularity.tolerance,
        });
    }
    let decomposition = pencil.weierstrass(seed)?;
    let turnpike = decomposition.bounded_particular_solution(&pencil)?;
    let alternative = pencil
        .weierstrass(seed.wrapping_add(0x9e37_79b9))?
        .bounded_particular_solution(&pencil)?;

    let end = longest_horizon(sc).max(turnpike.period().unwrap_or(0.0));
    let end = if end > 0.0 { end } else { 1.0 };
    let points = sc.numerics.grid_points;
    let grid: Vec<f64> = (0..points).map(|i| end * i as f64 / (points - 1) as f64).collect();
    let (mut diff, mut scale, mut sup) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &grid {
        let (a, b) = (turnpike.xi.eval(t), alternative.xi.eval(t));
        diff = diff.max((&a - &b).amax());
        scale = scale.max(a.amax());
        let z = (turnpike.x.eval(t).norm_squared() + turnpike.u.eval(t).norm_squared()).sqrt();
        sup = sup.max(z);
    }
    let samples = points.max(2);
    let summary = TurnpikeSummary {
        regular: true,
        regularity_ratio: regularity.ratios.iter().copied().fold(0.0, f64::max),
        regularity_tolerance: regularity.tolerance,
        pencil_size: pencil.size(),
        finite_dim: decomposition.finite_dim,
        infinite_dim: decomposition.infinite_dim(),
        index: decomposition.index,
        shift: decomposition.shift,
        separation_condition: decomposition.separation_condition,
        reconstruction_residual: [0.37, -1.13, 2.9]
            .iter()
            .map(|&s| decomposition.reconstruction_residual(&pencil, s))
            .fold(0.0, f64::max),
        dae_residual: pencil.relative_residual(&turnpike.xi, &grid),
        switching_residual: turnpike.switching_residual(&pencil, &grid),
        ordering_agreement: if scale > 0.0 { diff / scale } else { diff },
        period_s: turnpike.period(),
        interiority_margin: turnpike.interiority_margin(&sc.bounds, end, samples),
        epsilon_hat: turnpike.epsilon_hat(&sc.bounds, end, samples),
        sup_norm: sup,
        grid_points: points,
        grid_end_s: end,
    };
    Ok(TurnpikeAnalysis {
        pencil,
        regularity,
        decomposition,
        turnpike,
        summary,
    })
}

pub fn deviation_norm(sc: &Scenario) -> DeviationNorm {
    DeviationNorm {
        weights: sc.numerics.deviation_weights.as_ref().map(|w| DVector::from_column_slice(w)),
    }
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub x0_label: String,
    pub x0: DVector<f64>,
    pub horizon: f64,
}

pub fn run_matrix(sc: &Scenario) -> Vec<RunSpec> {
    let mut out = Vec::new();
    for st in &sc.initial_states {
        for &t in &sc.horizons {
            out.push(RunSpec {
                label: format!("{}_T{}s", st.label, fmt_seconds(t)),
                x0_label: st.label.clone(),
                x0: st.x0.clone(),
                horizon: t,
            });
        }
    }
    out
}

fn fmt_seconds(t: f64) -> String {
    if t.fract() == 0.0 { format!("{}", t as i64) } else { format!("{t}") }
}

/// Solution of the same problem on the doubled grid.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub pair: TrajectoryPair,
    /// Mid-horizon distance of the `N` and `2N` solutions.
    pub error: f64,
    /// Sup-relative costate difference at the coarse nodes.
    pub costate_difference: f64,
    pub objective_difference: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub ocp: OcpScenario,
    pub pair: TrajectoryPair,
    pub adjoint: AdjointTrajectory,
    /// Interval averages of the switching function.
    pub switching: Vec<DVector<f64>>,
    /// Switching function at the nodes.
    pub switching_nodes: Vec<DVector<f64>>,
    pub partition: ArcPartition,
    pub bang_consistency: f64,
    /// Midpoint deviation from the turnpike.
    pub deviation: Vec<f64>,
    pub refinement: Option<Refinement>,
}

pub fn solve_run(
    sc: &Scenario,
    turnpike: &TurnpikeTrajectory,
    spec: &RunSpec,
    seed: u64,
    refine: bool,
) -> Result<RunResult> {
    let problem = sc.ocp(&spec.x0, spec.horizon);
    let pair = ocp::solve(&problem, seed)?;
    let adjoint = pmp::costate(&pair, &problem);
    let switching = pmp::switching_functions(&pair, &adjoint, &problem);
    let switching_nodes = pmp::switching_at_nodes(&pair, &adjoint, &problem);
    let delta = pmp::default_delta(&switching, &pair);
    let partition = pmp::classify_arcs(&switching, pair.step, delta);
    let width = (&problem.bounds.upper - &problem.bounds.lower).amax();
    let bang_consistency = pmp::bang_consistency(&partition, &pair, &problem, BANG_TOLERANCE * width);
    let norm = deviation_norm(sc);
    let deviation = diagnostics::deviation(&pair, turnpike, &norm);
    let refinement = if refine {
        let fine_problem = sc.ocp_with(&spec.x0, spec.horizon, 2 * problem.intervals);
        let fine = ocp::solve(&fine_problem, seed)?;
        let fine_adjoint = pmp::costate(&fine, &fine_problem);
        Some(Refinement {
            error: diagnostics::refinement_error(&pair, &fine, &norm)?,
            costate_difference: pmp::refinement_difference(&adjoint, &fine_adjoint),
            objective_difference: (pair.objective - fine.objective).abs() / pair.objective.abs().max(1.0),
            pair: fine,
        })
    } else {
        None
    };
    Ok(RunResult {
        spec: spec.clone(),
        ocp: problem,
        pair,
        adjoint,
        switching,
        switching_nodes,
        partition,
        bang_consistency,
        deviation,
        refinement,
    })
}

/// Solves every run in parallel on the current rayon pool; results keep
/// the order of `specs`.
pub fn solve_runs(
    sc: &Scenario,
    turnpike: &TurnpikeTrajectory,
    specs: &[RunSpec],
    seed: u64,
    refine: bool,
) -> Result<Vec<RunResult>> {
    specs
        .par_iter()
        .map(|s| solve_run(sc, turnpike, s, seed, refine))
        .collect()
}

/// `EPS_NUM_FACTOR` times the largest refinement error over the runs.
pub fn epsilon_num(runs: &[RunResult]) -> Result<f64> {
    let errs: Vec<f64> = runs.iter().filter_map(|r| r.refinement.as_ref().map(|f| f.error)).collect();
    if errs.is_empty() {
        return Err(Error::numerical("epsilon_num", "no refined runs available"));
    }
    Ok(EPS_NUM_FACTOR * errs.iter().copied().fold(0.0, f64::max))
}

/// Tube radii of the measure table in absolute units.
pub fn epsilon_grid(sc: &Scenario, analysis: &TurnpikeAnalysis) -> Vec<f64> {
    let scale = match sc.outputs.epsilon_scale {
        EpsilonScale::Relative => analysis.summary.sup_norm,
        EpsilonScale::Absolute => 1.0,
    };
    sc.outputs.epsilon_grid.iter().map(|e| e * scale).collect()
}

/// Largest `||z_i(t) - z_j(t)||` over midpoints of run `i` in `[lo, hi]`.
fn pairwise_distance(a: &RunResult, b: &RunResult, norm: &DeviationNorm, lo: f64, hi: f64) -> f64 {
    let xa = a.pair.midpoint_states();
    let xb = b.pair.midpoint_states();
    let mut worst = 0.0f64;
    for (j, t) in a.pair.midpoints().iter().enumerate() {
        if *t < lo || *t > hi {
            continue;
        }
        let k = ((t / b.pair.step).floor() as usize).min(b.pair.intervals() - 1);
        if ((k as f64 + 0.5) * b.pair.step - t).abs() > 1e-9 * t.max(1.0) {
            continue;
        }
        worst = worst.max(norm.eval(&(&xa[j] - &xb[k]), &(&a.pair.inputs[j] - &b.pair.inputs[k])));
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub x0: String,
    pub horizon_s: f64,
    pub intervals: usize,
    pub objective: f64,
    pub solver_iterations: usize,
    pub kkt_residual: f64,
    pub reduced_min_eig: f64,
    pub nonconvex: bool,
    pub restarts: usize,
    pub refinement_error: Option<f64>,
    pub costate_refinement_difference: Option<f64>,
    pub objective_refinement_difference: Option<f64>,
    pub switching_delta: f64,
    pub arcs: Vec<Vec<Arc>>,
    /// Largest interval on which every input is singular.
    pub singular_entry_s: Option<f64>,
    pub singular_exit_s: Option<f64>,
    /// Fraction of bang samples with the input at the matching bound.
    pub bang_consistency: f64,
    /// Fraction of the `eps_num` tube (complement of `Theta`) on which all
    /// inputs are labelled singular.
    pub singular_tube_overlap: f64,
    pub sup_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeReport {
    pub scenario: String,
    pub turnpike: TurnpikeSummary,
    pub epsilon_num: f64,
    /// `epsilon_num / sup ||z_bar||`.
    pub epsilon_num_relative: f64,
    pub epsilon_grid: Vec<f64>,
    pub runs: Vec<RunSummary>,
    pub exactness: ExactnessReport,
    /// `max_eps mu(Theta_T2) - mu(Theta_T1)` bound in grid cells (2 h).
    pub horizon_independence_cells: f64,
}

pub fn singular_tube_overlap(run: &RunResult, eps: f64) -> f64 {
    let tube: Vec<usize> = (0..run.deviation.len()).filter(|&j| run.deviation[j] <= eps).collect();
    if tube.is_empty() {
        return 1.0;
    }
    let singular = tube
        .iter()
        .filter(|&&j| run.partition.labels[j].iter().all(|k| *k == ArcKind::Singular))
        .count();
    singular as f64 / tube.len() as f64
}

pub fn turnpike_report(sc: &Scenario, analysis: &TurnpikeAnalysis, runs: &[RunResult]) -> Result<TurnpikeReport> {
    let eps_num = epsilon_num(runs)?;
    let grid = epsilon_grid(sc, analysis);
    let norm = deviation_norm(sc);
    let deviations: Vec<RunDeviation> = runs
        .iter()
        .map(|r| RunDeviation {
            label: r.spec.label.clone(),
            x0_label: r.spec.x0_label.clone(),
            horizon: r.spec.horizon,
            step: r.pair.step,
            e: r.deviation.clone(),
        })
        .collect();
    let exactness = diagnostics::exactness_check(&deviations, eps_num, &grid, 0.0, |i, j, lo, hi| {
        pairwise_distance(&runs[i], &runs[j], &norm, lo, hi)
    })?;
    let summaries = runs
        .iter()
        .map(|r| {
            let joint = r.partition.largest_joint_singular(r.pair.step);
            let d = &r.pair.diagnostics;
            RunSummary {
                label: r.spec.label.clone(),
                x0: r.spec.x0_label.clone(),
                horizon_s: r.spec.horizon,
                intervals: r.pair.intervals(),
                objective: r.pair.objective,
                solver_iterations: d.iterations,
                kkt_residual: d.kkt_residual,
                reduced_min_eig: d.reduced_min_eig,
                nonconvex: d.nonconvex,
                restarts: d.restarts,
                refinement_error: r.refinement.as_ref().map(|f| f.error),
                costate_refinement_difference: r.refinement.as_ref().map(|f| f.costate_difference),
                objective_refinement_difference: r.refinement.as_ref().map(|f| f.objective_difference),
                switching_delta: r.partition.delta,
                arcs: r.partition.arcs.clone(),
                singular_entry_s: joint.map(|j| j.0),
                singular_exit_s: joint.map(|j| j.1),
                bang_consistency: r.bang_consistency,
                singular_tube_overlap: singular_tube_overlap(r, eps_num),
                sup_deviation: r.deviation.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let step = runs.iter().map(|r| r.pair.step).fold(0.0, f64::max);
    Ok(TurnpikeReport {
        scenario: sc.name.clone(),
        turnpike: analysis.summary.clone(),
        epsilon_num: eps_num,
        epsilon_num_relative: eps_num / analysis.summary.sup_norm.max(f64::MIN_POSITIVE),
        epsilon_grid: grid,
        runs: summaries,
        exactness,
        horizon_independence_cells: 2.0 * step,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SdiRun {
    pub x0: String,
    pub horizon_s: f64,
    pub violation_at_zero: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub x0: String,
    pub estimate: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Audit of the run started on the turnpike, `x0 = x_bar(0)`.
#[derive(Debug, Clone, Serialize)]
pub struct TurnpikeStart {
    pub horizon_s: f64,
    /// `-int_0^T l_{z_bar, alpha}`; positive because of the leaving arc.
    pub extracted: f64,
    /// End of the tube interval, where the leaving arc starts.
    pub exit_s: f64,
    /// `-int_0^{exit} l_{z_bar, alpha}`, which vanishes up to the
    /// discretisation error while the pair rides the turnpike.
    pub extracted_before_exit: f64,
    /// First-order bound `sup ||grad l(z_bar)|| eps_num exit` plus the
    /// second-order term below.
    pub tolerance: f64,
    pub sdi_violation: f64,
    /// Second-order integration tolerance
    /// `(||Q|| + ||S|| + c) eps_num^2 T`.
    pub sdi_tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StorageAudit {
    pub scenario: String,
    /// Weight of `alpha(s) = c s^2` used for the storage estimates.
    pub alpha_c: f64,
    pub alpha_c_source: String,
    pub fit: WeightFit,
    pub epsilon_num: f64,
    pub estimates: Vec<StorageEstimate>,
    pub max_stabilization_ratio: f64,
    pub all_bounded: bool,
    /// `nu_hat` at the numerical zero `eps_num`, over the audit runs.
    pub nu_hat: f64,
    /// `sup |l_{z_bar, alpha}|` over the audit runs.
    pub ell_hat: f64,
    pub bound_checks: Vec<BoundCheck>,
    pub bound_holds: bool,
    /// Constant that makes the costate storage nonnegative on the samples.
    pub storage_offset: f64,
    pub sdi: Vec<SdiRun>,
    pub turnpike_start: TurnpikeStart,
}

struct AuditRun {
    x0: String,
    horizon: f64,
    rotated: RotatedCost,
    storage: Vec<f64>,
    mu: f64,
}

/// Storage audit over `storage_initial_scales x storage_horizons_s`.
pub fn storage_audit(sc: &Scenario, analysis: &TurnpikeAnalysis, eps_num: f64, seed: u64) -> Result<StorageAudit> {
    let nominal = sc
        .nominal
        .as_ref()
        .ok_or_else(|| Error::validation("/cost/x_n", "the storage audit needs x_n"))?;
    if sc.outputs.storage_initial_scales.is_empty() || sc.outputs.storage_horizons_s.is_empty() {
        return Err(Error::validation("/outputs", "the storage audit needs initial scales and horizons"));
    }
    let tp = &analysis.turnpike;
    let norm = deviation_norm(sc);
    let mut cells = Vec::new();
    for &scale in &sc.outputs.storage_initial_scales {
        for &t in &sc.outputs.storage_horizons_s {
            cells.push((format!("{scale}xn"), nominal * scale, t));
        }
    }
    let runs: Vec<AuditRun> = cells
        .par_iter()
        .map(|(label, x0, t)| -> Result<AuditRun> {
            let problem = sc.ocp(x0, *t);
            let pair = ocp::solve(&problem, seed)?;
            let e = diagnostics::deviation(&pair, tp, &norm);
            Ok(AuditRun {
                x0: label.clone(),
                horizon: *t,
                rotated: dissipativity::rotated_cost(&pair, tp, &problem, &norm),
                storage: dissipativity::costate_storage(&pair, tp),
                mu: diagnostics::theta_measure(&e, pair.step, eps_num, SampleLayout::Midpoints),
            })
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(&[f64], &RotatedCost)> = runs.iter().map(|r| (r.storage.as_slice(), &r.rotated)).collect();
    let fit = dissipativity::fit_weight(&pairs, SDI_TOLERANCE);
    let (alpha_c, source) = match (sc.outputs.alpha_c, fit.c_star) {
        (Some(c), _) => (c, "configured"),
        (None, Some(c)) => (c, "fitted"),
        (None, None) => (0.0, "fit_failed"),
    };

    let mut estimates = Vec::new();
    for &scale in &sc.outputs.storage_initial_scales {
        let label = format!("{scale}xn");
        let mine: Vec<(f64, &RotatedCost)> = runs
            .iter()
            .filter(|r| r.x0 == label)
            .map(|r| (r.horizon, &r.rotated))
            .collect();
        estimates.push(dissipativity::available_storage_estimate(&label, &mine, alpha_c));
    }
    let nu_hat = runs.iter().map(|r| r.mu).fold(0.0, f64::max);
    let ell_hat = runs.iter().map(|r| r.rotated.sup_abs(alpha_c)).fold(0.0, f64::max);
    let bound_checks: Vec<BoundCheck> = estimates
        .iter()
        .map(|e| BoundCheck {
            x0: e.x0.clone(),
            estimate: e.estimate,
            bound: nu_hat * ell_hat,
            holds: e.estimate <= nu_hat * ell_hat,
        })
        .collect();
    let sdi = runs
        .iter()
        .map(|r| SdiRun {
            x0: r.x0.clone(),
            horizon_s: r.horizon,
            violation_at_zero: dissipativity::sdi_check(&r.storage, &r.rotated, 0.0).violation,
            violation: dissipativity::sdi_check(&r.storage, &r.rotated, alpha_c).violation,
        })
        .collect();
    let samples: Vec<Vec<f64>> = runs.iter().map(|r| r.storage.clone()).collect();

    let turnpike_start = turnpike_start(sc, analysis, eps_num, alpha_c, seed)?;

    Ok(StorageAudit {
        scenario: sc.name.clone(),
        alpha_c,
        alpha_c_source: source.into(),
        epsilon_num: eps_num,
        max_stabilization_ratio: estimates.iter().map(|e| e.stabilization_ratio).fold(0.0, f64::max),
        all_bounded: estimates.iter().all(|e| e.bounded),
        estimates,
        fit,
        nu_hat,
        ell_hat,
        bound_holds: bound_checks.iter().all(|b| b.holds),
        bound_checks,
        storage_offset: dissipativity::storage_offset(&samples),
        sdi,
        turnpike_start,
    })
}

/// Measure table of one deviation series.
pub fn measure_table(e: &[f64], step: f64, grid: &[f64]) -> Vec<MeasureRow> {
    grid.iter()
        .map(|&eps| MeasureRow {
            epsilon: eps,
            mu_s: diagnostics::theta_measure(e, step, eps, SampleLayout::Midpoints),
        })
        .collect()
}

fn turnpike_start(sc: &Scenario, analysis: &TurnpikeAnalysis, eps_num: f64, c: f64, seed: u64) -> Result<TurnpikeStart> {
    let tp = &analysis.turnpike;
    let norm = deviation_norm(sc);
    let horizon = sc.outputs.storage_horizons_s.iter().copied().fold(f64::INFINITY, f64::min);
    let problem = sc.ocp(&tp.x.eval(0.0), horizon);
    let pair = ocp::solve(&problem, seed)?;
    let rc = dissipativity::rotated_cost(&pair, tp, &problem, &norm);
    let storage = dissipativity::costate_storage(&pair, tp);
    let e = diagnostics::deviation(&pair, tp, &norm);
    let exit = diagnostics::longest_tube(&e, pair.step, eps_num).map(|t| t.3).unwrap_or(0);
    let exit_s = exit as f64 * pair.step;
    let cost = &problem.cost;
    let grad = (0..pair.intervals())
        .map(|j| {
            let t = (j as f64 + 0.5) * pair.step;
            let (x, u) = (tp.x.eval(t), tp.u.eval(t));
            let gx = &cost.q * &x + cost.s.transpose() * &u + cost.r.eval(t);
            let gu = &cost.s * &x + cost.p.eval(t);
            (gx.norm_squared() + gu.norm_squared()).sqrt()
        })
        .fold(0.0, f64::max);
    let curvature = crate::linalg::spectral_norm(&cost.q) + crate::linalg::spectral_norm(&cost.s) + c;
    let second = |t: f64| curvature * eps_num * eps_num * t;
    Ok(TurnpikeStart {
        horizon_s: horizon,
        extracted: -rc.integral(c),
        exit_s,
        extracted_before_exit: -rc.cumulative(exit, c),
        tolerance: grad * eps_num * exit_s + second(exit_s),
        sdi_violation: dissipativity::sdi_check(&storage, &rc, c).violation,
        sdi_tolerance: second(horizon),
    })
}
