//! Distance of optimal trajectories to the turnpike: deviation series,
//! the measure of the set where the deviation exceeds a radius, and the
//! exactness and horizon-independence checks across runs.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ocp::TrajectoryPair;
use crate::pencil::TurnpikeTrajectory;

/// Norm on stacked `(x, u)` with optional diagonal weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviationNorm {
    pub weights: Option<DVector<f64>>,
}

impl DeviationNorm {
    pub fn eval(&self, dx: &DVector<f64>, du: &DVector<f64>) -> f64 {
        let n = dx.len();
        match &self.weights {
            None => (dx.norm_squared() + du.norm_squared()).sqrt(),
            Some(w) => {
                let a: f64 = dx.iter().enumerate().map(|(i, v)| w[i] * v * v).sum();
                let b: f64 = du.iter().enumerate().map(|(i, v)| w[n + i] * v * v).sum();
                (a + b).sqrt()
            }
        }
    }
}

/// `e_j = ||z*(t_j + h/2) - z_bar(t_j + h/2)||` at the interval midpoints.
pub fn deviation(pair: &TrajectoryPair, turnpike: &TurnpikeTrajectory, norm: &DeviationNorm) -> Vec<f64> {
    pair.midpoints()
        .iter()
        .zip(pair.midpoint_states())
        .zip(&pair.inputs)
        .map(|((&t, x), u)| norm.eval(&(x - turnpike.x.eval(t)), &(u - turnpike.u.eval(t))))
        .collect()
}

/// Where the samples of a deviation series sit on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLayout {
    /// `t_j = j h`, `j = 0..=N`; endpoints carry half weight.
    Nodes,
    /// `t_j = (j + 1/2) h`, `j = 0..N`.
    Midpoints,
}

/// `mu({t : e(t) > eps})` by the midpoint/trapezoid rule on the indicator.
pub fn theta_measure(e: &[f64], step: f64, eps: f64, layout: SampleLayout) -> f64 {
    let last = e.len().saturating_sub(1);
    e.iter()
        .enumerate()
        .filter(|(_, v)| **v > eps)
        .map(|(j, _)| match layout {
            SampleLayout::Nodes if j == 0 || j == last => 0.5 * step,
            _ => step,
        })
        .sum()
}

/// Longest run of consecutive midpoint samples with `e <= eps`, as the
/// covered interval `(start, end)` and the sample range.
pub fn longest_tube(e: &[f64], step: f64, eps: f64) -> Option<(f64, f64, usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for j in 0..=e.len() {
        let inside = j < e.len() && e[j] <= eps;
        match (inside, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| j - s > b - a) {
                    best = Some((s, j));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(a, b)| (a as f64 * step, b as f64 * step, a, b))
}

/// Deviation series of one `(x0, T)` run.
#[derive(Debug, Clone)]
pub struct RunDeviation {
    pub label: String,
    pub x0_label: String,
    pub horizon: f64,
    pub step: f64,
    /// Midpoint deviation samples.
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRow {
    pub epsilon: f64,
    pub mu_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunVerdict {
    pub label: String,
    pub x0: String,
    pub horizon_s: f64,
    pub step_s: f64,
    pub exact: bool,
    /// Longest interval inside the `eps_num` tube.
    pub tube_start_s: Option<f64>,
    pub tube_end_s: Option<f64>,
    pub tube_fraction: f64,
    pub sup_deviation_in_tube: f64,
    pub sup_deviation: f64,
    pub measure: Vec<MeasureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonComparison {
    pub x0: String,
    pub shorter: String,
    pub longer: String,
    /// `max_eps mu(Theta_T2(eps)) - mu(Theta_T1(eps))` (s).
    pub max_measure_increase_s: f64,
    pub allowed_s: f64,
    pub entry_time_difference_s: f64,
    pub independent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub epsilon_num: f64,
    /// Fraction of the horizon the tube interval must cover.
    pub min_tube_fraction: f64,
    pub verdicts: Vec<RunVerdict>,
    pub horizon_comparisons: Vec<HorizonComparison>,
    pub horizon_independent: bool,
    /// `nu_hat(eps) = max over runs of mu(Theta_T(eps))`.
    pub nu_hat: Vec<MeasureRow>,
    /// Largest pairwise distance of two runs on the overlap of their tube
    /// intervals; at most `2 eps_num` by the triangle inequality.
    pub max_pairwise_overlap_distance: f64,
    /// Same on the overlap of the central halves of the tube intervals,
    /// away from the entry and exit where both runs sit near the tube wall.
    pub max_pairwise_middle_distance: f64,
    pub all_exact: bool,
}

pub const MIN_TUBE_FRACTION: f64 = 0.25;

/// Exactness of each run and horizon independence across runs sharing an
/// initial state. `eps_grid` must contain absolute radii; `eps_num` is
/// included automatically. `pairwise` gives, for two run indices, their
/// maximum distance on a time set (used for the overlap check).
pub fn exactness_check(
    runs: &[RunDeviation],
    eps_num: f64,
    eps_grid: &[f64],
    slack: f64,
    pairwise: impl Fn(usize, usize, f64, f64) -> f64,
) -> Result<ExactnessReport> {
    let mut horizons: Vec<f64> = runs.iter().map(|r| r.horizon).collect();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    let mut inits: Vec<&str> = runs.iter().map(|r| r.x0_label.as_str()).collect();
    inits.sort();
    inits.dedup();
    if horizons.len() < 2 || inits.len() < 2 {
        return Err(Error::validation(
            "/runs",
            "exactness check needs at least two horizons and two initial states",
        ));
    }
    let mut grid: Vec<f64> = eps_grid.to_vec();
    grid.push(eps_num);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut verdicts = Vec::with_capacity(runs.len());
    for r in runs {
        let tube = longest_tube(&r.e, r.step, eps_num);
        let (start, end, a, b) = match tube {
            Some((s, e, a, b)) => (Some(s), Some(e), a, b),
            None => (None, None, 0, 0),
        };
        let frac = (b - a) as f64 * r.step / r.horizon;
        verdicts.push(RunVerdict {
            label: r.label.clone(),
            x0: r.x0_label.clone(),
            horizon_s: r.horizon,
            step_s: r.step,
            exact: frac >= MIN_TUBE_FRACTION,
            tube_start_s: start,
            tube_end_s: end,
            tube_fraction: frac,
            sup_deviation_in_tube: r.e[a..b].iter().copied().fold(0.0, f64::max),
            sup_deviation: r.e.iter().copied().fold(0.0, f64::max),
            measure: grid
                .iter()
                .map(|&eps| MeasureRow {
                    epsilon: eps,
                    mu_s: theta_measure(&r.e, r.step, eps, SampleLayout::Midpoints),
                })
                .collect(),
        });
    }

    let mut comparisons = Vec::new();
    for (i, a) in runs.iter().enumerate() {
        for (j, b) in runs.iter().enumerate() {
            if a.x0_label != b.x0_label || b.horizon <= a.horizon {
                continue;
            }
            let step = a.step.max(b.step);
            let increase = grid
                .iter()
                .map(|&eps| {
                    theta_measure(&b.e, b.step, eps, SampleLayout::Midpoints)
                        - theta_measure(&a.e, a.step, eps, SampleLayout::Midpoints)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let entry = |v: &RunVerdict| v.tube_start_s.unwrap_or(v.horizon_s);
            let allowed = 2.0 * step + slack;
            comparisons.push(HorizonComparison {
                x0: a.x0_label.clone(),
                shorter: a.label.clone(),
                longer: b.label.clone(),
                max_measure_increase_s: increase,
                allowed_s: allowed,
                entry_time_difference_s: (entry(&verdicts[i]) - entry(&verdicts[j])).abs(),
                independent: increase <= allowed,
            });
        }
    }

    let (mut overlap, mut middle) = (0.0f64, 0.0f64);
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let (vi, vj) = (&verdicts[i], &verdicts[j]);
            if let (Some(s1), Some(e1), Some(s2), Some(e2)) = (vi.tube_start_s, vi.tube_end_s, vj.tube_start_s, vj.tube_end_s) {
                let (lo, hi) = (s1.max(s2), e1.min(e2));
                if hi > lo {
                    overlap = overlap.max(pairwise(i, j, lo, hi));
                }
                let quarter = |a: f64, b: f64| 0.25 * (b - a);
                let (lo, hi) = ((s1 + quarter(s1, e1)).max(s2 + quarter(s2, e2)), (e1 - quarter(s1, e1)).min(e2 - quarter(s2, e2)));
                if hi > lo {
                    middle = middle.max(pairwise(i, j, lo, hi));
                }
            }
        }
    }

    let nu_hat = grid
        .iter()
        .map(|&eps| MeasureRow {
            epsilon: eps,
            mu_s: runs
                .iter()
                .map(|r| theta_measure(&r.e, r.step, eps, SampleLayout::Midpoints))
                .fold(0.0, f64::max),
        })
        .collect();
    Ok(ExactnessReport {
        epsilon_num: eps_num,
        min_tube_fraction: MIN_TUBE_FRACTION,
        all_exact: verdicts.iter().all(|v| v.exact),
        horizon_independent: comparisons.iter().all(|c| c.independent),
        verdicts,
        horizon_comparisons: comparisons,
        nu_hat,
        max_pairwise_overlap_distance: overlap,
        max_pairwise_middle_distance: middle,
    })
}

/// Discretisation error estimate from two solutions on `N` and `2N`
/// intervals: the largest midpoint distance over the central half of the
/// horizon where every input is free in both solutions. Inputs of the fine
/// solution are averaged over the two halves of each coarse interval.
pub fn refinement_error(coarse: &TrajectoryPair, fine: &TrajectoryPair, norm: &DeviationNorm) -> Result<f64> {
    let n = coarse.intervals();
    if fine.intervals() != 2 * n {
        return Err(Error::validation(
            "refinement",
            format!("fine grid has {} intervals, expected {}", fine.intervals(), 2 * n),
        ));
    }
    let horizon = coarse.horizon();
    let mut worst = 0.0f64;
    let mut used = 0usize;
    for j in 0..n {
        let t = (j as f64 + 0.5) * coarse.step;
        if t < 0.25 * horizon || t > 0.75 * horizon {
            continue;
        }
        let free = |p: &TrajectoryPair, k: usize| p.diagnostics.active[k].iter().all(|a| *a == 0);
        if !(free(coarse, j) && free(fine, 2 * j) && free(fine, 2 * j + 1)) {
            continue;
        }
        let xc = &coarse.dense[4 * j + 2];
        let xf = &fine.states[2 * j + 1];
        let uf = (&fine.inputs[2 * j] + &fine.inputs[2 * j + 1]) * 0.5;
        worst = worst.max(norm.eval(&(xc - xf), &(&coarse.inputs[j] - uf)));
        used += 1;
    }
    if used == 0 {
        return Err(Error::numerical(
            "refinement",
            "no mid-horizon samples with all inputs free; the horizon is too short for an error estimate",
        ));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_examples() {
        assert_eq!(theta_measure(&[0.0; 11], 1.0, 0.1, SampleLayout::Nodes), 0.0);
        assert_eq!(theta_measure(&[1.0; 11], 1.0, 0.5, SampleLayout::Nodes), 10.0);
        // e(t) = max(0, 1 - t) on [0, 10]
        for n in [100, 1000] {
            let h = 10.0 / n as f64;
            let e: Vec<f64> = (0..=n).map(|j| (1.0 - j as f64 * h).max(0.0)).collect();
            let mu = theta_measure(&e, h, 0.5, SampleLayout::Nodes);
            assert!((mu - 0.5).abs() <= h, "{mu}");
        }
    }

    #[test]
    fn measure_is_monotone() {
        let e: Vec<f64> = (0..200).map(|j| ((j as f64) * 0.37).sin().abs()).collect();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let mu = theta_measure(&e, 0.1, k as f64 * 0.02, SampleLayout::Midpoints);
            assert!(mu <= prev);
            prev = mu;
        }
    }

    fn run(label: &str, x0: &str, horizon: f64, e: Vec<f64>) -> RunDeviation {
        RunDeviation {
            label: label.into(),
            x0_label: x0.into(),
            horizon,
            step: 1.0,
            e,
        }
    }

    #[test]
    fn identical_runs_are_exact() {
        let runs = vec![
            run("a", "x1", 10.0, vec![0.0; 10]),
            run("b", "x1", 12.0, vec![0.0; 12]),
            run("c", "x2", 10.0, vec![0.0; 10]),
            run("d", "x2", 12.0, vec![0.0; 12]),
        ];
        let rep = exactness_check(&runs, 1e-9, &[0.1], 0.0, |_, _, _, _| 0.0).unwrap();
        assert!(rep.all_exact && rep.horizon_independent);
    }

    #[test]
    fn persistent_offset_is_not_exact() {
        let runs = vec![
            run("a", "x1", 10.0, vec![1.0; 10]),
            run("b", "x1", 20.0, vec![1.0; 20]),
            run("c", "x2", 10.0, vec![1.0; 10]),
            run("d", "x2", 20.0, vec![1.0; 20]),
        ];
        let rep = exactness_check(&runs, 0.5, &[0.5], 0.0, |_, _, _, _| 0.0).unwrap();
        assert!(!rep.all_exact);
        assert!(!rep.horizon_independent);
        assert_eq!(rep.verdicts[1].measure[0].mu_s, 20.0);
    }

    #[test]
    fn too_few_runs_rejected() {
        let runs = vec![run("a", "x1", 10.0, vec![0.0; 10]), run("b", "x1", 12.0, vec![0.0; 12])];
        assert!(matches!(
            exactness_check(&runs, 0.1, &[], 0.0, |_, _, _, _| 0.0),
            Err(Error::Validation { .. })
        ));
    }
}
