//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use turnpike_core::linalg::spectral_norm;
use turnpike_core::scenario::Scenario;
use turnpike_core::{Edge, NetworkGraph, OcpScenario, StateSpaceModel, Vertex, VertexRole};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("fixture scenario loads")
}

/// Two-vertex network with a box so wide it never binds.
pub fn lq_scenario() -> Scenario {
    Scenario::parse(
        r#"{
          "name": "lq",
          "graph": {
            "vertices": [
              { "id": "a", "loss": 1.0, "role": "producer" },
              { "id": "b", "loss": 2.0, "mass": 1.5 }
            ],
            "edges": [
              { "from": "a", "to": "b", "flow": 1.0 },
              { "from": "b", "to": "a", "flow": 1.0 }
            ]
          },
          "cost": { "q": { "diagonal": [1.0, 2.0] }, "s": "B_transpose" },
          "bounds": { "u_min": -1e6, "u_max": 1e6 },
          "outputs": { "storage_initial_scales": [] }
        }"#,
    )
    .unwrap()
}

/// Strongly connected, mass-conserving graph: a ring plus random simple
/// cycles, each carrying a constant flow. One vertex gives no edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> NetworkGraph {
    let vertices = (0..n)
        .map(|i| Vertex {
            id: format!("v{i}"),
            mass: rng.random_range(0.5..2.0),
            loss: rng.random_range(0.05..1.0),
            role: match i {
                0 => VertexRole::Producer,
                1 => VertexRole::Consumer,
                _ => [VertexRole::Plain, VertexRole::Producer, VertexRole::Consumer][rng.random_range(0..3)],
            },
        })
        .collect();
    let mut edges = Vec::new();
    let mut cycle = |members: &[usize], flow: f64| {
        for k in 0..members.len() {
            edges.push(Edge {
                from: format!("v{}", members[k]),
                to: format!("v{}", members[(k + 1) % members.len()]),
                flow,
            });
        }
    };
    if n == 1 {
        return NetworkGraph { vertices, edges };
    }
    let ring: Vec<usize> = (0..n).collect();
    cycle(&ring, rng.random_range(0.5..3.0));
    for _ in 0..rng.random_range(0..=n / 2) {
        let mut members: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if members.len() < 2 {
            continue;
        }
        for i in (1..members.len()).rev() {
            members.swap(i, rng.random_range(0..=i));
        }
        cycle(&members, rng.random_range(0.1..2.0));
    }
    NetworkGraph { vertices, edges }
}

/// Largest `||exp(A t)|| / (k exp(-rate t))` on a grid of `t` covering
/// several decay times; at most one when the certificate holds.
pub fn certificate_ratio(model: &StateSpaceModel, k: f64, rate: f64) -> f64 {
    let dt = 0.25 / rate;
    let step = (&model.a * dt).exp();
    let mut power = DMatrix::identity(model.n(), model.n());
    let mut worst = 0.0f64;
    for j in 0..=40 {
        if j > 0 {
            power = &power * &step;
        }
        let t = j as f64 * dt;
        worst = worst.max(spectral_norm(&power) / (k * (-rate * t).exp()));
    }
    worst
}

/// Simulates `x' = Ax + Bu + Ed` for piecewise-constant `u` and `d` and
/// returns the largest `||x(t)|| / bound(t)` at the quarter points.
pub fn state_bound_ratio(rng: &mut ChaCha8Rng, model: &StateSpaceModel, upper: &DVector<f64>) -> f64 {
    let (n, m, w) = (model.n(), model.m(), model.w());
    let cert = model.hurwitz_certificate().expect("certificate");
    let d_hat = 2.0;
    let u_hat = upper.norm();
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
    let h = 0.5 / cert.decay_rate.max(1e-3);
    let size = n + m + w;
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    aug.view_mut((0, n), (n, m)).copy_from(&model.b);
    aug.view_mut((0, n + m), (n, w)).copy_from(&model.e);
    let quarter = (aug * (h / 4.0)).exp();
    let mut z = DVector::zeros(size);
    z.rows_mut(0, n).copy_from(&x0);
    let mut worst = 0.0f64;
    for j in 0..40 {
        z.rows_mut(n, m).copy_from(&DVector::from_fn(m, |i, _| rng.random_range(0.0..=upper[i])));
        let mut d = DVector::from_fn(w, |_, _| rng.random_range(-1.0..1.0));
        if d.norm() > d_hat {
            d *= d_hat / d.norm();
        }
        z.rows_mut(n + m, w).copy_from(&d);
        for k in 1..=4 {
            z = &quarter * z;
            let t = (j as f64 + k as f64 / 4.0) * h;
            let bound = model.state_bound(&cert, x0.norm(), u_hat, d_hat, t);
            worst = worst.max(z.rows(0, n).norm() / bound);
        }
    }
    worst
}

/// Backward Riccati recursion for the sampled-data problem with zero
/// linear terms and no disturbance. The stage cost matrix integrates
/// `1/2 z'Wz` by composite Simpson on quarter steps with the exact
/// intra-interval state, matching the transcription's quadrature.
pub fn riccati(problem: &OcpScenario) -> (Vec<DVector<f64>>, f64) {
    let (model, cost) = (&problem.model, &problem.cost);
    let (n, m) = (model.n(), model.m());
    let h = problem.horizon / problem.intervals as f64;
    let mut f = DMatrix::zeros(n + m, n + m);
    f.view_mut((0, 0), (n, n)).copy_from(&model.a);
    f.view_mut((0, n), (n, m)).copy_from(&model.b);
    let mut wmat = DMatrix::zeros(n + m, n + m);
    wmat.view_mut((0, 0), (n, n)).copy_from(&cost.q);
    wmat.view_mut((0, n), (n, m)).copy_from(&cost.s.transpose());
    wmat.view_mut((n, 0), (m, n)).copy_from(&cost.s);
    let weights = [1.0, 4.0, 2.0, 4.0, 1.0];
    let mut stage = DMatrix::zeros(n + m, n + m);
    for (k, wk) in weights.iter().enumerate() {
        let psi = (&f * (k as f64 * h / 4.0)).exp();
        stage += psi.transpose() * &wmat * &psi * (wk * h / 12.0);
    }
    let full = (&f * h).exp();
    let ad = full.view((0, 0), (n, n)).into_owned();
    let bd = full.view((0, n), (n, m)).into_owned();
    let mxx = stage.view((0, 0), (n, n)).into_owned();
    let mux = stage.view((n, 0), (m, n)).into_owned();
    let muu = stage.view((n, n), (m, m)).into_owned();

    let mut p = DMatrix::zeros(n, n);
    let mut gains = vec![DMatrix::zeros(m, n); problem.intervals];
    for k in (0..problem.intervals).rev() {
        let g = &muu + bd.transpose() * &p * &bd;
        let fk = &mux + bd.transpose() * &p * &ad;
        let gain = g.lu().solve(&fk).expect("Riccati step is well posed");
        p = &mxx + ad.transpose() * &p * &ad - fk.transpose() * &gain;
        p = (&p + p.transpose()) * 0.5;
        gains[k] = gain;
    }
    let value = 0.5 * problem.x0.dot(&(&p * &problem.x0));
    let mut x = problem.x0.clone();
    let inputs = gains
        .iter()
        .map(|k| {
            let u = -(k * &x);
            x = &ad * &x + &bd * &u;
            u
        })
        .collect();
    (inputs, value)
}

/// Cost of piecewise-constant inputs by RK4 with fine substeps and
/// composite Simpson on the same points.
pub fn simulated_cost(problem: &OcpScenario, inputs: &[DVector<f64>], substeps: usize) -> f64 {
    let (model, cost) = (&problem.model, &problem.cost);
    let h = problem.horizon / problem.intervals as f64;
    let dt = h / substeps as f64;
    let rhs = |t: f64, x: &DVector<f64>, u: &DVector<f64>| {
        &model.a * x + &model.b * u + &model.e * problem.disturbance.eval(t)
    };
    let mut x = problem.x0.clone();
    let mut total = 0.0;
    for (j, u) in inputs.iter().enumerate() {
        let t0 = j as f64 * h;
        let mut ls = vec![cost.running_cost(t0, &x, u)];
        for i in 0..substeps {
            let t = t0 + i as f64 * dt;
            let k1 = rhs(t, &x, u);
            let k2 = rhs(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)), u);
            let k3 = rhs(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)), u);
            let k4 = rhs(t + dt, &(&x + &k3 * dt), u);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            ls.push(cost.running_cost(t + dt, &x, u));
        }
        for (i, l) in ls.iter().enumerate() {
            let w = if i == 0 || i == substeps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            total += w * l * dt / 3.0;
        }
    }
    total
}

/// Exact minimiser of the simulated cost over the input box for scalar
/// inputs: the quadratic is recovered by polarisation and every
/// lower/free/upper pattern is enumerated.
pub fn brute_force(problem: &OcpScenario, substeps: usize) -> (Vec<f64>, f64) {
    assert_eq!(problem.model.m(), 1, "brute force handles one input");
    let big_n = problem.intervals;
    let cost = |u: &DVector<f64>| {
        let inputs: Vec<DVector<f64>> = u.iter().map(|&v| DVector::from_element(1, v)).collect();
        simulated_cost(problem, &inputs, substeps)
    };
    let unit = |i: usize, v: f64| {
        let mut u = DVector::zeros(big_n);
        u[i] = v;
        u
    };
    let c0 = cost(&DVector::zeros(big_n));
    let plus: Vec<f64> = (0..big_n).map(|i| cost(&unit(i, 1.0))).collect();
    let minus: Vec<f64> = (0..big_n).map(|i| cost(&unit(i, -1.0))).collect();
    let g = DVector::from_fn(big_n, |i, _| 0.5 * (plus[i] - minus[i]));
    let mut hess = DMatrix::from_fn(big_n, big_n, |i, j| if i == j { plus[i] + minus[i] - 2.0 * c0 } else { 0.0 });
    for i in 0..big_n {
        for j in i + 1..big_n {
            let both = cost(&(unit(i, 1.0) + unit(j, 1.0)));
            let v = both - c0 - g[i] - g[j] - 0.5 * (hess[(i, i)] + hess[(j, j)]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let (lo, hi) = (problem.bounds.lower[0], problem.bounds.upper[0]);
    let value = |u: &DVector<f64>| c0 + g.dot(u) + 0.5 * u.dot(&(&hess * u));
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..3usize.pow(big_n as u32) {
        let mut pattern = vec![0u8; big_n];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let mut u = DVector::from_fn(big_n, |i, _| match pattern[i] {
            1 => lo,
            2 => hi,
            _ => 0.0,
        });
        let free: Vec<usize> = (0..big_n).filter(|&i| pattern[i] == 0).collect();
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| hess[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| -(g[free[a]] + (0..big_n).map(|k| hess[(free[a], k)] * u[k]).sum::<f64>()));
            let Some(chol) = hf.cholesky() else { continue };
            let uf = chol.solve(&rhs);
            if uf.iter().any(|&v| v < lo - 1e-12 || v > hi + 1e-12) {
                continue;
            }
            for (a, &i) in free.iter().enumerate() {
                u[i] = uf[a];
            }
        }
        let v = value(&u);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((u, v));
        }
    }
    let (u, v) = best.expect("the box is nonempty");
    (u.iter().copied().collect(), v)
}
