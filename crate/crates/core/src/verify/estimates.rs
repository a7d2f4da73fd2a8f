//! Global energy bound and the local comparison with a homogeneous solution.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{safe_ratio, solve_checked, tag_instance, Instance, PowerFields};
use crate::error::{Error, Result};
use crate::grid::{ball_cells, ScalarField};
use crate::report::{num, nums, CheckReport};
use crate::solver::{gradient_cells, solve_homogeneous, SolveOptions};

/// `(int |P grad u|^p, int |P F|^p + int |P grad g|^p)` over the gradient cells.
pub fn energy_ratio(inst: &Instance, u: &ScalarField) -> (f64, f64) {
    let f = PowerFields::new(&inst.spec, u);
    let area = inst.spec.grid().cell_area();
    let sum = |s: &ScalarField| f.cells.iter().map(|&k| s.values()[k]).sum::<f64>() * area;
    (sum(&f.grad_u), sum(&f.forcing) + sum(&f.grad_g))
}

/// Worst ratio of the energy of the solution to the energy of the data.
pub fn check_energy_estimate(instances: &[Instance], opts: &SolveOptions) -> Result<CheckReport> {
    if instances.is_empty() {
        return Err(Error::param("instances", "need at least one instance"));
    }
    let mut rep = CheckReport::new("energy_estimate", "solution-energy-bounded-by-data-energy");
    let mut rows = Vec::new();
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for (i, inst) in instances.iter().enumerate() {
        let sol = solve_checked(inst, opts)?;
        let (lhs, rhs) = energy_ratio(inst, &sol.u);
        let ratio = safe_ratio(lhs, rhs);
        if best.map_or(true, |b| ratio > b.0) {
            best = Some((ratio, i, lhs, rhs));
        }
        let mut row = inst.descriptor();
        row["ratio"] = num(ratio);
        row["lhs"] = num(lhs);
        row["rhs"] = num(rhs);
        row["iterations"] = json!(sol.iterations);
        row["weak_residual"] = num(sol.weak_residual);
        rows.push(row);
    }
    let (ratio, i, lhs, rhs) = best.expect("non-empty");
    rep.set_constant(ratio);
    rep.passed = ratio.is_finite();
    rep.witness("instance", instances[i].descriptor()).witness("lhs", num(lhs)).witness("rhs", num(rhs)).witness("ratio", num(ratio));
    rep.sweep("instances", Value::Array(rows));
    rep.with_grid(instances[i].spec.grid());
    rep.seed = Some(instances[0].seed);
    rep.convention("integrals are h^2 sums over gradient cells");
    rep.convention("0/0 counts as ratio 0");
    Ok(rep)
}

fn default_comparison_eps() -> Vec<f64> {
    vec![0.5, 0.1]
}
fn default_gammas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonParams {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_comparison_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

impl ComparisonParams {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        ComparisonParams { center, radius, eps: default_comparison_eps(), gammas: default_gammas() }
    }
}

fn mean_over(field: &ScalarField, cells: &[usize], power: f64) -> f64 {
    cells.iter().map(|&k| field.values()[k].powf(power)).sum::<f64>() / cells.len() as f64
}

/// Compares `u` with the homogeneous solution `v` on `B ∩ Omega` whose rim
/// values are `u - g`, and measures the reverse Hoelder constant of `v`
/// between the 1/16 and 1/2 concentric balls.
pub fn check_comparison(inst: &Instance, params: &ComparisonParams, opts: &SolveOptions) -> Result<CheckReport> {
    if !(params.radius > 0.0) {
        return Err(Error::param("radius", format!("must be positive, got {}", params.radius)));
    }
    let spec = &inst.spec;
    let g = *spec.grid();
    let region = ball_cells(&spec.mask, params.center, params.radius);
    if region.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let u = solve_checked(inst, opts)?.u;
    let rim = ScalarField::new(g, u.values().iter().zip(spec.boundary.values()).map(|(a, b)| a - b).collect())?;
    let vrep = solve_homogeneous(spec, &region, &rim, opts)?;
    if !vrep.converged {
        return Err(Error::Solver(format!("instance {}: comparison solve residual {:.3e}", inst.id, vrep.weak_residual)));
    }
    let v = vrep.u;
    let mut flags = vec![false; g.n_cells()];
    for &k in &region {
        flags[k] = true;
    }
    let cells: Vec<usize> = gradient_cells(&g, &flags).iter().map(|c| c[0]).collect();
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let within = |scale: f64| -> Vec<usize> {
        let r = scale * params.radius;
        cells.iter().copied().filter(|&k| {
            let x = g.center_of(k);
            (x[0] - params.center[0]).hypot(x[1] - params.center[1]) < r
        })
        .collect()
    };
    let pu = PowerFields::new(spec, &u);
    // |P grad u - P grad v|^p over the region's gradient cells.
    let diff = ScalarField::new(g, u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect())?;
    let pd = PowerFields::new(spec, &diff).grad_u;
    let pv = PowerFields::new(spec, &v).grad_u;
    let a_diff = mean_over(&pd, &cells, 1.0);
    let a_u = mean_over(&pu.grad_u, &cells, 1.0);
    let a_data = mean_over(&pu.forcing, &cells, 1.0) + mean_over(&pu.grad_g, &cells, 1.0);

    let mut rep = CheckReport::new("comparison", "local-comparison-with-homogeneous-solution");
    let mut comp = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for &eps in &params.eps {
        let c = safe_ratio(a_diff - eps * a_u, a_data);
        if c > worst.0 || comp.is_empty() {
            worst = (c, eps);
        }
        comp.push(json!({ "eps": eps, "C": num(c) }));
    }
    let small = within(1.0 / 16.0);
    let half = within(0.5);
    if small.is_empty() || half.is_empty() {
        return Err(Error::param("radius", "the 1/16 ball contains no gradient cell; enlarge the ball"));
    }
    let mut rh = Vec::new();
    let mut rh_finite = true;
    for &gamma in &params.gammas {
        let lhs = mean_over(&pv, &small, gamma).powf(1.0 / gamma);
        let rhs = mean_over(&pv, &half, 1.0) + mean_over(&pu.grad_g, &half, gamma).powf(1.0 / gamma);
        let c = safe_ratio(lhs, rhs);
        rh_finite &= c.is_finite();
        rh.push(json!({ "gamma": gamma, "C": num(c), "lhs": num(lhs), "rhs": num(rhs) }));
    }
    rep.set_constant(worst.0);
    rep.passed = worst.0.is_finite() && rh_finite;
    rep.witness("eps", worst.1)
        .witness("mean_diff", num(a_diff))
        .witness("mean_grad_u", num(a_u))
        .witness("mean_data", num(a_data))
        .witness("comparison", Value::Array(comp))
        .witness("reverse_holder", Value::Array(rh))
        .witness("area_ratio_half_to_sixteenth", num(half.len() as f64 / small.len() as f64));
    rep.sweep("center", nums(&params.center)).sweep("radius", params.radius).sweep("eps", nums(&params.eps)).sweep("gamma", nums(&params.gammas));
    tag_instance(&mut rep, inst);
    rep.convention("v has rim values u - g on the cells of B ∩ Omega");
    rep.convention("averages over gradient cells of B ∩ Omega; concentric balls by cell center");
    rep.convention("empirical_C is the largest comparison constant over eps");
    Ok(rep)
}
