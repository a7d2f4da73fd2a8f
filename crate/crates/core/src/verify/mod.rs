//! Empirical constants for the inequalities around the weighted p-Laplacian.
//!
//! Each check measures the smallest constant consistent with its samples and
//! returns a [`CheckReport`] carrying the witness that attains it.

mod estimates;
mod indicator;
mod instance;
mod levelset;
mod vphi;

pub use estimates::{check_comparison, check_energy_estimate, energy_ratio, ComparisonParams};
pub use indicator::check_maximal_indicator;
pub use instance::{random_family, shorthand, Instance, InstanceSpec, MatrixGen, ScalarGen, VectorGen};
pub use levelset::{check_levelset, check_norm_transfer, LevelSetParams, SpaceSpec};
pub use vphi::{check_vphi, random_pairs, vphi_eps_constant, vphi_ratio, VPHI_EPSILONS};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField};
use crate::report::CheckReport;
use crate::solver::{discrete_gradient, gradient_cells, solve, weighted_power, ProblemSpec, SolveOptions, SolveReport};

/// `|P grad u|^p`, `|P F|^p`, `|P grad g|^p` and `|P G|^p` with `G = F + grad g`,
/// all supported on the gradient cells.
#[derive(Debug, Clone)]
pub struct PowerFields {
    pub cells: Vec<usize>,
    pub grad_u: ScalarField,
    pub forcing: ScalarField,
    pub grad_g: ScalarField,
    pub data: ScalarField,
}

impl PowerFields {
    pub fn new(spec: &ProblemSpec, u: &ScalarField) -> Self {
        let g = *spec.grid();
        let cells: Vec<usize> = gradient_cells(&g, &spec.mask.active_flags()).iter().map(|c| c[0]).collect();
        let mut f = VectorField::zeros(g);
        for &k in &cells {
            f.values_mut()[k] = spec.forcing.values()[k];
        }
        let du = discrete_gradient(u, &spec.mask);
        let dg = discrete_gradient(&spec.boundary, &spec.mask);
        let mut total = f.clone();
        for (t, d) in total.values_mut().iter_mut().zip(dg.values()) {
            t[0] += d[0];
            t[1] += d[1];
        }
        let p = spec.p;
        PowerFields {
            grad_u: weighted_power(&spec.weight, &du, p),
            forcing: weighted_power(&spec.weight, &f, p),
            grad_g: weighted_power(&spec.weight, &dg, p),
            data: weighted_power(&spec.weight, &total, p),
            cells,
        }
    }
}

/// Solves and insists on convergence.
pub fn solve_checked(inst: &Instance, opts: &SolveOptions) -> Result<SolveReport> {
    let rep = solve(&inst.spec, opts)?;
    if !rep.converged {
        return Err(Error::Solver(format!(
            "instance {}: residual {:.3e} above tolerance {:.1e} after {} iterations",
            inst.id, rep.weak_residual, opts.tol, rep.iterations
        )));
    }
    Ok(rep)
}

/// `num / den` with `0 / 0 = 0` and `x / 0 = inf` for `x > 0`.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn tag_instance(rep: &mut CheckReport, inst: &Instance) {
    rep.with_grid(inst.spec.grid());
    rep.seed = Some(inst.seed);
    rep.sweep("instance", inst.descriptor());
}
