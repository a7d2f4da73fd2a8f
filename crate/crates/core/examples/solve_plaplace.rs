//! Solves the weighted p-Laplace problem on a disc for several exponents and
//! prints the continuation path of the regularization.

use deglap::grid::{DomainMask, Grid2D, ScalarField, VectorField};
use deglap::solver::{solve, ProblemSpec, SolveOptions};
use deglap::weights::{MatrixWeightField, Sym2};

fn main() -> deglap::Result<()> {
    let grid = Grid2D::spanning(48, -1.0, 1.0)?;
    let mask = DomainMask::from_predicate(grid, |x| x[0].hypot(x[1]) < 0.95)?;
    // Rotated diag(3, 1): degenerate in no direction, anisotropic everywhere.
    let p_mat = Sym2::from_full([[3.0, 0.0], [0.0, 1.0]]).expect("symmetric").rotated(0.4);
    let weight = MatrixWeightField::constant(grid, p_mat)?;
    let forcing = VectorField::from_fn(grid, |x| [(3.0 * x[1]).sin(), 0.5]);
    let boundary = ScalarField::from_fn(grid, |x| x[0] * x[1]);
    for p in [1.5, 2.0, 3.0, 4.0] {
        let spec = ProblemSpec::new(mask.clone(), weight.clone(), p, forcing.clone(), boundary.clone())?;
        let rep = solve(&spec, &SolveOptions::default())?;
        let path: Vec<String> = rep.delta_path.iter().map(|d| format!("{d:.1e}")).collect();
        println!(
            "p = {p}: energy {:+.6e}, residual {:.1e}, {} Newton steps, delta path [{}], monotone {}",
            rep.energy,
            rep.weak_residual,
            rep.iterations,
            path.join(", "),
            rep.energy_monotone_within_stages()
        );
    }
    Ok(())
}
