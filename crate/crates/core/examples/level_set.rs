//! Good-lambda check on two instances: smooth data, where the data maximal
//! dominates at every level, and data built to cancel the boundary gradient.

use deglap::solver::SolveOptions;
use deglap::verify::{check_levelset, solve_checked, InstanceSpec, LevelSetParams, MatrixGen, ScalarGen, VectorGen};
use deglap::weights::{ScalarWeight, WeightRole};

fn main() -> deglap::Result<()> {
    let fourier = ScalarGen::Fourier { modes: 3, amplitude: 1.0 };
    let smooth = InstanceSpec::new(33, 2.0, MatrixGen::Identity, VectorGen::Fourier { modes: 3, amplitude: 1.0 }, fourier.clone(), 5);
    let cancelling = InstanceSpec::new(
        33,
        2.0,
        MatrixGen::Identity,
        VectorGen::Sum { terms: vec![VectorGen::GradG { scale: -1.0 }, VectorGen::Fourier { modes: 3, amplitude: 0.1 }] },
        fourier,
        5,
    );
    for (name, spec) in [("smooth", smooth), ("cancelling", cancelling)] {
        let inst = spec.build()?;
        let u = solve_checked(&inst, &SolveOptions::default())?.u;
        let mu = ScalarWeight::unit(*inst.spec.mask.grid(), WeightRole::Mu);
        for alpha in [0.0, 0.5] {
            let rep = check_levelset(&inst, &u, &mu, &LevelSetParams::new(alpha, 0.5, vec![0.5, 0.1]))?;
            println!("{name:>10} alpha {alpha}: C = {:.4} (passed {})", rep.empirical_c.unwrap_or(f64::INFINITY), rep.passed);
        }
    }
    Ok(())
}
