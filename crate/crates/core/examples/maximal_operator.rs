//! Fractional maximal function of a ball indicator, its distribution, and the
//! weak-type constant.

use deglap::grid::{ball_cells, make_rect_domain, ScalarField};
use deglap::maximal::{distribution, fractional_maximal, weak_type_constant, MaximalConfig};
use deglap::weights::{ScalarWeight, WeightRole};

fn main() -> deglap::Result<()> {
    let n = 97;
    let mask = make_rect_domain(n, n, 1.0 / (n - 1) as f64)?;
    let mut f = ScalarField::zeros(*mask.grid());
    for k in ball_cells(&mask, [0.5, 0.5], 0.1) {
        f.values_mut()[k] = 1.0;
    }
    let mu = ScalarWeight::unit(*mask.grid(), WeightRole::Mu);
    for alpha in [0.0, 0.5, 1.0] {
        let cfg = MaximalConfig::default_for(&mask, alpha)?;
        let m = fractional_maximal(&f, &mask, &cfg)?;
        let curve = distribution(&m, &mu, &mask, &[0.05, 0.1, 0.25, 0.5])?;
        let weak = weak_type_constant(&f, &mask, &cfg, 1.5)?;
        println!("alpha {alpha}: max {:.4}, |{{M > l}}| = {:?}", m.max_abs(&mask), curve.masses);
        println!("          weak-type constant (q = 1.5) {:.4} near level {:.4}", weak.constant, weak.lambda);
    }
    Ok(())
}
