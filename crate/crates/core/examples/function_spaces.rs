use deglap::grid::{ball_cells, make_rect_domain, ScalarField};
use deglap::lattice::RadiusLadder;
use deglap::spaces::{generalized_lorentz_norm, lorentz_norm, morrey_norm, LorentzIndices, MorreyShape, SigmaFunction, SigmaTable};
use deglap::weights::{ScalarWeight, WeightRole};

fn main() -> deglap::Result<()> {
    let n = 129;
    let mask = make_rect_domain(n, n, 1.0 / (n - 1) as f64)?;
    let mu = ScalarWeight::unit(*mask.grid(), WeightRole::Mu);

    // 3 times the indicator of a disc: closed forms are available.
    let cells = ball_cells(&mask, [0.5, 0.5], 0.25);
    let mut f = ScalarField::zeros(*mask.grid());
    for &k in &cells {
        f.values_mut()[k] = 3.0;
    }
    let area = cells.len() as f64 * mask.grid().cell_area();
    for (q, s) in [(2.0, f64::INFINITY), (2.0, 1.0), (1.0, 3.0)] {
        let idx = LorentzIndices::new(q, s)?;
        let closed = if s.is_infinite() { 3.0 * area.powf(1.0 / q) } else { (q / s).powf(1.0 / s) * 3.0 * area.powf(1.0 / q) };
        println!("L({q},{s}): {:.6} closed form {:.6}", lorentz_norm(&f, &mu, &mask, idx)?, closed);
    }

    let idx = LorentzIndices::new(2.0, 2.0)?;
    let smooth = ScalarField::from_fn(*mask.grid(), |x| (-8.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2))).exp());
    let (table, _) = SigmaTable::random_doubling(4, 6)?;
    for sigma in [SigmaFunction::Identity, SigmaFunction::Power { a: 2.0 }, SigmaFunction::Table(table)] {
        let (c1, c2) = sigma.doubling();
        println!(
            "Sigma {:<24} doubling ({c1:.2}, {c2:.2})  norm {:.6}",
            sigma.label(),
            generalized_lorentz_norm(&smooth, &mu, &mask, &sigma, idx)?
        );
    }

    let ladder = RadiusLadder::default_for(&mask);
    for upsilon in [0.5, 1.0, 1.5] {
        let shape = MorreyShape::power(upsilon)?;
        println!("Morrey q=2 upsilon={upsilon}: {:.6}", morrey_norm(&smooth, &mask, &shape, 2.0, &ladder)?);
    }
    Ok(())
}
