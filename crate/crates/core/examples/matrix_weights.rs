use deglap::grid::{make_rect_domain, ScalarField};
use deglap::lattice::RadiusLadder;
use deglap::verify::MatrixGen;
use deglap::weights::{
    a_infty_params, ellipticity_lambda, log_bmo_scan, muckenhoupt_aq, scalar_weight_of, ScalarWeight, SubsetFamily, WeightRole,
};

fn main() -> deglap::Result<()> {
    let n = 65;
    let mask = make_rect_domain(n, n, 1.0 / (n - 1) as f64)?;
    let ladder = RadiusLadder::default_for(&mask);

    // Smoothly rotating anisotropy whose log has a prescribed oscillation.
    for target in [0.02, 0.1, 0.3] {
        let w = MatrixGen::RotatedAnisotropy { log_bmo: target, modes: 3 }.build(&mask, 9)?;
        let est = log_bmo_scan(&w, &mask, &ladder, 2)?;
        println!(
            "target {target:>5}: measured log-BMO {:.4} at r = {:.3}, condition number bound {:.3}",
            est.value,
            est.radius,
            ellipticity_lambda(&w)
        );
        let omega = scalar_weight_of(&w);
        println!("           A_2 of |P| = {:.4}", muckenhoupt_aq(&omega, &mask, 2.0, &ladder)?);
    }

    // A power weight vanishing at a point just off the cell centers.
    let tip = [0.5 + 0.5 * mask.grid().h, 0.5 + 0.5 * mask.grid().h];
    let power = ScalarWeight::new(ScalarField::from_fn(*mask.grid(), |x| (x[0] - tip[0]).hypot(x[1] - tip[1]).powf(0.5)), WeightRole::Omega)?;
    println!("A_2 of |x|^(1/2) = {:.4}", muckenhoupt_aq(&power, &mask, 2.0, &ladder)?);
    let family = SubsetFamily::generate(&mask, &ladder, 8, 2, 1);
    let a = a_infty_params(&power, &mask, &family)?;
    println!("A_infinity exponents: nu1 = {:.3}, nu2 = {:.3} over {} pairs", a.nu1, a.nu2, a.pairs_used);
    Ok(())
}
