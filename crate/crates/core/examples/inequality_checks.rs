use deglap::maximal::DIM;
use deglap::grid::make_rect_domain;
use deglap::spaces::{sigma_doubling_checks, SigmaFunction};
use deglap::verify::{check_maximal_indicator, check_vphi};

fn main() -> deglap::Result<()> {
    for p in [1.25, 1.5, 2.0, 3.0, 4.0] {
        let rep = check_vphi(p, 20_000, 1)?;
        println!("V_p comparison, p = {p}: C = {:.4}", rep.empirical_c.unwrap_or(f64::INFINITY));
    }

    for sigma in [SigmaFunction::Identity, SigmaFunction::Power { a: 2.0 }] {
        let rep = sigma_doubling_checks(&sigma, 10_000, 2)?;
        println!("{}: passed {}", sigma.label(), rep.passed);
    }

    let n = 129;
    let mask = make_rect_domain(n, n, 1.0 / (n - 1) as f64)?;
    let h = mask.grid().h;
    let rep = check_maximal_indicator(&mask, [0.5, 0.5], 12.0 * h, 3, 8.0, false)?;
    println!("ball indicator decay in dimension {DIM}: passed {}, slack {:.3}", rep.passed, rep.empirical_c.unwrap_or(f64::INFINITY));
    println!("{}", rep.to_json());
    Ok(())
}
