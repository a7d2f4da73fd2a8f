//! Builds a square and a Lipschitz graph domain and prints their cell counts.

use deglap::grid::{make_lipschitz_domain, make_rect_domain, ball_cells, CellClass, Grid2D, LipschitzSpec};

fn main() -> deglap::Result<()> {
    let square = make_rect_domain(32, 32, 1.0 / 31.0)?;
    report("square", &square);

    // A kinked graph with slope 0.2 on both sides of the tip.
    let grid = Grid2D::spanning(48, -0.5, 1.5)?;
    let spec = LipschitzSpec::sample(&grid, 0.25, 0.5, |y1| 0.3 + 0.2 * (y1 - 0.5).abs());
    println!("sampled slope {:.3}", spec.max_slope(grid.h));
    let kinked = make_lipschitz_domain(grid, spec)?;
    report("kinked", &kinked);

    let near_tip = ball_cells(&kinked, [0.5, 0.35], 0.2);
    println!("cells of the kinked domain within 0.2 of the tip: {}", near_tip.len());
    Ok(())
}

fn report(name: &str, m: &deglap::grid::DomainMask) {
    println!(
        "{name}: interior {} boundary {} exterior {} measure {:.4} diameter {:.4}",
        m.count(CellClass::Interior),
        m.count(CellClass::Boundary),
        m.count(CellClass::Exterior),
        m.measure(),
        m.diameter()
    );
}
