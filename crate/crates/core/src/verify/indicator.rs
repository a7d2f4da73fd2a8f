//! Decay of the maximal function of a ball indicator across dyadic annuli.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::{annulus_cells, ball_cells, DomainMask, ScalarField};
use crate::lattice::RadiusLadder;
use crate::maximal::{fractional_maximal, MaximalConfig, DIM};
use crate::report::{num, nums, CheckReport};

/// On every cell of the `j`-th annulus around `B(y, rho)`, compares
/// `M chi_B` with `2^(-(j-1) n)` and records the slack
/// `C_disc = (M / bound - 1) * rho / h`. Passes when every slack is at most
/// `slack_max`.
///
/// Radii of at least `2^(j+2) rho` are also scanned on their own, where the
/// averages are bounded by `2^(-(j+2) n)`.
pub fn check_maximal_indicator(mask: &DomainMask, y: [f64; 2], rho: f64, j_max: u32, slack_max: f64, parallel: bool) -> Result<CheckReport> {
    let g = *mask.grid();
    if !(rho >= 4.0 * g.h) {
        return Err(Error::param("rho", format!("need rho >= 4h = {}, got {rho}", 4.0 * g.h)));
    }
    if j_max == 0 {
        return Err(Error::param("j_max", "must be at least 1"));
    }
    let mut f = ScalarField::zeros(g);
    for k in ball_cells(mask, y, rho) {
        f.values_mut()[k] = 1.0;
    }
    let ladder = RadiusLadder::default_for(mask);
    let cfg = MaximalConfig::new(0.0, ladder.clone())?.with_parallel(parallel);
    let m = fractional_maximal(&f, mask, &cfg)?;
    let ratio_scale = rho / g.h;
    let mut rep = CheckReport::new("maximal_indicator", "maximal-of-ball-indicator-decays-on-annuli");
    let mut rows = Vec::new();
    let mut worst: Option<(f64, u32, usize)> = None;
    let mut passed = true;
    for j in 1..=j_max {
        let cells = annulus_cells(mask, y, rho, j);
        let bound = 2f64.powf(-((j - 1) as f64) * DIM);
        let mut slack = f64::NEG_INFINITY;
        let mut peak = 0.0f64;
        let mut at = usize::MAX;
        for &k in &cells {
            let v = m.values()[k];
            let s = (v / bound - 1.0) * ratio_scale;
            peak = peak.max(v);
            if s > slack {
                slack = s;
                at = k;
            }
        }
        let far_cut = 2f64.powi(j as i32 + 2) * rho;
        let far_bound = 2f64.powf(-((j + 2) as f64) * DIM);
        let far_peak = match RadiusLadder::from_radii(ladder.radii().iter().copied().filter(|&r| r >= far_cut).collect()) {
            Ok(far) if !cells.is_empty() => {
                let fm = fractional_maximal(&f, mask, &MaximalConfig::new(0.0, far)?.with_parallel(parallel))?;
                Some(cells.iter().map(|&k| fm.values()[k]).fold(0.0, f64::max))
            }
            _ => None,
        };
        if !cells.is_empty() {
            passed &= slack <= slack_max;
            if worst.map_or(true, |w| slack > w.0) {
                worst = Some((slack, j, at));
            }
        }
        rows.push(json!({
            "j": j,
            "cells": cells.len(),
            "bound": bound,
            "max_value": num(peak),
            "C_disc": if cells.is_empty() { Value::Null } else { num(slack) },
            "far_bound": far_bound,
            "far_max_value": far_peak.map_or(Value::Null, num),
        }));
    }
    let (slack, j, at) = worst.ok_or(Error::EmptyCellSet)?;
    rep.set_constant(slack.max(0.0));
    rep.passed = passed;
    rep.witness("j", j)
        .witness("cell", at)
        .witness("center", nums(&g.center_of(at)))
        .witness("value", num(m.values()[at]))
        .witness("bound", 2f64.powf(-((j - 1) as f64) * DIM))
        .witness("C_disc", num(slack));
    rep.sweep("y", nums(&y)).sweep("rho", rho).sweep("j_max", j_max).sweep("slack_max", slack_max).sweep("annuli", Value::Array(rows));
    rep.with_grid(&g);
    rep.convention("annulus j: 2^j rho <= |x - y| < 2^(j+1) rho by cell center; ball open");
    rep.convention("M over the default radius ladder with zero extension");
    rep.convention("empirical_C is the largest C_disc, floored at 0");
    Ok(rep)
}
