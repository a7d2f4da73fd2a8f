//! Fractional maximal operators and weighted distribution functions.
//!
//! `M_alpha f(z) = max_r r^alpha * avg_{B(z,r)} |f|` over a radius ladder, with
//! `f` extended by zero outside the domain. The average divides by the number
//! of lattice points in the disc, so cells outside the grid or the domain
//! count as zeros.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, DomainMask, ScalarField};
use crate::lattice::{DiscShape, RadiusLadder, RowPrefix};
use crate::weights::ScalarWeight;

/// Spatial dimension.
pub const DIM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalConfig {
    pub alpha: f64,
    pub ladder: RadiusLadder,
    /// Keep only radii strictly below this value.
    pub rho_cut: Option<f64>,
    /// Evaluate output cells on the rayon pool. Each cell is computed
    /// identically either way, so results do not depend on this flag.
    pub parallel: bool,
}

impl MaximalConfig {
    pub fn new(alpha: f64, ladder: RadiusLadder) -> Result<Self> {
        if !(0.0..DIM).contains(&alpha) {
            return Err(Error::param("alpha", format!("must lie in [0, 2), got {alpha}")));
        }
        Ok(MaximalConfig { alpha, ladder, rho_cut: None, parallel: false })
    }

    /// Default ladder: ratio `2^(1/4)` from `h` to twice the diameter.
    pub fn default_for(mask: &DomainMask, alpha: f64) -> Result<Self> {
        Self::new(alpha, RadiusLadder::default_for(mask))
    }

    pub fn with_rho_cut(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::param("rho_cut", format!("must be positive, got {rho}")));
        }
        self.rho_cut = Some(rho);
        Ok(self)
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Ladder after the cutoff; `None` when the cutoff removes every radius.
    pub fn effective_radii(&self) -> Vec<f64> {
        match self.rho_cut {
            Some(cut) => self.ladder.radii().iter().copied().filter(|&r| r < cut).collect(),
            None => self.ladder.radii().to_vec(),
        }
    }
}

fn map_cells(n: usize, parallel: bool, f: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// `M_alpha |f|` at every non-exterior cell, zero elsewhere.
pub fn fractional_maximal(f: &ScalarField, mask: &DomainMask, cfg: &MaximalConfig) -> Result<ScalarField> {
    let g = *mask.grid();
    g.ensure_same(f.grid())?;
    let vals = f.values();
    let prefix = RowPrefix::new(&g, |k| if mask.is_active(k) { vals[k].abs() } else { 0.0 });
    let discs: Vec<(f64, DiscShape)> = cfg
        .effective_radii()
        .into_iter()
        .map(|r| (r.powf(cfg.alpha), DiscShape::new(&g, r)))
        .collect();
    let out = map_cells(g.n_cells(), cfg.parallel, |z| {
        if !mask.is_active(z) {
            return 0.0;
        }
        let (i, j) = g.ij(z);
        discs
            .iter()
            .map(|(scale, d)| scale * (prefix.disc_sum(i, j, d) / d.count as f64))
            .fold(0.0, f64::max)
    });
    ScalarField::new(g, out)
}

/// Cheap `alpha = 0` stand-in using area-matched squares (side close to
/// `sqrt(pi) r`) and a 2D summed-area table. Only meant for smoke tests.
pub fn maximal_square_approx(f: &ScalarField, mask: &DomainMask, ladder: &RadiusLadder) -> Result<ScalarField> {
    let g = *mask.grid();
    g.ensure_same(f.grid())?;
    let (nx, ny) = (g.nx, g.ny);
    let mut sat = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let v = if mask.is_active(k) { f.values()[k].abs() } else { 0.0 };
            sat[(j + 1) * (nx + 1) + i + 1] = v + sat[j * (nx + 1) + i + 1] + sat[(j + 1) * (nx + 1) + i] - sat[j * (nx + 1) + i];
        }
    }
    let at = |i: usize, j: usize| sat[j * (nx + 1) + i];
    let halves: Vec<usize> = ladder
        .radii()
        .iter()
        .map(|r| ((std::f64::consts::PI.sqrt() * r / g.h - 1.0) / 2.0).max(0.0).round() as usize)
        .collect();
    let out = (0..g.n_cells())
        .map(|z| {
            if !mask.is_active(z) {
                return 0.0;
            }
            let (i, j) = g.ij(z);
            halves
                .iter()
                .map(|&w| {
                    let (i0, j0) = (i.saturating_sub(w), j.saturating_sub(w));
                    let (i1, j1) = ((i + w + 1).min(nx), (j + w + 1).min(ny));
                    let s = at(i1, j1) - at(i0, j1) - at(i1, j0) + at(i0, j0);
                    s / ((2 * w + 1) * (2 * w + 1)) as f64
                })
                .fold(0.0, f64::max)
        })
        .collect();
    ScalarField::new(g, out)
}

/// Step distribution of `|f|` under a weight: for distinct values
/// `v_1 > ... > v_m > 0`, `masses[k]` is the weighted area of `{|f| >= v_k}`,
/// which equals `d(lambda)` for `lambda` in `[v_(k+1), v_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub levels: Vec<f64>,
    pub masses: Vec<f64>,
}

impl StepDistribution {
    pub fn new(f: &ScalarField, mu: &ScalarWeight, mask: &DomainMask) -> Result<Self> {
        let g = mask.grid();
        g.ensure_same(f.grid())?;
        g.ensure_same(mu.grid())?;
        let mut pairs: Vec<(f64, f64)> = (0..g.n_cells())
            .filter(|&k| mask.is_active(k))
            .map(|k| (f.values()[k].abs(), mu.values()[k]))
            .filter(|&(v, _)| v > 0.0)
            .collect();
        if let Some(&(v, _)) = pairs.iter().find(|(v, _)| !v.is_finite()) {
            return Err(Error::param("f", format!("non-finite value {v}")));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let area = g.cell_area();
        let mut levels = Vec::new();
        let mut masses = Vec::new();
        let mut acc = 0.0;
        let mut k = 0;
        while k < pairs.len() {
            let v = pairs[k].0;
            while k < pairs.len() && pairs[k].0 == v {
                acc += pairs[k].1;
                k += 1;
            }
            levels.push(v);
            masses.push(area * acc);
        }
        Ok(StepDistribution { levels, masses })
    }

    /// `d(lambda)`, the weighted area of `{|f| > lambda}`.
    pub fn eval(&self, lambda: f64) -> f64 {
        // Levels are descending; count those strictly above lambda.
        let n = self.levels.partition_point(|&v| v > lambda);
        if n == 0 {
            0.0
        } else {
            self.masses[n - 1]
        }
    }

    pub fn max_level(&self) -> f64 {
        self.levels.first().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Sampled `lambda -> d(lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionCurve {
    pub lambdas: Vec<f64>,
    pub masses: Vec<f64>,
    pub weight_id: String,
}

impl DistributionCurve {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "mass"])?;
        for (l, m) in self.lambdas.iter().zip(&self.masses) {
            wr.write_record([fmt_f64(*l), fmt_f64(*m)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    if !lambdas.iter().all(|&l| l > 0.0 && l.is_finite()) {
        return Err(Error::param("lambdas", "levels must be positive and finite"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("lambdas", "levels must be ascending"));
    }
    Ok(())
}

/// `h^2 * sum_{|f| > lambda} mu` over non-exterior cells for each level.
pub fn distribution(f: &ScalarField, mu: &ScalarWeight, mask: &DomainMask, lambdas: &[f64]) -> Result<DistributionCurve> {
    check_lambdas(lambdas)?;
    let step = StepDistribution::new(f, mu, mask)?;
    Ok(DistributionCurve {
        lambdas: lambdas.to_vec(),
        masses: lambdas.iter().map(|&l| step.eval(l)).collect(),
        weight_id: mu.id(),
    })
}

/// Distribution of `M_alpha f`.
pub fn fractional_distribution(
    f: &ScalarField,
    mu: &ScalarWeight,
    mask: &DomainMask,
    cfg: &MaximalConfig,
    lambdas: &[f64],
) -> Result<DistributionCurve> {
    check_lambdas(lambdas)?;
    let m = fractional_maximal(f, mask, cfg)?;
    distribution(&m, mu, mask, lambdas)
}

/// Smallest `C` with `lambda^q |{M_alpha f > lambda}|^(1 - alpha q / 2) <= C ||f||_q^q`
/// over all levels, and the level approached at the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakTypeEstimate {
    pub constant: f64,
    pub lambda: f64,
}

pub fn weak_type_constant(f: &ScalarField, mask: &DomainMask, cfg: &MaximalConfig, q: f64) -> Result<WeakTypeEstimate> {
    let expo = 1.0 - cfg.alpha * q / DIM;
    if !(q >= 1.0) || !(expo > 0.0) {
        return Err(Error::param("q", format!("need 1 <= q < 2/alpha, got q={q} alpha={}", cfg.alpha)));
    }
    let g = mask.grid();
    let norm_q: f64 = g.cell_area()
        * (0..g.n_cells()).filter(|&k| mask.is_active(k)).map(|k| f.values()[k].abs().powf(q)).sum::<f64>();
    if norm_q == 0.0 {
        return Ok(WeakTypeEstimate { constant: 0.0, lambda: 0.0 });
    }
    let m = fractional_maximal(f, mask, cfg)?;
    let unit = ScalarWeight::unit(*g, crate::weights::WeightRole::Mu);
    let step = StepDistribution::new(&m, &unit, mask)?;
    // The sup over lambda is approached from below each jump value v_k,
    // where the level set is {M >= v_k}.
    let mut best = WeakTypeEstimate { constant: 0.0, lambda: 0.0 };
    for (&v, &mass) in step.levels.iter().zip(&step.masses) {
        let c = v.powf(q) * mass.powf(expo) / norm_q;
        if c > best.constant {
            best = WeakTypeEstimate { constant: c, lambda: v };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_rect_domain, Grid2D};
    use crate::weights::WeightRole;

    #[test]
    fn constant_field_alpha_zero() {
        let m = make_rect_domain(12, 12, 0.1).unwrap();
        // A ball around an edge cell loses mass to the zero extension, so
        // the max is the smallest ball.
        let f = ScalarField::constant(*m.grid(), 2.5);
        let cfg = MaximalConfig::default_for(&m, 0.0).unwrap();
        let mf = fractional_maximal(&f, &m, &cfg).unwrap();
        assert!(mf.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn indicator_peak_at_unit_radius() {
        let g = Grid2D::with_origin(81, 81, 0.05, [-2.0, -2.0]).unwrap();
        let m = crate::grid::DomainMask::full(g).unwrap();
        let f = ScalarField::from_fn(g, |p| if p[0].hypot(p[1]) < 1.0 { 1.0 } else { 0.0 });
        let ladder = RadiusLadder::geometric(0.05, 4.0, 2f64.powf(0.25)).unwrap();
        let mut radii = ladder.radii().to_vec();
        radii.push(1.0);
        radii.sort_by(f64::total_cmp);
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let ladder = RadiusLadder::from_radii(radii).unwrap();
        for alpha in [0.5, 1.0, 1.5] {
            let cfg = MaximalConfig::new(alpha, ladder.clone()).unwrap();
            let v = fractional_maximal(&f, &m, &cfg).unwrap().get(40, 40);
            assert!((v - 1.0).abs() < 0.03, "alpha {alpha}: {v}");
        }
    }

    #[test]
    fn rho_cut_truncates() {
        let m = make_rect_domain(16, 16, 1.0).unwrap();
        let cfg = MaximalConfig::default_for(&m, 0.0).unwrap().with_rho_cut(3.0).unwrap();
        assert!(cfg.effective_radii().iter().all(|&r| r < 3.0));
        assert!(MaximalConfig::default_for(&m, 2.0).is_err());
    }

    #[test]
    fn step_distribution_two_level() {
        let m = make_rect_domain(10, 10, 0.1).unwrap();
        let f = ScalarField::from_fn(*m.grid(), |p| if p[0] < 0.45 { 3.0 } else { 0.0 });
        let mu = ScalarWeight::unit(*m.grid(), WeightRole::Mu);
        let curve = distribution(&f, &mu, &m, &[1.0, 2.999, 3.0, 4.0]).unwrap();
        let area = 50.0 * m.grid().cell_area();
        assert_eq!(curve.masses, vec![area, area, 0.0, 0.0]);
        assert!(distribution(&f, &mu, &m, &[2.0, 1.0]).is_err());
        assert!(distribution(&f, &mu, &m, &[0.0]).is_err());
    }

    #[test]
    fn square_approx_smoke() {
        let m = make_rect_domain(16, 16, 1.0).unwrap();
        let f = ScalarField::constant(*m.grid(), 1.0);
        let s = maximal_square_approx(&f, &m, &RadiusLadder::default_for(&m)).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
    }
}
