//! Weighted Lebesgue, Lorentz, two-weight Lorentz and Morrey-type norms, and
//! doubling functions used to build two-weight Lorentz spaces.
//!
//! Lorentz norms are evaluated from the step distribution of the field. With
//! distinct values `v_1 > ... > v_m > 0` and masses `M_k = mu({|f| >= v_k})`,
//! the level integral is exact on each interval `[v_(k+1), v_k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, ScalarField};
use crate::lattice::{DiscShape, RadiusLadder, RowPrefix};
use crate::maximal::StepDistribution;
use crate::report::{num, CheckReport};
use crate::weights::ScalarWeight;

/// `(h^2 * sum |f|^q * omega^q)^(1/q)` over non-exterior cells.
pub fn weighted_lq_norm(f: &ScalarField, omega: &ScalarWeight, mask: &DomainMask, q: f64) -> Result<f64> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::param("q", format!("must be positive and finite, got {q}")));
    }
    let g = mask.grid();
    g.ensure_same(f.grid())?;
    g.ensure_same(omega.grid())?;
    let (fv, wv) = (f.values(), omega.values());
    let s: f64 = (0..g.n_cells())
        .filter(|&k| mask.is_active(k))
        .map(|k| (fv[k].abs() * wv[k]).powf(q))
        .sum();
    Ok((g.cell_area() * s).powf(1.0 / q))
}

/// Lorentz exponents `q > 0` and `0 < s <= inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzIndices {
    pub q: f64,
    pub s: f64,
}

impl LorentzIndices {
    pub fn new(q: f64, s: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::param("q", format!("must be positive and finite, got {q}")));
        }
        if !(s > 0.0) {
            return Err(Error::param("s", format!("must be positive or infinite, got {s}")));
        }
        Ok(LorentzIndices { q, s })
    }

    pub fn label(&self) -> String {
        if self.s.is_infinite() {
            format!("q={},s=inf", self.q)
        } else {
            format!("q={},s={}", self.q, self.s)
        }
    }
}

/// How the level integral is evaluated for finite `s`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LevelQuadrature {
    /// Exact integration between the jump points of the step distribution.
    #[default]
    JumpPoints,
    /// Trapezoid rule in `ln(lambda)` on `points` log-spaced levels spanning
    /// `[1e-6, 1 + 1e-9] * max|f|`.
    LogGrid { points: usize },
}

fn lorentz_core(step: &StepDistribution, idx: LorentzIndices, quad: LevelQuadrature, sigma: impl Fn(f64) -> f64) -> f64 {
    if step.is_zero() {
        return 0.0;
    }
    let (q, s) = (idx.q, idx.s);
    if s.is_infinite() {
        return step
            .levels
            .iter()
            .zip(&step.masses)
            .map(|(&v, &m)| v * sigma(m).powf(1.0 / q))
            .fold(0.0, f64::max);
    }
    match quad {
        LevelQuadrature::JumpPoints => {
            let n = step.levels.len();
            let mut acc = 0.0;
            for k in 0..n {
                let v = step.levels[k];
                let next = if k + 1 < n { step.levels[k + 1] } else { 0.0 };
                acc += sigma(step.masses[k]).powf(s / q) * (v.powf(s) - next.powf(s));
            }
            (q / s * acc).powf(1.0 / s)
        }
        LevelQuadrature::LogGrid { points } => {
            let points = points.max(2);
            let top = step.max_level();
            let (lo, hi) = ((top * 1e-6).ln(), (top * (1.0 + 1e-9)).ln());
            let dt = (hi - lo) / (points - 1) as f64;
            let integrand = |i: usize| {
                let lam = (lo + dt * i as f64).exp();
                q * (lam.powf(q) * sigma(step.eval(lam))).powf(s / q)
            };
            let mut acc = 0.5 * (integrand(0) + integrand(points - 1));
            for i in 1..points - 1 {
                acc += integrand(i);
            }
            (acc * dt).powf(1.0 / s)
        }
    }
}

/// Weighted Lorentz quasi-norm with exact jump-point integration.
pub fn lorentz_norm(f: &ScalarField, mu: &ScalarWeight, mask: &DomainMask, idx: LorentzIndices) -> Result<f64> {
    lorentz_norm_with(f, mu, mask, idx, LevelQuadrature::JumpPoints)
}

pub fn lorentz_norm_with(f: &ScalarField, mu: &ScalarWeight, mask: &DomainMask, idx: LorentzIndices, quad: LevelQuadrature) -> Result<f64> {
    let step = StepDistribution::new(f, mu, mask)?;
    Ok(lorentz_core(&step, idx, quad, |t| t))
}

/// Lorentz quasi-norm with the distribution composed with `sigma`.
pub fn generalized_lorentz_norm(f: &ScalarField, mu: &ScalarWeight, mask: &DomainMask, sigma: &SigmaFunction, idx: LorentzIndices) -> Result<f64> {
    generalized_lorentz_norm_with(f, mu, mask, sigma, idx, LevelQuadrature::JumpPoints)
}

pub fn generalized_lorentz_norm_with(
    f: &ScalarField,
    mu: &ScalarWeight,
    mask: &DomainMask,
    sigma: &SigmaFunction,
    idx: LorentzIndices,
    quad: LevelQuadrature,
) -> Result<f64> {
    sigma.validate()?;
    let step = StepDistribution::new(f, mu, mask)?;
    Ok(lorentz_core(&step, idx, quad, |t| sigma.eval(t)))
}

/// Cumulative table of a doubling function on the geometric nodes
/// `t_i = t0 * 2^(i / per_octave)`, interpolated log-log between nodes and
/// extended self-similarly (with the first and last octave ratios) outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaTable {
    pub t0: f64,
    pub per_octave: usize,
    /// `Sigma(t_i)`, strictly positive and non-decreasing.
    pub values: Vec<f64>,
    /// Density samples at the nodes when the table came from a density.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<f64>,
}

impl SigmaTable {
    pub fn new(t0: f64, per_octave: usize, values: Vec<f64>) -> Result<Self> {
        let t = SigmaTable { t0, per_octave, values, density: Vec::new() };
        t.validate()?;
        Ok(t)
    }

    /// Tabulates `Sigma(t) = int_0^t nu` over `octaves` octaves from `t0`
    /// with composite Simpson quadrature. Doubling constants are certified on
    /// the resulting table, so quadrature error cannot break them.
    pub fn from_density(nu: impl Fn(f64) -> f64, t0: f64, octaves: usize, per_octave: usize) -> Result<Self> {
        if !(t0 > 0.0) || per_octave == 0 || octaves == 0 {
            return Err(Error::InvalidSigma("need t0 > 0 and a non-empty grid".into()));
        }
        let n = octaves * per_octave + 1;
        let node = |i: usize| t0 * 2f64.powf(i as f64 / per_octave as f64);
        let mut values = Vec::with_capacity(n);
        // Dyadic pieces towards zero keep Simpson accurate for densities
        // like s^(a-1) whose derivative blows up at the origin.
        let mut acc: f64 = (0..64).map(|k| simpson(&nu, t0 * 0.5f64.powi(k + 1), t0 * 0.5f64.powi(k), 16)).sum();
        values.push(acc);
        for i in 1..n {
            acc += simpson(&nu, node(i - 1), node(i), 32);
            values.push(acc);
        }
        let density = (0..n).map(|i| nu(node(i))).collect::<Vec<_>>();
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidSigma("density must be finite and non-negative".into()));
        }
        let t = SigmaTable { t0, per_octave, values, density };
        t.validate()?;
        Ok(t)
    }

    /// Density `sum_i w_i a_i s^(a_i - 1)` with `a_i` in `[1, 3]` and positive
    /// weights, i.e. `Sigma(t) = sum_i w_i t^(a_i)`.
    pub fn random_doubling(seed: u64, terms: usize) -> Result<(Self, Vec<(f64, f64)>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<(f64, f64)> = (0..terms.max(1)).map(|_| (rng.gen_range(0.1..2.0), rng.gen_range(1.0..3.0))).collect();
        let nu = |s: f64| parts.iter().map(|&(w, a)| w * a * s.powf(a - 1.0)).sum::<f64>();
        let table = Self::from_density(nu, 1e-4, 32, 8)?;
        Ok((table, parts))
    }

    fn node(&self, i: usize) -> f64 {
        self.t0 * 2f64.powf(i as f64 / self.per_octave as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) || self.per_octave == 0 {
            return Err(Error::InvalidSigma("need t0 > 0 and per_octave >= 1".into()));
        }
        if self.values.len() < self.per_octave + 2 {
            return Err(Error::InvalidSigma("table must cover more than one octave".into()));
        }
        if self.values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSigma("table values must be positive and finite".into()));
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSigma("table must be non-decreasing".into()));
        }
        let (c1, _) = self.doubling();
        if !(c1 > 1.0) {
            return Err(Error::InvalidSigma(format!("lower doubling constant {c1} is not above 1")));
        }
        Ok(())
    }

    /// `(min, max)` of `Sigma(2 t_i) / Sigma(t_i)` over the node pairs.
    pub fn doubling(&self) -> (f64, f64) {
        let k = self.per_octave;
        (0..self.values.len() - k)
            .map(|i| self.values[i + k] / self.values[i])
            .fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    fn first_ratio(&self) -> f64 {
        self.values[self.per_octave] / self.values[0]
    }

    fn last_ratio(&self) -> f64 {
        let n = self.values.len() - 1;
        self.values[n] / self.values[n - self.per_octave]
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let n = self.values.len() - 1;
        let top = self.node(n);
        if t < self.t0 {
            let m = (self.t0 / t).log2().ceil().max(1.0);
            let inner = (t * 2f64.powf(m)).max(self.t0);
            return self.interp(inner) / self.first_ratio().powf(m);
        }
        if t > top {
            let m = (t / top).log2().ceil().max(1.0);
            let inner = (t / 2f64.powf(m)).min(top);
            return self.interp(inner) * self.last_ratio().powf(m);
        }
        self.interp(t)
    }

    fn interp(&self, t: f64) -> f64 {
        let n = self.values.len() - 1;
        let u = (t / self.t0).log2() * self.per_octave as f64;
        let i = (u.floor().max(0.0) as usize).min(n - 1);
        let frac = (u - i as f64).clamp(0.0, 1.0);
        if frac == 0.0 {
            return self.values[i];
        }
        if frac == 1.0 {
            return self.values[i + 1];
        }
        let (a, b) = (self.values[i].ln(), self.values[i + 1].ln());
        (a + frac * (b - a)).exp()
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Non-decreasing doubling function `Sigma(t) = int_0^t nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaFunction {
    /// `Sigma(t) = t`.
    Identity,
    /// `Sigma(t) = t^a` with `a > 0`.
    Power { a: f64 },
    Table(SigmaTable),
}

impl SigmaFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SigmaFunction::Identity => t,
            SigmaFunction::Power { a } => {
                if t > 0.0 {
                    t.powf(*a)
                } else {
                    0.0
                }
            }
            SigmaFunction::Table(tab) => tab.eval(t),
        }
    }

    /// Doubling constants `(c1, c2)` with `c1 Sigma(t) <= Sigma(2t) <= c2 Sigma(t)`.
    pub fn doubling(&self) -> (f64, f64) {
        match self {
            SigmaFunction::Identity => (2.0, 2.0),
            SigmaFunction::Power { a } => (2f64.powf(*a), 2f64.powf(*a)),
            SigmaFunction::Table(tab) => tab.doubling(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaFunction::Identity => Ok(()),
            SigmaFunction::Power { a } if *a > 0.0 && a.is_finite() => Ok(()),
            SigmaFunction::Power { a } => Err(Error::InvalidSigma(format!("power exponent must be positive, got {a}"))),
            SigmaFunction::Table(tab) => tab.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SigmaFunction::Identity => "identity".into(),
            SigmaFunction::Power { a } => format!("power(a={a})"),
            SigmaFunction::Table(t) => format!("table(t0={},per_octave={},n={})", t.t0, t.per_octave, t.values.len()),
        }
    }
}

/// Samples both doubling consequences (subadditivity up to `c2` and the
/// power-type decay `Sigma(eps t) <= c1 eps^(log2 c1) Sigma(t)` for
/// `eps` in the open interval `(0, 1/2)`) and counts violations.
pub fn sigma_doubling_checks(sigma: &SigmaFunction, samples: usize, seed: u64) -> Result<CheckReport> {
    sigma.validate()?;
    let (c1, c2) = sigma.doubling();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = match sigma {
        SigmaFunction::Table(t) => ((t.t0 / 16.0).ln(), (t.node(t.values.len() - 1) * 16.0).ln()),
        _ => ((1e-6f64).ln(), (1e6f64).ln()),
    };
    let expo = c1.log2();
    let tol = 1e-12;
    let (mut worst_sub, mut w_sub) = (0.0f64, (0.0, 0.0));
    let (mut worst_dec, mut w_dec) = (0.0f64, (0.0, 0.0));
    let (mut bad_sub, mut bad_dec) = (0usize, 0usize);
    for _ in 0..samples {
        let s1 = rng.gen_range(lo..hi).exp();
        let s2 = rng.gen_range(lo..hi).exp();
        let r = sigma.eval(s1 + s2) / (c2 * (sigma.eval(s1) + sigma.eval(s2)));
        if r > 1.0 + tol {
            bad_sub += 1;
        }
        if r > worst_sub {
            worst_sub = r;
            w_sub = (s1, s2);
        }
        let mut eps = 0.0;
        while eps == 0.0 {
            eps = rng.gen_range(0.0..0.5);
        }
        let t = rng.gen_range(lo..hi).exp();
        let r = sigma.eval(eps * t) / (c1 * eps.powf(expo) * sigma.eval(t));
        if r > 1.0 + tol {
            bad_dec += 1;
        }
        if r > worst_dec {
            worst_dec = r;
            w_dec = (eps, t);
        }
    }
    let mut rep = CheckReport::new("sigma_doubling", "doubling-function-subadditivity-and-decay");
    rep.passed = bad_sub == 0 && bad_dec == 0;
    rep.set_constant(worst_sub.max(worst_dec));
    rep.seed = Some(seed);
    rep.witness("subadditive_ratio", num(worst_sub))
        .witness("sigma1", num(w_sub.0))
        .witness("sigma2", num(w_sub.1))
        .witness("decay_ratio", num(worst_dec))
        .witness("eps", num(w_dec.0))
        .witness("t", num(w_dec.1))
        .witness("violations_subadditive", bad_sub as u64)
        .witness("violations_decay", bad_dec as u64);
    rep.sweep("sigma", sigma.label())
        .sweep("samples", samples as u64)
        .sweep("c1", num(c1))
        .sweep("c2", num(c2))
        .sweep("eps_range", "(0, 0.5) open")
        .sweep("t_range", serde_json::json!([num(lo.exp()), num(hi.exp())]));
    rep.convention("ratios are lhs / rhs; a value above 1 + 1e-12 counts as a violation");
    rep.convention("empirical_C is the largest ratio of either inequality");
    Ok(rep)
}

/// Radial profile `psi(z, r)` of a Morrey-type norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Psi {
    /// `psi = r^upsilon`.
    Power { upsilon: f64 },
    /// `psi = |B(z, r) ∩ Omega|`, which turns the norm into a sup of averages.
    BallArea,
    /// `psi(r)` tabulated at ascending radii, log-log interpolated and
    /// extended by the end slopes.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

/// Morrey profile together with its doubling exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorreyShape {
    pub psi: Psi,
    pub upsilon: f64,
}

impl MorreyShape {
    /// `psi = r^upsilon` with `0 < upsilon < 2`.
    pub fn power(upsilon: f64) -> Result<Self> {
        if !(upsilon > 0.0 && upsilon < 2.0) {
            return Err(Error::param("upsilon", format!("must lie in (0, 2), got {upsilon}")));
        }
        Ok(MorreyShape { psi: Psi::Power { upsilon }, upsilon })
    }

    pub fn ball_area() -> Self {
        MorreyShape { psi: Psi::BallArea, upsilon: 2.0 }
    }

    /// Tabulated profile; `upsilon` is the smallest exponent with
    /// `psi(2t) <= 2^upsilon psi(t)` on the table's sampled pairs.
    pub fn table(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::param("psi", "need at least two (radius, value) samples"));
        }
        RadiusLadder::from_radii(radii.clone())?;
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::param("psi", "values must be positive"));
        }
        let mut upsilon: f64 = 0.0;
        let psi = Psi::Table { radii: radii.clone(), values };
        for &t in &radii {
            upsilon = upsilon.max((psi_eval(&psi, 2.0 * t, 0.0) / psi_eval(&psi, t, 0.0)).log2());
        }
        Ok(MorreyShape { psi, upsilon })
    }
}

fn psi_eval(psi: &Psi, r: f64, area: f64) -> f64 {
    match psi {
        Psi::Power { upsilon } => r.powf(*upsilon),
        Psi::BallArea => area,
        Psi::Table { radii, values } => {
            let n = radii.len();
            let seg = radii.partition_point(|&x| x <= r).clamp(1, n - 1) - 1;
            let (x0, x1) = (radii[seg].ln(), radii[seg + 1].ln());
            let (y0, y1) = (values[seg].ln(), values[seg + 1].ln());
            (y0 + (r.ln() - x0) * (y1 - y0) / (x1 - x0)).exp()
        }
    }
}

/// Location of the largest normalized local integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MorreyEstimate {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// `sup (psi(z, r)^-1 int_{B(z,r) ∩ Omega} |f|^q)^(1/q)` over non-exterior
/// centers and the ladder radii below the domain diameter.
pub fn morrey_norm(f: &ScalarField, mask: &DomainMask, shape: &MorreyShape, q: f64, ladder: &RadiusLadder) -> Result<f64> {
    Ok(morrey_scan(f, mask, shape, q, ladder)?.value)
}

pub fn morrey_scan(f: &ScalarField, mask: &DomainMask, shape: &MorreyShape, q: f64, ladder: &RadiusLadder) -> Result<MorreyEstimate> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::param("q", format!("must be positive and finite, got {q}")));
    }
    let g = *mask.grid();
    g.ensure_same(f.grid())?;
    let area = g.cell_area();
    let fv = f.values();
    let pf = RowPrefix::new(&g, |k| if mask.is_active(k) { fv[k].abs().powf(q) } else { 0.0 });
    let pn = RowPrefix::new(&g, |k| if mask.is_active(k) { 1.0 } else { 0.0 });
    let mut best = MorreyEstimate { value: 0.0, center: usize::MAX, radius: 0.0 };
    for &r in ladder.radii().iter().filter(|&&r| r < mask.diameter()) {
        let disc = DiscShape::new(&g, r);
        for z in 0..g.n_cells() {
            if !mask.is_active(z) {
                continue;
            }
            let (i, j) = g.ij(z);
            let psi = psi_eval(&shape.psi, r, area * pn.disc_sum(i, j, &disc));
            let v = (area * pf.disc_sum(i, j, &disc) / psi).powf(1.0 / q);
            if v > best.value || best.center == usize::MAX {
                best = MorreyEstimate { value: v, center: z, radius: r };
            }
        }
    }
    if best.center == usize::MAX {
        return Err(Error::param("radius_ladder", "no radius below the domain diameter"));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_rect_domain;
    use crate::weights::WeightRole;
    use approx::assert_relative_eq;

    #[test]
    fn lq_unit() {
        let m = make_rect_domain(20, 20, 0.05).unwrap();
        let one = ScalarField::constant(*m.grid(), 1.0);
        let w = ScalarWeight::unit(*m.grid(), WeightRole::Omega);
        assert_relative_eq!(weighted_lq_norm(&one, &w, &m, 2.0).unwrap(), 1.0, max_relative = 1e-12);
        assert!(weighted_lq_norm(&one, &w, &m, 0.0).is_err());
    }

    #[test]
    fn lorentz_indicator_closed_forms() {
        let m = make_rect_domain(16, 16, 0.1).unwrap();
        let f = ScalarField::from_fn(*m.grid(), |p| if p[1] < 0.55 { 3.0 } else { 0.0 });
        let mu = ScalarWeight::new(ScalarField::constant(*m.grid(), 2.0), WeightRole::Mu).unwrap();
        let mass: f64 = 2.0 * 6.0 * 16.0 * 0.01;
        for (q, s) in [(1.0f64, f64::INFINITY), (2.0, 1.0), (0.5, 3.0), (2.0, 2.0)] {
            let idx = LorentzIndices::new(q, s).unwrap();
            let want = if s.is_infinite() { 3.0 * mass.powf(1.0 / q) } else { (q / s).powf(1.0 / s) * 3.0 * mass.powf(1.0 / q) };
            assert_relative_eq!(lorentz_norm(&f, &mu, &m, idx).unwrap(), want, max_relative = 1e-12);
        }
        assert!(LorentzIndices::new(0.0, 1.0).is_err());
    }

    #[test]
    fn sigma_identity_and_power() {
        assert_eq!(SigmaFunction::Identity.eval(3.5), 3.5);
        assert_eq!(SigmaFunction::Power { a: 2.0 }.doubling(), (4.0, 4.0));
        assert!(SigmaFunction::Power { a: -1.0 }.validate().is_err());
    }

    #[test]
    fn table_doubling_everywhere() {
        let (tab, parts) = SigmaTable::random_doubling(3, 3).unwrap();
        let exact = |t: f64| parts.iter().map(|&(w, a)| w * t.powf(a)).sum::<f64>();
        for i in [0, 17, 100, tab.values.len() - 1] {
            let t = tab.t0 * 2f64.powf(i as f64 / tab.per_octave as f64);
            assert_relative_eq!(tab.eval(t), exact(t), max_relative = 1e-7);
        }
        let (c1, c2) = tab.doubling();
        assert!(c1 > 1.0);
        let mut t = tab.t0 / 300.0;
        while t < 1e7 {
            let r = tab.eval(2.0 * t) / tab.eval(t);
            assert!(r >= c1 * (1.0 - 1e-12) && r <= c2 * (1.0 + 1e-12), "t={t} r={r}");
            t *= 1.37;
        }
    }

    #[test]
    fn table_rejects_flat() {
        assert!(SigmaTable::new(1.0, 2, vec![1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(SigmaTable::new(1.0, 1, vec![1.0, 2.0, 4.0]).is_ok());
    }

    #[test]
    fn morrey_power_unit_field() {
        let m = make_rect_domain(16, 16, 1.0 / 16.0).unwrap();
        let g = *m.grid();
        let one = ScalarField::constant(g, 1.0);
        let shape = MorreyShape::power(1.0).unwrap();
        let ladder = RadiusLadder::default_for(&m);
        let norm = morrey_norm(&one, &m, &shape, 2.0, &ladder).unwrap();
        let mut brute: f64 = 0.0;
        for z in m.active_cells() {
            for &r in ladder.radii().iter().filter(|&&r| r < m.diameter()) {
                let n = crate::grid::ball_cells(&m, g.center_of(z), r).len() as f64;
                brute = brute.max((n * g.cell_area() / r).sqrt());
            }
        }
        assert_relative_eq!(norm, brute, max_relative = 1e-12);
        // Balls that stay inside the domain grow like r^2, faster than r^upsilon.
        let c = g.center(8, 8);
        let ratio = |r: f64| crate::grid::ball_cells(&m, c, r).len() as f64 * g.cell_area() / r;
        assert!(ratio(0.4) > 2.0 * ratio(0.12));
        assert!(MorreyShape::power(2.0).is_err());
    }
}
