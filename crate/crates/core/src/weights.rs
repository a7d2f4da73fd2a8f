//! Matrix weights, their logarithms, and scalar weight constants.
//!
//! A 2x2 symmetric matrix is stored as [`Sym2`] `(a, b, c)` for `[[a, b], [b, c]]`.
//! Spectral functions use the closed form `f(P) = alpha*I + beta*(P - m*I)`
//! with `m` the eigenvalue midpoint, which needs no eigenvectors.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ball_cells, fmt_f64, read_cell_rows, DomainMask, Grid2D, ScalarField};
use crate::lattice::{DiscShape, RadiusLadder, RowPrefix, LADDER_RATIO};

/// Symmetric 2x2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub const fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Sym2::new(0.0, 0.0, 0.0)
    }

    pub const fn diag(x: f64, y: f64) -> Self {
        Sym2::new(x, 0.0, y)
    }

    pub const fn scalar(s: f64) -> Self {
        Sym2::new(s, 0.0, s)
    }

    /// Accepts a full matrix if its off-diagonal entries agree within `1e-12`
    /// relative to the largest entry.
    pub fn from_full(m: [[f64; 2]; 2]) -> std::result::Result<Self, f64> {
        let gap = (m[0][1] - m[1][0]).abs();
        let scale = m.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
        if gap > 1e-12 * scale {
            Err(gap)
        } else {
            Ok(Sym2::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]))
        }
    }

    pub fn to_full(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.b, self.c]]
    }

    #[inline]
    fn mid_and_gap(&self) -> (f64, f64) {
        (0.5 * (self.a + self.c), (0.5 * (self.a - self.c)).hypot(self.b))
    }

    /// `(min, max)` eigenvalues.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let (m, d) = self.mid_and_gap();
        (m - d, m + d)
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> f64 {
        let (m, d) = self.mid_and_gap();
        m.abs() + d
    }

    /// `|P| |P^-1|` for a positive definite matrix.
    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        hi / lo
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().0 > 0.0
    }

    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    pub fn square(&self) -> Sym2 {
        Sym2::new(
            self.a * self.a + self.b * self.b,
            self.b * (self.a + self.c),
            self.b * self.b + self.c * self.c,
        )
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }

    pub fn scale(&self, t: f64) -> Sym2 {
        Sym2::new(t * self.a, t * self.b, t * self.c)
    }

    /// `Q^T P Q` for the rotation `Q` by angle `theta`.
    pub fn rotated(&self, theta: f64) -> Sym2 {
        let (s, c) = theta.sin_cos();
        // Q = [[c, -s], [s, c]]
        let a = c * c * self.a + 2.0 * c * s * self.b + s * s * self.c;
        let b = -c * s * self.a + (c * c - s * s) * self.b + c * s * self.c;
        let cc = s * s * self.a - 2.0 * c * s * self.b + c * c * self.c;
        Sym2::new(a, b, cc)
    }

    pub fn inverse(&self) -> Sym2 {
        let det = self.a * self.c - self.b * self.b;
        Sym2::new(self.c / det, -self.b / det, self.a / det)
    }

    /// Applies `f` to the spectrum. `slope(lo, hi)` must return the divided
    /// difference `(f(hi) - f(lo)) / (hi - lo)`, and `f'(lo)` when they coincide.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64, slope: impl Fn(f64, f64) -> f64) -> Sym2 {
        let (m, d) = self.mid_and_gap();
        let (lo, hi) = (m - d, m + d);
        let alpha = 0.5 * (f(lo) + f(hi));
        let beta = slope(lo, hi);
        let half = 0.5 * (self.a - self.c);
        Sym2::new(alpha + beta * half, beta * self.b, alpha - beta * half)
    }

    /// Matrix logarithm; `None` unless positive definite.
    pub fn log(&self) -> Option<Sym2> {
        if !self.is_positive_definite() {
            return None;
        }
        Some(self.map_spectrum(f64::ln, |lo, hi| {
            let gap = hi - lo;
            if gap > 0.0 {
                (gap / lo).ln_1p() / gap
            } else {
                1.0 / lo
            }
        }))
    }

    pub fn exp(&self) -> Sym2 {
        self.map_spectrum(f64::exp, |lo, hi| {
            let gap = hi - lo;
            if gap > 0.0 {
                lo.exp() * gap.exp_m1() / gap
            } else {
                lo.exp()
            }
        })
    }
}

/// Field of symmetric (not necessarily definite) matrices, e.g. `log P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymField {
    grid: Grid2D,
    values: Vec<Sym2>,
}

impl SymField {
    pub fn new(grid: Grid2D, values: Vec<Sym2>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::param("values", format!("expected {} cells, got {}", grid.n_cells(), values.len())));
        }
        Ok(SymField { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Sym2] {
        &self.values
    }
}

/// Positive definite symmetric matrix field.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWeightField {
    grid: Grid2D,
    values: Vec<Sym2>,
}

impl MatrixWeightField {
    /// Validates finiteness and positive definiteness cell by cell.
    pub fn new(grid: Grid2D, values: Vec<Sym2>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::param("values", format!("expected {} cells, got {}", grid.n_cells(), values.len())));
        }
        for (cell, m) in values.iter().enumerate() {
            if !(m.a.is_finite() && m.b.is_finite() && m.c.is_finite()) {
                return Err(Error::NonFinite { cell });
            }
            let (lo, _) = m.eigenvalues();
            if !(lo > 0.0) {
                return Err(Error::NotPositiveDefinite { cell, min_eig: lo });
            }
        }
        Ok(MatrixWeightField { grid, values })
    }

    pub fn from_full(grid: Grid2D, full: &[[[f64; 2]; 2]]) -> Result<Self> {
        let values = full
            .iter()
            .enumerate()
            .map(|(cell, m)| Sym2::from_full(*m).map_err(|gap| Error::NotSymmetric { cell, gap }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn constant(grid: Grid2D, p: Sym2) -> Result<Self> {
        Self::new(grid, vec![p; grid.n_cells()])
    }

    pub fn identity(grid: Grid2D) -> Self {
        MatrixWeightField { grid, values: vec![Sym2::identity(); grid.n_cells()] }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Sym2] {
        &self.values
    }

    #[inline]
    pub fn get(&self, k: usize) -> &Sym2 {
        &self.values[k]
    }

    /// `t * P` for `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|m| m.scale(t)).collect())
    }

    pub fn as_sym(&self) -> SymField {
        SymField { grid: self.grid, values: self.values.clone() }
    }

    /// Cellwise logarithm; cannot fail because the field is definite.
    pub fn log(&self) -> SymField {
        let values = self.values.iter().map(|m| m.log().expect("validated positive definite")).collect();
        SymField { grid: self.grid, values }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "p11", "p12", "p22"])?;
        for (k, m) in self.values.iter().enumerate() {
            let (i, j) = self.grid.ij(k);
            wr.write_record([i.to_string(), j.to_string(), fmt_f64(m.a), fmt_f64(m.b), fmt_f64(m.c)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `(i, j, p11, p12, p22)` rows; every cell must be present.
    pub fn read_csv<R: Read>(grid: Grid2D, r: R) -> Result<Self> {
        let rows = read_cell_rows(&grid, r, 3)?;
        if rows.len() != grid.n_cells() {
            return Err(Error::Csv(format!("matrix field needs all {} cells, got {}", grid.n_cells(), rows.len())));
        }
        let mut values = vec![Sym2::zero(); grid.n_cells()];
        for (k, v) in rows {
            values[k] = Sym2::new(v[0], v[1], v[2]);
        }
        Self::new(grid, values)
    }
}

/// Cellwise logarithm, rejecting indefinite cells.
pub fn sym_log(field: &SymField) -> Result<SymField> {
    let values = field
        .values
        .iter()
        .enumerate()
        .map(|(cell, m)| m.log().ok_or(Error::NotPositiveDefinite { cell, min_eig: m.eigenvalues().0 }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SymField { grid: field.grid, values })
}

/// Cellwise exponential; fails only on overflow.
pub fn sym_exp(field: &SymField) -> Result<MatrixWeightField> {
    MatrixWeightField::new(field.grid, field.values.iter().map(Sym2::exp).collect())
}

/// `exp` of the mean of `log P` over the cells.
pub fn log_average(field: &MatrixWeightField, cells: &[usize]) -> Result<Sym2> {
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let mut acc = Sym2::zero();
    for &k in cells {
        acc = acc.add(&field.values[k].log().expect("validated positive definite"));
    }
    Ok(acc.scale(1.0 / cells.len() as f64).exp())
}

/// Largest mean oscillation found, with the ball attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogBmoEstimate {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// Log-BMO seminorm over cell-centered balls with radii `h * 2^(k/4) <= r_max`.
pub fn log_bmo_seminorm(field: &MatrixWeightField, mask: &DomainMask, r_max: f64) -> Result<f64> {
    let ladder = RadiusLadder::geometric(mask.grid().h, r_max.max(mask.grid().h), LADDER_RATIO)?;
    Ok(log_bmo_scan(field, mask, &ladder, 1)?.value)
}

/// Sup over centers (every `stride`-th non-exterior cell in each axis) and
/// ladder radii of `avg_{B cap Omega} |log P - avg_{B cap Omega} log P|`.
pub fn log_bmo_scan(field: &MatrixWeightField, mask: &DomainMask, ladder: &RadiusLadder, stride: usize) -> Result<LogBmoEstimate> {
    mask.grid().ensure_same(&field.grid)?;
    if stride == 0 {
        return Err(Error::param("stride", "must be positive"));
    }
    let g = field.grid;
    let logs = field.log();
    let act = |k: usize| if mask.is_active(k) { 1.0 } else { 0.0 };
    let pa = RowPrefix::new(&g, |k| act(k) * logs.values[k].a);
    let pb = RowPrefix::new(&g, |k| act(k) * logs.values[k].b);
    let pc = RowPrefix::new(&g, |k| act(k) * logs.values[k].c);
    let pn = RowPrefix::new(&g, act);
    let mut best = LogBmoEstimate { value: 0.0, center: usize::MAX, radius: 0.0 };
    for &r in ladder.radii() {
        let disc = DiscShape::new(&g, r);
        for j in (0..g.ny).step_by(stride) {
            for i in (0..g.nx).step_by(stride) {
                let z = g.idx(i, j);
                if !mask.is_active(z) {
                    continue;
                }
                let n = pn.disc_sum(i, j, &disc);
                let mean = Sym2::new(pa.disc_sum(i, j, &disc), pb.disc_sum(i, j, &disc), pc.disc_sum(i, j, &disc)).scale(1.0 / n);
                let cells = ball_cells(mask, g.center(i, j), r);
                let dev: f64 = cells.iter().map(|&k| logs.values[k].sub(&mean).spectral_norm()).sum::<f64>() / cells.len() as f64;
                if dev > best.value || best.center == usize::MAX {
                    best = LogBmoEstimate { value: dev, center: z, radius: r };
                }
            }
        }
    }
    Ok(best)
}

/// Which role a scalar weight plays in a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRole {
    Omega,
    Mu,
    NuFree,
}

/// Nonnegative finite scalar weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarWeight {
    field: ScalarField,
    role: WeightRole,
}

impl ScalarWeight {
    pub fn new(field: ScalarField, role: WeightRole) -> Result<Self> {
        if let Some(cell) = field.values().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("weight", format!("value at cell {cell} is negative or non-finite")));
        }
        Ok(ScalarWeight { field, role })
    }

    pub fn unit(grid: Grid2D, role: WeightRole) -> Self {
        ScalarWeight { field: ScalarField::constant(grid, 1.0), role }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Grid2D {
        self.field.grid()
    }

    pub fn role(&self) -> WeightRole {
        self.role
    }

    /// Cellwise power `mu^t`.
    pub fn powf(&self, t: f64) -> Result<Self> {
        Self::new(self.field.map(|v| v.powf(t)), self.role)
    }

    /// Short identifier used in distribution curves and reports.
    pub fn id(&self) -> String {
        let first = self.values().first().copied().unwrap_or(0.0);
        if self.values().iter().all(|&v| v == first) {
            format!("{}:const={}", role_name(self.role), first)
        } else {
            format!("{}:field", role_name(self.role))
        }
    }
}

fn role_name(r: WeightRole) -> &'static str {
    match r {
        WeightRole::Omega => "omega",
        WeightRole::Mu => "mu",
        WeightRole::NuFree => "nu-free",
    }
}

/// `omega(x) = |P(x)|`.
pub fn scalar_weight_of(field: &MatrixWeightField) -> ScalarWeight {
    let values = field.values.iter().map(Sym2::spectral_norm).collect();
    ScalarWeight { field: ScalarField::new(field.grid, values).expect("same grid"), role: WeightRole::Omega }
}

/// Largest cellwise condition number.
pub fn ellipticity_lambda(field: &MatrixWeightField) -> f64 {
    field.values.iter().map(Sym2::condition_number).fold(1.0, f64::max)
}

/// Ball attaining the largest tested Muckenhoupt ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AqEstimate {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// Lower bound for the `A_q` constant over cell-centered balls on the ladder,
/// averaging over `B cap Omega`.
pub fn muckenhoupt_aq(weight: &ScalarWeight, mask: &DomainMask, q: f64, ladder: &RadiusLadder) -> Result<f64> {
    Ok(muckenhoupt_aq_scan(weight, mask, q, ladder)?.value)
}

pub fn muckenhoupt_aq_scan(weight: &ScalarWeight, mask: &DomainMask, q: f64, ladder: &RadiusLadder) -> Result<AqEstimate> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::param("q", format!("A_q needs 1 < q < inf, got {q}")));
    }
    let g = *mask.grid();
    g.ensure_same(weight.grid())?;
    let mu = weight.values();
    if let Some(cell) = (0..mu.len()).find(|&k| mask.is_active(k) && !(mu[k] > 0.0)) {
        return Err(Error::param("weight", format!("must be positive on non-exterior cells (cell {cell})")));
    }
    let dual = -1.0 / (q - 1.0);
    let act = |k: usize| mask.is_active(k);
    let p_mu = RowPrefix::new(&g, |k| if act(k) { mu[k] } else { 0.0 });
    let p_dual = RowPrefix::new(&g, |k| if act(k) { mu[k].powf(dual) } else { 0.0 });
    let p_n = RowPrefix::new(&g, |k| if act(k) { 1.0 } else { 0.0 });
    let mut best = AqEstimate { value: 0.0, center: usize::MAX, radius: 0.0 };
    for &r in ladder.radii() {
        let disc = DiscShape::new(&g, r);
        for z in 0..g.n_cells() {
            if !act(z) {
                continue;
            }
            let (i, j) = g.ij(z);
            let n = p_n.disc_sum(i, j, &disc);
            let avg_mu = p_mu.disc_sum(i, j, &disc) / n;
            let avg_dual = p_dual.disc_sum(i, j, &disc) / n;
            let v = avg_dual.powf(q - 1.0) * avg_mu;
            if v > best.value {
                best = AqEstimate { value: v, center: z, radius: r };
            }
        }
    }
    Ok(best)
}

/// One tested pair `subset ⊂ ball` of cell sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPair {
    pub ball: Vec<usize>,
    pub subset: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubsetFamily {
    pub pairs: Vec<SubsetPair>,
}

impl SubsetFamily {
    /// Every ordered pair of distinct concentric balls `B(center, r_small) ⊂ B(center, r_large)`.
    pub fn nested_balls(mask: &DomainMask, center: [f64; 2], radii: &[f64]) -> Self {
        let balls: Vec<Vec<usize>> = radii.iter().map(|&r| ball_cells(mask, center, r)).filter(|b| !b.is_empty()).collect();
        let mut pairs = Vec::new();
        for (a, small) in balls.iter().enumerate() {
            for large in &balls[a + 1..] {
                if small.len() < large.len() {
                    pairs.push(SubsetPair { ball: large.clone(), subset: small.clone() });
                }
            }
        }
        SubsetFamily { pairs }
    }

    /// Balls at `n_centers` random non-exterior centers for each ladder
    /// radius, each paired with itself, with concentric balls of half and a
    /// quarter the radius, and with `random_per_ball` random sub-collections
    /// of its cells.
    pub fn generate(mask: &DomainMask, ladder: &RadiusLadder, n_centers: usize, random_per_ball: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let active = mask.active_cells();
        let g = mask.grid();
        let centers: Vec<usize> = active.choose_multiple(&mut rng, n_centers.min(active.len())).copied().collect();
        let mut pairs = Vec::new();
        for &z in &centers {
            let c = g.center_of(z);
            for &r in ladder.radii() {
                let ball = ball_cells(mask, c, r);
                if ball.is_empty() {
                    continue;
                }
                pairs.push(SubsetPair { ball: ball.clone(), subset: ball.clone() });
                for shrink in [0.5, 0.25] {
                    let sub = ball_cells(mask, c, shrink * r);
                    if !sub.is_empty() && sub.len() < ball.len() {
                        pairs.push(SubsetPair { ball: ball.clone(), subset: sub });
                    }
                }
                for _ in 0..random_per_ball {
                    let keep = rng.gen_range(0.05..0.95);
                    let sub: Vec<usize> = ball.iter().copied().filter(|_| rng.gen::<f64>() < keep).collect();
                    if !sub.is_empty() && sub.len() < ball.len() {
                        pairs.push(SubsetPair { ball: ball.clone(), subset: sub });
                    }
                }
            }
        }
        SubsetFamily { pairs }
    }
}

/// Constants for `c1 (|O|/|B|)^nu1 mu(B) <= mu(O) <= c2 (|O|/|B|)^nu2 mu(B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AInftyParams {
    pub c1: f64,
    pub c2: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Pairs with a proper subset, the only ones that constrain the exponents.
    pub pairs_used: usize,
}

impl AInftyParams {
    /// Whether the lower and upper halves of the sandwich hold on a pair.
    pub fn check_pair(&self, weight: &ScalarWeight, pair: &SubsetPair) -> (bool, bool) {
        let (frac, mass) = pair_ratios(weight, pair);
        let lower = self.c1 * frac.powf(self.nu1);
        let upper = self.c2 * frac.powf(self.nu2);
        (lower <= mass * (1.0 + 1e-12), mass <= upper * (1.0 + 1e-12))
    }
}

fn pair_ratios(weight: &ScalarWeight, pair: &SubsetPair) -> (f64, f64) {
    let mu = weight.values();
    let m_sub: f64 = pair.subset.iter().map(|&k| mu[k]).sum();
    let m_ball: f64 = pair.ball.iter().map(|&k| mu[k]).sum();
    (pair.subset.len() as f64 / pair.ball.len() as f64, m_sub / m_ball)
}

/// Fits exponents with `c1 = c2 = 1`: the tightest `nu2` (largest) and `nu1`
/// (smallest) that keep the sandwich valid on every pair.
pub fn a_infty_params(weight: &ScalarWeight, mask: &DomainMask, family: &SubsetFamily) -> Result<AInftyParams> {
    a_infty_params_with(weight, mask, family, 1.0, 1.0)
}

/// Same fit with fixed constants `c1 <= 1 <= c2`.
pub fn a_infty_params_with(weight: &ScalarWeight, mask: &DomainMask, family: &SubsetFamily, c1: f64, c2: f64) -> Result<AInftyParams> {
    mask.grid().ensure_same(weight.grid())?;
    if !(c1 > 0.0 && c1 <= 1.0 && c2 >= 1.0 && c2.is_finite()) {
        return Err(Error::param("c1/c2", format!("need 0 < c1 <= 1 <= c2, got c1={c1} c2={c2}")));
    }
    let mut nu1 = f64::NEG_INFINITY;
    let mut nu2 = f64::INFINITY;
    let mut used = 0;
    for pair in &family.pairs {
        if pair.subset.len() >= pair.ball.len() {
            continue;
        }
        let (frac, mass) = pair_ratios(weight, pair);
        if !(mass > 0.0) {
            return Err(Error::param("weight", "vanishes on a tested subset"));
        }
        let x = frac.ln();
        nu2 = nu2.min((mass.ln() - c2.ln()) / x);
        nu1 = nu1.max((mass.ln() - c1.ln()) / x);
        used += 1;
    }
    if used == 0 {
        return Err(Error::param("subset_family", "contains no proper subsets"));
    }
    Ok(AInftyParams { c1, c2, nu1, nu2, pairs_used: used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_rect_domain;
    use approx::assert_relative_eq;

    fn close(a: &Sym2, b: &Sym2, tol: f64) -> bool {
        a.sub(b).spectral_norm() <= tol * b.spectral_norm().max(1e-300)
    }

    #[test]
    fn log_exp_basics() {
        assert_eq!(Sym2::identity().log().unwrap(), Sym2::zero());
        let e = Sym2::diag(0.3, -1.2).exp();
        assert_relative_eq!(e.a, 0.3f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(e.c, (-1.2f64).exp(), max_relative = 1e-15);
        assert_eq!(e.b, 0.0);
        assert!(Sym2::diag(1.0, -1.0).log().is_none());
    }

    #[test]
    fn log_exp_round_trip_ill_conditioned() {
        for (lo, hi, th) in [(1e-3, 1e3, 0.3), (1.0, 1.0 + 1e-12, 1.1), (2.0, 2.0, 0.0), (1e-6, 1.0, -0.7)] {
            let p = Sym2::diag(lo, hi).rotated(th);
            let back = p.log().unwrap().exp();
            assert!(close(&back, &p, 1e-10), "{p:?} -> {back:?}");
        }
    }

    #[test]
    fn from_full_checks_symmetry() {
        assert!(Sym2::from_full([[1.0, 0.5], [0.5, 2.0]]).is_ok());
        assert!(Sym2::from_full([[1.0, 0.5], [0.5 + 1e-6, 2.0]]).is_err());
        let g = Grid2D::new(4, 4, 1.0).unwrap();
        let mut full = vec![[[1.0, 0.0], [0.0, 1.0]]; 16];
        full[5] = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(MatrixWeightField::from_full(g, &full), Err(Error::NotPositiveDefinite { cell: 5, .. })));
        full[5] = [[1.0, 0.1], [0.0, 1.0]];
        assert!(matches!(MatrixWeightField::from_full(g, &full), Err(Error::NotSymmetric { cell: 5, .. })));
    }

    #[test]
    fn log_average_cases() {
        let g = Grid2D::new(8, 8, 1.0).unwrap();
        let p0 = Sym2::new(2.0, 0.3, 1.0);
        let f = MatrixWeightField::constant(g, p0).unwrap();
        let cells: Vec<usize> = (0..64).collect();
        assert!(close(&log_average(&f, &cells).unwrap(), &p0, 1e-14));
        let e = std::f64::consts::E;
        let vals = (0..64).map(|k| if k % 2 == 0 { Sym2::diag(e, 1.0) } else { Sym2::diag(1.0 / e, 1.0) }).collect();
        let f = MatrixWeightField::new(g, vals).unwrap();
        assert!(close(&log_average(&f, &cells).unwrap(), &Sym2::identity(), 1e-15));
        assert!(log_average(&f, &[]).is_err());
    }

    #[test]
    fn ellipticity_and_omega() {
        let g = Grid2D::new(4, 4, 1.0).unwrap();
        let f = MatrixWeightField::constant(g, Sym2::diag(2.0, 1.0)).unwrap();
        assert_eq!(ellipticity_lambda(&f), 2.0);
        assert!(scalar_weight_of(&f).values().iter().all(|&w| w == 2.0));
        assert_eq!(ellipticity_lambda(&MatrixWeightField::identity(g)), 1.0);
    }

    #[test]
    fn bmo_constant_zero_and_scale_invariant() {
        let m = make_rect_domain(16, 16, 1.0 / 16.0).unwrap();
        let f = MatrixWeightField::constant(*m.grid(), Sym2::new(3.0, 1.0, 2.0)).unwrap();
        assert!(log_bmo_seminorm(&f, &m, 0.5).unwrap() < 1e-14);
        let vals = (0..256).map(|k| Sym2::diag(1.0 + (k % 5) as f64, 1.0).rotated(k as f64 * 0.1)).collect();
        let f = MatrixWeightField::new(*m.grid(), vals).unwrap();
        let a = log_bmo_seminorm(&f, &m, 0.5).unwrap();
        let b = log_bmo_seminorm(&f.scaled(7.5).unwrap(), &m, 0.5).unwrap();
        assert!(a > 0.1);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn aq_rejects_small_q_and_unit_weight_is_one() {
        let m = make_rect_domain(12, 12, 0.1).unwrap();
        let l = RadiusLadder::default_for(&m);
        let w = ScalarWeight::unit(*m.grid(), WeightRole::Mu);
        assert!(muckenhoupt_aq(&w, &m, 1.0, &l).is_err());
        assert_eq!(muckenhoupt_aq(&w, &m, 2.0, &l).unwrap(), 1.0);
        assert_eq!(muckenhoupt_aq(&w, &m, 3.7, &l).unwrap(), 1.0);
    }

    #[test]
    fn a_infty_unit_weight() {
        let m = make_rect_domain(16, 16, 0.1).unwrap();
        let l = RadiusLadder::default_for(&m);
        let fam = SubsetFamily::generate(&m, &l, 6, 3, 7);
        let w = ScalarWeight::unit(*m.grid(), WeightRole::Mu);
        let p = a_infty_params(&w, &m, &fam).unwrap();
        assert_eq!((p.c1, p.c2, p.nu1, p.nu2), (1.0, 1.0, 1.0, 1.0));
        for pair in &fam.pairs {
            assert_eq!(p.check_pair(&w, pair), (true, true));
        }
    }
}
