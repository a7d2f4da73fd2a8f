//! Cell-centered lattices, domain masks, balls, annuli and cell-set integrals.
//!
//! Cell `(i, j)` has center `origin + h * (i, j)` and flat index `j * nx + i`.
//! Anything outside the grid counts as exterior, so the one-cell rim of a
//! rectangle is boundary.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets closer than this (in lattice units) to an integer are treated as integers.
const LATTICE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        Self::with_origin(nx, ny, h, [0.0, 0.0])
    }

    pub fn with_origin(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::param("nx/ny", format!("need at least 4 cells per axis, got {nx}x{ny}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("spacing must be positive, got {h}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::param("origin", "must be finite"));
        }
        Ok(Grid2D { nx, ny, h, origin })
    }

    /// Grid whose cell centers span `[lo, hi]` in both axes with `n` cells per axis.
    pub fn spanning(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 4 || !(hi > lo) {
            return Err(Error::param("n", "need n >= 4 and hi > lo"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        Self::with_origin(n, n, h, [lo, lo])
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + self.h * i as f64, self.origin[1] + self.h * j as f64]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        self.center(i, j)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Position of `p` in lattice units relative to cell (0,0), snapped to
    /// integers when within rounding distance so that ties are exact.
    pub fn to_lattice(&self, p: [f64; 2]) -> [f64; 2] {
        [
            snap((p[0] - self.origin[0]) / self.h),
            snap((p[1] - self.origin[1]) / self.h),
        ]
    }

    /// Squared radius in lattice units, snapped to an integer when within
    /// relative rounding distance.
    pub fn lattice_radius2(&self, r: f64) -> f64 {
        let r2 = (r / self.h) * (r / self.h);
        let k = r2.round();
        if k > 0.0 && (r2 - k).abs() <= LATTICE_SNAP * k {
            k
        } else {
            r2
        }
    }

    /// Every grid cell (ignoring any mask) whose center lies in the open disc.
    pub fn disc_cells(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_disc(center, radius, |idx| out.push(idx));
        out
    }

    pub(crate) fn for_each_in_disc(&self, center: [f64; 2], radius: f64, mut f: impl FnMut(usize)) {
        if !(radius > 0.0) {
            return;
        }
        let c = self.to_lattice(center);
        let r2 = self.lattice_radius2(radius);
        let r = r2.sqrt();
        let j_lo = (c[1] - r).floor().max(0.0) as usize;
        let j_hi = ((c[1] + r).ceil().max(-1.0) as i64).min(self.ny as i64 - 1);
        if j_hi < 0 {
            return;
        }
        for j in j_lo..=j_hi as usize {
            let dy = j as f64 - c[1];
            let rest = r2 - dy * dy;
            if rest <= 0.0 {
                continue;
            }
            let w = rest.sqrt();
            let i_lo = (c[0] - w).floor().max(0.0) as usize;
            let i_hi = ((c[0] + w).ceil() as i64).min(self.nx as i64 - 1);
            if i_hi < 0 {
                continue;
            }
            for i in i_lo..=i_hi as usize {
                let dx = i as f64 - c[0];
                if dx * dx + dy * dy < r2 {
                    f(self.idx(i, j));
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("{}x{} h={} origin={:?}", self.nx, self.ny, self.h, self.origin)
    }

    pub(crate) fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: self.describe(), found: other.describe() })
        }
    }
}

fn snap(v: f64) -> f64 {
    let k = v.round();
    if (v - k).abs() < LATTICE_SNAP {
        k
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Interior,
    Boundary,
    Exterior,
}

/// Graph domain `{y2 > profile(y1)}` with slope bound `kappa` and scale `r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSpec {
    pub kappa: f64,
    pub r0: f64,
    /// Graph height sampled at each column's center, one value per column.
    pub profile: Vec<f64>,
}

impl LipschitzSpec {
    /// Samples `profile(y1)` at the column centers of `grid`.
    pub fn sample(grid: &Grid2D, kappa: f64, r0: f64, profile: impl Fn(f64) -> f64) -> Self {
        let profile = (0..grid.nx).map(|i| profile(grid.center(i, 0)[0])).collect();
        LipschitzSpec { kappa, r0, profile }
    }

    /// Largest finite-difference slope of the sampled profile.
    pub fn max_slope(&self, h: f64) -> f64 {
        self.profile.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    grid: Grid2D,
    class: Vec<CellClass>,
    diameter: f64,
    lipschitz: Option<LipschitzSpec>,
}

impl DomainMask {
    /// Classifies cells from a membership vector: members with all four
    /// neighbours inside are interior, other members are boundary.
    pub fn from_active(grid: Grid2D, active: &[bool]) -> Result<Self> {
        if active.len() != grid.n_cells() {
            return Err(Error::param("active", format!("expected {} cells, got {}", grid.n_cells(), active.len())));
        }
        if !active.iter().any(|&a| a) {
            return Err(Error::EmptyDomain);
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let mut class = vec![CellClass::Exterior; grid.n_cells()];
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.idx(i, j);
                if !active[k] {
                    continue;
                }
                let inside = i > 0
                    && j > 0
                    && i + 1 < nx
                    && j + 1 < ny
                    && active[k - 1]
                    && active[k + 1]
                    && active[k - nx]
                    && active[k + nx];
                class[k] = if inside { CellClass::Interior } else { CellClass::Boundary };
            }
        }
        let diameter = row_extreme_diameter(&grid, active);
        if !(diameter > 0.0) {
            return Err(Error::param("active", "domain must contain at least two cells"));
        }
        Ok(DomainMask { grid, class, diameter, lipschitz: None })
    }

    pub fn from_predicate(grid: Grid2D, inside: impl Fn([f64; 2]) -> bool) -> Result<Self> {
        let active: Vec<bool> = (0..grid.n_cells()).map(|k| inside(grid.center_of(k))).collect();
        Self::from_active(grid, &active)
    }

    pub fn full(grid: Grid2D) -> Result<Self> {
        Self::from_active(grid, &vec![true; grid.n_cells()])
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn class(&self, idx: usize) -> CellClass {
        self.class[idx]
    }

    pub fn classes(&self) -> &[CellClass] {
        &self.class
    }

    #[inline]
    pub fn is_active(&self, idx: usize) -> bool {
        self.class[idx] != CellClass::Exterior
    }

    #[inline]
    pub fn is_interior(&self, idx: usize) -> bool {
        self.class[idx] == CellClass::Interior
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.class[idx] == CellClass::Boundary
    }

    pub fn count(&self, c: CellClass) -> usize {
        self.class.iter().filter(|&&x| x == c).count()
    }

    pub fn cells_of(&self, c: CellClass) -> Vec<usize> {
        (0..self.class.len()).filter(|&k| self.class[k] == c).collect()
    }

    /// Non-exterior cells in index order.
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.class.len()).filter(|&k| self.is_active(k)).collect()
    }

    pub fn active_flags(&self) -> Vec<bool> {
        self.class.iter().map(|&c| c != CellClass::Exterior).collect()
    }

    /// Largest distance between two non-exterior cell centers.
    #[inline]
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Pixel area of the domain, `h^2` times the number of non-exterior cells.
    pub fn measure(&self) -> f64 {
        self.grid.cell_area() * (self.class.len() - self.count(CellClass::Exterior)) as f64
    }

    pub fn lipschitz(&self) -> Option<&LipschitzSpec> {
        self.lipschitz.as_ref()
    }
}

/// Points strictly inside a row segment are convex combinations of its two
/// ends, so the farthest pair is always among the row extremes.
fn row_extreme_diameter(grid: &Grid2D, active: &[bool]) -> f64 {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for j in 0..grid.ny {
        let row = &active[j * grid.nx..(j + 1) * grid.nx];
        if let Some(first) = row.iter().position(|&a| a) {
            let last = row.iter().rposition(|&a| a).unwrap_or(first);
            pts.push([first as f64, j as f64]);
            if last != first {
                pts.push([last as f64, j as f64]);
            }
        }
    }
    let mut best2: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let dx = pts[a][0] - pts[b][0];
            let dy = pts[a][1] - pts[b][1];
            best2 = best2.max(dx * dx + dy * dy);
        }
    }
    best2.sqrt() * grid.h
}

/// Full `nx x ny` rectangle with origin at zero.
pub fn make_rect_domain(nx: usize, ny: usize, h: f64) -> Result<DomainMask> {
    DomainMask::full(Grid2D::new(nx, ny, h)?)
}

/// Cells whose centers lie strictly above the sampled graph.
pub fn make_lipschitz_domain(grid: Grid2D, spec: LipschitzSpec) -> Result<DomainMask> {
    if spec.profile.len() != grid.nx {
        return Err(Error::param(
            "profile",
            format!("expected one sample per column ({}), got {}", grid.nx, spec.profile.len()),
        ));
    }
    if !(0.0..=0.25).contains(&spec.kappa) {
        return Err(Error::param("kappa", format!("must lie in [0, 1/4], got {}", spec.kappa)));
    }
    if !(spec.r0 > 0.0) {
        return Err(Error::param("r0", format!("must be positive, got {}", spec.r0)));
    }
    if let Some(k) = spec.profile.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { cell: k });
    }
    for (col, w) in spec.profile.windows(2).enumerate() {
        let slope = (w[1] - w[0]).abs() / grid.h;
        if slope > spec.kappa * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::SlopeViolation { col, slope, kappa: spec.kappa });
        }
    }
    let active: Vec<bool> = (0..grid.n_cells())
        .map(|k| {
            let (i, _) = grid.ij(k);
            grid.center_of(k)[1] > spec.profile[i]
        })
        .collect();
    let mut mask = DomainMask::from_active(grid, &active)?;
    mask.lipschitz = Some(spec);
    Ok(mask)
}

/// Non-exterior cells whose centers lie in the open ball `|x - center| < radius`.
pub fn ball_cells(mask: &DomainMask, center: [f64; 2], radius: f64) -> Vec<usize> {
    let mut out = Vec::new();
    mask.grid.for_each_in_disc(center, radius, |k| {
        if mask.is_active(k) {
            out.push(k)
        }
    });
    out
}

/// Non-exterior cells with `2^j rho <= |x - y| < 2^(j+1) rho`.
pub fn annulus_cells(mask: &DomainMask, y: [f64; 2], rho: f64, j: u32) -> Vec<usize> {
    let g = &mask.grid;
    let scale = 2f64.powi(j as i32);
    let inner2 = g.lattice_radius2(scale * rho);
    let c = g.to_lattice(y);
    let mut out = Vec::new();
    g.for_each_in_disc(y, 2.0 * scale * rho, |k| {
        if !mask.is_active(k) {
            return;
        }
        let (i, jj) = g.ij(k);
        let dx = i as f64 - c[0];
        let dy = jj as f64 - c[1];
        if dx * dx + dy * dy >= inner2 {
            out.push(k);
        }
    });
    out
}

/// Mean of the field over the cells.
pub fn average(field: &ScalarField, cells: &[usize]) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let s: f64 = cells.iter().map(|&k| field.values[k]).sum();
    Ok(s / cells.len() as f64)
}

/// `h^2 * sum(value * weight)` over the cells; zero for an empty set.
pub fn integrate(field: &ScalarField, cells: &[usize], weight: Option<&ScalarField>) -> f64 {
    let s: f64 = match weight {
        Some(w) => cells.iter().map(|&k| field.values[k] * w.values[k]).sum(),
        None => cells.iter().map(|&k| field.values[k]).sum(),
    };
    field.grid.cell_area() * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::param("values", format!("expected {} cells, got {}", grid.n_cells(), values.len())));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        ScalarField { grid, values: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.n_cells()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|k| f(grid.center_of(k))).collect();
        ScalarField { grid, values }
    }

    /// Samples `f` on non-exterior cells; exterior cells are zero.
    pub fn from_fn_masked(mask: &DomainMask, f: impl Fn([f64; 2]) -> f64) -> Self {
        let grid = *mask.grid();
        let values = (0..grid.n_cells())
            .map(|k| if mask.is_active(k) { f(grid.center_of(k)) } else { 0.0 })
            .collect();
        ScalarField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    /// Copy with exterior cells set to zero.
    pub fn masked(&self, mask: &DomainMask) -> Self {
        let values = (0..self.values.len())
            .map(|k| if mask.is_active(k) { self.values[k] } else { 0.0 })
            .collect();
        ScalarField { grid: self.grid, values }
    }

    pub fn check_finite(&self, mask: &DomainMask) -> Result<()> {
        match (0..self.values.len()).find(|&k| mask.is_active(k) && !self.values[k].is_finite()) {
            Some(cell) => Err(Error::NonFinite { cell }),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self, mask: &DomainMask) -> f64 {
        (0..self.values.len())
            .filter(|&k| mask.is_active(k))
            .map(|k| self.values[k].abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "value"])?;
        for k in 0..self.values.len() {
            let (i, j) = self.grid.ij(k);
            wr.write_record([i.to_string(), j.to_string(), fmt_f64(self.values[k])])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `(i, j, value)` rows; cells without a row are zero.
    pub fn read_csv<R: Read>(grid: Grid2D, r: R) -> Result<Self> {
        let rows = read_cell_rows(&grid, r, 1)?;
        let mut values = vec![0.0; grid.n_cells()];
        for (k, v) in rows {
            values[k] = v[0];
        }
        Ok(ScalarField { grid, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid2D,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: Grid2D, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::param("values", format!("expected {} cells, got {}", grid.n_cells(), values.len())));
        }
        Ok(VectorField { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        VectorField { grid, values: vec![[0.0; 2]; grid.n_cells()] }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let values = (0..grid.n_cells()).map(|k| f(grid.center_of(k))).collect();
        VectorField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.values
    }

    pub fn scaled(&self, t: f64) -> Self {
        VectorField { grid: self.grid, values: self.values.iter().map(|v| [t * v[0], t * v[1]]).collect() }
    }

    pub fn check_finite(&self, mask: &DomainMask) -> Result<()> {
        match (0..self.values.len()).find(|&k| mask.is_active(k) && !(self.values[k][0].is_finite() && self.values[k][1].is_finite())) {
            Some(cell) => Err(Error::NonFinite { cell }),
            None => Ok(()),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i", "j", "vx", "vy"])?;
        for k in 0..self.values.len() {
            let (i, j) = self.grid.ij(k);
            let v = self.values[k];
            wr.write_record([i.to_string(), j.to_string(), fmt_f64(v[0]), fmt_f64(v[1])])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(grid: Grid2D, r: R) -> Result<Self> {
        let rows = read_cell_rows(&grid, r, 2)?;
        let mut values = vec![[0.0; 2]; grid.n_cells()];
        for (k, v) in rows {
            values[k] = [v[0], v[1]];
        }
        Ok(VectorField { grid, values })
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses `(i, j, v_1..v_width)` rows with a header; `#` lines are comments.
pub(crate) fn read_cell_rows<R: Read>(grid: &Grid2D, r: R, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut seen = vec![false; grid.n_cells()];
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != width + 2 {
            return Err(Error::Csv(format!("row {}: expected {} columns, got {}", line + 1, width + 2, rec.len())));
        }
        let parse_idx = |s: &str| s.parse::<usize>().map_err(|e| Error::Csv(format!("row {}: {e}", line + 1)));
        let i = parse_idx(&rec[0])?;
        let j = parse_idx(&rec[1])?;
        if i >= grid.nx || j >= grid.ny {
            return Err(Error::Csv(format!("row {}: cell ({i},{j}) outside the grid", line + 1)));
        }
        let k = grid.idx(i, j);
        if seen[k] {
            return Err(Error::Csv(format!("row {}: duplicate cell ({i},{j})", line + 1)));
        }
        seen[k] = true;
        let vals = (2..width + 2)
            .map(|c| rec[c].parse::<f64>().map_err(|e| Error::Csv(format!("row {}: {e}", line + 1))))
            .collect::<Result<Vec<_>>>()?;
        out.push((k, vals));
    }
    Ok(out)
}

/// JSON description of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Rect {
        nx: usize,
        ny: usize,
        h: f64,
        #[serde(default)]
        origin: [f64; 2],
    },
    Lipschitz {
        nx: usize,
        ny: usize,
        h: f64,
        #[serde(default)]
        origin: [f64; 2],
        profile: Vec<f64>,
        kappa: f64,
        r0: f64,
    },
}

impl DomainSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn build(&self) -> Result<DomainMask> {
        match self {
            DomainSpec::Rect { nx, ny, h, origin } => DomainMask::full(Grid2D::with_origin(*nx, *ny, *h, *origin)?),
            DomainSpec::Lipschitz { nx, ny, h, origin, profile, kappa, r0 } => make_lipschitz_domain(
                Grid2D::with_origin(*nx, *ny, *h, *origin)?,
                LipschitzSpec { kappa: *kappa, r0: *r0, profile: profile.clone() },
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rect_counts() {
        let m = make_rect_domain(8, 8, 0.125).unwrap();
        assert_eq!(m.count(CellClass::Interior), 36);
        assert_eq!(m.count(CellClass::Boundary), 28);
        let m = make_rect_domain(64, 64, 1.0 / 63.0).unwrap();
        assert_eq!(m.count(CellClass::Interior), 3844);
    }

    #[test]
    fn rect_diameter() {
        let m = make_rect_domain(4, 4, 1.0).unwrap();
        assert_relative_eq!(m.diameter(), 3.0 * 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(make_rect_domain(3, 8, 1.0).is_err());
        assert!(make_rect_domain(8, 8, 0.0).is_err());
        assert!(make_rect_domain(8, 8, -1.0).is_err());
    }

    #[test]
    fn flat_profile_gives_upper_half() {
        let g = Grid2D::spanning(21, -1.0, 1.0).unwrap();
        let spec = LipschitzSpec::sample(&g, 0.0, 0.5, |_| 0.0);
        let m = make_lipschitz_domain(g, spec).unwrap();
        for k in 0..g.n_cells() {
            assert_eq!(m.is_active(k), g.center_of(k)[1] > 0.0);
        }
        assert!(m.lipschitz().is_some());
    }

    #[test]
    fn wedge_accepted_steep_rejected() {
        let g = Grid2D::spanning(33, -1.0, 1.0).unwrap();
        let ok = LipschitzSpec::sample(&g, 0.25, 0.5, |x| 0.2 * x.abs());
        assert!(make_lipschitz_domain(g, ok).is_ok());
        let bad = LipschitzSpec::sample(&g, 0.25, 0.5, |x| 0.5 * x.abs());
        assert!(matches!(make_lipschitz_domain(g, bad), Err(Error::SlopeViolation { .. })));
        let too_flat_kappa = LipschitzSpec::sample(&g, 0.3, 0.5, |_| 0.0);
        assert!(make_lipschitz_domain(g, too_flat_kappa).is_err());
    }

    #[test]
    fn empty_lipschitz_domain_rejected() {
        let g = Grid2D::spanning(8, -1.0, 1.0).unwrap();
        let spec = LipschitzSpec::sample(&g, 0.0, 0.5, |_| 5.0);
        assert!(matches!(make_lipschitz_domain(g, spec), Err(Error::EmptyDomain)));
    }

    #[test]
    fn ball_small_and_stencil() {
        let m = make_rect_domain(32, 32, 0.1).unwrap();
        let c = m.grid().center(10, 10);
        assert_eq!(ball_cells(&m, c, 0.4 * 0.1).len(), 1);
        assert_eq!(ball_cells(&m, c, 1.5 * 0.1).len(), 9);
        // Open ball: the four neighbours at distance exactly h are excluded.
        assert_eq!(ball_cells(&m, c, 0.1).len(), 1);
        assert_eq!(ball_cells(&m, c, 2f64.sqrt() * 0.1).len(), 5);
    }

    #[test]
    fn annulus_half_open() {
        let m = make_rect_domain(64, 64, 1.0).unwrap();
        let y = m.grid().center(32, 32);
        let ann = annulus_cells(&m, y, 2.0, 1);
        assert!(!ann.is_empty());
        for &k in &ann {
            let p = m.grid().center_of(k);
            let d = ((p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2)).sqrt();
            assert!((4.0..8.0).contains(&d), "d = {d}");
        }
        // (36, 32) is at distance exactly 4 and belongs; (40, 32) at exactly 8 does not.
        assert!(ann.contains(&m.grid().idx(36, 32)));
        assert!(!ann.contains(&m.grid().idx(40, 32)));
    }

    #[test]
    fn integrals() {
        let m = make_rect_domain(50, 50, 1.0 / 50.0).unwrap();
        let cells = m.active_cells();
        let one = ScalarField::constant(*m.grid(), 1.0);
        assert_relative_eq!(integrate(&one, &cells, None), 1.0, max_relative = 1e-12);
        let two = ScalarField::constant(*m.grid(), 2.0);
        assert_relative_eq!(integrate(&one, &cells[..100], Some(&two)), 2.0 * 100.0 * m.grid().cell_area(), max_relative = 1e-14);
        assert_relative_eq!(average(&two.scaled(1.5), &cells[7..19]).unwrap(), 3.0, max_relative = 1e-15);
        assert!(average(&one, &[]).is_err());
        assert_eq!(integrate(&one, &[], None), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid2D::with_origin(5, 6, 0.3, [-1.0, 2.0]).unwrap();
        let f = ScalarField::from_fn(g, |p| (p[0] * 7.1).sin() / 3.0 + p[1]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(f, back);

        let v = VectorField::from_fn(g, |p| [p[0].exp(), 1.0 / (3.0 + p[1])]);
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        assert_eq!(v, VectorField::read_csv(g, buf.as_slice()).unwrap());
    }

    #[test]
    fn domain_json() {
        let spec = DomainSpec::from_json(r#"{"type":"rect","nx":8,"ny":8,"h":0.125}"#).unwrap();
        assert_eq!(spec.build().unwrap().count(CellClass::Interior), 36);
        let lip = r#"{"type":"lipschitz","nx":4,"ny":4,"h":1.0,"origin":[0,-2],"profile":[0,0.1,0.2,0.1],"kappa":0.25,"r0":1}"#;
        let m = DomainSpec::from_json(lip).unwrap().build().unwrap();
        assert_eq!(m.count(CellClass::Exterior), 12);
        assert!(DomainSpec::from_json(r#"{"type":"rect","nx":8,"ny":8,"h":0.1,"hh":1}"#).is_err());
    }
}
