//! Radius ladders and exact lattice-disc sums via row prefix sums.
//!
//! Every ball scan in the crate (maximal operators, Muckenhoupt and Morrey
//! suprema) centers discs on cell centers, so a disc of radius `r` is a fixed
//! set of integer offsets. [`DiscShape`] stores its per-row half widths and
//! [`RowPrefix`] turns each row of the disc into one subtraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, Grid2D};

/// Default geometric ratio between consecutive ladder radii.
pub const LADDER_RATIO: f64 = 1.189_207_115_002_721; // 2^(1/4)

/// Ascending, strictly positive radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RadiusLadder(Vec<f64>);

impl RadiusLadder {
    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::param("radius_ladder", "must be non-empty"));
        }
        if !radii.iter().all(|&r| r > 0.0 && r.is_finite()) {
            return Err(Error::param("radius_ladder", "radii must be positive and finite"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("radius_ladder", "radii must be strictly ascending"));
        }
        Ok(RadiusLadder(radii))
    }

    /// `start * ratio^k` for every `k >= 0` with the radius not above `end`
    /// (up to rounding).
    pub fn geometric(start: f64, end: f64, ratio: f64) -> Result<Self> {
        if !(start > 0.0) || !(ratio > 1.0) || !(end >= start) {
            return Err(Error::param("radius_ladder", format!("bad geometric ladder start={start} end={end} ratio={ratio}")));
        }
        let mut radii = Vec::new();
        let mut k = 0i32;
        loop {
            let r = start * ratio.powi(k);
            if r > end * (1.0 + 1e-12) {
                break;
            }
            radii.push(r);
            k += 1;
        }
        Self::from_radii(radii)
    }

    /// Ratio `2^(1/4)` from `h` up to twice the domain diameter.
    pub fn default_for(mask: &DomainMask) -> Self {
        Self::geometric(mask.grid().h, 2.0 * mask.diameter(), LADDER_RATIO).expect("diameter exceeds h")
    }

    pub fn radii(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Radii strictly below `cut`; `None` if nothing survives.
    pub fn below(&self, cut: f64) -> Option<Self> {
        let radii: Vec<f64> = self.0.iter().copied().filter(|&r| r < cut).collect();
        (!radii.is_empty()).then_some(RadiusLadder(radii))
    }

    /// Radii at most `cap`; `None` if nothing survives.
    pub fn capped(&self, cap: f64) -> Option<Self> {
        let radii: Vec<f64> = self.0.iter().copied().filter(|&r| r <= cap).collect();
        (!radii.is_empty()).then_some(RadiusLadder(radii))
    }
}

impl TryFrom<Vec<f64>> for RadiusLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_radii(v)
    }
}

impl From<RadiusLadder> for Vec<f64> {
    fn from(l: RadiusLadder) -> Self {
        l.0
    }
}

/// Open lattice disc `dx^2 + dy^2 < r^2` (lattice units) around a cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscShape {
    /// `half[|dy|]` is the largest `dx` in row `dy`; rows beyond `half.len()` are empty.
    pub half: Vec<usize>,
    /// Number of offsets in the infinite lattice.
    pub count: usize,
}

impl DiscShape {
    pub fn new(grid: &Grid2D, radius: f64) -> Self {
        let r2 = grid.lattice_radius2(radius);
        let mut half = Vec::new();
        let mut dy = 0usize;
        loop {
            let rest = r2 - (dy * dy) as f64;
            if rest <= 0.0 {
                break;
            }
            let mut w = rest.sqrt().floor() as usize;
            while w > 0 && (w * w) as f64 >= rest {
                w -= 1;
            }
            while (((w + 1) * (w + 1)) as f64) < rest {
                w += 1;
            }
            half.push(w);
            dy += 1;
        }
        let count = half
            .iter()
            .enumerate()
            .map(|(dy, &w)| if dy == 0 { 2 * w + 1 } else { 2 * (2 * w + 1) })
            .sum();
        DiscShape { half, count }
    }

    /// Extent in rows on either side of the center.
    pub fn reach(&self) -> usize {
        self.half.len().saturating_sub(1)
    }
}

/// Per-row inclusive prefix sums of a cell field.
#[derive(Debug, Clone)]
pub struct RowPrefix {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl RowPrefix {
    pub fn new(grid: &Grid2D, values: impl Fn(usize) -> f64) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut data = vec![0.0; ny * (nx + 1)];
        for j in 0..ny {
            let row = &mut data[j * (nx + 1)..(j + 1) * (nx + 1)];
            let mut acc = 0.0;
            for i in 0..nx {
                acc += values(j * nx + i);
                row[i + 1] = acc;
            }
        }
        RowPrefix { nx, ny, data }
    }

    /// Sum of the disc centered at cell `(ci, cj)`, clipped to the grid.
    pub fn disc_sum(&self, ci: usize, cj: usize, disc: &DiscShape) -> f64 {
        let mut s = 0.0;
        let stride = self.nx + 1;
        let reach = disc.half.len().min(cj.max(self.ny - 1 - cj) + 1);
        for (dy, &w) in disc.half[..reach].iter().enumerate() {
            let i0 = ci.saturating_sub(w);
            let i1 = (ci + w).min(self.nx - 1);
            let mut add_row = |j: usize| {
                let row = &self.data[j * stride..(j + 1) * stride];
                s += row[i1 + 1] - row[i0];
            };
            if dy == 0 {
                add_row(cj);
            } else {
                if cj >= dy {
                    add_row(cj - dy);
                }
                if cj + dy < self.ny {
                    add_row(cj + dy);
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_counts_match_scan() {
        let g = Grid2D::new(64, 64, 0.5).unwrap();
        for r in [0.2, 0.5, std::f64::consts::FRAC_1_SQRT_2, 0.75, 1.0, 1.6, 2.5, 5.0, 7.3] {
            let d = DiscShape::new(&g, r);
            let c = g.center(32, 32);
            assert_eq!(d.count, g.disc_cells(c, r).len(), "r = {r}");
        }
    }

    #[test]
    fn prefix_disc_sum_matches_scan_at_edges() {
        let g = Grid2D::new(17, 13, 1.0).unwrap();
        let vals: Vec<f64> = (0..g.n_cells()).map(|k| (k % 7) as f64).collect();
        let pre = RowPrefix::new(&g, |k| vals[k]);
        for (ci, cj) in [(0, 0), (16, 12), (3, 7), (8, 0)] {
            for r in [1.0, 2.3, 4.0, 9.9] {
                let d = DiscShape::new(&g, r);
                let direct: f64 = g.disc_cells(g.center(ci, cj), r).iter().map(|&k| vals[k]).sum();
                assert_eq!(pre.disc_sum(ci, cj, &d), direct);
            }
        }
    }

    #[test]
    fn ladder_validation() {
        assert!(RadiusLadder::from_radii(vec![]).is_err());
        assert!(RadiusLadder::from_radii(vec![1.0, 1.0]).is_err());
        assert!(RadiusLadder::from_radii(vec![-1.0]).is_err());
        let l = RadiusLadder::geometric(1.0, 2.0, LADDER_RATIO).unwrap();
        assert_eq!(l.len(), 5);
        assert!(l.below(1.0).is_none());
        assert_eq!(l.below(1.5).unwrap().len(), 3);
    }
}
