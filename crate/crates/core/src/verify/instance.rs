//! Seeded synthetic problems on the unit square.
//!
//! Every generator describes a continuous function that is sampled at cell
//! centers, so the same spec at two resolutions gives the same data.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grid::{make_rect_domain, DomainMask, Grid2D, ScalarField, VectorField};
use crate::lattice::RadiusLadder;
use crate::solver::{discrete_gradient, ProblemSpec};
use crate::weights::{ellipticity_lambda, log_bmo_scan, sym_exp, MatrixWeightField, Sym2, SymField};

const STREAM_BOUNDARY: u64 = 0x9e37_79b9_7f4a_7c15;
const STREAM_FORCING: u64 = 0xc2b2_ae3d_27d4_eb4f;
const STREAM_WEIGHT: u64 = 0x1656_67b1_9e37_79f9;

/// Accepts either a bare variant name or the full tagged object.
pub fn shorthand<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: DeserializeOwned,
{
    let v = Value::deserialize(d)?;
    let v = match v {
        Value::String(s) => json!({ "kind": s }),
        other => other,
    };
    T::deserialize(v).map_err(D::Error::custom)
}

fn default_offset() -> f64 {
    0.25
}
fn default_slope() -> [f64; 2] {
    [1.0, -0.5]
}
fn default_modes() -> usize {
    3
}
fn default_one() -> f64 {
    1.0
}
fn default_two() -> f64 {
    2.0
}
fn default_log_bmo() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarGen {
    Zero,
    Constant {
        value: f64,
    },
    Affine {
        #[serde(default = "default_offset")]
        offset: f64,
        #[serde(default = "default_slope")]
        slope: [f64; 2],
    },
    /// `|x - center|^power`, centered on the domain by default.
    Radial {
        #[serde(default)]
        center: Option<[f64; 2]>,
        #[serde(default = "default_two")]
        power: f64,
    },
    Fourier {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_one")]
        amplitude: f64,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorGen {
    Zero,
    Constant {
        value: [f64; 2],
    },
    Fourier {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_one")]
        amplitude: f64,
    },
    /// Discrete gradient of the boundary datum, times `scale`.
    GradG {
        #[serde(default = "default_one")]
        scale: f64,
    },
    Sum {
        terms: Vec<VectorGen>,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixGen {
    Identity,
    Constant {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `exp(t L(x))` with `L` a smooth field of rotated anisotropies and
    /// `t` chosen so the log-BMO seminorm on a 33 x 33 reference grid equals
    /// `log_bmo`.
    RotatedAnisotropy {
        #[serde(default = "default_log_bmo")]
        log_bmo: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    Csv {
        path: PathBuf,
    },
}

/// Smooth random function: a sum of separable cosines with decaying
/// coefficients.
#[derive(Debug, Clone)]
struct Fourier {
    terms: Vec<(f64, f64, f64, f64, f64)>,
}

impl Fourier {
    fn new(rng: &mut ChaCha8Rng, modes: usize, amplitude: f64) -> Self {
        let mut terms = Vec::new();
        for k in 1..=modes {
            for l in 1..=modes {
                let c = amplitude * rng.gen_range(-1.0..1.0) / (k + l) as f64;
                let (px, py) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
                terms.push((c, k as f64 * PI, l as f64 * PI, px, py));
            }
        }
        Fourier { terms }
    }

    fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms.iter().map(|&(c, kx, ky, px, py)| c * (kx * x[0] + px).cos() * (ky * x[1] + py).cos()).sum()
    }
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

fn read_scalar(grid: Grid2D, path: &PathBuf) -> Result<ScalarField> {
    ScalarField::read_csv(grid, std::fs::File::open(path)?)
}

impl ScalarGen {
    pub fn build(&self, mask: &DomainMask, seed: u64) -> Result<ScalarField> {
        let g = *mask.grid();
        Ok(match self {
            ScalarGen::Zero => ScalarField::zeros(g),
            ScalarGen::Constant { value } => ScalarField::constant(g, *value),
            ScalarGen::Affine { offset, slope } => ScalarField::from_fn(g, |x| offset + slope[0] * x[0] + slope[1] * x[1]),
            ScalarGen::Radial { center, power } => {
                let c = center.unwrap_or_else(|| bbox_center(&g));
                ScalarField::from_fn(g, |x| (x[0] - c[0]).hypot(x[1] - c[1]).powf(*power))
            }
            ScalarGen::Fourier { modes, amplitude } => {
                let f = Fourier::new(&mut stream(seed, STREAM_BOUNDARY), *modes, *amplitude);
                ScalarField::from_fn(g, |x| f.eval(x))
            }
            ScalarGen::Csv { path } => read_scalar(g, path)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            ScalarGen::Zero => "zero".into(),
            ScalarGen::Constant { value } => format!("constant({value})"),
            ScalarGen::Affine { .. } => "affine".into(),
            ScalarGen::Radial { power, .. } => format!("radial(power={power})"),
            ScalarGen::Fourier { modes, amplitude } => format!("fourier(modes={modes},amplitude={amplitude})"),
            ScalarGen::Csv { path } => format!("csv({})", path.display()),
        }
    }
}

fn bbox_center(g: &Grid2D) -> [f64; 2] {
    let a = g.center(0, 0);
    let b = g.center(g.nx - 1, g.ny - 1);
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

impl VectorGen {
    /// `boundary` is needed only by [`VectorGen::GradG`]. Parts of a sum
    /// share the seed, so two Fourier terms in one sum coincide.
    pub fn build(&self, mask: &DomainMask, boundary: &ScalarField, seed: u64) -> Result<VectorField> {
        let g = *mask.grid();
        Ok(match self {
            VectorGen::Zero => VectorField::zeros(g),
            VectorGen::Constant { value } => VectorField::from_fn(g, |_| *value),
            VectorGen::Fourier { modes, amplitude } => {
                let mut rng = stream(seed, STREAM_FORCING);
                let fx = Fourier::new(&mut rng, *modes, *amplitude);
                let fy = Fourier::new(&mut rng, *modes, *amplitude);
                VectorField::from_fn(g, |x| [fx.eval(x), fy.eval(x)])
            }
            VectorGen::GradG { scale } => discrete_gradient(boundary, mask).scaled(*scale),
            VectorGen::Sum { terms } => {
                let mut acc = VectorField::zeros(g);
                for t in terms {
                    let part = t.build(mask, boundary, seed)?;
                    for (a, b) in acc.values_mut().iter_mut().zip(part.values()) {
                        a[0] += b[0];
                        a[1] += b[1];
                    }
                }
                acc
            }
            VectorGen::Csv { path } => VectorField::read_csv(g, std::fs::File::open(path)?)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            VectorGen::Zero => "zero".into(),
            VectorGen::Constant { value } => format!("constant({},{})", value[0], value[1]),
            VectorGen::Fourier { modes, amplitude } => format!("fourier(modes={modes},amplitude={amplitude})"),
            VectorGen::GradG { scale } => format!("grad_g(scale={scale})"),
            VectorGen::Sum { terms } => format!("sum({})", terms.iter().map(|t| t.label()).collect::<Vec<_>>().join(",")),
            VectorGen::Csv { path } => format!("csv({})", path.display()),
        }
    }
}

/// Unscaled log of the rotated-anisotropy weight.
fn anisotropy_log(g: &Grid2D, seed: u64, modes: usize) -> SymField {
    let mut rng = stream(seed, STREAM_WEIGHT);
    let angle = Fourier::new(&mut rng, modes, PI);
    let split = Fourier::new(&mut rng, modes, 1.0);
    let level = Fourier::new(&mut rng, modes, 0.5);
    let vals = (0..g.n_cells())
        .map(|k| {
            let x = g.center_of(k);
            let s = split.eval(x);
            Sym2::diag(s, -s).rotated(angle.eval(x)).add(&Sym2::scalar(level.eval(x)))
        })
        .collect();
    SymField::new(*g, vals).expect("grid sized")
}

fn bmo_of_log(logs: &SymField, mask: &DomainMask, stride: usize) -> Result<f64> {
    let field = sym_exp(logs)?;
    Ok(log_bmo_scan(&field, mask, &RadiusLadder::default_for(mask), stride)?.value)
}

impl MatrixGen {
    pub fn build(&self, mask: &DomainMask, seed: u64) -> Result<MatrixWeightField> {
        let g = *mask.grid();
        match self {
            MatrixGen::Identity => Ok(MatrixWeightField::identity(g)),
            MatrixGen::Constant { a, b, c } => MatrixWeightField::constant(g, Sym2::new(*a, *b, *c)),
            MatrixGen::RotatedAnisotropy { log_bmo, modes } => {
                if !(*log_bmo >= 0.0 && log_bmo.is_finite()) {
                    return Err(Error::param("log_bmo", format!("must be non-negative, got {log_bmo}")));
                }
                // The seminorm is linear in the log, so one reference
                // measurement fixes the scale exactly on that grid.
                let lo = g.center(0, 0);
                let hi = g.center(g.nx - 1, g.ny - 1);
                let rg = Grid2D::with_origin(33, 33, (hi[0] - lo[0]) / 32.0, lo)?;
                let rmask = DomainMask::full(rg)?;
                let unit = bmo_of_log(&anisotropy_log(&rg, seed, *modes), &rmask, 1)?;
                let t = if unit > 0.0 { log_bmo / unit } else { 0.0 };
                let logs = anisotropy_log(&g, seed, *modes);
                let scaled = SymField::new(g, logs.values().iter().map(|m| m.scale(t)).collect())?;
                sym_exp(&scaled)
            }
            MatrixGen::Csv { path } => MatrixWeightField::read_csv(g, std::fs::File::open(path)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MatrixGen::Identity => "identity".into(),
            MatrixGen::Constant { a, b, c } => format!("constant({a},{b},{c})"),
            MatrixGen::RotatedAnisotropy { log_bmo, modes } => format!("rotated_anisotropy(log_bmo={log_bmo},modes={modes})"),
            MatrixGen::Csv { path } => format!("csv({})", path.display()),
        }
    }
}

/// A problem on the unit square with `n x n` cells of width `1 / (n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n: usize,
    pub p: f64,
    #[serde(deserialize_with = "shorthand")]
    pub weight: MatrixGen,
    #[serde(deserialize_with = "shorthand")]
    pub forcing: VectorGen,
    #[serde(deserialize_with = "shorthand")]
    pub boundary: ScalarGen,
    /// Set by the caller, never read from a config.
    #[serde(skip)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub spec: ProblemSpec,
    pub seed: u64,
    /// Log-BMO seminorm of the weight measured on this grid.
    pub kappa_measured: f64,
    /// Largest pointwise condition number of the weight.
    pub lambda: f64,
}

impl Instance {
    pub fn p(&self) -> f64 {
        self.spec.p
    }

    pub fn h(&self) -> f64 {
        self.spec.grid().h
    }

    /// `(kappa_measured, lambda, p, h)` as a JSON object.
    pub fn descriptor(&self) -> Value {
        json!({
            "id": self.id,
            "kappa_measured": crate::report::num(self.kappa_measured),
            "lambda": crate::report::num(self.lambda),
            "p": self.p(),
            "h": self.h(),
            "seed": self.seed,
        })
    }
}

impl InstanceSpec {
    pub fn new(n: usize, p: f64, weight: MatrixGen, forcing: VectorGen, boundary: ScalarGen, seed: u64) -> Self {
        InstanceSpec { n, p, weight, forcing, boundary, seed }
    }

    pub fn mask(&self) -> Result<DomainMask> {
        if self.n < 3 {
            return Err(Error::param("n", format!("need at least 3 cells per side, got {}", self.n)));
        }
        make_rect_domain(self.n, self.n, 1.0 / (self.n - 1) as f64)
    }

    /// Same data on the grid of half the width.
    pub fn refined(&self) -> Self {
        InstanceSpec { n: 2 * self.n - 1, ..self.clone() }
    }

    pub fn id(&self) -> String {
        format!("n{}-p{}-s{}", self.n, self.p, self.seed)
    }

    pub fn build(&self) -> Result<Instance> {
        let mask = self.mask()?;
        let g = *mask.grid();
        let boundary = self.boundary.build(&mask, self.seed)?;
        let forcing = self.forcing.build(&mask, &boundary, self.seed)?;
        let weight = self.weight.build(&mask, self.seed)?;
        let stride = (self.n - 1).div_ceil(32).max(1);
        let kappa_measured = match self.weight {
            MatrixGen::Identity | MatrixGen::Constant { .. } => 0.0,
            _ => log_bmo_scan(&weight, &mask, &RadiusLadder::default_for(&mask), stride)?.value,
        };
        let lambda = ellipticity_lambda(&weight);
        let spec = ProblemSpec::new(mask, weight, self.p, forcing, boundary)?;
        debug_assert_eq!(*spec.grid(), g);
        Ok(Instance { id: self.id(), spec, seed: self.seed, kappa_measured, lambda })
    }
}

/// `count` instances cycling `p` through {1.5, 2, 3}, each with a
/// rotated-anisotropy weight of log-BMO at most `max_log_bmo` and random
/// smooth forcing and boundary data.
pub fn random_family(base_seed: u64, count: usize, n: usize, max_log_bmo: f64) -> Vec<InstanceSpec> {
    const PS: [f64; 3] = [1.5, 2.0, 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    (0..count)
        .map(|i| {
            let kappa = max_log_bmo * rng.gen_range(0.25..1.0);
            let seed = base_seed.wrapping_mul(1000).wrapping_add(i as u64);
            InstanceSpec::new(
                n,
                PS[i % PS.len()],
                MatrixGen::RotatedAnisotropy { log_bmo: kappa, modes: 2 },
                VectorGen::Fourier { modes: 3, amplitude: 1.0 },
                ScalarGen::Fourier { modes: 3, amplitude: 1.0 },
                seed,
            )
        })
        .collect()
}
