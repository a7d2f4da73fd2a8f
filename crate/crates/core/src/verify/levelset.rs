//! Good-lambda level-set inequality and the norm bounds that follow from it.

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use super::{safe_ratio, tag_instance, Instance, PowerFields};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::lattice::RadiusLadder;
use crate::maximal::{fractional_maximal, MaximalConfig, StepDistribution};
use crate::report::{num, nums, CheckReport};
use crate::spaces::{generalized_lorentz_norm, lorentz_norm, morrey_norm, LorentzIndices, MorreyShape, Psi, SigmaFunction};
use crate::weights::ScalarWeight;

fn default_gammas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_cap() -> f64 {
    1e6
}
fn default_theta() -> f64 {
    0.5
}
fn default_levels() -> usize {
    49
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetParams {
    pub alpha: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub eps: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Explicit levels; by default `levels` values spaced by `2^(1/4)` down
    /// from the largest value of the solution's maximal function.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default)]
    pub parallel: bool,
}

impl LevelSetParams {
    pub fn new(alpha: f64, theta: f64, eps: Vec<f64>) -> Self {
        LevelSetParams { alpha, theta, eps, gammas: default_gammas(), lambdas: None, levels: default_levels(), cap: default_cap(), parallel: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::param("theta", format!("must be positive, got {}", self.theta)));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::param("eps", "need values in (0, 1)"));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::param("gammas", "need positive values"));
        }
        Ok(())
    }
}

/// Maximal functions of the solution and data fields.
struct Maximals {
    solution: ScalarField,
    data: ScalarField,
}

fn maximals(inst: &Instance, u: &ScalarField, alpha: f64, parallel: bool) -> Result<Maximals> {
    let f = PowerFields::new(&inst.spec, u);
    let cfg = MaximalConfig::default_for(&inst.spec.mask, alpha)?.with_parallel(parallel);
    Ok(Maximals {
        solution: fractional_maximal(&f.grad_u, &inst.spec.mask, &cfg)?,
        data: fractional_maximal(&f.data, &inst.spec.mask, &cfg)?,
    })
}

/// Per `eps`, the smallest `C` such that
/// `d(M|P grad u|^p; eps^-theta l) <= C eps d(M|P grad u|^p; l) + d(M|P G|^p; eps^gamma l)`
/// for every level `l`, minimized over the `gamma` ladder.
pub fn check_levelset(inst: &Instance, u: &ScalarField, mu: &ScalarWeight, params: &LevelSetParams) -> Result<CheckReport> {
    params.validate()?;
    let mask = &inst.spec.mask;
    let m = maximals(inst, u, params.alpha, params.parallel)?;
    let du = StepDistribution::new(&m.solution, mu, mask)?;
    let dg = StepDistribution::new(&m.data, mu, mask)?;
    let lambdas = match &params.lambdas {
        Some(l) => l.clone(),
        None => {
            let top = du.max_level().max(f64::MIN_POSITIVE);
            (0..params.levels).map(|k| top * 2f64.powf(-(k as f64) / 4.0)).collect()
        }
    };
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::param("lambdas", "levels must be positive and finite"));
    }
    let mut rep = CheckReport::new("levelset", "good-lambda-level-set-estimate");
    let mut per_eps = Vec::new();
    let mut worst: Option<(f64, f64, f64, f64)> = None; // (C, eps, gamma, lambda)
    let mut all_within_cap = true;
    for &eps in &params.eps {
        let mut best_gamma: Option<(f64, f64, f64, Vec<f64>)> = None; // (C, gamma, lambda, failures)
        for &gamma in &params.gammas {
            let mut c = 0.0f64;
            let mut at = lambdas[0];
            let mut failures = Vec::new();
            for &l in &lambdas {
                let excess = du.eval(eps.powf(-params.theta) * l) - dg.eval(eps.powf(gamma) * l);
                let ci = safe_ratio(excess, eps * du.eval(l));
                if ci > params.cap {
                    failures.push(l);
                }
                if ci > c {
                    c = ci;
                    at = l;
                }
            }
            if best_gamma.as_ref().map_or(true, |b| c < b.0) {
                best_gamma = Some((c, gamma, at, failures));
            }
        }
        let (c, gamma, at, failures) = best_gamma.expect("gamma ladder non-empty");
        all_within_cap &= c <= params.cap;
        per_eps.push(json!({ "eps": eps, "C": num(c), "gamma": gamma, "lambda": num(at), "failures": nums(&failures) }));
        if worst.map_or(true, |w| c > w.0) {
            worst = Some((c, eps, gamma, at));
        }
    }
    let (c, eps, gamma, at) = worst.expect("eps grid non-empty");
    rep.set_constant(c);
    rep.passed = all_within_cap;
    rep.witness("eps", eps)
        .witness("gamma", gamma)
        .witness("lambda", num(at))
        .witness("d_solution_high", num(du.eval(eps.powf(-params.theta) * at)))
        .witness("d_solution", num(du.eval(at)))
        .witness("d_data", num(dg.eval(eps.powf(gamma) * at)))
        .witness("per_eps", Value::Array(per_eps));
    rep.sweep("alpha", params.alpha)
        .sweep("theta", params.theta)
        .sweep("eps", nums(&params.eps))
        .sweep("gamma", nums(&params.gammas))
        .sweep("lambdas", nums(&lambdas))
        .sweep("mu", mu.id());
    tag_instance(&mut rep, inst);
    rep.convention("d(f; l) = mu({M_alpha f > l}) with M_alpha over the default radius ladder");
    rep.convention("G = F + grad g; 0/0 counts as 0, x/0 as unbounded");
    rep.convention(format!("failures list levels whose constant exceeds the cap {}", params.cap));
    Ok(rep)
}

/// Accepts a number, `"inf"`, `"infinity"` or `null` (how infinity serializes).
fn extended_reals<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw: Vec<Value> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|v| match &v {
            Value::Number(n) => n.as_f64().ok_or_else(|| serde::de::Error::custom("bad number")),
            Value::String(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Value::Null => Ok(f64::INFINITY),
            _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {v}"))),
        })
        .collect()
}

fn default_qs() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_ss() -> Vec<f64> {
    vec![1.0, 2.0, f64::INFINITY]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Lorentz {
        #[serde(default = "default_qs")]
        q: Vec<f64>,
        #[serde(default = "default_ss", deserialize_with = "extended_reals")]
        s: Vec<f64>,
    },
    /// Lorentz with the distribution composed with a doubling `Sigma`.
    GeneralizedLorentz {
        sigma: SigmaFunction,
        #[serde(default = "default_qs")]
        q: Vec<f64>,
        #[serde(default = "default_ss", deserialize_with = "extended_reals")]
        s: Vec<f64>,
    },
    Morrey {
        psi: Psi,
        #[serde(default = "default_qs")]
        q: Vec<f64>,
    },
}

impl SpaceSpec {
    pub fn lorentz() -> Self {
        SpaceSpec::Lorentz { q: default_qs(), s: default_ss() }
    }

    fn label(&self) -> &'static str {
        match self {
            SpaceSpec::Lorentz { .. } => "lorentz",
            SpaceSpec::GeneralizedLorentz { .. } => "generalized_lorentz",
            SpaceSpec::Morrey { .. } => "morrey",
        }
    }
}

fn morrey_shape(psi: &Psi) -> Result<MorreyShape> {
    match psi {
        Psi::Power { upsilon } => MorreyShape::power(*upsilon),
        Psi::BallArea => Ok(MorreyShape::ball_area()),
        Psi::Table { radii, values } => MorreyShape::table(radii.clone(), values.clone()),
    }
}

/// Ratios `||M_alpha |P grad u|^p|| / ||M_alpha |P G|^p||` over a space's
/// index sweep.
pub fn check_norm_transfer(inst: &Instance, u: &ScalarField, mu: &ScalarWeight, alpha: f64, space: &SpaceSpec, parallel: bool) -> Result<CheckReport> {
    let mask = &inst.spec.mask;
    let m = maximals(inst, u, alpha, parallel)?;
    let mut pairs: Vec<(Value, f64, f64)> = Vec::new();
    match space {
        SpaceSpec::Lorentz { q, s } | SpaceSpec::GeneralizedLorentz { q, s, .. } => {
            let sigma = match space {
                SpaceSpec::GeneralizedLorentz { sigma, .. } => Some(sigma),
                _ => None,
            };
            for &qq in q {
                for &ss in s {
                    let idx = LorentzIndices::new(qq, ss)?;
                    let norm = |f: &ScalarField| match sigma {
                        Some(sg) => generalized_lorentz_norm(f, mu, mask, sg, idx),
                        None => lorentz_norm(f, mu, mask, idx),
                    };
                    pairs.push((json!({ "q": qq, "s": idx.label() }), norm(&m.solution)?, norm(&m.data)?));
                }
            }
        }
        SpaceSpec::Morrey { psi, q } => {
            let shape = morrey_shape(psi)?;
            let ladder = RadiusLadder::default_for(mask);
            for &qq in q {
                pairs.push((json!({ "q": qq }), morrey_norm(&m.solution, mask, &shape, qq, &ladder)?, morrey_norm(&m.data, mask, &shape, qq, &ladder)?));
            }
        }
    }
    let mut rep = CheckReport::new(format!("norm_transfer_{}", space.label()), format!("maximal-gradient-norm-bounded-by-data-norm-{}", space.label()));
    let mut rows = Vec::new();
    let mut worst: Option<(f64, usize)> = None;
    for (i, (key, a, b)) in pairs.iter().enumerate() {
        let r = safe_ratio(*a, *b);
        if worst.map_or(true, |w| r > w.0) {
            worst = Some((r, i));
        }
        let mut row = key.clone();
        row["ratio"] = num(r);
        row["solution_norm"] = num(*a);
        row["data_norm"] = num(*b);
        rows.push(row);
    }
    let (r, i) = worst.ok_or_else(|| Error::param("space", "empty index sweep"))?;
    rep.set_constant(r);
    rep.passed = r.is_finite();
    rep.witness("indices", pairs[i].0.clone()).witness("solution_norm", num(pairs[i].1)).witness("data_norm", num(pairs[i].2)).witness("ratio", num(r));
    rep.sweep("space", serde_json::to_value(space)?).sweep("alpha", alpha).sweep("mu", mu.id()).sweep("ratios", Value::Array(rows));
    tag_instance(&mut rep, inst);
    rep.convention("G = F + grad g; 0/0 counts as a vacuous pass with ratio 0");
    Ok(rep)
}
