//! Comparison of `Psi(|z1 - z2|)` with `|V_p(z1) - V_p(z2)|^2` on random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::report::{num, nums, CheckReport};
use crate::solver::{psi, v_p_map};

/// Tolerance slopes used below `p = 2`.
pub const VPHI_EPSILONS: [f64; 3] = [0.5, 0.1, 0.01];

/// Random pairs with log-uniform magnitudes in `[1e-3, 1e3]` and uniform angles.
pub fn random_pairs(trials: usize, seed: u64) -> Vec<([f64; 2], [f64; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let r = 10f64.powf(rng.gen_range(-3.0..3.0));
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        [r * t.cos(), r * t.sin()]
    };
    (0..trials).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

fn v_gap2(z1: [f64; 2], z2: [f64; 2], p: f64) -> f64 {
    let (a, b) = (v_p_map(z1, p), v_p_map(z2, p));
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn dist(z1: [f64; 2], z2: [f64; 2]) -> f64 {
    (z1[0] - z2[0]).hypot(z1[1] - z2[1])
}

/// Ratio `Psi(|z1 - z2|) / |V_p(z1) - V_p(z2)|^2`, zero when both vanish.
pub fn vphi_ratio(z1: [f64; 2], z2: [f64; 2], p: f64) -> f64 {
    let num = psi(dist(z1, z2), p);
    let den = v_gap2(z1, z2, p);
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Smallest `C` with `Psi(|z1 - z2|) <= eps Psi(|z1|) + C |V_p(z1) - V_p(z2)|^2` for one pair.
pub fn vphi_eps_constant(z1: [f64; 2], z2: [f64; 2], p: f64, eps: f64) -> f64 {
    let excess = psi(dist(z1, z2), p) - eps * psi(z1[0].hypot(z1[1]), p);
    if excess <= 0.0 {
        0.0
    } else {
        excess / v_gap2(z1, z2, p)
    }
}

pub fn check_vphi(p: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("need p > 1, got {p}")));
    }
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    let pairs = random_pairs(trials, seed);
    let mut rep = if p >= 2.0 {
        let mut rep = CheckReport::new("vphi", "psi-of-difference-below-v-gap");
        let mut best = (0.0, 0usize);
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let r = vphi_ratio(a, b, p);
            if r > best.0 {
                best = (r, k);
            }
        }
        let (z1, z2) = pairs[best.1];
        rep.set_constant(best.0);
        rep.passed = best.0.is_finite();
        rep.witness("z1", nums(&z1)).witness("z2", nums(&z2)).witness("ratio", num(best.0)).witness("trial", best.1);
        rep
    } else {
        let mut rep = CheckReport::new("vphi", "psi-of-difference-below-eps-psi-plus-scaled-v-gap");
        let expo = 1.0 - 2.0 / p;
        let mut per_eps = Vec::new();
        let mut fitted = 0.0f64;
        let mut fit_at = (0.0, 0usize);
        for &eps in &VPHI_EPSILONS {
            let mut best = (0.0, 0usize);
            for (k, &(a, b)) in pairs.iter().enumerate() {
                let c = vphi_eps_constant(a, b, p, eps);
                if c > best.0 {
                    best = (c, k);
                }
            }
            let k_eps = best.0 / eps.powf(expo);
            if k_eps > fitted {
                fitted = k_eps;
                fit_at = (eps, best.1);
            }
            per_eps.push(json!({ "eps": eps, "C": num(best.0), "trial": best.1, "scaled": num(k_eps) }));
        }
        // One constant K must cover every eps once scaled by eps^(1 - 2/p).
        rep.set_constant(fitted);
        rep.passed = fitted.is_finite();
        let (z1, z2) = pairs[fit_at.1];
        rep.witness("eps", fit_at.0)
            .witness("z1", nums(&z1))
            .witness("z2", nums(&z2))
            .witness("trial", fit_at.1)
            .witness("eps_exponent", expo);
        rep.sweep("per_eps", serde_json::Value::Array(per_eps));
        rep.convention("empirical_C is the fitted K with C(eps) <= K eps^(1 - 2/p)");
        rep
    };
    rep.seed = Some(seed);
    rep.sweep("p", p).sweep("trials", trials).sweep("magnitudes", nums(&[1e-3, 1e3]));
    rep.convention("Psi(t) = t^p / p").convention("magnitudes log-uniform, angles uniform");
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_values() {
        assert_eq!(vphi_ratio([1.0, 0.0], [0.0, 0.0], 4.0), 0.25);
        assert_eq!(vphi_ratio([0.3, -2.0], [0.3, -2.0], 3.0), 0.0);
        let r = check_vphi(2.0, 2000, 3).unwrap();
        assert!((r.empirical_c.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn witness_reproduces() {
        let r = check_vphi(1.5, 3000, 11).unwrap();
        let z1: Vec<f64> = serde_json::from_value(r.witness["z1"].clone()).unwrap();
        let z2: Vec<f64> = serde_json::from_value(r.witness["z2"].clone()).unwrap();
        let eps = r.witness_f64("eps").unwrap();
        let k = vphi_eps_constant([z1[0], z1[1]], [z2[0], z2[1]], 1.5, eps) / eps.powf(1.0 - 2.0 / 1.5);
        assert!((k - r.empirical_c.unwrap()).abs() <= 1e-9 * k);
    }
}
