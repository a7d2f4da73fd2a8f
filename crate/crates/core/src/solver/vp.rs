//! Pointwise maps of the p-growth structure.

/// `|z|^((p-2)/2) z`, with the origin mapped to itself.
pub fn v_p_map(z: [f64; 2], p: f64) -> [f64; 2] {
    let n = z[0].hypot(z[1]);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.powf(0.5 * (p - 2.0));
    [s * z[0], s * z[1]]
}

/// `t^p / p`.
pub fn psi(t: f64, p: f64) -> f64 {
    t.powf(p) / p
}

/// Shifted N-function: quadratic below the shift `a`, `p`-growth above, and
/// C^1 across `t = a`.
pub fn shifted_n(a: f64, t: f64, p: f64) -> f64 {
    let t = t.abs();
    if a > 0.0 && t <= a {
        a.powf(p - 2.0) * t * t / 2.0
    } else {
        a.powf(p) / 2.0 + (t.powf(p) - a.powf(p)) / p
    }
}
