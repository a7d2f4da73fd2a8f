//! Discrete minimizers of the matrix-weighted p-energy
//!
//! ```text
//! E(w) = h^2 * sum_c [ (|P_c grad w_c|^2 + delta^2)^(p/2) - p * A(P_c F_c) . P_c grad w_c ]
//! ```
//!
//! with `A(y) = |y|^(p-2) y`. A gradient cell `c` is any non-exterior cell whose
//! east and north neighbours are non-exterior; its gradient is the pair of
//! forward differences. The Euler-Lagrange equation of `E` at `delta = 0`
//! tested with single-cell indicators is the discrete weak form, so the
//! minimizer and the weak solution coincide.
//!
//! Interior cells are unknowns; every other non-exterior cell is pinned to
//! the boundary datum. Minimization is damped Newton with sparse Cholesky and
//! Armijo backtracking, followed by `delta -> delta / 4` continuation until the
//! unregularized residual meets the tolerance.

mod vp;

pub use vp::{psi, shifted_n, v_p_map};

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::{CscCholesky, CscSymbolicCholesky};
use nalgebra_sparse::pattern::SparsityPattern;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::{DomainMask, Grid2D, ScalarField, VectorField};
use crate::report::{num, nums};
use crate::weights::{MatrixWeightField, Sym2};

const UNSET: usize = usize::MAX;

/// Data of one Dirichlet problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mask: DomainMask,
    pub weight: MatrixWeightField,
    pub p: f64,
    pub forcing: VectorField,
    /// Boundary datum, given on the whole grid as its own extension.
    pub boundary: ScalarField,
    /// Regularization used by [`energy`]; the solver picks its own schedule.
    pub delta: f64,
}

impl ProblemSpec {
    pub fn new(mask: DomainMask, weight: MatrixWeightField, p: f64, forcing: VectorField, boundary: ScalarField) -> Result<Self> {
        let spec = ProblemSpec { mask, weight, p, forcing, boundary, delta: 0.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("need 1 < p < inf, got {}", self.p)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::param("delta", format!("must be non-negative, got {}", self.delta)));
        }
        let g = self.mask.grid();
        g.ensure_same(self.weight.grid())?;
        g.ensure_same(self.forcing.grid())?;
        g.ensure_same(self.boundary.grid())?;
        self.forcing.check_finite(&self.mask)?;
        self.boundary.check_finite(&self.mask)?;
        Ok(())
    }

    pub fn grid(&self) -> &Grid2D {
        self.mask.grid()
    }
}

/// `[cell, east, north]` for every gradient cell of a region.
pub fn gradient_cells(grid: &Grid2D, region: &[bool]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for j in 0..grid.ny.saturating_sub(1) {
        for i in 0..grid.nx - 1 {
            let c = grid.idx(i, j);
            let (e, n) = (c + 1, c + grid.nx);
            if region[c] && region[e] && region[n] {
                out.push([c, e, n]);
            }
        }
    }
    out
}

#[inline]
fn forward_grad(w: &[f64], cell: &[usize; 3], h: f64) -> [f64; 2] {
    [(w[cell[1]] - w[cell[0]]) / h, (w[cell[2]] - w[cell[0]]) / h]
}

/// Forward-difference gradient on the gradient cells of the mask, zero elsewhere.
pub fn discrete_gradient(w: &ScalarField, mask: &DomainMask) -> VectorField {
    let g = *mask.grid();
    let mut out = VectorField::zeros(g);
    let vals = out.values_mut();
    for cell in gradient_cells(&g, &mask.active_flags()) {
        vals[cell[0]] = forward_grad(w.values(), &cell, g.h);
    }
    out
}

/// `|P v|^p` cellwise.
pub fn weighted_power(weight: &MatrixWeightField, v: &VectorField, p: f64) -> ScalarField {
    let vals = weight
        .values()
        .iter()
        .zip(v.values())
        .map(|(m, x)| {
            let y = m.apply(*x);
            y[0].hypot(y[1]).powf(p)
        })
        .collect();
    ScalarField::new(*v.grid(), vals).expect("same grid")
}

#[inline]
fn a_map(y: [f64; 2], p: f64) -> [f64; 2] {
    let n = y[0].hypot(y[1]);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = n.powf(p - 2.0);
    [s * y[0], s * y[1]]
}

/// Energy, gradient and Hessian of one discrete problem.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    grid: Grid2D,
    p: f64,
    cells: Vec<[usize; 3]>,
    weight: Vec<Sym2>,
    /// `P_c A(P_c F_c)` per gradient cell.
    load: Vec<[f64; 2]>,
    dof_of: Vec<usize>,
    dofs: Vec<usize>,
    /// Pinned cell values, with unknowns at zero.
    pinned: Vec<f64>,
    flux_scale: f64,
    data_scale: f64,
    col_offsets: Vec<usize>,
    row_indices: Vec<usize>,
    slots: Vec<[usize; 9]>,
}

impl EnergyModel {
    /// Full problem: interior cells free, other non-exterior cells pinned to `g`.
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let mask = &spec.mask;
        let region = mask.active_flags();
        let free: Vec<bool> = (0..region.len()).map(|k| mask.is_interior(k)).collect();
        Self::build(spec.grid(), &spec.weight, spec.p, &region, &free, spec.boundary.values(), Some(&spec.forcing))
    }

    fn build(
        grid: &Grid2D,
        weight: &MatrixWeightField,
        p: f64,
        region: &[bool],
        free: &[bool],
        pinned_values: &[f64],
        forcing: Option<&VectorField>,
    ) -> Result<Self> {
        let cells = gradient_cells(grid, region);
        let n = grid.n_cells();
        let mut dof_of = vec![UNSET; n];
        let mut dofs = Vec::new();
        for k in 0..n {
            if region[k] && free[k] {
                dof_of[k] = dofs.len();
                dofs.push(k);
            }
        }
        let mut pinned = vec![0.0; n];
        for k in 0..n {
            if region[k] && !free[k] {
                pinned[k] = pinned_values[k];
            }
        }
        let wvals: Vec<Sym2> = cells.iter().map(|c| *weight.get(c[0])).collect();
        let load: Vec<[f64; 2]> = match forcing {
            Some(f) => cells
                .iter()
                .zip(&wvals)
                .map(|(c, m)| m.apply(a_map(m.apply(f.values()[c[0]]), p)))
                .collect(),
            None => vec![[0.0; 2]; cells.len()],
        };
        let mut flux_scale: f64 = 0.0;
        let mut data_scale: f64 = 0.0;
        for (k, c) in cells.iter().enumerate() {
            let m = &wvals[k];
            let yg = m.apply(forward_grad(pinned_values, c, grid.h));
            let fg = m.apply(a_map(yg, p));
            flux_scale = flux_scale.max(fg[0].hypot(fg[1])).max(load[k][0].hypot(load[k][1]));
            data_scale = data_scale.max(yg[0].hypot(yg[1]));
            if let Some(f) = forcing {
                let yf = m.apply(f.values()[c[0]]);
                data_scale = data_scale.max(yf[0].hypot(yf[1]));
            }
        }
        if !(flux_scale > 0.0) {
            flux_scale = 1.0;
        }
        if !(data_scale > 0.0) {
            data_scale = 1.0;
        }
        // Symmetric sparsity pattern of the Hessian over the unknowns.
        let nd = dofs.len();
        let mut cols: Vec<Vec<usize>> = (0..nd).map(|d| vec![d]).collect();
        for c in &cells {
            for &a in c {
                for &b in c {
                    let (da, db) = (dof_of[a], dof_of[b]);
                    if da != UNSET && db != UNSET {
                        cols[db].push(da);
                    }
                }
            }
        }
        let mut col_offsets = Vec::with_capacity(nd + 1);
        let mut row_indices = Vec::new();
        col_offsets.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_indices.extend_from_slice(col);
            col_offsets.push(row_indices.len());
        }
        let slots = cells
            .iter()
            .map(|c| {
                let mut s = [UNSET; 9];
                for (ia, &a) in c.iter().enumerate() {
                    for (ib, &b) in c.iter().enumerate() {
                        let (da, db) = (dof_of[a], dof_of[b]);
                        if da != UNSET && db != UNSET {
                            let col = &row_indices[col_offsets[db]..col_offsets[db + 1]];
                            s[ia * 3 + ib] = col_offsets[db] + col.binary_search(&da).expect("pattern entry");
                        }
                    }
                }
                s
            })
            .collect();
        Ok(EnergyModel {
            grid: *grid,
            p,
            cells,
            weight: wvals,
            load,
            dof_of,
            dofs,
            pinned,
            flux_scale,
            data_scale,
            col_offsets,
            row_indices,
            slots,
        })
    }

    /// Cell indices of the unknowns, in unknown order.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// Typical size of `|P grad g|` and `|P F|`, used to scale `delta`.
    pub fn data_scale(&self) -> f64 {
        self.data_scale
    }

    /// Cell values from unknowns (pinned cells from the datum, exterior zero).
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut w = self.pinned.clone();
        for (d, &k) in self.dofs.iter().enumerate() {
            w[k] = x[d];
        }
        w
    }

    pub fn restrict(&self, w: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&k| w[k]).collect()
    }

    /// Regularized energy of a full cell vector.
    pub fn energy(&self, w: &[f64], delta: f64) -> f64 {
        let (p, h) = (self.p, self.grid.h);
        let d2 = delta * delta;
        let mut acc = 0.0;
        for (k, c) in self.cells.iter().enumerate() {
            let z = forward_grad(w, c, h);
            let y = self.weight[k].apply(z);
            let s = y[0] * y[0] + y[1] * y[1] + d2;
            acc += s.powf(0.5 * p) - p * (self.load[k][0] * z[0] + self.load[k][1] * z[1]);
        }
        h * h * acc
    }

    /// Cell vector carrying `x` on the unknowns and zero elsewhere.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.n_cells()];
        for (d, &k) in self.dofs.iter().enumerate() {
            w[k] = x[d];
        }
        w
    }

    /// `energy(w + dw) - energy(w)` for `dw` vanishing on pinned cells,
    /// accurate relative to the change itself rather than to the energy.
    pub fn energy_change(&self, w: &[f64], dw: &[f64], delta: f64) -> f64 {
        let (p, h) = (self.p, self.grid.h);
        let d2 = delta * delta;
        let mut acc = 0.0;
        for (k, c) in self.cells.iter().enumerate() {
            let m = &self.weight[k];
            let dz = forward_grad(dw, c, h);
            if dz == [0.0, 0.0] {
                continue;
            }
            let y = m.apply(forward_grad(w, c, h));
            let dy = m.apply(dz);
            let s0 = y[0] * y[0] + y[1] * y[1] + d2;
            let ds = 2.0 * (y[0] * dy[0] + y[1] * dy[1]) + dy[0] * dy[0] + dy[1] * dy[1];
            let grow = if s0 > 0.0 {
                s0.powf(0.5 * p) * (0.5 * p * (ds / s0).max(-1.0).ln_1p()).exp_m1()
            } else {
                ds.max(0.0).powf(0.5 * p)
            };
            acc += grow - p * (self.load[k][0] * dz[0] + self.load[k][1] * dz[1]);
        }
        h * h * acc
    }

    /// Gradient of [`EnergyModel::energy`] with respect to the unknowns.
    pub fn gradient(&self, w: &[f64], delta: f64) -> Vec<f64> {
        self.assemble_flux(w, Some(delta), self.p)
    }

    /// Weak-form imbalance against each unknown's indicator, at `delta = 0`.
    pub fn weak_residual(&self, w: &[f64]) -> Vec<f64> {
        self.assemble_flux(w, None, 1.0)
    }

    /// Largest weak-form imbalance relative to `h` times the data flux scale.
    pub fn relative_residual(&self, w: &[f64]) -> f64 {
        let r = self.weak_residual(w);
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (self.grid.h * self.flux_scale)
    }

    fn assemble_flux(&self, w: &[f64], delta: Option<f64>, factor: f64) -> Vec<f64> {
        let (p, h) = (self.p, self.grid.h);
        let mut g = vec![0.0; self.dofs.len()];
        let scale = factor * h * h / h;
        for (k, c) in self.cells.iter().enumerate() {
            let m = &self.weight[k];
            let y = m.apply(forward_grad(w, c, h));
            let flux = match delta {
                Some(d) => {
                    let s = (y[0] * y[0] + y[1] * y[1] + d * d).powf(0.5 * p - 1.0);
                    m.apply([s * y[0], s * y[1]])
                }
                None => m.apply(a_map(y, p)),
            };
            let v = [scale * (flux[0] - self.load[k][0]), scale * (flux[1] - self.load[k][1])];
            let (d0, de, dn) = (self.dof_of[c[0]], self.dof_of[c[1]], self.dof_of[c[2]]);
            if d0 != UNSET {
                g[d0] -= v[0] + v[1];
            }
            if de != UNSET {
                g[de] += v[0];
            }
            if dn != UNSET {
                g[dn] += v[1];
            }
        }
        g
    }

    /// Hessian values in the model's CSC layout.
    fn hessian_values(&self, w: &[f64], delta: f64) -> Vec<f64> {
        let (p, h) = (self.p, self.grid.h);
        let d2 = delta * delta;
        let mut vals = vec![0.0; self.row_indices.len()];
        let inv_h = 1.0 / h;
        let dcols = [[-inv_h, -inv_h], [inv_h, 0.0], [0.0, inv_h]];
        for (k, c) in self.cells.iter().enumerate() {
            let m = &self.weight[k];
            let y = m.apply(forward_grad(w, c, h));
            let s = (y[0] * y[0] + y[1] * y[1] + d2).max(f64::MIN_POSITIVE);
            let a = p * s.powf(0.5 * p - 1.0);
            let b = p * (p - 2.0) * s.powf(0.5 * p - 2.0);
            let hy = Sym2::new(a + b * y[0] * y[0], b * y[0] * y[1], a + b * y[1] * y[1]);
            // P H P
            let ph = [[m.a * hy.a + m.b * hy.b, m.a * hy.b + m.b * hy.c], [m.b * hy.a + m.c * hy.b, m.b * hy.b + m.c * hy.c]];
            let kk = Sym2::new(
                ph[0][0] * m.a + ph[0][1] * m.b,
                ph[0][0] * m.b + ph[0][1] * m.c,
                ph[1][0] * m.b + ph[1][1] * m.c,
            );
            let slots = &self.slots[k];
            for ia in 0..3 {
                let kd = kk.apply(dcols[ia]);
                for ib in 0..3 {
                    let s = slots[ia * 3 + ib];
                    if s != UNSET {
                        vals[s] += h * h * (kd[0] * dcols[ib][0] + kd[1] * dcols[ib][1]);
                    }
                }
            }
        }
        vals
    }

    fn pattern(&self) -> SparsityPattern {
        let n = self.dofs.len();
        SparsityPattern::try_from_offsets_and_indices(n, n, self.col_offsets.clone(), self.row_indices.clone()).expect("valid pattern")
    }
}

/// Regularized energy of `w` for the problem, using `spec.delta`.
pub fn energy(spec: &ProblemSpec, w: &ScalarField) -> Result<f64> {
    spec.grid().ensure_same(w.grid())?;
    for k in spec.mask.cells_of(crate::grid::CellClass::Boundary) {
        let (value, expected) = (w.values()[k], spec.boundary.values()[k]);
        if value != expected {
            return Err(Error::BoundaryMismatch { cell: k, value, expected });
        }
    }
    Ok(EnergyModel::new(spec)?.energy(w.values(), spec.delta))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target for the relative unregularized weak residual.
    pub tol: f64,
    /// Newton steps per continuation stage.
    pub max_iter: usize,
    /// Starting regularization; defaults to `spec.delta` if positive, else a
    /// tenth of the data scale.
    pub delta0: Option<f64>,
    /// Continuation stops below this multiple of the data scale.
    pub delta_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-9, max_iter: 500, delta0: None, delta_floor: 1e-8 }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub stage: usize,
    pub delta: f64,
    pub iteration: usize,
    /// Regularized energy after the step: the stage's starting energy plus
    /// the accumulated per-step changes, each summed cell by cell without
    /// cancellation against the total.
    pub energy: f64,
    pub step: f64,
    pub gradient_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: ScalarField,
    /// Unregularized energy of `u`.
    pub energy: f64,
    /// Relative unregularized weak residual of `u`.
    pub weak_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub delta_path: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub gradient_fallbacks: usize,
    pub tol: f64,
}

impl SolveReport {
    /// Everything but the solution field.
    pub fn metadata(&self) -> serde_json::Value {
        json!({
            "energy": num(self.energy),
            "weak_residual": num(self.weak_residual),
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": num(self.tol),
            "delta_path": nums(&self.delta_path),
            "gradient_fallbacks": self.gradient_fallbacks,
        })
    }

    /// True when the regularized energy never increased within a stage.
    pub fn energy_monotone_within_stages(&self) -> bool {
        self.trace.windows(2).all(|w| w[0].stage != w[1].stage || w[1].energy <= w[0].energy)
    }
}

struct Newton<'a> {
    model: &'a EnergyModel,
    symbolic: CscSymbolicCholesky,
    chol: Option<CscCholesky<f64>>,
}

impl<'a> Newton<'a> {
    fn new(model: &'a EnergyModel) -> Self {
        Newton { model, symbolic: CscSymbolicCholesky::factor(model.pattern()), chol: None }
    }

    fn direction(&mut self, w: &[f64], grad: &[f64], delta: f64) -> (Vec<f64>, bool) {
        let vals = self.model.hessian_values(w, delta);
        let ok = match self.chol.as_mut() {
            Some(ch) => ch.refactor(&vals).is_ok(),
            None => match CscCholesky::factor_numerical(self.symbolic.clone(), &vals) {
                Ok(ch) => {
                    self.chol = Some(ch);
                    true
                }
                Err(_) => false,
            },
        };
        if ok {
            let ch = self.chol.as_ref().expect("factor present");
            let rhs = DMatrix::from_iterator(grad.len(), 1, grad.iter().map(|g| -g));
            let d = ch.solve(&rhs);
            let d: Vec<f64> = d.iter().copied().collect();
            if d.iter().all(|v| v.is_finite()) {
                return (d, false);
            }
        } else {
            self.chol = None;
        }
        // Diagonally scaled steepest descent.
        let m = self.model;
        let mut diag = vec![1.0; grad.len()];
        for (col, dg) in diag.iter_mut().enumerate() {
            let rows = &m.row_indices[m.col_offsets[col]..m.col_offsets[col + 1]];
            if let Ok(pos) = rows.binary_search(&col) {
                let v = vals[m.col_offsets[col] + pos];
                if v > 0.0 && v.is_finite() {
                    *dg = v;
                }
            }
        }
        (grad.iter().zip(&diag).map(|(g, d)| -g / d).collect(), true)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimizes the regularized energy at fixed `delta`. Returns the number of
/// steps taken.
fn newton_stage(
    newton: &mut Newton<'_>,
    x: &mut Vec<f64>,
    delta: f64,
    stage: usize,
    stage_tol: f64,
    max_iter: usize,
    trace: &mut Vec<TraceEntry>,
    fallbacks: &mut usize,
) -> usize {
    let model = newton.model;
    let res_scale = model.p * model.grid.h * model.flux_scale;
    let mut w = model.expand(x);
    let mut e = model.energy(&w, delta);
    for it in 0..max_iter {
        let g = model.gradient(&w, delta);
        if norm_inf(&g) / res_scale <= stage_tol {
            return it;
        }
        let (mut d, mut fell_back) = newton.direction(&w, &g, delta);
        let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            fell_back = true;
        }
        if fell_back {
            *fallbacks += 1;
            log::warn!("Newton direction not a descent direction at stage {stage} iteration {it}; using scaled gradient");
        }
        let dfull = model.scatter(&d);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let step: Vec<f64> = dfull.iter().map(|v| t * v).collect();
            let de = model.energy_change(&w, &step, delta);
            if de.is_finite() && de <= 1e-4 * t * slope {
                accepted = Some(de);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(de) => {
                for (a, b) in x.iter_mut().zip(&d) {
                    *a += t * b;
                }
                w = model.expand(x);
                e += de;
                trace.push(TraceEntry { stage, delta, iteration: it, energy: e, step: t, gradient_fallback: fell_back });
            }
            None => return it,
        }
    }
    max_iter
}

fn run(model: &EnergyModel, grid: &Grid2D, x0: Vec<f64>, spec_delta: f64, opts: &SolveOptions) -> Result<SolveReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {}", opts.tol)));
    }
    let mut x = x0;
    let mut trace = Vec::new();
    let mut fallbacks = 0;
    let mut iterations = 0;
    let mut delta_path = Vec::new();
    let scale = model.data_scale;
    let mut delta = opts.delta0.unwrap_or(if spec_delta > 0.0 { spec_delta } else { 0.1 * scale });
    let floor = opts.delta_floor * scale;
    let stage_tol = 0.1 * opts.tol;
    let mut newton = Newton::new(model);
    let mut residual;
    let mut stage = 0;
    loop {
        iterations += newton_stage(&mut newton, &mut x, delta, stage, stage_tol, opts.max_iter, &mut trace, &mut fallbacks);
        delta_path.push(delta);
        residual = model.relative_residual(&model.expand(&x));
        stage += 1;
        if residual <= opts.tol || delta < floor {
            break;
        }
        delta *= 0.25;
    }
    if residual > opts.tol {
        // Last resort: minimize the unregularized energy directly.
        iterations += newton_stage(&mut newton, &mut x, 0.0, stage, stage_tol, opts.max_iter, &mut trace, &mut fallbacks);
        delta_path.push(0.0);
        residual = model.relative_residual(&model.expand(&x));
    }
    let w = model.expand(&x);
    Ok(SolveReport {
        energy: model.energy(&w, 0.0),
        u: ScalarField::new(*grid, w)?,
        weak_residual: residual,
        iterations,
        converged: residual <= opts.tol,
        delta_path,
        trace,
        gradient_fallbacks: fallbacks,
        tol: opts.tol,
    })
}

/// Solves from the zero initial guess on the unknowns.
pub fn solve(spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let model = EnergyModel::new(spec)?;
    let x0 = vec![0.0; model.dofs.len()];
    run(&model, spec.grid(), x0, spec.delta, opts)
}

/// Solves from the unknowns' values in `init`.
pub fn solve_from(spec: &ProblemSpec, init: &ScalarField, opts: &SolveOptions) -> Result<SolveReport> {
    spec.grid().ensure_same(init.grid())?;
    let model = EnergyModel::new(spec)?;
    let x0 = model.restrict(init.values());
    run(&model, spec.grid(), x0, spec.delta, opts)
}

/// Cells of `region` with a lattice neighbour outside it.
pub fn region_rim(grid: &Grid2D, region: &[bool]) -> Vec<bool> {
    let (nx, ny) = (grid.nx, grid.ny);
    (0..grid.n_cells())
        .map(|k| {
            if !region[k] {
                return false;
            }
            let (i, j) = grid.ij(k);
            !(i > 0 && j > 0 && i + 1 < nx && j + 1 < ny && region[k - 1] && region[k + 1] && region[k - nx] && region[k + nx])
        })
        .collect()
}

/// Zero-forcing problem on a sub-region with its rim pinned to
/// `boundary_values`. The returned field vanishes outside the region.
pub fn solve_homogeneous(spec: &ProblemSpec, region_cells: &[usize], boundary_values: &ScalarField, opts: &SolveOptions) -> Result<SolveReport> {
    spec.validate()?;
    let g = *spec.grid();
    g.ensure_same(boundary_values.grid())?;
    let mut region = vec![false; g.n_cells()];
    for &k in region_cells {
        if k >= g.n_cells() || !spec.mask.is_active(k) {
            return Err(Error::param("region_cells", format!("cell {k} is not a non-exterior cell")));
        }
        region[k] = true;
    }
    if region_cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let rim = region_rim(&g, &region);
    let free: Vec<bool> = (0..g.n_cells()).map(|k| region[k] && !rim[k]).collect();
    let model = EnergyModel::build(&g, &spec.weight, spec.p, &region, &free, boundary_values.values(), None)?;
    let x0 = vec![0.0; model.dofs.len()];
    run(&model, &g, x0, 0.0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_rect_domain;
    use approx::assert_relative_eq;

    fn affine_spec(n: usize, p: f64, weight: Sym2) -> ProblemSpec {
        let m = make_rect_domain(n, n, 1.0 / (n - 1) as f64).unwrap();
        let g = *m.grid();
        let gfield = ScalarField::from_fn(g, |x| 0.3 + 1.2 * x[0] - 0.7 * x[1]);
        ProblemSpec::new(m, MatrixWeightField::constant(g, weight).unwrap(), p, VectorField::zeros(g), gfield).unwrap()
    }

    #[test]
    fn zero_data_zero_energy() {
        let m = make_rect_domain(6, 6, 0.2).unwrap();
        let g = *m.grid();
        let spec = ProblemSpec::new(m, MatrixWeightField::identity(g), 1.7, VectorField::zeros(g), ScalarField::zeros(g)).unwrap();
        assert_eq!(energy(&spec, &ScalarField::zeros(g)).unwrap(), 0.0);
        let mut bad = ScalarField::zeros(g);
        bad.values_mut()[0] = 1.0;
        assert!(matches!(energy(&spec, &bad), Err(Error::BoundaryMismatch { cell: 0, .. })));
    }

    #[test]
    fn affine_is_exact() {
        for p in [1.5, 2.0, 3.0] {
            let spec = affine_spec(12, p, Sym2::diag(2.0, 1.0));
            let rep = solve(&spec, &SolveOptions::default()).unwrap();
            assert!(rep.converged, "p={p}: residual {}", rep.weak_residual);
            let err = rep.u.values().iter().zip(spec.boundary.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "p={p}: err {err}");
            assert!(rep.energy_monotone_within_stages());
        }
    }

    #[test]
    fn homogeneity_in_p() {
        let m = make_rect_domain(7, 7, 0.25).unwrap();
        let g = *m.grid();
        let spec = ProblemSpec::new(m.clone(), MatrixWeightField::identity(g), 3.0, VectorField::zeros(g), ScalarField::zeros(g)).unwrap();
        let w = ScalarField::from_fn_masked(&m, |x| if m.is_interior(g.idx((x[0] / 0.25).round() as usize, (x[1] / 0.25).round() as usize)) { x[0].sin() + x[1] } else { 0.0 });
        let e1 = energy(&spec, &w).unwrap();
        let e2 = energy(&spec, &w.scaled(2.0)).unwrap();
        assert_relative_eq!(e2, 8.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn residual_is_linear_in_tests() {
        // The residual vector pairs with any test function linearly by construction;
        // check additivity of the assembled functional on two indicator sums.
        let spec = affine_spec(8, 2.5, Sym2::identity());
        let model = EnergyModel::new(&spec).unwrap();
        let w: Vec<f64> = (0..spec.grid().n_cells()).map(|k| (k as f64 * 0.37).sin()).collect();
        let w = model.expand(&model.restrict(&w));
        let r = model.weak_residual(&w);
        let phi1: Vec<f64> = (0..r.len()).map(|d| (d % 3) as f64).collect();
        let phi2: Vec<f64> = (0..r.len()).map(|d| (d % 5) as f64 - 1.0).collect();
        let pair = |phi: &[f64]| r.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        let sum: Vec<f64> = phi1.iter().zip(&phi2).map(|(a, b)| a + b).collect();
        assert_relative_eq!(pair(&sum), pair(&phi1) + pair(&phi2), max_relative = 1e-12);
    }
}
