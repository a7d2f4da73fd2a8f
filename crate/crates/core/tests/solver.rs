use deglap::grid::{make_rect_domain, CellClass, DomainMask, Grid2D, ScalarField, VectorField};
use deglap::solver::{solve, solve_from, EnergyModel, ProblemSpec, SolveOptions};
use deglap::weights::{MatrixWeightField, Sym2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_square(n: usize) -> DomainMask {
    make_rect_domain(n, n, 1.0 / (n - 1) as f64).unwrap()
}

fn wavy(x: [f64; 2]) -> f64 {
    (2.0 * x[0]).sin() * (1.0 + x[1]) + 0.3 * (3.0 * x[1]).cos()
}

/// Quadratic energy sum over cells of |D w|^2 - 2 h F . D w with forward
/// differences, minimized by conjugate gradients on the interior of the
/// square. Written without the solver's assembly so it can act as a reference.
fn laplace_reference(n: usize, g: &[f64], f: &[[f64; 2]]) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let idx = |i: usize, j: usize| j * n + i;
    let free = |k: usize| {
        let (i, j) = (k % n, k / n);
        i > 0 && j > 0 && i + 1 < n && j + 1 < n
    };
    // Gradient of the quadratic at w, restricted to free cells.
    let grad = |w: &[f64], with_load: bool| {
        let mut out = vec![0.0; n * n];
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let c = idx(i, j);
                let (fe, fnn) = if with_load { (h * f[c][0], h * f[c][1]) } else { (0.0, 0.0) };
                let de = w[idx(i + 1, j)] - w[c] - fe;
                let dn = w[idx(i, j + 1)] - w[c] - fnn;
                out[idx(i + 1, j)] += 2.0 * de;
                out[idx(i, j + 1)] += 2.0 * dn;
                out[c] -= 2.0 * (de + dn);
            }
        }
        for (k, v) in out.iter_mut().enumerate() {
            if !free(k) {
                *v = 0.0;
            }
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut w: Vec<f64> = (0..n * n).map(|k| if free(k) { 0.0 } else { g[k] }).collect();
    let mut r: Vec<f64> = grad(&w, true).iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..20 * n * n {
        if rr.sqrt() < 1e-15 {
            break;
        }
        let hd = grad(&d, false);
        let a = rr / dot(&d, &hd);
        for k in 0..n * n {
            w[k] += a * d[k];
            r[k] -= a * hd[k];
        }
        let rr_new = dot(&r, &r);
        for k in 0..n * n {
            d[k] = r[k] + rr_new / rr * d[k];
        }
        rr = rr_new;
    }
    w
}

fn max_diff(a: &[f64], b: &[f64], mask: &DomainMask) -> f64 {
    (0..a.len()).filter(|&k| mask.is_active(k)).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

#[test]
fn quadratic_case_matches_conjugate_gradient_reference() {
    let n = 64;
    let mask = unit_square(n);
    let grid = *mask.grid();
    assert_eq!(mask.count(CellClass::Interior), (n - 2) * (n - 2));
    let g = ScalarField::from_fn(grid, wavy);
    let f = VectorField::from_fn(grid, |x| [(4.0 * x[1]).sin(), x[0] * x[0] - 0.5]);
    let spec = ProblemSpec::new(mask.clone(), MatrixWeightField::identity(grid), 2.0, f.clone(), g.clone()).unwrap();
    let rep = solve(&spec, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    let reference = laplace_reference(n, g.values(), f.values());
    let err = max_diff(rep.u.values(), &reference, &mask);
    assert!(err <= 1e-8, "max |u - reference| = {err:e}");
}

fn forward_difference(g: &ScalarField) -> VectorField {
    let grid = *g.grid();
    let mut out = VectorField::zeros(grid);
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx - 1 {
            let c = g.get(i, j);
            out.values_mut()[grid.idx(i, j)] = [(g.get(i + 1, j) - c) / grid.h, (g.get(i, j + 1) - c) / grid.h];
        }
    }
    out
}

#[test]
fn forcing_equal_to_boundary_gradient_returns_boundary_data() {
    let mask = unit_square(64);
    let grid = *mask.grid();
    let g = ScalarField::from_fn(grid, wavy);
    let f = forward_difference(&g);
    let aniso = Sym2::from_full([[2.0, 0.0], [0.0, 1.0]]).unwrap();
    for p in [1.5, 2.0, 3.0] {
        for weight in [MatrixWeightField::identity(grid), MatrixWeightField::constant(grid, aniso).unwrap()] {
            let spec = ProblemSpec::new(mask.clone(), weight, p, f.clone(), g.clone()).unwrap();
            let t = std::time::Instant::now();
            let rep = solve(&spec, &SolveOptions::default()).unwrap();
            assert!(t.elapsed().as_secs_f64() <= 30.0);
            let err = max_diff(rep.u.values(), g.values(), &mask);
            assert!(err <= 1e-8, "p = {p}: max |u - g| = {err:e}");
        }
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let n = 17;
    let mask = unit_square(n);
    let grid = *mask.grid();
    let g = ScalarField::from_fn(grid, wavy);
    let f = VectorField::from_fn(grid, |x| [x[1], -x[0]]);
    let weight = MatrixWeightField::constant(grid, Sym2::from_full([[2.0, 0.3], [0.3, 1.0]]).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for p in [1.5, 3.0] {
        let spec = ProblemSpec::new(mask.clone(), weight.clone(), p, f.clone(), g.clone()).unwrap();
        let model = EnergyModel::new(&spec).unwrap();
        let delta = 0.05;
        let x: Vec<f64> = (0..model.dofs().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = model.expand(&x);
        let grad = model.gradient(&w, delta);
        for _ in 0..100 {
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = 1e-5;
            let plus: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            let minus: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a - s * b).collect();
            let fd = (model.energy(&model.expand(&plus), delta) - model.energy(&model.expand(&minus), delta)) / (2.0 * s);
            let an: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "p = {p}: fd {fd} analytic {an}");
        }
    }
}

#[test]
fn maximum_principle_without_forcing() {
    let mask = unit_square(33);
    let grid = *mask.grid();
    let g = ScalarField::from_fn(grid, |x| (5.0 * x[0] * x[1]).sin() + x[0]);
    let rim: Vec<usize> = mask.cells_of(CellClass::Boundary);
    let lo = rim.iter().map(|&k| g.values()[k]).fold(f64::INFINITY, f64::min);
    let hi = rim.iter().map(|&k| g.values()[k]).fold(f64::NEG_INFINITY, f64::max);
    for p in [1.5, 2.0, 4.0] {
        let spec = ProblemSpec::new(mask.clone(), MatrixWeightField::identity(grid), p, VectorField::zeros(grid), g.clone()).unwrap();
        let u = solve(&spec, &SolveOptions::default()).unwrap().u;
        for k in mask.cells_of(CellClass::Interior) {
            let v = u.values()[k];
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "p = {p}: {v} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn distinct_initial_guesses_reach_the_same_solution() {
    let mask = unit_square(33);
    let grid = *mask.grid();
    let g = ScalarField::from_fn(grid, wavy);
    let f = VectorField::from_fn(grid, |x| [(6.0 * x[1]).cos(), 1.0]);
    let weight = MatrixWeightField::constant(grid, Sym2::from_full([[1.0, 0.0], [0.0, 3.0]]).unwrap().rotated(0.7)).unwrap();
    let opts = SolveOptions::default();
    for p in [1.5, 3.0] {
        let spec = ProblemSpec::new(mask.clone(), weight.clone(), p, f.clone(), g.clone()).unwrap();
        let a = solve_from(&spec, &ScalarField::zeros(grid), &opts).unwrap();
        let b = solve_from(&spec, &ScalarField::from_fn(grid, |x| 10.0 * (x[0] - x[1])), &opts).unwrap();
        assert!(a.converged && b.converged);
        let d = max_diff(a.u.values(), b.u.values(), &mask);
        assert!(d < 10.0 * opts.tol, "p = {p}: solutions differ by {d:e}");
    }
}

#[test]
fn radial_problem_on_disc_has_monotone_energy_trace() {
    let grid = Grid2D::spanning(40, -1.0, 1.0).unwrap();
    let mask = DomainMask::from_predicate(grid, |x| x[0].hypot(x[1]) < 0.9).unwrap();
    let g = ScalarField::from_fn(grid, |x| x[0] * x[0] + x[1] * x[1]);
    let f = VectorField::from_fn(grid, |x| [x[0], x[1]]);
    let spec = ProblemSpec::new(mask.clone(), MatrixWeightField::identity(grid), 3.0, f, g).unwrap();
    let rep = solve(&spec, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    assert!(rep.energy_monotone_within_stages());
    for w in rep.trace.windows(2) {
        if w[0].stage == w[1].stage {
            assert!(w[1].energy <= w[0].energy);
        }
    }
    // Radial symmetry survives the lattice up to discretization error.
    let (i, j) = (grid.nx / 2, grid.ny / 2);
    let a = rep.u.get(i + 5, j);
    let b = rep.u.get(i, j + 5);
    assert!((a - b).abs() < 0.05, "{a} vs {b}");
}
