//! Least squares over the probability simplex.
//!
//! Solves `min_w (1/L) ‖x − D w‖²` subject to `w ≥ 0`, `Σ w = 1` with an
//! accelerated projected gradient method (FISTA with function-value and
//! gradient restarts). The projection is the exact sort-based Euclidean
//! projection, so every iterate is feasible. The same engine handles products
//! of simplices, which the partially pooled cohort fit needs.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const POLISH_EVERY: usize = 50;

/// Euclidean projection of `v` onto `{w : w ≥ 0, Σ w = 1}`.
pub fn project_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("cannot project an empty vector onto the simplex"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("simplex projection input must be finite".into()));
    }
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_in_place(&mut out, &mut scratch);
    Ok(out)
}

fn project_in_place(v: &mut [f64], sorted: &mut Vec<f64>) {
    if v.len() == 1 {
        v[0] = 1.0;
        return;
    }
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
        total += *x;
    }
    // Remove the rounding left in the sum.
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Convergence when the Frank-Wolfe gap (an upper bound on the remaining
    /// objective decrease) is at most `tolerance · max(1, objective)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

/// `min_w (1/L) ‖target − Σ_i w_i columns[i]‖²` over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexLsProblem {
    target: Vec<f64>,
    columns: Vec<Vec<f64>>,
    pub settings: SolverSettings,
}

impl SimplexLsProblem {
    /// `columns[i]` is the series of donor `i`, same length as `target`.
    pub fn new(target: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Empty("simplex least squares target"));
        }
        if columns.is_empty() {
            return Err(Error::Empty("simplex least squares dictionary"));
        }
        if columns.iter().any(|c| c.len() != target.len()) {
            return Err(Error::Validation(
                "every dictionary column must match the target length".into(),
            ));
        }
        if target.iter().chain(columns.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Validation("simplex least squares data must be finite".into()));
        }
        Ok(SimplexLsProblem {
            target,
            columns,
            settings: SolverSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Mean squared error of the combination `weights`.
    pub fn objective(&self, weights: &[f64]) -> f64 {
        mean_squared_residual(&self.target, &self.columns, weights)
    }
}

pub(crate) fn mean_squared_residual(target: &[f64], columns: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (r, &x) in target.iter().enumerate() {
        let fit: f64 = columns.iter().zip(w).map(|(c, &wi)| wi * c[r]).sum();
        total += (x - fit).powi(2);
    }
    total / target.len() as f64
}

/// Solution of a simplex-constrained problem. Feasible whether or not the
/// solver converged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexFit {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Frank-Wolfe duality gap at `weights`.
    pub gap: f64,
}

pub fn solve_simplex_ls(problem: &SimplexLsProblem) -> SimplexFit {
    let objective = LsObjective {
        target: &problem.target,
        columns: &problem.columns,
    };
    let n = problem.columns.len();
    let outcome = minimize_on_simplices(&objective, &[0..n], problem.settings, false);
    SimplexFit {
        objective: problem.objective(&outcome.x),
        weights: outcome.x,
        iterations: outcome.iterations,
        converged: outcome.converged,
        gap: outcome.gap,
    }
}

/// A convex quadratic objective.
pub(crate) trait Quadratic {
    fn dim(&self) -> usize;
    /// Objective at `x`; writes the gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Trace of the Hessian, an upper bound on its largest eigenvalue.
    fn hessian_trace(&self) -> f64;
    /// Magnitude of the data, used for the floating-point noise floor.
    fn data_scale(&self) -> f64;
}

struct LsObjective<'a> {
    target: &'a [f64],
    columns: &'a [Vec<f64>],
}

impl Quadratic for LsObjective<'_> {
    fn dim(&self) -> usize {
        self.columns.len()
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let rows = self.target.len();
        let scale = 2.0 / rows as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for r in 0..rows {
            let fit: f64 = self.columns.iter().zip(x).map(|(c, &w)| w * c[r]).sum();
            let resid = fit - self.target[r];
            total += resid * resid;
            for (g, c) in grad.iter_mut().zip(self.columns) {
                *g += scale * resid * c[r];
            }
        }
        total / rows as f64
    }

    fn hessian_trace(&self) -> f64 {
        let rows = self.target.len() as f64;
        self.columns
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            * 2.0
            / rows
    }

    fn data_scale(&self) -> f64 {
        self.target
            .iter()
            .chain(self.columns.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
    /// Objective after every accepted iterate, when requested.
    pub trace: Vec<f64>,
}

fn frank_wolfe_gap(x: &[f64], grad: &[f64], blocks: &[Range<usize>]) -> f64 {
    blocks
        .iter()
        .map(|b| {
            let inner: f64 = grad[b.clone()].iter().zip(&x[b.clone()]).map(|(g, w)| g * w).sum();
            let best = grad[b.clone()].iter().copied().fold(f64::INFINITY, f64::min);
            (inner - best).max(0.0)
        })
        .sum()
}

fn project_blocks(v: &mut [f64], blocks: &[Range<usize>], scratch: &mut Vec<f64>) {
    for b in blocks {
        project_in_place(&mut v[b.clone()], scratch);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration on the Hessian (as `∇f(v) − ∇f(0)`), giving a lower
/// estimate of its largest eigenvalue.
fn curvature_estimate(obj: &impl Quadratic) -> f64 {
    let n = obj.dim();
    let mut g0 = vec![0.0; n];
    obj.value_grad(&vec![0.0; n], &mut g0);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut hv = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..30 {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        obj.value_grad(&v, &mut hv);
        hv.iter_mut().zip(&g0).for_each(|(h, g)| *h -= g);
        lambda = dot(&v, &hv);
        std::mem::swap(&mut v, &mut hv);
    }
    lambda.max(0.0)
}

/// Full Hessian of a quadratic, column by column from gradient differences.
fn hessian(obj: &impl Quadratic) -> DMatrix<f64> {
    let n = obj.dim();
    let mut e = vec![0.0; n];
    let mut g0 = vec![0.0; n];
    obj.value_grad(&e, &mut g0);
    let mut h = DMatrix::zeros(n, n);
    let mut g = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        obj.value_grad(&e, &mut g);
        e[j] = 0.0;
        for i in 0..n {
            h[(i, j)] = g[i] - g0[i];
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Moves `x` toward the minimizer of the quadratic over the face that keeps
/// the zero coordinates of `x` at zero, stopping where the segment leaves the
/// feasible set. Returns the new point when it is no worse than `x`.
fn polish(
    obj: &impl Quadratic,
    blocks: &[Range<usize>],
    h: &DMatrix<f64>,
    x: &[f64],
    gx: &[f64],
    fx: f64,
    grad: &mut [f64],
) -> Option<(Vec<f64>, f64)> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    let m = support.len();
    let rows = m + blocks.len();
    let mut kkt = DMatrix::zeros(rows, rows);
    let mut rhs = DVector::zeros(rows);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        let block = blocks.iter().position(|r| r.contains(&i)).expect("covered");
        kkt[(a, m + block)] = 1.0;
        kkt[(m + block, a)] = 1.0;
        rhs[a] = -gx[i];
    }
    // Blocks are never empty on the support, so no constraint row is zero.
    let svd = kkt.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let sol = svd.solve(&rhs, eps).ok()?;
    let mut t = 1.0f64;
    for (a, &i) in support.iter().enumerate() {
        if sol[a] < 0.0 {
            t = t.min(x[i] / -sol[a]);
        }
    }
    if !(t > 0.0) {
        return None;
    }
    let mut out = x.to_vec();
    for (a, &i) in support.iter().enumerate() {
        out[i] = (x[i] + t * sol[a]).max(0.0);
        if t < 1.0 && sol[a] < 0.0 && x[i] / -sol[a] <= t {
            out[i] = 0.0;
        }
    }
    for b in blocks {
        let total: f64 = out[b.clone()].iter().sum();
        if !(total > 0.0) {
            return None;
        }
        out[b.clone()].iter_mut().for_each(|w| *w /= total);
    }
    let f = obj.value_grad(&out, grad);
    // The face minimizer may differ from `x` by rounding only.
    (f <= fx + 1e-14 * fx.abs().max(1.0)).then_some((out, f))
}

/// Minimizes `obj` over the product of simplices given by `blocks`, starting
/// from uniform weights within each block. Every `POLISH_EVERY` iterations
/// the iterate is moved to the exact minimizer on its current face when that
/// is feasible, which ends the slow tail of the first-order method once the
/// support is identified.
pub(crate) fn minimize_on_simplices(
    obj: &impl Quadratic,
    blocks: &[Range<usize>],
    settings: SolverSettings,
    record_trace: bool,
) -> Outcome {
    let n = obj.dim();
    let mut x = vec![0.0; n];
    for b in blocks {
        let share = 1.0 / b.len() as f64;
        x[b.clone()].iter_mut().for_each(|w| *w = share);
    }
    let mut gx = vec![0.0; n];
    let mut fx = obj.value_grad(&x, &mut gx);
    let mut trace = Vec::new();
    if record_trace {
        trace.push(fx);
    }
    let floor = 64.0 * f64::EPSILON * 2.0 * obj.data_scale().powi(2).max(f64::MIN_POSITIVE);
    let converged_at = |gap: f64, f: f64| gap <= settings.tolerance * f.max(1.0) || gap <= floor;

    let gap0 = frank_wolfe_gap(&x, &gx, blocks);
    if blocks.iter().all(|b| b.len() == 1) || converged_at(gap0, fx) {
        return Outcome {
            x,
            value: fx,
            iterations: 0,
            converged: true,
            gap: gap0,
            trace,
        };
    }

    let max_curvature = obj.hessian_trace();
    let mut curvature = (curvature_estimate(obj) * 1.05).min(max_curvature);
    if curvature <= 0.0 {
        curvature = max_curvature.max(f64::MIN_POSITIVE);
    }

    let mut y = x.clone();
    let mut gy = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut momentum = 1.0f64;
    let mut gap = gap0;
    let mut converged = false;
    let mut iterations = 0;
    let mut h: Option<DMatrix<f64>> = None;

    while iterations < settings.max_iterations {
        iterations += 1;
        if iterations % POLISH_EVERY == 0 {
            let h = h.get_or_insert_with(|| hessian(obj));
            if let Some((p, fp)) = polish(obj, blocks, h, &x, &gx, fx, &mut gz) {
                x = p;
                std::mem::swap(&mut gx, &mut gz);
                fx = fp;
                if record_trace {
                    trace.push(fx);
                }
                momentum = 1.0;
                y.copy_from_slice(&x);
                gap = frank_wolfe_gap(&x, &gx, blocks);
                if converged_at(gap, fx) {
                    converged = true;
                    break;
                }
                continue;
            }
        }
        let fy = obj.value_grad(&y, &mut gy);
        // Backtrack on the curvature estimate until the quadratic upper bound holds.
        let fz = loop {
            for i in 0..n {
                z[i] = y[i] - gy[i] / curvature;
            }
            project_blocks(&mut z, blocks, &mut scratch);
            let fz = obj.value_grad(&z, &mut gz);
            let step: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bound = fy + dot(&gy, &step) + 0.5 * curvature * dot(&step, &step);
            if fz <= bound + 1e-12 * fy.abs().max(f64::MIN_POSITIVE) || curvature >= max_curvature
            {
                break fz;
            }
            curvature = (curvature * 2.0).min(max_curvature);
        };

        if fz > fx && momentum > 1.0 {
            // Function restart: retry from x with a plain projected gradient
            // step, which cannot increase f beyond rounding.
            momentum = 1.0;
            y.copy_from_slice(&x);
            continue;
        }
        let moved = z
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        // Gradient restart: drop momentum when it points uphill.
        let uphill: f64 = (0..n).map(|i| (y[i] - z[i]) * (z[i] - x[i])).sum();
        if uphill > 0.0 {
            y.copy_from_slice(&z);
            momentum = 1.0;
        } else {
            for i in 0..n {
                y[i] = z[i] + beta * (z[i] - x[i]);
            }
            momentum = next_momentum;
        }
        std::mem::swap(&mut x, &mut z);
        std::mem::swap(&mut gx, &mut gz);
        fx = fz;
        if record_trace {
            trace.push(fx);
        }
        gap = frank_wolfe_gap(&x, &gx, blocks);
        // A fixed point of the projected gradient map is optimal.
        if converged_at(gap, fx) || (momentum == 1.0 && moved <= 4.0 * f64::EPSILON) {
            converged = true;
            break;
        }
    }

    // Final exact step on the identified face, so that solutions do not
    // depend on where inside the tolerance the iteration stopped.
    // A blocked step drops a coordinate from the support, so repeat until the
    // face minimizer is interior.
    let h = h.get_or_insert_with(|| hessian(obj));
    // Each step counts against the iteration budget.
    for _ in 0..=n {
        if iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;
        let Some((p, fp)) = polish(obj, blocks, h, &x, &gx, fx, &mut gz) else {
            break;
        };
        let gp = frank_wolfe_gap(&p, &gz, blocks);
        if !(converged_at(gp, fp) || !converged) || p == x {
            break;
        }
        x = p;
        std::mem::swap(&mut gx, &mut gz);
        fx = fp;
        gap = gp;
        converged = converged || converged_at(gp, fp);
        if record_trace {
            trace.push(fx);
        }
    }

    Outcome {
        x,
        value: fx,
        iterations,
        converged,
        gap,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force minimum over the simplex grid with the given step.
    pub(crate) fn grid_minimum(problem: &SimplexLsProblem, step: f64) -> f64 {
        let n = problem.columns().len();
        let ticks = (1.0 / step).round() as usize;
        let mut best = f64::INFINITY;
        match n {
            1 => best = problem.objective(&[1.0]),
            2 => {
                for a in 0..=ticks {
                    let w0 = a as f64 / ticks as f64;
                    best = best.min(problem.objective(&[w0, 1.0 - w0]));
                }
            }
            3 => {
                for a in 0..=ticks {
                    for b in 0..=(ticks - a) {
                        let w0 = a as f64 / ticks as f64;
                        let w1 = b as f64 / ticks as f64;
                        best = best.min(problem.objective(&[w0, w1, (1.0 - w0 - w1).max(0.0)]));
                    }
                }
            }
            _ => unreachable!("grid oracle supports up to three donors"),
        }
        best
    }

    fn assert_feasible(w: &[f64]) {
        assert!(w.iter().all(|&x| x >= 0.0), "negative weight in {w:?}");
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12, "weights sum to {total}");
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let p = project_to_simplex(&[2.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        // Grid search over the 1-simplex at step 1e-3 agrees.
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .min_by(|a, b| {
                let da = (a - 2.0).powi(2) + (1.0 - a).powi(2);
                let db = (b - 2.0).powi(2) + (1.0 - b).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        assert!((best - p[0]).abs() < 1e-3);
        let third = project_to_simplex(&[0.3, 0.3, 0.3]).unwrap();
        for w in third {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(project_to_simplex(&[]).is_err());
    }

    #[test]
    fn exact_singleton_fit() {
        let cols = vec![
            vec![1.0, 4.0, 2.0, 0.0],
            vec![3.0, 1.0, 0.5, 2.0],
            vec![5.0, 2.0, 7.0, 1.0],
        ];
        let problem = SimplexLsProblem::new(cols[2].clone(), cols).unwrap();
        let fit = solve_simplex_ls(&problem);
        assert!(fit.converged);
        assert!((fit.weights[2] - 1.0).abs() < 1e-8, "{:?}", fit.weights);
        assert!(fit.objective < 1e-14);
    }

    #[test]
    fn half_half_mixture_with_orthogonal_column() {
        let a = vec![1.0, 0.0, 1.0, 0.0];
        let b = vec![0.0, 1.0, 0.0, 1.0];
        let c = vec![1.0, 1.0, -1.0, -1.0];
        let target: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x + 0.5 * y).collect();
        let problem = SimplexLsProblem::new(target, vec![a, b, c]).unwrap();
        let fit = solve_simplex_ls(&problem);
        assert!((fit.weights[0] - 0.5).abs() < 1e-8);
        assert!((fit.weights[1] - 0.5).abs() < 1e-8);
        assert!(fit.weights[2].abs() < 1e-8);
        assert!(fit.objective < 1e-14);
        assert!(grid_minimum(&problem, 0.01) + 1e-12 >= fit.objective);
    }

    #[test]
    fn single_donor_is_trivial() {
        let problem = SimplexLsProblem::new(vec![1.0, 2.0], vec![vec![0.0, 0.0]]).unwrap();
        let fit = solve_simplex_ls(&problem);
        assert_eq!(fit.weights, vec![1.0]);
        assert!(fit.converged);
        assert!((fit.objective - 2.5).abs() < 1e-15);
    }

    #[test]
    fn non_convergence_is_flagged_and_feasible() {
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..8).map(|r| ((i * 7 + r * 3) % 11) as f64).collect())
            .collect();
        let target: Vec<f64> = (0..8).map(|r| (r * r % 5) as f64 + 0.3).collect();
        let problem = SimplexLsProblem::new(target, cols).unwrap().with_settings(SolverSettings {
            tolerance: 1e-10,
            max_iterations: 1,
        });
        let fit = solve_simplex_ls(&problem);
        assert!(!fit.converged);
        assert_feasible(&fit.weights);
    }

    #[test]
    fn rejects_malformed_problems() {
        assert!(SimplexLsProblem::new(vec![], vec![vec![]]).is_err());
        assert!(SimplexLsProblem::new(vec![1.0], vec![]).is_err());
        assert!(SimplexLsProblem::new(vec![1.0], vec![vec![1.0, 2.0]]).is_err());
        assert!(SimplexLsProblem::new(vec![f64::NAN], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn trace_is_monotone() {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..9).map(|r| ((i * 5 + r * 2) % 7) as f64 - 3.0).collect())
            .collect();
        let target: Vec<f64> = (0..9).map(|r| (r as f64).sin()).collect();
        let objective = LsObjective {
            target: &target,
            columns: &cols,
        };
        let out = minimize_on_simplices(&objective, &[0..5], SolverSettings::default(), true);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    }

    fn problem_strategy(max_donors: usize, max_rows: usize) -> impl Strategy<Value = SimplexLsProblem> {
        (1..=max_donors, 1..=max_rows).prop_flat_map(|(n, l)| {
            (
                prop::collection::vec(-5.0f64..5.0, l),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, l), n),
            )
                .prop_map(|(t, c)| SimplexLsProblem::new(t, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let p = project_to_simplex(&v).unwrap();
            assert_feasible(&p);
            let q = project_to_simplex(&p).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn converged_solutions_certify_optimality(problem in problem_strategy(8, 12)) {
            let fit = solve_simplex_ls(&problem);
            assert_feasible(&fit.weights);
            prop_assert!(fit.converged);
            let objective = LsObjective { target: problem.target(), columns: problem.columns() };
            let mut g = vec![0.0; problem.columns().len()];
            objective.value_grad(&fit.weights, &mut g);
            let gap = frank_wolfe_gap(&fit.weights, &g, &[0..g.len()]);
            prop_assert!(gap <= 10.0 * problem.settings.tolerance * fit.objective.max(1.0));
        }

        #[test]
        fn beats_the_grid(problem in problem_strategy(3, 12)) {
            let fit = solve_simplex_ls(&problem);
            prop_assert!(fit.objective <= grid_minimum(&problem, 0.01) + 1e-6);
        }

        #[test]
        fn duplicate_column_never_hurts(problem in problem_strategy(4, 10), which in 0usize..4) {
            let base = solve_simplex_ls(&problem);
            let mut cols = problem.columns().to_vec();
            let dup = cols[which % cols.len()].clone();
            cols.push(dup);
            let bigger = SimplexLsProblem::new(problem.target().to_vec(), cols).unwrap();
            let fit = solve_simplex_ls(&bigger);
            prop_assert!(fit.objective <= base.objective + 1e-9 * base.objective.max(1.0));
        }
    }

    #[test]
    fn reordering_donors_permutes_the_solution() {
        // Strongly convex instances (more rows than donors, generic data).
        for seed in 0..20u64 {
            let n = 4;
            let l = 12;
            let mut state = seed * 7919 + 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            };
            let cols: Vec<Vec<f64>> = (0..n).map(|_| (0..l).map(|_| next()).collect()).collect();
            let target: Vec<f64> = (0..l).map(|_| next()).collect();
            let fit = solve_simplex_ls(&SimplexLsProblem::new(target.clone(), cols.clone()).unwrap());
            let order = [2usize, 0, 3, 1];
            let permuted: Vec<Vec<f64>> = order.iter().map(|&i| cols[i].clone()).collect();
            let pfit = solve_simplex_ls(&SimplexLsProblem::new(target, permuted).unwrap());
            for (pos, &i) in order.iter().enumerate() {
                assert!(
                    (pfit.weights[pos] - fit.weights[i]).abs() < 1e-8,
                    "seed {seed}: {:?} vs {:?}",
                    pfit.weights,
                    fit.weights
                );
            }
        }
    }
}
