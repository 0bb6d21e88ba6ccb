//! Discrete Lax-Oleinik value iteration for `H(x, c + Du) = α(c)`.
//!
//! One step of the backward semigroup is the semi-Lagrangian min-plus update
//!
//! ```text
//! (Tu)(x) = min_{y ∈ window(x)} [ I[u](y) + τ·L_c(x, (x - y)/τ) ]
//! ```
//!
//! where `I[u]` is the piecewise-linear interpolant of the grid values (on
//! intervals in 1D, on both diagonal triangulations of each cell in 2D) and the
//! window is the box of `radius` cells around `x`. For the mechanical family the
//! minimisation over each simplex is solved exactly: the objective is an
//! isotropic quadratic in `y`, so its minimiser is the Euclidean projection of
//! the free minimiser onto the simplex. The operator is monotone, commutes with
//! constants and is deterministic (ties resolved by scan order).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::model::{norm, LagrangianModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Time step; `None` means `h / 4`.
    pub tau: Option<f64>,
    /// Stop when the spread of one normalised step falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Window radius in cells, which must satisfy `R·h ≥ τ·V_max`; `None` picks
    /// the smallest radius with `R·h ≥ 1.5·τ·V_max`.
    pub radius: Option<usize>,
    /// Trailing window of shifts averaged into the α estimate.
    pub alpha_window: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tau: None,
            tol: 1e-10,
            max_iter: 400_000,
            radius: None,
            alpha_window: 50,
        }
    }
}

impl SolverSettings {
    pub fn tau_for(&self, grid: &TorusGrid) -> f64 {
        self.tau.unwrap_or(grid.h() / 4.0)
    }
}

/// One-step backward Lax-Oleinik operator for a fixed model, cohomology class and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaxOleinik {
    grid: TorusGrid,
    tau: f64,
    radius: i64,
    /// `c + b`: the linear coefficient of `L_c` in `v`.
    c_eff: [f64; 2],
    /// `τ·(½|b|² + W(x))` per node.
    rest_cost: Vec<f64>,
    v_max: f64,
}

impl LaxOleinik {
    pub fn new(
        model: &LagrangianModel,
        c: &[f64],
        grid: TorusGrid,
        tau: f64,
        radius: Option<usize>,
    ) -> Result<Self> {
        let dim = grid.dim();
        if model.dim() != dim || c.len() != dim {
            return Err(Error::InvalidInput(format!(
                "model dimension {}, cohomology {:?} and grid dimension {dim} disagree",
                model.dim(),
                c
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {tau}")));
        }
        let mut c_eff = [0.0; 2];
        for k in 0..dim {
            c_eff[k] = c[k] + model.drift[k];
        }
        let max_w = model.potential.sup_bound();
        let v_max = (norm(&c_eff[..dim]).powi(2) + 2.0 * max_w).sqrt();
        let h = grid.h();
        let needed = tau * v_max / h;
        let radius = match radius {
            Some(r) => {
                if (r as f64) < needed || r == 0 {
                    return Err(Error::Config(format!(
                        "stencil radius {r} too small: need R·h ≥ τ·V_max, i.e. R ≥ {needed:.3}"
                    )));
                }
                r as i64
            }
            // default keeps a 50% margin so minimisers stay interior
            None => ((1.5 * needed).ceil() as i64).max(1),
        };
        if 2 * radius as usize >= grid.n() {
            return Err(Error::Config(format!(
                "stencil radius {radius} exceeds half the grid; reduce τ"
            )));
        }
        let drift_sq: f64 = model.drift.iter().map(|b| b * b).sum();
        let rest_cost = (0..grid.len())
            .map(|i| tau * (0.5 * drift_sq + model.potential.value(&grid.coords(i))))
            .collect();
        Ok(Self {
            grid,
            tau,
            radius,
            c_eff,
            rest_cost,
            v_max,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn radius(&self) -> usize {
        self.radius as usize
    }

    /// Bound on minimising speeds at the fixed point.
    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// `(Tu)(x)` for every node.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.node_value(u, i))
            .collect()
    }

    pub fn apply_field(&self, u: &ScalarField) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.apply(&u.values),
        }
    }

    fn node_value(&self, u: &[f64], i: usize) -> f64 {
        let best = if self.grid.dim() == 1 {
            self.node_min_1d(u, i)
        } else {
            self.node_min_2d(u, i)
        };
        best + self.rest_cost[i]
    }

    fn node_min_1d(&self, u: &[f64], i: usize) -> f64 {
        let h = self.grid.h();
        let tau = self.tau;
        let c = self.c_eff[0];
        let mut best = f64::INFINITY;
        for k in -self.radius..self.radius {
            let a = u[self.grid.shift(i, [k, 0])];
            let b = u[self.grid.shift(i, [k + 1, 0])];
            let s = (b - a) / h;
            let lo = k as f64 * h;
            let y = (-tau * (s + c)).clamp(lo, lo + h);
            let val = a + s * (y - lo) + y * y / (2.0 * tau) + c * y;
            if val < best {
                best = val;
            }
        }
        best
    }

    fn node_min_2d(&self, u: &[f64], i: usize) -> f64 {
        let h = self.grid.h();
        let tau = self.tau;
        let c = self.c_eff;
        let star_shift = [-tau * c[0], -tau * c[1]];
        let mut best = f64::INFINITY;
        for k2 in -self.radius..self.radius {
            for k1 in -self.radius..self.radius {
                let u00 = u[self.grid.shift(i, [k1, k2])];
                let u10 = u[self.grid.shift(i, [k1 + 1, k2])];
                let u01 = u[self.grid.shift(i, [k1, k2 + 1])];
                let u11 = u[self.grid.shift(i, [k1 + 1, k2 + 1])];
                let x0 = k1 as f64 * h;
                let y0 = k2 as f64 * h;
                let p00 = [x0, y0];
                let p10 = [x0 + h, y0];
                let p01 = [x0, y0 + h];
                let p11 = [x0 + h, y0 + h];
                // (base point, base value, gradient, vertices)
                let tris = [
                    (p00, u00, [(u10 - u00) / h, (u11 - u10) / h], [p00, p10, p11]),
                    (p00, u00, [(u11 - u01) / h, (u01 - u00) / h], [p00, p01, p11]),
                    (p00, u00, [(u10 - u00) / h, (u01 - u00) / h], [p00, p10, p01]),
                    (p10, u10, [(u11 - u01) / h, (u11 - u10) / h], [p10, p11, p01]),
                ];
                for (base, val, g, v) in tris {
                    let target = [star_shift[0] - tau * g[0], star_shift[1] - tau * g[1]];
                    let y = closest_point_triangle(target, v[0], v[1], v[2]);
                    let interp = val + g[0] * (y[0] - base[0]) + g[1] * (y[1] - base[1]);
                    let f = interp
                        + (y[0] * y[0] + y[1] * y[1]) / (2.0 * tau)
                        + c[0] * y[0]
                        + c[1] * y[1];
                    if f < best {
                        best = f;
                    }
                }
            }
        }
        best
    }
}

/// Closest point of the triangle `abc` to `p`.
pub(crate) fn closest_point_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let sub = |u: [f64; 2], v: [f64; 2]| [u[0] - v[0], u[1] - v[1]];
    let dot = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1];
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return [a[0] + t * ab[0], a[1] + t * ab[1]];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return [a[0] + t * ac[0], a[1] + t * ac[1]];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [b[0] + t * (c[0] - b[0]), b[1] + t * (c[1] - b[1])];
    }
    // inside the triangle
    p
}

/// Converged weak KAM solution with its α estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakKamSolution {
    pub u: ScalarField,
    pub alpha: f64,
    pub c: Vec<f64>,
    pub direction: Direction,
    pub residual: f64,
    pub iterations: usize,
    pub tau: f64,
}

/// Result of a normalised value iteration, before orientation.
struct Iterated {
    u: Vec<f64>,
    alpha: f64,
    residual: f64,
    iterations: usize,
}

fn iterate_normalised(op: &LaxOleinik, mut u: Vec<f64>, settings: &SolverSettings) -> Result<Iterated> {
    let tau = op.tau();
    let mut shifts: Vec<f64> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    for it in 1..=settings.max_iter {
        let tu = op.apply(&u);
        // sequential reductions keep the result independent of thread count
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in tu.iter().zip(&u) {
            let d = a - b;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let shift = -lo;
        let residual = hi - lo;
        for (dst, t) in u.iter_mut().zip(&tu) {
            *dst = t + shift;
        }
        shifts.push(shift);
        last = residual;
        if it % 100 == 0 || residual < settings.tol {
            history.push(residual);
        }
        if residual < settings.tol {
            let k = settings.alpha_window.max(1).min(shifts.len());
            let alpha = shifts[shifts.len() - k..].iter().sum::<f64>() / (k as f64 * tau);
            return Ok(Iterated {
                u,
                alpha,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iter,
        residual: last,
        history,
    })
}

fn normalise_min_zero(values: &mut [f64]) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    for v in values.iter_mut() {
        *v -= m;
    }
}

/// Operator for the requested direction: forward solutions are backward
/// solutions of the reversed Lagrangian at cohomology `-c`, negated.
pub fn operator_for(
    model: &LagrangianModel,
    c: &[f64],
    grid: TorusGrid,
    direction: Direction,
    settings: &SolverSettings,
) -> Result<LaxOleinik> {
    let tau = settings.tau_for(&grid);
    match direction {
        Direction::Backward => LaxOleinik::new(model, c, grid, tau, settings.radius),
        Direction::Forward => {
            let neg_c: Vec<f64> = c.iter().map(|x| -x).collect();
            LaxOleinik::new(&model.reversed(), &neg_c, grid, tau, settings.radius)
        }
    }
}

/// Solves for `u⁻` (backward) or `u⁺` (forward) starting from the zero field.
///
/// Backward solutions are normalised to `min u⁻ = 0`, forward ones to `max u⁺ = 0`.
pub fn solve(
    model: &LagrangianModel,
    c: &[f64],
    grid: TorusGrid,
    direction: Direction,
    settings: &SolverSettings,
) -> Result<WeakKamSolution> {
    if !(settings.tol > 0.0) {
        return Err(Error::Config("solver tolerance must be positive".into()));
    }
    let op = operator_for(model, c, grid, direction, settings)?;
    let it = iterate_normalised(&op, vec![0.0; grid.len()], settings)?;
    let mut values = it.u;
    normalise_min_zero(&mut values);
    if direction == Direction::Forward {
        for v in values.iter_mut() {
            *v = -*v;
        }
    }
    Ok(WeakKamSolution {
        u: ScalarField { grid, values },
        alpha: it.alpha,
        c: c.to_vec(),
        direction,
        residual: it.residual,
        iterations: it.iterations,
        tau: op.tau(),
    })
}

/// Forward solution conjugate to a given backward solution: the limit of the
/// forward semigroup started from `u⁻`, shifted so that `min(u⁻ - u⁺) = 0`.
pub fn conjugate_forward(
    model: &LagrangianModel,
    u_minus: &WeakKamSolution,
    settings: &SolverSettings,
) -> Result<WeakKamSolution> {
    let grid = u_minus.u.grid;
    let op = operator_for(model, &u_minus.c, grid, Direction::Forward, settings)?;
    let start: Vec<f64> = u_minus.u.values.iter().map(|v| -v).collect();
    let it = iterate_normalised(&op, start, settings)?;
    let mut values: Vec<f64> = it.u.iter().map(|v| -v).collect();
    let k = u_minus
        .u
        .values
        .iter()
        .zip(&values)
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    for v in values.iter_mut() {
        *v += k;
    }
    Ok(WeakKamSolution {
        u: ScalarField { grid, values },
        alpha: it.alpha,
        c: u_minus.c.clone(),
        direction: Direction::Forward,
        residual: it.residual,
        iterations: it.iterations,
        tau: op.tau(),
    })
}

/// Converged point-source iterate `h_c(y, ·)`.
#[derive(Debug, Clone)]
pub struct PointSource {
    pub field: ScalarField,
    pub source: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Large finite value used for unreached nodes of a point-source field.
pub fn sentinel(op: &LaxOleinik) -> f64 {
    let lip = op.v_max() + norm(&op.c_eff[..op.grid.dim()]);
    10.0 * (std::f64::consts::TAU * lip * (op.grid.dim() as f64).sqrt() + 1.0)
}

/// Peierls barrier row `h_c(y, ·)` as the long-time limit of `û ← Tû + α·τ`
/// from the point source at `y`.
pub fn point_source_solution(
    model: &LagrangianModel,
    c: &[f64],
    source: usize,
    grid: TorusGrid,
    alpha: f64,
    settings: &SolverSettings,
) -> Result<PointSource> {
    let op = operator_for(model, c, grid, Direction::Backward, settings)?;
    point_source_with(&op, source, alpha, settings)
}

pub fn point_source_with(
    op: &LaxOleinik,
    source: usize,
    alpha: f64,
    settings: &SolverSettings,
) -> Result<PointSource> {
    let grid = op.grid();
    if source >= grid.len() {
        return Err(Error::InvalidInput(format!("source node {source} outside grid")));
    }
    let big = sentinel(op);
    let mut u = vec![big; grid.len()];
    u[source] = 0.0;
    let shift = alpha * op.tau();
    let mut residual = f64::INFINITY;
    for it in 1..=settings.max_iter {
        let tu = op.apply(&u);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut reached = true;
        let mut min_val = f64::INFINITY;
        for (dst, t) in u.iter_mut().zip(&tu) {
            let next = t + shift;
            let d = next - *dst;
            lo = lo.min(d);
            hi = hi.max(d);
            *dst = next;
            reached &= next < 0.5 * big;
            min_val = min_val.min(next);
        }
        if min_val < -big {
            return Err(Error::Divergence {
                iterations: it,
                min_value: min_val,
            });
        }
        residual = hi - lo;
        if reached && residual < settings.tol {
            return Ok(PointSource {
                field: ScalarField { grid, values: u },
                source,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iter,
        residual,
        history: vec![residual],
    })
}

/// Largest violation of the discrete domination inequality
/// `u(x) - u(y) ≤ t·L_c(mid, (x - y)/t) + α·t` over stencil neighbours `y`
/// within `radius` cells and times `t = j·τ`, `j = 1..=steps`.
pub fn domination_violation(
    model: &LagrangianModel,
    sol: &WeakKamSolution,
    radius: i64,
    steps: usize,
) -> f64 {
    // a forward solution u⁺ is dominated as -u⁺ for the reversed problem at -c
    let (lag_model, c, values): (LagrangianModel, Vec<f64>, Vec<f64>) = match sol.direction {
        Direction::Backward => (model.clone(), sol.c.clone(), sol.u.values.clone()),
        Direction::Forward => (
            model.reversed(),
            sol.c.iter().map(|a| -a).collect(),
            sol.u.values.iter().map(|a| -a).collect(),
        ),
    };
    let grid = sol.u.grid;
    let h = grid.h();
    let dim = grid.dim();
    let offsets = grid.box_offsets(radius, true);
    let mut worst = f64::NEG_INFINITY;
    for x in 0..grid.len() {
        let xc = grid.coords(x);
        for off in &offsets {
            let y = grid.shift(x, *off);
            // displacement from y to x
            let disp: Vec<f64> = (0..dim).map(|k| -(off[k] as f64) * h).collect();
            let mid: Vec<f64> = (0..dim).map(|k| xc[k] - 0.5 * disp[k]).collect();
            for j in 1..=steps {
                let t = j as f64 * sol.tau;
                let v: Vec<f64> = disp.iter().map(|d| d / t).collect();
                let lag = lag_model.lagrangian_c(&c, &mid, &v);
                worst = worst.max(values[x] - values[y] - (t * lag + sol.alpha * t));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TWO_PI;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn closest_point_cases() {
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        let c = [0.0, 1.0];
        assert_eq!(closest_point_triangle([0.2, 0.2], a, b, c), [0.2, 0.2]);
        assert_eq!(closest_point_triangle([-1.0, -1.0], a, b, c), a);
        assert_eq!(closest_point_triangle([2.0, -0.5], a, b, c), b);
        let p = closest_point_triangle([1.0, 1.0], a, b, c);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let q = closest_point_triangle([0.5, -3.0], a, b, c);
        assert_eq!(q, [0.5, 0.0]);
    }

    #[test]
    fn free_rest_action_is_zero() {
        let g = TorusGrid::new(1, 32).unwrap();
        let m = LagrangianModel::free(1);
        let op = LaxOleinik::new(&m, &[0.0], g, g.h() / 4.0, None).unwrap();
        let tu = op.apply(&vec![0.0; 32]);
        assert!(tu.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_does_not_exceed_staying_put() {
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::free(1);
        let op = LaxOleinik::new(&m, &[0.0], g, g.h() / 4.0, None).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0].cos());
        let tu = op.apply_field(&u);
        for (a, b) in tu.values.iter().zip(&u.values) {
            assert!(a <= b);
        }
    }

    #[test]
    fn radius_too_small_is_a_config_error() {
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::pendulum(1);
        // V_max = 2 here, so τ = 4h needs R ≥ 8
        let err = LaxOleinik::new(&m, &[0.0], g, 4.0 * g.h(), Some(7)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(LaxOleinik::new(&m, &[0.0], g, 4.0 * g.h(), Some(8)).is_ok());
        let err = LaxOleinik::new(&m, &[0.0], g, g.h(), Some(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(LaxOleinik::new(&m, &[0.0], g, -1.0, None).is_err());
    }

    #[test]
    fn point_source_reachability() {
        // with τ = 2h and speeds ≤ 3 the window is R = ceil(1.5·2·2) = 6 cells
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::pendulum(1);
        let op = LaxOleinik::new(&m, &[0.0], g, 2.0 * g.h(), None).unwrap();
        let r = op.radius();
        let big = sentinel(&op);
        let mut u = vec![big; 64];
        u[10] = 0.0;
        for k in 1..=3usize {
            u = op.apply(&u);
            for (i, &v) in u.iter().enumerate() {
                let d = g.cell_distance(i, 10);
                if d <= k * r {
                    assert!(v < 0.5 * big, "node {i} at distance {d} should be reached after {k} steps");
                } else {
                    assert!(v >= 0.5 * big, "node {i} at distance {d} reached too early");
                }
            }
        }
    }

    #[test]
    fn free_model_alpha() {
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::free(1);
        let s = solve(&m, &[0.0], g, Direction::Backward, &settings()).unwrap();
        assert!(s.alpha.abs() < 1e-12);
        assert!(s.u.max() < 1e-12);
        let s = solve(&m, &[1.0], g, Direction::Backward, &settings()).unwrap();
        assert!((s.alpha - 0.5).abs() < 1e-12);
        assert!(s.u.max() - s.u.min() < 1e-12);
        let g2 = TorusGrid::new(2, 16).unwrap();
        let s = solve(&LagrangianModel::free(2), &[1.0, 0.0], g2, Direction::Backward, &settings()).unwrap();
        assert!((s.alpha - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_solution_negates_reversed_backward() {
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::pendulum(1);
        let back = solve(&m, &[0.0], g, Direction::Backward, &settings()).unwrap();
        let fwd = solve(&m, &[0.0], g, Direction::Forward, &settings()).unwrap();
        for (a, b) in back.u.values.iter().zip(&fwd.u.values) {
            assert_eq!(*a, -*b);
        }
        assert_eq!(fwd.direction, Direction::Forward);
        assert!(fwd.u.max() == 0.0);
    }

    #[test]
    fn pendulum_matches_closed_form_coarse() {
        let g = TorusGrid::new(1, 128).unwrap();
        let m = LagrangianModel::pendulum(1);
        let s = solve(&m, &[0.0], g, Direction::Backward, &settings()).unwrap();
        assert!(s.alpha.abs() < 5e-3);
        let exact = ScalarField::from_fn(g, |x| {
            let d = crate::model::periodic_delta(x[0], 0.0);
            8.0 * (d / 4.0).sin().powi(2)
        });
        let err = s.u.sup_distance(&exact);
        assert!(err < 0.2, "sup error {err}");
        let _ = TWO_PI;
    }

    #[test]
    fn domination_holds_up_to_discretisation() {
        let g = TorusGrid::new(1, 128).unwrap();
        let m = LagrangianModel::pendulum(1);
        let s = solve(&m, &[0.0], g, Direction::Backward, &settings()).unwrap();
        let viol = domination_violation(&m, &s, 3, 12);
        assert!(viol <= 2.0 * (g.h() + s.tau), "violation {viol}");
        let f = solve(&m, &[0.0], g, Direction::Forward, &settings()).unwrap();
        let viol = domination_violation(&m, &f, 3, 12);
        assert!(viol <= 2.0 * (g.h() + f.tau), "violation {viol}");
    }

    #[test]
    fn non_convergence_reports_history() {
        let g = TorusGrid::new(1, 64).unwrap();
        let m = LagrangianModel::pendulum(1);
        let s = SolverSettings {
            max_iter: 10,
            ..settings()
        };
        match solve(&m, &[0.0], g, Direction::Backward, &s) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 10),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn op2() -> LaxOleinik {
            let g = TorusGrid::new(2, 8).unwrap();
            LaxOleinik::new(&LagrangianModel::double_well_pendulum(), &[0.3, -0.2], g, 0.2, None).unwrap()
        }

        proptest! {
            #[test]
            fn monotone_and_constant_commuting(
                base in proptest::collection::vec(-3.0f64..3.0, 64),
                bump in proptest::collection::vec(0.0f64..1.0, 64),
                a in -5.0f64..5.0,
            ) {
                let op = op2();
                let w: Vec<f64> = base.iter().zip(&bump).map(|(x, y)| x + y).collect();
                let tu = op.apply(&base);
                let tw = op.apply(&w);
                for (x, y) in tu.iter().zip(&tw) {
                    prop_assert!(x <= &(y + 1e-12));
                }
                let shifted: Vec<f64> = base.iter().map(|x| x + a).collect();
                let ts = op.apply(&shifted);
                for (x, y) in tu.iter().zip(&ts) {
                    prop_assert!((x + a - y).abs() < 1e-12);
                }
            }

            #[test]
            fn monotone_1d(base in proptest::collection::vec(-3.0f64..3.0, 16),
                           bump in proptest::collection::vec(0.0f64..1.0, 16)) {
                let g = TorusGrid::new(1, 16).unwrap();
                let op = LaxOleinik::new(&LagrangianModel::pendulum(1), &[0.4], g, 0.1, None).unwrap();
                let w: Vec<f64> = base.iter().zip(&bump).map(|(x, y)| x + y).collect();
                let tu = op.apply(&base);
                let tw = op.apply(&w);
                for (x, y) in tu.iter().zip(&tw) {
                    prop_assert!(x <= &(y + 1e-12));
                }
            }
        }
    }
}
