//! Matching of limiting differentials, Hamiltonian orbit tracing, calibration
//! checks and orbits connecting two Aubry classes.

use serde::{Deserialize, Serialize};

use crate::barrier::{elementary_solutions, hetero_barrier, AubryAnalysis, AubrySet, BarrierField, ConjugatePair};
use crate::critical::{default_gtol, find_critical_points, CriticalPoint};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::{hamiltonian_vector_field, norm, wrap_coord, HamiltonianModel, LagrangianModel};
use crate::semiconcave::{
    delta_smooth, lasry_lions, DiffHull, limiting_differentials, semiconcavity_constant, subdifferential, superdifferential,
};

/// Phase-space point with full momentum `p = c + Du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    /// Builds a point, checking `|H(x, p) - α| ≤ ε_E`.
    pub fn on_shell(model: &LagrangianModel, x: &[f64], p: &[f64], alpha: f64, eps_e: f64) -> Result<Self> {
        let gap = (model.hamiltonian().h(x, p) - alpha).abs();
        if gap > eps_e {
            return Err(Error::InvalidInput(format!(
                "phase point off the energy shell: |H - α| = {gap:e} > {eps_e:e}"
            )));
        }
        Ok(Self {
            x: x.iter().map(|&v| wrap_coord(v)).collect(),
            p: p.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSettings {
    pub t_max: f64,
    pub dt: f64,
    pub eps_e: f64,
    pub eps_match: f64,
    /// Endpoint distance to the Aubry set; `None` means three grid cells.
    pub eps_limit: Option<f64>,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            t_max: 20.0,
            dt: 1e-3,
            eps_e: 0.05,
            eps_match: 0.05,
            eps_limit: None,
        }
    }
}

impl TraceSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_max", self.t_max),
            ("dt", self.dt),
            ("eps_e", self.eps_e),
            ("eps_match", self.eps_match),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dt > self.t_max {
            return Err(Error::Config("dt exceeds the tracing horizon".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResult {
    pub node: usize,
    /// Smallest `|p⁻ - p⁺|` over limiting differentials of `v⁻` and `v⁺`.
    pub gap: f64,
    /// Distinct matched momenta projected to the shell, in preference order.
    pub candidates: Vec<PhasePoint>,
}

/// Radial rescaling of `p` onto `H(x, ·) = α`; `p` itself when no positive root exists.
fn project_to_shell(ham: &HamiltonianModel, x: &[f64], p: &[f64], alpha: f64) -> Vec<f64> {
    let a = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    if a == 0.0 {
        return p.to_vec();
    }
    let b = ham.h(x, p) - a + ham.potential.value(x);
    let c = -(ham.potential.value(x) + alpha);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return p.to_vec();
    }
    let s = (-b + disc.sqrt()) / (2.0 * a);
    if s <= 0.0 {
        return p.to_vec();
    }
    p.iter().map(|v| s * v).collect()
}

/// Limiting differentials from a lifted hull. A hull narrower than `smooth`
/// stands for a single gradient, taken as its centroid.
fn shell_differentials(
    hull: &DiffHull,
    smooth: f64,
    model: &LagrangianModel,
    x: &[f64],
    alpha: f64,
    eps_e: f64,
) -> Result<Vec<Vec<f64>>> {
    if hull.diameter() >= smooth {
        return limiting_differentials(hull, model, x, alpha, eps_e);
    }
    let k = hull.vertices.len() as f64;
    let centroid: Vec<f64> = (0..hull.dim)
        .map(|i| hull.vertices.iter().map(|v| v[i]).sum::<f64>() / k)
        .collect();
    let gap = (model.hamiltonian().h(x, &centroid) - alpha).abs();
    if gap > eps_e {
        return Err(Error::NoShellVertex { node: hull.node, closest: gap });
    }
    Ok(vec![centroid])
}

/// Limiting differentials of `v⁻ = u⁻ + ⟨c, x⟩` and `v⁺ = u⁺ + ⟨c, x⟩` at `x`, matched pairwise.
pub fn match_differentials(
    pair: &ConjugatePair,
    node: usize,
    model: &LagrangianModel,
    settings: &TraceSettings,
) -> Result<MatchResult> {
    let grid = pair.u_minus.grid;
    let x = grid.coords(node);
    let c_minus = semiconcavity_constant(&pair.u_minus);
    let c_plus = semiconcavity_constant(&pair.u_plus.map(|v| -v));
    let hull_minus = superdifferential(&pair.u_minus, node, &[1], c_minus)?.lifted(&pair.c);
    let hull_plus = subdifferential(&pair.u_plus, node, &[1], c_plus)?.lifted(&pair.c);
    let h = grid.h();
    let dm = shell_differentials(&hull_minus, delta_smooth(c_minus, h), model, &x, pair.alpha, settings.eps_e)?;
    let dp = shell_differentials(&hull_plus, delta_smooth(c_plus, h), model, &x, pair.alpha, settings.eps_e)?;
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    for a in &dm {
        for b in &dp {
            let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
            let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            pairs.push((norm(&d), mid));
        }
    }
    let gap = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if gap > settings.eps_match {
        return Err(Error::UnresolvedMatch {
            node,
            gap,
            eps: settings.eps_match,
        });
    }
    let ham = model.hamiltonian();
    let mut mids: Vec<Vec<f64>> = pairs
        .into_iter()
        .filter(|p| p.0 <= settings.eps_match)
        .map(|p| project_to_shell(&ham, &x, &p.1, pair.alpha))
        .collect();
    // descending lexicographic order, then merge near-duplicates
    mids.sort_by(|a, b| {
        b.iter()
            .zip(a)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut candidates: Vec<PhasePoint> = Vec::new();
    for m in mids {
        let dup = candidates.iter().any(|c| {
            let d: Vec<f64> = c.p.iter().zip(&m).map(|(u, v)| u - v).collect();
            norm(&d) <= settings.eps_match
        });
        if !dup {
            candidates.push(PhasePoint {
                x: x.clone(),
                p: m,
            });
        }
    }
    Ok(MatchResult {
        node,
        gap,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Homoclinic,
    Connecting,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    /// Position on the covering space (not wrapped).
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub energy: f64,
    pub aubry_dist: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitTrace {
    /// Samples with strictly increasing `t` over `[-T, T]`.
    pub samples: Vec<OrbitSample>,
    /// Index of the `t = 0` sample.
    pub origin: usize,
    /// `max |H(t) - α|` along the trace.
    pub energy_drift: f64,
    /// `max |H(t) - H(0)|`, the integrator's own conservation error.
    pub conservation_error: f64,
    pub calib_residual_back: Option<f64>,
    pub calib_residual_fwd: Option<f64>,
    /// Aubry classes nearest to the backward and forward endpoints.
    pub limit_classes: (usize, usize),
    pub endpoint_dist: (f64, f64),
    pub eps_limit: f64,
    pub verdict: Verdict,
    pub alpha: f64,
}

impl OrbitTrace {
    /// A trace without samples, used when no start could be resolved.
    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            origin: 0,
            energy_drift: 0.0,
            conservation_error: 0.0,
            calib_residual_back: None,
            calib_residual_fwd: None,
            limit_classes: (0, 0),
            endpoint_dist: (f64::NAN, f64::NAN),
            eps_limit: 0.0,
            verdict: Verdict::Inconclusive,
            alpha: 0.0,
        }
    }
}

fn rk4_step(ham: &HamiltonianModel, x: &[f64], p: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + s * v).collect() };
    let (k1x, k1p) = hamiltonian_vector_field(ham, x, p);
    let (k2x, k2p) = hamiltonian_vector_field(ham, &add(x, &k1x, dt / 2.0), &add(p, &k1p, dt / 2.0));
    let (k3x, k3p) = hamiltonian_vector_field(ham, &add(x, &k2x, dt / 2.0), &add(p, &k2p, dt / 2.0));
    let (k4x, k4p) = hamiltonian_vector_field(ham, &add(x, &k3x, dt), &add(p, &k3p, dt));
    let comb = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|i| y[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    (comb(x, &k1x, &k2x, &k3x, &k4x), comb(p, &k1p, &k2p, &k3p, &k4p))
}

/// Integrates `steps` RK4 steps of size `dt` (negative for backward time).
fn integrate(
    ham: &HamiltonianModel,
    start: &PhasePoint,
    dt: f64,
    steps: usize,
    jump_limit: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = start.x.clone();
    let mut p = start.p.clone();
    let mut e = ham.h(&x, &p);
    out.push((x.clone(), p.clone()));
    for k in 1..=steps {
        let (nx, np) = rk4_step(ham, &x, &p, dt);
        let ne = ham.h(&nx, &np);
        if (ne - e).abs() > jump_limit || !ne.is_finite() {
            return Err(Error::StepRejected {
                t: k as f64 * dt,
                jump: (ne - e).abs(),
                limit: jump_limit,
            });
        }
        x = nx;
        p = np;
        e = ne;
        out.push((x.clone(), p.clone()));
    }
    Ok(out)
}

/// Traces the Hamiltonian orbit through `start` over `[-T, T]` with fixed-step RK4.
pub fn trace(
    model: &LagrangianModel,
    alpha: f64,
    start: &PhasePoint,
    aubry: &AubrySet,
    settings: &TraceSettings,
) -> Result<OrbitTrace> {
    settings.validate()?;
    let ham = model.hamiltonian();
    let steps = (settings.t_max / settings.dt).round() as usize;
    let jump_limit = 10.0 * settings.eps_e / steps as f64;
    let fwd = integrate(&ham, start, settings.dt, steps, jump_limit)?;
    let back = integrate(&ham, start, -settings.dt, steps, jump_limit)?;
    let e0 = ham.h(&start.x, &start.p);
    let mut samples = Vec::with_capacity(2 * steps + 1);
    for (k, (x, p)) in back.iter().enumerate().skip(1).rev() {
        samples.push((-(k as f64) * settings.dt, x, p));
    }
    for (k, (x, p)) in fwd.iter().enumerate() {
        samples.push((k as f64 * settings.dt, x, p));
    }
    let samples: Vec<OrbitSample> = samples
        .into_iter()
        .map(|(t, x, p)| {
            let wrapped: Vec<f64> = x.iter().map(|&v| wrap_coord(v)).collect();
            OrbitSample {
                t,
                energy: ham.h(x, p),
                aubry_dist: aubry.nearest(&wrapped).0,
                x: x.clone(),
                p: p.clone(),
            }
        })
        .collect();
    let energy_drift = samples.iter().map(|s| (s.energy - alpha).abs()).fold(0.0, f64::max);
    let conservation_error = samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max);
    let eps_limit = settings.eps_limit.unwrap_or(3.0 * aubry.grid.h());
    let first = &samples[0];
    let last = &samples[samples.len() - 1];
    let wrap = |x: &[f64]| -> Vec<f64> { x.iter().map(|&v| wrap_coord(v)).collect() };
    let (db, cb) = aubry.nearest(&wrap(&first.x));
    let (df, cf) = aubry.nearest(&wrap(&last.x));
    let (vx, vp) = hamiltonian_vector_field(&ham, &start.x, &start.p);
    let stationary = norm(&vx) < 1e-12 && norm(&vp) < 1e-12;
    let verdict = if stationary || db > eps_limit || df > eps_limit {
        Verdict::Inconclusive
    } else if cb == cf {
        Verdict::Homoclinic
    } else {
        Verdict::Connecting
    };
    Ok(OrbitTrace {
        origin: steps,
        samples,
        energy_drift,
        conservation_error,
        calib_residual_back: None,
        calib_residual_fwd: None,
        limit_classes: (cb, cf),
        endpoint_dist: (db, df),
        eps_limit,
        verdict,
        alpha,
    })
}

/// Orders candidates so that those whose first ten forward steps approach the Aubry set come first.
pub fn prefer_approaching(
    model: &LagrangianModel,
    candidates: &[PhasePoint],
    aubry: &AubrySet,
    dt: f64,
) -> Vec<PhasePoint> {
    let ham = model.hamiltonian();
    let approaches = |c: &PhasePoint| {
        let mut x = c.x.clone();
        let mut p = c.p.clone();
        let d0 = aubry.nearest(&x).0;
        for _ in 0..10 {
            let (nx, np) = rk4_step(&ham, &x, &p, dt);
            x = nx.iter().map(|&v| wrap_coord(v)).collect();
            p = np;
        }
        aubry.nearest(&x).0 < d0
    };
    let (mut yes, no): (Vec<PhasePoint>, Vec<PhasePoint>) =
        candidates.iter().cloned().partition(|c| approaches(c));
    yes.extend(no);
    yes
}

/// Calibration defect of a trace per unit time: backward half against `u⁻`,
/// forward half against `u⁺`, over unit windows and the whole half.
pub fn verify_calibration(
    trace: &OrbitTrace,
    u_minus: &ScalarField,
    u_plus: &ScalarField,
    model: &LagrangianModel,
    c: &[f64],
    alpha: f64,
) -> (f64, f64) {
    let ham = model.hamiltonian();
    let running: Vec<f64> = trace
        .samples
        .iter()
        .map(|s| {
            let v = ham.dh_dp(&s.x, &s.p);
            model.lagrangian_c(c, &s.x, &v) + alpha
        })
        .collect();
    // cumulative trapezoid integral
    let mut cum = vec![0.0; trace.samples.len()];
    for k in 1..trace.samples.len() {
        let dt = trace.samples[k].t - trace.samples[k - 1].t;
        cum[k] = cum[k - 1] + 0.5 * dt * (running[k] + running[k - 1]);
    }
    let defect = |field: &ScalarField, lo: usize, hi: usize| -> f64 {
        let t = |k: usize| trace.samples[k].t;
        let window = |a: usize, b: usize| {
            let du = field.interpolate(&trace.samples[b].x) - field.interpolate(&trace.samples[a].x);
            (du - (cum[b] - cum[a])).abs() / (t(b) - t(a))
        };
        let span = t(hi) - t(lo);
        let per_unit = ((hi - lo) as f64 / span).round().max(1.0) as usize;
        let mut worst = window(lo, hi);
        let mut a = lo;
        while a + per_unit <= hi {
            worst = worst.max(window(a, a + per_unit));
            a += per_unit;
        }
        worst
    };
    let last = trace.samples.len() - 1;
    (
        defect(u_minus, 0, trace.origin),
        defect(u_plus, trace.origin, last),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectResult {
    pub from_class: usize,
    pub to_class: usize,
    pub barrier: BarrierField,
    pub point: CriticalPoint,
    pub matched: MatchResult,
    pub trace: OrbitTrace,
}

/// Searches for an orbit from Aubry class `from` to class `to` through a
/// critical point of `B_{from,to} = u⁻_from - u⁺_to`.
pub fn connect_classes(
    model: &LagrangianModel,
    analysis: &mut AubryAnalysis,
    from: usize,
    to: usize,
    lambda: f64,
    u_radius: usize,
    settings: &TraceSettings,
) -> Result<ConnectResult> {
    let n_classes = analysis.set.classes.len();
    if n_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "connecting orbits need at least two Aubry classes, found {n_classes}"
        )));
    }
    if from == to {
        return Err(Error::InvalidInput("connect_classes needs two distinct classes".into()));
    }
    let (u1_minus, _) = elementary_solutions(analysis, from)?;
    let (_, u2_plus) = elementary_solutions(analysis, to)?;
    let barrier = hetero_barrier(&u1_minus, &u2_plus, from, to)?;
    let b = &barrier.b;
    let c_sc = semiconcavity_constant(b);
    let reg = lasry_lions(b, lambda, c_sc)?;
    let points = find_critical_points(b, &reg, &analysis.set, u_radius, default_gtol(c_sc, b.grid.h()))?;
    let pair = ConjugatePair {
        u_minus: u1_minus,
        u_plus: u2_plus,
        c: analysis.set.c.clone(),
        alpha: analysis.set.alpha,
        shift: 0.0,
    };
    let mut last: Option<ConnectResult> = None;
    let mut last_err: Option<Error> = None;
    for point in points {
        let matched = match match_differentials(&pair, point.node, model, settings) {
            Ok(m) => m,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let ordered = prefer_approaching(model, &matched.candidates, &analysis.set, settings.dt);
        for cand in ordered {
            let tr = trace(model, analysis.set.alpha, &cand, &analysis.set, settings)?;
            let good = tr.verdict == Verdict::Connecting && tr.limit_classes == (from, to);
            let result = ConnectResult {
                from_class: from,
                to_class: to,
                barrier: barrier.clone(),
                point: point.clone(),
                matched: matched.clone(),
                trace: tr,
            };
            if good {
                return Ok(result);
            }
            last = Some(result);
        }
    }
    match (last, last_err) {
        (Some(r), _) => Ok(r),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::NoCriticalPoints(
            "hetero barrier has no critical point outside the Aubry neighbourhood".into(),
        )),
    }
}
