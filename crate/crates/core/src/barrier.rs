//! Peierls barrier, projected Aubry set and its classes, conjugate pairs and
//! barrier functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::model::LagrangianModel;
use crate::solver::{
    conjugate_forward, operator_for, point_source_with, Direction, LaxOleinik, SolverSettings,
    WeakKamSolution,
};

/// Tolerances for Aubry detection and pairing. `None` fields take defaults
/// scaled by the discretisation (see [`AubryTolerances::resolve`]).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AubryTolerances {
    pub eps_aubry: Option<f64>,
    pub eps_class: Option<f64>,
    pub eps_pair: Option<f64>,
    /// Cap on the number of point sources solved during detection.
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub eps_aubry: f64,
    pub eps_class: f64,
    pub eps_pair: f64,
    pub max_samples: usize,
}

impl AubryTolerances {
    /// Defaults: `ε_aubry = 5(h + τ)`, `ε_class = 10·ε_aubry`, `ε_pair = 1.5·ε_aubry`.
    pub fn resolve(&self, h: f64, tau: f64) -> Result<ResolvedTolerances> {
        let eps_aubry = self.eps_aubry.unwrap_or(5.0 * (h + tau));
        let r = ResolvedTolerances {
            eps_aubry,
            eps_class: self.eps_class.unwrap_or(10.0 * eps_aubry),
            eps_pair: self.eps_pair.unwrap_or(1.5 * eps_aubry),
            max_samples: self.max_samples.unwrap_or(12),
        };
        for (name, v) in [
            ("eps_aubry", r.eps_aubry),
            ("eps_class", r.eps_class),
            ("eps_pair", r.eps_pair),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if r.max_samples == 0 {
            return Err(Error::Config("max_samples must be at least 1".into()));
        }
        Ok(r)
    }
}

/// Lazily computed rows `h_c(y, ·)` and columns `h_c(·, y)` of the Peierls barrier.
#[derive(Debug, Clone)]
pub struct PeierlsCache {
    backward: LaxOleinik,
    reversed: LaxOleinik,
    /// Rows and columns coincide when the reversed operator is the same map.
    symmetric: bool,
    alpha: f64,
    settings: SolverSettings,
    rows: BTreeMap<usize, ScalarField>,
    cols: BTreeMap<usize, ScalarField>,
}

impl PeierlsCache {
    pub fn new(
        model: &LagrangianModel,
        c: &[f64],
        grid: TorusGrid,
        alpha: f64,
        settings: &SolverSettings,
    ) -> Result<Self> {
        let backward = operator_for(model, c, grid, Direction::Backward, settings)?;
        let reversed = operator_for(model, c, grid, Direction::Forward, settings)?;
        Ok(Self {
            symmetric: backward == reversed,
            backward,
            reversed,
            alpha,
            settings: settings.clone(),
            rows: BTreeMap::new(),
            cols: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.backward.grid()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `h_c(y, ·)`.
    pub fn row(&mut self, y: usize) -> Result<&ScalarField> {
        if self.symmetric && !self.rows.contains_key(&y) {
            if let Some(col) = self.cols.get(&y) {
                self.rows.insert(y, col.clone());
            }
        }
        if !self.rows.contains_key(&y) {
            let ps = point_source_with(&self.backward, y, self.alpha, &self.settings)?;
            self.rows.insert(y, ps.field);
        }
        Ok(&self.rows[&y])
    }

    /// `h_c(·, y)`, computed as the row of the reversed problem at `-c`.
    pub fn col(&mut self, y: usize) -> Result<&ScalarField> {
        if self.symmetric {
            let row = self.row(y)?.clone();
            return Ok(self.cols.entry(y).or_insert(row));
        }
        if !self.cols.contains_key(&y) {
            let ps = point_source_with(&self.reversed, y, self.alpha, &self.settings)?;
            self.cols.insert(y, ps.field);
        }
        Ok(&self.cols[&y])
    }

    /// `d_c(y, x) = h_c(y, x) + h_c(x, y)` for all `x`.
    pub fn pseudometric_from(&mut self, y: usize) -> Result<ScalarField> {
        let row = self.row(y)?.clone();
        let col = self.col(y)?;
        row.zip_with(col, |a, b| a + b)
    }
}

/// Peierls barrier row `h_c(y, ·)` for a single source node.
pub fn peierls_row(
    model: &LagrangianModel,
    c: &[f64],
    y: usize,
    grid: TorusGrid,
    alpha: f64,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let mut cache = PeierlsCache::new(model, c, grid, alpha, settings)?;
    Ok(cache.row(y)?.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AubryClass {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    /// Sampled node used as the class source for elementary solutions.
    pub representative: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AubrySet {
    pub grid: TorusGrid,
    /// Sorted node indices with estimated `h_c(x, x) ≤ ε_aubry`.
    pub nodes: Vec<usize>,
    pub classes: Vec<AubryClass>,
    /// Upper estimate of `h_c(x, x)` on the candidate nodes, as `(node, value)`.
    pub diagonal: Vec<(usize, f64)>,
    /// Nodes whose point sources were solved.
    pub samples: Vec<usize>,
    /// Smallest `d_c` between sampled nodes of distinct classes (`∞` for one class).
    pub class_separation: f64,
    pub tolerances: ResolvedTolerances,
    pub alpha: f64,
    pub c: Vec<f64>,
}

impl AubrySet {
    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn class_of(&self, node: usize) -> Option<usize> {
        self.classes
            .iter()
            .position(|cl| cl.nodes.binary_search(&node).is_ok())
    }

    /// Mask of nodes within `radius` cells (Chebyshev) of the Aubry set.
    pub fn dilation(&self, radius: usize) -> Vec<bool> {
        let mut mask = vec![false; self.grid.len()];
        let offs = self.grid.box_offsets(radius as i64, false);
        for &a in &self.nodes {
            for o in &offs {
                mask[self.grid.shift(a, *o)] = true;
            }
        }
        mask
    }

    /// Euclidean torus distance from a point to the nearest Aubry node, and that node's class.
    pub fn nearest(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for (k, cl) in self.classes.iter().enumerate() {
            for &a in &cl.nodes {
                let d = crate::model::norm(&crate::grid::torus_delta(x, &self.grid.coords(a)));
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        best
    }
}

/// Aubry detection output together with the Peierls cache holding the sampled rows.
#[derive(Debug, Clone)]
pub struct AubryAnalysis {
    pub set: AubrySet,
    /// The conjugate forward solution used to narrow the candidates.
    pub conjugate: WeakKamSolution,
    pub cache: PeierlsCache,
}

/// Connected components of a node mask (8-connectivity), in order of their smallest node.
pub(crate) fn mask_components(grid: TorusGrid, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; grid.len()];
    let mut comps = Vec::new();
    for start in 0..grid.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for w in grid.neighbors8(v) {
                if mask[w] && label[w] == usize::MAX {
                    label[w] = id;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Detects the projected Aubry set of `u_minus`'s cohomology class and splits it into classes.
///
/// Candidates are the near-zero set of `u⁻ - u⁺` for the conjugate `u⁺`, which
/// contains the Aubry set. A few candidates are used as point sources; every
/// candidate `x` then gets the upper estimate
/// `h_c(x, x) ≤ min_z [h_c(x, z) + h_c(z, x)]` (or its own loop value when sampled).
/// Classes are single-linkage clusters of sampled Aubry nodes under `d_c`;
/// the remaining Aubry nodes join the class of their `d_c`-nearest sample.
pub fn aubry_set(
    model: &LagrangianModel,
    u_minus: &WeakKamSolution,
    settings: &SolverSettings,
    tolerances: &AubryTolerances,
) -> Result<AubryAnalysis> {
    if u_minus.direction != Direction::Backward {
        return Err(Error::InvalidInput("aubry_set expects a backward solution".into()));
    }
    let grid = u_minus.u.grid;
    let tol = tolerances.resolve(grid.h(), u_minus.tau)?;
    let conjugate = conjugate_forward(model, u_minus, settings)?;
    let b0 = u_minus.u.zip_with(&conjugate.u, |a, b| a - b)?;
    let candidate_mask: Vec<bool> = b0.values.iter().map(|&v| v <= tol.eps_aubry).collect();
    let candidates: Vec<usize> = (0..grid.len()).filter(|&i| candidate_mask[i]).collect();
    let comps = mask_components(grid, &candidate_mask);

    // per-component minimiser first, then evenly spaced fill-in
    let mut samples: Vec<usize> = comps
        .iter()
        .map(|comp| {
            *comp
                .iter()
                .min_by(|&&a, &&b| b0.values[a].total_cmp(&b0.values[b]).then(a.cmp(&b)))
                .expect("component is nonempty")
        })
        .take(tol.max_samples)
        .collect();
    let room = tol.max_samples.saturating_sub(samples.len());
    if room > 0 && candidates.len() > samples.len() {
        let step = candidates.len() as f64 / room as f64;
        for k in 0..room {
            let node = candidates[(k as f64 * step) as usize];
            if !samples.contains(&node) {
                samples.push(node);
            }
        }
    }
    samples.sort_unstable();

    let mut cache = PeierlsCache::new(model, &u_minus.c, grid, u_minus.alpha, settings)?;
    let mut metric: BTreeMap<usize, ScalarField> = BTreeMap::new();
    for &z in &samples {
        metric.insert(z, cache.pseudometric_from(z)?);
    }

    let mut diagonal = Vec::with_capacity(candidates.len());
    for &x in &candidates {
        let mut d = metric
            .values()
            .map(|m| m.values[x])
            .fold(f64::INFINITY, f64::min);
        if samples.binary_search(&x).is_ok() {
            d = d.min(cache.row(x)?.values[x]);
        }
        diagonal.push((x, d));
    }
    let nodes: Vec<usize> = diagonal
        .iter()
        .filter(|(_, d)| *d <= tol.eps_aubry)
        .map(|(x, _)| *x)
        .collect();
    if nodes.is_empty() {
        let min_diagonal = diagonal.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        return Err(Error::EmptyAubrySet {
            min_diagonal,
            eps: tol.eps_aubry,
        });
    }

    // single linkage over the sampled Aubry nodes
    let aubry_samples: Vec<usize> = samples
        .iter()
        .copied()
        .filter(|z| nodes.binary_search(z).is_ok())
        .collect();
    let k = aubry_samples.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let d = metric[&aubry_samples[i]].values[aubry_samples[j]];
            if d <= tol.eps_class {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..k).map(|i| find(&mut parent, i)).collect();
    let mut root_ids: Vec<usize> = roots.clone();
    root_ids.sort_unstable();
    root_ids.dedup();
    for r in roots.iter_mut() {
        *r = root_ids.binary_search(r).expect("root present");
    }
    let mut class_separation = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            if roots[i] != roots[j] {
                class_separation =
                    class_separation.min(metric[&aubry_samples[i]].values[aubry_samples[j]]);
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); root_ids.len()];
    for &x in &nodes {
        let mut best = (f64::INFINITY, 0usize);
        for (i, z) in aubry_samples.iter().enumerate() {
            let d = metric[z].values[x];
            if d < best.0 {
                best = (d, roots[i]);
            }
        }
        members[best.1].push(x);
    }
    let diag_of = |x: usize| -> f64 {
        diagonal
            .iter()
            .find(|p| p.0 == x)
            .map(|p| p.1)
            .unwrap_or(f64::INFINITY)
    };
    let mut classes: Vec<AubryClass> = Vec::new();
    for (cid, nodes_c) in members.into_iter().enumerate() {
        let representative = aubry_samples
            .iter()
            .enumerate()
            .filter(|(i, _)| roots[*i] == cid)
            .map(|(_, z)| *z)
            .min_by(|&a, &b| diag_of(a).total_cmp(&diag_of(b)).then(a.cmp(&b)))
            .expect("every class has a sample");
        classes.push(AubryClass {
            nodes: nodes_c,
            representative,
        });
    }
    classes.sort_by_key(|cl| cl.nodes[0]);

    Ok(AubryAnalysis {
        set: AubrySet {
            grid,
            nodes,
            classes,
            diagonal,
            samples,
            class_separation,
            tolerances: tol,
            alpha: u_minus.alpha,
            c: u_minus.c.clone(),
        },
        conjugate,
        cache,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugatePair {
    pub u_minus: ScalarField,
    pub u_plus: ScalarField,
    pub c: Vec<f64>,
    pub alpha: f64,
    /// Constant added to the supplied forward solution.
    pub shift: f64,
}

/// Pairs a backward and a forward solution so that they agree on the Aubry set.
pub fn conjugate_pair(
    u_minus: &WeakKamSolution,
    u_plus: &WeakKamSolution,
    aubry: &AubrySet,
) -> Result<ConjugatePair> {
    if u_minus.direction != Direction::Backward || u_plus.direction != Direction::Forward {
        return Err(Error::InvalidInput(
            "conjugate_pair needs a backward and a forward solution".into(),
        ));
    }
    if u_minus.u.grid != u_plus.u.grid || u_minus.u.grid != aubry.grid {
        return Err(Error::InvalidInput("solutions live on different grids".into()));
    }
    if u_minus.c != u_plus.c {
        return Err(Error::InvalidInput("solutions have different cohomology classes".into()));
    }
    let eps = aubry.tolerances.eps_pair;
    let diff = |i: usize| u_minus.u.values[i] - u_plus.u.values[i];
    let shift = aubry
        .nodes
        .iter()
        .map(|&i| diff(i))
        .fold(f64::INFINITY, f64::min);
    let u_plus_shifted = u_plus.u.map(|v| v + shift);
    let gap = aubry
        .nodes
        .iter()
        .map(|&i| (diff(i) - shift).abs())
        .fold(0.0, f64::max);
    let below = (0..aubry.grid.len())
        .map(|i| diff(i) - shift)
        .fold(f64::INFINITY, f64::min);
    if gap > eps || below < -eps {
        return Err(Error::MultipleClassObstruction {
            gap: gap.max(-below),
            eps,
        });
    }
    Ok(ConjugatePair {
        u_minus: u_minus.u.clone(),
        u_plus: u_plus_shifted,
        c: u_minus.c.clone(),
        alpha: u_minus.alpha,
        shift,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierKind {
    Conjugate,
    Hetero { from_class: usize, to_class: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierField {
    pub b: ScalarField,
    pub kind: BarrierKind,
}

/// `B*_c = u⁻ - u⁺` for a conjugate pair.
pub fn barrier_function(pair: &ConjugatePair) -> BarrierField {
    let b = pair
        .u_minus
        .zip_with(&pair.u_plus, |a, b| a - b)
        .expect("pair fields share a grid");
    BarrierField {
        b,
        kind: BarrierKind::Conjugate,
    }
}

/// Elementary solutions of a class: `u⁻ = h_c(z, ·)` and `u⁺ = -h_c(·, z)` for its representative `z`.
pub fn elementary_solutions(
    analysis: &mut AubryAnalysis,
    class: usize,
) -> Result<(ScalarField, ScalarField)> {
    let cl = analysis.set.classes.get(class).ok_or_else(|| {
        Error::InvalidInput(format!(
            "class {class} out of range ({} classes)",
            analysis.set.classes.len()
        ))
    })?;
    let z = cl.representative;
    let row = analysis.cache.row(z)?.clone();
    let col = analysis.cache.col(z)?.map(|v| -v);
    Ok((row, col))
}

/// `B_{1,2} = u₁⁻ - u₂⁺` between two distinct classes.
pub fn hetero_barrier(
    u1_minus: &ScalarField,
    u2_plus: &ScalarField,
    from_class: usize,
    to_class: usize,
) -> Result<BarrierField> {
    if from_class == to_class {
        return Err(Error::InvalidInput(
            "hetero_barrier needs two distinct classes; use barrier_function for one class".into(),
        ));
    }
    Ok(BarrierField {
        b: u1_minus.zip_with(u2_plus, |a, b| a - b)?,
        kind: BarrierKind::Hetero {
            from_class,
            to_class,
        },
    })
}
