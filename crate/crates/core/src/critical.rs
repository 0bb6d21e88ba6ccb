//! Generalized critical points of a barrier field outside the Aubry set, their
//! classification, the homoclinic criterion conditions, bottleneck minimax
//! values and Lusternik-Schnirelmann category bounds.

use serde::{Deserialize, Serialize};

use crate::barrier::{mask_components, AubrySet, ConjugatePair};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::model::norm;
use crate::semiconcave::{
    delta_smooth, semiconcavity_constant, subdifferential, superdifferential, DiffHull,
    RegularizedField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalClass {
    LocalMin,
    IsolatedLocalMax,
    NonisolatedLocalMax,
    MountainPass,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub node: usize,
    pub coords: Vec<f64>,
    pub value: f64,
    /// Superdifferential of the unregularized field at the node.
    pub hull: DiffHull,
    /// Whether the origin lies in `hull` within the gradient tolerance.
    pub verified: bool,
    pub component_size: usize,
    pub nonisolated: bool,
    pub class: CriticalClass,
    pub satisfied: Vec<Condition>,
    /// Explanation attached to unresolved classifications.
    pub note: Option<String>,
}

/// Default gradient tolerance `C_sc·h/2`: a node one cell from a critical
/// point of curvature `κ` has centred gradient about `κ·h`, so neighbours of
/// critical points with `κ > C_sc/2` stay out of the candidate mask.
pub fn default_gtol(c_sc: f64, h: f64) -> f64 {
    (0.5 * c_sc * h).max(1e-12)
}

/// Critical components of `B_λ` outside the `u_radius`-cell dilation of the Aubry set.
///
/// One representative per 8-connected component of `{|DB_λ| ≤ gtol}`: the node
/// of smallest gradient among those whose `B*` hull contains the origin, or
/// the smallest-gradient node when none does (then `verified` is false).
pub fn find_critical_points(
    b: &ScalarField,
    reg: &RegularizedField,
    aubry: &AubrySet,
    u_radius: usize,
    gtol: f64,
) -> Result<Vec<CriticalPoint>> {
    let grid = b.grid;
    if reg.u_lambda.grid != grid || aubry.grid != grid {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    let c_sc = semiconcavity_constant(b);
    let excluded = aubry.dilation(u_radius);
    let grad: Vec<f64> = (0..grid.len())
        .map(|i| norm(&reg.u_lambda.centered_gradient(i)))
        .collect();
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| !excluded[i] && grad[i] <= gtol)
        .collect();
    let comps = mask_components(grid, &mask);
    let mut out = Vec::new();
    for comp in &comps {
        let hulls: Vec<DiffHull> = comp
            .iter()
            .map(|&i| superdifferential(b, i, &[1], c_sc))
            .collect::<Result<_>>()?;
        let pick = |only_verified: bool| {
            comp.iter()
                .enumerate()
                .filter(|(k, _)| !only_verified || hulls[*k].contains_zero(gtol))
                .min_by(|a, b| grad[*a.1].total_cmp(&grad[*b.1]).then(a.1.cmp(b.1)))
                .map(|(k, &i)| (k, i))
        };
        let (verified, (k, node)) = match pick(true) {
            Some(p) => (true, p),
            None => (false, pick(false).expect("component is nonempty")),
        };
        out.push(CriticalPoint {
            node,
            coords: grid.coords(node),
            value: b.values[node],
            hull: hulls[k].clone(),
            verified,
            component_size: comp.len(),
            nonisolated: comp.len() > 1,
            class: CriticalClass::Unresolved,
            satisfied: Vec::new(),
            note: None,
        });
    }
    if out.is_empty() {
        let (cat, _) = category_lower_bound(grid, &excluded)?;
        if cat >= 2 {
            return Err(Error::NoCriticalPoints(format!(
                "complement has category {cat} but no node has |DB_λ| ≤ {gtol:e}; refine the grid or raise gtol"
            )));
        }
    }
    Ok(out)
}

/// Number of 4-connected components of `nodes` (a subset of the grid).
fn count_components4(grid: TorusGrid, nodes: &[usize]) -> usize {
    let mut inside = vec![false; grid.len()];
    for &i in nodes {
        inside[i] = true;
    }
    let mut seen = vec![false; grid.len()];
    let mut count = 0;
    for &s in nodes {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for w in grid.neighbors4(v) {
                if inside[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Classifies `point` from the values of `b` in the Chebyshev box of `radius` cells.
///
/// `others` are the remaining critical representatives, used to decide isolation.
pub fn classify(
    point: &CriticalPoint,
    b: &ScalarField,
    radius: usize,
    others: &[CriticalPoint],
) -> (CriticalClass, Option<String>) {
    let grid = b.grid;
    let x = point.node;
    let bx = b.values[x];
    let nbhd: Vec<usize> = grid
        .box_offsets(radius as i64, true)
        .into_iter()
        .map(|o| grid.shift(x, o))
        .collect();
    let is_max = nbhd.iter().all(|&y| bx >= b.values[y]);
    let is_min = nbhd.iter().all(|&y| bx <= b.values[y]);
    if is_max && is_min {
        return (
            CriticalClass::Unresolved,
            Some(format!("flat plateau: all values within radius {radius} equal {bx}")),
        );
    }
    if is_max {
        let crowded = others
            .iter()
            .any(|o| o.node != x && grid.cell_distance(o.node, x) <= radius);
        let isolated = !point.nonisolated && !crowded;
        return if isolated {
            (CriticalClass::IsolatedLocalMax, None)
        } else {
            (CriticalClass::NonisolatedLocalMax, None)
        };
    }
    let sub: Vec<usize> = nbhd.iter().copied().filter(|&y| b.values[y] < bx).collect();
    if !sub.is_empty() && count_components4(grid, &sub) >= 2 {
        return (CriticalClass::MountainPass, None);
    }
    if is_min {
        return (CriticalClass::LocalMin, None);
    }
    (
        CriticalClass::Unresolved,
        Some(format!(
            "strict sublevel set near node {x} is connected but the node is not an extremum"
        )),
    )
}

/// Evaluates conditions (a)–(d) of the homoclinic criterion at a critical point.
pub fn check_criteria(point: &CriticalPoint, pair: &ConjugatePair, b: &ScalarField) -> Result<Vec<Condition>> {
    let grid = b.grid;
    let h = grid.h();
    let x = point.node;
    let mut out = Vec::new();

    let c_minus = semiconcavity_constant(&pair.u_minus);
    let c_plus = semiconcavity_constant(&pair.u_plus.map(|v| -v));
    let hull_minus = superdifferential(&pair.u_minus, x, &[1], c_minus)?.lifted(&pair.c);
    let hull_plus = subdifferential(&pair.u_plus, x, &[1], c_plus)?.lifted(&pair.c);
    if hull_minus.diameter() < delta_smooth(c_minus, h) || hull_plus.diameter() < delta_smooth(c_plus, h) {
        out.push(Condition::A);
    }

    let c_b = semiconcavity_constant(b);
    if grid.dim() == 1 {
        out.push(Condition::B);
    } else {
        // surrogate for a tangent direction of the superlevel set: it meets every shell ring
        let eps = 0.5 * c_b * h * h;
        let level = b.values[x] - eps;
        let spans = (1..=3).all(|r| {
            grid.ring_offsets(r)
                .into_iter()
                .any(|o| b.values[grid.shift(x, o)] >= level)
        });
        if spans {
            out.push(Condition::B);
        }
    }

    let hull_b = superdifferential(b, x, &[1], c_b)?;
    if hull_b.interior_depth() <= 0.5 * delta_smooth(c_b, h) {
        out.push(Condition::C);
    }

    if point.nonisolated {
        out.push(Condition::D);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimaxMode {
    MaxOfMin,
    MinOfMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub x0: usize,
    pub x1: usize,
    pub mode: MinimaxMode,
    pub value: f64,
    /// 4-connected node path from `x0` to `x1` attaining `value`.
    pub path: Vec<usize>,
    /// The node of the path where the bottleneck value is attained.
    pub saddle: usize,
}

/// Exact bottleneck value over 4-connected grid paths between two nodes.
///
/// Nodes are switched on in order of value (descending for `MaxOfMin`,
/// ascending for `MinOfMax`; ties by node index) and merged with a union-find
/// until the endpoints meet. The merge edges form a spanning forest whose path
/// between the endpoints is an optimal witness.
pub fn minimax_value(b: &ScalarField, x0: usize, x1: usize, mode: MinimaxMode) -> Result<MinimaxResult> {
    let grid = b.grid;
    if x0 == x1 {
        return Err(Error::InvalidInput("minimax endpoints must differ".into()));
    }
    if x0 >= grid.len() || x1 >= grid.len() {
        return Err(Error::InvalidInput("minimax endpoint outside grid".into()));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    match mode {
        MinimaxMode::MaxOfMin => {
            order.sort_by(|&a, &c| b.values[c].total_cmp(&b.values[a]).then(a.cmp(&c)))
        }
        MinimaxMode::MinOfMax => {
            order.sort_by(|&a, &c| b.values[a].total_cmp(&b.values[c]).then(a.cmp(&c)))
        }
    }
    let n = grid.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut active = vec![false; n];
    let mut tree: Vec<Vec<usize>> = vec![Vec::new(); n];
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut value = f64::NAN;
    for &v in &order {
        active[v] = true;
        for w in grid.neighbors4(v) {
            if !active[w] {
                continue;
            }
            let (rv, rw) = (find(&mut parent, v), find(&mut parent, w));
            if rv != rw {
                parent[rv.max(rw)] = rv.min(rw);
                tree[v].push(w);
                tree[w].push(v);
            }
        }
        if active[x0] && active[x1] && find(&mut parent, x0) == find(&mut parent, x1) {
            value = b.values[v];
            break;
        }
    }
    // unique tree path by breadth-first search
    let mut prev = vec![usize::MAX; n];
    prev[x0] = x0;
    let mut queue = std::collections::VecDeque::from([x0]);
    while let Some(v) = queue.pop_front() {
        if v == x1 {
            break;
        }
        for &w in &tree[v] {
            if prev[w] == usize::MAX {
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![x1];
    let mut cur = x1;
    while cur != x0 {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    let saddle = *path
        .iter()
        .min_by(|&&a, &&c| {
            let ord = match mode {
                MinimaxMode::MaxOfMin => b.values[a].total_cmp(&b.values[c]),
                MinimaxMode::MinOfMax => b.values[c].total_cmp(&b.values[a]),
            };
            ord.then(a.cmp(&c))
        })
        .expect("path is nonempty");
    Ok(MinimaxResult {
        x0,
        x1,
        mode,
        value,
        path,
        saddle,
    })
}

/// Lusternik-Schnirelmann category of the complement of `excluded` for the
/// recognised shapes, with a note when the shape is not recognised.
pub fn category_lower_bound(grid: TorusGrid, excluded: &[bool]) -> Result<(usize, Option<String>)> {
    if excluded.len() != grid.len() {
        return Err(Error::InvalidInput("mask size does not match grid".into()));
    }
    if excluded.iter().all(|&e| e) {
        return Err(Error::InvalidInput("excluded region covers the whole torus".into()));
    }
    let any = excluded.iter().any(|&e| e);
    if grid.dim() == 1 {
        return Ok(if any { (1, None) } else { (2, None) });
    }
    if !any {
        return Ok((3, None));
    }
    let complement: Vec<bool> = excluded.iter().map(|&e| !e).collect();
    if mask_components(grid, &complement).len() != 1 {
        return Ok((1, Some("unrecognized topology: complement is disconnected".into())));
    }
    for comp in mask_components(grid, excluded) {
        let mut rows = vec![false; grid.n()];
        let mut cols = vec![false; grid.n()];
        for &i in &comp {
            let m = grid.multi(i);
            cols[m[0]] = true;
            rows[m[1]] = true;
        }
        if rows.iter().all(|&r| r) || cols.iter().all(|&c| c) {
            return Ok((
                1,
                Some("unrecognized topology: an excluded component wraps around the torus".into()),
            ));
        }
    }
    Ok((2, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::ResolvedTolerances;
    use crate::model::periodic_delta;
    use crate::semiconcave::lasry_lions;

    fn b1(x: f64) -> f64 {
        16.0 * (periodic_delta(x, 0.0) / 4.0).sin().powi(2)
    }

    fn aubry_at(grid: TorusGrid, nodes: Vec<usize>) -> AubrySet {
        AubrySet {
            grid,
            classes: vec![crate::barrier::AubryClass {
                nodes: nodes.clone(),
                representative: nodes.first().copied().unwrap_or(0),
            }],
            nodes,
            diagonal: Vec::new(),
            samples: Vec::new(),
            class_separation: f64::INFINITY,
            tolerances: ResolvedTolerances {
                eps_aubry: 0.1,
                eps_class: 1.0,
                eps_pair: 0.15,
                max_samples: 1,
            },
            alpha: 0.0,
            c: vec![0.0; grid.dim()],
        }
    }

    fn analyse(b: &ScalarField, aubry: &AubrySet) -> Vec<CriticalPoint> {
        let c = semiconcavity_constant(b);
        let reg = lasry_lions(b, 0.1, c).unwrap();
        let mut pts = find_critical_points(b, &reg, aubry, 3, default_gtol(c, b.grid.h())).unwrap();
        let snapshot = pts.clone();
        for p in pts.iter_mut() {
            let (class, note) = classify(p, b, 3, &snapshot);
            p.class = class;
            p.note = note;
        }
        pts
    }

    #[test]
    fn pendulum_has_one_isolated_max() {
        let g = TorusGrid::new(1, 256).unwrap();
        let b = ScalarField::from_fn(g, |x| b1(x[0]));
        let pts = analyse(&b, &aubry_at(g, vec![0]));
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].node, 128);
        assert!(pts[0].verified);
        assert_eq!(pts[0].class, CriticalClass::IsolatedLocalMax);
    }

    #[test]
    fn product_pendulum_has_three_components() {
        let g = TorusGrid::new(2, 64).unwrap();
        let b = ScalarField::from_fn(g, |x| b1(x[0]) + b1(x[1]));
        let pts = analyse(&b, &aubry_at(g, vec![0]));
        let mut nodes: Vec<[usize; 2]> = pts.iter().map(|p| g.multi(p.node)).collect();
        nodes.sort();
        assert_eq!(nodes, vec![[0, 32], [32, 0], [32, 32]]);
        for p in &pts {
            let m = g.multi(p.node);
            let expect = if m == [32, 32] {
                CriticalClass::IsolatedLocalMax
            } else {
                CriticalClass::MountainPass
            };
            assert_eq!(p.class, expect, "{m:?}");
        }
        let (cat, note) = category_lower_bound(g, &aubry_at(g, vec![0]).dilation(3)).unwrap();
        assert_eq!((cat, note), (2, None));
        assert!(pts.len() >= cat);
    }

    #[test]
    fn constant_field_is_one_nonisolated_plateau() {
        let g = TorusGrid::new(2, 16).unwrap();
        let b = ScalarField::constant(g, 0.0);
        let pts = analyse(&b, &aubry_at(g, vec![]));
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].component_size, g.len());
        assert!(pts[0].nonisolated);
        assert_eq!(pts[0].class, CriticalClass::Unresolved);
        assert!(pts[0].note.is_some());
    }

    #[test]
    fn criteria_on_oracles() {
        let g = TorusGrid::new(1, 256).unwrap();
        let u = ScalarField::from_fn(g, |x| b1(x[0]) / 2.0);
        let pair = ConjugatePair {
            u_minus: u.clone(),
            u_plus: u.map(|v| -v),
            c: vec![0.0],
            alpha: 0.0,
            shift: 0.0,
        };
        let b = u.map(|v| 2.0 * v);
        let pts = analyse(&b, &aubry_at(g, vec![0]));
        let conds = check_criteria(&pts[0], &pair, &b).unwrap();
        assert_eq!(conds, vec![Condition::B]);

        let g = TorusGrid::new(2, 64).unwrap();
        let u = ScalarField::from_fn(g, |x| (b1(x[0]) + b1(x[1])) / 2.0);
        let pair = ConjugatePair {
            u_minus: u.clone(),
            u_plus: u.map(|v| -v),
            c: vec![0.0, 0.0],
            alpha: 0.0,
            shift: 0.0,
        };
        let b = u.map(|v| 2.0 * v);
        let pts = analyse(&b, &aubry_at(g, vec![0]));
        for p in &pts {
            let conds = check_criteria(p, &pair, &b).unwrap();
            match g.multi(p.node) {
                [32, 32] => assert!(conds.is_empty(), "{conds:?}"),
                _ => assert_eq!(conds, vec![Condition::B, Condition::C]),
            }
        }
    }

    #[test]
    fn minimax_examples() {
        let g = TorusGrid::new(2, 64).unwrap();
        let b = ScalarField::from_fn(g, |x| b1(x[0]) + b1(x[1]));
        let r = minimax_value(&b, g.flat([32, 0]), g.flat([0, 32]), MinimaxMode::MaxOfMin).unwrap();
        assert!((r.value - 8.0).abs() < 1e-12);
        assert!(r.path.contains(&g.flat([32, 32])));
        assert!(r.value <= b.values[r.x0].min(b.values[r.x1]));
        assert_eq!(b.values[r.saddle], r.value);

        let g1 = TorusGrid::new(1, 256).unwrap();
        let b = ScalarField::from_fn(g1, |x| b1(x[0]));
        // on the circle the cheaper way from π - h to π + h runs through 0
        let r = minimax_value(&b, 127, 129, MinimaxMode::MinOfMax).unwrap();
        assert_eq!(r.value, b.values[127].max(b.values[129]));
        assert!(r.path.contains(&0) && !r.path.contains(&128));
        // with the long way blocked the path has to cross the peak
        let mut walled = b.clone();
        walled.values[0] = 100.0;
        let r = minimax_value(&walled, 127, 129, MinimaxMode::MinOfMax).unwrap();
        assert_eq!(r.value, b.values[128]);
        assert_eq!(r.saddle, 128);

        let k = ScalarField::constant(g, 1.5);
        let r = minimax_value(&k, 0, 100, MinimaxMode::MaxOfMin).unwrap();
        assert_eq!(r.value, 1.5);
        assert!(minimax_value(&k, 3, 3, MinimaxMode::MinOfMax).is_err());
    }

    #[test]
    fn category_cases() {
        let g1 = TorusGrid::new(1, 32).unwrap();
        let mut arc = vec![false; 32];
        arc[0] = true;
        arc[1] = true;
        assert_eq!(category_lower_bound(g1, &arc).unwrap().0, 1);
        assert_eq!(category_lower_bound(g1, &[false; 32]).unwrap().0, 2);
        assert!(category_lower_bound(g1, &[true; 32]).is_err());

        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(category_lower_bound(g, &vec![false; 256]).unwrap().0, 3);
        let mut disk = vec![false; 256];
        for o in g.box_offsets(2, false) {
            disk[g.shift(0, o)] = true;
        }
        assert_eq!(category_lower_bound(g, &disk).unwrap(), (2, None));
        let mut band = vec![false; 256];
        for i in 0..16 {
            band[g.flat([i, 3])] = true;
        }
        let (cat, note) = category_lower_bound(g, &band).unwrap();
        assert_eq!(cat, 1);
        assert!(note.is_some());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        /// Exact max-of-min by thresholding: the best level is the largest
        /// node value at which the endpoints are connected through nodes at or above it.
        fn threshold_oracle(b: &ScalarField, x0: usize, x1: usize) -> f64 {
            let mut levels = b.values.clone();
            levels.sort_by(|a, c| c.total_cmp(a));
            for t in levels {
                if b.values[x0] < t || b.values[x1] < t {
                    continue;
                }
                let mut seen = vec![false; b.grid.len()];
                let mut stack = vec![x0];
                seen[x0] = true;
                while let Some(v) = stack.pop() {
                    for w in b.grid.neighbors4(v) {
                        if !seen[w] && b.values[w] >= t {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
                if seen[x1] {
                    return t;
                }
            }
            f64::NEG_INFINITY
        }

        proptest! {
            #[test]
            fn max_of_min_matches_threshold_search(
                vals in proptest::collection::vec(0u8..20, 64),
                x0 in 0usize..64,
                x1 in 0usize..64,
            ) {
                prop_assume!(x0 != x1);
                let g = TorusGrid::new(2, 8).unwrap();
                let b = ScalarField::new(g, vals.iter().map(|&v| v as f64).collect()).unwrap();
                let r = minimax_value(&b, x0, x1, MinimaxMode::MaxOfMin).unwrap();
                prop_assert_eq!(r.value, threshold_oracle(&b, x0, x1));
                prop_assert_eq!(r.path[0], x0);
                prop_assert_eq!(*r.path.last().unwrap(), x1);
                for w in r.path.windows(2) {
                    prop_assert!(g.neighbors4(w[0]).contains(&w[1]));
                }
                let path_min = r.path.iter().map(|&i| b.values[i]).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(path_min, r.value);
                // min-of-max is max-of-min of the negated field
                let neg = b.map(|v| -v);
                let m = minimax_value(&b, x0, x1, MinimaxMode::MinOfMax).unwrap();
                prop_assert_eq!(m.value, -threshold_oracle(&neg, x0, x1));
            }
        }
    }
}
