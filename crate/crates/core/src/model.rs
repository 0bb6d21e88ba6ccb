//! Tonelli models on the torus.
//!
//! Every model is of mechanical type, `L(x, v) = ½|v - b|² + W(x)`, where `W`
//! is a nonnegative trigonometric polynomial attaining 0 and `b` a constant
//! drift (zero for the built-in families). The Legendre dual is
//! `H(x, p) = ½|p|² + ⟨b, p⟩ - W(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Maps a real coordinate into `[0, 2π)`.
pub fn wrap_coord(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Shortest signed representative of `a - b` modulo 2π, in `[-π, π)`.
pub fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = wrap_coord(a - b);
    if d >= std::f64::consts::PI {
        d - TWO_PI
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn wrap(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "torus dimension must be 1 or 2, got {}",
                raw.len()
            )));
        }
        if let Some(bad) = raw.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {bad}")));
        }
        Ok(Self {
            coords: raw.iter().map(|&x| wrap_coord(x)).collect(),
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Per-axis shortest displacement `self - other`.
    pub fn delta(&self, other: &TorusPoint) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| periodic_delta(a, b))
            .collect()
    }

    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.delta(other).iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

/// One Fourier mode `a·cos(k·x) + b·sin(k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Trigonometric polynomial potential `W(x) = offset + Σ terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub dim: usize,
    pub offset: f64,
    pub terms: Vec<TrigTerm>,
}

impl Potential {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            offset: 0.0,
            terms: Vec::new(),
        }
    }

    fn phase(term: &TrigTerm, x: &[f64]) -> f64 {
        term.freq
            .iter()
            .zip(x)
            .map(|(&k, &xi)| k as f64 * xi)
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.offset, |acc, t| {
            let ph = Self::phase(t, x);
            acc + t.cos * ph.cos() + t.sin * ph.sin()
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for t in &self.terms {
            let ph = Self::phase(t, x);
            let s = -t.cos * ph.sin() + t.sin * ph.cos();
            for (gi, &k) in g.iter_mut().zip(&t.freq) {
                *gi += s * k as f64;
            }
        }
        g
    }

    /// Upper bound for `max W` from the coefficients.
    pub fn sup_bound(&self) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.cos.hypot(t.sin))
                .sum::<f64>()
    }

    /// Min and max of `W` over a uniform sample lattice with `per_axis` points per axis.
    pub fn sampled_range(&self, per_axis: usize) -> (f64, f64) {
        let h = TWO_PI / per_axis as f64;
        let total = per_axis.pow(self.dim as u32);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut x = vec![0.0; self.dim];
        for flat in 0..total {
            let mut rest = flat;
            for xi in x.iter_mut() {
                *xi = (rest % per_axis) as f64 * h;
                rest /= per_axis;
            }
            let w = self.value(&x);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        (lo, hi)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 2 {
            return Err(Error::InvalidInput(format!(
                "potential dimension must be 1 or 2, got {}",
                self.dim
            )));
        }
        for t in &self.terms {
            if t.freq.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "frequency vector {:?} does not match dimension {}",
                    t.freq, self.dim
                )));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(Error::InvalidInput("non-finite coefficient".into()));
            }
        }
        let (lo, hi) = self.sampled_range(if self.dim == 1 { 4096 } else { 256 });
        if lo < -1e-9 {
            return Err(Error::InvalidInput(format!(
                "potential must be nonnegative, sampled minimum {lo:e}"
            )));
        }
        if lo > 1e-3 * (1.0 + hi) {
            return Err(Error::InvalidInput(format!(
                "potential must attain 0, sampled minimum {lo:e}"
            )));
        }
        Ok(())
    }
}

/// Mechanical Tonelli Lagrangian `L(x, v) = ½|v - b|² + W(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianModel {
    pub name: String,
    pub potential: Potential,
    pub drift: Vec<f64>,
}

impl LagrangianModel {
    pub fn new(name: impl Into<String>, potential: Potential, drift: Vec<f64>) -> Result<Self> {
        potential.validate()?;
        if drift.len() != potential.dim || drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "drift {drift:?} must be a finite vector of dimension {}",
                potential.dim
            )));
        }
        Ok(Self {
            name: name.into(),
            potential,
            drift,
        })
    }

    /// `W ≡ 0`.
    pub fn free(dim: usize) -> Self {
        Self {
            name: "free".into(),
            potential: Potential::zero(dim),
            drift: vec![0.0; dim],
        }
    }

    /// `W(x) = Σ_i (1 - cos x_i)`; for `dim = 2` this is the product pendulum.
    pub fn pendulum(dim: usize) -> Self {
        let terms = (0..dim)
            .map(|i| {
                let mut freq = vec![0; dim];
                freq[i] = 1;
                TrigTerm {
                    freq,
                    cos: -1.0,
                    sin: 0.0,
                }
            })
            .collect();
        Self {
            name: "pendulum".into(),
            potential: Potential {
                dim,
                offset: dim as f64,
                terms,
            },
            drift: vec![0.0; dim],
        }
    }

    /// `W(x) = (1 - cos 2x) / 2`, zeros at 0 and π.
    pub fn double_well() -> Self {
        Self {
            name: "double_well".into(),
            potential: Potential {
                dim: 1,
                offset: 0.5,
                terms: vec![TrigTerm {
                    freq: vec![2],
                    cos: -0.5,
                    sin: 0.0,
                }],
            },
            drift: vec![0.0],
        }
    }

    /// Double well in `x₁` times pendulum in `x₂`.
    pub fn double_well_pendulum() -> Self {
        Self {
            name: "double_well_pendulum".into(),
            potential: Potential {
                dim: 2,
                offset: 1.5,
                terms: vec![
                    TrigTerm {
                        freq: vec![2, 0],
                        cos: -0.5,
                        sin: 0.0,
                    },
                    TrigTerm {
                        freq: vec![0, 1],
                        cos: -1.0,
                        sin: 0.0,
                    },
                ],
            },
            drift: vec![0.0; 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim
    }

    pub fn lagrangian(&self, x: &[f64], v: &[f64]) -> f64 {
        let kinetic: f64 = v
            .iter()
            .zip(&self.drift)
            .map(|(vi, bi)| 0.5 * (vi - bi) * (vi - bi))
            .sum();
        kinetic + self.potential.value(x)
    }

    /// `L_c(x, v) = L(x, v) - ⟨c, v⟩`.
    pub fn lagrangian_c(&self, c: &[f64], x: &[f64], v: &[f64]) -> f64 {
        self.lagrangian(x, v) - dot(c, v)
    }

    pub fn dl_dv(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.drift).map(|(vi, bi)| vi - bi).collect()
    }

    pub fn dl_dx(&self, x: &[f64], _v: &[f64]) -> Vec<f64> {
        self.potential.gradient(x)
    }

    /// `L̆(x, v) = L(x, -v)`: same potential, opposite drift.
    pub fn reversed(&self) -> Self {
        Self {
            name: self.name.clone(),
            potential: self.potential.clone(),
            drift: self.drift.iter().map(|b| -b).collect(),
        }
    }

    pub fn hamiltonian(&self) -> HamiltonianModel {
        HamiltonianModel {
            potential: self.potential.clone(),
            drift: self.drift.clone(),
            reversed: false,
        }
    }

    /// Numerical Legendre transform: maximizes `⟨p, v⟩ - L(x, v)` over `v` by
    /// damped Newton iteration on `dL/dv` with a finite-difference Hessian.
    /// Returns `(H(x, p), argmax v)`.
    pub fn legendre(&self, x: &TorusPoint, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.dim();
        if p.len() != n || x.dim() != n {
            return Err(Error::InvalidInput("dimension mismatch in legendre".into()));
        }
        let xs = x.coords();
        let bound = 1e6 * (1.0 + norm(p));
        let objective = |v: &[f64]| dot(p, v) - self.lagrangian(xs, v);
        let mut v = vec![0.0; n];
        for _ in 0..200 {
            let grad: Vec<f64> = self
                .dl_dv(xs, &v)
                .iter()
                .zip(p)
                .map(|(l, pi)| pi - l)
                .collect();
            if norm(&grad) < 1e-13 * (1.0 + norm(p)) {
                break;
            }
            // Hessian of L in v by central differences of dL/dv.
            let eps = 1e-5;
            let mut hess = vec![vec![0.0; n]; n];
            for j in 0..n {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += eps;
                vm[j] -= eps;
                let gp = self.dl_dv(xs, &vp);
                let gm = self.dl_dv(xs, &vm);
                for i in 0..n {
                    hess[i][j] = (gp[i] - gm[i]) / (2.0 * eps);
                }
            }
            let step = solve_small(&hess, &grad).ok_or_else(|| Error::NonSuperlinear {
                x: xs.to_vec(),
                p: p.to_vec(),
                bound,
            })?;
            let f0 = objective(&v);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let trial: Vec<f64> = v.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                if objective(&trial) >= f0 - 1e-14 * (1.0 + f0.abs()) {
                    v = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || norm(&v) > bound {
                return Err(Error::NonSuperlinear {
                    x: xs.to_vec(),
                    p: p.to_vec(),
                    bound,
                });
            }
        }
        Ok((objective(&v), v))
    }

    /// Checks fibrewise strict convexity and superlinearity on sample points.
    pub fn check_tonelli(&self, samples: usize) -> Result<()> {
        let n = self.dim();
        let big = 10.0 * (1.0 + norm(&self.drift) + self.potential.sup_bound().sqrt());
        for s in 0..samples {
            let x: Vec<f64> = (0..n)
                .map(|i| wrap_coord(0.7 * s as f64 + 1.3 * i as f64))
                .collect();
            for k in 0..8 {
                let ang = k as f64 * std::f64::consts::PI / 8.0;
                let e: Vec<f64> = if n == 1 {
                    vec![if k % 2 == 0 { 1.0 } else { -1.0 }]
                } else {
                    vec![ang.cos(), ang.sin()]
                };
                let v0: Vec<f64> = e.iter().map(|ei| 0.3 * s as f64 * ei).collect();
                let d = 1e-3;
                let at = |t: f64| {
                    let v: Vec<f64> = v0.iter().zip(&e).map(|(a, b)| a + t * b).collect();
                    self.lagrangian(&x, &v)
                };
                let second = (at(d) - 2.0 * at(0.0) + at(-d)) / (d * d);
                if second <= 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "Lagrangian not strictly convex in v at x = {x:?}"
                    )));
                }
                let vbig: Vec<f64> = e.iter().map(|ei| big * ei).collect();
                if self.lagrangian(&x, &vbig) / big < 2.0 {
                    return Err(Error::NonSuperlinear {
                        x,
                        p: vbig,
                        bound: big,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `H(x, p) = ½|p|² + ⟨b, p⟩ - W(x)`, or `H(x, -p)` when `reversed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
    pub potential: Potential,
    pub drift: Vec<f64>,
    pub reversed: bool,
}

impl HamiltonianModel {
    pub fn dim(&self) -> usize {
        self.potential.dim
    }

    fn sign(&self) -> f64 {
        if self.reversed {
            -1.0
        } else {
            1.0
        }
    }

    pub fn h(&self, x: &[f64], p: &[f64]) -> f64 {
        0.5 * dot(p, p) + self.sign() * dot(&self.drift, p) - self.potential.value(x)
    }

    pub fn dh_dp(&self, _x: &[f64], p: &[f64]) -> Vec<f64> {
        let s = self.sign();
        p.iter().zip(&self.drift).map(|(pi, bi)| pi + s * bi).collect()
    }

    pub fn dh_dx(&self, x: &[f64], _p: &[f64]) -> Vec<f64> {
        self.potential.gradient(x).into_iter().map(|g| -g).collect()
    }
}

/// `H̆(x, p) = H(x, -p)`.
pub fn reversed_hamiltonian(model: &HamiltonianModel) -> HamiltonianModel {
    HamiltonianModel {
        reversed: !model.reversed,
        ..model.clone()
    }
}

/// Returns `(dx/dt, dp/dt) = (∂H/∂p, -∂H/∂x)`.
pub fn hamiltonian_vector_field(
    model: &HamiltonianModel,
    x: &[f64],
    p: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let dx = model.dh_dp(x, p);
    let dp = model.dh_dx(x, p).into_iter().map(|g| -g).collect();
    (dx, dp)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    match b.len() {
        1 => (a[0][0].abs() > 1e-300).then(|| vec![b[0] / a[0][0]]),
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            Some(vec![
                (b[0] * a[1][1] - a[0][1] * b[1]) / det,
                (a[0][0] * b[1] - a[1][0] * b[0]) / det,
            ])
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_examples() {
        assert_eq!(TorusPoint::wrap(&[TWO_PI]).unwrap().coords(), &[0.0]);
        let p = TorusPoint::wrap(&[-PI / 2.0]).unwrap();
        assert!((p.coords()[0] - 1.5 * PI).abs() < 1e-15);
        let q = TorusPoint::wrap(&[7.0 * PI, 5.0 * PI]).unwrap();
        assert!((q.coords()[0] - PI).abs() < 1e-12);
        assert!((q.coords()[1] - PI).abs() < 1e-12);
        assert!(TorusPoint::wrap(&[f64::NAN]).is_err());
        assert!(TorusPoint::wrap(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn legendre_examples() {
        let pend = LagrangianModel::pendulum(1);
        let (h, v) = pend.legendre(&TorusPoint::wrap(&[0.0]).unwrap(), &[0.0]).unwrap();
        assert!(h.abs() < 1e-14 && v[0].abs() < 1e-14);
        let (h, v) = pend.legendre(&TorusPoint::wrap(&[PI]).unwrap(), &[2.0]).unwrap();
        assert!(h.abs() < 1e-12, "{h}");
        assert!((v[0] - 2.0).abs() < 1e-12);

        let free = LagrangianModel::free(2);
        let (h, v) = free
            .legendre(&TorusPoint::wrap(&[1.0, 2.0]).unwrap(), &[1.0, 0.0])
            .unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn pendulum_hamiltonian_closed_form() {
        let h = LagrangianModel::pendulum(1).hamiltonian();
        assert!((h.h(&[PI], &[2.0])).abs() < 1e-14);
        assert!((h.h(&[PI], &[-2.0])).abs() < 1e-14);
        for k in 0..20 {
            let p = -3.0 + 0.3 * k as f64;
            assert!((h.h(&[PI], &[p]) - (p * p / 2.0 - 2.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn reversal_flips_odd_term() {
        let lag = LagrangianModel::new("drifted", Potential::zero(1), vec![0.7]).unwrap();
        let h = lag.hamiltonian();
        let hr = reversed_hamiltonian(&h);
        for k in 0..10 {
            let p = -2.0 + 0.4 * k as f64;
            assert!((h.h(&[0.3], &[p]) - (0.5 * p * p + 0.7 * p)).abs() < 1e-14);
            assert!((hr.h(&[0.3], &[p]) - (0.5 * p * p - 0.7 * p)).abs() < 1e-14);
        }
        // mechanical: even in p
        let m = LagrangianModel::pendulum(1).hamiltonian();
        let mr = reversed_hamiltonian(&m);
        assert_eq!(m.h(&[1.0], &[0.4]), mr.h(&[1.0], &[0.4]));
    }

    #[test]
    fn vector_field_examples() {
        let h = LagrangianModel::pendulum(1).hamiltonian();
        let (dx, dp) = hamiltonian_vector_field(&h, &[0.0], &[0.0]);
        assert_eq!((dx[0], dp[0]), (0.0, 0.0));
        let (dx, dp) = hamiltonian_vector_field(&h, &[PI], &[2.0]);
        assert_eq!(dx[0], 2.0);
        assert!(dp[0].abs() < 1e-15);
        // dp is exactly -dH/dx
        let x = [1.1];
        let (_, dp) = hamiltonian_vector_field(&h, &x, &[0.3]);
        assert_eq!(dp[0], -h.dh_dx(&x, &[0.3])[0]);

        let free = LagrangianModel::free(2).hamiltonian();
        let (dx, dp) = hamiltonian_vector_field(&free, &[0.4, 5.0], &[1.0, -2.0]);
        assert_eq!(dx, vec![1.0, -2.0]);
        assert_eq!(dp, vec![0.0, 0.0]);
    }

    #[test]
    fn builtins_are_tonelli() {
        for m in [
            LagrangianModel::free(1),
            LagrangianModel::pendulum(1),
            LagrangianModel::pendulum(2),
            LagrangianModel::double_well(),
            LagrangianModel::double_well_pendulum(),
        ] {
            m.check_tonelli(16).unwrap();
            m.potential.validate().unwrap();
        }
    }

    #[test]
    fn rejects_negative_potential() {
        let bad = Potential {
            dim: 1,
            offset: 0.0,
            terms: vec![TrigTerm {
                freq: vec![1],
                cos: 1.0,
                sin: 0.0,
            }],
        };
        assert!(LagrangianModel::new("bad", bad, vec![0.0]).is_err());
        let lifted = Potential {
            dim: 1,
            offset: 2.0,
            terms: vec![],
        };
        assert!(LagrangianModel::new("lifted", lifted, vec![0.0]).is_err());
    }

    #[test]
    fn potential_gradient_matches_finite_differences() {
        let m = LagrangianModel::double_well_pendulum();
        let x = [0.37, 2.1];
        let g = m.potential.gradient(&x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (m.potential.value(&xp) - m.potential.value(&xm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wrap_is_idempotent(a in -100.0f64..100.0, b in -100.0f64..100.0) {
                let p = TorusPoint::wrap(&[a, b]).unwrap();
                let q = TorusPoint::wrap(p.coords()).unwrap();
                prop_assert_eq!(&p, &q);
                for &c in p.coords() {
                    prop_assert!((0.0..TWO_PI).contains(&c));
                }
            }

            #[test]
            fn torus_distance_symmetric(a in -10.0f64..10.0, b in -10.0f64..10.0,
                                        c in -10.0f64..10.0, d in -10.0f64..10.0) {
                let p = TorusPoint::wrap(&[a, b]).unwrap();
                let q = TorusPoint::wrap(&[c, d]).unwrap();
                prop_assert!((p.distance(&q) - q.distance(&p)).abs() < 1e-12);
                for di in p.delta(&q) {
                    prop_assert!(di.abs() <= std::f64::consts::PI + 1e-12);
                }
            }

            #[test]
            fn legendre_round_trip(x in 0.0f64..std::f64::consts::TAU, y in 0.0f64..std::f64::consts::TAU,
                                   v1 in -5.0f64..5.0, v2 in -5.0f64..5.0) {
                let m = LagrangianModel::double_well_pendulum();
                let pt = TorusPoint::wrap(&[x, y]).unwrap();
                let v = [v1, v2];
                let p = m.dl_dv(pt.coords(), &v);
                let (h, arg) = m.legendre(&pt, &p).unwrap();
                prop_assert!((arg[0] - v1).abs() < 1e-7 && (arg[1] - v2).abs() < 1e-7);
                // H(x, dL/dv) + L = ⟨dL/dv, v⟩
                let ham = m.hamiltonian();
                let lhs = ham.h(pt.coords(), &p) + m.lagrangian(pt.coords(), &v);
                prop_assert!((lhs - dot(&p, &v)).abs() < 1e-9);
                prop_assert!((h - ham.h(pt.coords(), &p)).abs() < 1e-9);
            }

            #[test]
            fn reversal_is_involution(x in 0.0f64..std::f64::consts::TAU, p in -4.0f64..4.0, b in -2.0f64..2.0) {
                let lag = LagrangianModel::new("d", LagrangianModel::pendulum(1).potential, vec![b]).unwrap();
                let h = lag.hamiltonian();
                let hh = reversed_hamiltonian(&reversed_hamiltonian(&h));
                prop_assert_eq!(h.h(&[x], &[p]), hh.h(&[x], &[p]));
                prop_assert_eq!(reversed_hamiltonian(&h).h(&[x], &[p]), h.h(&[x], &[-p]));
            }
        }
    }
}
