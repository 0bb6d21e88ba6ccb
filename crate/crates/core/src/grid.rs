//! Periodic lattices over `[0, 2π)ⁿ` and grid functions on them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{periodic_delta, wrap_coord, TorusPoint, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidInput(format!("grid dimension {dim} not in {{1, 2}}")));
        }
        if n < 8 {
            return Err(Error::InvalidInput(format!("grid needs at least 8 points per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Axis indices of a flat index; the second entry is 0 in 1D.
    pub fn multi(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn flat(&self, m: [usize; 2]) -> usize {
        if self.dim == 1 {
            m[0]
        } else {
            m[0] + self.n * m[1]
        }
    }

    /// Flat index of `idx` shifted by `off` nodes, wrapping on every axis.
    pub fn shift(&self, idx: usize, off: [i64; 2]) -> usize {
        let m = self.multi(idx);
        let n = self.n as i64;
        let a = (m[0] as i64 + off[0]).rem_euclid(n) as usize;
        if self.dim == 1 {
            a
        } else {
            let b = (m[1] as i64 + off[1]).rem_euclid(n) as usize;
            a + self.n * b
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let m = self.multi(idx);
        let h = self.h();
        (0..self.dim).map(|k| m[k] as f64 * h).collect()
    }

    pub fn point(&self, idx: usize) -> TorusPoint {
        TorusPoint::wrap(&self.coords(idx)).expect("grid coordinates are finite")
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let h = self.h();
        let mut m = [0usize; 2];
        for k in 0..self.dim {
            m[k] = ((wrap_coord(x[k]) / h).round() as usize) % self.n;
        }
        self.flat(m)
    }

    /// Signed per-axis node offset from `b` to `a` along the shortest way.
    pub fn node_delta(&self, a: usize, b: usize) -> [i64; 2] {
        let ma = self.multi(a);
        let mb = self.multi(b);
        let n = self.n as i64;
        let d = |x: usize, y: usize| {
            let r = (x as i64 - y as i64).rem_euclid(n);
            if r > n / 2 {
                r - n
            } else {
                r
            }
        };
        [d(ma[0], mb[0]), if self.dim == 2 { d(ma[1], mb[1]) } else { 0 }]
    }

    /// Chebyshev distance in nodes, periodic.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let d = self.node_delta(a, b);
        d[0].unsigned_abs().max(d[1].unsigned_abs()) as usize
    }

    /// All offsets with Chebyshev norm at most `r`, excluding the origin when `punctured`.
    pub fn box_offsets(&self, r: i64, punctured: bool) -> Vec<[i64; 2]> {
        let mut out = Vec::new();
        let (lo2, hi2) = if self.dim == 2 { (-r, r) } else { (0, 0) };
        for b in lo2..=hi2 {
            for a in -r..=r {
                if punctured && a == 0 && b == 0 {
                    continue;
                }
                out.push([a, b]);
            }
        }
        out
    }

    /// Offsets with Chebyshev norm exactly `r`.
    pub fn ring_offsets(&self, r: i64) -> Vec<[i64; 2]> {
        self.box_offsets(r, true)
            .into_iter()
            .filter(|o| o[0].abs().max(o[1].abs()) == r)
            .collect()
    }

    /// Edge neighbours (4-connectivity in 2D, 2 in 1D), in a fixed order.
    pub fn neighbors4(&self, idx: usize) -> Vec<usize> {
        let offs: &[[i64; 2]] = if self.dim == 1 {
            &[[-1, 0], [1, 0]]
        } else {
            &[[0, -1], [-1, 0], [1, 0], [0, 1]]
        };
        offs.iter().map(|&o| self.shift(idx, o)).collect()
    }

    /// Neighbours including diagonals.
    pub fn neighbors8(&self, idx: usize) -> Vec<usize> {
        self.box_offsets(1, true)
            .into_iter()
            .map(|o| self.shift(idx, o))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the smallest value, lowest index on ties.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax_node(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn at_offset(&self, idx: usize, off: [i64; 2]) -> f64 {
        self.values[self.grid.shift(idx, off)]
    }

    /// Periodic linear (1D) / bilinear (2D) interpolation at arbitrary coordinates.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let h = self.grid.h();
        let n = self.grid.n();
        let locate = |xi: f64| {
            let s = wrap_coord(xi) / h;
            let i = s.floor();
            ((i as usize) % n, s - i)
        };
        let (i0, t0) = locate(x[0]);
        let i1 = (i0 + 1) % n;
        if self.grid.dim() == 1 {
            return (1.0 - t0) * self.values[i0] + t0 * self.values[i1];
        }
        let (j0, t1) = locate(x[1]);
        let j1 = (j0 + 1) % n;
        let g = &self.grid;
        let v = |a: usize, b: usize| self.values[g.flat([a, b])];
        (1.0 - t0) * (1.0 - t1) * v(i0, j0)
            + t0 * (1.0 - t1) * v(i1, j0)
            + (1.0 - t0) * t1 * v(i0, j1)
            + t0 * t1 * v(i1, j1)
    }

    /// Centred-difference gradient at a node.
    pub fn centered_gradient(&self, idx: usize) -> Vec<f64> {
        let h = self.grid.h();
        (0..self.grid.dim())
            .map(|k| {
                let mut e = [0i64; 2];
                e[k] = 1;
                let back = [-e[0], -e[1]];
                (self.at_offset(idx, e) - self.at_offset(idx, back)) / (2.0 * h)
            })
            .collect()
    }

    /// Largest forward difference quotient along the axes.
    pub fn lipschitz(&self) -> f64 {
        let h = self.grid.h();
        let mut lip = 0.0f64;
        for idx in 0..self.grid.len() {
            for k in 0..self.grid.dim() {
                let mut e = [0i64; 2];
                e[k] = 1;
                lip = lip.max((self.at_offset(idx, e) - self.values[idx]).abs() / h);
            }
        }
        lip
    }

    /// Writes the field as CSV: provenance comment, `n,N,h` header, then one
    /// value per line in row-major order with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, provenance: &str) -> Result<()> {
        writeln!(w, "# {provenance}")?;
        writeln!(w, "n,N,h")?;
        writeln!(w, "{},{},{}", self.grid.dim(), self.grid.n(), fmt17(self.grid.h()))?;
        for v in &self.values {
            writeln!(w, "{}", fmt17(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .map_while(|l| l.ok())
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let bad = |m: &str| Error::InvalidInput(format!("malformed field csv: {m}"));
        if lines.next().as_deref().map(str::trim) != Some("n,N,h") {
            return Err(bad("missing n,N,h header"));
        }
        let meta = lines.next().ok_or_else(|| bad("missing dimensions"))?;
        let parts: Vec<&str> = meta.split(',').collect();
        if parts.len() != 3 {
            return Err(bad("dimension line"));
        }
        let dim: usize = parts[0].trim().parse().map_err(|_| bad("n"))?;
        let n: usize = parts[1].trim().parse().map_err(|_| bad("N"))?;
        let grid = TorusGrid::new(dim, n)?;
        let values = lines
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }
}

/// Decimal with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Shortest displacement between two torus coordinates, per axis.
pub fn torus_delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| periodic_delta(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(3, 16).is_err());
        assert!(TorusGrid::new(1, 4).is_err());
        let g = TorusGrid::new(2, 8).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.shift(0, [-1, -1]), 63);
        assert_eq!(g.node_delta(g.flat([7, 0]), 0), [-1, 0]);
        assert_eq!(g.ring_offsets(1).len(), 8);
        assert_eq!(g.ring_offsets(2).len(), 16);
        let g1 = TorusGrid::new(1, 8).unwrap();
        assert_eq!(g1.ring_offsets(3).len(), 2);
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_periodic() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin() + (2.0 * x[1]).cos());
        for idx in [0, 5, 77, 255] {
            assert!((f.interpolate(&g.coords(idx)) - f.values[idx]).abs() < 1e-14);
        }
        let a = f.interpolate(&[0.3, 1.0]);
        let b = f.interpolate(&[0.3 + TWO_PI, 1.0 - 2.0 * TWO_PI]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].cos() * x[1] / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, "test").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# test\nn,N,h\n2,8,"));
        let back = ScalarField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
    }
}
