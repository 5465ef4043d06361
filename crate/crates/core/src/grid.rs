//! Uniform grids and tabulated functions.
//!
//! A [`GridFunction`] stores one value per grid node plus optional one-sided
//! limits at nodes where the function jumps. All integrals use the composite
//! trapezoid rule on each cell `[x_i, x_{i+1}]` with the right limit at `x_i`
//! and the left limit at `x_{i+1}`, so piecewise-constant functions whose
//! breakpoints sit on grid nodes are integrated exactly and their sup-norm
//! sees both sides of every jump.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of grid points, `2^14 + 1`.
pub const DEFAULT_POINTS: usize = (1 << 14) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    m: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(invalid!("grid needs finite lo < hi, got [{lo}, {hi}]"));
        }
        if m < 2 {
            return Err(invalid!("grid needs at least 2 points, got {m}"));
        }
        Ok(Self { lo, hi, m })
    }

    /// `[0, 1]` with the default resolution.
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0, m: DEFAULT_POINTS }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.m {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.m).map(move |i| self.point(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Index of the cell `[x_i, x_{i+1}]` holding `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.step()).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.m - 2)
        }
    }

    /// Tabulates `f` on the grid.
    pub fn tabulate(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        GridFunction::new(*self, self.points().map(f).collect())
    }
}

/// Which norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Sup,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Sup => "sup",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "sup" | "inf" | "linf" => Ok(Norm::Sup),
            other => Err(invalid!("unknown norm {other:?}")),
        }
    }
}

/// One-sided limits at a grid node where the function is discontinuous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub index: usize,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    jumps: Vec<Jump>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::with_jumps(grid, values, Vec::new())
    }

    /// Builds a function with registered discontinuities. Jumps are sorted by
    /// node index; duplicate indices are rejected.
    pub fn with_jumps(grid: Grid, values: Vec<f64>, mut jumps: Vec<Jump>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid!(
                "expected {} values for the grid, got {}",
                grid.len(),
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("non-finite value at node {i}"));
        }
        jumps.sort_by_key(|j| j.index);
        for w in jumps.windows(2) {
            if w[0].index == w[1].index {
                return Err(invalid!("duplicate jump at node {}", w[0].index));
            }
        }
        for j in &jumps {
            if j.index >= grid.len() || !j.left.is_finite() || !j.right.is_finite() {
                return Err(invalid!("bad jump at node {}", j.index));
            }
        }
        Ok(Self { grid, values, jumps })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], jumps: Vec::new() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    fn jump_at(&self, i: usize) -> Option<&Jump> {
        self.jumps.binary_search_by_key(&i, |j| j.index).ok().map(|k| &self.jumps[k])
    }

    pub fn left_limit(&self, i: usize) -> f64 {
        self.jump_at(i).map_or(self.values[i], |j| j.left)
    }

    pub fn right_limit(&self, i: usize) -> f64 {
        self.jump_at(i).map_or(self.values[i], |j| j.right)
    }

    /// Right limits at every node.
    fn right_limits(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for j in &self.jumps {
            out[j.index] = j.right;
        }
        out
    }

    fn left_limits(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for j in &self.jumps {
            out[j.index] = j.left;
        }
        out
    }

    /// Cells as `(x_i, right limit at x_i, left limit at x_{i+1})`.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let mut next_jump = 0usize;
        let jumps = &self.jumps;
        let values = &self.values;
        let grid = self.grid;
        (0..grid.len() - 1).map(move |i| {
            while next_jump < jumps.len() && jumps[next_jump].index < i {
                next_jump += 1;
            }
            let mut a = values[i];
            let mut b = values[i + 1];
            let mut k = next_jump;
            if k < jumps.len() && jumps[k].index == i {
                a = jumps[k].right;
                k += 1;
            }
            if k < jumps.len() && jumps[k].index == i + 1 {
                b = jumps[k].left;
            }
            (grid.point(i), a, b)
        })
    }

    /// Piecewise-linear evaluation between the one-sided node limits. At a
    /// node the stored value is returned. Outside the grid the function is 0.
    pub fn eval(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let h = self.grid.step();
        let i = self.grid.cell_of(x);
        let xi = self.grid.point(i);
        if x == xi {
            return self.values[i];
        }
        if x == self.grid.point(i + 1) {
            return self.values[i + 1];
        }
        let a = self.right_limit(i);
        let b = self.left_limit(i + 1);
        a + (b - a) * (x - xi) / h
    }

    fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Domain("functions live on different grids".into()));
        }
        Ok(())
    }

    /// `a * self + b * other`, keeping the union of both jump sets.
    pub fn lin_comb(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let mut idx: Vec<usize> = self
            .jumps
            .iter()
            .chain(&other.jumps)
            .map(|j| j.index)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let jumps = idx
            .into_iter()
            .map(|i| Jump {
                index: i,
                left: a * self.left_limit(i) + b * other.left_limit(i),
                right: a * self.right_limit(i) + b * other.right_limit(i),
            })
            .collect();
        GridFunction::with_jumps(self.grid, values, jumps)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump { index: j.index, left: c * j.left, right: c * j.right })
                .collect(),
        }
    }

    fn trapezoid_with(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let h = self.grid.step();
        self.cells().map(|(x, a, b)| 0.5 * h * (g(x, a) + g(x + h, b))).sum()
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.trapezoid_with(|_, v| v)
    }

    /// Running integral from `lo` to each node.
    pub fn cumulative(&self) -> Vec<f64> {
        let h = self.grid.step();
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for (_, a, b) in self.cells() {
            acc += 0.5 * h * (a + b);
            out.push(acc);
        }
        out
    }

    /// Largest absolute value, including both sides of every jump.
    pub fn max_abs(&self) -> f64 {
        let nodes = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.jumps
            .iter()
            .fold(nodes, |m, j| m.max(j.left.abs()).max(j.right.abs()))
    }

    /// Largest value, including both sides of every jump.
    pub fn max_value(&self) -> f64 {
        let nodes = self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        self.jumps.iter().fold(nodes, |m, j| m.max(j.left).max(j.right))
    }

    pub fn min_value(&self) -> f64 {
        let nodes = self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        self.jumps.iter().fold(nodes, |m, j| m.min(j.left).min(j.right))
    }

    pub fn norm(&self, which: Norm) -> f64 {
        match which {
            Norm::L1 => self.trapezoid_with(|_, v| v.abs()),
            Norm::L2 => self.trapezoid_with(|_, v| v * v).sqrt(),
            Norm::Sup => self.max_abs(),
        }
    }

    /// `L^s` norm for finite `s >= 1`.
    pub fn lp_norm(&self, s: f64) -> Result<f64> {
        if !(s >= 1.0 && s.is_finite()) {
            return Err(invalid!("L^s norm needs finite s >= 1, got {s}"));
        }
        Ok(self.trapezoid_with(|_, v| v.abs().powf(s)).powf(1.0 / s))
    }

    /// `∫ |f(x)| (1 + |x|)^s dx`.
    pub fn weighted_l1_norm(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(invalid!("weight exponent must be >= 0, got {s}"));
        }
        Ok(self.trapezoid_with(|x, v| v.abs() * (1.0 + x.abs()).powf(s)))
    }

    /// True when values are nonnegative and the integral is 1 within `tol`.
    pub fn is_density(&self, tol: f64) -> bool {
        self.min_value() >= 0.0 && (self.integral() - 1.0).abs() <= tol
    }

    /// Rescales so that the trapezoid integral is exactly one.
    pub fn normalized(&self) -> Result<GridFunction> {
        let z = self.integral();
        if !(z > 0.0) {
            return Err(Error::DegenerateDensity(format!("integral {z} is not positive")));
        }
        Ok(self.scale(1.0 / z))
    }

    /// Pointwise map applied to values and both sides of each jump.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        let jumps = self
            .jumps
            .iter()
            .map(|j| Jump { index: j.index, left: f(j.left), right: f(j.right) })
            .collect();
        GridFunction::with_jumps(self.grid, values, jumps)
    }

    /// Trapezoid weight times the averaged one-sided values at each node.
    pub(crate) fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.grid.step();
        let right = self.right_limits();
        let left = self.left_limits();
        let m = self.grid.len();
        (0..m)
            .map(|i| {
                if i == 0 {
                    0.5 * h * right[0]
                } else if i + 1 == m {
                    0.5 * h * left[m - 1]
                } else {
                    0.5 * h * (left[i] + right[i])
                }
            })
            .collect()
    }
}

/// Whether `‖f − g‖_s ≤ max{‖f − g‖_1, ‖f − g‖_∞}` (up to `1e-9`) for `1 < s < ∞`.
pub fn interpolation_check(f: &GridFunction, g: &GridFunction, s: f64) -> Result<bool> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(invalid!("interpolation check needs 1 < s < ∞, got {s}"));
    }
    let d = f.sub(g)?;
    let ls = d.lp_norm(s)?;
    Ok(ls <= d.norm(Norm::L1).max(d.norm(Norm::Sup)) + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Grid {
        Grid::unit()
    }

    #[test]
    fn constant_norms() {
        let f = GridFunction::constant(unit(), 1.0);
        assert!((f.norm(Norm::L1) - 1.0).abs() < 1e-12);
        assert!((f.norm(Norm::Sup) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_norms() {
        let f = unit().tabulate(|x| x).unwrap();
        assert!((f.norm(Norm::L1) - 0.5).abs() < 1e-12);
        assert!((f.norm(Norm::L2) - 1.0 / 3f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn weighted_norm_of_box() {
        let f = GridFunction::constant(unit(), 1.0);
        assert!((f.weighted_l1_norm(2.0).unwrap() - 7.0 / 3.0).abs() < 1e-8);
        assert!((f.weighted_l1_norm(0.0).unwrap() - f.norm(Norm::L1)).abs() < 1e-15);
        assert!(f.weighted_l1_norm(-0.5).is_err());
    }

    #[test]
    fn step_function_integrates_exactly() {
        let g = Grid::new(0.0, 1.0, 9).unwrap();
        let values = vec![1.5, 1.5, 1.5, 1.5, 1.5, 0.5, 0.5, 0.5, 0.5];
        let f = GridFunction::with_jumps(g, values, vec![Jump { index: 4, left: 1.5, right: 0.5 }])
            .unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-15);
        let c = f.cumulative();
        assert!((c[4] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sup_sees_both_sides_of_jump() {
        let g = Grid::new(0.0, 1.0, 3).unwrap();
        let f = GridFunction::with_jumps(g, vec![0.0, 0.0, 0.0], vec![Jump {
            index: 1,
            left: 0.0,
            right: -3.0,
        }])
        .unwrap();
        assert_eq!(f.norm(Norm::Sup), 3.0);
    }

    #[test]
    fn interpolation_constant_difference_is_equality() {
        let f = GridFunction::constant(unit(), 2.5);
        let g = GridFunction::constant(unit(), 1.0);
        for s in [1.5, 2.0, 4.0] {
            assert!(interpolation_check(&f, &g, s).unwrap());
            let d = f.sub(&g).unwrap();
            assert!((d.lp_norm(s).unwrap() - 1.5).abs() < 1e-12);
        }
        assert!(interpolation_check(&f, &f, 2.0).unwrap());
    }

    #[test]
    fn interpolation_rejects_bad_exponent() {
        let f = GridFunction::constant(unit(), 1.0);
        assert!(interpolation_check(&f, &f, 1.0).is_err());
        assert!(interpolation_check(&f, &f, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 0.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(GridFunction::new(Grid::new(0.0, 1.0, 3).unwrap(), vec![1.0]).is_err());
    }

    #[test]
    fn eval_interpolates() {
        let f = Grid::new(0.0, 1.0, 11).unwrap().tabulate(|x| 2.0 * x).unwrap();
        assert!((f.eval(0.35) - 0.7).abs() < 1e-12);
        assert_eq!(f.eval(1.5), 0.0);
    }
}
