//! Approximating operators `K_j`: dilated convolution kernels and the Haar
//! projection on `[0, 1]`.

use std::fmt;

use crate::density::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction, Jump, Norm};
pub use crate::kernel::{bandlimited_kernel, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Convolution(KernelSpec),
    HaarProjection,
}

/// `K_j(x, y) = 2^j K(2^j x, 2^j y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOperator {
    kind: OperatorKind,
    j: u32,
}

impl fmt::Display for ApproxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            OperatorKind::Convolution(k) => write!(f, "{}@j={}", k.name(), self.j),
            OperatorKind::HaarProjection => write!(f, "haar@j={}", self.j),
        }
    }
}

/// Index of the dyadic cell containing `x ∈ [0, 1]` when cells are closed on
/// the right and the first cell also contains 0.
pub fn dyadic_cell(x: f64, j: u32) -> usize {
    let cells = 1usize << j;
    let k = (x * cells as f64).ceil() as isize - 1;
    k.clamp(0, cells as isize - 1) as usize
}

/// Nodes per dyadic cell of level `j` on a `[0, 1]` grid.
pub fn nodes_per_cell(grid: &Grid, j: u32) -> Result<usize> {
    if grid.lo() != 0.0 || grid.hi() != 1.0 {
        return Err(Error::Domain(format!(
            "dyadic cells need a grid on [0, 1], got [{}, {}]",
            grid.lo(),
            grid.hi()
        )));
    }
    let cells = 1usize << j;
    let intervals = grid.len() - 1;
    if intervals % cells != 0 {
        return Err(Error::Domain(format!("grid with {intervals} intervals cannot resolve {cells} dyadic cells")));
    }
    Ok(intervals / cells)
}

/// Piecewise-constant function on `[0, 1]` with value `levels[k]` on the
/// `k`-th dyadic cell; `levels.len()` must be a power of two.
pub fn dyadic_step_function(grid: &Grid, levels: &[f64]) -> Result<GridFunction> {
    if !levels.len().is_power_of_two() {
        return Err(invalid!("number of dyadic levels must be a power of two, got {}", levels.len()));
    }
    let q = nodes_per_cell(grid, levels.len().trailing_zeros())?;
    let values = (0..grid.len()).map(|i| levels[if i == 0 { 0 } else { (i - 1) / q }]).collect();
    let jumps = (1..levels.len())
        .filter(|&k| levels[k] != levels[k - 1])
        .map(|k| Jump { index: k * q, left: levels[k - 1], right: levels[k] })
        .collect();
    GridFunction::with_jumps(*grid, values, jumps)
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("Haar projection is defined on [0, 1], got {x}")))
    }
}

impl ApproxOperator {
    pub fn convolution(kernel: KernelSpec, j: u32) -> Self {
        Self { kind: OperatorKind::Convolution(kernel), j }
    }

    pub fn haar(j: u32) -> Self {
        Self { kind: OperatorKind::HaarProjection, j }
    }

    /// Parses `haar` or a kernel name (see [`KernelSpec`]'s `FromStr`).
    pub fn by_name(name: &str, j: u32) -> Result<Self> {
        if name == "haar" {
            Ok(Self::haar(j))
        } else {
            Ok(Self::convolution(name.parse()?, j))
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        match &self.kind {
            OperatorKind::Convolution(k) => Some(k),
            OperatorKind::HaarProjection => None,
        }
    }

    fn scale(&self) -> f64 {
        (self.j as f64).exp2()
    }

    pub fn eval_kj(&self, x: f64, y: f64) -> Result<f64> {
        let s = self.scale();
        match &self.kind {
            OperatorKind::Convolution(k) => Ok(s * k.evaluate(s * (x - y))),
            OperatorKind::HaarProjection => {
                check_unit(x)?;
                check_unit(y)?;
                Ok(if dyadic_cell(x, self.j) == dyadic_cell(y, self.j) { s } else { 0.0 })
            }
        }
    }

    /// `p̂_n(j)(x) = n^{-1} Σ K_j(x, X_i)` tabulated on `grid`.
    pub fn estimator(&self, samples: &SampleSet, grid: &Grid) -> Result<GridFunction> {
        let n = samples.len();
        if n == 0 {
            return Err(invalid!("estimator needs at least one observation"));
        }
        match &self.kind {
            OperatorKind::HaarProjection => {
                let cells = 1usize << self.j;
                let mut counts = vec![0usize; cells];
                for &x in &samples.values {
                    check_unit(x)?;
                    counts[dyadic_cell(x, self.j)] += 1;
                }
                let s = self.scale();
                let levels: Vec<f64> = counts.iter().map(|&c| s * c as f64 / n as f64).collect();
                dyadic_step_function(grid, &levels)
            }
            OperatorKind::Convolution(k) => {
                let s = self.scale();
                let m = grid.len();
                let h = grid.step();
                let mut acc = vec![0.0; m];
                let window = k.support_radius().map(|r| r / s);
                for &x in &samples.values {
                    let (i0, i1) = match window {
                        Some(w) => {
                            let a = ((x - w - grid.lo()) / h).floor().max(0.0) as usize;
                            let b = (((x + w - grid.lo()) / h).ceil().max(0.0) as usize).min(m - 1);
                            (a, b)
                        }
                        None => (0, m - 1),
                    };
                    if i0 > i1 {
                        continue;
                    }
                    for (i, a) in acc.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                        *a += s * k.evaluate(s * (grid.point(i) - x));
                    }
                }
                let inv_n = 1.0 / n as f64;
                acc.iter_mut().for_each(|v| *v *= inv_n);
                GridFunction::new(*grid, acc)
            }
        }
    }

    /// `K_j(p)(x) = ∫ K_j(x, y) p(y) dy` on the grid of `p`.
    pub fn smooth(&self, p: &GridFunction) -> Result<GridFunction> {
        match &self.kind {
            OperatorKind::Convolution(k) => k.convolve(p, 1.0 / self.scale()),
            OperatorKind::HaarProjection => {
                let q = nodes_per_cell(p.grid(), self.j)?;
                let h = p.grid().step();
                let cells = 1usize << self.j;
                let mut levels = vec![0.0; cells];
                for (i, (_, a, b)) in p.cells().enumerate() {
                    levels[i / q] += 0.5 * h * (a + b);
                }
                let s = self.scale();
                levels.iter_mut().for_each(|v| *v *= s);
                dyadic_step_function(p.grid(), &levels)
            }
        }
    }

    /// `‖K_j(p) − p‖` in the requested norm.
    pub fn bias(&self, p: &GridFunction, which: Norm) -> Result<f64> {
        Ok(self.smooth(p)?.sub(p)?.norm(which))
    }

    pub fn dominating(&self) -> DominatingKernel {
        match &self.kind {
            OperatorKind::Convolution(k) => DominatingKernel::Abs(k.clone()),
            OperatorKind::HaarProjection => DominatingKernel::UnitBox,
        }
    }
}

/// A bounded integrable `Φ ≥ 0` with `|K(x, y)| ≤ Φ(x − y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DominatingKernel {
    Abs(KernelSpec),
    /// `1{|d| ≤ 1}`.
    UnitBox,
}

impl DominatingKernel {
    pub fn phi(&self, d: f64) -> f64 {
        match self {
            Self::Abs(k) => k.evaluate(d).abs(),
            Self::UnitBox => {
                if d.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `‖Φ‖_1`.
    pub fn l1_norm(&self) -> f64 {
        match self {
            Self::Abs(k) => k.l1_norm(),
            Self::UnitBox => 1.0,
        }
    }

    /// `‖Φ²‖_{L¹(μ_s)} = ∫ Φ(x)² (1 + |x|)^s dx`.
    pub fn squared_weighted_l1(&self, s: f64) -> f64 {
        match self {
            Self::UnitBox => 2.0 * ((2f64).powf(s + 1.0) - 1.0) / (s + 1.0),
            Self::Abs(k) => {
                let reach = k.support_radius().unwrap_or(400.0);
                let f = |x: f64| k.evaluate(x).powi(2) * (1.0 + x).powf(s);
                2.0 * crate::kernel::simpson(f, 0.0, reach, 200_000)
            }
        }
    }

    /// Whether `|K_j(x, y)| ≤ 2^j Φ(2^j (x − y))` on `pairs` pseudo-random
    /// points of `[0, 1]²`.
    pub fn dominates(&self, op: &ApproxOperator, pairs: usize, seed: u64) -> Result<bool> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s = op.scale();
        for _ in 0..pairs {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            if op.eval_kj(x, y)?.abs() > s * self.phi(s * (x - y)) + 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn haar_kernel_values() {
        let op = ApproxOperator::haar(0);
        assert_eq!(op.eval_kj(0.0, 1.0).unwrap(), 1.0);
        let op = ApproxOperator::haar(2);
        assert_eq!(op.eval_kj(0.1, 0.2).unwrap(), 4.0);
        assert_eq!(op.eval_kj(0.1, 0.3).unwrap(), 0.0);
        assert_eq!(op.eval_kj(0.25, 0.0).unwrap(), 4.0);
        assert!(matches!(op.eval_kj(1.5, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_kernel_value() {
        let op = ApproxOperator::convolution(KernelSpec::gaussian(), 3);
        let v = op.eval_kj(0.4, 0.4).unwrap();
        assert!((v - 8.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn haar_estimator_from_counts() {
        let grid = Grid::unit();
        let op = ApproxOperator::haar(2);
        // counts (1, 3, 2, 2)
        let xs = vec![0.1, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.95];
        let est = op.estimator(&SampleSet::from_values(xs, "test"), &grid).unwrap();
        for (x, want) in [(0.1, 0.5), (0.4, 1.5), (0.6, 1.0), (0.9, 1.0)] {
            assert_eq!(est.eval(x), want);
        }
        assert!((est.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_estimator_one_cell() {
        let op = ApproxOperator::haar(1);
        let est = op.estimator(&SampleSet::from_values(vec![0.1, 0.2, 0.5], "t"), &Grid::unit()).unwrap();
        assert_eq!(est.eval(0.5), 2.0);
        assert_eq!(est.eval(0.75), 0.0);
        assert_eq!(est.norm(Norm::Sup), 2.0);
    }

    #[test]
    fn single_observation_matches_kernel() {
        let grid = Grid::new(0.0, 1.0, 1025).unwrap();
        let x1 = 0.37;
        for op in [ApproxOperator::haar(3), ApproxOperator::convolution(KernelSpec::laplace(), 4)] {
            let est = op.estimator(&SampleSet::from_values(vec![x1], "t"), &grid).unwrap();
            for (i, x) in grid.points().enumerate() {
                assert_eq!(est.values()[i], op.eval_kj(x, x1).unwrap(), "{op} at {x}");
            }
        }
    }

    #[test]
    fn haar_smooth_cell_means() {
        let grid = Grid::unit();
        let op = ApproxOperator::haar(1);
        let p = grid.tabulate(|x| 2.0 * x).unwrap();
        let s = op.smooth(&p).unwrap();
        assert!((s.eval(0.25) - 0.5).abs() < 1e-12);
        assert!((s.eval(0.75) - 1.5).abs() < 1e-12);
        let one = GridFunction::constant(grid, 1.0);
        for j in 0..6 {
            assert!(ApproxOperator::haar(j).bias(&one, Norm::Sup).unwrap() < 1e-12);
        }
    }

    #[test]
    fn haar_is_idempotent() {
        let grid = Grid::unit();
        let p = grid.tabulate(|x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
        let op = ApproxOperator::haar(4);
        let once = op.smooth(&p).unwrap();
        let twice = op.smooth(&once).unwrap();
        assert!(twice.sub(&once).unwrap().norm(Norm::Sup) < 1e-10);
    }

    #[test]
    fn haar_bias_below_lipschitz_bound() {
        let grid = Grid::unit();
        let p = grid.tabulate(|x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
        let lip = PI;
        for j in 3..=10 {
            let b = ApproxOperator::haar(j).bias(&p, Norm::Sup).unwrap();
            assert!(b <= lip * (-(j as f64)).exp2(), "j={j}: {b}");
        }
    }

    #[test]
    fn gaussian_smoothing_of_laplace_converges() {
        let grid = Grid::new(-30.0, 30.0, 1 << 15 | 1).unwrap();
        let p = grid.tabulate(|x| 0.5 * (-x.abs()).exp()).unwrap();
        let mut prev = f64::INFINITY;
        for j in 2..=8 {
            let op = ApproxOperator::convolution(KernelSpec::gaussian(), j);
            let s = op.smooth(&p).unwrap();
            assert!((s.integral() - 1.0).abs() < 1e-6);
            let b = s.sub(&p).unwrap().norm(Norm::L2);
            assert!(b < prev, "j={j}: {b} !< {prev}");
            prev = b;
        }
    }

    #[test]
    fn bandlimited_reproduces_bandlimited_density() {
        // (sin(x/4)/(x/4))^4 has spectrum inside [−1, 1]
        let raw = |x: f64| {
            let u = x / 4.0;
            if u.abs() < 1e-8 {
                1.0
            } else {
                (u.sin() / u).powi(4)
            }
        };
        let grid = Grid::new(-600.0, 600.0, 1 << 17 | 1).unwrap();
        let p = grid.tabulate(raw).unwrap().normalized().unwrap();
        let op = ApproxOperator::convolution(bandlimited_kernel(2.0), 2);
        let b = op.bias(&p, Norm::Sup).unwrap();
        assert!(b < 1e-6, "{b}");
    }

    #[test]
    fn dominating_kernels() {
        let g = ApproxOperator::convolution(KernelSpec::gaussian(), 2).dominating();
        assert_eq!(g.l1_norm(), 1.0);
        let h = ApproxOperator::haar(3);
        assert_eq!(h.dominating().l1_norm(), 1.0);
        assert!(h.dominating().dominates(&h, 10_000, 7).unwrap());
        let b = ApproxOperator::convolution(bandlimited_kernel(1.0), 2);
        assert!(b.dominating().l1_norm() > 1.0);
        assert!(b.dominating().dominates(&b, 10_000, 7).unwrap());
    }

    #[test]
    fn haar_rejects_misaligned_grid() {
        let grid = Grid::new(0.0, 1.0, 100).unwrap();
        let p = GridFunction::constant(grid, 1.0);
        assert!(matches!(ApproxOperator::haar(3).smooth(&p), Err(Error::Domain(_))));
    }
}
