//! Distribution functions, quantiles and the error decomposition that turns
//! sup-norm density rates into quantile rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernel::KernelSpec;

/// Nondecreasing `F(x) = ∫_{lo}^{x} p` tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl CdfFunction {
    /// Linear interpolation between nodes; 0 left of the grid, `F(hi)` right of it.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.grid.lo() {
            return 0.0;
        }
        if x >= self.grid.hi() {
            return self.values[self.values.len() - 1];
        }
        let i = self.grid.cell_of(x);
        let t = (x - self.grid.point(i)) / self.grid.step();
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

/// Cumulative trapezoid integral of `p`, clamped to `[0, 1]`.
pub fn cdf(p: &GridFunction) -> Result<CdfFunction> {
    let lowest = p.min_value();
    if lowest < -1e-12 {
        return Err(invalid!("density takes the negative value {lowest}"));
    }
    let mut values = p.cumulative();
    let mut running = 0.0f64;
    for v in &mut values {
        running = running.max(v.clamp(0.0, 1.0));
        *v = running;
    }
    Ok(CdfFunction { grid: *p.grid(), values })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid!("quantile level must lie in (0, 1), got {tau}"));
    }
    Ok(())
}

/// Smallest `x` with `F(x) ≥ τ` under linear interpolation between nodes.
pub fn quantile(f: &CdfFunction, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let i = f.values.partition_point(|&v| v < tau);
    if i == 0 {
        return Ok(f.grid.lo());
    }
    if i == f.values.len() {
        return Ok(f.grid.hi());
    }
    let (a, b) = (f.values[i - 1], f.values[i]);
    let x = f.grid.point(i - 1);
    Ok(x + f.grid.step() * (tau - a) / (b - a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileReport {
    pub tau: f64,
    pub q_hat: f64,
    pub q0: f64,
    /// `|F(q₀) − τ|`.
    pub f_gap: f64,
    /// Smallest value of `p` between `q_hat` and `q0`.
    pub p_at_star_lb: f64,
}

fn min_between(p: &GridFunction, a: f64, b: f64) -> f64 {
    let (a, b) = (a.min(b), a.max(b));
    let g = p.grid();
    let mut lowest = p.eval(a).min(p.eval(b));
    for (i, x) in g.points().enumerate() {
        if x > a && x < b {
            lowest = lowest.min(p.left_limit(i)).min(p.right_limit(i));
        }
    }
    lowest
}

pub fn quantile_report(p: &GridFunction, p0: &GridFunction, tau: f64) -> Result<QuantileReport> {
    let f = cdf(p)?;
    let q_hat = quantile(&f, tau)?;
    let q0 = quantile(&cdf(p0)?, tau)?;
    Ok(QuantileReport { tau, q_hat, q0, f_gap: (f.eval(q0) - tau).abs(), p_at_star_lb: min_between(p, q_hat, q0) })
}

/// `|q − q₀ + (F(q₀) − τ)/p(q*)|` where `q*` solves `F(q) − F(q₀) = p(q*)(q − q₀)`.
pub fn inversion_identity_check(p: &GridFunction, p0: &GridFunction, tau: f64) -> Result<f64> {
    let f = cdf(p)?;
    let q = quantile(&f, tau)?;
    let q0 = quantile(&cdf(p0)?, tau)?;
    let gap = f.eval(q0) - tau;
    if q == q0 {
        return Ok(gap.abs());
    }
    let (a, b) = (q0.min(q), q0.max(q));
    if min_between(p, a, b) <= 0.0 {
        return Err(Error::DegenerateDensity(format!("density vanishes between {a} and {b}")));
    }
    let slope = (f.eval(q) - f.eval(q0)) / (q - q0);
    let star = mean_value_point(p, a, b, slope);
    let p_star = p.eval(star);
    if !(p_star > 0.0) {
        return Err(Error::DegenerateDensity(format!("p(q*) = {p_star} at q* = {star}")));
    }
    Ok((q - q0 + gap / p_star).abs())
}

/// A point of `[a, b]` where `p − level` changes sign, refined by bisection.
fn mean_value_point(p: &GridFunction, a: f64, b: f64, level: f64) -> f64 {
    let g = p.grid();
    let mut knots = vec![a];
    knots.extend(g.points().filter(|&x| x > a && x < b));
    knots.push(b);
    let d = |x: f64| p.eval(x) - level;
    let (mut lo, mut hi) = (a, b);
    for w in knots.windows(2) {
        if d(w[0]) == 0.0 {
            return w[0];
        }
        if d(w[0]).signum() != d(w[1]).signum() {
            (lo, hi) = (w[0], w[1]);
            break;
        }
    }
    let s_lo = d(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-14 {
            break;
        }
        if d(mid).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The three pieces of `F(q₀) − F₀(q₀)` after smoothing with `K_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    /// `∫_{−∞}^{q₀} (K_b ∗ p₀ − p₀)`.
    pub t1: f64,
    /// `∫_{−∞}^{q₀} K_b ∗ (p − p₀)`.
    pub t2: f64,
    /// `∫_{−∞}^{q₀} (p − K_b ∗ p)`.
    pub t3: f64,
    /// `F(q₀) − F₀(q₀)`.
    pub f_gap: f64,
    /// `D b^{α+1}`.
    pub t1_bound: f64,
    pub holder_norm: f64,
    pub q0: f64,
}

impl BiasDecomposition {
    pub fn telescoping_error(&self) -> f64 {
        (self.t1 + self.t2 + self.t3 - self.f_gap).abs()
    }

    pub fn t1_within_bound(&self) -> bool {
        self.t1.abs() <= self.t1_bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub alpha: f64,
    /// Half-width of the window around `q₀`.
    pub zeta: f64,
}

impl Default for BiasParams {
    fn default() -> Self {
        Self { alpha: 1.0, zeta: 0.1 }
    }
}

/// Hölder norm of `p` on `[c − ζ, c + ζ]` with finite-difference derivatives.
pub fn holder_norm(p: &GridFunction, center: f64, zeta: f64, alpha: f64) -> Result<f64> {
    let g = p.grid();
    let h = g.step();
    let idx: Vec<usize> = (0..g.len()).filter(|&i| (g.point(i) - center).abs() <= zeta + 1e-12).collect();
    let k = alpha.floor() as usize;
    if idx.len() < k + 2 {
        return Err(invalid!("window around {center} holds too few grid nodes"));
    }
    let mut deriv: Vec<f64> = idx.iter().map(|&i| p.values()[i]).collect();
    let mut norm = deriv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..k {
        deriv = deriv.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        norm += deriv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let frac = alpha - k as f64;
    let seminorm = if frac == 0.0 {
        let hi = deriv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = deriv.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    } else {
        let stride = deriv.len().div_ceil(1500);
        let sub: Vec<(f64, f64)> =
            deriv.iter().enumerate().step_by(stride).map(|(i, &v)| (i as f64 * h, v)).collect();
        sub.par_iter()
            .enumerate()
            .map(|(a, &(xa, va))| {
                sub[a + 1..].iter().map(|&(xb, vb)| (va - vb).abs() / (xb - xa).powf(frac)).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(norm + seminorm)
}

/// `T₁`, `T₂`, `T₃` by quadrature against the kernel distribution function,
/// using `∫_{−∞}^{q} K_b ∗ f = ∫ f(u) 𝒦((q − u)/b) du`.
pub fn bias_decomposition(
    p: &GridFunction,
    p0: &GridFunction,
    tau: f64,
    b: f64,
    kernel: &KernelSpec,
    params: BiasParams,
) -> Result<BiasDecomposition> {
    if !(b > 0.0) {
        return Err(invalid!("bandwidth must be positive, got {b}"));
    }
    if p.grid() != p0.grid() {
        return Err(Error::Domain("densities live on different grids".into()));
    }
    let needed = params.alpha.floor() as usize + 1;
    if kernel.vanishing_up_to() < needed {
        return Err(Error::Precondition(format!(
            "{} has vanishing moments only up to order {}, need {needed}",
            kernel.name(),
            kernel.vanishing_up_to()
        )));
    }
    let abs_moment = kernel.abs_moment(params.alpha + 1.0);
    if !abs_moment.is_finite() {
        return Err(Error::Precondition(format!("∫|x|^(α+1)|K| is infinite for {}", kernel.name())));
    }
    let f = cdf(p)?;
    let f0 = cdf(p0)?;
    let q0 = quantile(&f0, tau)?;
    let grid = p.grid();
    let kcdf: Vec<f64> = grid.points().collect::<Vec<_>>().par_iter().map(|&u| kernel.cdf((q0 - u) / b)).collect();
    let smoothed = |g: &GridFunction| -> f64 {
        g.trapezoid_weights().iter().zip(&kcdf).map(|(w, c)| w * c).sum()
    };
    let (s, s0) = (smoothed(p), smoothed(p0));
    let (fq, f0q) = (f.eval(q0), f0.eval(q0));
    let r = holder_norm(p0, q0, params.zeta, params.alpha)?;
    let fact: f64 = (1..=needed).map(|i| i as f64).product();
    let d = (r / fact + 2.0 * params.zeta.powf(-(params.alpha + 1.0))) * abs_moment;
    Ok(BiasDecomposition {
        t1: s0 - f0q,
        t2: s - s0,
        t3: fq - s,
        f_gap: fq - f0q,
        t1_bound: d * b.powf(params.alpha + 1.0),
        holder_norm: r,
        q0,
    })
}

/// `quantile(cdf(draw), τ)` for every draw.
pub fn posterior_quantiles(draws: &[GridFunction], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    draws.par_iter().map(|d| quantile(&cdf(d)?, tau)).collect()
}

/// Infimum of `p₀` on `[q₀ − ζ, q₀ + ζ]`; refuses when it falls below `r`.
pub fn positivity_guard(p0: &GridFunction, tau: f64, zeta: f64, r: f64) -> Result<f64> {
    let q0 = quantile(&cdf(p0)?, tau)?;
    let inf = min_between(p0, q0 - zeta, q0 + zeta);
    if inf < r {
        return Err(Error::Precondition(format!(
            "density infimum {inf:.4} on [{:.4}, {:.4}] is below r = {r}",
            q0 - zeta,
            q0 + zeta
        )));
    }
    Ok(inf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::grid::Jump;
    use crate::kernel::bandlimited_kernel;

    fn two_bin(grid: Grid) -> GridFunction {
        let mid = (grid.len() - 1) / 2;
        let values: Vec<f64> = (0..grid.len()).map(|i| if i <= mid { 1.5 } else { 0.5 }).collect();
        GridFunction::with_jumps(grid, values, vec![Jump { index: mid, left: 1.5, right: 0.5 }]).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let f = cdf(&GridFunction::constant(g, 1.0)).unwrap();
        for x in [0.0, 0.13, 0.5, 0.999] {
            assert!((f.eval(x) - x).abs() < 1e-12);
        }
        assert!((f.eval(1.0) - 1.0).abs() < 1e-8);
        let f = cdf(&two_bin(g)).unwrap();
        assert!((f.eval(0.5) - 0.75).abs() < 1e-12);
        assert!((quantile(&f, 0.75).unwrap() - 0.5).abs() < 1e-12);
        let neg = GridFunction::new(g, vec![-1e-6; 1025]).unwrap();
        assert!(cdf(&neg).is_err());
    }

    #[test]
    fn quantile_examples() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let f = cdf(&GridFunction::constant(g, 1.0)).unwrap();
        assert!((quantile(&f, 0.3).unwrap() - 0.3).abs() < 1e-12);
        assert!(quantile(&f, 0.0).is_err() && quantile(&f, 1.0).is_err());
        let p0 = DensitySpec::by_name("lipschitz-sine").unwrap().tabulate(&g);
        let (a, b) = (quantile(&cdf(&p0).unwrap(), 0.4).unwrap(), quantile(&cdf(&p0.clone()).unwrap(), 0.4).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let spec = DensitySpec::by_name("lipschitz-sine").unwrap();
        let g = Grid::new(0.0, 1.0, 4097).unwrap();
        let f = cdf(&spec.tabulate(&g)).unwrap();
        for x in [0.05, 0.3, 0.61, 0.93] {
            assert!((quantile(&f, f.eval(x)).unwrap() - x).abs() <= g.step());
        }
    }

    fn tilted(g: Grid, c: f64) -> GridFunction {
        g.tabulate(|x| 1.0 + c * (x - 0.5)).unwrap()
    }

    #[test]
    fn inversion_identity() {
        let g = Grid::new(0.0, 1.0, 4097).unwrap();
        let p0 = GridFunction::constant(g, 1.0);
        assert_eq!(inversion_identity_check(&p0, &p0, 0.3).unwrap(), 0.0);
        let r = inversion_identity_check(&tilted(g, 0.2), &p0, 0.3).unwrap();
        assert!(r < 1e-6, "{r}");
        let fine = Grid::new(0.0, 1.0, 8193).unwrap();
        let r2 = inversion_identity_check(&tilted(fine, 0.2), &GridFunction::constant(fine, 1.0), 0.3).unwrap();
        assert!((r - r2).abs() < 1e-6);
        let hole = g.tabulate(|x| if (0.25..=0.35).contains(&x) { 0.0 } else { 1.0 / 0.9 }).unwrap();
        assert!(matches!(inversion_identity_check(&hole, &p0, 0.3), Err(Error::DegenerateDensity(_))));
    }

    #[test]
    fn bias_decomposition_properties() {
        let spec = DensitySpec::by_name("lipschitz-sine").unwrap();
        let g = Grid::new(0.0, 1.0, 4097).unwrap();
        let p0 = spec.tabulate(&g);
        let k = bandlimited_kernel(1.0);
        let params = BiasParams::default();
        let a = bias_decomposition(&tilted(g, 0.3), &p0, 0.5, 0.1, &k, params).unwrap();
        let b = bias_decomposition(&tilted(g, -0.1), &p0, 0.5, 0.1, &k, params).unwrap();
        assert_eq!(a.t1, b.t1);
        assert!(a.telescoping_error() < 1e-8 && b.telescoping_error() < 1e-8);
        assert!(a.t1_within_bound());
        let t1: Vec<f64> =
            [0.2, 0.1, 0.05].iter().map(|&b| bias_decomposition(&p0, &p0, 0.5, b, &k, params).unwrap().t1.abs()).collect();
        let slope = (t1[0] / t1[2]).ln() / 4f64.ln();
        assert!(slope >= 1.8, "{t1:?}");
        let gauss = bias_decomposition(&p0, &p0, 0.5, 0.1, &KernelSpec::gaussian(), params);
        assert!(matches!(gauss, Err(Error::Precondition(_))));
    }

    #[test]
    fn posterior_quantiles_of_truth() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let p0 = DensitySpec::by_name("lipschitz-sine").unwrap().tabulate(&g);
        let q0 = quantile(&cdf(&p0).unwrap(), 0.5).unwrap();
        let qs = posterior_quantiles(&vec![p0.clone(); 7], 0.5).unwrap();
        assert_eq!(qs.len(), 7);
        assert!(qs.iter().all(|&q| q == q0));
    }

    #[test]
    fn guard_refuses_thin_windows() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let p0 = DensitySpec::by_name("lipschitz-sine").unwrap().tabulate(&g);
        let inf = positivity_guard(&p0, 0.5, 0.1, 0.2).unwrap();
        assert!(inf > 0.5);
        assert!(matches!(positivity_guard(&p0, 0.5, 0.1, 1.3), Err(Error::Precondition(_))));
    }

    #[test]
    fn holder_norm_of_line() {
        let g = Grid::new(0.0, 1.0, 1025).unwrap();
        let p = g.tabulate(|x| 1.0 + 0.5 * x).unwrap();
        // sup |p| + sup |p'| + osc p' on [0.4, 0.6]
        let r = holder_norm(&p, 0.5, 0.1, 1.0).unwrap();
        assert!((r - 1.8).abs() < 1e-3, "{r}");
        let r = holder_norm(&p, 0.5, 0.1, 0.5).unwrap();
        assert!((r - (1.3 + 0.5 * 0.2f64.sqrt())).abs() < 1e-3, "{r}");
    }
}
