//! Characteristic functions, algebraic decay fits, the integral
//! `I_β[h̃] = ∫ |1 − h̃(t)|² |t|^{−2β} dt` and the small-bandwidth limit of
//! `‖p − p ∗ h_δ‖_2²`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{DensityShape, DensitySpec};
use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;
use crate::kernel::KernelSpec;

/// Frequency-domain view `f̃(t) = ∫ f(x) e^{itx} dx` of a density or kernel.
#[derive(Debug, Clone)]
pub enum CharFunction {
    /// Laplace mixture `Σ w_k e^{itθ_k} / (1 + s²t²)`.
    Laplace { atoms: Vec<f64>, weights: Vec<f64>, scale: f64 },
    /// `1 / (1 + t²)²`.
    LaplaceConv2,
    Gaussian { mean: f64, sd: f64 },
    Kernel(KernelSpec),
    /// Trapezoid transform of a tabulated function.
    Tabulated(GridFunction),
    /// `B |t|^{−β}`, for checking the decay fit.
    PowerLaw { beta: f64, b: f64 },
}

impl CharFunction {
    /// Closed form when the catalog shape has one, otherwise a tabulated
    /// transform on the default grid.
    pub fn from_density(spec: &DensitySpec) -> Self {
        match &spec.shape {
            DensityShape::Laplace { location, scale } => {
                Self::Laplace { atoms: vec![*location], weights: vec![1.0], scale: *scale }
            }
            DensityShape::LaplaceMixture { atoms, weights } => {
                Self::Laplace { atoms: atoms.clone(), weights: weights.clone(), scale: 1.0 }
            }
            DensityShape::LaplaceConv2 => Self::LaplaceConv2,
            DensityShape::Gaussian { mean, sd } => Self::Gaussian { mean: *mean, sd: *sd },
            _ => Self::Tabulated(spec.tabulate(&spec.default_grid())),
        }
    }

    pub fn from_kernel(k: &KernelSpec) -> Self {
        Self::Kernel(k.clone())
    }

    pub fn tabulated(f: GridFunction) -> Self {
        Self::Tabulated(f)
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self, Self::Tabulated(_))
    }

    pub fn evaluate(&self, t: f64) -> Complex64 {
        match self {
            Self::Laplace { atoms, weights, scale } => {
                let phase: Complex64 =
                    atoms.iter().zip(weights).map(|(&a, &w)| w * Complex64::from_polar(1.0, t * a)).sum();
                phase / (1.0 + scale * scale * t * t)
            }
            Self::LaplaceConv2 => Complex64::new(1.0 / (1.0 + t * t).powi(2), 0.0),
            Self::Gaussian { mean, sd } => Complex64::from_polar((-0.5 * sd * sd * t * t).exp(), t * mean),
            Self::Kernel(k) => Complex64::new(k.fourier(t), 0.0),
            Self::Tabulated(f) => {
                let h = f.grid().step();
                f.cells()
                    .map(|(x, a, b)| {
                        0.5 * h * (a * Complex64::from_polar(1.0, t * x) + b * Complex64::from_polar(1.0, t * (x + h)))
                    })
                    .sum()
            }
            Self::PowerLaw { beta, b } => Complex64::new(b * t.abs().powf(-beta), 0.0),
        }
    }

    /// `ln |f̃(t)|`, exact for closed forms even where `f̃` underflows.
    pub fn ln_abs(&self, t: f64) -> f64 {
        match self {
            Self::Gaussian { sd, .. } => -0.5 * sd * sd * t * t,
            Self::LaplaceConv2 => -2.0 * (1.0 + t * t).ln(),
            Self::PowerLaw { beta, b } => b.ln() - beta * t.abs().ln(),
            Self::Kernel(k) if matches!(k.shape(), crate::kernel::KernelShape::Gaussian) => -0.5 * t * t,
            _ => self.evaluate(t).norm().ln(),
        }
    }

    /// `1 − f̃(t)` without cancellation near the origin.
    pub fn one_minus(&self, t: f64) -> Complex64 {
        match self {
            Self::Kernel(k) => Complex64::new(k.one_minus_fourier(t), 0.0),
            Self::Gaussian { mean, sd } if *mean == 0.0 => Complex64::new(-(-0.5 * sd * sd * t * t).exp_m1(), 0.0),
            Self::LaplaceConv2 => {
                let u = t * t;
                Complex64::new(u * (2.0 + u) / (1.0 + u).powi(2), 0.0)
            }
            Self::Laplace { atoms, scale, .. } if atoms.len() == 1 && atoms[0] == 0.0 => {
                let u = scale * scale * t * t;
                Complex64::new(u / (1.0 + u), 0.0)
            }
            _ => Complex64::new(1.0, 0.0) - self.evaluate(t),
        }
    }
}

/// Fitted `|f̃(t)| ≈ B |t|^{−β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub beta: f64,
    pub b: f64,
    pub fit_range: (f64, f64),
    /// Root mean square residual of the log-log fit.
    pub residual: f64,
}

/// Least squares `y = a + b x`; returns `(a, b, rms residual, stderr of b)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let rms = (sse / n).sqrt();
    let stderr = if xs.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (intercept, slope, rms, stderr)
}

/// Fits `ln|f̃(t)| = ln B − β ln|t|` over the given frequencies.
pub fn estimate_decay(cf: &CharFunction, t_grid: &[f64]) -> Result<DecayEstimate> {
    if t_grid.len() < 2 {
        return Err(invalid!("need at least two frequencies"));
    }
    let mut xs = Vec::with_capacity(t_grid.len());
    let mut ys = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let y = cf.ln_abs(t);
        if !y.is_finite() {
            return Err(Error::Fit(format!("characteristic function vanishes at t = {t}")));
        }
        xs.push(t.abs().ln());
        ys.push(y);
    }
    let (intercept, slope, residual, _) = linear_fit(&xs, &ys);
    let lo = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayEstimate { beta: -slope, b: intercept.exp(), fit_range: (lo, hi), residual })
}

/// `count` log-spaced points on `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Composite Simpson in `u = ln t` on `[lo, hi]` with `per_decade` panels
/// per factor of ten.
pub fn log_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, per_decade: usize) -> f64 {
    let decades = (hi / lo).log10();
    let n = (((decades * per_decade as f64).ceil() as usize).max(2) + 1) & !1;
    let (a, b) = (lo.ln(), hi.ln());
    let du = (b - a) / n as f64;
    let g = |u: f64| {
        let t = u.exp();
        f(t) * t
    };
    let mut acc = g(a) + g(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * du);
    }
    acc * du / 3.0
}

pub const PANELS_PER_DECADE: usize = 1 << 12;
pub const T_MAX: f64 = 1e4;
const T_MIN: f64 = 1e-3;

/// `I_β[h̃] = ∫_ℝ |1 − h̃(t)|² / |t|^{2β} dt`.
pub fn i_beta(cf_h: &CharFunction, beta: f64) -> Result<f64> {
    if !(beta > 0.5) {
        return Err(Error::Divergence(format!("I_β diverges at infinity for β = {beta} ≤ 1/2")));
    }
    let integrand = |t: f64| cf_h.one_minus(t).norm_sqr() / t.powf(2.0 * beta);
    // local power of |1 − h̃| at the origin
    let near = cf_h.one_minus(T_MIN).norm();
    let head = if near == 0.0 {
        0.0
    } else {
        let nearer = cf_h.one_minus(T_MIN / 10.0).norm();
        if nearer == 0.0 {
            0.0
        } else {
            let r = (near / nearer).log10();
            let power = 2.0 * r - 2.0 * beta + 1.0;
            if power <= 0.0 {
                return Err(Error::Divergence(format!(
                    "|1 − h̃(t)|² ~ t^{:.3} is not integrable against t^(−{}) at 0",
                    2.0 * r,
                    2.0 * beta
                )));
            }
            // ∫_0^{t_min} c² t^{2r − 2β} dt with c fitted at t_min
            near * near * T_MIN.powf(1.0 - 2.0 * beta) / power
        }
    };
    let body = log_simpson(integrand, T_MIN, 1.0, PANELS_PER_DECADE)
        + log_simpson(integrand, 1.0, T_MAX, PANELS_PER_DECADE);
    let tail = cf_h.one_minus(T_MAX).norm_sqr() * T_MAX.powf(1.0 - 2.0 * beta) / (2.0 * beta - 1.0);
    Ok(2.0 * (head + body + tail))
}

/// Richardson-extrapolated `lim_{t→0} [1 − h̃(t)] / t^r` and its target
/// `−Re(i^r)/r! ∫ x^r h(x) dx`.
pub fn moment_limit_check(h: &KernelSpec, r: u32) -> Result<(f64, f64)> {
    if r < 2 {
        return Err(invalid!("moment order must be at least 2, got {r}"));
    }
    for k in 1..r {
        match h.moment(k) {
            Some(m) if m.abs() < 1e-8 => {}
            _ => {
                return Err(Error::Precondition(format!("moment {k} of {} does not vanish", h.name())));
            }
        }
    }
    let mr = h.moment(r).ok_or_else(|| Error::Precondition(format!("moment {r} of {} is infinite", h.name())))?;
    let re_ir = match r % 4 {
        0 => 1.0,
        2 => -1.0,
        _ => 0.0,
    };
    let fact: f64 = (1..=r).map(f64::from).product();
    let target = -re_ir / fact * mr;
    let ts = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut table: Vec<f64> = ts.iter().map(|&t| h.one_minus_fourier(t) / t.powi(r as i32)).collect();
    // the error expands in powers of t², i.e. of 100 between levels
    let mut factor = 100.0;
    while table.len() > 1 {
        table = table.windows(2).map(|w| (factor * w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 100.0;
    }
    Ok((table[0], target))
}

/// `‖p − p ∗ h_δ‖_2² = (2π)^{−1} ∫ |p̃(t)|² |1 − h̃(δt)|² dt`.
pub fn smoothing_l2sq(cf_p: &CharFunction, h: &KernelSpec, delta: f64) -> f64 {
    let f = |t: f64| cf_p.evaluate(t).norm_sqr() * h.one_minus_fourier(delta * t).powi(2);
    let lo = 1e-4 / delta.max(1e-300).min(1.0);
    let hi = 1e4 / delta;
    let lo = lo.min(1e-4);
    // integrand is even; ∫_ℝ = 2 ∫_0^∞
    (log_simpson(f, lo, hi, PANELS_PER_DECADE)) / PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Row {
    pub delta: f64,
    pub l2sq: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Table {
    pub rows: Vec<Lemma1Row>,
    pub limit: f64,
    pub decay: DecayEstimate,
    pub i_beta: f64,
    /// Slope of `ln ‖p − p ∗ h_δ‖_2²` against `ln δ`.
    pub slope: f64,
}

/// Ratios `δ^{−(2β−1)} ‖p − p ∗ h_δ‖_2² / ((2π)^{−1} B_p² I_β[h̃])`.
pub fn lemma1_limit_check(p: &DensitySpec, h: &KernelSpec, beta: f64, deltas: &[f64]) -> Result<Lemma1Table> {
    if deltas.is_empty() {
        return Err(invalid!("need at least one bandwidth"));
    }
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(invalid!("bandwidths must be positive"));
    }
    let cf = CharFunction::from_density(p);
    let decay = estimate_decay(&cf, &log_space(1e3, 1e4, 64))?;
    if (decay.beta - beta).abs() > 0.05 {
        return Err(Error::Precondition(format!(
            "{} decays with degree {:.3}, not {beta}",
            p.name, decay.beta
        )));
    }
    let ib = i_beta(&CharFunction::from_kernel(h), beta)?;
    let limit = decay.b * decay.b * ib / (2.0 * PI);
    let rows: Vec<Lemma1Row> = deltas
        .iter()
        .map(|&delta| {
            let l2sq = smoothing_l2sq(&cf, h, delta);
            Lemma1Row { delta, l2sq, ratio: delta.powf(-(2.0 * beta - 1.0)) * l2sq / limit }
        })
        .collect();
    let slope = if rows.len() > 1 {
        let xs: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l2sq.ln()).collect();
        linear_fit(&xs, &ys).1
    } else {
        f64::NAN
    };
    Ok(Lemma1Table { rows, limit, decay, i_beta: ib, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Norm};

    #[test]
    fn laplace_closed_form() {
        let cf = CharFunction::from_density(&DensitySpec::laplace());
        assert!((cf.evaluate(1.0).re - 0.5).abs() < 1e-15);
        assert!((cf.evaluate(0.0).re - 1.0).abs() < 1e-15);
        let tab = CharFunction::tabulated(DensitySpec::laplace().tabulate(&Grid::new(-30.0, 30.0, 1 << 16 | 1).unwrap()));
        let gap = (0..=400)
            .map(|i| {
                let t = -20.0 + 0.1 * i as f64;
                (tab.evaluate(t) - cf.evaluate(t)).norm()
            })
            .fold(0.0, f64::max);
        assert!(gap < 1e-4, "{gap}");
    }

    #[test]
    fn decay_fits() {
        let ts = log_space(50.0, 500.0, 40);
        let d = estimate_decay(&CharFunction::from_density(&DensitySpec::laplace()), &ts).unwrap();
        assert!((d.beta - 2.0).abs() < 0.02 && (d.b - 1.0).abs() < 0.02, "{d:?}");
        let d = estimate_decay(&CharFunction::LaplaceConv2, &ts).unwrap();
        assert!((d.beta - 4.0).abs() < 0.02);
        let g = CharFunction::Gaussian { mean: 0.0, sd: 1.0 };
        let short = estimate_decay(&g, &log_space(5.0, 20.0, 20)).unwrap();
        let long = estimate_decay(&g, &log_space(5.0, 80.0, 20)).unwrap();
        assert!(long.beta > short.beta + 10.0);
        assert!(short.residual > 0.1);
        let synth = estimate_decay(&CharFunction::PowerLaw { beta: 1.37, b: 2.5 }, &ts).unwrap();
        assert!((synth.beta - 1.37).abs() < 1e-6 && (synth.b - 2.5).abs() < 1e-6);
    }

    #[test]
    fn gaussian_i2_matches_brute_force() {
        let cf = CharFunction::from_kernel(&KernelSpec::gaussian());
        let v = i_beta(&cf, 2.0).unwrap();
        // Riemann sum with 10^6 midpoints on (0, 100] plus the 1/t⁴ tail
        let n = 1_000_000;
        let dt = 100.0 / n as f64;
        let body: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * dt;
                (-(-0.5 * t * t).exp_m1()).powi(2) / t.powi(4)
            })
            .sum::<f64>()
            * dt;
        let brute = 2.0 * (body + 1.0 / (3.0 * 100f64.powi(3)));
        assert!((v - brute).abs() < 1e-3 * brute, "{v} vs {brute}");
    }

    #[test]
    fn i_beta_divergence_and_monotonicity() {
        let cf = CharFunction::from_kernel(&KernelSpec::gaussian());
        assert!(matches!(i_beta(&cf, 0.4), Err(Error::Divergence(_))));
        assert!(matches!(i_beta(&cf, 2.6), Err(Error::Divergence(_))));
        let vals: Vec<f64> = [1.0, 1.25, 1.5, 1.75, 2.0].iter().map(|&b| i_beta(&cf, b).unwrap()).collect();
        assert!(vals.iter().all(|&v| v >= 0.0));
        // split at |t| = 1: the tail part must decrease in β
        let tail = |b: f64| log_simpson(|t| cf.one_minus(t).norm_sqr() / t.powf(2.0 * b), 1.0, T_MAX, 512);
        assert!(tail(1.0) >= tail(1.5) && tail(1.5) >= tail(2.0));
    }

    #[test]
    fn small_variance_scaling() {
        // Gaussian with sd s: I_2 ≈ (s²/2)² ∫_{|t|<~1/s} dt ∝ s³ for small s
        let i = |s: f64| {
            let cf = CharFunction::Gaussian { mean: 0.0, sd: s };
            i_beta(&cf, 2.0).unwrap()
        };
        let ratio = i(0.01) / i(0.02);
        assert!((ratio - 0.125).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn moment_limits() {
        let (l, t) = moment_limit_check(&KernelSpec::gaussian(), 2).unwrap();
        assert!((t - 0.5).abs() < 1e-15 && (l - t).abs() < 1e-3);
        let (l, t) = moment_limit_check(&KernelSpec::laplace(), 2).unwrap();
        assert!((t - 1.0).abs() < 1e-15 && (l - t).abs() < 1e-3);
        assert!(matches!(moment_limit_check(&crate::kernel::bandlimited_kernel(1.0), 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn lemma1_laplace_gaussian() {
        let deltas = [1e-1, 10f64.powf(-1.5), 1e-2, 10f64.powf(-2.5)];
        let table = lemma1_limit_check(&DensitySpec::laplace(), &KernelSpec::gaussian(), 2.0, &deltas).unwrap();
        let at = table.rows[2].ratio;
        assert!((at - 1.0).abs() < 0.1, "{table:?}");
        for w in table.rows.windows(2) {
            assert!((w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs());
        }
        assert!((table.slope - 3.0).abs() < 0.05, "{}", table.slope);
    }

    #[test]
    fn parseval_consistency() {
        let grid = Grid::new(-40.0, 40.0, 1 << 16 | 1).unwrap();
        for spec in [DensitySpec::laplace(), DensitySpec::by_name("laplace-conv2").unwrap()] {
            let p = spec.tabulate(&grid);
            let cf = CharFunction::from_density(&spec);
            for delta in [0.1, 0.3] {
                let k = KernelSpec::gaussian();
                let spatial = k.convolve(&p, delta).unwrap().sub(&p).unwrap().norm(Norm::L2).powi(2);
                let freq = smoothing_l2sq(&cf, &k, delta);
                assert!((spatial - freq).abs() < 5e-3 * freq, "{}: {spatial} vs {freq}", spec.name);
            }
        }
    }
}
