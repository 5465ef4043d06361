//! Convolution kernels: Gaussian, Laplace and a band-limited kernel whose
//! Fourier transform is identically one near the origin.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::density::normal_cdf;
use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;

/// Half-width of the flat top of the unscaled band-limited transform is
/// `BL_CENTER - BL_TAPER`; its support ends at `BL_CENTER + BL_TAPER`.
const BL_CENTER: f64 = 0.75;
const BL_TAPER: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelShape {
    Gaussian,
    Laplace,
    /// `scale * B(scale * x)` where `B̃` is one on `[−½, ½]`, vanishes
    /// outside `[−1, 1]` and tapers smoothly in between.
    BandLimited { beta: f64, scale: f64 },
}

/// A symmetric convolution kernel integrating to one.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    name: String,
    shape: KernelShape,
    l1_norm: f64,
    /// `∫ x^k K(x) dx` for `k = 0..=2`.
    moments: [f64; 3],
    vanishing_up_to: usize,
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::gaussian()),
            "laplace" => Ok(Self::laplace()),
            other => match other.strip_prefix("bandlimited") {
                Some("") => Ok(bandlimited_kernel(1.0)),
                Some(rest) => {
                    let beta: f64 = rest
                        .trim_start_matches(':')
                        .parse()
                        .map_err(|_| invalid!("bad band-limited order in {other:?}"))?;
                    if !(beta > 0.0) {
                        return Err(invalid!("band-limited order must be positive"));
                    }
                    Ok(bandlimited_kernel(beta))
                }
                None => Err(invalid!("unknown kernel {other:?}")),
            },
        }
    }
}

/// `sin(y)/y · π²/(π² − y²)`, the transform of the raised-cosine bump.
fn bump_transform(y: f64) -> f64 {
    let y = y.abs();
    if y < 1e-8 {
        return 1.0;
    }
    if (y - PI).abs() < 1e-7 {
        return 0.5;
    }
    (y.sin() / y) * PI * PI / (PI * PI - y * y)
}

fn bandlimited_base(x: f64) -> f64 {
    let ax = BL_CENTER * x;
    let front = if x.abs() < 1e-12 { BL_CENTER / PI } else { ax.sin() / (PI * x) };
    front * bump_transform(BL_TAPER * x)
}

fn bandlimited_base_fourier(t: f64) -> f64 {
    let t = t.abs();
    let v = t - BL_CENTER;
    if v <= -BL_TAPER {
        1.0
    } else if v >= BL_TAPER {
        0.0
    } else {
        let cdf = 0.5 + v / (2.0 * BL_TAPER) + (PI * v / BL_TAPER).sin() / (2.0 * PI);
        1.0 - cdf
    }
}

/// Simpson's rule with `n` (rounded up to even) panels.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        Self {
            name: "gaussian".into(),
            shape: KernelShape::Gaussian,
            l1_norm: 1.0,
            moments: [1.0, 0.0, 1.0],
            vanishing_up_to: 1,
        }
    }

    pub fn laplace() -> Self {
        Self {
            name: "laplace".into(),
            shape: KernelShape::Laplace,
            l1_norm: 1.0,
            moments: [1.0, 0.0, 2.0],
            vanishing_up_to: 1,
        }
    }

    /// Band-limited kernel rescaled so that its transform is one on
    /// `[−scale/2, scale/2]` and vanishes outside `[−scale, scale]`.
    pub fn bandlimited_scaled(beta: f64, scale: f64) -> Self {
        let shape = KernelShape::BandLimited { beta, scale };
        let mut k = Self {
            name: if scale == 1.0 { format!("bandlimited:{beta}") } else { format!("bandlimited:{beta}@{scale}") },
            shape,
            l1_norm: 1.0,
            moments: [1.0, 0.0, 0.0],
            vanishing_up_to: 2,
        };
        k.l1_norm = k.abs_moment(0.0);
        k.moments = [k.raw_moment(0), k.raw_moment(1), k.raw_moment(2)];
        k
    }

    /// Band-limited kernel whose transform is identically one on `[−1, 1]`
    /// (support `[−2, 2]`).
    pub fn bandlimited_wide(beta: f64) -> Self {
        Self::bandlimited_scaled(beta, 2.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    /// `‖K‖_1`.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// `∫ x^k K(x) dx` for `k = 0, 1, 2`.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// `∫ x^k K(x) dx`, or `None` when the integral does not converge.
    pub fn moment(&self, k: u32) -> Option<f64> {
        if k % 2 == 1 {
            return match self.shape {
                KernelShape::BandLimited { .. } if k >= 3 => None,
                _ => Some(0.0),
            };
        }
        match self.shape {
            // (k − 1)!!
            KernelShape::Gaussian => Some((1..k).step_by(2).map(f64::from).product()),
            KernelShape::Laplace => Some((1..=k).map(f64::from).product()),
            KernelShape::BandLimited { .. } => match k {
                0 => Some(self.moments[0]),
                2 => Some(self.moments[2]),
                _ => None,
            },
        }
    }

    /// Largest `k` such that moments `1..=k` vanish.
    pub fn vanishing_up_to(&self) -> usize {
        self.vanishing_up_to
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            KernelShape::Laplace => 0.5 * (-x.abs()).exp(),
            KernelShape::BandLimited { scale, .. } => scale * bandlimited_base(scale * x),
        }
    }

    /// `K̃(t) = ∫ K(x) e^{itx} dx` (real, since every kernel here is symmetric).
    pub fn fourier(&self, t: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian => (-0.5 * t * t).exp(),
            KernelShape::Laplace => 1.0 / (1.0 + t * t),
            KernelShape::BandLimited { scale, .. } => bandlimited_base_fourier(t / scale),
        }
    }

    /// `1 − K̃(t)` without cancellation near the origin.
    pub fn one_minus_fourier(&self, t: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian => -(-0.5 * t * t).exp_m1(),
            KernelShape::Laplace => t * t / (1.0 + t * t),
            KernelShape::BandLimited { .. } => 1.0 - self.fourier(t),
        }
    }

    /// Edge of the Fourier support, if compact.
    pub fn fourier_support(&self) -> Option<f64> {
        match self.shape {
            KernelShape::BandLimited { scale, .. } => Some(scale * (BL_CENTER + BL_TAPER)),
            _ => None,
        }
    }

    /// Radius beyond which `|K|` is negligible (below 1e-17), if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self.shape {
            KernelShape::Gaussian => Some(9.0),
            KernelShape::Laplace => Some(40.0),
            KernelShape::BandLimited { .. } => None,
        }
    }

    /// `∫_{−∞}^{u} K(x) dx`.
    pub fn cdf(&self, u: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian => normal_cdf(u),
            KernelShape::Laplace => {
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
            KernelShape::BandLimited { scale, .. } => {
                // ½ + (1/π) ∫_0^s K̃(t) sin(tu)/t dt
                let edge = scale * (BL_CENTER + BL_TAPER);
                let n = 400 + (40.0 * (u.abs() * edge)) as usize;
                let integrand = |t: f64| {
                    if t == 0.0 {
                        u
                    } else {
                        self.fourier(t) * (t * u).sin() / t
                    }
                };
                0.5 + simpson(integrand, 0.0, edge, n) / PI
            }
        }
    }

    fn raw_moment(&self, k: i32) -> f64 {
        match self.shape {
            KernelShape::BandLimited { scale, .. } => {
                // symmetric: odd moments vanish; even ones by quadrature in
                // the unscaled variable
                if k % 2 == 1 {
                    return 0.0;
                }
                let f = |x: f64| x.powi(k) * bandlimited_base(x);
                let base = 2.0 * integrate_decaying(f, 4000.0);
                base / scale.powi(k)
            }
            _ => self.moments[k as usize],
        }
    }

    /// `∫ |x|^p |K(x)| dx`; infinite when the tail is not integrable.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian => 2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / PI.sqrt(),
            KernelShape::Laplace => libm::tgamma(p + 1.0),
            KernelShape::BandLimited { scale, .. } => {
                // |B(x)| decays like |x|^{-4}
                if p >= 3.0 {
                    return f64::INFINITY;
                }
                let x_max = 4000.0;
                let f = |x: f64| x.powf(p) * bandlimited_base(x).abs();
                let body = integrate_decaying(f, x_max);
                // tail: average of x^4 |B| over one period near x_max
                let c = simpson(|x| x.powi(4) * bandlimited_base(x).abs(), x_max - 8.0 * PI, x_max, 2000)
                    / (8.0 * PI);
                let tail = c * x_max.powf(p - 3.0) / (3.0 - p);
                2.0 * (body + tail) / scale.powf(p)
            }
        }
    }

    /// `(1/b) K(x/b)` tabulated against a grid function: `(K_b ∗ p)(x_i)`.
    pub fn convolve(&self, p: &GridFunction, bandwidth: f64) -> Result<GridFunction> {
        if !(bandwidth > 0.0) {
            return Err(invalid!("bandwidth must be positive, got {bandwidth}"));
        }
        let grid = *p.grid();
        let m = grid.len();
        let h = grid.step();
        let weights = p.trapezoid_weights();
        let mut kern: Vec<f64> = (0..2 * m - 1)
            .map(|k| {
                let d = (k as f64 - (m - 1) as f64) * h;
                self.evaluate(d / bandwidth) / bandwidth
            })
            .collect();
        // the Riemann sum of a kinked kernel overshoots by O((h/b)²)
        let mass: f64 = kern.iter().sum::<f64>() * h;
        kern.iter_mut().for_each(|v| *v /= mass);
        let out = linear_convolution(&weights, &kern);
        GridFunction::new(grid, out[m - 1..2 * m - 1].to_vec())
    }
}

/// `∫_0^{x_max} f` for an oscillating, algebraically decaying integrand.
fn integrate_decaying(f: impl Fn(f64) -> f64, x_max: f64) -> f64 {
    // panels of width ~0.05 resolve the oscillation period 2π/0.75
    let n = (x_max / 0.05) as usize;
    simpson(f, 0.0, x_max, n)
}

fn linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        out.resize(size, Complex64::new(0.0, 0.0));
        out
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let norm = 1.0 / size as f64;
    fa[..len].iter().map(|c| c.re * norm).collect()
}

/// Band-limited kernel of order `beta`: `K̃ = 1` on `[−½, ½]`, `0` outside
/// `[−1, 1]`, so every moment that exists vanishes.
pub fn bandlimited_kernel(beta: f64) -> KernelSpec {
    KernelSpec::bandlimited_scaled(beta, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    /// Inverse transform by a plain Riemann sum over `[−1, 1]`.
    fn riemann_inverse(t_max: f64, x: f64, n: usize) -> f64 {
        let dt = 2.0 * t_max / n as f64;
        (0..n)
            .map(|i| {
                let t = -t_max + (i as f64 + 0.5) * dt;
                bandlimited_base_fourier(t) * (t * x).cos()
            })
            .sum::<f64>()
            * dt
            / (2.0 * PI)
    }

    #[test]
    fn closed_form_matches_riemann_inverse() {
        for &x in &[0.0, 0.3, 1.0, 4.0 * PI, 4.0 * PI + 1e-9, 7.5, 25.0, -60.0] {
            let direct = bandlimited_base(x);
            let oracle = riemann_inverse(1.0, x, 1 << 12);
            assert!((direct - oracle).abs() < 1e-7, "x={x}: {direct} vs {oracle}");
        }
    }

    #[test]
    fn bandlimited_moments() {
        let k = bandlimited_kernel(1.0);
        assert!((k.moments()[0] - 1.0).abs() < 1e-6);
        assert!(k.moments()[1].abs() < 1e-6);
        assert!(k.moments()[2].abs() < 1e-3);
        assert!((k.fourier(0.0) - 1.0).abs() < 1e-15);
        assert!(k.l1_norm() > 1.0);
        assert!(k.abs_moment(3.0).is_infinite());
        assert!(k.abs_moment(2.0).is_finite());
    }

    #[test]
    fn gaussian_peak_at_resolution_three() {
        let k = KernelSpec::gaussian();
        let kj = 8.0 * k.evaluate(8.0 * 0.0);
        assert!((kj - 8.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn kernel_cdfs_are_consistent() {
        for k in [KernelSpec::gaussian(), KernelSpec::laplace(), bandlimited_kernel(1.0)] {
            assert!((k.cdf(0.0) - 0.5).abs() < 1e-12, "{}", k.name());
            let mid = simpson(|x| k.evaluate(x), 0.0, 2.0, 2000);
            assert!((k.cdf(2.0) - 0.5 - mid).abs() < 1e-8, "{}", k.name());
        }
    }

    #[test]
    fn abs_moments_closed_forms() {
        let g = KernelSpec::gaussian();
        assert!((g.abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((g.abs_moment(1.0) - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((KernelSpec::laplace().abs_moment(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_preserves_mass() {
        let grid = Grid::new(-20.0, 20.0, 4001).unwrap();
        let p = grid.tabulate(|x| 0.5 * (-x.abs()).exp()).unwrap();
        for k in [KernelSpec::gaussian(), KernelSpec::laplace()] {
            let s = k.convolve(&p, 0.25).unwrap();
            assert!((s.integral() - p.integral()).abs() < 1e-6, "{}: {}", k.name(), s.integral() - p.integral());
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("gaussian".parse::<KernelSpec>().unwrap().name(), "gaussian");
        assert_eq!("bandlimited:1.5".parse::<KernelSpec>().unwrap().name(), "bandlimited:1.5");
        assert!("box".parse::<KernelSpec>().is_err());
    }
}
