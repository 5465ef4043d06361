//! Catalog of ground-truth densities with known regularity, and exact
//! inverse-CDF sampling from them.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, GridFunction, DEFAULT_POINTS};

/// Number of cells in the inverse-CDF table used for sampling.
pub const CDF_TABLE_CELLS: usize = 1 << 16;

/// Closed-form shape of a catalog density, before truncation to its domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityShape {
    Uniform,
    /// `1 + amplitude * sin(2πx)` on `[0, 1]`.
    SineBump { amplitude: f64 },
    /// `1 + |x − ½|^α − κ_α` on `[0, 1]` with `κ_α = ∫|x − ½|^α`.
    Holder { alpha: f64 },
    Laplace { location: f64, scale: f64 },
    LaplaceMixture { atoms: Vec<f64>, weights: Vec<f64> },
    /// Laplace(0,1) convolved with itself, `(1 + |x|) e^{−|x|} / 4`.
    LaplaceConv2,
    Gaussian { mean: f64, sd: f64 },
}

/// A catalog density truncated (and renormalized) to a finite domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub name: String,
    /// Declared Hölder exponent.
    pub alpha: f64,
    pub shape: DensityShape,
    pub domain: (f64, f64),
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn laplace_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

impl DensityShape {
    fn raw_pdf(&self, x: f64) -> f64 {
        match self {
            DensityShape::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            DensityShape::SineBump { amplitude } => {
                if (0.0..=1.0).contains(&x) {
                    1.0 + amplitude * (2.0 * PI * x).sin()
                } else {
                    0.0
                }
            }
            DensityShape::Holder { alpha } => {
                if (0.0..=1.0).contains(&x) {
                    1.0 + (x - 0.5).abs().powf(*alpha) - holder_kappa(*alpha)
                } else {
                    0.0
                }
            }
            DensityShape::Laplace { location, scale } => {
                0.5 / scale * (-(x - location).abs() / scale).exp()
            }
            DensityShape::LaplaceMixture { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .map(|(t, w)| w * 0.5 * (-(x - t).abs()).exp())
                .sum(),
            DensityShape::LaplaceConv2 => 0.25 * (1.0 + x.abs()) * (-x.abs()).exp(),
            DensityShape::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
            }
        }
    }

    fn raw_cdf(&self, x: f64) -> f64 {
        match self {
            DensityShape::Uniform => x.clamp(0.0, 1.0),
            DensityShape::SineBump { amplitude } => {
                let x = x.clamp(0.0, 1.0);
                x + amplitude * (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI)
            }
            DensityShape::Holder { alpha } => {
                let x = x.clamp(0.0, 1.0);
                let a1 = alpha + 1.0;
                let half = 0.5f64.powf(a1) / a1;
                let power_part = if x <= 0.5 {
                    half - (0.5 - x).powf(a1) / a1
                } else {
                    half + (x - 0.5).powf(a1) / a1
                };
                x * (1.0 - holder_kappa(*alpha)) + power_part
            }
            DensityShape::Laplace { location, scale } => laplace_cdf((x - location) / scale),
            DensityShape::LaplaceMixture { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .map(|(t, w)| w * laplace_cdf(x - t))
                .sum(),
            DensityShape::LaplaceConv2 => {
                let tail = 0.25 * (2.0 + x.abs()) * (-x.abs()).exp();
                if x < 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
            DensityShape::Gaussian { mean, sd } => normal_cdf((x - mean) / sd),
        }
    }
}

fn holder_kappa(alpha: f64) -> f64 {
    0.5f64.powf(alpha) / (alpha + 1.0)
}

impl DensitySpec {
    /// Looks up a catalog density by name.
    ///
    /// Known names: `uniform`, `lipschitz-sine`, `sine-<amplitude>`,
    /// `holder-<alpha>`, `laplace`, `laplace-2atom`, `laplace-conv2`,
    /// `gaussian`.
    pub fn by_name(name: &str) -> Result<Self> {
        let spec = match name {
            "uniform" => Self::uniform(),
            "lipschitz-sine" => Self::sine_bump(0.5)?,
            "laplace" => Self::laplace(),
            "laplace-2atom" => Self::laplace_two_atom(1.0),
            "laplace-conv2" => Self {
                name: name.into(),
                alpha: 2.0,
                shape: DensityShape::LaplaceConv2,
                domain: (-40.0, 40.0),
            },
            "gaussian" => Self {
                name: name.into(),
                alpha: f64::INFINITY,
                shape: DensityShape::Gaussian { mean: 0.0, sd: 1.0 },
                domain: (-12.0, 12.0),
            },
            other => {
                if let Some(a) = other.strip_prefix("holder-") {
                    let alpha: f64 = a.parse().map_err(|_| invalid!("bad Hölder exponent {a:?}"))?;
                    Self::holder(alpha)?
                } else if let Some(a) = other.strip_prefix("sine-") {
                    let amp: f64 = a.parse().map_err(|_| invalid!("bad amplitude {a:?}"))?;
                    Self::sine_bump(amp)?
                } else {
                    return Err(invalid!("unknown catalog density {other:?}"));
                }
            }
        };
        Ok(spec)
    }

    pub fn uniform() -> Self {
        Self { name: "uniform".into(), alpha: 1.0, shape: DensityShape::Uniform, domain: (0.0, 1.0) }
    }

    /// `1 + a sin(2πx)` on `[0, 1]`; `a = 0.5` is `lipschitz-sine`.
    pub fn sine_bump(amplitude: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(invalid!("sine amplitude must lie in [0, 1], got {amplitude}"));
        }
        let name = if amplitude == 0.5 { "lipschitz-sine".to_string() } else { format!("sine-{amplitude}") };
        Ok(Self { name, alpha: 1.0, shape: DensityShape::SineBump { amplitude }, domain: (0.0, 1.0) })
    }

    pub fn holder(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid!("rough Hölder density needs α in (0, 1), got {alpha}"));
        }
        Ok(Self {
            name: format!("holder-{alpha}"),
            alpha,
            shape: DensityShape::Holder { alpha },
            domain: (0.0, 1.0),
        })
    }

    /// Standard Laplace on `[−30, 30]`.
    pub fn laplace() -> Self {
        Self {
            name: "laplace".into(),
            alpha: 1.0,
            shape: DensityShape::Laplace { location: 0.0, scale: 1.0 },
            domain: (-30.0, 30.0),
        }
    }

    /// `½ φ(· + a) + ½ φ(· − a)` for the Laplace kernel φ, on `[−a−8, a+8]`.
    pub fn laplace_two_atom(a: f64) -> Self {
        Self {
            name: "laplace-2atom".into(),
            alpha: 1.0,
            shape: DensityShape::LaplaceMixture { atoms: vec![-a, a], weights: vec![0.5, 0.5] },
            domain: (-a - 8.0, a + 8.0),
        }
    }

    fn mass(&self) -> f64 {
        self.shape.raw_cdf(self.domain.1) - self.shape.raw_cdf(self.domain.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.domain.0 || x > self.domain.1 {
            return 0.0;
        }
        self.shape.raw_pdf(x) / self.mass()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.domain.0 {
            return 0.0;
        }
        if x >= self.domain.1 {
            return 1.0;
        }
        ((self.shape.raw_cdf(x) - self.shape.raw_cdf(self.domain.0)) / self.mass()).clamp(0.0, 1.0)
    }

    /// Default working grid over the domain.
    pub fn default_grid(&self) -> Grid {
        Grid::new(self.domain.0, self.domain.1, DEFAULT_POINTS).expect("catalog domains are valid")
    }

    pub fn tabulate(&self, grid: &Grid) -> GridFunction {
        grid.tabulate(|x| self.pdf(x)).expect("catalog densities are finite")
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        sample(self, n, seed)
    }
}

/// i.i.d. draws from a catalog density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub seed: u64,
    pub source: String,
}

impl SampleSet {
    pub fn from_values(values: Vec<f64>, source: impl Into<String>) -> Self {
        Self { values, seed: 0, source: source.into() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Inverse-CDF table with linear interpolation between nodes.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(spec: &DensitySpec) -> Self {
        let (lo, hi) = spec.domain;
        let step = (hi - lo) / CDF_TABLE_CELLS as f64;
        let mut cdf: Vec<f64> = (0..=CDF_TABLE_CELLS).map(|k| spec.cdf(lo + k as f64 * step)).collect();
        // enforce monotonicity against rounding in the closed forms
        for k in 1..cdf.len() {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        cdf[0] = 0.0;
        *cdf.last_mut().unwrap() = 1.0;
        Self { lo, step, cdf }
    }

    pub fn invert(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&f| f <= u).clamp(1, self.cdf.len() - 1);
        let (f0, f1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if f1 > f0 { ((u - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 0.0 };
        self.lo + ((k - 1) as f64 + frac) * self.step
    }

    /// Same draws as [`sample`], reusing this table.
    pub fn sample(&self, spec: &DensitySpec, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(invalid!("sample size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| self.invert(rng.random::<f64>())).collect();
        Ok(SampleSet { values, seed, source: spec.name.clone() })
    }
}

/// Draws `n` values by inverse-CDF sampling; deterministic per `seed`.
pub fn sample(spec: &DensitySpec, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(invalid!("sample size must be positive"));
    }
    InverseCdf::new(spec).sample(spec, n, seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a counter.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}
