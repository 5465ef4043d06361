//! Dirichlet-process Laplace and Gaussian location mixtures: truncated
//! stick-breaking prior, blocked Gibbs sampler and Bayes estimator.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernel::{simpson, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKernel {
    Laplace,
    Gaussian,
}

impl std::str::FromStr for MixtureKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(invalid!("unknown mixture kernel {other:?}")),
        }
    }
}

/// Normalized base measure `ᾱ` of the Dirichlet process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseMeasure {
    /// Uniform on `[−a, a]`.
    Uniform { a: f64 },
    /// Density proportional to `exp(−b |θ|^δ)`, `0 < δ ≤ 2`.
    ExpPower { b: f64, delta: f64 },
}

impl BaseMeasure {
    fn log_density(&self, theta: f64) -> f64 {
        match *self {
            Self::Uniform { a } => {
                if theta.abs() <= a {
                    -(2.0 * a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::ExpPower { b, delta } => {
                let norm = 2.0 * libm::tgamma(1.0 / delta) / (delta * b.powf(1.0 / delta));
                -b * theta.abs().powf(delta) - norm.ln()
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Uniform { a } => rng.random_range(-a..=a),
            Self::ExpPower { b, delta } => {
                let g: f64 = Gamma::new(1.0 / delta, 1.0).expect("positive shape").sample(rng);
                let r = (g / b).powf(1.0 / delta);
                if rng.random::<bool>() {
                    r
                } else {
                    -r
                }
            }
        }
    }

    /// Natural length scale used for random-walk proposals.
    fn scale(&self) -> f64 {
        match *self {
            Self::Uniform { a } => a,
            Self::ExpPower { b, delta } => b.powf(-1.0 / delta),
        }
    }
}

/// `g(σ) ∝ σ^{−s} exp(−D σ^{−1} log^t(1/σ))` on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPrior {
    pub s: f64,
    pub t: f64,
    pub d: f64,
}

impl Default for SigmaPrior {
    fn default() -> Self {
        Self { s: 1.0, t: 1.0, d: 1.0 }
    }
}

const SIGMA_TABLE_CELLS: usize = 4096;

impl SigmaPrior {
    pub fn log_density(&self, sigma: f64) -> f64 {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return f64::NEG_INFINITY;
        }
        let l = (1.0 / sigma).ln();
        -self.s * sigma.ln() - self.d * l.powf(self.t) / sigma
    }

    /// Inverse-CDF draw from the tabulated density.
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let h = 1.0 / SIGMA_TABLE_CELLS as f64;
        let g: Vec<f64> = (0..=SIGMA_TABLE_CELLS)
            .map(|k| if k == 0 { 0.0 } else { self.log_density(k as f64 * h).exp() })
            .collect();
        let mut cdf = vec![0.0; g.len()];
        for k in 1..g.len() {
            cdf[k] = cdf[k - 1] + 0.5 * h * (g[k - 1] + g[k]);
        }
        let u = rng.random::<f64>() * cdf[SIGMA_TABLE_CELLS];
        let k = cdf.partition_point(|&c| c <= u).clamp(1, SIGMA_TABLE_CELLS);
        let frac = if cdf[k] > cdf[k - 1] { (u - cdf[k - 1]) / (cdf[k] - cdf[k - 1]) } else { 0.5 };
        ((k - 1) as f64 + frac) * h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPMixtureSpec {
    pub kernel: MixtureKernel,
    /// Total mass `α_ℝ` of the base measure.
    pub alpha_mass: f64,
    pub base: BaseMeasure,
    pub sigma_prior: Option<SigmaPrior>,
    pub truncation: usize,
}

/// `T = max(50, ⌈10 α_ℝ log n⌉)`.
pub fn default_truncation(alpha_mass: f64, n: usize) -> usize {
    let t = (10.0 * alpha_mass * (n.max(2) as f64).ln()).ceil() as usize;
    t.max(50)
}

impl DPMixtureSpec {
    /// Laplace kernel with base uniform on `[−a, a]`.
    pub fn laplace(alpha_mass: f64, a: f64, n: usize) -> Result<Self> {
        let spec = Self {
            kernel: MixtureKernel::Laplace,
            alpha_mass,
            base: BaseMeasure::Uniform { a },
            sigma_prior: None,
            truncation: default_truncation(alpha_mass, n),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Gaussian kernel with base `∝ exp(−b|θ|^δ)` and the default `σ` prior.
    pub fn gaussian(alpha_mass: f64, b: f64, delta: f64, n: usize) -> Result<Self> {
        let spec = Self {
            kernel: MixtureKernel::Gaussian,
            alpha_mass,
            base: BaseMeasure::ExpPower { b, delta },
            sigma_prior: Some(SigmaPrior::default()),
            truncation: default_truncation(alpha_mass, n),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_mass > 0.0) {
            return Err(invalid!("alpha_mass must be positive"));
        }
        if self.truncation == 0 {
            return Err(invalid!("truncation must be at least 1"));
        }
        match self.base {
            BaseMeasure::Uniform { a } if !(a > 0.0) => return Err(invalid!("base half-width must be positive")),
            BaseMeasure::ExpPower { b, delta } if !(b > 0.0 && delta > 0.0 && delta <= 2.0) => {
                return Err(invalid!("exp-power base needs b > 0 and 0 < δ ≤ 2"))
            }
            _ => {}
        }
        if self.kernel == MixtureKernel::Gaussian && self.sigma_prior.is_none() {
            return Err(invalid!("Gaussian mixtures need a σ prior"));
        }
        Ok(())
    }
}

/// A finite atomic mixing distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixingMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(invalid!("mixing measure needs equally many atoms and weights"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || atoms.iter().any(|a| !a.is_finite()) {
            return Err(invalid!("weights must be nonnegative and atoms finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid!("weights sum to {total}, not 1"));
        }
        Ok(Self { atoms, weights })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// One state of the chain: mixing measure plus the Gaussian scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub mixing: MixingMeasure,
    pub sigma: Option<f64>,
}

/// `Σ_k w_k e^{−|x − θ_k|} / 2` on the grid in `O(m + K log K)`.
fn laplace_mixture_values(atoms: &[f64], weights: &[f64], grid: &Grid) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = grid.len();
    let decay = (-grid.step()).exp();
    let mut left = vec![0.0; m];
    let mut k = 0;
    let mut acc = 0.0;
    for (i, slot) in left.iter_mut().enumerate() {
        let x = grid.point(i);
        acc *= if i == 0 { 1.0 } else { decay };
        while k < pairs.len() && pairs[k].0 <= x {
            acc += pairs[k].1 * (pairs[k].0 - x).exp();
            k += 1;
        }
        *slot = acc;
    }
    let mut out = vec![0.0; m];
    let mut k = pairs.len();
    let mut acc = 0.0;
    for i in (0..m).rev() {
        let x = grid.point(i);
        acc *= if i + 1 == m { 1.0 } else { decay };
        while k > 0 && pairs[k - 1].0 > x {
            acc += pairs[k - 1].1 * (x - pairs[k - 1].0).exp();
            k -= 1;
        }
        out[i] = 0.5 * (left[i] + acc);
    }
    out
}

fn gaussian_mixture_values(atoms: &[f64], weights: &[f64], sigma: f64, grid: &Grid) -> Vec<f64> {
    let m = grid.len();
    let h = grid.step();
    let mut out = vec![0.0; m];
    let reach = 9.0 * sigma;
    let c = 1.0 / (sigma * (2.0 * PI).sqrt());
    for (&theta, &w) in atoms.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let a = ((theta - reach - grid.lo()) / h).floor().max(0.0) as usize;
        let b = (((theta + reach - grid.lo()) / h).ceil().max(0.0) as usize).min(m - 1);
        for (i, v) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let z = (grid.point(i) - theta) / sigma;
            *v += w * c * (-0.5 * z * z).exp();
        }
    }
    out
}

/// `p_G = ∫ φ_σ(· − θ) dG(θ)` tabulated on `grid` (`σ = 1` for Laplace).
pub fn mixture_density(g: &MixingMeasure, kernel: MixtureKernel, sigma: Option<f64>, grid: &Grid) -> Result<GridFunction> {
    let values = match kernel {
        MixtureKernel::Laplace => laplace_mixture_values(&g.atoms, &g.weights, grid),
        MixtureKernel::Gaussian => {
            let s = sigma.ok_or_else(|| invalid!("Gaussian mixtures need σ"))?;
            if !(s > 0.0) {
                return Err(invalid!("σ must be positive, got {s}"));
            }
            gaussian_mixture_values(&g.atoms, &g.weights, s, grid)
        }
    };
    GridFunction::new(*grid, values)
}

fn stick_weights(v: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    let mut w = Vec::with_capacity(v.len());
    for (k, &vk) in v.iter().enumerate() {
        if k + 1 == v.len() {
            w.push(rest);
        } else {
            w.push(rest * vk);
            rest *= 1.0 - vk;
        }
    }
    // absorb rounding so the weights sum to one
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Draw from the truncated stick-breaking prior.
pub fn prior_draw(spec: &DPMixtureSpec, seed: u64) -> Result<PosteriorDraw> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(prior_draw_with(spec, &mut rng))
}

fn prior_draw_with(spec: &DPMixtureSpec, rng: &mut ChaCha8Rng) -> PosteriorDraw {
    let beta = Beta::new(1.0, spec.alpha_mass).expect("positive mass");
    let v: Vec<f64> = (0..spec.truncation).map(|_| beta.sample(rng)).collect();
    let weights = stick_weights(&v);
    let atoms = (0..spec.truncation).map(|_| spec.base.draw(rng)).collect();
    let sigma = spec.sigma_prior.map(|g| g.draw(rng));
    PosteriorDraw { mixing: MixingMeasure { atoms, weights }, sigma }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GibbsInit {
    Prior,
    Given(PosteriorDraw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Atom proposal standard deviation as a fraction of the base scale.
    pub step_scale: f64,
    pub inner_steps: usize,
    /// Standard deviation of the random walk on `log σ`.
    pub log_sigma_step: f64,
    pub init: GibbsInit,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            iters: 4000,
            burnin: 1000,
            thin: 3,
            seed: 0,
            step_scale: 0.25,
            inner_steps: 5,
            log_sigma_step: 0.1,
            init: GibbsInit::Prior,
        }
    }
}

/// Chain state of the blocked Gibbs sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub assignments: Vec<usize>,
    pub mixing: MixingMeasure,
    pub sigma: Option<f64>,
    pub iteration: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GibbsDiagnostics {
    pub atom_acceptance: f64,
    pub sigma_acceptance: Option<f64>,
    /// Occupied clusters after each sweep.
    pub cluster_trace: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsFit {
    pub draws: Vec<PosteriorDraw>,
    pub diagnostics: GibbsDiagnostics,
    pub final_state: GibbsState,
}

struct Sampler<'a> {
    xs: &'a [f64],
    spec: &'a DPMixtureSpec,
    cfg: &'a GibbsConfig,
    rng: ChaCha8Rng,
    atom_moves: (u64, u64),
    sigma_moves: (u64, u64),
}

impl Sampler<'_> {
    fn log_kernel(&self, d: f64, sigma: Option<f64>) -> f64 {
        match self.spec.kernel {
            MixtureKernel::Laplace => -d.abs(),
            MixtureKernel::Gaussian => {
                let s = sigma.expect("σ present for Gaussian mixtures");
                let z = d / s;
                -0.5 * z * z
            }
        }
    }

    fn assign(&mut self, state: &mut GibbsState) {
        let t = state.mixing.len();
        let log_w: Vec<f64> = state.mixing.weights.iter().map(|w| w.ln()).collect();
        let mut lp = vec![0.0; t];
        for (i, &x) in self.xs.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for k in 0..t {
                lp[k] = log_w[k] + self.log_kernel(x - state.mixing.atoms[k], state.sigma);
                best = best.max(lp[k]);
            }
            let mut total = 0.0;
            for v in lp.iter_mut() {
                *v = (*v - best).exp();
                total += *v;
            }
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = t - 1;
            for (k, &v) in lp.iter().enumerate() {
                if u < v {
                    pick = k;
                    break;
                }
                u -= v;
            }
            state.assignments[i] = pick;
        }
    }

    fn update_sticks(&mut self, state: &mut GibbsState, counts: &[usize]) {
        let t = counts.len();
        let mut tail: usize = counts.iter().sum();
        let mut v = Vec::with_capacity(t);
        for &c in counts {
            tail -= c;
            let beta = Beta::new(1.0 + c as f64, self.spec.alpha_mass + tail as f64).expect("positive parameters");
            v.push(beta.sample(&mut self.rng));
        }
        state.mixing.weights = stick_weights(&v);
    }

    fn update_atoms(&mut self, state: &mut GibbsState, members: &[Vec<usize>]) {
        let step = self.cfg.step_scale * self.spec.base.scale();
        for (k, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                state.mixing.atoms[k] = self.spec.base.draw(&mut self.rng);
                continue;
            }
            let target = |theta: f64, s: &Self| {
                let prior = s.spec.base.log_density(theta);
                if prior == f64::NEG_INFINITY {
                    return prior;
                }
                prior + idx.iter().map(|&i| s.log_kernel(s.xs[i] - theta, state.sigma)).sum::<f64>()
            };
            let mut theta = state.mixing.atoms[k];
            let mut current = target(theta, self);
            for _ in 0..self.cfg.inner_steps {
                let z: f64 = self.rng.sample(StandardNormal);
                let proposal = theta + step * z;
                let cand = target(proposal, self);
                self.atom_moves.1 += 1;
                if self.rng.random::<f64>().ln() < cand - current {
                    theta = proposal;
                    current = cand;
                    self.atom_moves.0 += 1;
                }
            }
            state.mixing.atoms[k] = theta;
        }
    }

    fn update_sigma(&mut self, state: &mut GibbsState) {
        let Some(prior) = self.spec.sigma_prior else { return };
        let sigma = state.sigma.expect("σ present for Gaussian mixtures");
        let ss: f64 = self
            .xs
            .iter()
            .zip(&state.assignments)
            .map(|(&x, &k)| (x - state.mixing.atoms[k]).powi(2))
            .sum();
        let n = self.xs.len() as f64;
        // log posterior of log σ, including the Jacobian σ
        let target = |s: f64| -n * s.ln() - ss / (2.0 * s * s) + prior.log_density(s) + s.ln();
        let z: f64 = self.rng.sample(StandardNormal);
        let proposal = sigma * (self.cfg.log_sigma_step * z).exp();
        self.sigma_moves.1 += 1;
        if self.rng.random::<f64>().ln() < target(proposal) - target(sigma) {
            state.sigma = Some(proposal);
            self.sigma_moves.0 += 1;
        }
    }
}

/// Blocked Gibbs sampler for the truncated stick-breaking posterior.
pub fn fit_gibbs(samples: &SampleSet, spec: &DPMixtureSpec, cfg: &GibbsConfig) -> Result<GibbsFit> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(invalid!("fit_gibbs needs at least one observation"));
    }
    if cfg.iters <= cfg.burnin {
        return Err(invalid!("iters ({}) must exceed burnin ({})", cfg.iters, cfg.burnin));
    }
    if cfg.thin == 0 {
        return Err(invalid!("thin must be positive"));
    }
    if spec.truncation < 10 {
        return Err(invalid!("truncation must be at least 10 for Gibbs sampling, got {}", spec.truncation));
    }
    let mut sampler = Sampler {
        xs: &samples.values,
        spec,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        atom_moves: (0, 0),
        sigma_moves: (0, 0),
    };
    let start = match &cfg.init {
        GibbsInit::Prior => prior_draw_with(spec, &mut sampler.rng),
        GibbsInit::Given(d) => {
            let mut d = d.clone();
            // pad or cut to the truncation level
            d.mixing.atoms.resize(spec.truncation, 0.0);
            d.mixing.weights.resize(spec.truncation, 0.0);
            let total: f64 = d.mixing.weights.iter().sum();
            if !(total > 0.0) {
                return Err(invalid!("initial mixing measure has no mass"));
            }
            let floor = 1e-6;
            d.mixing.weights.iter_mut().for_each(|w| *w = (*w / total).max(floor));
            let total: f64 = d.mixing.weights.iter().sum();
            d.mixing.weights.iter_mut().for_each(|w| *w /= total);
            if spec.kernel == MixtureKernel::Gaussian && d.sigma.is_none() {
                d.sigma = spec.sigma_prior.map(|g| g.draw(&mut sampler.rng));
            }
            d
        }
    };
    let mut state = GibbsState {
        assignments: vec![0; samples.len()],
        mixing: start.mixing,
        sigma: start.sigma,
        iteration: 0,
        rng_seed: cfg.seed,
    };
    let t = spec.truncation;
    let mut draws = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        sampler.assign(&mut state);
        let mut members = vec![Vec::new(); t];
        for (i, &k) in state.assignments.iter().enumerate() {
            members[k].push(i);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        trace.push(counts.iter().filter(|&&c| c > 0).count());
        sampler.update_sticks(&mut state, &counts);
        sampler.update_atoms(&mut state, &members);
        sampler.update_sigma(&mut state);
        state.iteration = it + 1;
        if it >= cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
            draws.push(PosteriorDraw { mixing: state.mixing.clone(), sigma: state.sigma });
        }
    }
    let rate = |(a, p): (u64, u64)| if p == 0 { 0.0 } else { a as f64 / p as f64 };
    let diagnostics = GibbsDiagnostics {
        atom_acceptance: rate(sampler.atom_moves),
        sigma_acceptance: spec.sigma_prior.map(|_| rate(sampler.sigma_moves)),
        cluster_trace: trace,
    };
    Ok(GibbsFit { draws, diagnostics, final_state: state })
}

/// Pointwise average of the draws' mixture densities.
pub fn bayes_estimator(draws: &[PosteriorDraw], kernel: MixtureKernel, grid: &Grid) -> Result<GridFunction> {
    if draws.is_empty() {
        return Err(invalid!("Bayes estimator needs at least one draw"));
    }
    let inv = 1.0 / draws.len() as f64;
    match kernel {
        MixtureKernel::Laplace => {
            let atoms: Vec<f64> = draws.iter().flat_map(|d| d.mixing.atoms.iter().copied()).collect();
            let weights: Vec<f64> = draws.iter().flat_map(|d| d.mixing.weights.iter().map(|w| w * inv)).collect();
            GridFunction::new(*grid, laplace_mixture_values(&atoms, &weights, grid))
        }
        MixtureKernel::Gaussian => {
            let mut acc = vec![0.0; grid.len()];
            for d in draws {
                let p = mixture_density(&d.mixing, kernel, d.sigma, grid)?;
                acc.iter_mut().zip(p.values()).for_each(|(a, v)| *a += inv * v);
            }
            GridFunction::new(*grid, acc)
        }
    }
}

/// `(n / log n)^{−3/8}`.
pub fn laplace_rate_point(n: u64) -> f64 {
    let nf = n as f64;
    (nf / nf.ln()).powf(-3.0 / 8.0)
}

/// `(1/π) ∫_{|t| > 2^J} e^{−σ²t²/2} dt`.
pub fn gaussian_bias_envelope(sigma: f64, j: u32) -> f64 {
    let edge = (j as f64).exp2();
    (2.0 / PI).sqrt() / sigma * libm::erfc(sigma * edge / SQRT_2)
}

/// Measured `‖K_J(p_{F,σ}) − p_{F,σ}‖_∞` for the band-limited kernel whose
/// transform is one on `[−1, 1]`, and the envelope
/// `(1/π) ∫_{|t|>2^J} |φ̃_σ(t)| dt`.
///
/// The bias is computed in frequency,
/// `(1/π) ∫_{2^J}^∞ (K̃(t/2^J) − 1) e^{−σ²t²/2} Re[F̃(t) e^{−itx}] dt`,
/// and maximized over a grid of `x` resolving the frequency `2^{J+1}`.
pub fn gaussian_bias_check(f: &MixingMeasure, sigma: f64, j: u32) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(invalid!("σ must be positive, got {sigma}"));
    }
    let kernel = KernelSpec::bandlimited_wide(2.0);
    let edge = (j as f64).exp2();
    let envelope = gaussian_bias_envelope(sigma, j);
    let t_hi = edge + 12.0 / sigma;
    // single-atom bias profile b(y); the transform is one below `edge`
    let profile = |y: f64| {
        let g = |t: f64| -kernel.one_minus_fourier(t / edge) * (-0.5 * sigma * sigma * t * t).exp() * (t * y).cos();
        simpson(g, edge, t_hi, 4096) / PI
    };
    let lo = f.atoms.iter().copied().fold(f64::INFINITY, f64::min) - 8.0 * sigma - 1.0;
    let hi = f.atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 8.0 * sigma + 1.0;
    let dx = 1.0 / (16.0 * edge);
    let steps = ((hi - lo) / dx).ceil() as usize;
    // tabulate b on all pairwise offsets needed
    let span = hi - lo + (f.atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - f.atoms.iter().copied().fold(f64::INFINITY, f64::min));
    let b_cells = (span / dx).ceil() as usize + 1;
    let b_table: Vec<f64> = (0..=b_cells).map(|i| profile(i as f64 * dx)).collect();
    let b_at = |y: f64| {
        let u = y.abs() / dx;
        let i = (u.floor() as usize).min(b_cells - 1);
        let fr = u - i as f64;
        b_table[i] * (1.0 - fr) + b_table[i + 1] * fr
    };
    let measured = (0..=steps)
        .map(|i| {
            let x = lo + i as f64 * dx;
            f.atoms.iter().zip(&f.weights).map(|(&th, &w)| w * b_at(x - th)).sum::<f64>().abs()
        })
        .fold(0.0, f64::max);
    Ok((measured, envelope))
}
