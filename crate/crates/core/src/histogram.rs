//! Conjugate Dirichlet posterior over dyadic histograms on `[0, 1]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::density::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operators::{dyadic_cell, dyadic_step_function, nodes_per_cell};

/// The `2^J` bins `A_1 = [0, 2^{-J}]`, `A_k = ((k−1)2^{-J}, k 2^{-J}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub j: u32,
}

impl DyadicPartition {
    pub fn new(j: u32) -> Result<Self> {
        if j > 30 {
            return Err(invalid!("resolution J={j} is too fine"));
        }
        Ok(Self { j })
    }

    pub fn bins(&self) -> usize {
        1 << self.j
    }

    pub fn width(&self) -> f64 {
        (-(self.j as f64)).exp2()
    }

    /// Zero-based bin index of `x`.
    pub fn bin_of(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("observation {x} lies outside [0, 1]")));
        }
        Ok(dyadic_cell(x, self.j))
    }

    /// `(lo, hi)` of zero-based bin `k`.
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = self.width();
        (k as f64 * w, (k + 1) as f64 * w)
    }
}

/// Posterior `Dir(1 + N_1, …, 1 + N_{2^J})` after observing bin counts `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPosterior {
    pub partition: DyadicPartition,
    pub counts: Vec<u64>,
    pub n: u64,
}

/// Largest `J` with `2^J ≤ (n / ln n)^{1/(2α+1)}`, so that `2^J ≍ ε_{n,α}^{-1/α}`
/// and bins are never narrower than `ε_{n,α}^{1/α}`.
pub fn choose_j(n: u64, alpha: f64) -> Result<u32> {
    if n < 2 {
        return Err(invalid!("choose_j needs n ≥ 2, got {n}"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid!("histogram smoothness must lie in (0, 1], got {alpha}"));
    }
    let nf = n as f64;
    let j = ((nf / nf.ln()).log2() / (2.0 * alpha + 1.0) + 1e-9).floor();
    Ok(j.max(0.0) as u32)
}

/// Sup-norm rate `(n / ln n)^{-α/(2α+1)}`.
pub fn epsilon_rate(n: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    (nf / nf.ln()).powf(-alpha / (2.0 * alpha + 1.0))
}

fn dirichlet_draw(params: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w: Vec<f64> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Per-bin extremes of a function on `[0, 1]` aligned with a partition.
#[derive(Debug, Clone)]
pub struct BinRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BinRange {
    pub fn new(p: &GridFunction, partition: DyadicPartition) -> Result<Self> {
        let q = nodes_per_cell(p.grid(), partition.j)?;
        let bins = partition.bins();
        let mut min = vec![f64::INFINITY; bins];
        let mut max = vec![f64::NEG_INFINITY; bins];
        for k in 0..bins {
            let (a, b) = (k * q, (k + 1) * q);
            let mut push = |v: f64| {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            };
            push(p.right_limit(a));
            push(p.left_limit(b));
            for i in a + 1..b {
                push(p.left_limit(i));
                push(p.right_limit(i));
            }
        }
        Ok(Self { min, max })
    }

    /// `sup |f − p|` for the step function with `levels` on each bin.
    pub fn sup_distance(&self, levels: &[f64]) -> f64 {
        levels
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&l, (&lo, &hi))| (l - lo).abs().max((hi - l).abs()))
            .fold(0.0, f64::max)
    }
}

/// `τ`-quantile of the histogram with bin probabilities `weights`.
pub fn histogram_quantile(weights: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid!("quantile level must lie in (0, 1), got {tau}"));
    }
    let width = 1.0 / weights.len() as f64;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 && acc + w >= tau {
            return Ok((k as f64 + ((tau - acc) / w).clamp(0.0, 1.0)) * width);
        }
        acc += w;
    }
    Ok(1.0)
}

impl HistogramPosterior {
    pub fn fit(samples: &SampleSet, j: u32) -> Result<Self> {
        let partition = DyadicPartition::new(j)?;
        let mut counts = vec![0u64; partition.bins()];
        for &x in &samples.values {
            counts[partition.bin_of(x)?] += 1;
        }
        Ok(Self { partition, n: samples.len() as u64, counts })
    }

    pub fn from_counts(j: u32, counts: Vec<u64>) -> Result<Self> {
        let partition = DyadicPartition::new(j)?;
        if counts.len() != partition.bins() {
            return Err(invalid!("expected {} counts, got {}", partition.bins(), counts.len()));
        }
        Ok(Self { partition, n: counts.iter().sum(), counts })
    }

    /// Conjugate update with further observations.
    pub fn update(&self, samples: &SampleSet) -> Result<Self> {
        let more = Self::fit(samples, self.partition.j)?;
        let counts = self.counts.iter().zip(&more.counts).map(|(a, b)| a + b).collect();
        Ok(Self { partition: self.partition, counts, n: self.n + more.n })
    }

    pub fn j(&self) -> u32 {
        self.partition.j
    }

    pub fn dirichlet_params(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| 1.0 + c as f64).collect()
    }

    /// Posterior mean bin probabilities `(1 + N_k) / (2^J + n)`.
    pub fn bayes_weights(&self) -> Vec<f64> {
        let denom = (self.partition.bins() as u64 + self.n) as f64;
        self.counts.iter().map(|&c| (1.0 + c as f64) / denom).collect()
    }

    /// Density levels `2^J (1 + N_k) / (2^J + n)`.
    pub fn bayes_levels(&self) -> Vec<f64> {
        let s = self.partition.bins() as f64;
        self.bayes_weights().into_iter().map(|w| s * w).collect()
    }

    /// Posterior expected histogram on a `[0, 1]` grid.
    pub fn bayes_mean(&self, grid: &Grid) -> Result<GridFunction> {
        dyadic_step_function(grid, &self.bayes_levels())
    }

    /// `m` posterior draws of the bin probabilities.
    pub fn sample_weights(&self, m: usize, seed: u64) -> Vec<Vec<f64>> {
        let params = self.dirichlet_params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| dirichlet_draw(&params, &mut rng)).collect()
    }

    /// `m` posterior draws as densities on `grid`.
    pub fn sample_posterior(&self, m: usize, seed: u64, grid: &Grid) -> Result<Vec<GridFunction>> {
        if m == 0 {
            return Err(invalid!("number of posterior draws must be positive"));
        }
        let s = self.partition.bins() as f64;
        self.sample_weights(m, seed)
            .into_iter()
            .map(|w| {
                let levels: Vec<f64> = w.iter().map(|v| v * s).collect();
                dyadic_step_function(grid, &levels)
            })
            .collect()
    }

    /// Fraction of `m` posterior draws with `‖p − p_0‖_∞ ≥ radius`.
    pub fn posterior_supnorm_mass(&self, p0: &GridFunction, radius: f64, m: usize, seed: u64) -> Result<f64> {
        if !(radius > 0.0) {
            return Err(invalid!("radius must be positive, got {radius}"));
        }
        let d = self.posterior_sup_distances(p0, m, seed)?;
        Ok(d.iter().filter(|&&v| v >= radius).count() as f64 / m as f64)
    }

    /// `‖p − p_0‖_∞` for each of `m` posterior draws.
    pub fn posterior_sup_distances(&self, p0: &GridFunction, m: usize, seed: u64) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(invalid!("number of posterior draws must be positive"));
        }
        let range = BinRange::new(p0, self.partition)?;
        let s = self.partition.bins() as f64;
        Ok(self
            .sample_weights(m, seed)
            .into_iter()
            .map(|w| {
                let levels: Vec<f64> = w.iter().map(|v| v * s).collect();
                range.sup_distance(&levels)
            })
            .collect())
    }
}

/// Per-bin integrals of `p_0`, `p_0 log p_0` and `p_0 log² p_0`.
fn kl_bin_integrals(p0: &GridFunction, partition: DyadicPartition) -> Vec<[f64; 3]> {
    const NODES: usize = 33;
    (0..partition.bins())
        .map(|k| {
            let (a, b) = partition.bin_edges(k);
            let h = (b - a) / (NODES - 1) as f64;
            let mut acc = [0.0; 3];
            for i in 0..NODES {
                let w = if i == 0 || i == NODES - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                // keep evaluation inside the bin at jump edges
                let x = (a + i as f64 * h).clamp(a + 1e-12, b - 1e-12);
                let v = p0.eval(x);
                let l = v.ln();
                acc[0] += w * v;
                acc[1] += w * v * l;
                acc[2] += w * v * l * l;
            }
            acc.map(|s| s * h / 3.0)
        })
        .collect()
}

/// `(−P_0 log(p/p_0), P_0 log²(p/p_0))` for the histogram with bin
/// probabilities `weights`.
pub fn histogram_kl(weights: &[f64], bins: &[[f64; 3]]) -> (f64, f64) {
    let s = weights.len() as f64;
    let mut kl = 0.0;
    let mut v = 0.0;
    for (w, [p, pl, pl2]) in weights.iter().zip(bins) {
        let lq = (s * w).ln();
        kl += pl - p * lq;
        v += pl2 - 2.0 * lq * pl + p * lq * lq;
    }
    (kl, v)
}

/// Monte Carlo prior mass of the Kullback–Leibler neighbourhood
/// `{−P_0 log(p/p_0) ≤ ε², P_0 log²(p/p_0) ≤ ε²}` under the uniform
/// Dirichlet prior on `2^J` bins.
pub fn prior_kl_ball_mass(j: u32, p0: &GridFunction, eps: f64, m: usize, seed: u64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(invalid!("KL radius must be positive, got {eps}"));
    }
    if m == 0 {
        return Err(invalid!("number of prior draws must be positive"));
    }
    if p0.min_value() <= 0.0 || p0.jumps().iter().any(|j| j.left <= 0.0 || j.right <= 0.0) {
        return Err(invalid!("p0 must be strictly positive on [0, 1]"));
    }
    let partition = DyadicPartition::new(j)?;
    if p0.grid().lo() != 0.0 || p0.grid().hi() != 1.0 {
        return Err(Error::Domain("p0 must be tabulated on [0, 1]".into()));
    }
    let bins = kl_bin_integrals(p0, partition);
    let params = vec![1.0; partition.bins()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps2 = eps * eps;
    let hits = (0..m)
        .filter(|_| {
            let w = dirichlet_draw(&params, &mut rng);
            let (kl, v) = histogram_kl(&w, &bins);
            kl <= eps2 && v <= eps2
        })
        .count();
    Ok(hits as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::grid::Norm;

    fn set(xs: &[f64]) -> SampleSet {
        SampleSet::from_values(xs.to_vec(), "fixture")
    }

    #[test]
    fn fit_counts() {
        let post = HistogramPosterior::fit(&set(&[0.1, 0.4, 0.9]), 1).unwrap();
        assert_eq!(post.counts, vec![2, 1]);
        let post = HistogramPosterior::fit(&set(&[0.5]), 1).unwrap();
        assert_eq!(post.counts, vec![1, 0]);
        let post = HistogramPosterior::fit(&set(&[]), 3).unwrap();
        assert_eq!(post.counts, vec![0; 8]);
        assert!(matches!(HistogramPosterior::fit(&set(&[1.2]), 1), Err(Error::Domain(_))));
    }

    #[test]
    fn bayes_mean_closed_form() {
        let grid = Grid::unit();
        let post = HistogramPosterior::from_counts(1, vec![2, 0]).unwrap();
        let mean = post.bayes_mean(&grid).unwrap();
        assert_eq!(mean.eval(0.25), 1.5);
        assert_eq!(mean.eval(0.75), 0.5);
        let empty = HistogramPosterior::from_counts(4, vec![0; 16]).unwrap();
        let u = empty.bayes_mean(&grid).unwrap();
        assert!(u.values().iter().all(|&v| v == 1.0));
        assert!((mean.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn choose_j_examples() {
        // n / ln n = 4096 at n ≈ 45 298
        let n = (40_000u64..60_000).find(|&n| n as f64 / (n as f64).ln() >= 4096.0).unwrap();
        assert_eq!(choose_j(n, 1.0).unwrap(), 4);
        assert_eq!(choose_j(n, 0.5).unwrap(), 6);
        assert!(choose_j(1, 1.0).is_err());
        let mut last = 0;
        for n in (2..200_000).step_by(997) {
            let j = choose_j(n, 1.0).unwrap();
            assert!(j >= last);
            last = j;
        }
    }

    #[test]
    fn draws_lie_on_simplex() {
        let post = HistogramPosterior::from_counts(3, vec![5, 0, 2, 9, 1, 1, 0, 3]).unwrap();
        for w in post.sample_weights(200, 3) {
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let grid = Grid::unit();
        for d in post.sample_posterior(5, 3, &grid).unwrap() {
            assert!((d.integral() - 1.0).abs() < 1e-10);
        }
        assert_eq!(post.sample_weights(3, 9), post.sample_weights(3, 9));
    }

    #[test]
    fn dirichlet_moments() {
        let post = HistogramPosterior::from_counts(2, vec![3, 0, 7, 2]).unwrap();
        let m = 100_000;
        let draws = post.sample_weights(m, 11);
        let a = post.dirichlet_params();
        let a0: f64 = a.iter().sum();
        for k in 0..4 {
            let xs: Vec<f64> = draws.iter().map(|w| w[k]).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let true_mean = a[k] / a0;
            let true_var = a[k] * (a0 - a[k]) / (a0 * a0 * (a0 + 1.0));
            assert!((mean - true_mean).abs() < 4.0 * (true_var / m as f64).sqrt());
            let fourth: f64 = xs.iter().map(|x| (x - true_mean).powi(4)).sum::<f64>() / m as f64;
            let var_se = ((fourth - true_var * true_var) / m as f64).sqrt();
            assert!((var - true_var).abs() < 6.0 * var_se, "bin {k}");
        }
    }

    #[test]
    fn supnorm_mass_limits_and_monotonicity() {
        let grid = Grid::unit();
        let spec = DensitySpec::by_name("lipschitz-sine").unwrap();
        let p0 = spec.tabulate(&grid);
        let xs = spec.sample(2000, 5).unwrap();
        let post = HistogramPosterior::fit(&xs, 3).unwrap();
        assert_eq!(post.posterior_supnorm_mass(&p0, 1e6, 100, 1).unwrap(), 0.0);
        assert_eq!(post.posterior_supnorm_mass(&p0, 1e-12, 100, 1).unwrap(), 1.0);
        let mut last = 1.0;
        for r in [0.1, 0.2, 0.3, 0.4, 0.6] {
            let mass = post.posterior_supnorm_mass(&p0, r, 300, 1).unwrap();
            assert!(mass <= last);
            last = mass;
        }
    }

    #[test]
    fn bin_range_matches_grid_sup() {
        let grid = Grid::unit();
        let p0 = DensitySpec::by_name("holder-0.5").unwrap().tabulate(&grid);
        let post = HistogramPosterior::from_counts(3, vec![1, 4, 2, 0, 0, 3, 5, 1]).unwrap();
        let mean = post.bayes_mean(&grid).unwrap();
        let direct = mean.sub(&p0).unwrap().norm(Norm::Sup);
        let fast = BinRange::new(&p0, post.partition).unwrap().sup_distance(&post.bayes_levels());
        assert!((direct - fast).abs() < 1e-12);
    }

    #[test]
    fn histogram_quantile_matches_levels() {
        assert!((histogram_quantile(&[0.75, 0.25], 0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!((histogram_quantile(&[0.25; 4], 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!(histogram_quantile(&[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn kl_ball_two_bin_oracle() {
        let grid = Grid::unit();
        let p0 = GridFunction::constant(grid, 1.0);
        let m = 20_000;
        let mass = prior_kl_ball_mass(1, &p0, 0.1, m, 4).unwrap();
        // w ~ U(0, 1) for two bins under the flat prior
        let cells = 1_000_000;
        let inside = (0..cells)
            .filter(|&i| {
                let w = (i as f64 + 0.5) / cells as f64;
                let (a, b) = ((2.0 * w).ln(), (2.0 * (1.0 - w)).ln());
                -0.5 * (a + b) <= 0.01 && 0.5 * (a * a + b * b) <= 0.01
            })
            .count() as f64
            / cells as f64;
        let se = (inside * (1.0 - inside) / m as f64).sqrt();
        assert!((mass - inside).abs() < 3.0 * se, "{mass} vs {inside}");
        assert!((prior_kl_ball_mass(2, &p0, 10.0, 2000, 4).unwrap() - 1.0).abs() < 1e-12);
        let mut last = 1.0;
        for eps in [1.0, 0.5, 0.3, 0.2, 0.1] {
            let v = prior_kl_ball_mass(2, &p0, eps, 4000, 8).unwrap();
            assert!(v <= last);
            last = v;
        }
        let zero = grid.tabulate(|x| 2.0 * x).unwrap();
        assert!(prior_kl_ball_mass(2, &zero, 0.5, 10, 1).is_err());
    }

    #[test]
    fn conjugate_update() {
        let a = set(&[0.1, 0.2, 0.7]);
        let b = set(&[0.9, 0.15]);
        let both = set(&[0.1, 0.2, 0.7, 0.9, 0.15]);
        let left = HistogramPosterior::fit(&a, 2).unwrap().update(&b).unwrap();
        assert_eq!(left, HistogramPosterior::fit(&both, 2).unwrap());
    }
}
