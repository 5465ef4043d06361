//! Plug-in goodness-of-fit test `Ψ = 1{‖p̂_n − p_0‖_r > M_0 ε}` with its
//! bounded-differences calibration.

use serde::{Deserialize, Serialize};

use crate::density::{derive_seed, DensitySpec, InverseCdf, SampleSet};
use crate::error::{invalid, Result};
use crate::grid::{Grid, GridFunction, Norm};
use crate::operators::ApproxOperator;

#[derive(Debug, Clone)]
pub struct TestConfig {
    pub r: Norm,
    pub operator: ApproxOperator,
    pub m0: f64,
    pub eps_nr: f64,
    /// `‖Φ‖_1` of the dominating kernel.
    pub phi_l1: f64,
    /// Expected value of `h` under the null, if known; shifts the
    /// concentration bound reported by [`run_test`].
    pub h_mean: Option<f64>,
}

impl TestConfig {
    pub fn new(r: Norm, operator: ApproxOperator, m0: f64, eps_nr: f64) -> Result<Self> {
        if !(m0 > 0.0 && eps_nr > 0.0) {
            return Err(invalid!("M0 and ε must be positive"));
        }
        if r == Norm::L2 {
            return Err(invalid!("the test is defined for r = L1 or sup"));
        }
        let phi_l1 = operator.dominating().l1_norm();
        Ok(Self { r, operator, m0, eps_nr, phi_l1, h_mean: None })
    }

    pub fn j(&self) -> u32 {
        self.operator.j()
    }

    pub fn threshold(&self) -> f64 {
        self.m0 * self.eps_nr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// `T_{n,r} = ‖p̂_n − p_0‖_r`.
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// `h = ‖p̂_n − K_J(p_0)‖_1`.
    pub h_value: f64,
    /// `‖K_J(p_0) − p_0‖_r`.
    pub bias: f64,
    /// McDiarmid bound at `t = threshold − bias − E h`, capped at 1.
    pub mcdiarmid_bound_at_threshold: f64,
}

/// `T_{n,r} = ‖p̂_n − p_0‖_r`.
pub fn statistic(samples: &SampleSet, p0: &GridFunction, cfg: &TestConfig) -> Result<f64> {
    let est = cfg.operator.estimator(samples, p0.grid())?;
    Ok(est.sub(p0)?.norm(cfg.r))
}

/// `2 exp(−n t² / (2 ‖Φ‖_1²))`.
pub fn mcdiarmid_bound(n: usize, t: f64, phi_l1: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid!("deviation t must be positive, got {t}"));
    }
    if !(phi_l1 > 0.0) {
        return Err(invalid!("‖Φ‖_1 must be positive"));
    }
    Ok(2.0 * (-(n as f64) * t * t / (2.0 * phi_l1 * phi_l1)).exp())
}

/// Statistic, `h` and bias from a single pass.
struct Parts {
    statistic: f64,
    h: f64,
}

fn parts(samples: &SampleSet, p0: &GridFunction, smoothed: &GridFunction, cfg: &TestConfig) -> Result<Parts> {
    let est = cfg.operator.estimator(samples, p0.grid())?;
    Ok(Parts { statistic: est.sub(p0)?.norm(cfg.r), h: est.sub(smoothed)?.norm(Norm::L1) })
}

pub fn run_test(samples: &SampleSet, p0: &GridFunction, cfg: &TestConfig) -> Result<TestReport> {
    let smoothed = cfg.operator.smooth(p0)?;
    let bias = smoothed.sub(p0)?.norm(cfg.r);
    let p = parts(samples, p0, &smoothed, cfg)?;
    let threshold = cfg.threshold();
    let t = threshold - bias - cfg.h_mean.unwrap_or(0.0);
    let bound = if t > 0.0 { mcdiarmid_bound(samples.len(), t, cfg.phi_l1)?.min(1.0) } else { 1.0 };
    Ok(TestReport {
        statistic: p.statistic,
        threshold,
        reject: p.statistic > threshold,
        h_value: p.h,
        bias,
        mcdiarmid_bound_at_threshold: bound,
    })
}

/// Replicated draws of `h` and `T_{n,r}` under a catalog density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replications {
    pub h: Vec<f64>,
    pub statistic: Vec<f64>,
    /// `‖K_J(p_0) − p_0‖_r` and `‖K_J(p_0) − p_0‖_1`.
    pub bias_r: f64,
    pub bias_l1: f64,
}

/// Simulates `reps` samples of size `n` from `truth` and evaluates the test
/// parts against `p0` on `grid`.
pub fn replicate(
    truth: &DensitySpec,
    p0: &GridFunction,
    cfg: &TestConfig,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Replications> {
    if reps == 0 {
        return Err(invalid!("need at least one replication"));
    }
    let table = InverseCdf::new(truth);
    let smoothed = cfg.operator.smooth(p0)?;
    let bias = smoothed.sub(p0)?;
    let mut h = Vec::with_capacity(reps);
    let mut stat = Vec::with_capacity(reps);
    for rep in 0..reps {
        let xs = table.sample(truth, n, derive_seed(seed, rep as u64))?;
        let p = parts(&xs, p0, &smoothed, cfg)?;
        h.push(p.h);
        stat.push(p.statistic);
    }
    Ok(Replications { h, statistic: stat, bias_r: bias.norm(cfg.r), bias_l1: bias.norm(Norm::L1) })
}

/// `L = √(2/(s−1)) ‖Φ²‖_{L¹(μ_s)}^{1/2} ‖p_0‖_{L¹(μ_s)}^{1/2}`.
pub fn expectation_constant(op: &ApproxOperator, p0: &GridFunction, s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(invalid!("weight exponent s must exceed 1, got {s}"));
    }
    let phi2 = op.dominating().squared_weighted_l1(s);
    Ok((2.0 / (s - 1.0)).sqrt() * phi2.sqrt() * p0.weighted_l1_norm(s)?.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub mean_h: f64,
    /// `L √(2^J / n)`.
    pub cap: f64,
    pub constant: f64,
    pub std_error: f64,
}

/// Monte Carlo mean of `h` under `p0` against the cap `L √(2^J/n)`.
pub fn expectation_bound_check(
    p0: &DensitySpec,
    grid: &Grid,
    op: &ApproxOperator,
    n: usize,
    reps: usize,
    seed: u64,
    s: f64,
) -> Result<ExpectationCheck> {
    let tab = p0.tabulate(grid);
    let cfg = TestConfig::new(Norm::L1, op.clone(), 1.0, 1.0)?;
    let r = replicate(p0, &tab, &cfg, n, reps, seed)?;
    let (mean, sd) = mean_sd(&r.h);
    let constant = expectation_constant(op, &tab, s)?;
    let cap = constant * ((op.j() as f64).exp2() / n as f64).sqrt();
    Ok(ExpectationCheck { mean_h: mean, cap, constant, std_error: sd / (reps as f64).sqrt() })
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// One row of the empirical-versus-bound tail comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub mc_sigma: f64,
}

impl TailRow {
    pub fn holds(&self, sigmas: f64) -> bool {
        self.empirical <= self.bound + sigmas * self.mc_sigma
    }
}

/// Empirical `P(|h − h̄| ≥ t)` against `2 exp(−n t²/(2‖Φ‖_1²))`.
pub fn concentration_table(h: &[f64], n: usize, phi_l1: f64, ts: &[f64]) -> Result<Vec<TailRow>> {
    let (mean, _) = mean_sd(h);
    let reps = h.len() as f64;
    ts.iter()
        .map(|&t| {
            let freq = h.iter().filter(|&&v| (v - mean).abs() >= t).count() as f64 / reps;
            Ok(TailRow {
                t,
                empirical: freq,
                bound: mcdiarmid_bound(n, t, phi_l1)?,
                mc_sigma: (freq * (1.0 - freq) / reps).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub type_one: f64,
    pub type_two: f64,
}

/// Rejection rate under `p0` and acceptance rate under `p1`.
pub fn error_rates(
    p0: &DensitySpec,
    p1: &DensitySpec,
    grid: &Grid,
    cfg: &TestConfig,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ErrorRates> {
    let tab = p0.tabulate(grid);
    let threshold = cfg.threshold();
    let null = replicate(p0, &tab, cfg, n, reps, seed)?;
    let alt = if p1 == p0 { null.clone() } else { replicate(p1, &tab, cfg, n, reps, seed)? };
    let rate = |v: &[f64], pred: &dyn Fn(f64) -> bool| v.iter().filter(|&&x| pred(x)).count() as f64 / v.len() as f64;
    Ok(ErrorRates {
        type_one: rate(&null.statistic, &|x| x > threshold),
        type_two: rate(&alt.statistic, &|x| x <= threshold),
    })
}

/// Regression of `log mean h` on `(J, log n)`; returns the two slopes.
pub fn scaling_regression(rows: &[(u32, usize, f64)]) -> Result<(f64, f64)> {
    if rows.len() < 3 {
        return Err(invalid!("need at least three (J, n) cells"));
    }
    // normal equations for y = c + a J + b log n
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for &(j, n, m) in rows {
        let x = [1.0, j as f64, (n as f64).ln()];
        let y = m.ln();
        for a in 0..3 {
            xty[a] += x[a] * y;
            for b in 0..3 {
                xtx[a][b] += x[a] * x[b];
            }
        }
    }
    let sol = solve3(xtx, xty).ok_or_else(|| invalid!("degenerate design for the scaling regression"))?;
    Ok((sol[1], sol[2]))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
