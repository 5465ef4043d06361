//! Seeded Monte Carlo rate studies and their CSV, JSON, SVG and gnuplot
//! artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{derive_seed, DensitySpec, InverseCdf};
use crate::dpm::{bayes_estimator, fit_gibbs, mixture_density, DPMixtureSpec, GibbsConfig, MixtureKernel};
use crate::error::{invalid, Error, Result};
use crate::fourier::linear_fit;
use crate::grid::{Grid, GridFunction, Norm};
use crate::histogram::{choose_j, histogram_quantile, BinRange, DyadicPartition, HistogramPosterior};
use crate::operators::dyadic_step_function;
use crate::quantile::{cdf, positivity_guard, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Histogram,
    DpmLaplace,
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "histogram" => Ok(Self::Histogram),
            "dpm-laplace" => Ok(Self::DpmLaplace),
            other => Err(invalid!("unknown model {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpmStudyOptions {
    pub alpha_mass: f64,
    /// Base measure is uniform on `[−a, a]`.
    pub base_half_width: f64,
    pub gibbs: GibbsConfig,
}

impl Default for DpmStudyOptions {
    fn default() -> Self {
        Self { alpha_mass: 1.0, base_half_width: 1.0, gibbs: GibbsConfig::default() }
    }
}

/// Optional pass/fail checks evaluated by [`check_assertions`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyAssertions {
    pub slope_range: Option<(f64, f64)>,
    pub quantile_slope_range: Option<(f64, f64)>,
    /// Mean sup error strictly decreasing in `n`.
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateStudyConfig {
    pub study_id: String,
    pub model: Model,
    /// Catalog name of the true density.
    pub truth: String,
    pub n_list: Vec<u64>,
    pub reps: usize,
    pub alpha: f64,
    pub tau: Option<f64>,
    pub master_seed: u64,
    /// Power of `log n` in `n / (log n)^p` on the slope axis.
    pub log_factor_power: f64,
    /// Fixed histogram resolution; `None` follows `choose_j`.
    pub frozen_j: Option<u32>,
    /// Posterior draws per fit for the quantile error.
    pub posterior_draws: usize,
    /// Half-width of the positivity window around the true quantile.
    pub zeta: f64,
    /// Required density infimum on the window; `None` only requires positivity.
    pub min_density: Option<f64>,
    /// Store measured wall times; off by default so CSVs are reproducible.
    pub record_time: bool,
    pub dpm: DpmStudyOptions,
    pub assertions: StudyAssertions,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        Self {
            study_id: "rate-study".into(),
            model: Model::Histogram,
            truth: "lipschitz-sine".into(),
            n_list: (10..=17).map(|k| 1u64 << k).collect(),
            reps: 50,
            alpha: 1.0,
            tau: None,
            master_seed: 20240601,
            log_factor_power: 1.0,
            frozen_j: None,
            posterior_draws: 201,
            zeta: 0.1,
            min_density: None,
            record_time: false,
            dpm: DpmStudyOptions::default(),
            assertions: StudyAssertions::default(),
        }
    }
}

impl RateStudyConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn truth_spec(&self) -> Result<DensitySpec> {
        DensitySpec::by_name(&self.truth).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<DensitySpec> {
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_list must be nonempty and strictly increasing".into()));
        }
        if self.n_list[0] < 2 {
            return Err(Error::Config("sample sizes must be at least 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("tau must lie in (0, 1), got {t}")));
            }
            if self.posterior_draws == 0 {
                return Err(Error::Config("quantile errors need posterior draws".into()));
            }
        }
        let truth = self.truth_spec()?;
        match self.model {
            Model::Histogram if truth.domain != (0.0, 1.0) => Err(Error::Config(format!(
                "histogram model lives on [0, 1] but {} is supported on {:?}",
                truth.name, truth.domain
            ))),
            Model::DpmLaplace
                if !matches!(
                    truth.shape,
                    crate::density::DensityShape::Laplace { .. } | crate::density::DensityShape::LaplaceMixture { .. }
                ) =>
            {
                Err(Error::Config(format!("dpm-laplace needs a Laplace-mixture truth, got {}", truth.name)))
            }
            Model::DpmLaplace if self.tau.is_some() => {
                Err(Error::Config("quantile errors are only implemented for the histogram model".into()))
            }
            _ => Ok(truth),
        }
    }

    pub fn target_exponent(&self, metric: Metric) -> f64 {
        let a = self.alpha;
        match (metric, self.model) {
            (Metric::Quantile, _) => -(a + 1.0) / (2.0 * a + 1.0),
            (_, Model::DpmLaplace) => -3.0 / 8.0,
            (_, Model::Histogram) => -a / (2.0 * a + 1.0),
        }
    }

    /// `ln(n / (ln n)^p)`.
    pub fn rate_axis(&self, n: u64) -> f64 {
        let nf = n as f64;
        nf.ln() - self.log_factor_power * nf.ln().ln()
    }

    pub fn replication_seed(&self, n: u64, rep: usize) -> u64 {
        derive_seed(derive_seed(self.master_seed, n), rep as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub n: u64,
    pub replication: usize,
    pub sup_error: f64,
    pub l1_error: f64,
    pub quantile_error: Option<f64>,
    pub seed: u64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub target_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Sup,
    L1,
    Quantile,
}

impl Metric {
    fn of(self, r: &RateRecord) -> Option<f64> {
        match self {
            Self::Sup => Some(r.sup_error),
            Self::L1 => Some(r.l1_error),
            Self::Quantile => r.quantile_error,
        }
    }
}

/// `(n, mean error)` in increasing `n`.
pub fn mean_by_n(records: &[RateRecord], metric: Metric) -> Result<Vec<(u64, f64)>> {
    let mut ns: Vec<u64> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .map(|r| metric.of(r).ok_or_else(|| invalid!("record at n = {n} lacks a {metric:?} error")))
                .collect::<Result<_>>()?;
            Ok((n, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

/// Least squares slope of `ln(mean error)` against `ln(n / (ln n)^p)`.
pub fn fit_slope(records: &[RateRecord], cfg: &RateStudyConfig, metric: Metric) -> Result<SlopeFit> {
    let means = mean_by_n(records, metric)?;
    if means.len() < 2 {
        return Err(invalid!("a slope needs at least two sample sizes"));
    }
    if means.iter().any(|&(_, m)| !(m > 0.0)) {
        return Err(invalid!("mean errors must be positive to take logs"));
    }
    let xs: Vec<f64> = means.iter().map(|&(n, _)| cfg.rate_axis(n)).collect();
    let ys: Vec<f64> = means.iter().map(|&(_, m)| m.ln()).collect();
    let (intercept, slope, _, stderr) = linear_fit(&xs, &ys);
    Ok(SlopeFit { slope, intercept, stderr, target_exponent: cfg.target_exponent(metric) })
}

/// Per-fit checks of the Laplace mixture posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpmCheck {
    pub n: u64,
    pub replication: usize,
    pub draws: usize,
    pub max_draw_sup: f64,
    /// Largest `|∫ p − 1|` over draws.
    pub max_draw_mass_error: f64,
    pub estimator_sup: f64,
    pub estimator_mass_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub records: Vec<RateRecord>,
    pub dpm_checks: Vec<DpmCheck>,
}

struct Context {
    truth: DensitySpec,
    inverse: InverseCdf,
    grid: Grid,
    p0: GridFunction,
    q0: Option<f64>,
}

fn elapsed_ms(cfg: &RateStudyConfig, start: Instant) -> u64 {
    if cfg.record_time {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

fn histogram_worker(cfg: &RateStudyConfig, ctx: &Context, n: u64, rep: usize) -> Result<RateRecord> {
    let start = Instant::now();
    let seed = cfg.replication_seed(n, rep);
    let samples = ctx.inverse.sample(&ctx.truth, n as usize, seed)?;
    let j = match cfg.frozen_j {
        Some(j) => j,
        None => choose_j(n, cfg.alpha.min(1.0))?,
    };
    let post = HistogramPosterior::fit(&samples, j)?;
    let levels = post.bayes_levels();
    let range = BinRange::new(&ctx.p0, DyadicPartition::new(j)?)?;
    let sup_error = range.sup_distance(&levels);
    let l1_error = dyadic_step_function(&ctx.grid, &levels)?.sub(&ctx.p0)?.norm(Norm::L1);
    let quantile_error = match (cfg.tau, ctx.q0) {
        (Some(tau), Some(q0)) => {
            let draws = post.sample_weights(cfg.posterior_draws, derive_seed(seed, 1));
            let qs = draws.iter().map(|w| histogram_quantile(w, tau)).collect::<Result<Vec<_>>>()?;
            Some((median(qs) - q0).abs())
        }
        _ => None,
    };
    Ok(RateRecord { n, replication: rep, sup_error, l1_error, quantile_error, seed, wall_time_ms: elapsed_ms(cfg, start) })
}

fn dpm_worker(cfg: &RateStudyConfig, ctx: &Context, n: u64, rep: usize) -> Result<(RateRecord, DpmCheck)> {
    let start = Instant::now();
    let seed = cfg.replication_seed(n, rep);
    let samples = ctx.inverse.sample(&ctx.truth, n as usize, seed)?;
    let spec = DPMixtureSpec::laplace(cfg.dpm.alpha_mass, cfg.dpm.base_half_width, n as usize)?;
    let gibbs = GibbsConfig { seed: derive_seed(seed, 1), ..cfg.dpm.gibbs.clone() };
    let fit = fit_gibbs(&samples, &spec, &gibbs)?;
    let est = bayes_estimator(&fit.draws, MixtureKernel::Laplace, &ctx.grid)?;
    let diff = est.sub(&ctx.p0)?;
    let mut max_draw_sup = 0.0f64;
    let mut max_draw_mass_error = 0.0f64;
    for d in &fit.draws {
        let p = mixture_density(&d.mixing, MixtureKernel::Laplace, None, &ctx.grid)?;
        max_draw_sup = max_draw_sup.max(p.max_value());
        max_draw_mass_error = max_draw_mass_error.max((p.integral() - 1.0).abs());
    }
    let check = DpmCheck {
        n,
        replication: rep,
        draws: fit.draws.len(),
        max_draw_sup,
        max_draw_mass_error,
        estimator_sup: est.max_value(),
        estimator_mass_error: (est.integral() - 1.0).abs(),
    };
    let record = RateRecord {
        n,
        replication: rep,
        sup_error: diff.max_abs(),
        l1_error: diff.norm(Norm::L1),
        quantile_error: None,
        seed,
        wall_time_ms: elapsed_ms(cfg, start),
    };
    Ok((record, check))
}

fn context(cfg: &RateStudyConfig) -> Result<Context> {
    let truth = cfg.validate()?;
    let grid = match cfg.model {
        Model::Histogram => Grid::unit(),
        Model::DpmLaplace => truth.default_grid(),
    };
    let p0 = truth.tabulate(&grid);
    let q0 = match cfg.tau {
        Some(tau) => {
            positivity_guard(&p0, tau, cfg.zeta, cfg.min_density.unwrap_or(f64::MIN_POSITIVE))?;
            Some(quantile(&cdf(&p0)?, tau)?)
        }
        None => None,
    };
    Ok(Context { inverse: InverseCdf::new(&truth), truth, grid, p0, q0 })
}

/// All replications, sorted by `(n, replication)`.
pub fn simulate(cfg: &RateStudyConfig) -> Result<StudyOutput> {
    let ctx = context(cfg)?;
    let jobs: Vec<(u64, usize)> = cfg.n_list.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    match cfg.model {
        Model::Histogram => {
            let records = jobs.par_iter().map(|&(n, r)| histogram_worker(cfg, &ctx, n, r)).collect::<Result<_>>()?;
            Ok(StudyOutput { records, dpm_checks: Vec::new() })
        }
        Model::DpmLaplace => {
            let out: Vec<(RateRecord, DpmCheck)> =
                jobs.par_iter().map(|&(n, r)| dpm_worker(cfg, &ctx, n, r)).collect::<Result<_>>()?;
            let (records, dpm_checks) = out.into_iter().unzip();
            Ok(StudyOutput { records, dpm_checks })
        }
    }
}

/// Sup-norm errors of the Bayes estimator and their slope.
pub fn run_rate_study(cfg: &RateStudyConfig) -> Result<(Vec<RateRecord>, SlopeFit)> {
    let out = simulate(cfg)?;
    let fit = fit_slope(&out.records, cfg, Metric::Sup)?;
    Ok((out.records, fit))
}

/// Posterior-median quantile errors and their slope.
pub fn run_quantile_rate_study(cfg: &RateStudyConfig) -> Result<(Vec<RateRecord>, SlopeFit)> {
    if cfg.tau.is_none() {
        return Err(Error::Config("quantile rate study needs tau".into()));
    }
    let out = simulate(cfg)?;
    let fit = fit_slope(&out.records, cfg, Metric::Quantile)?;
    Ok((out.records, fit))
}

/// Failed assertions, empty when everything configured holds.
pub fn check_assertions(cfg: &RateStudyConfig, records: &[RateRecord]) -> Result<Vec<String>> {
    let mut failures = Vec::new();
    let a = &cfg.assertions;
    if let Some((lo, hi)) = a.slope_range {
        let s = fit_slope(records, cfg, Metric::Sup)?.slope;
        if !(lo..=hi).contains(&s) {
            failures.push(format!("sup slope {s:.4} outside [{lo}, {hi}]"));
        }
    }
    if let Some((lo, hi)) = a.quantile_slope_range {
        let s = fit_slope(records, cfg, Metric::Quantile)?.slope;
        if !(lo..=hi).contains(&s) {
            failures.push(format!("quantile slope {s:.4} outside [{lo}, {hi}]"));
        }
    }
    if a.decreasing {
        let means = mean_by_n(records, Metric::Sup)?;
        if means.windows(2).any(|w| w[1].1 >= w[0].1) {
            failures.push(format!("mean sup error not strictly decreasing: {means:?}"));
        }
    }
    Ok(failures)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    study_id: String,
    n: u64,
    replication: usize,
    sup_error: f64,
    l1_error: f64,
    quantile_error: Option<f64>,
    seed: u64,
    wall_time_ms: u64,
}

pub fn csv_string(study_id: &str, records: &[RateRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow {
            study_id: study_id.to_string(),
            n: r.n,
            replication: r.replication,
            sup_error: r.sup_error,
            l1_error: r.l1_error,
            quantile_error: r.quantile_error,
            seed: r.seed,
            wall_time_ms: r.wall_time_ms,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses a CSV written by [`csv_string`] into `(study_id, records)`.
pub fn parse_csv(text: &str) -> Result<(String, Vec<RateRecord>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut id = String::new();
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        id = row.study_id;
        out.push(RateRecord {
            n: row.n,
            replication: row.replication,
            sup_error: row.sup_error,
            l1_error: row.l1_error,
            quantile_error: row.quantile_error,
            seed: row.seed,
            wall_time_ms: row.wall_time_ms,
        });
    }
    Ok((id, out))
}

/// Git object id of `bytes` in a repository using SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: RateStudyConfig,
    pub fit: SlopeFit,
    pub quantile_fit: Option<SlopeFit>,
    pub means: Vec<(u64, f64)>,
    pub csv_hash: String,
    pub failures: Vec<String>,
}

pub fn summarize(cfg: &RateStudyConfig, records: &[RateRecord]) -> Result<StudySummary> {
    let fit = fit_slope(records, cfg, Metric::Sup)?;
    let quantile_fit = if cfg.tau.is_some() { Some(fit_slope(records, cfg, Metric::Quantile)?) } else { None };
    Ok(StudySummary {
        config: cfg.clone(),
        fit,
        quantile_fit,
        means: mean_by_n(records, Metric::Sup)?,
        csv_hash: content_hash(csv_string(&cfg.study_id, records)?.as_bytes()),
        failures: check_assertions(cfg, records)?,
    })
}

/// Log-log scatter with one circle per record and the fitted line.
pub fn svg_string(cfg: &RateStudyConfig, records: &[RateRecord], fit: &SlopeFit, metric: Metric) -> Result<String> {
    if records.is_empty() {
        return Err(invalid!("nothing to plot"));
    }
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (cfg.rate_axis(r.n), metric.of(r).unwrap_or(f64::NAN).max(1e-300).ln()))
        .collect();
    let (w, h, pad) = (640.0, 480.0, 50.0);
    let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let line_y = |x: f64| fit.intercept + fit.slope * x;
    let ys = pts.iter().map(|p| p.1).chain([line_y(x0), line_y(x1)]).filter(|y| y.is_finite());
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let sx = |x: f64| pad + (x - x0) / span_x * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / span_y * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).ok();
    writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#).ok();
    writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    )
    .ok();
    writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">ln(n / (ln n)^{})</text>"#, w / 2.0, h - 15.0, cfg.log_factor_power).ok();
    writeln!(s, r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">ln error</text>"#, h / 2.0, h / 2.0).ok();
    writeln!(s, r#"<text x="{}" y="30" font-size="13">{}: slope {:.4} (target {:.4})</text>"#, pad, cfg.study_id, fit.slope, fit.target_exponent).ok();
    for (x, y) in &pts {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue" fill-opacity="0.6"/>"#, sx(*x), sy(*y)).ok();
    }
    writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-width="2"/>"#,
        sx(x0),
        sy(line_y(x0)),
        sx(x1),
        sy(line_y(x1))
    )
    .ok();
    s.push_str("</svg>\n");
    Ok(s)
}

/// Self-contained gnuplot script with the data inlined.
pub fn gnuplot_string(cfg: &RateStudyConfig, records: &[RateRecord], fit: &SlopeFit, metric: Metric) -> Result<String> {
    if records.is_empty() {
        return Err(invalid!("nothing to plot"));
    }
    let mut s = String::new();
    writeln!(s, "set terminal svg size 640,480").ok();
    writeln!(s, "set output '{}.gnuplot.svg'", cfg.study_id).ok();
    writeln!(s, "set xlabel 'ln(n / (ln n)^{})'", cfg.log_factor_power).ok();
    writeln!(s, "set ylabel 'ln error'").ok();
    writeln!(s, "f(x) = {} + {} * x", fit.intercept, fit.slope).ok();
    writeln!(s, "$data << EOD").ok();
    for r in records {
        if let Some(e) = metric.of(r) {
            writeln!(s, "{} {}", cfg.rate_axis(r.n), e.ln()).ok();
        }
    }
    writeln!(s, "EOD").ok();
    writeln!(s, "plot $data using 1:2 with points title 'replications', f(x) with lines title 'slope {:.4}'", fit.slope).ok();
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
    Gnuplot,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            "gnuplot" => Ok(Self::Gnuplot),
            other => Err(invalid!("unknown format {other:?}")),
        }
    }
}

/// Writes `<study_id>.<ext>` for each format into `dir`.
pub fn emit(cfg: &RateStudyConfig, records: &[RateRecord], formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(invalid!("no records to emit"));
    }
    fs::create_dir_all(dir)?;
    let metric = if cfg.tau.is_some() && cfg.assertions.slope_range.is_none() { Metric::Quantile } else { Metric::Sup };
    let fit = fit_slope(records, cfg, metric)?;
    let mut written = Vec::new();
    for f in formats {
        let (ext, body) = match f {
            Format::Csv => ("csv", csv_string(&cfg.study_id, records)?),
            Format::Json => ("json", serde_json::to_string_pretty(&summarize(cfg, records)?)? + "\n"),
            Format::Svg => ("svg", svg_string(cfg, records, &fit, metric)?),
            Format::Gnuplot => ("gp", gnuplot_string(cfg, records, &fit, metric)?),
        };
        let path = dir.join(format!("{}.{ext}", cfg.study_id));
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `x,density` rows for every grid node.
pub fn write_density_csv(path: &Path, f: &GridFunction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "density"])?;
    for (x, v) in f.grid().points().zip(f.values()) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_density_csv`]; nodes must be equally spaced.
pub fn read_density_csv(path: &Path) -> Result<GridFunction> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for row in rdr.deserialize() {
        let (x, v): (f64, f64) = row?;
        xs.push(x);
        vs.push(v);
    }
    if xs.len() < 2 {
        return Err(invalid!("{} holds fewer than two nodes", path.display()));
    }
    let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * grid.step().max(1.0);
    if xs.iter().enumerate().any(|(i, &x)| (x - grid.point(i)).abs() > tol) {
        return Err(invalid!("{} is not on an equally spaced grid", path.display()));
    }
    GridFunction::new(grid, vs)
}

/// Every `*.csv` in `dir`, sorted by file name.
pub fn read_density_dir(dir: &Path) -> Result<Vec<(String, GridFunction)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(invalid!("no .csv draws in {}", dir.display()));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, read_density_csv(&p)?))
        })
        .collect()
}
