use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use supnorm_core::dpm::{bayes_estimator, fit_gibbs, mixture_density, DPMixtureSpec, GibbsConfig, MixtureKernel};
use supnorm_core::fourier::lemma1_limit_check;
use supnorm_core::histogram::{choose_j, epsilon_rate, BinRange, HistogramPosterior};
use supnorm_core::operators::dyadic_step_function;
use supnorm_core::quantile::{cdf, posterior_quantiles, quantile};
use supnorm_core::study::{
    check_assertions, emit, read_density_dir, summarize, write_density_csv, Format, RateStudyConfig,
};
use supnorm_core::{
    derive_seed, run_test, ApproxOperator, DensitySpec, Error, Grid, GridFunction, KernelSpec, Norm, Result, SampleSet, TestConfig,
};

#[derive(Parser)]
#[command(name = "supnorm", version, about = "Sup-norm rates for Bayesian density estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the one in a study config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated output formats: csv, json, svg, gnuplot.
    #[arg(long, global = true, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo rate study driven by a JSON config.
    RateStudy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dirichlet posterior over a dyadic histogram on [0, 1].
    FitHistogram {
        #[command(flatten)]
        source: Source,
        /// Resolution; defaults to the rate-optimal choice.
        #[arg(long, alias = "J")]
        j: Option<u32>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Posterior draws to write under `<out-dir>/draws`.
        #[arg(long, default_value_t = 0)]
        draws: usize,
    },
    /// Blocked Gibbs fit of a Dirichlet process mixture.
    FitDpm {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "laplace")]
        kernel: MixtureKernel,
        #[arg(long, default_value_t = 1.0)]
        alpha_mass: f64,
        /// Half-width of the uniform base (Laplace kernel).
        #[arg(long, alias = "a", default_value_t = 1.0)]
        base_half_width: f64,
        /// Base `∝ exp(−b|θ|^δ)` for the Gaussian kernel.
        #[arg(long, default_value_t = 1.0)]
        base_b: f64,
        #[arg(long, default_value_t = 2.0)]
        base_delta: f64,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
        #[arg(long, default_value_t = 1000)]
        burnin: usize,
        #[arg(long, default_value_t = 3)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        draws: usize,
    },
    /// Goodness-of-fit test of a sample against a catalog null.
    TestGof {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        null: String,
        #[arg(long, alias = "J")]
        j: u32,
        /// `haar`, `gaussian`, `laplace` or `bandlimited`.
        #[arg(long, default_value = "haar")]
        operator: String,
        #[arg(long, alias = "r", default_value = "sup")]
        norm: Norm,
        #[arg(long, alias = "M0", default_value_t = 2.0)]
        m0: f64,
        /// Rate `ε_{n,r}`; defaults to `√(2^J ln n / n)`.
        #[arg(long)]
        eps: Option<f64>,
        /// Exit nonzero unless the decision matches.
        #[arg(long)]
        expect: Option<Expect>,
    },
    /// Per-draw quantiles of the densities stored in a directory.
    Quantile {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Small-bandwidth limit of the smoothing error.
    Lemma1Check {
        #[arg(long, alias = "p", default_value = "laplace")]
        density: String,
        #[arg(long, alias = "h", default_value = "gaussian")]
        kernel: KernelSpec,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.0316227766,0.01,0.00316227766")]
        deltas: Vec<f64>,
        /// Allowed `|ratio − 1|` at the smallest bandwidth.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
    },
}

/// Observations come from `--data`, or are sampled from `--truth`.
#[derive(Args)]
struct Source {
    /// CSV whose first column holds the observations.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Catalog density to sample from; with `--data` it only serves as reference.
    #[arg(long)]
    truth: Option<String>,
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    n: Option<u64>,
}

impl Source {
    fn load(&self, default_truth: &str, seed: u64) -> Result<(SampleSet, Option<DensitySpec>)> {
        match &self.data {
            Some(path) => {
                let truth = self.truth.as_deref().map(DensitySpec::by_name).transpose()?;
                Ok((read_samples(path)?, truth))
            }
            None => {
                let truth = DensitySpec::by_name(self.truth.as_deref().unwrap_or(default_truth))?;
                let n = self.n.expect("clap enforces --n without --data");
                Ok((truth.sample(n as usize, seed)?, Some(truth)))
            }
        }
    }
}

fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if i == 0 => continue,
            _ => return Err(Error::InvalidInput(format!("{}: row {}: {field:?} is not a number", path.display(), i + 1))),
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no observations", path.display())));
    }
    Ok(SampleSet { values, seed: 0, source: path.display().to_string() })
}

fn write_function_csv(path: &Path, f: &GridFunction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value"])?;
    for (x, v) in f.grid().points().zip(f.values()) {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Expect {
    Accept,
    Reject,
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

/// `Ok(true)` when every assertion of the command holds.
fn run(cli: Cli) -> Result<bool> {
    let Common { seed, out_dir, format } = cli.common;
    let seed_or = |d: u64| seed.unwrap_or(d);
    match cli.command {
        Command::RateStudy { config } => {
            let mut cfg = RateStudyConfig::from_json_file(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = supnorm_core::study::simulate(&cfg)?;
            let paths = emit(&cfg, &out.records, &format, &out_dir)?;
            report(&paths);
            let summary = summarize(&cfg, &out.records)?;
            println!("sup slope {:.4} (target {:.4})", summary.fit.slope, summary.fit.target_exponent);
            if let Some(q) = summary.quantile_fit {
                println!("quantile slope {:.4} (target {:.4})", q.slope, q.target_exponent);
            }
            let failures = check_assertions(&cfg, &out.records)?;
            for f in &failures {
                eprintln!("assertion failed: {f}");
            }
            Ok(failures.is_empty())
        }
        Command::FitHistogram { source, j, alpha, draws } => {
            let (samples, truth) = source.load("lipschitz-sine", seed_or(1))?;
            let n = samples.len() as u64;
            let j = match j {
                Some(j) => j,
                None => choose_j(n, alpha)?,
            };
            let post = HistogramPosterior::fit(&samples, j)?;
            let grid = Grid::unit();
            let levels = post.bayes_levels();
            let mean = dyadic_step_function(&grid, &levels)?;
            let mut summary = json!({
                "J": j, "n": n, "counts": post.counts, "bayes_levels": levels,
                "source": samples.source, "seed": samples.seed, "epsilon": epsilon_rate(n, alpha),
            });
            let mut errors = None;
            if let Some(spec) = &truth {
                let p0 = spec.tabulate(&grid);
                let sup = BinRange::new(&p0, post.partition)?.sup_distance(&levels);
                let l1 = mean.sub(&p0)?.norm(Norm::L1);
                summary["truth"] = json!(spec.name);
                summary["sup_error"] = json!(sup);
                summary["l1_error"] = json!(l1);
                errors = Some((sup, l1));
            }
            fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("bayes_mean.csv");
            write_function_csv(&csv_path, &mean)?;
            let mut paths = vec![csv_path, write_json(&out_dir, "histogram.json", &summary)?];
            if draws > 0 {
                let dir = out_dir.join("draws");
                fs::create_dir_all(&dir)?;
                for (k, d) in post.sample_posterior(draws, derive_seed(seed_or(1), 1), &grid)?.iter().enumerate() {
                    write_density_csv(&dir.join(format!("draw_{k:05}.csv")), d)?;
                }
                paths.push(dir);
            }
            report(&paths);
            match errors {
                Some((sup, l1)) => println!("J = {j}, sup error {sup:.5}, L1 error {l1:.5}"),
                None => println!("J = {j}, n = {n}"),
            }
            Ok(true)
        }
        Command::FitDpm { source, kernel, alpha_mass, base_half_width, base_b, base_delta, iters, burnin, thin, draws } => {
            let (samples, truth) = source.load("laplace-2atom", seed_or(1))?;
            let n = samples.len();
            let model = match kernel {
                MixtureKernel::Laplace => DPMixtureSpec::laplace(alpha_mass, base_half_width, n)?,
                MixtureKernel::Gaussian => DPMixtureSpec::gaussian(alpha_mass, base_b, base_delta, n)?,
            };
            let cfg = GibbsConfig { iters, burnin, thin, seed: derive_seed(seed_or(1), 1), ..GibbsConfig::default() };
            let fit = fit_gibbs(&samples, &model, &cfg)?;
            let grid = match &truth {
                Some(spec) => spec.default_grid(),
                None => {
                    let (lo, hi) = samples.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                    Grid::new(lo - 10.0, hi + 10.0, 8193)?
                }
            };
            let est = bayes_estimator(&fit.draws, kernel, &grid)?;
            let mut summary = json!({
                "n": n, "source": samples.source, "seed": samples.seed, "kernel": kernel,
                "draws": fit.draws.len(), "truncation": model.truncation,
                "atom_acceptance": fit.diagnostics.atom_acceptance,
                "sigma_acceptance": fit.diagnostics.sigma_acceptance,
                "cluster_trace": fit.diagnostics.cluster_trace,
                "estimator_max": est.max_value(), "estimator_mass": est.integral(),
            });
            if let Some(spec) = &truth {
                let diff = est.sub(&spec.tabulate(&grid))?;
                summary["truth"] = json!(spec.name);
                summary["sup_error"] = json!(diff.max_abs());
                summary["l1_error"] = json!(diff.norm(Norm::L1));
                println!("sup error {:.5}, L1 error {:.5}", diff.max_abs(), diff.norm(Norm::L1));
            }
            fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("bayes_estimator.csv");
            write_function_csv(&csv_path, &est)?;
            let mut paths = vec![csv_path, write_json(&out_dir, "dpm.json", &summary)?];
            if draws > 0 {
                let dir = out_dir.join("draws");
                fs::create_dir_all(&dir)?;
                let stride = (fit.draws.len() / draws).max(1);
                for (k, d) in fit.draws.iter().step_by(stride).take(draws).enumerate() {
                    let p = mixture_density(&d.mixing, kernel, d.sigma, &grid)?;
                    write_density_csv(&dir.join(format!("draw_{k:05}.csv")), &p)?;
                }
                paths.push(dir);
            }
            report(&paths);
            println!("atom acceptance {:.3}, max p̂ {:.5}", fit.diagnostics.atom_acceptance, est.max_value());
            Ok(kernel == MixtureKernel::Gaussian || est.max_value() <= 0.5 + 1e-9)
        }
        Command::TestGof { source, null, j, operator, norm, m0, eps, expect } => {
            let (samples, _) = source.load("uniform", seed_or(1))?;
            let n = samples.len();
            let null = DensitySpec::by_name(&null)?;
            let grid = if null.domain == (0.0, 1.0) { Grid::unit() } else { null.default_grid() };
            let op = ApproxOperator::by_name(&operator, j)?;
            let eps = eps.unwrap_or_else(|| ((j as f64).exp2() * (n as f64).ln() / n as f64).sqrt());
            let cfg = TestConfig::new(norm, op, m0, eps)?;
            let rep = run_test(&samples, &null.tabulate(&grid), &cfg)?;
            let path = write_json(&out_dir, "gof.json", &serde_json::to_value(&rep)?)?;
            report(&[path]);
            println!(
                "statistic {:.5}, threshold {:.5}: {}",
                rep.statistic,
                rep.threshold,
                if rep.reject { "reject" } else { "accept" }
            );
            Ok(match expect {
                Some(Expect::Reject) => rep.reject,
                Some(Expect::Accept) => !rep.reject,
                None => true,
            })
        }
        Command::Quantile { draws, tau } => {
            let loaded = read_density_dir(&draws)?;
            let fs_: Vec<_> = loaded.iter().map(|(_, f)| f.clone()).collect();
            let qs = posterior_quantiles(&fs_, tau)?;
            fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("quantiles.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["draw", "quantile"])?;
            for ((name, _), q) in loaded.iter().zip(&qs) {
                w.write_record([name.clone(), q.to_string()])?;
            }
            w.flush()?;
            let mut sorted = qs.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
            let mean_density = {
                let first = &fs_[0];
                let mut acc = first.scale(0.0);
                for f in &fs_ {
                    acc = acc.lin_comb(1.0, f, 1.0 / fs_.len() as f64)?;
                }
                acc
            };
            let summary = json!({
                "tau": tau, "draws": qs.len(), "median": median,
                "min": sorted[0], "max": sorted[sorted.len() - 1],
                "quantile_of_mean_density": quantile(&cdf(&mean_density)?, tau)?,
            });
            let json_path = write_json(&out_dir, "quantile_summary.json", &summary)?;
            report(&[csv_path, json_path]);
            println!("median {tau}-quantile over {} draws: {median:.6}", qs.len());
            Ok(true)
        }
        Command::Lemma1Check { density, kernel, beta, deltas, tolerance } => {
            let p = DensitySpec::by_name(&density)?;
            let table = lemma1_limit_check(&p, &kernel, beta, &deltas)?;
            let json_path = write_json(&out_dir, "lemma1.json", &serde_json::to_value(&table)?)?;
            let csv_path = out_dir.join("lemma1.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["delta", "l2sq", "ratio"])?;
            for r in &table.rows {
                w.write_record([r.delta.to_string(), r.l2sq.to_string(), r.ratio.to_string()])?;
            }
            w.flush()?;
            report(&[json_path, csv_path]);
            println!("B_p = {:.5}, beta = {:.4}, I_beta = {:.6}", table.decay.b, table.decay.beta, table.i_beta);
            for r in &table.rows {
                println!("delta {:.3e}  l2sq {:.6e}  ratio {:.5}", r.delta, r.l2sq, r.ratio);
            }
            println!("log-log slope {:.4} (expected {:.4})", table.slope, 2.0 * beta - 1.0);
            let smallest = table.rows.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).expect("nonempty");
            Ok((smallest.ratio - 1.0).abs() <= tolerance)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidInput(_) | Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
