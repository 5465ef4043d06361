pub mod density;
pub mod dpm;
pub mod error;
pub mod fourier;
pub mod gof;
pub mod grid;
pub mod histogram;
pub mod kernel;
pub mod operators;
pub mod quantile;
pub mod study;

pub use density::{derive_seed, sample, DensitySpec, SampleSet};
pub use error::{Error, Result};
pub use grid::{interpolation_check, Grid, GridFunction, Jump, Norm};
pub use kernel::{bandlimited_kernel, KernelSpec};
pub use operators::{ApproxOperator, DominatingKernel, OperatorKind};
pub use histogram::{choose_j, epsilon_rate, prior_kl_ball_mass, DyadicPartition, HistogramPosterior};
pub use dpm::{bayes_estimator, fit_gibbs, mixture_density, DPMixtureSpec, GibbsConfig, MixingMeasure, MixtureKernel, PosteriorDraw};
pub use gof::{mcdiarmid_bound, run_test, statistic, TestConfig, TestReport};
pub use fourier::{estimate_decay, i_beta, lemma1_limit_check, moment_limit_check, CharFunction, DecayEstimate};
pub use quantile::{bias_decomposition, cdf, inversion_identity_check, posterior_quantiles, positivity_guard, quantile, BiasDecomposition, BiasParams, CdfFunction, QuantileReport};
pub use study::{emit, run_quantile_rate_study, run_rate_study, Format, Metric, Model, RateRecord, RateStudyConfig, SlopeFit};
