//! Calibration toolkit for the five-parameter Variance-Gamma return model.
//!
//! The pipeline: a radix-2 FFT drives a fractional Fourier transform
//! ([`frft`]), which inverts the VG characteristic function and its analytic
//! parameter derivatives into density grids ([`vg`]); log-likelihood, score
//! and observed information are assembled from those grids ([`likelihood`])
//! and maximized by a damped Newton-Raphson driver with method-of-moments
//! initialization ([`optimizer`]); fits are judged by an exact
//! Kolmogorov-Smirnov test ([`gof`]). Price ingestion, log-return
//! construction, outlier filtering and report persistence live in [`data`].

pub mod data;
pub mod error;
pub mod frft;
pub mod gof;
pub mod interp;
pub mod likelihood;
pub mod optimizer;
pub mod vg;

pub use data::{
    filter_outliers, load_prices, log_returns, save_report, OutlierRule, PriceFormat, PriceSeries,
    ReturnSample, RunSummary,
};
pub use error::{Error, ErrorCategory, Result};
pub use frft::{fft, frft, ifft, invert_cf, FrftGrid, FrftPlan};
pub use gof::{ks_null_cdf, ks_null_pdf, ks_statistic, p_value, KsResult};
pub use likelihood::{evaluate, GridChoice, LikelihoodState};
pub use optimizer::{
    fit_clm, fit_mle, init_method_of_moments, ClmFit, FitConfig, FitReport, IterationRow, ModelTag,
};
pub use vg::{
    auto_grid, cdf_grid, cf, cf_gradient, cf_hessian, clm_cdf, clm_density, density_grid, moments,
    sample, CdfGrid, DensityGrid, DerivOrder, GridBudget, Moments, VgParams,
};
