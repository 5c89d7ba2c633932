//! Translation of parsed arguments into a validated run specification, and
//! the execution of each subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vgfit_core::data::{self, load_returns, save_returns, RunSummary, FORMAT_VERSION};
use vgfit_core::likelihood::GridChoice;
use vgfit_core::vg::{self, DerivOrder, GridBudget, GridChecks, PARAM_NAMES, SYM_PAIRS};
use vgfit_core::{
    cdf_grid, fit_clm, fit_mle, init_method_of_moments, ks_null_pdf, ks_statistic, load_prices,
    log_returns, Error, FitConfig, FitReport, FrftGrid, KsResult, OutlierRule, PriceFormat,
    Result, ReturnSample, VgParams,
};

use crate::{Command, DataArgs, GridArgs, InputKind, Model, ParamArgs};

/// Starting-point selection for likelihood fits.
#[derive(Debug, Clone)]
pub enum InitMode {
    Default,
    Moments,
    Explicit(VgParams),
}

/// A fully validated run request.
pub enum RunSpec {
    Density {
        params: VgParams,
        grid: GridArgs,
        order: DerivOrder,
        allow_truncation: bool,
        out_dir: PathBuf,
    },
    Fit {
        data: DataArgs,
        model: Model,
        init: InitMode,
        grid: GridArgs,
        out_dir: PathBuf,
    },
    Ks {
        data: DataArgs,
        model: Model,
        init: InitMode,
        grid: GridArgs,
        null_density: bool,
        out_dir: PathBuf,
    },
    Simulate {
        params: VgParams,
        count: usize,
        seed: u64,
        out_dir: PathBuf,
    },
    Report {
        inputs: Vec<PathBuf>,
        out_dir: PathBuf,
    },
}

fn parse_params(p: &ParamArgs) -> std::result::Result<VgParams, String> {
    VgParams::new(p.mu, p.delta, p.sigma, p.alpha, p.theta).map_err(|e| e.to_string())
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    match s {
        "default" => Ok(InitMode::Default),
        "moments" => Ok(InitMode::Moments),
        other => {
            let parts: Vec<&str> = other.split(',').collect();
            if parts.len() != 5 {
                return Err(format!(
                    "--init expects `default`, `moments` or `mu,delta,sigma,alpha,theta`, got `{other}`"
                ));
            }
            let mut vals = [0.0f64; 5];
            for (slot, part) in vals.iter_mut().zip(&parts) {
                *slot = part
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad init component `{part}`: {e}"))?;
            }
            VgParams::from_array(vals)
                .map(InitMode::Explicit)
                .map_err(|e| e.to_string())
        }
    }
}

fn parse_order(order: u8) -> std::result::Result<DerivOrder, String> {
    match order {
        0 => Ok(DerivOrder::Density),
        1 => Ok(DerivOrder::Gradient),
        2 => Ok(DerivOrder::Hessian),
        other => Err(format!("--order must be 0, 1 or 2, got {other}")),
    }
}

pub fn parse_outlier_rule(s: &str) -> std::result::Result<OutlierRule, String> {
    if s == "none" {
        return Ok(OutlierRule::None);
    }
    if let Some(t) = s.strip_prefix("abs:") {
        let threshold: f64 = t.parse().map_err(|e| format!("bad threshold `{t}`: {e}"))?;
        return Ok(OutlierRule::AbsThreshold { threshold });
    }
    if let Some(k) = s.strip_prefix("z:") {
        let k: f64 = k.parse().map_err(|e| format!("bad z bound `{k}`: {e}"))?;
        return Ok(OutlierRule::ZScore { k });
    }
    Err(format!(
        "--outlier-rule expects `none`, `abs:<threshold>` or `z:<k>`, got `{s}`"
    ))
}

impl RunSpec {
    pub fn from_command(cmd: Command) -> std::result::Result<Self, String> {
        Ok(match cmd {
            Command::Density {
                params,
                grid,
                order,
                allow_truncation,
                out_dir,
            } => RunSpec::Density {
                params: parse_params(&params)?,
                grid,
                order: parse_order(order)?,
                allow_truncation,
                out_dir,
            },
            Command::Fit {
                data,
                model,
                init,
                grid,
                out_dir,
            } => {
                parse_outlier_rule(&data.outlier_rule)?;
                RunSpec::Fit {
                    data,
                    model,
                    init: parse_init(&init)?,
                    grid,
                    out_dir,
                }
            }
            Command::Ks {
                data,
                model,
                init,
                grid,
                null_density,
                out_dir,
            } => {
                parse_outlier_rule(&data.outlier_rule)?;
                RunSpec::Ks {
                    data,
                    model,
                    init: parse_init(&init)?,
                    grid,
                    null_density,
                    out_dir,
                }
            }
            Command::Simulate {
                params,
                count,
                seed,
                out_dir,
            } => {
                if count == 0 {
                    return Err("--count must be at least 1".into());
                }
                RunSpec::Simulate {
                    params: parse_params(&params)?,
                    count,
                    seed,
                    out_dir,
                }
            }
            Command::Report { inputs, out_dir } => RunSpec::Report { inputs, out_dir },
        })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn load_sample(data: &DataArgs) -> Result<ReturnSample> {
    let raw = match data.input_kind {
        InputKind::Prices => {
            let prices = load_prices(&data.input, PriceFormat::Csv)?;
            log_returns(&prices, data.scale)?
        }
        InputKind::Returns => load_returns(&data.input)?,
    };
    let rule = parse_outlier_rule(&data.outlier_rule).map_err(Error::Domain)?;
    data::filter_outliers(&raw, &rule, data.max_removal)
}

fn grid_choice(grid: &GridArgs, params: &VgParams, values: &[f64]) -> Result<GridChoice> {
    match (grid.a, grid.n) {
        (None, None) => Ok(GridChoice::Auto(GridBudget::fit())),
        (Some(a), Some(n)) => {
            let half_span = vg::half_span_for(params, values);
            Ok(GridChoice::Fixed(FrftGrid::with_output_span(
                a, n, half_span,
            )?))
        }
        _ => Err(Error::Domain(
            "grid overrides need both --a and --n".into(),
        )),
    }
}

fn fit_vg(
    sample: &ReturnSample,
    model: Model,
    init: &InitMode,
    grid: &GridArgs,
) -> Result<FitReport> {
    let symmetric = model == Model::Svg;
    let init = match init {
        InitMode::Default => FitConfig::default_init(),
        InitMode::Moments => init_method_of_moments(sample, symmetric)?,
        InitMode::Explicit(p) => *p,
    };
    let config = FitConfig {
        init,
        symmetric,
        grid: grid_choice(grid, &init, sample.values())?,
        ..FitConfig::default()
    };
    fit_mle(sample, &config)
}

/// CLM "fit report" shaped like the VG ones so persistence is uniform:
/// Gaussian returns are the `α = 1/θ, θ → 0` corner of the model family.
fn clm_summary(sample: &ReturnSample, ks: Option<&KsResult>) -> Result<RunSummary> {
    let fit = fit_clm(sample)?;
    Ok(RunSummary {
        version: FORMAT_VERSION.into(),
        model: "CLM".into(),
        mu: fit.mu,
        delta: None,
        sigma: fit.sigma,
        alpha: None,
        theta: None,
        loglik: fit.loglik,
        grad_norm: None,
        converged: Some(true),
        iterations: None,
        condition_number: None,
        sample_size: ks.map(|k| k.n),
        d_n: ks.map(|k| k.d_n),
        d_plus: ks.map(|k| k.d_plus),
        d_minus: ks.map(|k| k.d_minus),
        p_value: ks.and_then(|k| k.p_value),
    })
}

fn run_density(
    params: &VgParams,
    grid_args: &GridArgs,
    order: DerivOrder,
    allow_truncation: bool,
    out_dir: &Path,
) -> Result<()> {
    let grid = match (grid_args.a, grid_args.n) {
        (Some(a), Some(n)) => FrftGrid::square(a, n)?,
        (None, None) => vg::auto_grid(
            params,
            vg::half_span_for(params, &[]),
            &GridBudget::default(),
        )?,
        _ => {
            return Err(Error::Domain(
                "grid overrides need both --a and --n".into(),
            ))
        }
    };
    let checks = if allow_truncation {
        GridChecks::Lenient
    } else {
        GridChecks::Strict
    };
    let dg = vg::density_grid_with(params, &grid, order, checks)?;
    if let Some(tail) = dg.tail_warning() {
        eprintln!(
            "warning: transform magnitude {tail:.3e} at the grid edge; density carries truncation error"
        );
    }

    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(
        out,
        "# params mu={} delta={} sigma={} alpha={} theta={} | grid a={} n={}",
        params.mu,
        params.delta,
        params.sigma,
        params.alpha,
        params.theta,
        grid.a(),
        grid.n()
    );
    let mut header = vec!["x".to_string(), "f".to_string()];
    if order >= DerivOrder::Gradient {
        header.extend(PARAM_NAMES.iter().map(|n| format!("df_d{n}")));
    }
    if order >= DerivOrder::Hessian {
        header.extend(
            SYM_PAIRS
                .iter()
                .map(|&(j, k)| format!("d2f_d{}_d{}", PARAM_NAMES[j], PARAM_NAMES[k])),
        );
    }
    let _ = writeln!(out, "{}", header.join(","));
    for k in 0..grid.n() {
        let mut row = vec![
            format!("{}", grid.output_node(k)),
            format!("{}", dg.f()[k]),
        ];
        if order >= DerivOrder::Gradient {
            for j in 0..5 {
                row.push(format!("{}", dg.df(j).expect("order includes gradient")[k]));
            }
        }
        if order >= DerivOrder::Hessian {
            for (j, l) in SYM_PAIRS {
                row.push(format!("{}", dg.d2f(j, l).expect("order includes hessian")[k]));
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    ensure_dir(out_dir)?;
    let path = out_dir.join("density.csv");
    write_text(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_fit(
    data: &DataArgs,
    model: Model,
    init: &InitMode,
    grid: &GridArgs,
    out_dir: &Path,
) -> Result<()> {
    let sample = load_sample(data)?;
    ensure_dir(out_dir)?;
    match model {
        Model::Clm => {
            let summary = clm_summary(&sample, None)?;
            let path = out_dir.join("clm_summary.json");
            data::save_summary(&summary, &path)?;
            println!(
                "CLM mu={:.6} sigma={:.6} loglik={:.4}",
                summary.mu, summary.sigma, summary.loglik
            );
            println!("wrote {}", path.display());
        }
        _ => {
            let report = fit_vg(&sample, model, init, grid)?;
            let stem = report.model_tag.as_str().to_lowercase();
            let (trace, summary) = data::save_report(&report, None, out_dir, &stem)?;
            let p = &report.params;
            println!(
                "{} mu={:.6} delta={:.6} sigma={:.6} alpha={:.6} theta={:.6} loglik={:.4} grad={:.3e} iters={} converged={}",
                report.model_tag.as_str(),
                p.mu,
                p.delta,
                p.sigma,
                p.alpha,
                p.theta,
                report.loglik,
                report.grad_norm,
                report.iterations.len(),
                report.converged
            );
            println!("wrote {}", trace.display());
            println!("wrote {}", summary.display());
            if !report.converged {
                return Err(Error::Domain(format!(
                    "fit did not converge within {} iterations (grad norm {:.3e})",
                    report.iterations.len(),
                    report.grad_norm
                )));
            }
        }
    }
    Ok(())
}

fn run_ks(
    data: &DataArgs,
    model: Model,
    init: &InitMode,
    grid_args: &GridArgs,
    null_density: bool,
    out_dir: &Path,
) -> Result<()> {
    let sample = load_sample(data)?;
    let n = sample.len();
    ensure_dir(out_dir)?;

    let (label, ks, summary) = match model {
        Model::Clm => {
            let fit = fit_clm(&sample)?;
            let ks = ks_statistic(sample.values(), |y| Ok(vg::clm_cdf(fit.mu, fit.sigma, y)))?
                .with_p_value()?;
            let summary = clm_summary(&sample, Some(&ks))?;
            ("CLM".to_string(), ks, summary)
        }
        _ => {
            let report = fit_vg(&sample, model, init, grid_args)?;
            let budget = GridBudget::default();
            let span = vg::half_span_for(&report.params, sample.values());
            let dgrid = vg::auto_grid(&report.params, span, &budget)?;
            let dg = vg::density_grid(&report.params, &dgrid, DerivOrder::Density)?;
            let cdf = cdf_grid(&dg)?;
            let ks = ks_statistic(sample.values(), |y| cdf.cdf_at(y))?.with_p_value()?;
            let summary = RunSummary::from_fit(&report, Some(&ks));
            (report.model_tag.as_str().to_string(), ks, summary)
        }
    };

    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(out, "model,n,d_plus,d_minus,d_n,p_value");
    let _ = writeln!(
        out,
        "{label},{n},{},{},{},{}",
        ks.d_plus,
        ks.d_minus,
        ks.d_n,
        ks.p_value.expect("attached above")
    );
    let report_path = out_dir.join(format!("ks_{}.csv", label.to_lowercase()));
    write_text(&report_path, &out)?;
    let summary_path = out_dir.join(format!("{}_summary.json", label.to_lowercase()));
    data::save_summary(&summary, &summary_path)?;

    println!(
        "{label}: d_n = {:.6}, p-value = {:.4}%",
        ks.d_n,
        100.0 * ks.p_value.expect("attached above")
    );
    println!("wrote {}", report_path.display());
    println!("wrote {}", summary_path.display());

    if null_density {
        let root_n = (n as f64).sqrt();
        let lo = 0.1 / root_n;
        let hi = 3.0 / root_n;
        let grid: Vec<f64> = (0..400).map(|i| lo + (hi - lo) * i as f64 / 399.0).collect();
        let pdf = ks_null_pdf(n, &grid)?;
        let mut out = String::new();
        let _ = writeln!(out, "# {FORMAT_VERSION}");
        let _ = writeln!(out, "d,pdf");
        for (d, p) in grid.iter().zip(&pdf) {
            let _ = writeln!(out, "{d},{p}");
        }
        let path = out_dir.join(format!("ks_null_density_n{n}.csv"));
        write_text(&path, &out)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_simulate(params: &VgParams, count: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let values = vg::sample(params, count, seed)?;
    let sample = ReturnSample::from_values(values)?;
    ensure_dir(out_dir)?;
    let path = out_dir.join(format!("simulated_n{count}_seed{seed}.csv"));
    save_returns(&sample, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_report(inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    let mut summaries = Vec::new();
    for path in inputs {
        summaries.push((path.clone(), data::load_summary(path)?));
    }
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(out, "model,mu,delta,sigma,alpha,theta,loglik,d_n,p_value,source");
    println!(
        "{:<6} {:>10} {:>10} {:>9} {:>9} {:>9} {:>11} {:>10} {:>10}",
        "model", "mu", "delta", "sigma", "alpha", "theta", "loglik", "d_n", "p_value"
    );
    for (path, s) in &summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.model,
            s.mu,
            fmt_opt(s.delta),
            s.sigma,
            fmt_opt(s.alpha),
            fmt_opt(s.theta),
            s.loglik,
            fmt_opt(s.d_n),
            fmt_opt(s.p_value),
            path.display()
        );
        let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<6} {:>10.4} {:>10} {:>9.4} {:>9} {:>9} {:>11.4} {:>10} {:>10}",
            s.model,
            s.mu,
            show(s.delta),
            s.sigma,
            show(s.alpha),
            show(s.theta),
            s.loglik,
            show(s.d_n),
            show(s.p_value.map(|p| p * 100.0)),
        );
    }
    ensure_dir(out_dir)?;
    let path = out_dir.join("comparison.csv");
    write_text(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run(spec: &RunSpec) -> Result<()> {
    match spec {
        RunSpec::Density {
            params,
            grid,
            order,
            allow_truncation,
            out_dir,
        } => run_density(params, grid, *order, *allow_truncation, out_dir),
        RunSpec::Fit {
            data,
            model,
            init,
            grid,
            out_dir,
        } => run_fit(data, *model, init, grid, out_dir),
        RunSpec::Ks {
            data,
            model,
            init,
            grid,
            null_density,
            out_dir,
        } => run_ks(data, *model, init, grid, *null_density, out_dir),
        RunSpec::Simulate {
            params,
            count,
            seed,
            out_dir,
        } => run_simulate(params, *count, *seed, out_dir),
        RunSpec::Report { inputs, out_dir } => run_report(inputs, out_dir),
    }
}
