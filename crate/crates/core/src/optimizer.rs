//! Newton-Raphson maximum-likelihood driver.
//!
//! The step follows the observed-information iteration
//! `V ← V + (I″)⁻¹ I′` in its log-likelihood-ascent form: when the Hessian
//! is negative definite the direction is `-(H)⁻¹ g`, safeguarded by
//! backtracking so accepted iterates never decrease the log-likelihood
//! (the raw iteration is visibly non-monotone in its first few steps).
//! Positivity of `σ, α, θ` is enforced by optimizing in log-coordinates
//! for those three, with the chain rule applied to score and Hessian.

use nalgebra::{DMatrix, DVector};

use crate::data::ReturnSample;
use crate::error::{Error, Result};
use crate::likelihood::{self, GridChoice};
use crate::vg::{self, DerivOrder, GridBudget, VgParams, PARAM_COUNT};

/// Which model a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ModelTag {
    /// Asymmetric Variance-Gamma (all five parameters free).
    Avg,
    /// Symmetric Variance-Gamma (`δ` pinned at zero).
    Svg,
    /// Classical lognormal (Gaussian returns).
    Clm,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Avg => "AVG",
            ModelTag::Svg => "SVG",
            ModelTag::Clm => "CLM",
        }
    }
}

/// Fit settings. The defaults mirror the reference estimation: start at
/// `σ = α = θ = 1, δ = μ = 0` and stop when the score norm drops below
/// `1e-4`, the magnitude the published trace terminates at.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub init: VgParams,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Backtracking halvings allowed per iteration.
    pub max_backtracks: u32,
    /// Pin `δ = 0` (symmetric VG).
    pub symmetric: bool,
    /// Extra undamped Newton steps after convergence. The line search
    /// cannot certify improvements once they fall below the floating-point
    /// resolution of the log-likelihood, but pure Newton steps keep
    /// contracting the score quadratically; each is kept only if the score
    /// norm drops.
    pub polish_steps: usize,
    pub grid: GridChoice,
}

impl FitConfig {
    /// The unit starting point `σ = α = θ = 1`, `δ = μ = 0`.
    pub fn default_init() -> VgParams {
        VgParams {
            mu: 0.0,
            delta: 0.0,
            sigma: 1.0,
            alpha: 1.0,
            theta: 1.0,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init: Self::default_init(),
            max_iters: 100,
            grad_tol: 1e-4,
            max_backtracks: 30,
            symmetric: false,
            polish_steps: 0,
            grid: GridChoice::Auto(GridBudget::fit()),
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub params: VgParams,
    pub loglik: f64,
    /// Euclidean norm of the score in original coordinates (active
    /// parameters only).
    pub grad_norm: f64,
    /// The Newton system was not negative definite here; a gradient step
    /// was used instead.
    pub gradient_fallback: bool,
}

/// Converged parameters plus the full iteration trace.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model_tag: ModelTag,
    pub params: VgParams,
    pub loglik: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: Vec<IterationRow>,
    /// Observed Hessian at the final iterate, original coordinates.
    pub hessian: [[f64; PARAM_COUNT]; PARAM_COUNT],
    /// Condition number of the final Hessian; the `(σ, θ)` variance
    /// trade-off keeps this large.
    pub condition_number: f64,
}

impl FitReport {
    /// Inverse-observed-information standard errors.
    ///
    /// The five-parameter VG law is exactly invariant under
    /// `(δ, σ, θ) → (cδ, √c·σ, θ/c)`, so the observed information always
    /// has one zero eigenvalue: parameters with weight on that direction
    /// have infinite inverse-Hessian standard error, which is what this
    /// reports for them. The finite entries come from the eigen
    /// pseudo-inverse of the identifiable subspace. `None` when some
    /// identifiable direction has the wrong curvature sign (not a
    /// maximum).
    pub fn standard_errors(&self) -> Option<[f64; PARAM_COUNT]> {
        let neg = DMatrix::from_fn(PARAM_COUNT, PARAM_COUNT, |r, c| -self.hessian[r][c]);
        let eig = nalgebra::SymmetricEigen::new(neg);
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if lambda_max <= 0.0 {
            return None;
        }
        let cut = 1e-10 * lambda_max;
        let mut out = [0.0; PARAM_COUNT];
        for (j, slot) in out.iter_mut().enumerate() {
            let mut var = 0.0f64;
            for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                let weight = eig.eigenvectors[(j, i)];
                if lam > cut {
                    var += weight * weight / lam;
                } else if weight.abs() > 1e-7 {
                    var = f64::INFINITY;
                    break;
                } else if lam < -cut {
                    return None;
                }
            }
            *slot = var.sqrt();
        }
        Some(out)
    }
}

fn active_indices(symmetric: bool) -> Vec<usize> {
    if symmetric {
        vec![0, 2, 3, 4]
    } else {
        (0..PARAM_COUNT).collect()
    }
}

/// Unit tangent of the exact model degeneracy, in active log-coordinates.
///
/// The reparameterization `(δ, σ, θ) → (cδ, √c·σ, θ/c)` leaves the VG law
/// unchanged (`V/c` is Gamma with scale `θ/c`), so the likelihood carries
/// an exactly flat direction everywhere: `(0, δ, ½, 0, -1)` in
/// `(μ, δ, ln σ, ln α, ln θ)`. Newton steps are confined to its orthogonal
/// complement; the five reported parameters keep the gauge the starting
/// point chose.
fn gauge_tangent(params: &VgParams, active: &[usize]) -> DVector<f64> {
    let full = [0.0, params.delta, 0.5, 0.0, -1.0];
    let mut u = DVector::from_fn(active.len(), |r, _| full[active[r]]);
    let n = u.norm();
    u /= n;
    u
}

/// Orthonormal basis of the complement of `u` (columns), via QR of
/// `[u | e_1 … e_dim]`.
fn complement_basis(u: &DVector<f64>) -> DMatrix<f64> {
    let dim = u.len();
    let mut m = DMatrix::zeros(dim, dim);
    m.set_column(0, u);
    for c in 1..dim {
        m[(c - 1, c)] = 1.0;
    }
    let qr = m.qr();
    let q = qr.q();
    q.columns(1, dim - 1).into_owned()
}

/// `w = (μ, δ, ln σ, ln α, ln θ)`.
fn to_internal(v: &VgParams) -> [f64; PARAM_COUNT] {
    [v.mu, v.delta, v.sigma.ln(), v.alpha.ln(), v.theta.ln()]
}

fn from_internal(w: &[f64; PARAM_COUNT]) -> Result<VgParams> {
    VgParams::new(w[0], w[1], w[2].exp(), w[3].exp(), w[4].exp())
}

/// Scale factors `dV/dw` at the current point.
fn jacobian(v: &VgParams) -> [f64; PARAM_COUNT] {
    [1.0, 1.0, v.sigma, v.alpha, v.theta]
}

fn active_norm(score: &[f64; PARAM_COUNT], active: &[usize]) -> f64 {
    active
        .iter()
        .map(|&j| score[j] * score[j])
        .sum::<f64>()
        .sqrt()
}

/// Ascent direction for maximizing: pure Newton `(-H)⁻¹g` when the Hessian
/// is negative definite and the step is sane, otherwise `(-H + τI)⁻¹g`
/// with the smallest damping `τ` that restores definiteness and bounds the
/// step length (the `(σ, θ)` ridge routinely leaves one near-zero, noisy
/// eigenvalue at finite samples, which otherwise catapults the raw Newton
/// step along the ridge). Returns the direction and whether damping was
/// needed.
fn ascent_direction(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    max_len: f64,
) -> Option<(DVector<f64>, bool)> {
    let dim = g.len();
    let scale = (0..dim)
        .map(|i| h[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut tau = 0.0f64;
    for _ in 0..28 {
        let m = -h + DMatrix::identity(dim, dim) * tau;
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            let dir = chol.solve(g);
            if dir.norm() <= max_len {
                return Some((dir, tau > 0.0));
            }
        }
        tau = if tau == 0.0 { 1e-10 * scale } else { tau * 10.0 };
    }
    None
}

fn condition_number(h: &[[f64; PARAM_COUNT]; PARAM_COUNT]) -> f64 {
    let m = DMatrix::from_fn(PARAM_COUNT, PARAM_COUNT, |r, c| h[r][c]);
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Errors a trial point may legitimately produce while the line search
/// probes aggressive steps: these reject the step instead of aborting.
fn is_retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::TailDecay { .. }
            | Error::GridSupport { .. }
            | Error::ObservationOutsideSpan { .. }
            | Error::OutsideSpan { .. }
            | Error::InvalidParams(_)
            | Error::ImaginaryResidue { .. }
            | Error::Domain(_)
    )
}

/// Pick the fit grid once per run: sized for the starting point and, when
/// the sample admits one, the method-of-moments estimate, whichever needs
/// the wider frequency support. A fixed grid keeps the objective one smooth
/// function through every iteration.
fn fit_grid(values: &[f64], init: &VgParams, budget: &GridBudget) -> Result<crate::FrftGrid> {
    let mut candidates = vec![*init];
    if let Ok(sample) = ReturnSample::from_values(values.to_vec()) {
        if let Ok(mom) = init_method_of_moments(&sample, false) {
            candidates.push(mom);
        }
    }
    let mut best: Option<crate::FrftGrid> = None;
    let mut half_span = 0.0f64;
    for c in &candidates {
        half_span = half_span.max(vg::half_span_for(c, values));
    }
    for c in &candidates {
        let g = vg::auto_grid(c, half_span, budget)?;
        best = Some(match best {
            None => g,
            Some(b) if g.a() > b.a() || g.n() > b.n() => crate::FrftGrid::with_output_span(
                g.a().max(b.a()),
                g.n().max(b.n()),
                half_span,
            )?,
            Some(b) => b,
        });
    }
    Ok(best.expect("at least the init candidate"))
}

/// Maximize the VG log-likelihood of a cleaned sample by damped Newton
/// iteration. Non-convergence is reported through `converged = false`, not
/// an error.
pub fn fit_mle(sample: &ReturnSample, config: &FitConfig) -> Result<FitReport> {
    let values = sample.values();
    if values.is_empty() {
        return Err(Error::Domain("cannot fit an empty sample".into()));
    }
    let mut init = config.init;
    if config.symmetric {
        init.delta = 0.0;
    }
    init.validate()?;

    let mut grid = match &config.grid {
        GridChoice::Fixed(g) => *g,
        GridChoice::Auto(budget) => fit_grid(values, &init, budget)?,
    };
    let active = active_indices(config.symmetric);
    let dim = active.len();

    let eval_full = |grid: &crate::FrftGrid, p: &VgParams| {
        likelihood::evaluate(values, p, DerivOrder::Hessian, &GridChoice::Fixed(*grid))
    };
    let eval_value = |grid: &crate::FrftGrid, p: &VgParams| {
        likelihood::evaluate(values, p, DerivOrder::Density, &GridChoice::Fixed(*grid))
            .map(|st| st.value)
    };

    let mut state = eval_full(&grid, &init)?;
    let mut w = to_internal(&init);
    let mut trace = Vec::new();
    let mut regrids_left = 6u32;
    {
        let score = state.score.expect("full evaluation carries the score");
        trace.push(IterationRow {
            iteration: 1,
            params: state.params,
            loglik: state.value,
            grad_norm: active_norm(&score, &active),
            gradient_fallback: false,
        });
    }
    let mut converged = trace[0].grad_norm < config.grad_tol;

    // trust radius in internal coordinates; shrinks when the quadratic
    // model misleads (near-null ridge curvature), grows on clean steps
    let mut radius = 1.0f64;
    while !converged && trace.len() < config.max_iters {
        let score = state.score.expect("full evaluation carries the score");
        let hess = state.hessian.expect("full evaluation carries the hessian");

        // chain rule into log-coordinates
        let jac = jacobian(&state.params);
        let g_w = DVector::from_fn(dim, |r, _| score[active[r]] * jac[active[r]]);
        let h_w = DMatrix::from_fn(dim, dim, |r, c| {
            let (j, k) = (active[r], active[c]);
            let mut v = hess[j][k] * jac[j] * jac[k];
            if r == c && j >= 2 {
                v += score[j] * jac[j];
            }
            v
        });

        // step in the gauge-fixed subspace where the Hessian is honest
        let basis = complement_basis(&gauge_tangent(&state.params, &active));
        let g_r = basis.transpose() * &g_w;
        let h_r = basis.transpose() * &h_w * &basis;
        let (dir, fallback) = match ascent_direction(&g_r, &h_r, radius) {
            Some((dir_r, damped)) => (&basis * dir_r, damped),
            None => {
                let projected = &basis * (basis.transpose() * &g_w);
                let n = projected.norm().max(1e-12);
                (projected * (radius.min(1.0) / n), true)
            }
        };

        // backtracking: halve until the log-likelihood improves
        let mut step = 1.0f64;
        let mut accepted: Option<(VgParams, [f64; PARAM_COUNT], f64)> = None;
        let mut saw_grid_error = false;
        for _ in 0..=config.max_backtracks {
            let mut w_new = w;
            for (r, &j) in active.iter().enumerate() {
                w_new[j] += step * dir[r];
            }
            match from_internal(&w_new).and_then(|p| eval_value(&grid, &p).map(|l| (p, l))) {
                Ok((p, l)) if l > state.value => {
                    accepted = Some((p, w_new, step));
                    break;
                }
                Ok(_) => {}
                Err(e) if is_retryable(&e) => {
                    saw_grid_error |= matches!(
                        e,
                        Error::TailDecay { .. }
                            | Error::GridSupport { .. }
                            | Error::ObservationOutsideSpan { .. }
                            | Error::ImaginaryResidue { .. }
                    );
                }
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }

        let mut advanced = false;
        match accepted {
            Some((p_new, w_new, step)) => {
                if step == 1.0 {
                    radius = (radius * 2.0).min(4.0);
                } else if step < 0.25 {
                    // the model was only trusted after shrinking; start the
                    // next direction nearer that scale
                    radius = (radius * 0.25).max(1e-6);
                }
                w = w_new;
                state = eval_full(&grid, &p_new)?;
                let score = state.score.expect("full evaluation carries the score");
                let grad_norm = active_norm(&score, &active);
                trace.push(IterationRow {
                    iteration: trace.len() + 1,
                    params: state.params,
                    loglik: state.value,
                    grad_norm,
                    gradient_fallback: fallback,
                });
                converged = grad_norm < config.grad_tol;
                advanced = true;
            }
            None => {}
        }
        if converged {
            break;
        }
        if saw_grid_error {
            // some candidate crossed the grid's validity edge (usually the
            // hard tail-decay bound as α shrinks): the iterate is wedged
            // against a cliff of the current grid, not a feature of the
            // likelihood. Rebuild the grid around the current parameters,
            // restate the incumbent on it (the objective shifts below the
            // trace's reporting precision) and restore the trust radius the
            // cliff artificially collapsed.
            if regrids_left == 0 {
                if !advanced {
                    break;
                }
                continue;
            }
            regrids_left -= 1;
            let half_span = vg::half_span_for(&state.params, values);
            let budget = match &config.grid {
                GridChoice::Auto(b) => *b,
                GridChoice::Fixed(_) => GridBudget::fit(),
            };
            let new_grid = vg::auto_grid(&state.params, half_span, &budget)?;
            if new_grid == grid {
                if !advanced {
                    break;
                }
                continue;
            }
            grid = new_grid;
            state = eval_full(&grid, &state.params.clone())?;
            let score = state.score.expect("full evaluation carries the score");
            let row = trace.last_mut().expect("the initial row exists");
            row.loglik = state.value;
            row.grad_norm = active_norm(&score, &active);
            radius = radius.max(0.25);
        } else if !advanced {
            break; // no ascent available at the backtracking floor
        }
    }

    // optional polish: full Newton steps judged on the score norm alone
    for _ in 0..config.polish_steps {
        let score = state.score.expect("full evaluation carries the score");
        let hess = state.hessian.expect("full evaluation carries the hessian");
        let current_norm = active_norm(&score, &active);
        let jac = jacobian(&state.params);
        let g_w = DVector::from_fn(dim, |r, _| score[active[r]] * jac[active[r]]);
        let h_w = DMatrix::from_fn(dim, dim, |r, c| {
            let (j, k) = (active[r], active[c]);
            let mut v = hess[j][k] * jac[j] * jac[k];
            if r == c && j >= 2 {
                v += score[j] * jac[j];
            }
            v
        });
        let basis = complement_basis(&gauge_tangent(&state.params, &active));
        let g_r = basis.transpose() * &g_w;
        let h_r = basis.transpose() * &h_w * &basis;
        let Some((dir_r, _)) = ascent_direction(&g_r, &h_r, 1.0) else {
            break;
        };
        let dir = &basis * dir_r;
        let mut w_new = w;
        for (r, &j) in active.iter().enumerate() {
            w_new[j] += dir[r];
        }
        let Ok(candidate) = from_internal(&w_new).and_then(|p| eval_full(&grid, &p)) else {
            break;
        };
        let new_norm = active_norm(
            &candidate.score.expect("full evaluation carries the score"),
            &active,
        );
        if new_norm >= current_norm {
            break;
        }
        w = w_new;
        state = candidate;
        trace.push(IterationRow {
            iteration: trace.len() + 1,
            params: state.params,
            loglik: state.value,
            grad_norm: new_norm,
            gradient_fallback: false,
        });
        converged = converged || new_norm < config.grad_tol;
    }

    let score = state.score.expect("full evaluation carries the score");
    let hessian = state.hessian.expect("full evaluation carries the hessian");
    Ok(FitReport {
        model_tag: if config.symmetric {
            ModelTag::Svg
        } else {
            ModelTag::Avg
        },
        params: state.params,
        loglik: state.value,
        grad_norm: active_norm(&score, &active),
        converged,
        iterations: trace,
        hessian,
        condition_number: condition_number(&hessian),
    })
}

fn central_moments(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &y in values {
        let d = y - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

/// Method-of-moments starting point.
///
/// Symmetric case inverts the closed-form moments: `α = 3/(kurt - 3)`,
/// then `θσ² = var/α` under the `θ = σ` normalization (the pair only
/// scales variance, so the likelihood cannot identify them separately at
/// the starting point). The asymmetric case solves the general cumulant
/// system for `(δ, α, s)` with the same normalization by damped Newton.
pub fn init_method_of_moments(sample: &ReturnSample, symmetric: bool) -> Result<VgParams> {
    let values = sample.values();
    if values.len() < 4 {
        return Err(Error::Domain(format!(
            "method of moments needs at least 4 observations, got {}",
            values.len()
        )));
    }
    let (mean, m2, m3, m4) = central_moments(values);
    let kurtosis = m4 / (m2 * m2);
    if !(kurtosis > 3.0) {
        return Err(Error::MomentsUndefined { kurtosis });
    }
    let alpha0 = 3.0 / (kurtosis - 3.0);
    let s0 = (m2 / alpha0).cbrt();
    if symmetric {
        return VgParams::new(mean, 0.0, s0, alpha0, s0);
    }

    // cumulants under θ = σ = s:
    //   κ2 = αs²(s + δ²)
    //   κ3 = αδ(3s⁴ + 2δ²s³)
    //   κ4ex = 3α(s⁶ + 4δ²s⁵ + 2δ⁴s⁴)
    let k3_target = m3;
    let k4_target = m4 - 3.0 * m2 * m2;
    let residual = |x: &[f64; 3]| -> [f64; 3] {
        let (delta, alpha, s) = (x[0], x[1].exp(), x[2].exp());
        let d2 = delta * delta;
        let k2 = alpha * s * s * (s + d2);
        let k3 = alpha * delta * (3.0 * s.powi(4) + 2.0 * d2 * s.powi(3));
        let k4 = 3.0 * alpha * (s.powi(6) + 4.0 * d2 * s.powi(5) + 2.0 * d2 * d2 * s.powi(4));
        [
            (k2 - m2) / m2,
            (k3 - k3_target) / m2.powf(1.5),
            (k4 - k4_target) / (m2 * m2),
        ]
    };
    let norm = |r: &[f64; 3]| r.iter().map(|v| v * v).sum::<f64>().sqrt();

    let delta0 = k3_target / (3.0 * alpha0 * s0.powi(4));
    let mut x = [delta0, alpha0.ln(), s0.ln()];
    let mut r = residual(&x);
    for _ in 0..200 {
        if norm(&r) < 1e-12 {
            break;
        }
        // finite-difference Jacobian of the 3×3 system
        let mut jac = DMatrix::zeros(3, 3);
        let h = 1e-7;
        for c in 0..3 {
            let mut xp = x;
            xp[c] += h;
            let rp = residual(&xp);
            for row in 0..3 {
                jac[(row, c)] = (rp[row] - r[row]) / h;
            }
        }
        let rhs = DVector::from_row_slice(&[-r[0], -r[1], -r[2]]);
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut scale = 1.0f64;
        let mut improved = false;
        for _ in 0..12 {
            let xn = [
                x[0] + scale * step[0],
                x[1] + scale * step[1],
                x[2] + scale * step[2],
            ];
            if xn.iter().all(|v| v.is_finite()) {
                let rn = residual(&xn);
                if norm(&rn) < norm(&r) {
                    x = xn;
                    r = rn;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let (delta, alpha, s) = if norm(&r) < 1e-6 {
        (x[0], x[1].exp(), x[2].exp())
    } else {
        // cumulant system did not close; keep the linearized start
        (delta0, alpha0, s0)
    };
    VgParams::new(mean - alpha * delta * s, delta, s, alpha, s)
}

/// Gaussian maximum-likelihood fit of the classical lognormal model.
#[derive(Debug, Clone, Copy)]
pub struct ClmFit {
    pub mu: f64,
    pub sigma: f64,
    pub loglik: f64,
}

/// Sample mean and population (1/n) standard deviation, the Gaussian MLE.
pub fn fit_clm(sample: &ReturnSample) -> Result<ClmFit> {
    let values = sample.values();
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "CLM fit needs at least 2 observations, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / n;
    if var == 0.0 || values.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Domain(
            "constant sample: Gaussian fit is degenerate (sigma = 0)".into(),
        ));
    }
    let sigma = var.sqrt();
    let loglik =
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0) - n * sigma.ln();
    Ok(ClmFit { mu, sigma, loglik })
}
