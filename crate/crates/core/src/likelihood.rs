//! Log-likelihood, score vector and observed information of a return
//! sample, assembled from one density grid per parameter vector:
//!
//! `l = Σ log f(y_i)`,
//! `∂l/∂V_j = Σ (∂f/∂V_j)/f`,
//! `∂²l/∂V_k∂V_j = Σ [(∂²f/∂V_k∂V_j)/f - (∂f/∂V_k)(∂f/∂V_j)/f²]`.
//!
//! Because the grid build is linear in the characteristic function, the
//! score and Hessian are the exact derivatives of the computed likelihood
//! whenever the same grid is reused, which is what lets Newton-Raphson
//! drive the gradient norm to the reporting precision of the trace.

use crate::error::{Error, Result};
use crate::frft::FrftGrid;
use crate::vg::{
    self, DensityGrid, DerivOrder, GridBudget, VgParams, HESSIAN_COUNT, PARAM_COUNT, SYM_PAIRS,
};

/// Where the density grid for an evaluation comes from.
#[derive(Debug, Clone, Copy)]
pub enum GridChoice {
    /// Size a grid from the parameters and the observation span.
    Auto(GridBudget),
    /// Use exactly this grid (callers doing finite-difference sweeps need
    /// the grid held fixed across parameter perturbations).
    Fixed(FrftGrid),
}

impl Default for GridChoice {
    fn default() -> Self {
        GridChoice::Auto(GridBudget::default())
    }
}

/// Compensated (Kahan) accumulator; thousands of mixed-magnitude terms feed
/// each sum and the trace is quoted to four decimals.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Likelihood value and derivatives at one parameter vector.
#[derive(Debug, Clone)]
pub struct LikelihoodState {
    pub params: VgParams,
    /// Log-likelihood in nats.
    pub value: f64,
    /// Score `∂l/∂V`, present from [`DerivOrder::Gradient`] up.
    pub score: Option<[f64; PARAM_COUNT]>,
    /// Observed Hessian `∂²l/∂V²` (symmetric by construction), present at
    /// [`DerivOrder::Hessian`].
    pub hessian: Option<[[f64; PARAM_COUNT]; PARAM_COUNT]>,
    /// Characteristic-function magnitude at the grid edge (truncation
    /// diagnostic).
    pub tail_magnitude: f64,
    /// The grid the evaluation ran on.
    pub grid: FrftGrid,
}

impl LikelihoodState {
    /// Euclidean norm of the score, optionally ignoring the `δ` component
    /// (symmetric fits pin it).
    pub fn score_norm(&self, skip_delta: bool) -> Option<f64> {
        self.score.map(|s| {
            s.iter()
                .enumerate()
                .filter(|(j, _)| !(skip_delta && *j == 1))
                .map(|(_, v)| v * v)
                .sum::<f64>()
                .sqrt()
        })
    }
}

/// Evaluate the log-likelihood of `values` under `params`, with as many
/// derivative levels as `order` requests.
pub fn evaluate(
    values: &[f64],
    params: &VgParams,
    order: DerivOrder,
    grid: &GridChoice,
) -> Result<LikelihoodState> {
    if values.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty sample".into()));
    }
    let grid = match grid {
        GridChoice::Auto(budget) => vg::auto_grid(params, vg::half_span_for(params, values), budget)?,
        GridChoice::Fixed(g) => *g,
    };
    let dg = vg::density_grid(params, &grid, order)?;
    evaluate_on(values, params, order, &dg)
}

/// [`evaluate`] against an already-built density grid for `params`.
pub fn evaluate_on(
    values: &[f64],
    params: &VgParams,
    order: DerivOrder,
    dg: &DensityGrid,
) -> Result<LikelihoodState> {
    let mut value = Kahan::default();
    let mut score = [Kahan::default(); PARAM_COUNT];
    let mut hess = [Kahan::default(); HESSIAN_COUNT];

    for (index, &y) in values.iter().enumerate() {
        let f = dg.density_at(y).map_err(|e| observation_error(e, index))?;
        value.add(f.ln());
        if order >= DerivOrder::Gradient {
            let df = dg.gradient_at(y).map_err(|e| observation_error(e, index))?;
            let ratios: Vec<f64> = df.iter().map(|d| d / f).collect();
            for (acc, r) in score.iter_mut().zip(&ratios) {
                acc.add(*r);
            }
            if order >= DerivOrder::Hessian {
                let d2f = dg.hessian_at(y).map_err(|e| observation_error(e, index))?;
                for (idx, &(j, k)) in SYM_PAIRS.iter().enumerate() {
                    hess[idx].add(d2f[idx] / f - ratios[j] * ratios[k]);
                }
            }
        }
        if !value.value().is_finite() {
            return Err(Error::NonFiniteAccumulation { index });
        }
    }

    let score = (order >= DerivOrder::Gradient).then(|| {
        let mut out = [0.0; PARAM_COUNT];
        for (o, acc) in out.iter_mut().zip(&score) {
            *o = acc.value();
        }
        out
    });
    let hessian = (order >= DerivOrder::Hessian).then(|| {
        let mut out = [[0.0; PARAM_COUNT]; PARAM_COUNT];
        for (idx, &(j, k)) in SYM_PAIRS.iter().enumerate() {
            out[j][k] = hess[idx].value();
            out[k][j] = out[j][k];
        }
        out
    });

    Ok(LikelihoodState {
        params: *params,
        value: value.value(),
        score,
        hessian,
        tail_magnitude: dg.tail_magnitude(),
        grid: *dg.grid(),
    })
}

fn observation_error(e: Error, index: usize) -> Error {
    match e {
        Error::OutsideSpan { value, lo, hi } => Error::ObservationOutsideSpan {
            index,
            value,
            lo,
            hi,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(mu: f64, delta: f64, sigma: f64, alpha: f64, theta: f64) -> VgParams {
        VgParams::new(mu, delta, sigma, alpha, theta).unwrap()
    }

    fn fixed_grid_for(p: &VgParams, values: &[f64]) -> GridChoice {
        let grid = vg::auto_grid(p, vg::half_span_for(p, values), &GridBudget::default()).unwrap();
        GridChoice::Fixed(grid)
    }

    #[test]
    fn single_peak_observation_reduces_to_one_density() {
        let p = params(0.3, 0.0, 1.0, 1.0, 1.0);
        // the observation sits on the density cusp, so the budget must
        // push the truncation error below the assertion scale
        let budget = GridBudget {
            density_tol: 4e-6,
            ..GridBudget::default()
        };
        let st = evaluate(&[0.3], &p, DerivOrder::Density, &GridChoice::Auto(budget)).unwrap();
        let expect = ((2.0f64).sqrt() / 2.0).ln();
        assert!((st.value - expect).abs() < 1e-5, "{} vs {expect}", st.value);
        assert!(st.score.is_none() && st.hessian.is_none());
    }

    #[test]
    fn empty_sample_rejected() {
        let p = params(0.0, 0.0, 1.0, 1.0, 1.0);
        assert!(evaluate(&[], &p, DerivOrder::Density, &GridChoice::default()).is_err());
    }

    #[test]
    fn observation_outside_grid_named() {
        let p = params(0.0, 0.0, 1.0, 1.0, 1.0);
        let grid = vg::auto_grid(&p, 11.0, &GridBudget::default()).unwrap();
        let err = evaluate(
            &[0.0, 55.0],
            &p,
            DerivOrder::Density,
            &GridChoice::Fixed(grid),
        )
        .unwrap_err();
        match err {
            Error::ObservationOutsideSpan { index, value, .. } => {
                assert_eq!(index, 1);
                assert_eq!(value, 55.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn permutation_invariance() {
        let p = params(0.1, -0.2, 1.0, 1.2, 0.8);
        let sample = vg::sample(&p, 500, 99).unwrap();
        let grid = fixed_grid_for(&p, &sample);
        let a = evaluate(&sample, &p, DerivOrder::Hessian, &grid).unwrap();
        let mut shuffled = sample.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let b = evaluate(&shuffled, &p, DerivOrder::Hessian, &grid).unwrap();
        assert!((a.value - b.value).abs() < 1e-10 * a.value.abs().max(1.0));
        let (sa, sb) = (a.score.unwrap(), b.score.unwrap());
        for j in 0..PARAM_COUNT {
            assert!((sa[j] - sb[j]).abs() < 1e-10 * sa[j].abs().max(1.0));
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let p = params(0.0, 0.1, 1.0, 1.0, 1.0);
        let sample = vg::sample(&p, 100, 4).unwrap();
        let st = evaluate(
            &sample,
            &p,
            DerivOrder::Hessian,
            &fixed_grid_for(&p, &sample),
        )
        .unwrap();
        let h = st.hessian.unwrap();
        for j in 0..PARAM_COUNT {
            for k in 0..PARAM_COUNT {
                assert_eq!(h[j][k], h[k][j]);
            }
        }
        assert!(st.value.is_finite());
    }

    #[test]
    fn score_and_hessian_match_finite_differences() {
        let truth = params(0.0, -0.1, 1.0, 1.1, 0.9);
        let sample = vg::sample(&truth, 50, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..3 {
            let p = params(
                rand::Rng::gen_range(&mut rng, -0.3..0.3),
                rand::Rng::gen_range(&mut rng, -0.3..0.3),
                rand::Rng::gen_range(&mut rng, 0.7..1.4),
                rand::Rng::gen_range(&mut rng, 0.7..1.6),
                rand::Rng::gen_range(&mut rng, 0.7..1.4),
            );
            // one fixed grid across the whole stencil keeps the objective smooth
            let grid = vg::auto_grid(&p, vg::half_span_for(&p, &sample) + 2.0, &GridBudget::default())
                .unwrap();
            let choice = GridChoice::Fixed(grid);
            let st = evaluate(&sample, &p, DerivOrder::Hessian, &choice).unwrap();
            let score = st.score.unwrap();
            let hessian = st.hessian.unwrap();
            let h = 1e-4;
            for j in 0..PARAM_COUNT {
                let mut up = p.as_array();
                let mut dn = p.as_array();
                up[j] += h;
                dn[j] -= h;
                let lu = evaluate(
                    &sample,
                    &VgParams::from_array(up).unwrap(),
                    DerivOrder::Gradient,
                    &choice,
                )
                .unwrap();
                let ld = evaluate(
                    &sample,
                    &VgParams::from_array(dn).unwrap(),
                    DerivOrder::Gradient,
                    &choice,
                )
                .unwrap();
                let fd = (lu.value - ld.value) / (2.0 * h);
                assert!(
                    (score[j] - fd).abs() / score[j].abs().max(1.0) < 1e-4,
                    "trial {trial} score[{j}]: {} vs fd {fd}",
                    score[j]
                );
                let (su, sd) = (lu.score.unwrap(), ld.score.unwrap());
                for k in 0..PARAM_COUNT {
                    let fd_h = (su[k] - sd[k]) / (2.0 * h);
                    assert!(
                        (hessian[j][k] - fd_h).abs() / hessian[j][k].abs().max(1.0) < 1e-3,
                        "trial {trial} hessian[{j}][{k}]: {} vs fd {fd_h}",
                        hessian[j][k]
                    );
                }
            }
        }
    }
}
