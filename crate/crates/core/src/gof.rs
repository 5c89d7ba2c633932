//! Kolmogorov-Smirnov goodness-of-fit: the two-sided statistic against a
//! fitted CDF, the exact finite-`n` null distribution of `D_n`, and
//! p-values.
//!
//! The null CDF `P(D_n ≤ d)` uses the Durbin matrix-power method in the
//! Marsaglia-Tsang-Wang formulation with floating-point rescaling; matrices
//! larger than [`MAX_DURBIN_DIM`] fall back to the Kolmogorov asymptotic
//! series with the Stephens finite-`n` correction.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest Durbin matrix dimension before the asymptotic fallback.
pub const MAX_DURBIN_DIM: usize = 2000;

/// Two-sided KS statistic split into its one-sided pieces.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct KsResult {
    pub d_plus: f64,
    pub d_minus: f64,
    pub d_n: f64,
    pub n: usize,
    /// Set by [`KsResult::with_p_value`].
    pub p_value: Option<f64>,
}

impl KsResult {
    /// Attach the exact-null p-value for this statistic.
    pub fn with_p_value(mut self) -> Result<Self> {
        self.p_value = Some(p_value(self.n, self.d_n)?);
        Ok(self)
    }
}

/// Two-sided KS statistic of a sample against a model CDF:
///
/// `d⁺ = sup_j |F(x_j) - F_n(x_j)|`, `d⁻ = sup_j |F(x_j) - F_n(x_{j-1})|`,
/// `d_n = max(d⁺, d⁻)`,
///
/// over the sorted sample, where the empirical CDF steps by multiplicity/n
/// at tied points. The model CDF must be monotone along the sample.
pub fn ks_statistic<F>(values: &[f64], cdf: F) -> Result<KsResult>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = values.len();
    if n == 0 {
        return Err(Error::Domain("KS statistic of an empty sample".into()));
    }
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(idx));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let nf = n as f64;
    let mut d_plus = 0.0f64;
    let mut d_minus = 0.0f64;
    let mut prev_f = f64::NEG_INFINITY;
    let mut i = 0usize;
    while i < n {
        let x = sorted[i];
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == x {
            j += 1;
        }
        let f = cdf(x)?;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Domain(format!(
                "model cdf returned {f} outside [0, 1] at x = {x}"
            )));
        }
        if f < prev_f - 1e-9 {
            return Err(Error::NonMonotoneCdf { drop: prev_f - f });
        }
        prev_f = prev_f.max(f);
        let below = i as f64 / nf; // F_n just left of x
        let at = (j + 1) as f64 / nf; // F_n at x (ties collapse)
        d_plus = d_plus.max((f - at).abs());
        d_minus = d_minus.max((f - below).abs());
        i = j + 1;
    }
    Ok(KsResult {
        d_plus,
        d_minus,
        d_n: d_plus.max(d_minus),
        n,
        p_value: None,
    })
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2Σ (-1)^{j-1} e^{-2j²λ²}`,
/// evaluated through the theta-inversion form for small `λ` where the
/// alternating series converges slowly.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.755 {
        let v = 1.0 / (lambda * lambda);
        let w = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let c = -std::f64::consts::PI * std::f64::consts::PI / 8.0;
        let p = w * ((c * v).exp() + (9.0 * c * v).exp() + (25.0 * c * v).exp());
        (1.0 - p).max(0.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Exact `P(D_n ≤ d)` by the Durbin matrix-power construction.
///
/// With `k = ⌈nd⌉`, `h = k - nd`, the `(2k-1)`-square matrix `H` has
/// `H_ij = 1/(i-j+1)!` on and below the first superdiagonal, first column
/// and last row corrected by powers of `h`; then
/// `P(D_n ≤ d) = (n!/nⁿ)·(Hⁿ)_{kk}`, computed with power-of-ten rescaling
/// to stay inside the f64 range.
fn durbin_cdf(n: usize, d: f64) -> f64 {
    let nd = n as f64 * d;
    let k = nd.ceil() as usize;
    let h = k as f64 - nd;
    let m = 2 * k - 1;

    let mut mat = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                mat[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        mat[i * m] -= h.powi(i as i32 + 1);
        mat[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        mat[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..=(i + 1).min(m - 1) {
            for fac in 2..=(i + 1 - j) {
                mat[i * m + j] /= fac as f64;
            }
        }
    }

    // H^n by binary exponentiation, rescaling by 1e140 as entries grow
    let mut result = identity(m);
    let mut result_exp: i64 = 0;
    let mut base = mat;
    let mut base_exp: i64 = 0;
    let mut e = n;
    loop {
        if e & 1 == 1 {
            result = mat_mul(&result, &base, m);
            result_exp += base_exp;
            rescale(&mut result, &mut result_exp, m, k);
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = mat_mul(&base, &base, m);
        base_exp *= 2;
        rescale(&mut base, &mut base_exp, m, k);
    }

    let mut t = result[(k - 1) * m + (k - 1)];
    let mut exp = result_exp;
    for i in 1..=n {
        t *= i as f64 / n as f64;
        if t < 1e-140 {
            t *= 1e140;
            exp -= 140;
        }
    }
    (t * 10f64.powi(exp as i32)).clamp(0.0, 1.0)
}

fn identity(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
    }
    out
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let v = a[i * m + l];
            if v == 0.0 {
                continue;
            }
            let row = &b[l * m..(l + 1) * m];
            let dst = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in dst.iter_mut().zip(row) {
                *o += v * bv;
            }
        }
    }
    out
}

fn rescale(mat: &mut [f64], exp: &mut i64, m: usize, k: usize) {
    if mat[(k - 1) * m + (k - 1)] > 1e140 {
        for v in mat.iter_mut() {
            *v *= 1e-140;
        }
        *exp += 140;
    }
}

/// Exact null CDF `P(D_n ≤ d)` of the two-sided KS statistic under a
/// continuous hypothesized distribution.
pub fn ks_null_cdf(n: usize, d: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("KS null distribution needs n ≥ 1".into()));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!(
            "KS statistic argument d = {d} outside (0, 1)"
        )));
    }
    let nf = n as f64;
    // support bounds: D_n ∈ [1/(2n), 1]
    if d <= 0.5 / nf {
        return Ok(0.0);
    }
    let k = (nf * d).ceil() as usize;
    if 2 * k - 1 > MAX_DURBIN_DIM {
        let root_n = nf.sqrt();
        let lambda = (root_n + 0.12 + 0.11 / root_n) * d;
        return Ok(1.0 - kolmogorov_sf(lambda));
    }
    Ok(durbin_cdf(n, d))
}

/// `P(D_n > d_n | H₀)`, the p-value of an observed statistic.
pub fn p_value(n: usize, d_n: f64) -> Result<f64> {
    if d_n >= 1.0 {
        return Ok(0.0);
    }
    Ok((1.0 - ks_null_cdf(n, d_n)?).clamp(0.0, 1.0))
}

/// Null density of `D_n` on a strictly increasing grid inside `(0, 1)`, by
/// central differences of the exact CDF (one-sided at the ends). Grid
/// evaluations run in parallel; the result is deterministic.
pub fn ks_null_pdf(n: usize, d_grid: &[f64]) -> Result<Vec<f64>> {
    if d_grid.len() < 3 {
        return Err(Error::Domain(
            "density grid needs at least 3 points".into(),
        ));
    }
    for w in d_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain("density grid must be strictly increasing".into()));
        }
    }
    let cdf: Vec<f64> = d_grid
        .par_iter()
        .map(|&d| ks_null_cdf(n, d))
        .collect::<Result<_>>()?;
    let m = d_grid.len();
    let mut pdf = Vec::with_capacity(m);
    for i in 0..m {
        let (lo, hi) = match i {
            0 => (0, 1),
            _ if i == m - 1 => (m - 2, m - 1),
            _ => (i - 1, i + 1),
        };
        pdf.push((cdf[hi] - cdf[lo]) / (d_grid[hi] - d_grid[lo]));
    }
    Ok(pdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_observation_null_is_linear() {
        // D_1 = max(U, 1-U): P(D_1 ≤ d) = 2d - 1 on [1/2, 1]
        for i in 0..=9 {
            let d = 0.5 + 0.05 * i as f64;
            let got = ks_null_cdf(1, d).unwrap();
            assert!((got - (2.0 * d - 1.0)).abs() < 1e-12, "d = {d}: {got}");
        }
        let got = ks_null_cdf(1, 0.999_999_999).unwrap();
        assert!((got - (2.0 * 0.999_999_999 - 1.0)).abs() < 1e-9);
        assert_eq!(ks_null_cdf(1, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn matches_independent_exact_references() {
        // frozen from two independent implementations of the exact law
        let cases = [
            (100usize, 0.13581, 0.954_665_286_353_83),
            (2755usize, 0.023629, 1.0 - 0.090_787_772),
            (2755usize, 0.028182, 1.0 - 0.024_668_045),
        ];
        for (n, d, expect) in cases {
            let got = ks_null_cdf(n, d).unwrap();
            assert!(
                (got - expect).abs() < 1e-7,
                "n = {n}, d = {d}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn exact_cdf_near_plain_asymptotic_series_at_n_100() {
        // the plain series (no finite-n correction) sits ~4.7e-3 away here
        let d = 0.13581;
        let lambda = d * 10.0;
        let got = ks_null_cdf(100, d).unwrap();
        let series = 1.0 - kolmogorov_sf(lambda);
        assert!((got - series).abs() < 5e-3, "gap {}", (got - series).abs());
        assert!((got - series).abs() > 1e-3); // the correction is real
    }

    #[test]
    fn paper_table_p_values() {
        let svg2 = p_value(2755, 0.023629).unwrap();
        assert!((svg2 - 0.090788).abs() < 1e-5, "SVG2 p = {svg2}");
        let avg2 = p_value(2755, 0.028182).unwrap();
        assert!((avg2 - 0.024668).abs() < 1e-5, "AVG2 p = {avg2}");
        let svg1 = p_value(2755, 0.036763).unwrap();
        assert!((svg1 - 0.001136).abs() < 1e-5, "SVG1 p = {svg1}");
        let clm = p_value(2755, 0.095791).unwrap();
        assert!(clm < 1e-10, "CLM p = {clm}");
    }

    #[test]
    fn p_value_limits() {
        assert_eq!(p_value(50, 1.0).unwrap(), 0.0);
        assert!(p_value(50, 0.999).unwrap() < 1e-12);
        assert!(p_value(50, 0.005).unwrap() > 0.999_999);
    }

    #[test]
    fn cdf_monotone_in_d() {
        for &n in &[1usize, 5, 37, 200, 2755] {
            let mut prev = -1.0;
            for i in 1..200 {
                let d = i as f64 / 200.0;
                let v = ks_null_cdf(n, d).unwrap();
                assert!(v >= prev - 1e-12, "n = {n}, d = {d}");
                prev = v;
            }
        }
    }

    #[test]
    fn approaches_asymptotic_from_above_at_fixed_lambda() {
        // at fixed d√n the exact CDF decreases toward the limit as n grows
        let lambda = 1.0;
        let limit = 1.0 - kolmogorov_sf(lambda);
        let mut prev = f64::INFINITY;
        for &n in &[20usize, 80, 320, 1280] {
            let d = lambda / (n as f64).sqrt();
            let v = ks_null_cdf(n, d).unwrap();
            assert!(v < prev, "n = {n}");
            assert!(v > limit);
            prev = v;
        }
    }

    #[test]
    fn asymptotic_fallback_engages_for_large_matrices() {
        // n·d > 1000 forces the series path
        let n = 2_000_000usize;
        let d = 0.00096;
        let v = ks_null_cdf(n, d).unwrap();
        let root_n = (n as f64).sqrt();
        let expect = 1.0 - kolmogorov_sf((root_n + 0.12 + 0.11 / root_n) * d);
        assert_eq!(v, expect);
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn null_pdf_integrates_to_one_and_is_positively_skewed() {
        let n = 2755usize;
        let grid: Vec<f64> = (1..260).map(|i| 0.0002 * i as f64).collect();
        let pdf = ks_null_pdf(n, &grid).unwrap();
        let step = 0.0002;
        let mass: f64 = pdf.iter().sum::<f64>() * step;
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        let mean: f64 = grid.iter().zip(&pdf).map(|(d, p)| d * p).sum::<f64>() * step;
        let m2: f64 = grid
            .iter()
            .zip(&pdf)
            .map(|(d, p)| (d - mean).powi(2) * p)
            .sum::<f64>()
            * step;
        let m3: f64 = grid
            .iter()
            .zip(&pdf)
            .map(|(d, p)| (d - mean).powi(3) * p)
            .sum::<f64>()
            * step;
        assert!(m3 / m2.powf(1.5) > 0.0, "skew {}", m3 / m2.powf(1.5));
        // mode location from the figure: mass concentrated near 0.0165
        let (imax, _) = pdf
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let mode = grid[imax];
        assert!((0.014..=0.018).contains(&mode), "mode {mode}");
    }

    #[test]
    fn null_pdf_tracks_asymptotic_shape_at_n_50() {
        // At n = 50 the corrected asymptotic series sits ~1.5e-2 from the
        // exact CDF in sup norm and ~20% from the exact density in the bulk
        // (both measured against two independent exact implementations), so
        // this guards the shape agreement at those scales.
        let n = 50usize;
        let grid: Vec<f64> = (1..260).map(|i| 0.002 * i as f64).collect();
        let pdf = ks_null_pdf(n, &grid).unwrap();
        let root_n = (n as f64).sqrt();
        let corr = root_n + 0.12 + 0.11 / root_n;
        let acdf = |d: f64| 1.0 - kolmogorov_sf(corr * d);
        let h = 1e-6;
        let mut sup_cdf = 0.0f64;
        let mut sup_pdf_rel = 0.0f64;
        for (i, &d) in grid.iter().enumerate() {
            let exact = ks_null_cdf(n, d).unwrap();
            sup_cdf = sup_cdf.max((exact - acdf(d)).abs());
            if exact > 0.01 && exact < 0.99 {
                let a = (acdf(d + h) - acdf(d - h)) / (2.0 * h);
                sup_pdf_rel = sup_pdf_rel.max((pdf[i] - a).abs() / pdf[i].max(1e-12));
            }
        }
        assert!(sup_cdf < 2e-2, "cdf gap {sup_cdf}");
        assert!(sup_pdf_rel < 0.25, "bulk density gap {sup_pdf_rel}");
    }

    #[test]
    fn stratified_sample_reaches_the_lower_bound() {
        // sample at quantiles (j - 1/2)/n of the model: d_n = 1/(2n)
        let n = 40usize;
        let values: Vec<f64> = (1..=n).map(|j| (j as f64 - 0.5) / n as f64).collect();
        let ks = ks_statistic(&values, |x| Ok(x.clamp(0.0, 1.0))).unwrap();
        assert!((ks.d_n - 0.5 / n as f64).abs() < 1e-15);
        assert!((ks.d_plus - 0.5 / n as f64).abs() < 1e-15);
        assert!((ks.d_minus - 0.5 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_supremum_on_uniform_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000usize;
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ks = ks_statistic(&values, |x| Ok(x.clamp(0.0, 1.0))).unwrap();

        // dense mesh that includes every jump point and its left limit
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut mesh: Vec<f64> = (0..1_000_000).map(|i| i as f64 / 1_000_000.0).collect();
        for &x in &sorted {
            mesh.push(x);
            mesh.push(x - 1e-12);
        }
        mesh.sort_by(|a, b| a.total_cmp(b));
        let ecdf = |x: f64| {
            let idx = sorted.partition_point(|&v| v <= x);
            idx as f64 / n as f64
        };
        let brute = mesh
            .iter()
            .map(|&x| (ecdf(x) - x.clamp(0.0, 1.0)).abs())
            .fold(0.0f64, f64::max);
        assert!(
            (ks.d_n - brute).abs() < 1e-9,
            "jump formula {} vs mesh {brute}",
            ks.d_n
        );
    }

    #[test]
    fn ties_step_by_multiplicity() {
        let values = vec![0.5, 0.5, 0.5, 0.9];
        let ks = ks_statistic(&values, |x| Ok(x.clamp(0.0, 1.0))).unwrap();
        // at 0.5: F = 0.5, F_n jumps 0 -> 3/4 ; at 0.9: F_n 3/4 -> 1
        assert!((ks.d_minus - 0.5).abs() < 1e-15);
        assert!((ks.d_plus - 0.25).abs() < 1e-15);
        assert!((ks.d_n - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_monotone_cdf_rejected() {
        let values = vec![0.1, 0.2, 0.3];
        let bad = |x: f64| Ok(if x < 0.15 { 0.9 } else { 0.1 });
        assert!(matches!(
            ks_statistic(&values, bad),
            Err(Error::NonMonotoneCdf { .. })
        ));
    }

    proptest! {
        #[test]
        fn affine_transform_invariance(
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
            seed in 0u64..500,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let model = |x: f64| Ok(((x + 1.0) / 2.0).clamp(0.0, 1.0));
            let base = ks_statistic(&values, model).unwrap();
            let mapped: Vec<f64> = values.iter().map(|v| v * scale + shift).collect();
            let model_mapped =
                |x: f64| Ok((((x - shift) / scale + 1.0) / 2.0).clamp(0.0, 1.0));
            let moved = ks_statistic(&mapped, model_mapped).unwrap();
            prop_assert!((base.d_n - moved.d_n).abs() < 1e-12);
            prop_assert!((base.d_plus - moved.d_plus).abs() < 1e-12);
            prop_assert!((base.d_minus - moved.d_minus).abs() < 1e-12);
        }
    }
}
