//! Radix-2 complex FFT, the Bailey fractional Fourier transform, and the
//! inversion step that turns characteristic-function samples into density
//! values on a configurable output grid.
//!
//! The fractional transform evaluates `G_k(x, δ) = Σ_j x_j e^{-2πi jkδ}` for
//! arbitrary real `δ` through the chirp factorization
//! `G_k = e^{-πik²δ} · IDFT[DFT(y) · DFT(z)]_k` with `2n`-long buffers, so the
//! input and output spacings of the inversion can be chosen independently.
//! `δ = 1/n` reduces `G` to the ordinary DFT.

use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Diagnostics threshold: characteristic functions whose edge magnitude
/// exceeds this get a truncation warning attached to the grid output.
pub const TAIL_WARN_LIMIT: f64 = 1e-10;

/// Imaginary residue allowed after inverting a Hermitian-symmetric spectrum,
/// relative to `max(1, sup|Re|)`.
pub const IMAG_RESIDUE_LIMIT: f64 = 1e-8;

fn check_power_of_two(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwoLength(n));
    }
    Ok(())
}

fn check_finite(x: &[Complex64]) -> Result<()> {
    for (i, v) in x.iter().enumerate() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteInput(i));
        }
    }
    Ok(())
}

/// Radix-2 decimation-in-time FFT with a twiddle table computed once per
/// instance. Immutable after construction, so instances can be shared
/// across threads.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    // e^{-2πi k / n} for k < n/2
    twiddles: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        check_power_of_two(n)?;
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform: `X_k = Σ_j x_j e^{-2πi jk/n}`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan size");
        self.transform(buf, false);
    }

    /// In-place inverse transform, normalized by `1/n` so that
    /// `inverse(forward(x)) = x`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length must match plan size");
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], invert: bool) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        // bit-reversal permutation
        let shift = usize::BITS - n.trailing_zeros();
        for j in 1..n {
            let k = j.reverse_bits() >> shift;
            if j < k {
                buf.swap(j, k);
            }
        }
        // butterfly passes; twiddle stride halves as the block length doubles
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for block in buf.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(len / 2);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let mut w = self.twiddles[k * stride];
                    if invert {
                        w = w.conj();
                    }
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            len <<= 1;
        }
    }
}

/// Forward DFT `X_k = Σ_j x_j e^{-2πi jk/n}` of a power-of-two-length sequence.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_finite(x)?;
    let plan = Fft::new(x.len())?;
    let mut buf = x.to_vec();
    plan.forward(&mut buf);
    Ok(buf)
}

/// Inverse DFT normalized so that `ifft(fft(x)) = x`.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_finite(x)?;
    let plan = Fft::new(x.len())?;
    let mut buf = x.to_vec();
    plan.inverse(&mut buf);
    Ok(buf)
}

/// Reusable state for fractional transforms of a fixed `(n, delta)` pair:
/// the chirp `e^{-πij²δ}` and the spectrum of the `2n`-long mirrored chirp.
/// Building one plan and feeding it many sequences skips two of the three
/// FFTs' worth of setup per call.
#[derive(Debug, Clone)]
pub struct FrftPlan {
    n: usize,
    delta: f64,
    fft: Fft,
    // e^{-πi j² δ} for j < n
    chirp: Vec<Complex64>,
    // DFT of z_j = e^{+πi j² δ} (j < n), e^{+πi (2n-j)² δ} (n ≤ j < 2n)
    chirp_spectrum: Vec<Complex64>,
}

impl FrftPlan {
    /// Memoized plan lookup: repeated inversions on the same grid (one per
    /// derivative sequence per Newton iteration) share the chirp spectrum.
    /// Entries are immutable once built.
    pub fn cached(n: usize, delta: f64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<FrftPlan>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, delta.to_bits());
        if let Some(plan) = cache.lock().expect("plan cache poisoned").get(&key) {
            return Ok(plan.clone());
        }
        let plan = Arc::new(Self::new(n, delta)?);
        let mut guard = cache.lock().expect("plan cache poisoned");
        if guard.len() >= 16 {
            guard.clear();
        }
        Ok(guard.entry(key).or_insert(plan).clone())
    }

    pub fn new(n: usize, delta: f64) -> Result<Self> {
        check_power_of_two(n)?;
        if !delta.is_finite() {
            return Err(Error::Domain(format!("frft fraction {delta} is not finite")));
        }
        let m = 2 * n;
        let fft = Fft::new(m)?;
        let phase = |j: usize| PI * (j * j) as f64 * delta;
        let chirp: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, -phase(j)))
            .collect();
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            z[j] = Complex64::from_polar(1.0, phase(j));
        }
        for j in n..m {
            z[j] = Complex64::from_polar(1.0, phase(m - j));
        }
        fft.forward(&mut z);
        Ok(Self {
            n,
            delta,
            fft,
            chirp,
            chirp_spectrum: z,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `G_k(x, δ) = Σ_{j<n} x_j e^{-2πi jkδ}` for `k < n`.
    pub fn transform(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::GridContract(format!(
                "input length {} does not match plan size {}",
                x.len(),
                self.n
            )));
        }
        check_finite(x)?;
        let m = 2 * self.n;
        let mut y = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..self.n {
            y[j] = x[j] * self.chirp[j];
        }
        self.fft.forward(&mut y);
        for (yv, zv) in y.iter_mut().zip(&self.chirp_spectrum) {
            *yv *= zv;
        }
        self.fft.inverse(&mut y);
        Ok((0..self.n).map(|k| y[k] * self.chirp[k]).collect())
    }
}

/// Fractional Fourier transform `G_k(x, δ) = Σ_j x_j e^{-2πi jkδ}`.
///
/// One-shot convenience over [`FrftPlan`]; use the plan directly when
/// transforming many sequences at the same `(n, δ)`.
pub fn frft(x: &[Complex64], delta: f64) -> Result<Vec<Complex64>> {
    FrftPlan::new(x.len(), delta)?.transform(x)
}

/// Discretization contract shared by the forward and inverse transforms.
///
/// The characteristic function is sampled at `t_j = (j - n/2)·beta` on the
/// truncation interval `[-a/2, a/2]`, and densities come out at
/// `x_k = (k - n/2)·gamma`. The fraction parameter is pinned to
/// `delta = beta·gamma/(2π)`, which is what lets `beta` and `gamma` be chosen
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrftGrid {
    a: f64,
    n: usize,
    beta: f64,
    gamma: f64,
    delta: f64,
}

impl FrftGrid {
    /// Paper-default plotting grid: `a = 20`, `n = 2048`, equal spacings.
    pub const DEFAULT_A: f64 = 20.0;
    pub const DEFAULT_N: usize = 2048;

    /// Grid with frequency support `a`, size `n`, and output step `gamma`.
    pub fn new(a: f64, n: usize, gamma: f64) -> Result<Self> {
        check_power_of_two(n)?;
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::GridContract(format!(
                "frequency support a = {a} must be positive and finite"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::GridContract(format!(
                "output step gamma = {gamma} must be positive and finite"
            )));
        }
        let beta = a / n as f64;
        let delta = beta * gamma / (2.0 * PI);
        Ok(Self {
            a,
            n,
            beta,
            gamma,
            delta,
        })
    }

    /// Equal input and output spacing (`gamma = beta = a/n`).
    pub fn square(a: f64, n: usize) -> Result<Self> {
        let beta = a / n as f64;
        Self::new(a, n, beta)
    }

    /// Grid whose output nodes cover `[-half_span, half_span)`.
    pub fn with_output_span(a: f64, n: usize, half_span: f64) -> Result<Self> {
        if !(half_span.is_finite() && half_span > 0.0) {
            return Err(Error::GridContract(format!(
                "output half-span {half_span} must be positive and finite"
            )));
        }
        Self::new(a, n, 2.0 * half_span / n as f64)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Frequency node `t_j = (j - n/2)·beta`.
    pub fn input_node(&self, j: usize) -> f64 {
        (j as f64 - self.n as f64 / 2.0) * self.beta
    }

    /// Output node `x_k = (k - n/2)·gamma`.
    pub fn output_node(&self, k: usize) -> f64 {
        (k as f64 - self.n as f64 / 2.0) * self.gamma
    }

    pub fn input_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.input_node(j)).collect()
    }

    pub fn output_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.output_node(k)).collect()
    }

    /// Full output extent `[x_0, x_{n-1}]`.
    pub fn output_span(&self) -> (f64, f64) {
        (self.output_node(0), self.output_node(self.n - 1))
    }

    /// Central fraction of the output span considered safe for
    /// interpolation (cubic stencils need interior margin).
    pub fn safe_span(&self, fraction: f64) -> (f64, f64) {
        let (lo, hi) = self.output_span();
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) * fraction;
        (mid - half, mid + half)
    }

    fn check(&self) -> Result<()> {
        check_power_of_two(self.n)?;
        let expected = self.beta * self.gamma / (2.0 * PI);
        if (self.delta - expected).abs() > 1e-12 * expected.abs().max(1e-300) {
            return Err(Error::GridContract(format!(
                "delta_frft = {} differs from beta*gamma/(2*pi) = {}",
                self.delta, expected
            )));
        }
        let beta = self.a / self.n as f64;
        if (self.beta - beta).abs() > 1e-12 * beta {
            return Err(Error::GridContract(format!(
                "beta = {} differs from a/n = {}",
                self.beta, beta
            )));
        }
        Ok(())
    }
}

/// Result of a density inversion: real values on the output nodes plus
/// truncation diagnostics.
#[derive(Debug, Clone)]
pub struct Inverted {
    /// Real part of the inverted sequence at each output node.
    pub values: Vec<f64>,
    /// Largest imaginary residue discarded (diagnostic).
    pub imag_residue: f64,
    /// `max(|s_0|, |s_{n-1}|)` of the input samples; a proxy for the
    /// spectrum truncation error. Above [`TAIL_WARN_LIMIT`] the inversion
    /// is suspect.
    pub tail_magnitude: f64,
}

impl Inverted {
    /// Whether the input spectrum had decayed below the warning limit at the
    /// grid edge.
    pub fn tail_ok(&self) -> bool {
        self.tail_magnitude <= TAIL_WARN_LIMIT
    }
}

/// Invert characteristic-function samples `cf_samples[j] = F[f](t_j)` into
/// density values `f(x_k)` on the grid's output nodes:
///
/// `f(x_k) = β/(2π) · e^{-πi(k-n/2)nδ} · G_k(F[f](t_j)·e^{-πijnδ}, -δ)`.
///
/// The quadrature weight is the input step `β`; with the paper's equal
/// spacings it coincides with the output step. Imaginary residues above
/// [`IMAG_RESIDUE_LIMIT`] (relative to `max(1, sup|Re|)`) are rejected
/// rather than clipped.
pub fn invert_cf(cf_samples: &[Complex64], grid: &FrftGrid) -> Result<Inverted> {
    let plan = FrftPlan::cached(grid.n(), -grid.delta())?;
    invert_cf_with_plan(cf_samples, grid, &plan)
}

/// [`invert_cf`] with a caller-provided plan, so a batch of inversions on
/// the same grid shares the chirp setup. The plan must have been built with
/// fraction `-grid.delta()`.
pub fn invert_cf_with_plan(
    cf_samples: &[Complex64],
    grid: &FrftGrid,
    plan: &FrftPlan,
) -> Result<Inverted> {
    grid.check()?;
    let n = grid.n();
    if cf_samples.len() != n {
        return Err(Error::GridContract(format!(
            "expected {} characteristic-function samples, got {}",
            n,
            cf_samples.len()
        )));
    }
    if plan.len() != n || (plan.delta() + grid.delta()).abs() > 1e-15 * grid.delta().abs() {
        return Err(Error::GridContract(
            "plan does not match grid (needs fraction -delta)".into(),
        ));
    }
    check_finite(cf_samples)?;

    let delta = grid.delta();
    let half = n as f64 / 2.0;
    let pre: Vec<Complex64> = cf_samples
        .iter()
        .enumerate()
        .map(|(j, s)| s * Complex64::from_polar(1.0, -PI * j as f64 * n as f64 * delta))
        .collect();
    let g = plan.transform(&pre)?;

    let weight = grid.beta() / (2.0 * PI);
    let mut values = Vec::with_capacity(n);
    let mut imag_residue = 0.0f64;
    let mut sup = 0.0f64;
    for (k, gk) in g.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -PI * (k as f64 - half) * n as f64 * delta);
        let out = weight * phase * gk;
        imag_residue = imag_residue.max(out.im.abs());
        sup = sup.max(out.re.abs());
        values.push(out.re);
    }
    let tail_magnitude = cf_samples[0].norm().max(cf_samples[n - 1].norm());
    // A spectrum truncated before it decays leaves an unavoidable residue of
    // order tail·β/(2π) from the unpaired edge sample; allow for it so the
    // check stays meaningful for well-decayed inputs without rejecting
    // deliberately coarse diagnostic grids.
    let limit = IMAG_RESIDUE_LIMIT * sup.max(1.0) + tail_magnitude * grid.beta();
    if imag_residue > limit {
        return Err(Error::ImaginaryResidue {
            residue: imag_residue,
            limit,
        });
    }
    Ok(Inverted {
        values,
        imag_residue,
        tail_magnitude,
    })
}
