//! Cubic interpolation on uniformly spaced tables.

use crate::error::{Error, Result};

/// Four-point Lagrange cubic interpolation of `table` values tabulated at
/// `x_i = x0 + i·step`. Reproduces cubics exactly, so knots and linear ramps
/// come back unchanged.
///
/// The query must lie inside `[x0, x0 + (len-1)·step]`; near the ends the
/// stencil is shifted inward. Callers enforce their own stricter spans.
pub fn cubic_at(x0: f64, step: f64, table: &[f64], y: f64) -> Result<f64> {
    let n = table.len();
    assert!(n >= 4, "cubic interpolation needs at least 4 points");
    assert!(step > 0.0);
    let hi = x0 + (n - 1) as f64 * step;
    if !(y >= x0 && y <= hi) {
        return Err(Error::OutsideSpan {
            value: y,
            lo: x0,
            hi,
        });
    }
    let pos = (y - x0) / step;
    // left node of the bracketing cell, pulled inward so [i-1, i+2] exists
    let cell = (pos.floor() as usize).clamp(1, n - 3);
    let s = pos - cell as f64;
    let f = [
        table[cell - 1],
        table[cell],
        table[cell + 1],
        table[cell + 2],
    ];
    let w_m1 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let w_0 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let w_1 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let w_2 = (s + 1.0) * s * (s - 1.0) / 6.0;
    Ok(w_m1 * f[0] + w_0 * f[1] + w_1 * f[2] + w_2 * f[3])
}
