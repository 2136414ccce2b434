use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Bisection stops once the bracket is narrower than this.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// First sign change of `f` on `[a, b]`, located on a `grid_n`-point scan and
/// refined by bisection. `f` maps a batch of abscissae to values. `None`
/// means no sign change on the grid.
pub fn find_first_root(
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    (a, b): (f64, f64),
    grid_n: usize,
) -> Result<Option<f64>> {
    if grid_n < 2 || !(a < b) {
        return Err(invalid("root scan needs grid_n ≥ 2 and a < b"));
    }
    let h = (b - a) / (grid_n - 1) as f64;
    let xs: Vec<f64> = (0..grid_n)
        .map(|i| if i + 1 == grid_n { b } else { a + i as f64 * h })
        .collect();
    let ys = f(&xs)?;
    let Some(i) = (0..grid_n - 1).find(|&i| ys[i] == 0.0 || ys[i].signum() != ys[i + 1].signum()) else {
        return Ok(if ys[grid_n - 1] == 0.0 { Some(b) } else { None });
    };
    if ys[i] == 0.0 {
        return Ok(Some(xs[i]));
    }
    let (mut lo, mut hi, mut f_lo) = (xs[i], xs[i + 1], ys[i]);
    while hi - lo >= ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(&[mid])?[0];
        if fm == 0.0 {
            return Ok(Some(mid));
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
