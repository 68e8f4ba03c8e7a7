//! Bracketed root finding for monotone scalar functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Absolute width of the final bracket in x.
    pub x_abs: f64,
    /// Residual tolerance relative to `max(|target|, f_floor)`.
    pub f_rel: f64,
    pub f_floor: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            x_abs: 1e-15,
            f_rel: 1e-14,
            f_floor: f64::MIN_POSITIVE,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// `f(x) - target`.
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `f(x) = target` on `[lo, hi]` for nondecreasing `f`.
///
/// Endpoint values are evaluated first; a target outside `[f(lo), f(hi)]`
/// gives [`Error::OutOfRange`]. Inside the bracket, Illinois-modified false
/// position steps are taken, falling back to bisection whenever a step fails
/// to halve the bracket.
pub fn solve_increasing<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    lo: f64,
    hi: f64,
    tol: Tolerance,
) -> Result<Root> {
    if !(lo <= hi) || !target.is_finite() {
        return Err(Error::Domain {
            name: "bracket",
            value: hi - lo,
            expected: "lo <= hi and a finite target",
        });
    }
    let f_tol = tol.f_rel * target.abs().max(tol.f_floor);
    let flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) {
        return Err(Error::Domain {
            name: "f(bracket)",
            value: if flo.is_finite() { fhi } else { flo },
            expected: "finite",
        });
    }
    if target < flo - f_tol || target > fhi + f_tol {
        return Err(Error::OutOfRange {
            target,
            lower: flo,
            upper: fhi,
        });
    }
    let (mut a, mut ga) = (lo, flo - target);
    let (mut b, mut gb) = (hi, fhi - target);
    if ga.abs() <= f_tol && ga.abs() <= gb.abs() {
        return Ok(Root {
            x: a,
            residual: ga,
            iterations: 0,
        });
    }
    if gb.abs() <= f_tol {
        return Ok(Root {
            x: b,
            residual: gb,
            iterations: 0,
        });
    }

    let mut side = 0i8;
    let mut width = b - a;
    for it in 1..=tol.max_iter {
        let mut x = if gb != ga { b - gb * (b - a) / (gb - ga) } else { f64::NAN };
        let mid = 0.5 * (a + b);
        // bisect when false position leaves the bracket or stalls
        if !(x > a && x < b) || (b - a) > 0.5 * width {
            x = mid;
            width = b - a;
        }
        if !(x > a && x < b) {
            // bracket is down to adjacent floats
            let best = if ga.abs() <= gb.abs() { (a, ga) } else { (b, gb) };
            return Ok(Root {
                x: best.0,
                residual: best.1,
                iterations: it,
            });
        }
        let gx = f(x) - target;
        if gx.abs() <= f_tol {
            return Ok(Root {
                x,
                residual: gx,
                iterations: it,
            });
        }
        if gx < 0.0 {
            a = x;
            ga = gx;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            gb = gx;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if b - a <= tol.x_abs {
            let ra = f(a) - target;
            let rb = f(b) - target;
            let best = if ra.abs() <= rb.abs() { (a, ra) } else { (b, rb) };
            return Ok(Root {
                x: best.0,
                residual: best.1,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: tol.max_iter,
    })
}
