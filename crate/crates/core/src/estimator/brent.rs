//! Brent's derivative-free minimiser on a bracket (golden section with
//! parabolic interpolation).

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct BrentOutcome<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `f` on `[a, b]`.
///
/// Stops once the bracket around the best point is within
/// `2·(rel·|x| + abs_tol)`. Non-finite values of `f` are treated as `+∞`.
pub fn minimize<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_iter: usize,
) -> BrentOutcome<T> {
    let golden = T::lit(0.381_966_011_250_105_1);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut eval = |x: T| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::max_value().unwrap()
        }
    };
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();

    for iter in 0..max_iter {
        let m = half * (a + b);
        let tol = rel_tol * x.abs() + abs_tol;
        let t2 = two * tol;
        if (x - m).abs() <= t2 - half * (b - a) {
            return BrentOutcome {
                x,
                fx,
                iterations: iter,
                converged: true,
            };
        }
        let mut golden_step = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            } else {
                q = -q;
            }
            let r = e;
            e = d;
            if p.abs() < (half * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < t2 || b - u < t2 {
                    d = if x < m { tol } else { -tol };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol {
            x + d
        } else if d > T::zero() {
            x + tol
        } else {
            x - tol
        };
        let fu = eval(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    BrentOutcome {
        x,
        fx,
        iterations: max_iter,
        converged: false,
    }
}
