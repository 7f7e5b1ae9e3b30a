//! Deterministic unconstrained minimization for the numerical M-step.
//!
//! Quasi-Newton (BFGS) with a backtracking line search, falling back to a
//! fixed-rule Nelder-Mead when the line search cannot make progress. No
//! randomness anywhere, so fits are bit-reproducible.

/// Outcome of [`minimize`]. `f` is the best objective value seen; `x` the
/// point attaining it. `nan_at_start` is set when the objective is NaN at the
/// starting point, in which case `x` is the starting point itself.
pub(crate) struct Minimized {
    pub x: Vec<f64>,
    pub f: f64,
    pub nan_at_start: bool,
}

/// Minimizes `f`. The objective fills the gradient slice when one is
/// requested; every call counts against `max_evals`. The returned value never
/// exceeds the starting value: if no improvement is found the starting point
/// is returned unchanged.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], max_evals: usize) -> Minimized
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut grad = vec![0.0; n];
    let f0 = {
        evals += 1;
        f(x0, Some(&mut grad))
    };
    if !f0.is_finite() {
        return Minimized {
            x: x0.to_vec(),
            f: f0,
            nan_at_start: f0.is_nan(),
        };
    }

    let mut best_x = x0.to_vec();
    let mut best_f = f0;

    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut g = grad.clone();
    let mut h = identity(n);
    let mut line_search_failed = false;

    while evals < max_evals {
        let mut d = mat_vec_neg(&h, &g);
        let mut slope = dot(&d, &g);
        if slope.is_nan() || slope >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
            if slope.is_nan() || slope >= 0.0 {
                break; // zero gradient
            }
        }

        // Backtracking Armijo search.
        let mut alpha = 1.0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..30 {
            if evals >= max_evals {
                break;
            }
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            evals += 1;
            let ft = f(&xt, None);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((xt, ft));
                break;
            }
            alpha *= 0.5;
        }
        let (xn, fn_) = match accepted {
            Some(v) => v,
            None => {
                line_search_failed = true;
                break;
            }
        };

        if evals >= max_evals {
            if fn_ < best_f {
                best_f = fn_;
                best_x = xn;
            }
            break;
        }
        evals += 1;
        let mut gn = vec![0.0; n];
        let fn_g = f(&xn, Some(&mut gn));
        let fn_ = if fn_g.is_finite() { fn_g } else { fn_ };
        if fn_ < best_f {
            best_f = fn_;
            best_x = xn.clone();
        }

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            bfgs_update(&mut h, &s, &y, sy);
        } else {
            h = identity(n);
        }

        let f_change = (fx - fn_).abs();
        x = xn;
        fx = fn_;
        g = gn;

        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < 1e-8 * (1.0 + fx.abs()) || f_change <= 1e-13 * (1.0 + fx.abs()) {
            break;
        }
    }

    if line_search_failed && evals < max_evals {
        let (nm_x, nm_f) = nelder_mead(&mut f, &best_x, best_f, max_evals - evals);
        if nm_f < best_f {
            best_f = nm_f;
            best_x = nm_x;
        }
    }

    if best_f >= f0 {
        // No improvement: hand back the start, bit for bit.
        return Minimized {
            x: x0.to_vec(),
            f: f0,
            nan_at_start: false,
        };
    }
    Minimized {
        x: best_x,
        f: best_f,
        nan_at_start: false,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec_neg(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| -(0..n).map(|j| m[i * n + j] * v[j]).sum::<f64>())
        .collect()
}

/// Inverse-Hessian update `H <- (I - r s y') H (I - r y s') + r s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
        .collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + r * (1.0 + r * yhy) * s[i] * s[j];
        }
    }
}

/// Fixed-coefficient Nelder-Mead from `x0`, returning the best vertex seen.
fn nelder_mead<F>(f: &mut F, x0: &[f64], f0: f64, mut budget: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x0.len();
    let finite = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let mut eval = |x: &[f64], budget: &mut usize| {
        if *budget == 0 {
            return f64::INFINITY;
        }
        *budget -= 1;
        finite(f(x, None))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = 0.05 * v[i].abs().max(0.2);
        v[i] += step;
        let fv = eval(&v, &mut budget);
        simplex.push((v, fv));
    }

    while budget > 0 {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[n].1 - simplex[0].1;
        if !spread.is_finite() && simplex[0].1.is_finite() {
            // Worst vertex stuck at infinity; shrink toward the best.
        } else if spread <= 1e-12 * (1.0 + simplex[0].1.abs()) {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + (c - w))
            .collect();
        let fr = eval(&reflect, &mut budget);

        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let fe = eval(&expand, &mut budget);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + 0.5 * (w - c))
                .collect();
            let fc = eval(&contract, &mut budget);
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for vert in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = best
                        .iter()
                        .zip(&vert.0)
                        .map(|(b, w)| b + 0.5 * (w - b))
                        .collect();
                    let fv = eval(&v, &mut budget);
                    *vert = (v, fv);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (simplex[0].0.clone(), simplex[0].1)
}
