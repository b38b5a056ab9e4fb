//! Limited-memory BFGS with two-loop recursion and a strong-Wolfe line
//! search (bracket then zoom, cubic interpolation). Used for the
//! deterministic full-batch refinement stage.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsParams {
    pub memory: usize,
    pub max_iters: usize,
    /// stop when the relative loss decrease falls below this
    pub rel_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    /// steepest-descent step length used when the line search fails
    pub fallback_lr: f64,
    /// consecutive line-search failures before giving up
    pub max_consecutive_failures: usize,
    /// optional early stop on the gradient norm; 0 disables it
    pub grad_tol: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 20,
            max_iters: 5000,
            rel_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            fallback_lr: 1e-6,
            max_consecutive_failures: 5,
            grad_tol: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    IterationCap,
    LineSearchStalled,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: `H g` with the implicit inverse-Hessian estimate.
fn two_loop(history: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (pair, alpha) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (alpha - beta) * si;
        }
    }
    q
}

fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2sq = d1 * d1 - g1 * g2;
    if d2sq >= 0.0 {
        let d2 = d2sq.sqrt() * (x2 - x1).signum();
        let t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
        if t.is_finite() {
            return t.clamp(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
        }
    }
    0.5 * (lo + hi)
}

struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

/// Strong-Wolfe search along `d` from `(x0, f0, g0)`. Returns the accepted
/// probe or `None` when no acceptable step was found.
fn strong_wolfe(
    obj: &mut impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    c1: f64,
    c2: f64,
    max_iters: usize,
) -> Option<Probe> {
    let dg0 = dot(g0, d);
    if dg0 >= 0.0 {
        return None; // not a descent direction
    }
    let eval = |t: f64, obj: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>)| -> Probe {
        let xt: Vec<f64> = x0.iter().zip(d).map(|(x, di)| x + t * di).collect();
        let (f, g) = obj(&xt);
        let dg = dot(&g, d);
        Probe { t, f, g, dg }
    };

    let mut prev = Probe {
        t: 0.0,
        f: f0,
        g: g0.to_vec(),
        dg: dg0,
    };
    let mut cur = eval(1.0, obj);
    let mut bracket: Option<(Probe, Probe)> = None;
    for _ in 0..max_iters {
        if cur.f > f0 + c1 * cur.t * dg0 || (prev.t > 0.0 && cur.f >= prev.f) {
            bracket = Some((prev, cur));
            break;
        }
        if cur.dg.abs() <= -c2 * dg0 {
            return Some(cur);
        }
        if cur.dg >= 0.0 {
            bracket = Some((prev, cur));
            break;
        }
        let next_t = (2.0 * cur.t).min(1e4);
        prev = cur;
        cur = eval(next_t, obj);
        if prev.t == cur.t {
            return None;
        }
    }
    let (mut lo, mut hi) = bracket?;
    // keep lo the lower-value end
    if hi.f < lo.f {
        std::mem::swap(&mut lo, &mut hi);
    }
    for _ in 0..max_iters {
        if (hi.t - lo.t).abs() * norm(d) < 1e-14 {
            break;
        }
        let t = cubic_interpolate(lo.t, lo.f, lo.dg, hi.t, hi.f, hi.dg);
        let cand = eval(t, obj);
        if cand.f > f0 + c1 * cand.t * dg0 || cand.f >= lo.f {
            hi = cand;
        } else {
            if cand.dg.abs() <= -c2 * dg0 {
                return Some(cand);
            }
            if cand.dg * (hi.t - lo.t) >= 0.0 {
                hi = lo;
            }
            lo = cand;
        }
    }
    // accept the best sufficient-decrease point found, if any
    if lo.t > 0.0 && lo.f < f0 + c1 * lo.t * dg0 {
        return Some(lo);
    }
    None
}

/// Minimizes `obj` (which returns loss and gradient) starting from `x0`.
/// `on_iter` observes `(iteration, f, grad_norm, step_len)` after each
/// accepted step.
pub fn minimize(
    mut obj: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    params: &LbfgsParams,
    mut on_iter: impl FnMut(usize, f64, f64, f64),
) -> LbfgsOutcome {
    let mut x = x0;
    let (mut f, mut g) = obj(&x);
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(params.memory);
    let mut consecutive_failures = 0usize;
    let mut status = LbfgsStatus::IterationCap;
    let mut iterations = 0usize;

    for iter in 0..params.max_iters {
        iterations = iter + 1;
        let mut d = two_loop(&history, &g);
        d.iter_mut().for_each(|v| *v = -*v);
        if dot(&d, &g) >= 0.0 {
            // reset a non-descent direction to steepest descent
            history.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let accepted = strong_wolfe(&mut obj, &x, f, &g, &d, params.c1, params.c2, params.max_line_search);
        let (f_new, g_new, x_new, step_len) = match accepted {
            Some(probe) => {
                consecutive_failures = 0;
                let x_new: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + probe.t * di).collect();
                (probe.f, probe.g, x_new, probe.t)
            }
            None => {
                consecutive_failures += 1;
                if consecutive_failures >= params.max_consecutive_failures {
                    status = LbfgsStatus::LineSearchStalled;
                    break;
                }
                // steepest-descent fallback with a tiny fixed step
                let x_new: Vec<f64> = x
                    .iter()
                    .zip(&g)
                    .map(|(xi, gi)| xi - params.fallback_lr * gi)
                    .collect();
                let (f_new, g_new) = obj(&x_new);
                history.clear();
                if f_new > f {
                    // give the next iteration a fresh steepest-descent try
                    on_iter(iter, f, norm(&g), 0.0);
                    continue;
                }
                (f_new, g_new, x_new, params.fallback_lr)
            }
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == params.memory {
                history.pop_front();
            }
            history.push_back(Pair {
                rho: 1.0 / sy,
                s,
                y,
            });
        }
        let rel_decrease = (f - f_new) / f.abs().max(1e-300);
        x = x_new;
        g = g_new;
        f = f_new;
        on_iter(iter, f, norm(&g), step_len);
        if rel_decrease >= 0.0 && rel_decrease < params.rel_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        if params.grad_tol > 0.0 && norm(&g) < params.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }
    }
    LbfgsOutcome {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        status,
    }
}
