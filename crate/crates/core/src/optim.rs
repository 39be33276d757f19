//! Adam and L-BFGS with a strong-Wolfe line search (bracket, then zoom with
//! safeguarded cubic interpolation).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective value and gradient at a point, plus whatever the caller wants
/// to carry along (for example the loss breakdown).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub value: f64,
    pub grad: Vec<f64>,
    pub info: T,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    /// Stop once every gradient entry is at most this in magnitude.
    pub tolerance_grad: f64,
    /// Stop once the loss or the step changes by less than this.
    pub tolerance_change: f64,
    /// Initial trial step after the first iteration.
    pub lr: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 50,
            c1: 1e-4,
            c2: 0.9,
            max_evals: 25,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
            lr: 1.0,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!("need 0 < c1 < c2 < 1, got c1={} c2={}", self.c1, self.c2)));
        }
        if self.history == 0 || self.max_evals == 0 {
            return Err(Error::Config("history and max_evals must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearch<T> {
    pub alpha: f64,
    /// Evaluation at `x + alpha·d`; `None` when no trial beat the start.
    pub eval: Option<Evaluation<T>>,
    pub evals: usize,
    /// Whether both strong-Wolfe conditions hold at `alpha`.
    pub satisfied: bool,
}

/// Minimizer of the cubic through `(x1, f1, g1)` and `(x2, f2, g2)`, clamped
/// to `bounds` (default: the interval between the points).
pub fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if pos.is_finite() {
            return pos.max(lo).min(hi);
        }
    }
    (lo + hi) / 2.0
}

struct Trial<T> {
    t: f64,
    f: f64,
    gtd: f64,
    eval: Option<Evaluation<T>>,
}

impl<T: Clone> Clone for Trial<T> {
    fn clone(&self) -> Self {
        Trial { t: self.t, f: self.f, gtd: self.gtd, eval: self.eval.clone() }
    }
}

/// Step length along `d` from `x` satisfying the strong Wolfe conditions
///
/// `f(x + αd) ≤ f(x) + c1·α·∇f(x)ᵀd` and `|∇f(x + αd)ᵀd| ≤ c2·|∇f(x)ᵀd|`,
///
/// found by bracketing then zooming from the trial `alpha0`. When the
/// evaluation budget runs out the best point seen is returned unflagged.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_line_search<T, F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearch<T>>
where
    T: Clone,
    F: FnMut(&[f64]) -> Result<Evaluation<T>>,
{
    let gtd0 = dot(g0, d);
    if !(gtd0 < 0.0) {
        return Err(Error::NotDescentDirection(gtd0));
    }
    let (c1, c2) = (cfg.c1, cfg.c2);
    let d_norm = max_abs(d);
    let mut evals = 0;
    let mut probe = |t: f64, evals: &mut usize| -> Result<Trial<T>> {
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
        let e = f(&xt)?;
        *evals += 1;
        let gtd = dot(&e.grad, d);
        Ok(Trial { t, f: e.value, gtd, eval: Some(e) })
    };
    let armijo_fails = |tr: &Trial<T>| !(tr.f <= f0 + c1 * tr.t * gtd0);
    let curvature_ok = |tr: &Trial<T>| tr.gtd.abs() <= -c2 * gtd0;

    let start = Trial { t: 0.0, f: f0, gtd: gtd0, eval: None };
    let mut prev = start.clone();
    let mut cur = probe(alpha0, &mut evals)?;
    let mut done = false;
    let mut bracket: Vec<Trial<T>>;
    let mut iter = 0;
    loop {
        if evals >= cfg.max_evals {
            bracket = vec![start.clone(), cur];
            break;
        }
        if armijo_fails(&cur) || (iter > 1 && !(cur.f < prev.f)) {
            bracket = vec![prev, cur];
            break;
        }
        if curvature_ok(&cur) {
            bracket = vec![cur];
            done = true;
            break;
        }
        if cur.gtd >= 0.0 {
            bracket = vec![prev, cur];
            break;
        }
        let min_step = cur.t + 0.01 * (cur.t - prev.t);
        let max_step = cur.t * 10.0;
        let t = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, Some((min_step, max_step)));
        prev = cur;
        cur = probe(t, &mut evals)?;
        iter += 1;
    }

    let mut insufficient = false;
    let order = |b: &[Trial<T>]| if b[0].f <= b[b.len() - 1].f { (0, 1) } else { (1, 0) };
    let (mut low, mut high) = if bracket.len() == 2 { order(&bracket) } else { (0, 0) };
    while !done && evals < cfg.max_evals {
        let (b0, b1) = (bracket[0].t, bracket[1].t);
        if (b1 - b0).abs() * d_norm < cfg.tolerance_change {
            break;
        }
        let mut t = cubic_interpolate(b0, bracket[0].f, bracket[0].gtd, b1, bracket[1].f, bracket[1].gtd, None);
        let (bmin, bmax) = (b0.min(b1), b0.max(b1));
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insufficient || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insufficient = false;
            } else {
                insufficient = true;
            }
        } else {
            insufficient = false;
        }
        let tr = probe(t, &mut evals)?;
        if armijo_fails(&tr) || !(tr.f < bracket[low].f) {
            bracket[high] = tr;
            (low, high) = order(&bracket);
        } else {
            if curvature_ok(&tr) {
                done = true;
            } else if tr.gtd * (bracket[high].t - bracket[low].t) >= 0.0 {
                bracket[high] = bracket[low].clone();
            }
            bracket[low] = tr;
        }
    }
    let best = bracket.swap_remove(low);
    let satisfied = done && best.eval.is_some();
    if best.eval.is_some() && !armijo_fails(&best) {
        Ok(LineSearch { alpha: best.t, eval: best.eval, evals, satisfied })
    } else {
        Ok(LineSearch { alpha: 0.0, eval: None, evals, satisfied: false })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    /// A strong-Wolfe step was taken.
    Progress,
    /// A step was taken but the line search ended without both conditions.
    Inexact,
    /// The line search found no decrease; a plain gradient step was taken.
    Fallback,
    /// Gradient or progress fell below tolerance; nothing left to do.
    Converged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub value: f64,
    pub info: T,
    pub status: StepStatus,
    pub evals: usize,
}

/// Gradient step length used when the line search fails.
pub const FALLBACK_STEP: f64 = 1e-3;

/// Limited-memory BFGS. Keeps the objective value and gradient at the
/// current point between calls; call [`reset`](Self::reset) whenever the
/// objective itself changes.
#[derive(Clone, Debug)]
pub struct Lbfgs<T> {
    pub cfg: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    current: Option<Evaluation<T>>,
    iterations: usize,
}

impl<T: Clone> Lbfgs<T> {
    pub fn new(cfg: LbfgsConfig) -> Self {
        Lbfgs { cfg, s: VecDeque::new(), y: VecDeque::new(), current: None, iterations: 0 }
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.current = None;
        self.iterations = 0;
    }

    /// Evaluation at the current point, if one is cached.
    pub fn current(&self) -> Option<&Evaluation<T>> {
        self.current.as_ref()
    }

    /// `-H g` by the two-loop recursion with scaling `sᵀy / yᵀy`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let n = self.s.len();
        let rho: Vec<f64> = (0..n).map(|i| 1.0 / dot(&self.y[i], &self.s[i])).collect();
        let mut alpha = vec![0.0; n];
        for i in (0..n).rev() {
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if n > 0 {
            let gamma = dot(&self.s[n - 1], &self.y[n - 1]) / dot(&self.y[n - 1], &self.y[n - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..n {
            let beta = rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q
    }

    /// One outer iteration: direction, line search, history update. `x` is
    /// moved to the accepted point.
    pub fn step<F>(&mut self, x: &mut [f64], f: &mut F) -> Result<StepOutcome<T>>
    where
        F: FnMut(&[f64]) -> Result<Evaluation<T>>,
    {
        let mut evals = 0;
        if self.current.is_none() {
            self.current = Some(f(x)?);
            evals += 1;
        }
        let cur = self.current.clone().expect("set above");
        if !cur.value.is_finite() || cur.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let done = |cur: Evaluation<T>, status, evals| StepOutcome { value: cur.value, info: cur.info, status, evals };
        if max_abs(&cur.grad) <= self.cfg.tolerance_grad {
            return Ok(done(cur, StepStatus::Converged, evals));
        }

        let mut d = self.direction(&cur.grad);
        if !(dot(&cur.grad, &d) < 0.0) {
            // Stale curvature pairs; restart from steepest descent.
            self.s.clear();
            self.y.clear();
            d = cur.grad.iter().map(|v| -v).collect();
        }
        let alpha0 = if self.s.is_empty() {
            let g1: f64 = cur.grad.iter().map(|v| v.abs()).sum();
            (1.0 / g1).min(1.0) * self.cfg.lr
        } else {
            self.cfg.lr
        };
        let ls = wolfe_line_search(f, x, cur.value, &cur.grad, &d, alpha0, &self.cfg)?;
        evals += ls.evals;
        self.iterations += 1;

        let (new, step, status) = match ls.eval {
            Some(e) => {
                let step: Vec<f64> = d.iter().map(|v| v * ls.alpha).collect();
                (e, step, if ls.satisfied { StepStatus::Progress } else { StepStatus::Inexact })
            }
            None => {
                log::warn!("line search found no decrease; taking a gradient step of {FALLBACK_STEP}");
                let step: Vec<f64> = cur.grad.iter().map(|g| -FALLBACK_STEP * g).collect();
                let xt: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                let e = f(&xt)?;
                evals += 1;
                self.s.clear();
                self.y.clear();
                (e, step, StepStatus::Fallback)
            }
        };
        let yv: Vec<f64> = new.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        if status != StepStatus::Fallback && dot(&step, &yv) > 1e-10 {
            if self.s.len() == self.cfg.history {
                self.s.pop_front();
                self.y.pop_front();
            }
            self.s.push_back(step.clone());
            self.y.push_back(yv);
        }
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        let change = (new.value - cur.value).abs();
        self.current = Some(new.clone());
        let converged = status != StepStatus::Fallback
            && (change < self.cfg.tolerance_change || max_abs(&step) <= self.cfg.tolerance_change);
        Ok(done(new, if converged { StepStatus::Converged } else { status }, evals))
    }
}
