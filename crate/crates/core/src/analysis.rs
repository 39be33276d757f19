//! Error metrics, Hessian eigenpairs by power iteration, loss landscapes on
//! the plane of two directions, and their Lipschitz estimates.

use std::fmt::Write as _;

use pinnsformer_autodiff::{grad, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::loss::{LossEvaluator, LossWeights};
use crate::params::ParamLayout;

/// `Σ|pred − truth| / Σ|truth|`.
pub fn rmae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    assert_eq!(pred.len(), truth.len());
    let den: f64 = truth.iter().map(|v| v.abs()).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / den)
}

/// `sqrt(Σ(pred − truth)² / Σ truth²)`.
pub fn rrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    assert_eq!(pred.len(), truth.len());
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / den).sqrt())
}

/// A twice-differentiable scalar function of a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// Objective given by a closure that builds a scalar from bound parameters.
pub struct GraphObjective<F> {
    layout: ParamLayout,
    f: F,
}

impl<F> GraphObjective<F>
where
    F: Fn(&[Tensor]) -> Result<Tensor> + Sync,
{
    pub fn new(layout: ParamLayout, f: F) -> Self {
        GraphObjective { layout, f }
    }
}

impl<F> Objective for GraphObjective<F>
where
    F: Fn(&[Tensor]) -> Result<Tensor> + Sync,
{
    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let g = Graph::new();
        Ok((self.f)(&self.layout.bind(&g, theta, false))?.item())
    }

    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g = Graph::new();
        let p = self.layout.bind(&g, theta, true);
        let y = (self.f)(&p)?;
        let refs: Vec<&Tensor> = p.iter().collect();
        Ok((y.item(), self.layout.flatten(&grad(&y, &refs, false)?)))
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let g = Graph::new();
        let p = self.layout.bind(&g, theta, true);
        let y = (self.f)(&p)?;
        let refs: Vec<&Tensor> = p.iter().collect();
        let gs = grad(&y, &refs, true)?;
        let mut gv = Tensor::scalar(0.0);
        for (gi, info) in gs.iter().zip(self.layout.entries()) {
            let vi = Tensor::new(v[info.offset..info.offset + info.numel()].to_vec(), &info.shape)?;
            gv = gv.add(&gi.mul(&vi)?.sum_all())?;
        }
        if !gv.is_tracked() {
            return Ok(vec![0.0; self.dim()]);
        }
        Ok(self.layout.flatten(&grad(&gv, &refs, false)?))
    }
}

/// The weighted physics-informed loss as an [`Objective`].
pub struct PinnObjective<'a> {
    pub evaluator: LossEvaluator<'a>,
    pub weights: LossWeights,
}

impl Objective for PinnObjective<'_> {
    fn dim(&self) -> usize {
        self.evaluator.layout().total()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluator.evaluate(theta, &self.weights, false)?.breakdown.total)
    }

    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.evaluator.evaluate(theta, &self.weights, true)?;
        Ok((e.breakdown.total, e.grad.expect("requested")))
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.evaluator.hvp(theta, &self.weights, v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `H v` at `theta`.
pub fn hessian_vector_product(obj: &dyn Objective, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if !(norm(v) > 0.0) {
        return Err(Error::InvalidSpec("hessian-vector product needs a nonzero direction".into()));
    }
    obj.hvp(theta, v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit norm.
    pub vector: Vec<f64>,
    /// `‖Hv − λv‖`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration { iters: 100, tol: 1e-4, seed: 0 }
    }
}

fn orthogonalize(v: &mut [f64], basis: &[EigenPair]) {
    for p in basis {
        let c = dot(v, &p.vector);
        for (vi, bi) in v.iter_mut().zip(&p.vector) {
            *vi -= c * bi;
        }
    }
}

/// The `count` largest-magnitude Hessian eigenpairs, by power iteration on
/// the Hessian deflated by the pairs already found. Pairs that miss the
/// residual tolerance `‖Hv − λv‖ ≤ tol·|λ|` are returned with
/// `converged = false`.
pub fn top_eigenpairs(obj: &dyn Objective, theta: &[f64], count: usize, cfg: &PowerIteration) -> Result<Vec<EigenPair>> {
    let n = obj.dim();
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &pairs);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut best = EigenPair { value: 0.0, vector: v.clone(), residual: f64::INFINITY, iterations: 0, converged: false };
        for it in 1..=cfg.iters.max(1) {
            let hv = obj.hvp(theta, &v)?;
            let lambda = dot(&v, &hv);
            let residual = norm(&hv.iter().zip(&v).map(|(h, x)| h - lambda * x).collect::<Vec<_>>());
            let converged = residual <= cfg.tol * lambda.abs();
            if residual < best.residual || converged {
                best = EigenPair { value: lambda, vector: v.clone(), residual, iterations: it, converged };
            }
            if converged {
                break;
            }
            let mut w = hv;
            orthogonalize(&mut w, &pairs);
            let nw = norm(&w);
            if !(nw > 0.0 && nw.is_finite()) {
                break;
            }
            v = w.into_iter().map(|x| x / nw).collect();
        }
        pairs.push(best);
    }
    if pairs.len() > 1 {
        rayleigh_ritz(obj, theta, &mut pairs, cfg.tol)?;
    }
    for (k, p) in pairs.iter().enumerate() {
        if !p.converged {
            log::warn!(
                "eigenpair {} did not converge: residual {:.3e} for eigenvalue {:.6e}",
                k + 1,
                p.residual,
                p.value
            );
        }
    }
    Ok(pairs)
}

/// Re-solves the eigenproblem projected onto the span of `pairs`. Deflating
/// against a slightly inexact first vector leaves the later ones rotated
/// within that span, which bounds their residuals; the projection removes
/// the rotation.
fn rayleigh_ritz(obj: &dyn Objective, theta: &[f64], pairs: &mut Vec<EigenPair>, tol: f64) -> Result<()> {
    let k = pairs.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for p in pairs.iter() {
        let mut v = p.vector.clone();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nv = norm(&v);
        if !(nv > 1e-8) {
            return Ok(());
        }
        basis.push(v.into_iter().map(|x| x / nv).collect());
    }
    let hb = basis.iter().map(|b| obj.hvp(theta, b)).collect::<Result<Vec<_>>>()?;
    let mut t = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            t[i * k + j] = 0.5 * (dot(&basis[i], &hb[j]) + dot(&basis[j], &hb[i]));
        }
    }
    let (values, q) = symmetric_eigen(t, k);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let n = basis[0].len();
    let old = std::mem::take(pairs);
    for (slot, &c) in order.iter().enumerate() {
        let mut v = vec![0.0; n];
        let mut hv = vec![0.0; n];
        for i in 0..k {
            let w = q[i * k + c];
            v.iter_mut().zip(&basis[i]).for_each(|(x, y)| *x += w * y);
            hv.iter_mut().zip(&hb[i]).for_each(|(x, y)| *x += w * y);
        }
        let lambda = values[c];
        let residual = norm(&hv.iter().zip(&v).map(|(h, x)| h - lambda * x).collect::<Vec<_>>());
        let prev = &old[slot];
        // Keep the power-iteration pair if the projection did not help.
        if residual <= prev.residual || !prev.residual.is_finite() {
            pairs.push(EigenPair {
                value: lambda,
                vector: v,
                residual,
                iterations: prev.iterations,
                converged: residual <= tol * lambda.abs(),
            });
        } else {
            pairs.push(prev.clone());
        }
    }
    Ok(())
}

/// Eigenvalues and column eigenvectors (row-major `k × k`) of a small
/// symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigen(mut a: Vec<f64>, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut q = vec![0.0; k * k];
    (0..k).for_each(|i| q[i * k + i] = 1.0);
    for _ in 0..100 {
        let off: f64 = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * k + j].powi(2)).sum();
        let scale: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..k {
            for r in p + 1..k {
                let apr = a[p * k + r];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[r * k + r] - a[p * k + p]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let (aip, air) = (a[i * k + p], a[i * k + r]);
                    a[i * k + p] = c * aip - s * air;
                    a[i * k + r] = s * aip + c * air;
                }
                for j in 0..k {
                    let (apj, arj) = (a[p * k + j], a[r * k + j]);
                    a[p * k + j] = c * apj - s * arj;
                    a[r * k + j] = s * apj + c * arj;
                }
                for i in 0..k {
                    let (qip, qir) = (q[i * k + p], q[i * k + r]);
                    q[i * k + p] = c * qip - s * qir;
                    q[i * k + r] = s * qip + c * qir;
                }
            }
        }
    }
    ((0..k).map(|i| a[i * k + i]).collect(), q)
}

/// Loss on the plane `θ + α v1 + β v2`, `α, β ∈ [−r, r]`, `n × n` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    /// Grid coordinates shared by both axes.
    pub coords: Vec<f64>,
    /// Row-major `[α index][β index]`.
    pub losses: Vec<f64>,
    pub eigenvalues: [f64; 2],
}

impl LandscapeGrid {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.losses[i * self.n() + j]
    }

    pub fn center(&self) -> f64 {
        let c = self.n() / 2;
        self.at(c, c)
    }

    pub fn spacing(&self) -> f64 {
        if self.n() < 2 {
            0.0
        } else {
            self.coords[1] - self.coords[0]
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,loss\n");
        for (i, a) in self.coords.iter().enumerate() {
            for (j, b) in self.coords.iter().enumerate() {
                writeln!(out, "{a:?},{b:?},{:?}", self.at(i, j)).unwrap();
            }
        }
        out
    }
}

/// `0.5 ‖θ‖ / ‖v‖`.
pub fn default_radius(theta: &[f64], v: &[f64]) -> f64 {
    0.5 * norm(theta) / norm(v)
}

pub fn landscape(
    obj: &dyn Objective,
    theta: &[f64],
    v1: &[f64],
    v2: &[f64],
    radius: f64,
    n: usize,
    exec: Execution,
) -> Result<LandscapeGrid> {
    if n.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!("landscape size must be odd, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidSpec(format!("landscape radius must be positive, got {radius}")));
    }
    let half = (n / 2) as f64;
    let coords: Vec<f64> = (0..n).map(|i| radius * (i as f64 - half) / half.max(1.0)).collect();
    let losses = exec.try_map(n * n, |cell| {
        let (a, b) = (coords[cell / n], coords[cell % n]);
        let point: Vec<f64> = theta
            .iter()
            .zip(v1.iter().zip(v2))
            .map(|(t, (x, y))| t + a * x + b * y)
            .collect();
        obj.value(&point)
    })?;
    Ok(LandscapeGrid { coords, losses, eigenvalues: [f64::NAN, f64::NAN] })
}

/// Largest `|Δloss| / spacing` over horizontally or vertically adjacent cells.
pub fn lipschitz_estimate(grid: &LandscapeGrid) -> f64 {
    let n = grid.n();
    let h = grid.spacing();
    if n < 2 || h <= 0.0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                best = best.max((grid.at(i + 1, j) - grid.at(i, j)).abs() / h);
            }
            if j + 1 < n {
                best = best.max((grid.at(i, j + 1) - grid.at(i, j)).abs() / h);
            }
        }
    }
    best
}
