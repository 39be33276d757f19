//! Pointwise and sequential physics-informed objectives, evaluated in fixed
//! chunks so the parallel and sequential paths reduce identically, plus
//! NTK-trace loss weights.

use std::ops::Range;

use pinnsformer_autodiff::{grad, Graph, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{chunks, Execution};
use crate::model::Surrogate;
use crate::params::ParamLayout;
use crate::pde::{Collocation, Fields, Problem};

/// Points per evaluation graph. Fixed so results never depend on thread count.
pub const DEFAULT_CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub res: f64,
    pub bc: f64,
    pub ic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { res: 1.0, bc: 1.0, ic: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("res", self.res), ("bc", self.bc), ("ic", self.ic)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be finite and ≥ 0, got {w}")));
            }
        }
        Ok(())
    }

    fn of(&self, term: Term) -> f64 {
        match term {
            Term::Residual => self.res,
            Term::Boundary | Term::Data => self.bc,
            Term::Initial => self.ic,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub res: f64,
    pub bc: f64,
    pub ic: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(res: f64, bc: f64, ic: f64, w: &LossWeights) -> Self {
        LossBreakdown { res, bc, ic, total: w.res * res + w.bc * bc + w.ic * ic }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.res.is_finite() && self.bc.is_finite() && self.ic.is_finite()
    }
}

/// Loss components. Observation misfit shares the boundary slot and weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Residual,
    Boundary,
    Initial,
    Data,
}

impl Term {
    pub fn name(self) -> &'static str {
        match self {
            Term::Residual => "residual",
            Term::Boundary => "boundary",
            Term::Initial => "initial",
            Term::Data => "data",
        }
    }

    /// Only the first pseudo step sits on the initial slice or on an
    /// observation; residual and boundary steps stay inside their sets.
    pub fn first_step_only(self) -> bool {
        matches!(self, Term::Initial | Term::Data)
    }
}

/// Sum of squares over violation fields `[B, S, 1]`, keeping step 0 only
/// when `first_step_only`.
pub fn sequential_term(fields: &[Tensor], first_step_only: bool) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for f in fields {
        let f = if first_step_only { f.narrow(1, 0, 1)? } else { f.clone() };
        let s = f.square().sum_all();
        total = Some(match total {
            Some(t) => t.add(&s)?,
            None => s,
        });
    }
    Ok(total.unwrap_or_else(|| Tensor::scalar(0.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub breakdown: LossBreakdown,
    /// Gradient of `breakdown.total` with respect to the flat parameters.
    pub grad: Option<Vec<f64>>,
}

/// Evaluates the weighted objective of one surrogate on one collocation set.
#[derive(Clone, Copy)]
pub struct LossEvaluator<'a> {
    pub surrogate: &'a dyn Surrogate,
    pub problem: &'a Problem,
    pub colloc: &'a Collocation,
    pub exec: Execution,
    pub chunk: usize,
}

impl<'a> LossEvaluator<'a> {
    pub fn new(surrogate: &'a dyn Surrogate, problem: &'a Problem, colloc: &'a Collocation) -> Self {
        LossEvaluator { surrogate, problem, colloc, exec: Execution::default(), chunk: DEFAULT_CHUNK }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn layout(&self) -> &ParamLayout {
        self.surrogate.layout()
    }

    /// Terms present in the collocation set with their point counts.
    pub fn terms(&self) -> Vec<(Term, usize)> {
        let c = self.colloc;
        let mut out = vec![(Term::Residual, c.residual.len())];
        if let Some((l, _)) = c.boundary.as_ref().filter(|_| self.problem.has_boundary()) {
            out.push((Term::Boundary, l.len()));
        }
        if let Some(i) = c.initial.as_ref().filter(|_| self.problem.has_initial()) {
            out.push((Term::Initial, i.len()));
        }
        if let Some(o) = &c.observations {
            out.push((Term::Data, o.points.len()));
        }
        out
    }

    fn denominator(&self, term: Term, count: usize) -> f64 {
        let steps = if term.first_step_only() { 1 } else { self.surrogate.seq_len() };
        (count * steps) as f64
    }

    /// Violation fields of `term` for points `range`, on `graph`.
    pub fn term_fields(
        &self,
        graph: &Graph,
        p: &[Tensor],
        term: Term,
        range: Range<usize>,
        differentiable: bool,
    ) -> Result<Vec<Tensor>> {
        let s = self.surrogate;
        let c = self.colloc;
        match term {
            Term::Residual => {
                let mut f = Fields::evaluate(graph, s, p, &c.residual, range, differentiable)?;
                self.problem.residual(&mut f)
            }
            Term::Boundary => {
                let (l, r) = c.boundary.as_ref().ok_or(Error::EmptyCollocation("boundary"))?;
                let mut fl = Fields::evaluate(graph, s, p, l, range.clone(), differentiable)?;
                let mut fr = Fields::evaluate(graph, s, p, r, range, differentiable)?;
                self.problem.boundary(&mut fl, &mut fr)
            }
            Term::Initial => {
                let pts = c.initial.as_ref().ok_or(Error::EmptyCollocation("initial"))?;
                let mut f = Fields::evaluate(graph, s, p, pts, range, differentiable)?;
                self.problem.initial(&mut f)
            }
            Term::Data => {
                let o = c.observations.as_ref().ok_or(Error::EmptyCollocation("data"))?;
                let targets = &o.targets[range.start * o.width..range.end * o.width];
                let mut f = Fields::evaluate(graph, s, p, &o.points, range, differentiable)?;
                self.problem.data_misfit(&mut f, targets, o.width)
            }
        }
    }

    /// Weighted objective at `theta`, with its parameter gradient when
    /// `want_grad`.
    pub fn evaluate(&self, theta: &[f64], weights: &LossWeights, want_grad: bool) -> Result<LossEval> {
        let terms = self.terms();
        for &(term, n) in &terms {
            if n == 0 {
                return Err(Error::EmptyCollocation(term.name()));
            }
        }
        let mut work = Vec::new();
        for (ti, &(term, n)) in terms.iter().enumerate() {
            for r in chunks(n, self.chunk) {
                work.push((ti, term, r));
            }
        }
        let results = self.exec.try_map(work.len(), |i| {
            let (ti, term, ref range) = work[i];
            let factor = weights.of(term) / self.denominator(term, terms[ti].1);
            self.chunk_value(theta, term, range.clone(), want_grad.then_some(factor))
        })?;

        let mut sums = vec![0.0; terms.len()];
        let mut gradient = want_grad.then(|| vec![0.0; self.layout().total()]);
        for ((ti, _, _), (value, g)) in work.iter().zip(results) {
            sums[*ti] += value;
            if let (Some(acc), Some(g)) = (gradient.as_mut(), g) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let (mut res, mut bc, mut ic) = (0.0, 0.0, 0.0);
        for (&(term, n), s) in terms.iter().zip(sums) {
            let mean = s / self.denominator(term, n);
            match term {
                Term::Residual => res += mean,
                Term::Boundary | Term::Data => bc += mean,
                Term::Initial => ic += mean,
            }
        }
        Ok(LossEval { breakdown: LossBreakdown::new(res, bc, ic, weights), grad: gradient })
    }

    /// Hessian-vector product of the weighted objective, by differentiating
    /// `∇L · v` once more, chunk by chunk.
    pub fn hvp(&self, theta: &[f64], weights: &LossWeights, v: &[f64]) -> Result<Vec<f64>> {
        let layout = self.layout();
        assert_eq!(v.len(), layout.total());
        let mut work = Vec::new();
        for (term, n) in self.terms() {
            let factor = weights.of(term) / self.denominator(term, n);
            for r in chunks(n, self.chunk) {
                work.push((term, r, factor));
            }
        }
        let parts = self.exec.try_map(work.len(), |i| -> Result<Vec<f64>> {
            let (term, ref range, factor) = work[i];
            let graph = Graph::new();
            let p = layout.bind(&graph, theta, true);
            let fields = self.term_fields(&graph, &p, term, range.clone(), true)?;
            let sum = sequential_term(&fields, term.first_step_only())?;
            if factor == 0.0 || !sum.is_tracked() {
                return Ok(vec![0.0; layout.total()]);
            }
            let refs: Vec<&Tensor> = p.iter().collect();
            let g = grad(&sum.scale(factor), &refs, true)?;
            let mut gv: Option<Tensor> = None;
            for (gi, info) in g.iter().zip(layout.entries()) {
                if !gi.is_tracked() {
                    continue;
                }
                let vi = Tensor::new(v[info.offset..info.offset + info.numel()].to_vec(), &info.shape)?;
                let term = gi.mul(&vi)?.sum_all();
                gv = Some(match gv {
                    Some(acc) => acc.add(&term)?,
                    None => term,
                });
            }
            match gv {
                Some(gv) => Ok(layout.flatten(&grad(&gv, &refs, false)?)),
                None => Ok(vec![0.0; layout.total()]),
            }
        })?;
        let mut out = vec![0.0; layout.total()];
        for part in parts {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        Ok(out)
    }

    /// Unweighted sum of squares over one chunk and, when `grad_factor` is
    /// given, the gradient of `grad_factor * sum`.
    fn chunk_value(&self, theta: &[f64], term: Term, range: Range<usize>, grad_factor: Option<f64>) -> Result<(f64, Option<Vec<f64>>)> {
        let graph = Graph::new();
        let want = grad_factor.is_some();
        let p = self.layout().bind(&graph, theta, want);
        let fields = self.term_fields(&graph, &p, term, range, want)?;
        let sum = sequential_term(&fields, term.first_step_only())?;
        let value = sum.item();
        let Some(factor) = grad_factor else { return Ok((value, None)) };
        if factor == 0.0 || !sum.is_tracked() {
            return Ok((value, Some(vec![0.0; self.layout().total()])));
        }
        let refs: Vec<&Tensor> = p.iter().collect();
        let g = grad(&sum.scale(factor), &refs, false)?;
        Ok((value, Some(self.layout().flatten(&g))))
    }

    /// Per-term NTK traces (mean squared parameter-gradient norm of each
    /// violation entry) on at most `cap` evenly strided points per term.
    /// Terms absent from the collocation set are `None`.
    pub fn ntk_traces(&self, theta: &[f64], cap: usize) -> Result<[Option<f64>; 3]> {
        let mut traces = [None, None, None];
        for (term, n) in self.terms() {
            let picks = strided_subsample(n, cap);
            let tr = mean_gradient_norm(self.layout(), theta, picks.len(), self.exec, |g, p, i| {
                let fields = self.term_fields(g, p, term, picks[i]..picks[i] + 1, true)?;
                Ok(fields
                    .into_iter()
                    .map(|f| if term.first_step_only() { f.narrow(1, 0, 1) } else { Ok(f) })
                    .collect::<std::result::Result<Vec<_>, _>>()?)
            })?;
            let slot = match term {
                Term::Residual => 0,
                Term::Boundary | Term::Data => 1,
                Term::Initial => 2,
            };
            traces[slot] = Some(traces[slot].unwrap_or(0.0) + tr);
        }
        Ok(traces)
    }

    /// NTK-balanced weights at `theta`.
    pub fn ntk_weights(&self, theta: &[f64], cap: usize) -> Result<LossWeights> {
        weights_from_traces(self.ntk_traces(theta, cap)?)
    }
}

/// Pointwise objective; the surrogate must map each point to itself only.
pub fn pointwise_pinns_loss(
    surrogate: &dyn Surrogate,
    problem: &Problem,
    colloc: &Collocation,
    weights: &LossWeights,
    theta: &[f64],
) -> Result<LossBreakdown> {
    if surrogate.seq_len() != 1 {
        return Err(Error::InvalidSpec(format!(
            "pointwise loss needs sequence length 1, got {}",
            surrogate.seq_len()
        )));
    }
    Ok(LossEvaluator::new(surrogate, problem, colloc).evaluate(theta, weights, false)?.breakdown)
}

/// Sequential objective: residual and boundary terms average over every
/// pseudo step, the initial term uses step 0 only.
pub fn sequential_pinnsformer_loss(
    surrogate: &dyn Surrogate,
    problem: &Problem,
    colloc: &Collocation,
    weights: &LossWeights,
    theta: &[f64],
) -> Result<LossBreakdown> {
    Ok(LossEvaluator::new(surrogate, problem, colloc).evaluate(theta, weights, false)?.breakdown)
}

/// Up to `cap` indices spread evenly over `0..n`, always including 0.
pub fn strided_subsample(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Mean over every scalar entry produced by `entries` (for samples `0..n`)
/// of the squared norm of its gradient with respect to the parameters.
/// This is the mean diagonal of the empirical NTK of those entries.
pub fn mean_gradient_norm<F>(layout: &ParamLayout, theta: &[f64], n: usize, exec: Execution, entries: F) -> Result<f64>
where
    F: Fn(&Graph, &[Tensor], usize) -> Result<Vec<Tensor>> + Sync + Send,
{
    let per_sample = exec.try_map(n, |i| -> Result<(f64, usize)> {
        let graph = Graph::new();
        let p = layout.bind(&graph, theta, true);
        let refs: Vec<&Tensor> = p.iter().collect();
        let mut sum = 0.0;
        let mut count = 0;
        for e in entries(&graph, &p, i)? {
            let flat = e.reshape(&[e.numel()])?;
            for j in 0..e.numel() {
                count += 1;
                let entry = flat.narrow(0, j, 1)?.sum_all();
                if !entry.is_tracked() {
                    continue;
                }
                for g in grad(&entry, &refs, false)? {
                    sum += g.values().iter().map(|v| v * v).sum::<f64>();
                }
            }
        }
        Ok((sum, count))
    })?;
    let (sum, count) = per_sample.iter().fold((0.0, 0), |(s, c), (a, b)| (s + a, c + b));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// `λ_i = Σ_j tr_j / tr_i` over the present terms; absent terms keep 1.
pub fn weights_from_traces(traces: [Option<f64>; 3]) -> Result<LossWeights> {
    const NAMES: [&str; 3] = ["residual", "boundary", "initial"];
    let mut total = 0.0;
    for (name, tr) in NAMES.iter().zip(traces) {
        if let Some(tr) = tr {
            if !(tr > 0.0 && tr.is_finite()) {
                return Err(Error::ZeroTrace(name));
            }
            total += tr;
        }
    }
    let w = |tr: Option<f64>| tr.map_or(1.0, |tr| total / tr);
    Ok(LossWeights { res: w(traces[0]), bc: w(traces[1]), ic: w(traces[2]) })
}
