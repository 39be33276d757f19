#![allow(dead_code)]

use pinnsformer::autodiff::Tensor;
use pinnsformer::model::Surrogate;
use pinnsformer::params::ParamLayout;
use pinnsformer::Result;

/// A surrogate given by a closure over the parameters and the coordinate
/// columns (each `[B, S, 1]`) of the input sequence.
pub struct FnSurrogate<F> {
    pub layout: ParamLayout,
    pub k: usize,
    pub dt: f64,
    pub out: usize,
    pub f: F,
}

impl<F> FnSurrogate<F>
where
    F: Fn(&[Tensor], &[Tensor]) -> Result<Tensor> + Sync,
{
    pub fn new(f: F) -> Self {
        FnSurrogate { layout: ParamLayout::default(), k: 1, dt: 1e-3, out: 1, f }
    }

    pub fn with_params(mut self, shapes: &[(&str, &[usize])]) -> Self {
        for (name, shape) in shapes {
            self.layout.push(*name, shape);
        }
        self
    }

    pub fn steps(mut self, k: usize, dt: f64) -> Self {
        self.k = k;
        self.dt = dt;
        self
    }

    pub fn outputs(mut self, out: usize) -> Self {
        self.out = out;
        self
    }
}

impl<F> Surrogate for FnSurrogate<F>
where
    F: Fn(&[Tensor], &[Tensor]) -> Result<Tensor> + Sync,
{
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn seq_len(&self) -> usize {
        self.k
    }

    fn step(&self) -> f64 {
        self.dt
    }

    fn out_dim(&self) -> usize {
        self.out
    }

    fn forward(&self, p: &[Tensor], seq: &Tensor) -> Result<Tensor> {
        let d = seq.shape()[2];
        let cols = (0..d).map(|c| Ok(seq.narrow(2, c, 1)?)).collect::<Result<Vec<_>>>()?;
        (self.f)(p, &cols)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
