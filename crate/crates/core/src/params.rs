//! Flat, named parameter storage and its text serialization.

use std::fmt::Write as _;

use pinnsformer_autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Position of the first value in the flat vector.
    pub offset: usize,
}

impl ParamInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Names, shapes and flat offsets of a model's parameters, in creation order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<ParamInfo>,
    total: usize,
}

impl ParamLayout {
    /// Registers a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let info = ParamInfo { name: name.into(), shape: shape.to_vec(), offset: self.total };
        self.total += info.numel();
        self.entries.push(info);
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[ParamInfo] {
        &self.entries
    }

    /// Number of named parameters.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of scalar values across all parameters.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Materializes `theta` as one tensor per parameter. Tracked tensors are
    /// leaves of `graph`; untracked ones are constants.
    pub fn bind(&self, graph: &Graph, theta: &[f64], tracked: bool) -> Vec<Tensor> {
        assert_eq!(theta.len(), self.total, "flat parameter vector has wrong length");
        self.entries
            .iter()
            .map(|e| {
                let data = theta[e.offset..e.offset + e.numel()].to_vec();
                if tracked {
                    graph.leaf(data, &e.shape).expect("layout shapes are consistent")
                } else {
                    Tensor::new(data, &e.shape).expect("layout shapes are consistent")
                }
            })
            .collect()
    }

    /// Concatenates per-parameter gradients back into a flat vector.
    pub fn flatten(&self, grads: &[Tensor]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total);
        for g in grads {
            out.extend_from_slice(g.values());
        }
        debug_assert_eq!(out.len(), self.total);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::CheckpointMismatch(format!(
                "layout holds {} values, got {}",
                layout.total(),
                values.len()
            )));
        }
        Ok(ParamStore { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        let e = &self.layout.entries[self.layout.index_of(name)?];
        Some(&self.values[e.offset..e.offset + e.numel()])
    }

    /// One line per parameter: `name dims value...`, dims joined by `x`.
    /// Values use the shortest decimal form that parses back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self.layout.entries() {
            let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
            write!(out, "{} {}", e.name, dims.join("x")).unwrap();
            for v in &self.values[e.offset..e.offset + e.numel()] {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut layout = ParamLayout::default();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::MalformedRow { line: i + 1, reason };
            let mut parts = line.split_whitespace();
            let name = parts.next().ok_or_else(|| bad("missing name".into()))?;
            let dims = parts.next().ok_or_else(|| bad("missing shape".into()))?;
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|e| bad(format!("shape `{dims}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let before = values.len();
            for p in parts {
                values.push(p.parse::<f64>().map_err(|e| bad(format!("value `{p}`: {e}")))?);
            }
            let n: usize = shape.iter().product();
            if values.len() - before != n {
                return Err(bad(format!("{name} expects {n} values, found {}", values.len() - before)));
            }
            layout.push(name, &shape);
        }
        ParamStore::new(layout, values)
    }
}

/// Builds a layout and its initial values together, drawing weights from a
/// seeded generator in registration order.
pub struct Initializer {
    layout: ParamLayout,
    values: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            layout: ParamLayout::default(),
            values: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Xavier-uniform `[rows, cols]` matrix, bound `sqrt(6 / (rows + cols))`.
    pub fn xavier(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        for _ in 0..rows * cols {
            let v = self.rng.random_range(-bound..=bound);
            self.values.push(v);
        }
        self.layout.push(name, &[rows, cols])
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> usize {
        let n: usize = shape.iter().product();
        self.values.extend(std::iter::repeat_n(value, n));
        self.layout.push(name, shape)
    }

    pub fn finish(self) -> ParamStore {
        ParamStore { layout: self.layout, values: self.values }
    }
}
