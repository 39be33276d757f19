//! The benchmark problems, their operators, collocation sampling and the
//! Navier-Stokes dataset reader.
//!
//! Coordinates are ordered spatial first, time last: `[x, t]` for the 1D
//! problems and `[x, y, t]` for Navier-Stokes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use pinnsformer_autodiff::{grad, Graph, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_pseudo_sequence, Surrogate};

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    /// `u_t + β u_x = 0`, periodic in x.
    Convection { beta: f64 },
    /// `u_t − ρ u (1 − u) = 0`, periodic in x.
    Reaction { rho: f64 },
    /// `u_tt − c u_xx = 0` with zero Dirichlet ends. `beta` sets the initial
    /// profile, `coefficient` multiplies `u_xx`.
    Wave { beta: f64, coefficient: f64 },
    /// Incompressible flow through a stream function: outputs `(ψ, p)`,
    /// `u = ψ_y`, `v = −ψ_x`.
    NavierStokes { lambda1: f64, lambda2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub kind: ProblemKind,
    /// `(lo, hi)` per coordinate.
    pub bounds: Vec<(f64, f64)>,
}

pub fn convection_problem(beta: f64) -> Problem {
    Problem { kind: ProblemKind::Convection { beta }, bounds: vec![(0.0, 2.0 * PI), (0.0, 1.0)] }
}

pub fn reaction_problem(rho: f64) -> Problem {
    Problem { kind: ProblemKind::Reaction { rho }, bounds: vec![(0.0, 2.0 * PI), (0.0, 1.0)] }
}

/// Wave problem whose residual uses `u_xx` coefficient 4, the value for which
/// the closed-form solution holds.
pub fn wave_problem(beta: f64) -> Problem {
    wave_problem_with_coefficient(beta, 4.0)
}

/// Wave problem with the `u_xx` coefficient set to `beta` itself.
pub fn wave_problem_raw(beta: f64) -> Problem {
    wave_problem_with_coefficient(beta, beta)
}

pub fn wave_problem_with_coefficient(beta: f64, coefficient: f64) -> Problem {
    Problem { kind: ProblemKind::Wave { beta, coefficient }, bounds: vec![(0.0, 1.0), (0.0, 1.0)] }
}

/// Bounds default to the cylinder-wake window; [`Problem::with_bounds`]
/// replaces them with a dataset's ranges.
pub fn navier_stokes_problem(lambda1: f64, lambda2: f64) -> Problem {
    Problem {
        kind: ProblemKind::NavierStokes { lambda1, lambda2 },
        bounds: vec![(1.0, 8.0), (-2.0, 2.0), (0.0, 20.0)],
    }
}

fn reaction_h(x: f64) -> f64 {
    let s = PI / 4.0;
    (-(x - PI).powi(2) / (2.0 * s * s)).exp()
}

impl Problem {
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProblemKind::Convection { .. } => "convection",
            ProblemKind::Reaction { .. } => "reaction",
            ProblemKind::Wave { .. } => "wave",
            ProblemKind::NavierStokes { .. } => "navier-stokes",
        }
    }

    pub fn in_dim(&self) -> usize {
        self.bounds.len()
    }

    /// Network output width.
    pub fn out_dim(&self) -> usize {
        match self.kind {
            ProblemKind::NavierStokes { .. } => 2,
            _ => 1,
        }
    }

    pub fn coord_names(&self) -> &'static [&'static str] {
        match self.kind {
            ProblemKind::NavierStokes { .. } => &["x", "y", "t"],
            _ => &["x", "t"],
        }
    }

    /// Physical fields reported by evaluation, in the order of
    /// [`observables`](Self::observables).
    pub fn observable_names(&self) -> &'static [&'static str] {
        match self.kind {
            ProblemKind::NavierStokes { .. } => &["u", "v", "p"],
            _ => &["u"],
        }
    }

    pub fn has_boundary(&self) -> bool {
        !matches!(self.kind, ProblemKind::NavierStokes { .. })
    }

    pub fn has_initial(&self) -> bool {
        !matches!(self.kind, ProblemKind::NavierStokes { .. })
    }

    /// Closed-form solution at one point, when the problem has one.
    pub fn exact(&self, point: &[f64]) -> Option<f64> {
        let (x, t) = (point[0], point[point.len() - 1]);
        match self.kind {
            ProblemKind::Convection { beta } => Some((x - beta * t).sin()),
            ProblemKind::Reaction { rho } => {
                let h = reaction_h(x);
                let g = h * (rho * t).exp();
                Some(g / (g + 1.0 - h))
            }
            ProblemKind::Wave { beta, .. } => Some(
                (PI * x).sin() * (2.0 * PI * t).cos()
                    + 0.5 * (beta * PI * x).sin() * (2.0 * beta * PI * t).cos(),
            ),
            ProblemKind::NavierStokes { .. } => None,
        }
    }

    /// The closed-form solution built from differentiable coordinate tensors.
    pub fn exact_tensor(&self, coords: &[Tensor]) -> Option<Result<Tensor>> {
        let (x, t) = (&coords[0], &coords[coords.len() - 1]);
        let run = || -> Result<Tensor> {
            Ok(match self.kind {
                ProblemKind::Convection { beta } => x.sub(&t.scale(beta))?.sin(),
                ProblemKind::Reaction { rho } => {
                    let s = PI / 4.0;
                    let h = x.offset(-PI).square().scale(-1.0 / (2.0 * s * s)).exp();
                    let g = h.mul(&t.scale(rho).exp())?;
                    g.div(&g.sub(&h)?.offset(1.0))?
                }
                ProblemKind::Wave { beta, .. } => {
                    let a = x.scale(PI).sin().mul(&t.scale(2.0 * PI).cos())?;
                    let b = x.scale(beta * PI).sin().mul(&t.scale(2.0 * beta * PI).cos())?;
                    a.add(&b.scale(0.5))?
                }
                ProblemKind::NavierStokes { .. } => unreachable!(),
            })
        };
        match self.kind {
            ProblemKind::NavierStokes { .. } => None,
            _ => Some(run()),
        }
    }

    /// Initial profile `u(x, 0)` for the 1D problems.
    pub fn initial_profile(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::Convection { .. } => x.sin(),
            ProblemKind::Reaction { .. } => reaction_h(x),
            ProblemKind::Wave { beta, .. } => (PI * x).sin() + 0.5 * (beta * PI * x).sin(),
            ProblemKind::NavierStokes { .. } => f64::NAN,
        }
    }

    /// Residual fields of the governing equations, each `[B, S, 1]`.
    pub fn residual(&self, f: &mut Fields) -> Result<Vec<Tensor>> {
        Ok(match self.kind {
            ProblemKind::Convection { beta } => {
                vec![f.d(0, &[1])?.add(&f.d(0, &[0])?.scale(beta))?]
            }
            ProblemKind::Reaction { rho } => {
                let u = f.value(0)?;
                let growth = u.mul(&u.neg().offset(1.0))?.scale(rho);
                vec![f.d(0, &[1])?.sub(&growth)?]
            }
            ProblemKind::Wave { coefficient, .. } => {
                vec![f.d(0, &[1, 1])?.sub(&f.d(0, &[0, 0])?.scale(coefficient))?]
            }
            ProblemKind::NavierStokes { lambda1, lambda2 } => {
                let (x, y, t) = (0, 1, 2);
                let u = f.d(0, &[y])?;
                let v = f.d(0, &[x])?.neg();
                let u_t = f.d(0, &[y, t])?;
                let u_x = f.d(0, &[x, y])?;
                let u_y = f.d(0, &[y, y])?;
                let u_lap = f.d(0, &[x, x, y])?.add(&f.d(0, &[y, y, y])?)?;
                let v_t = f.d(0, &[x, t])?.neg();
                let v_x = f.d(0, &[x, x])?.neg();
                let v_y = u_x.neg();
                let v_lap = f.d(0, &[x, x, x])?.add(&f.d(0, &[x, y, y])?)?.neg();
                let p_x = f.d(1, &[x])?;
                let p_y = f.d(1, &[y])?;
                let adv_u = u.mul(&u_x)?.add(&v.mul(&u_y)?)?.scale(lambda1);
                let adv_v = u.mul(&v_x)?.add(&v.mul(&v_y)?)?.scale(lambda1);
                let f_u = u_t.add(&adv_u)?.add(&p_x)?.sub(&u_lap.scale(lambda2))?;
                let f_v = v_t.add(&adv_v)?.add(&p_y)?.sub(&v_lap.scale(lambda2))?;
                vec![f_u, f_v]
            }
        })
    }

    /// Boundary violations for paired points sharing `t`: the difference for
    /// periodic problems, both end values for the zero-Dirichlet wave.
    pub fn boundary(&self, left: &mut Fields, right: &mut Fields) -> Result<Vec<Tensor>> {
        Ok(match self.kind {
            ProblemKind::Convection { .. } | ProblemKind::Reaction { .. } => {
                vec![left.value(0)?.sub(&right.value(0)?)?]
            }
            ProblemKind::Wave { .. } => vec![left.value(0)?, right.value(0)?],
            ProblemKind::NavierStokes { .. } => Vec::new(),
        })
    }

    /// Initial-condition violations at every pseudo step; the loss keeps step 0.
    pub fn initial(&self, f: &mut Fields) -> Result<Vec<Tensor>> {
        if !self.has_initial() {
            return Ok(Vec::new());
        }
        let x = f.coord(0);
        let target: Vec<f64> = x.values().iter().map(|&x| self.initial_profile(x)).collect();
        let target = Tensor::new(target, x.shape())?;
        let mut out = vec![f.value(0)?.sub(&target)?];
        if let ProblemKind::Wave { .. } = self.kind {
            out.push(f.d(0, &[1])?);
        }
        Ok(out)
    }

    /// Physical fields: `[u]`, or `[u, v, p]` for Navier-Stokes.
    pub fn observables(&self, f: &mut Fields) -> Result<Vec<Tensor>> {
        Ok(match self.kind {
            ProblemKind::NavierStokes { .. } => {
                vec![f.d(0, &[1])?, f.d(0, &[0])?.neg(), f.value(1)?]
            }
            _ => vec![f.value(0)?],
        })
    }

    /// Misfit of the observed velocity components. `targets` is `[B, m]`
    /// with `m` observables; only `u` and `v` are fitted.
    pub fn data_misfit(&self, f: &mut Fields, targets: &[f64], width: usize) -> Result<Vec<Tensor>> {
        let obs = self.observables(f)?;
        let b = obs[0].shape()[0];
        let fitted = if let ProblemKind::NavierStokes { .. } = self.kind { 2 } else { 1 };
        (0..fitted)
            .map(|c| {
                let col: Vec<f64> = (0..b).map(|i| targets[i * width + c]).collect();
                Ok(obs[c].sub(&Tensor::new(col, &[b, 1, 1])?)?)
            })
            .collect()
    }
}

/// Network outputs on a batch of coordinate sequences plus a cache of their
/// coordinate derivatives.
///
/// Derivatives are gradients of the summed output with respect to each
/// step's own coordinate leaf.
pub struct Fields {
    coords: Vec<Tensor>,
    output: Tensor,
    differentiable: bool,
    cache: HashMap<(usize, Vec<usize>), (Tensor, bool)>,
}

impl Fields {
    /// `coords` are per-coordinate `[B, S, 1]` leaves and `output` is
    /// `[B, S, m]`. With `differentiable` the returned derivatives can be
    /// differentiated again (needed for parameter gradients of the loss).
    pub fn new(coords: Vec<Tensor>, output: Tensor, differentiable: bool) -> Self {
        Fields { coords, output, differentiable, cache: HashMap::new() }
    }

    /// Builds coordinate leaves for `points[range]` on `graph`, extends them
    /// into pseudo sequences and runs the surrogate.
    pub fn evaluate(
        graph: &Graph,
        surrogate: &dyn Surrogate,
        params: &[Tensor],
        points: &Points,
        range: Range<usize>,
        differentiable: bool,
    ) -> Result<Fields> {
        let coords = sequence_leaves(graph, points, range, surrogate.seq_len(), surrogate.step())?;
        let refs: Vec<&Tensor> = coords.iter().collect();
        let seq = Tensor::concat(&refs, 2)?;
        let output = surrogate.forward(params, &seq)?;
        Ok(Fields::new(coords, output, differentiable))
    }

    pub fn coord(&self, c: usize) -> &Tensor {
        &self.coords[c]
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Output component `c` as `[B, S, 1]`.
    pub fn value(&self, c: usize) -> Result<Tensor> {
        let m = self.output.shape()[2];
        Ok(if m == 1 { self.output.clone() } else { self.output.narrow(2, c, 1)? })
    }

    /// Mixed partial of component `c` along the coordinates in `wrt`.
    pub fn d(&mut self, c: usize, wrt: &[usize]) -> Result<Tensor> {
        let mut path: Vec<usize> = wrt.to_vec();
        path.sort_unstable();
        let mut current = self.value(c)?;
        for level in 1..=path.len() {
            let need_graph = level < path.len() || self.differentiable;
            let key = (c, path[..level].to_vec());
            if let Some((t, kept)) = self.cache.get(&key) {
                if *kept || !need_graph {
                    current = t.clone();
                    continue;
                }
            }
            let coord = &self.coords[path[level - 1]];
            let next = if current.is_tracked() {
                grad(&current.sum_all(), &[coord], need_graph)?.remove(0)
            } else {
                Tensor::zeros(coord.shape())
            };
            self.cache.insert(key, (next.clone(), need_graph));
            current = next;
        }
        Ok(current)
    }
}

/// Per-coordinate `[B, S, 1]` leaves holding the pseudo sequences of
/// `points[range]`.
pub fn sequence_leaves(graph: &Graph, points: &Points, range: Range<usize>, k: usize, dt: f64) -> Result<Vec<Tensor>> {
    let d = points.dim;
    let b = range.len();
    let base = Tensor::new(points.data[range.start * d..range.end * d].to_vec(), &[b, d])?;
    let seq = generate_pseudo_sequence(&base, k, dt)?;
    let v = seq.values();
    Ok((0..d)
        .map(|c| {
            let col: Vec<f64> = (0..b * k).map(|r| v[r * d + c]).collect();
            graph.leaf(col, &[b, k, 1]).expect("column length matches")
        })
        .collect())
}

/// Row-major `[N, dim]` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    pub data: Vec<f64>,
    pub dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Points { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points::new(data, self.dim)
    }
}

/// Observed field values at given points (`targets` is `[N, width]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub points: Points,
    pub targets: Vec<f64>,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Collocation {
    pub residual: Points,
    /// Left/right boundary points, paired row by row at equal `t`.
    pub boundary: Option<(Points, Points)>,
    /// Points at `t = t_min`.
    pub initial: Option<Points>,
    pub observations: Option<Observations>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshSpec {
    /// Inclusive uniform grids.
    Grid { n_x: usize, n_t: usize, n_bc: usize, n_ic: usize },
    /// Seeded uniform samples.
    Random { count: usize, n_bc: usize, n_ic: usize, seed: u64 },
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Full `n_x × n_t` grid over a 1D-in-space domain, x-major.
pub fn grid_points(bounds: &[(f64, f64)], n_x: usize, n_t: usize) -> Points {
    let xs = linspace(bounds[0].0, bounds[0].1, n_x);
    let ts = linspace(bounds[1].0, bounds[1].1, n_t);
    let mut data = Vec::with_capacity(2 * n_x * n_t);
    for &x in &xs {
        for &t in &ts {
            data.extend_from_slice(&[x, t]);
        }
    }
    Points::new(data, 2)
}

fn edge_sets(problem: &Problem, ts: &[f64], xs: &[f64]) -> (Option<(Points, Points)>, Option<Points>) {
    let (x_lo, x_hi) = problem.bounds[0];
    let t_lo = problem.bounds[1].0;
    let boundary = problem.has_boundary().then(|| {
        let left = ts.iter().flat_map(|&t| [x_lo, t]).collect();
        let right = ts.iter().flat_map(|&t| [x_hi, t]).collect();
        (Points::new(left, 2), Points::new(right, 2))
    });
    let initial = problem
        .has_initial()
        .then(|| Points::new(xs.iter().flat_map(|&x| [x, t_lo]).collect(), 2));
    (boundary, initial)
}

/// Residual, boundary and initial point sets for the 1D problems. Grids
/// include the domain edges.
pub fn sample_collocation(problem: &Problem, mesh: &MeshSpec) -> Result<Collocation> {
    if problem.in_dim() != 2 {
        return Err(Error::InvalidMeshSpec(format!(
            "{} samples from its dataset; use ns_collocation",
            problem.name()
        )));
    }
    let (tx, tt) = (problem.bounds[0], problem.bounds[1]);
    match *mesh {
        MeshSpec::Grid { n_x, n_t, n_bc, n_ic } => {
            if n_x < 1 || n_t < 1 || n_bc < 1 || n_ic < 1 {
                return Err(Error::InvalidMeshSpec(format!("grid counts must be ≥ 1: {mesh:?}")));
            }
            let residual = grid_points(&problem.bounds, n_x, n_t);
            let (boundary, initial) = edge_sets(problem, &linspace(tt.0, tt.1, n_bc), &linspace(tx.0, tx.1, n_ic));
            Ok(Collocation { residual, boundary, initial, observations: None })
        }
        MeshSpec::Random { count, n_bc, n_ic, seed } => {
            if count < 1 || n_bc < 1 || n_ic < 1 {
                return Err(Error::InvalidMeshSpec(format!("random counts must be ≥ 1: {mesh:?}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut data = Vec::with_capacity(2 * count);
            for _ in 0..count {
                data.push(rng.random_range(tx.0..=tx.1));
                data.push(rng.random_range(tt.0..=tt.1));
            }
            let ts: Vec<f64> = (0..n_bc).map(|_| rng.random_range(tt.0..=tt.1)).collect();
            let xs: Vec<f64> = (0..n_ic).map(|_| rng.random_range(tx.0..=tx.1)).collect();
            let (boundary, initial) = edge_sets(problem, &ts, &xs);
            Ok(Collocation { residual: Points::new(data, 2), boundary, initial, observations: None })
        }
    }
}

/// One row of the Navier-Stokes dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl NsRecord {
    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.t]
    }
}

/// Per-column `(min, max)` in file order `t x y u v p`.
pub fn ns_ranges(records: &[NsRecord]) -> [(f64, f64); 6] {
    let mut r = [(f64::INFINITY, f64::NEG_INFINITY); 6];
    for rec in records {
        for (slot, v) in r.iter_mut().zip([rec.t, rec.x, rec.y, rec.u, rec.v, rec.p]) {
            slot.0 = slot.0.min(v);
            slot.1 = slot.1.max(v);
        }
    }
    r
}

pub const NS_HEADER: &str = "t x y u v p";

pub fn parse_ns_dataset(text: &str) -> Result<Vec<NsRecord>> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        log::warn!("navier-stokes dataset is empty");
        return Ok(Vec::new());
    };
    if header.split_whitespace().collect::<Vec<_>>().join(" ") != NS_HEADER {
        return Err(Error::MalformedRow { line: 1, reason: format!("expected header `{NS_HEADER}`") });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |reason: String| Error::MalformedRow { line: i + 1, reason };
        let vals = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let &[t, x, y, u, v, p] = vals.as_slice() else {
            return Err(bad(format!("expected 6 columns, found {}", vals.len())));
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        out.push(NsRecord { t, x, y, u, v, p });
    }
    if out.is_empty() {
        log::warn!("navier-stokes dataset has no rows");
    }
    Ok(out)
}

pub fn load_ns_dataset(path: &Path) -> Result<Vec<NsRecord>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let records = parse_ns_dataset(&std::fs::read_to_string(path)?)?;
    let r = ns_ranges(&records);
    log::info!(
        "loaded {} navier-stokes rows; t in [{}, {}], x in [{}, {}], y in [{}, {}]",
        records.len(),
        r[0].0,
        r[0].1,
        r[1].0,
        r[1].1,
        r[2].0,
        r[2].1
    );
    Ok(records)
}

pub fn write_ns_dataset(path: &Path, records: &[NsRecord]) -> Result<()> {
    let mut out = String::from(NS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(out, "{:?} {:?} {:?} {:?} {:?} {:?}", r.t, r.x, r.y, r.u, r.v, r.p).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Draws `count` training rows (seeded, without replacement) as residual and
/// observation points; the remaining rows are returned for testing.
pub fn ns_collocation(records: &[NsRecord], count: usize, seed: u64) -> Result<(Collocation, Vec<NsRecord>)> {
    if count < 1 || count > records.len() {
        return Err(Error::InvalidMeshSpec(format!(
            "cannot draw {count} points from {} records",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, records.len(), count).into_vec();
    picked.sort_unstable();
    let mut chosen = vec![false; records.len()];
    let mut data = Vec::with_capacity(3 * count);
    let mut targets = Vec::with_capacity(3 * count);
    for &i in &picked {
        chosen[i] = true;
        data.extend_from_slice(&records[i].coords());
        targets.extend_from_slice(&[records[i].u, records[i].v, records[i].p]);
    }
    let points = Points::new(data, 3);
    let held_out = records.iter().zip(&chosen).filter(|(_, c)| !**c).map(|(r, _)| *r).collect();
    let colloc = Collocation {
        residual: points.clone(),
        boundary: None,
        initial: None,
        observations: Some(Observations { points, targets, width: 3 }),
    };
    Ok((colloc, held_out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_and_endpoints() {
        let p = reaction_problem(5.0);
        let c = sample_collocation(&p, &MeshSpec::Grid { n_x: 51, n_t: 51, n_bc: 51, n_ic: 51 }).unwrap();
        assert_eq!(c.residual.len(), 2601);
        assert_eq!(linspace(0.0, 2.0 * PI, 2), vec![0.0, 2.0 * PI]);
        let (l, r) = c.boundary.unwrap();
        for i in 0..l.len() {
            assert_eq!(l.row(i)[1], r.row(i)[1]);
        }
        assert!(c.initial.unwrap().rows().all(|row| row[1] == 0.0));
    }

    #[test]
    fn invalid_meshes_rejected() {
        let p = convection_problem(50.0);
        let bad = MeshSpec::Grid { n_x: 0, n_t: 3, n_bc: 3, n_ic: 3 };
        assert!(matches!(sample_collocation(&p, &bad), Err(Error::InvalidMeshSpec(_))));
        let ns = navier_stokes_problem(1.0, 0.01);
        let ok = MeshSpec::Grid { n_x: 3, n_t: 3, n_bc: 3, n_ic: 3 };
        assert!(matches!(sample_collocation(&ns, &ok), Err(Error::InvalidMeshSpec(_))));
    }

    #[test]
    fn random_sampling_is_seeded() {
        let p = wave_problem(3.0);
        let m = MeshSpec::Random { count: 40, n_bc: 5, n_ic: 5, seed: 9 };
        assert_eq!(sample_collocation(&p, &m).unwrap(), sample_collocation(&p, &m).unwrap());
        let other = MeshSpec::Random { count: 40, n_bc: 5, n_ic: 5, seed: 10 };
        assert_ne!(sample_collocation(&p, &m).unwrap(), sample_collocation(&p, &other).unwrap());
    }

    #[test]
    fn closed_forms_match_initial_profiles() {
        for p in [convection_problem(50.0), reaction_problem(5.0), wave_problem(3.0)] {
            for x in linspace(p.bounds[0].0, p.bounds[0].1, 17) {
                assert!((p.exact(&[x, 0.0]).unwrap() - p.initial_profile(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wave_solution_vanishes_at_ends() {
        let p = wave_problem(3.0);
        for t in linspace(0.0, 1.0, 11) {
            assert!(p.exact(&[0.0, t]).unwrap().abs() < 1e-15);
            assert!(p.exact(&[1.0, t]).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn dataset_parsing() {
        assert!(parse_ns_dataset("").unwrap().is_empty());
        let text = "t x y u v p\n0 1 2 3 4 5\n0.5 1 2 3 4 5\n";
        assert_eq!(parse_ns_dataset(text).unwrap().len(), text.lines().count() - 1);
        let err = parse_ns_dataset("t x y u v p\n0 1 2 3 4\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
        assert!(matches!(parse_ns_dataset("a b\n"), Err(Error::MalformedRow { line: 1, .. })));
        assert!(matches!(
            load_ns_dataset(Path::new("/nonexistent/ns.txt")),
            Err(Error::FileNotFound(_))
        ));
    }
}
