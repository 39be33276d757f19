//! Training, evaluation, landscape and sweep drivers, and the files they
//! write. Every CSV starts with a header row; floats are written in the
//! shortest form that parses back exactly, so reruns compare byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use pinnsformer_autodiff::{grad, GradMode, Graph, Tensor};
use serde::{Deserialize, Serialize};

use crate::analysis::{landscape, lipschitz_estimate, rmae, rrmse, top_eigenpairs, EigenPair, LandscapeGrid, Objective, PinnObjective, PowerIteration};
use crate::config::{OptimizerKind, RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::exec::{chunks, Execution};
use crate::loss::{LossBreakdown, LossEvaluator, LossWeights};
use crate::model::{Model, ModelSpec, Surrogate};
use crate::optim::{Adam, Evaluation, Lbfgs, StepStatus};
use crate::nn::{ActivationKind, Mlp};
use crate::params::{Initializer, ParamStore};
use crate::pde::{grid_points, load_ns_dataset, ns_collocation, ns_ranges, sample_collocation, Collocation, Fields, Points, Problem, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max-iters",
            RunStatus::Diverged => "DIVERGED",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub breakdown: LossBreakdown,
    /// Weights in force when the row was logged.
    pub weights: LossWeights,
    /// Objective evaluations spent on this iteration.
    pub evals: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldMetrics {
    pub field: String,
    pub rmae: f64,
    pub rrmse: f64,
}

/// Test points with reference values, `truth` being `[N, names.len()]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub points: Points,
    pub truth: Vec<f64>,
    pub names: Vec<&'static str>,
}

/// Everything a run needs besides the model.
#[derive(Clone, Debug)]
pub struct Setup {
    pub problem: Problem,
    pub colloc: Collocation,
    pub test: TestSet,
}

/// Builds the problem, its training points and its test set.
pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let problem = cfg.problem.build()?;
    if let ProblemKind::NavierStokes { .. } = problem.kind {
        let path = cfg
            .problem
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("navier-stokes needs problem.dataset".into()))?;
        let records = load_ns_dataset(path)?;
        let r = ns_ranges(&records);
        let problem = problem.with_bounds(vec![r[1], r[2], r[0]]);
        let (colloc, held_out) = ns_collocation(&records, cfg.sampling.ns_count, cfg.seed)?;
        let step = held_out.len().div_ceil(cfg.sampling.ns_test_max.max(1)).max(1);
        let picked: Vec<_> = held_out.iter().step_by(step).collect();
        let test = TestSet {
            points: Points::new(picked.iter().flat_map(|r| r.coords()).collect(), 3),
            truth: picked.iter().flat_map(|r| [r.u, r.v, r.p]).collect(),
            names: problem.observable_names().to_vec(),
        };
        return Ok(Setup { problem, colloc, test });
    }
    let colloc = sample_collocation(&problem, &cfg.sampling.mesh)?;
    let points = grid_points(&problem.bounds, cfg.sampling.test_n_x, cfg.sampling.test_n_t);
    let truth = points.rows().map(|p| problem.exact(p).expect("1D problems have closed forms")).collect();
    let test = TestSet { points, truth, names: problem.observable_names().to_vec() };
    Ok(Setup { problem, colloc, test })
}

/// Observables at step 0 of each point, `[N, m]`.
pub fn predict(model: &dyn Surrogate, theta: &[f64], problem: &Problem, points: &Points, exec: Execution) -> Result<Vec<f64>> {
    let parts = chunks(points.len(), 512);
    let out = exec.try_map(parts.len(), |i| -> Result<Vec<f64>> {
        let graph = Graph::with_mode(GradMode::Record);
        let p = model.layout().bind(&graph, theta, false);
        let mut f = Fields::evaluate(&graph, model, &p, points, parts[i].clone(), false)?;
        let obs = problem.observables(&mut f)?;
        let b = parts[i].len();
        let cols: Vec<Vec<f64>> = obs.iter().map(|o| Ok(o.narrow(1, 0, 1)?.to_vec())).collect::<Result<_>>()?;
        Ok((0..b).flat_map(|r| cols.iter().map(move |c| c[r])).collect())
    })?;
    Ok(out.concat())
}

/// rMAE and rRMSE per observable. Pressure is only defined up to a
/// constant, so both sides are mean-centered before it is compared.
pub fn field_metrics(test: &TestSet, pred: &[f64]) -> Result<Vec<FieldMetrics>> {
    let m = test.names.len();
    test.names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut p: Vec<f64> = pred.iter().skip(c).step_by(m).copied().collect();
            let mut t: Vec<f64> = test.truth.iter().skip(c).step_by(m).copied().collect();
            if *name == "p" {
                for v in [&mut p, &mut t] {
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter_mut().for_each(|x| *x -= mean);
                }
            }
            Ok(FieldMetrics { field: name.to_string(), rmae: rmae(&p, &t)?, rrmse: rrmse(&p, &t)? })
        })
        .collect()
}

pub fn metrics_csv(metrics: &[FieldMetrics]) -> String {
    let mut out = String::from("field,rmae,rrmse\n");
    for m in metrics {
        writeln!(out, "{},{:?},{:?}", m.field, m.rmae, m.rrmse).unwrap();
    }
    out
}

/// One row per test point: coordinates, then truth, prediction and absolute
/// error of each observable.
pub fn error_grid_csv(problem: &Problem, test: &TestSet, pred: &[f64]) -> String {
    let m = test.names.len();
    let mut header: Vec<String> = problem.coord_names().iter().map(|s| s.to_string()).collect();
    for name in &test.names {
        if m == 1 {
            header.extend(["truth".into(), "pred".into(), "abs_error".into()]);
        } else {
            header.extend([format!("{name}_truth"), format!("{name}_pred"), format!("{name}_abs_error")]);
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in test.points.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        for c in 0..m {
            let (t, p) = (test.truth[i * m + c], pred[i * m + c]);
            cells.extend([format!("{t:?}"), format!("{p:?}"), format!("{:?}", (p - t).abs())]);
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: RunConfig,
    pub history: Vec<IterationRecord>,
    pub metrics: Vec<FieldMetrics>,
    pub status: RunStatus,
    pub seconds: f64,
    pub params: ParamStore,
    /// Loss weights in force at the end of training.
    pub weights: LossWeights,
    pub error_grid: String,
}

impl RunReport {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.breakdown.total)
    }

    pub fn rmae(&self) -> f64 {
        self.metrics.first().map_or(f64::NAN, |m| m.rmae)
    }

    pub fn rrmse(&self) -> f64 {
        self.metrics.first().map_or(f64::NAN, |m| m.rrmse)
    }

    pub fn metric(&self, field: &str) -> Option<&FieldMetrics> {
        self.metrics.iter().find(|m| m.field == field)
    }

    pub fn report_csv(&self) -> String {
        let mut out = String::from("iteration,L_res,L_bc,L_ic,total,lambda_res,lambda_bc,lambda_ic\n");
        for r in &self.history {
            let (b, w) = (r.breakdown, r.weights);
            writeln!(out, "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}", r.iteration, b.res, b.bc, b.ic, b.total, w.res, w.bc, w.ic)
                .unwrap();
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("iteration,evals,seconds\n");
        for r in &self.history {
            writeln!(out, "{},{},{:.6}", r.iteration, r.evals, r.seconds).unwrap();
        }
        out
    }

    pub fn checkpoint(&self, problem: &Problem) -> Checkpoint {
        Checkpoint {
            model: self.config.model.clone(),
            in_dim: problem.in_dim(),
            out_dim: problem.out_dim(),
            weights: self.weights,
            params: self.params.clone(),
        }
    }

    /// Writes `config.toml`, `report.csv`, `metrics.csv`, `errorgrid.csv`,
    /// `timing.csv` and `checkpoint.params` into `dir`.
    pub fn write(&self, dir: &Path, problem: &Problem) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml())?;
        std::fs::write(dir.join("report.csv"), self.report_csv())?;
        std::fs::write(dir.join("metrics.csv"), metrics_csv(&self.metrics))?;
        std::fs::write(dir.join("errorgrid.csv"), &self.error_grid)?;
        std::fs::write(dir.join("timing.csv"), self.timing_csv())?;
        self.checkpoint(problem).save(&dir.join("checkpoint.params"))
    }
}

fn breakdown_eval(ev: &LossEvaluator, weights: &LossWeights, theta: &[f64]) -> Result<Evaluation<LossBreakdown>> {
    let e = ev.evaluate(theta, weights, true)?;
    Ok(Evaluation { value: e.breakdown.total, grad: e.grad.expect("requested"), info: e.breakdown })
}

pub fn train(cfg: &RunConfig, exec: Execution) -> Result<RunReport> {
    cfg.validate()?;
    let s = setup(cfg)?;
    train_with(cfg, &s, exec)
}

/// Trains on an existing [`Setup`]. Row 0 of the history is the loss at
/// initialization; row `i` the loss after `i` optimizer iterations.
pub fn train_with(cfg: &RunConfig, s: &Setup, exec: Execution) -> Result<RunReport> {
    let start = Instant::now();
    let (model, store) = Model::new(&cfg.model, s.problem.in_dim(), s.problem.out_dim(), cfg.seed)?;
    let mut ev = LossEvaluator::new(&model, &s.problem, &s.colloc).with_exec(exec);
    ev.chunk = cfg.loss.chunk;
    let mut theta = store.values().to_vec();
    let lc = &cfg.loss;
    let mut weights = if lc.ntk { ev.ntk_weights(&theta, lc.ntk_cap)? } else { lc.weights };
    log::info!(
        "{}: {} on {} with {} parameters, weights {:?}",
        cfg.name,
        cfg.model.arch.name(),
        s.problem.name(),
        model.param_count(),
        weights
    );

    let first = ev.evaluate(&theta, &weights, cfg.optimizer.kind == OptimizerKind::Adam)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        breakdown: first.breakdown,
        weights,
        evals: 1,
        seconds: start.elapsed().as_secs_f64(),
    }];
    let mut status = if first.breakdown.is_finite() { RunStatus::MaxIters } else { RunStatus::Diverged };
    let mut lbfgs: Lbfgs<LossBreakdown> = Lbfgs::new(cfg.optimizer.lbfgs);
    let mut adam = Adam::new(theta.len(), cfg.optimizer.adam_lr);
    let mut last_grad = first.grad;

    for it in 1..=cfg.optimizer.iterations {
        if status == RunStatus::Diverged {
            break;
        }
        if lc.ntk && it > 1 && (it - 1) % lc.ntk_interval == 0 {
            weights = ev.ntk_weights(&theta, lc.ntk_cap)?;
            lbfgs.reset();
            log::debug!("iteration {it}: NTK weights {weights:?}");
        }
        let (breakdown, evals, done) = match cfg.optimizer.kind {
            OptimizerKind::Lbfgs => {
                let mut f = |x: &[f64]| breakdown_eval(&ev, &weights, x);
                match lbfgs.step(&mut theta, &mut f) {
                    Ok(o) => (o.info, o.evals, o.status == StepStatus::Converged),
                    Err(Error::NonFiniteGradient) => (LossBreakdown { total: f64::NAN, ..first.breakdown }, 0, false),
                    Err(e) => return Err(e),
                }
            }
            OptimizerKind::Adam => {
                let g = last_grad.take().expect("gradient from the previous evaluation");
                match adam.step(&mut theta, &g) {
                    Ok(()) => {
                        let e = ev.evaluate(&theta, &weights, true)?;
                        last_grad = e.grad;
                        (e.breakdown, 1, false)
                    }
                    Err(Error::NonFiniteGradient) => (LossBreakdown { total: f64::NAN, ..first.breakdown }, 0, false),
                    Err(e) => return Err(e),
                }
            }
        };
        history.push(IterationRecord { iteration: it, breakdown, weights, evals, seconds: start.elapsed().as_secs_f64() });
        if !breakdown.is_finite() {
            log::warn!("{}: non-finite loss at iteration {it}", cfg.name);
            status = RunStatus::Diverged;
        } else if done {
            status = RunStatus::Converged;
            break;
        }
        if it % 50 == 0 {
            log::info!("{}: iteration {it}, loss {:.6e}", cfg.name, breakdown.total);
        }
    }

    let pred = predict(&model, &theta, &s.problem, &s.test.points, exec)?;
    let metrics = field_metrics(&s.test, &pred)?;
    let error_grid = error_grid_csv(&s.problem, &s.test, &pred);
    let params = ParamStore::new(store.layout().clone(), theta)?;
    Ok(RunReport {
        config: cfg.clone(),
        history,
        metrics,
        status,
        seconds: start.elapsed().as_secs_f64(),
        params,
        weights,
        error_grid,
    })
}

/// Trained parameters with what is needed to rebuild the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelSpec,
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: LossWeights,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    in_dim: usize,
    out_dim: usize,
    weights: LossWeights,
    model: ModelSpec,
}

const PARAMS_MARKER: &str = "[params]";

impl Checkpoint {
    /// A TOML header followed by a `[params]` line and one parameter per line.
    pub fn to_text(&self) -> String {
        let header = CheckpointHeader {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self.weights,
            model: self.model.clone(),
        };
        let mut out = toml::to_string(&header).expect("header serializes");
        out.push_str(PARAMS_MARKER);
        out.push('\n');
        out.push_str(&self.params.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut split = None;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if line.trim() == PARAMS_MARKER {
                split = Some((offset, offset + line.len()));
                break;
            }
            offset += line.len();
        }
        let (head_end, body_start) =
            split.ok_or_else(|| Error::CheckpointMismatch(format!("missing `{PARAMS_MARKER}` section")))?;
        let header: CheckpointHeader =
            toml::from_str(&text[..head_end]).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        let header_lines = text[..body_start].lines().count();
        let params = ParamStore::from_text(&text[body_start..]).map_err(|e| match e {
            Error::MalformedRow { line, reason } => Error::MalformedRow { line: line + header_lines, reason },
            other => other,
        })?;
        Ok(Checkpoint { model: header.model, in_dim: header.in_dim, out_dim: header.out_dim, weights: header.weights, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the network for `problem`, checking dimensions and layout.
    pub fn model_for(&self, problem: &Problem) -> Result<Model> {
        if (self.in_dim, self.out_dim) != (problem.in_dim(), problem.out_dim()) {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint maps {} → {} but {} needs {} → {}",
                self.in_dim,
                self.out_dim,
                problem.name(),
                problem.in_dim(),
                problem.out_dim()
            )));
        }
        let (model, fresh) = Model::new(&self.model, self.in_dim, self.out_dim, 0)?;
        if fresh.layout() != self.params.layout() {
            return Err(Error::CheckpointMismatch("parameter names or shapes differ from the model spec".into()));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub metrics: Vec<FieldMetrics>,
    pub error_grid: String,
    /// Test points in the grid.
    pub rows: usize,
}

impl EvalOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), metrics_csv(&self.metrics))?;
        std::fs::write(dir.join("errorgrid.csv"), &self.error_grid)?;
        Ok(())
    }
}

/// Metrics of a checkpoint on the config's test set.
pub fn evaluate_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint, exec: Execution) -> Result<EvalOutput> {
    cfg.validate()?;
    let s = setup(cfg)?;
    let model = ckpt.model_for(&s.problem)?;
    let pred = predict(&model, ckpt.params.values(), &s.problem, &s.test.points, exec)?;
    Ok(EvalOutput {
        metrics: field_metrics(&s.test, &pred)?,
        error_grid: error_grid_csv(&s.problem, &s.test, &pred),
        rows: s.test.points.len(),
    })
}

#[derive(Clone, Debug)]
pub struct LandscapeReport {
    pub grid: LandscapeGrid,
    pub eigenpairs: Vec<EigenPair>,
    pub radius: f64,
    pub lipschitz: f64,
    /// Loss at the checkpoint itself.
    pub center_loss: f64,
}

impl LandscapeReport {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("lipschitz,center_loss,radius,lambda1,lambda2,residual1,residual2\n");
        let e = |i: usize, f: fn(&EigenPair) -> f64| self.eigenpairs.get(i).map_or(f64::NAN, f);
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.lipschitz,
            self.center_loss,
            self.radius,
            e(0, |p| p.value),
            e(1, |p| p.value),
            e(0, |p| p.residual),
            e(1, |p| p.residual)
        )
        .unwrap();
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("landscape.csv"), self.grid.to_csv())?;
        std::fs::write(dir.join("landscape_summary.csv"), self.summary_csv())?;
        Ok(())
    }
}

/// Loss on the plane of the top two Hessian eigenvectors at the checkpoint.
/// The checkpoint itself is not modified.
pub fn landscape_analysis(cfg: &RunConfig, ckpt: &Checkpoint, exec: Execution) -> Result<LandscapeReport> {
    cfg.validate()?;
    let s = setup(cfg)?;
    let model = ckpt.model_for(&s.problem)?;
    let mut evaluator = LossEvaluator::new(&model, &s.problem, &s.colloc).with_exec(exec);
    evaluator.chunk = cfg.loss.chunk;
    let obj = PinnObjective { evaluator, weights: ckpt.weights };
    let theta = ckpt.params.values();
    let a = &cfg.analysis;
    let power = PowerIteration { iters: a.power_iters, tol: a.power_tol, seed: cfg.seed };
    let eigenpairs = top_eigenpairs(&obj, theta, 2, &power)?;
    let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = a.scale * theta_norm;
    let mut grid = landscape(&obj, theta, &eigenpairs[0].vector, &eigenpairs[1].vector, radius, a.n, exec)?;
    grid.eigenvalues = [eigenpairs[0].value, eigenpairs[1].value];
    Ok(LandscapeReport {
        lipschitz: lipschitz_estimate(&grid),
        center_loss: obj.value(theta)?,
        grid,
        eigenpairs,
        radius,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    /// Run status name, or `error` when training failed outright.
    pub status: String,
    pub loss: f64,
    pub rmae: f64,
    pub rrmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<SweepAxis>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut header = vec!["cell".to_string()];
        header.extend(self.axes.iter().map(|a| a.name().to_string()));
        header.extend(["status", "loss", "rmae", "rrmse"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(out, "{i},{},{},{:?},{:?},{:?}", r.values.join(","), r.status, r.loss, r.rmae, r.rrmse).unwrap();
        }
        out
    }
}

/// Configs for the Cartesian product of the axis values, last axis fastest.
pub fn sweep_configs(template: &RunConfig, axes: &[(SweepAxis, Vec<String>)]) -> Result<Vec<(Vec<String>, RunConfig)>> {
    let mut cells = vec![(Vec::new(), template.clone())];
    for (axis, values) in axes {
        if values.is_empty() {
            return Err(Error::Config(format!("sweep axis {} has no values", axis.name())));
        }
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (labels, cfg) in &cells {
            for v in values {
                let mut c = cfg.clone();
                c.set_axis(*axis, v)?;
                let mut l = labels.clone();
                l.push(v.clone());
                next.push((l, c));
            }
        }
        cells = next;
    }
    for (labels, cfg) in &mut cells {
        if !labels.is_empty() {
            cfg.name = format!("{}[{}]", template.name, labels.join(","));
        }
    }
    Ok(cells)
}

/// One training per cell; a failed or diverged cell is recorded, never fatal.
pub fn sweep(template: &RunConfig, axes: &[(SweepAxis, Vec<String>)], exec: Execution) -> Result<SweepTable> {
    let cells = sweep_configs(template, axes)?;
    let inner = if cells.len() > 1 { Execution::Sequential } else { exec };
    let rows = exec.map(cells.len(), |i| {
        let (values, cfg) = &cells[i];
        match train(cfg, inner) {
            Ok(r) => SweepRow {
                values: values.clone(),
                status: r.status.name().to_string(),
                loss: r.final_loss(),
                rmae: r.rmae(),
                rrmse: r.rrmse(),
            },
            Err(e) => {
                log::warn!("{}: {e}", cfg.name);
                SweepRow { values: values.clone(), status: "error".into(), loss: f64::NAN, rmae: f64::NAN, rrmse: f64::NAN }
            }
        }
    });
    Ok(SweepTable { axes: axes.iter().map(|(a, _)| *a).collect(), rows })
}

/// Settings for fitting a one-dimensional target with a small MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub activation: ActivationKind,
    pub width: usize,
    pub hidden_layers: usize,
    pub points: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { activation: ActivationKind::Wavelet, width: 64, hidden_layers: 2, points: 256, steps: 5000, lr: 1e-3, seed: 0 }
    }
}

/// `sin(3x) + 0.5 cos(7x)`.
pub fn fourier_target(x: f64) -> f64 {
    (3.0 * x).sin() + 0.5 * (7.0 * x).cos()
}

/// Full-batch Adam regression of [`fourier_target`] on evenly spaced
/// points of `[−π, π]`. Returns the mean squared error before each step
/// and after the last one (`steps + 1` values).
pub fn fourier_fit(cfg: &FitConfig) -> Result<Vec<f64>> {
    let pi = std::f64::consts::PI;
    let xs = crate::pde::linspace(-pi, pi, cfg.points);
    let ys: Vec<f64> = xs.iter().map(|&x| fourier_target(x)).collect();
    let mut widths = vec![1];
    widths.extend(std::iter::repeat_n(cfg.width, cfg.hidden_layers));
    widths.push(1);
    let mut init = Initializer::new(cfg.seed);
    let mlp = Mlp::new(&mut init, "fit", &widths, cfg.activation);
    let store = init.finish();
    let layout = store.layout().clone();
    let mut theta = store.into_values();
    let mut adam = Adam::new(theta.len(), cfg.lr);
    let mut history = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let g = Graph::with_mode(GradMode::Record);
        let p = layout.bind(&g, &theta, true);
        let x = Tensor::new(xs.clone(), &[cfg.points, 1])?;
        let y = Tensor::new(ys.clone(), &[cfg.points, 1])?;
        let mse = mlp.forward(&p, &x)?.sub(&y)?.square().mean_all();
        history.push(mse.item());
        if step == cfg.steps {
            break;
        }
        let refs: Vec<&Tensor> = p.iter().collect();
        let grads = layout.flatten(&grad(&mse, &refs, false)?);
        adam.step(&mut theta, &grads)?;
    }
    Ok(history)
}
