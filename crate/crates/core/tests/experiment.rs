use std::fs;
use std::path::Path;

use pinnsformer::config::{OptimizerKind, ProblemConfig, RunConfig, SweepAxis};
use pinnsformer::exec::Execution;
use pinnsformer::experiment::*;
use pinnsformer::model::ModelSpec;
use pinnsformer::pde::{navier_stokes_problem, MeshSpec};
use pinnsformer::Error;

fn tiny(problem: &str) -> RunConfig {
    let mut c = RunConfig::new("tiny", ProblemConfig::named(problem));
    c.model = ModelSpec { k: 3, dt: 1e-2, embed: 4, heads: 2, ff_widths: vec![8], head_widths: vec![8], ..ModelSpec::default() };
    c.sampling.mesh = MeshSpec::Grid { n_x: 6, n_t: 6, n_bc: 6, n_ic: 6 };
    c.sampling.test_n_x = 11;
    c.sampling.test_n_t = 9;
    c.optimizer.iterations = 5;
    c.analysis.n = 5;
    c.analysis.power_iters = 20;
    c
}

const CSVS: [&str; 3] = ["report.csv", "metrics.csv", "errorgrid.csv"];

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn zero_iterations_records_the_initial_loss() {
    let mut cfg = tiny("reaction");
    cfg.optimizer.iterations = 0;
    let r = train(&cfg, Execution::default()).unwrap();
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.history[0].iteration, 0);
    assert_eq!(r.status, RunStatus::MaxIters);
    assert_eq!(r.report_csv().lines().count(), 2);
    assert!(r.final_loss() > 0.0);
}

#[test]
fn five_iteration_run_replays_bit_for_bit() {
    let cfg = tiny("reaction");
    let a = train(&cfg, Execution::Parallel).unwrap();
    let b = train(&cfg, Execution::Sequential).unwrap();
    assert_eq!(a.history.len(), 6);
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.breakdown, y.breakdown);
        assert_eq!(x.evals, y.evals);
    }
    assert_eq!(a.params, b.params);
    assert_eq!(a.metrics, b.metrics);
    assert!(a.final_loss() < a.history[0].breakdown.total);
}

#[test]
fn outputs_are_deterministic_and_echo_the_config() {
    let cfg = tiny("wave");
    let s = setup(&cfg).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train_with(&cfg, &s, Execution::Parallel).unwrap().write(d1.path(), &s.problem).unwrap();
    train_with(&cfg, &s, Execution::Sequential).unwrap().write(d2.path(), &s.problem).unwrap();
    for name in CSVS.iter().chain(&["checkpoint.params", "config.toml"]) {
        assert_eq!(read(d1.path(), name), read(d2.path(), name), "{name}");
    }
    // Timing is recorded, not compared.
    let timing = read(d1.path(), "timing.csv");
    assert_eq!(timing.lines().next(), Some("iteration,evals,seconds"));
    assert_eq!(timing.lines().count(), 7);

    assert_eq!(RunConfig::from_toml(&read(d1.path(), "config.toml")).unwrap(), cfg);
    for name in CSVS.iter().chain(&["timing.csv"]) {
        let header = read(d1.path(), name).lines().next().unwrap().to_string();
        assert!(header.split(',').all(|h| h.parse::<f64>().is_err()), "{name}: {header}");
    }
    assert_eq!(
        read(d1.path(), "report.csv").lines().next(),
        Some("iteration,L_res,L_bc,L_ic,total,lambda_res,lambda_bc,lambda_ic")
    );
}

#[test]
fn error_grid_covers_the_test_mesh() {
    let cfg = tiny("convection");
    let r = train(&cfg, Execution::default()).unwrap();
    let lines: Vec<&str> = r.error_grid.lines().collect();
    assert_eq!(lines[0], "x,t,truth,pred,abs_error");
    assert_eq!(lines.len(), 1 + 11 * 9);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[4], (v[2] - v[3]).abs());
    }
}

#[test]
fn evaluating_the_checkpoint_reproduces_training_metrics() {
    let cfg = tiny("reaction");
    let s = setup(&cfg).unwrap();
    let r = train_with(&cfg, &s, Execution::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path(), &s.problem).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("checkpoint.params")).unwrap();
    assert_eq!(ckpt, r.checkpoint(&s.problem));
    let out = evaluate_checkpoint(&cfg, &ckpt, Execution::default()).unwrap();
    assert_eq!(out.rows, 11 * 9);
    for (a, b) in out.metrics.iter().zip(&r.metrics) {
        assert_eq!(a.field, b.field);
        assert!((a.rmae - b.rmae).abs() <= 1e-12 && (a.rrmse - b.rrmse).abs() <= 1e-12);
    }
    assert_eq!(out.error_grid, r.error_grid);
}

#[test]
fn checkpoint_text_round_trip_and_mismatch() {
    let cfg = tiny("reaction");
    let s = setup(&cfg).unwrap();
    let ckpt = train_with(&cfg, &s, Execution::default()).unwrap().checkpoint(&s.problem);
    let back = Checkpoint::from_text(&ckpt.to_text()).unwrap();
    assert_eq!(back, ckpt);
    assert!(back.model_for(&s.problem).is_ok());
    assert!(matches!(ckpt.model_for(&navier_stokes_problem(1.0, 0.01)), Err(Error::CheckpointMismatch(_))));
    let mut wrong = ckpt.clone();
    wrong.model.embed = 8;
    assert!(matches!(wrong.model_for(&s.problem), Err(Error::CheckpointMismatch(_))));
    assert!(Checkpoint::from_text("not a checkpoint").is_err());
    assert!(Checkpoint::load(Path::new("/nonexistent/checkpoint.params")).is_err());
}

#[test]
fn landscape_is_centred_on_the_trained_loss() {
    let cfg = tiny("reaction");
    let s = setup(&cfg).unwrap();
    let r = train_with(&cfg, &s, Execution::default()).unwrap();
    let ckpt = r.checkpoint(&s.problem);
    let before = ckpt.clone();
    let land = landscape_analysis(&cfg, &ckpt, Execution::default()).unwrap();
    assert_eq!(ckpt, before);
    assert_eq!(land.grid.losses.len(), 25);
    assert!((land.center_loss - r.final_loss()).abs() <= 1e-10 * r.final_loss().max(1.0));
    assert!((land.grid.center() - land.center_loss).abs() <= 1e-10 * land.center_loss.max(1.0));
    assert!(land.lipschitz > 0.0);
    assert!(land.grid.eigenvalues[0].abs() >= land.grid.eigenvalues[1].abs());
    let dir = tempfile::tempdir().unwrap();
    land.write(dir.path()).unwrap();
    let csv = read(dir.path(), "landscape.csv");
    assert_eq!(csv.lines().next(), Some("alpha,beta,loss"));
    assert_eq!(csv.lines().count(), 26);
    let summary = read(dir.path(), "landscape_summary.csv");
    assert_eq!(summary.lines().next(), Some("lipschitz,center_loss,radius,lambda1,lambda2,residual1,residual2"));
}

#[test]
fn single_cell_sweep_equals_plain_training() {
    let cfg = tiny("reaction");
    let table = sweep(&cfg, &[(SweepAxis::Seed, vec!["0".into()])], Execution::default()).unwrap();
    let r = train(&cfg, Execution::default()).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].loss, r.final_loss());
    assert_eq!(table.rows[0].rrmse, r.rrmse());
}

#[test]
fn activation_sweep_emits_one_row_per_activation() {
    let mut cfg = tiny("reaction");
    cfg.optimizer.iterations = 2;
    let acts: Vec<String> = ["wavelet", "relu", "sigmoid", "sin"].map(String::from).to_vec();
    let table = sweep(&cfg, &[(SweepAxis::Activation, acts.clone())], Execution::default()).unwrap();
    assert_eq!(table.rows.len(), 4);
    let csv = table.to_csv();
    assert_eq!(csv.lines().next(), Some("cell,activation,status,loss,rmae,rrmse"));
    assert_eq!(csv.lines().count(), 5);
    for (row, a) in table.rows.iter().zip(&acts) {
        assert_eq!(&row.values[0], a);
        assert_ne!(row.status, "error");
    }
}

#[test]
fn sweep_survives_a_diverged_cell() {
    let mut cfg = tiny("reaction");
    cfg.optimizer.iterations = 1;
    // Time offsets of 1e300 overflow the attention logits.
    let axes = [(SweepAxis::K, vec!["2".into()]), (SweepAxis::Dt, vec!["1e300".into(), "1e-2".into()])];
    let table = sweep(&cfg, &axes, Execution::default()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].status, "DIVERGED");
    assert_eq!(table.rows[1].status, "max-iters");
    assert!(table.rows[1].loss.is_finite());
    let names: Vec<String> = sweep_configs(&cfg, &axes).unwrap().into_iter().map(|(_, c)| c.name).collect();
    assert_eq!(names, ["tiny[2,1e300]", "tiny[2,1e-2]"]);

    // Invalid values are configuration errors, caught before any training.
    assert!(sweep(&cfg, &[(SweepAxis::K, vec!["0".into()])], Execution::default()).is_err());
    assert!(sweep(&cfg, &[(SweepAxis::K, vec![])], Execution::default()).is_err());
}

#[test]
fn ntk_weights_refresh_and_become_non_uniform() {
    let mut cfg = tiny("wave");
    cfg.loss.ntk = true;
    cfg.loss.ntk_interval = 2;
    cfg.optimizer.iterations = 4;
    let r = train(&cfg, Execution::default()).unwrap();
    let w0 = r.history[0].weights;
    assert_eq!(r.history[1].weights, w0);
    assert_eq!(r.history[2].weights, w0);
    assert_ne!(r.history[3].weights, w0);
    for h in &r.history {
        let w = h.weights;
        assert!(w.res != w.bc || w.bc != w.ic, "{w:?}");
    }
}

#[test]
fn adam_runs_record_every_step() {
    let mut cfg = tiny("reaction");
    cfg.optimizer.kind = OptimizerKind::Adam;
    cfg.optimizer.adam_lr = 1e-2;
    cfg.optimizer.iterations = 20;
    let r = train(&cfg, Execution::default()).unwrap();
    assert_eq!(r.history.len(), 21);
    assert!(r.history.iter().all(|h| h.evals == 1));
    assert!(r.final_loss() < r.history[0].breakdown.total);
}

#[test]
fn baselines_train_through_the_same_driver() {
    for arch in ["pinn-mlp", "fls", "qres"] {
        let mut cfg = tiny("reaction");
        cfg.set_axis(SweepAxis::Arch, arch).unwrap();
        cfg.model.mlp_width = 8;
        cfg.model.mlp_depth = 3;
        let r = train(&cfg, Execution::default()).unwrap();
        assert_eq!(r.status, RunStatus::MaxIters, "{arch}");
        assert!(r.final_loss().is_finite());
    }
}
