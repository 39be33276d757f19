mod common;

use common::{rel_err, FnSurrogate};
use pinnsformer::autodiff::{grad, Graph, Tensor};
use pinnsformer::exec::Execution;
use pinnsformer::loss::*;
use pinnsformer::model::{generate_pseudo_sequence, Architecture, Model, ModelSpec, Surrogate};
use pinnsformer::pde::*;
use pinnsformer::Result;

fn desk_colloc(problem: &Problem, n: usize) -> Collocation {
    sample_collocation(problem, &MeshSpec::Grid { n_x: n, n_t: n, n_bc: n, n_ic: n }).unwrap()
}

fn tiny_transformer(k: usize, seed: u64) -> (Model, Vec<f64>) {
    let spec = ModelSpec {
        k,
        dt: 1e-2,
        embed: 4,
        heads: 2,
        ff_widths: vec![6],
        head_widths: vec![6],
        ..ModelSpec::default()
    };
    let (m, s) = Model::new(&spec, 2, 1, seed).unwrap();
    (m, s.into_values())
}

const ONES: LossWeights = LossWeights { res: 1.0, bc: 1.0, ic: 1.0 };

#[test]
fn exact_solution_has_zero_loss() {
    let problem = reaction_problem(5.0);
    let exact = FnSurrogate::new(|_, c: &[Tensor]| problem.exact_tensor(c).unwrap());
    let colloc = desk_colloc(&problem, 26);
    let b = pointwise_pinns_loss(&exact, &problem, &colloc, &ONES, &[]).unwrap();
    assert!(b.total <= 1e-10, "{b:?}");
}

#[test]
fn zero_weights_zero_total() {
    let problem = convection_problem(50.0);
    let (m, theta) = tiny_transformer(3, 1);
    let zero = LossWeights { res: 0.0, bc: 0.0, ic: 0.0 };
    let b = sequential_pinnsformer_loss(&m, &problem, &desk_colloc(&problem, 6), &zero, &theta).unwrap();
    assert_eq!(b.total, 0.0);
    assert!(b.res > 0.0 && b.bc >= 0.0 && b.ic > 0.0);
}

/// `[u, u_t]` at each pseudo step of one point, on a fresh graph: the time
/// derivative is taken with respect to the whole time column, as in the
/// batched loss.
fn point_fields(m: &Model, theta: &[f64], x: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let g = Graph::new();
    let p = m.layout().bind(&g, theta, false);
    let k = m.seq_len();
    let seq = generate_pseudo_sequence(&Tensor::new(vec![x, t], &[1, 2]).unwrap(), k, m.spec().dt).unwrap();
    let v = seq.values();
    let xs = g.leaf((0..k).map(|j| v[2 * j]).collect(), &[1, k, 1]).unwrap();
    let ts = g.leaf((0..k).map(|j| v[2 * j + 1]).collect(), &[1, k, 1]).unwrap();
    let out = m.forward(&p, &Tensor::concat(&[&xs, &ts], 2).unwrap()).unwrap();
    let u_t = grad(&out.sum_all(), &[&ts], false).unwrap().remove(0);
    (out.to_vec(), u_t.to_vec())
}

fn reaction_oracle(m: &Model, theta: &[f64], problem: &Problem, colloc: &Collocation, rho: f64) -> (f64, f64, f64) {
    let k = m.seq_len();
    let mut res = 0.0;
    for row in colloc.residual.rows() {
        let (u, u_t) = point_fields(m, theta, row[0], row[1]);
        for j in 0..k {
            let r = u_t[j] - rho * u[j] * (1.0 - u[j]);
            res += r * r;
        }
    }
    let (left, right) = colloc.boundary.as_ref().unwrap();
    let mut bc = 0.0;
    for (l, r) in left.rows().zip(right.rows()) {
        let (ul, _) = point_fields(m, theta, l[0], l[1]);
        let (ur, _) = point_fields(m, theta, r[0], r[1]);
        for j in 0..k {
            bc += (ul[j] - ur[j]).powi(2);
        }
    }
    let init = colloc.initial.as_ref().unwrap();
    let mut ic = 0.0;
    for row in init.rows() {
        let (u, _) = point_fields(m, theta, row[0], row[1]);
        ic += (u[0] - problem.initial_profile(row[0])).powi(2);
    }
    let nk = |n: usize| (n * k) as f64;
    (res / nk(colloc.residual.len()), bc / nk(left.len()), ic / init.len() as f64)
}

#[test]
fn pointwise_loss_matches_loop_oracle() {
    let problem = reaction_problem(5.0);
    let spec = ModelSpec { arch: Architecture::PinnMlp, mlp_width: 8, mlp_depth: 3, ..ModelSpec::default() };
    let (m, store) = Model::new(&spec, 2, 1, 3).unwrap();
    let mut colloc = sample_collocation(&problem, &MeshSpec::Random { count: 10, n_bc: 10, n_ic: 10, seed: 5 }).unwrap();
    colloc.residual = colloc.residual.select(&(0..10).collect::<Vec<_>>());
    let b = pointwise_pinns_loss(&m, &problem, &colloc, &ONES, store.values()).unwrap();
    let (res, bc, ic) = reaction_oracle(&m, store.values(), &problem, &colloc, 5.0);
    assert!((b.res - res).abs() <= 1e-12 && (b.bc - bc).abs() <= 1e-12 && (b.ic - ic).abs() <= 1e-12);
    assert!((b.total - (res + bc + ic)).abs() <= 1e-12);
}

#[test]
fn sequential_loss_matches_double_loop_oracle() {
    let problem = reaction_problem(5.0);
    let (m, theta) = tiny_transformer(3, 7);
    let colloc = desk_colloc(&problem, 5);
    let b = sequential_pinnsformer_loss(&m, &problem, &colloc, &ONES, &theta).unwrap();
    let (res, bc, ic) = reaction_oracle(&m, &theta, &problem, &colloc, 5.0);
    assert!((b.res - res).abs() <= 1e-12, "{} vs {res}", b.res);
    assert!((b.bc - bc).abs() <= 1e-12, "{} vs {bc}", b.bc);
    assert!((b.ic - ic).abs() <= 1e-12, "{} vs {ic}", b.ic);
}

#[test]
fn k1_sequential_equals_pointwise() {
    for problem in [reaction_problem(5.0), wave_problem(3.0), convection_problem(50.0)] {
        let (m, theta) = tiny_transformer(1, 2);
        let colloc = desk_colloc(&problem, 7);
        let w = LossWeights { res: 1.0, bc: 2.0, ic: 0.5 };
        let a = sequential_pinnsformer_loss(&m, &problem, &colloc, &w, &theta).unwrap();
        let b = pointwise_pinns_loss(&m, &problem, &colloc, &w, &theta).unwrap();
        assert_eq!(a, b);
    }
    let (m, theta) = tiny_transformer(2, 2);
    let problem = reaction_problem(5.0);
    assert!(pointwise_pinns_loss(&m, &problem, &desk_colloc(&problem, 3), &ONES, &theta).is_err());
}

#[test]
fn initial_term_ignores_later_steps() {
    let g = Graph::new();
    let field = g.leaf((0..12).map(|i| i as f64 * 0.1 - 0.4).collect(), &[4, 3, 1]).unwrap();
    let d = grad(&sequential_term(std::slice::from_ref(&field), true).unwrap(), &[&field], false).unwrap().remove(0);
    for (i, v) in d.values().iter().enumerate() {
        if i % 3 != 0 {
            assert_eq!(*v, 0.0);
        } else {
            assert_ne!(*v, 0.0);
        }
    }

    // Perturb the network output at steps j ≥ 1 only: L_ic must not move.
    let problem = wave_problem(3.0);
    let colloc = desk_colloc(&problem, 6);
    let base = |p: &[Tensor], c: &[Tensor]| -> Result<Tensor> {
        Ok(c[0].scale(1.3).sin().mul(&c[1].scale(p[0].item()).cos())?)
    };
    let plain = FnSurrogate::new(base).with_params(&[("w", &[1])]).steps(3, 0.1);
    let bumped = FnSurrogate::new(|p: &[Tensor], c: &[Tensor]| -> Result<Tensor> {
        let b = c[0].shape()[0];
        let mask: Vec<f64> = (0..b).flat_map(|_| [0.0, 1.0, 1.0]).collect();
        Ok(base(p, c)?.add(&c[1].square().mul(&Tensor::new(mask, &[b, 3, 1])?)?)?)
    })
    .with_params(&[("w", &[1])])
    .steps(3, 0.1);
    let a = sequential_pinnsformer_loss(&plain, &problem, &colloc, &ONES, &[2.0]).unwrap();
    let b = sequential_pinnsformer_loss(&bumped, &problem, &colloc, &ONES, &[2.0]).unwrap();
    assert_eq!(a.ic, b.ic);
    assert_ne!(a.res, b.res);
}

#[test]
fn doubling_a_weight_doubles_its_contribution() {
    let problem = wave_problem(3.0);
    let (m, theta) = tiny_transformer(3, 4);
    let colloc = desk_colloc(&problem, 5);
    let ev = LossEvaluator::new(&m, &problem, &colloc);
    let a = ev.evaluate(&theta, &ONES, true).unwrap();
    let b = ev.evaluate(&theta, &LossWeights { res: 2.0, ..ONES }, true).unwrap();
    assert_eq!(a.breakdown.res, b.breakdown.res);
    assert!(rel_err(b.breakdown.total - a.breakdown.total, a.breakdown.res) <= 1e-12);
    let res_only = ev.evaluate(&theta, &LossWeights { res: 1.0, bc: 0.0, ic: 0.0 }, true).unwrap();
    for ((ga, gb), gr) in a.grad.unwrap().iter().zip(b.grad.unwrap()).zip(res_only.grad.unwrap()) {
        assert!((gb - ga - gr).abs() <= 1e-10 * gr.abs().max(1.0));
    }
}

#[test]
fn loss_terms_are_nonnegative() {
    for seed in 0..4 {
        let problem = convection_problem(50.0);
        let (m, theta) = tiny_transformer(2, seed);
        let b = sequential_pinnsformer_loss(&m, &problem, &desk_colloc(&problem, 4), &ONES, &theta).unwrap();
        assert!(b.res > 0.0 && b.bc >= 0.0 && b.ic > 0.0);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let problem = reaction_problem(5.0);
    let (m, theta) = tiny_transformer(3, 9);
    let colloc = desk_colloc(&problem, 4);
    let ev = LossEvaluator::new(&m, &problem, &colloc);
    let e = ev.evaluate(&theta, &ONES, true).unwrap();
    let (loss, g) = (e.breakdown.total, e.grad.unwrap());
    let h = 1e-6;
    for i in (0..theta.len()).step_by(7) {
        let (mut a, mut b) = (theta.clone(), theta.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (ev.evaluate(&a, &ONES, false).unwrap().breakdown.total - ev.evaluate(&b, &ONES, false).unwrap().breakdown.total) / (2.0 * h);
        // Central differences lose about eps·L/h to cancellation.
        let floor = 10.0 * f64::EPSILON * loss / h;
        assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs() + floor, "param {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn chunking_and_threads_do_not_change_bits() {
    let problem = wave_problem(3.0);
    let (m, theta) = tiny_transformer(3, 5);
    let colloc = desk_colloc(&problem, 9);
    let mut seq = LossEvaluator::new(&m, &problem, &colloc).with_exec(Execution::Sequential);
    let par = LossEvaluator::new(&m, &problem, &colloc).with_exec(Execution::Parallel);
    seq.chunk = DEFAULT_CHUNK;
    assert_eq!(seq.evaluate(&theta, &ONES, true).unwrap(), par.evaluate(&theta, &ONES, true).unwrap());
}

#[test]
fn symmetric_traces_give_equal_weights() {
    let w = weights_from_traces([Some(0.7), Some(0.7), Some(0.7)]).unwrap();
    for v in [w.res, w.bc, w.ic] {
        assert!((v - 3.0).abs() <= 1e-15);
    }
    assert_eq!(w.res, w.bc);
    assert_eq!(w.bc, w.ic);
    assert_eq!(weights_from_traces([Some(2.0), None, Some(2.0)]).unwrap(), LossWeights { res: 2.0, bc: 1.0, ic: 2.0 });
}

/// `u = a x + b t²` on the reaction problem: residual `2 b t − ρ u (1 − u)`.
fn linear_model() -> FnSurrogate<impl Fn(&[Tensor], &[Tensor]) -> Result<Tensor> + Sync> {
    FnSurrogate::new(|p: &[Tensor], c: &[Tensor]| Ok(c[0].mul(&p[0])?.add(&c[1].square().mul(&p[1])?)?))
        .with_params(&[("a", &[1]), ("b", &[1])])
}

#[test]
fn trace_matches_explicit_jacobian() {
    let problem = reaction_problem(2.0);
    let s = linear_model();
    let colloc = sample_collocation(&problem, &MeshSpec::Random { count: 30, n_bc: 5, n_ic: 8, seed: 2 }).unwrap();
    let theta = [0.3, -0.2];
    let ev = LossEvaluator::new(&s, &problem, &colloc);
    let traces = ev.ntk_traces(&theta, 200).unwrap();

    let rho = 2.0;
    let (a, b) = (theta[0], theta[1]);
    let mut jj = 0.0;
    for row in colloc.residual.rows() {
        let (x, t) = (row[0], row[1]);
        let u = a * x + b * t * t;
        // ∂r/∂a and ∂r/∂b with r = 2bt − ρu(1−u).
        let du = -rho * (1.0 - 2.0 * u);
        let (ja, jb) = (du * x, 2.0 * t + du * t * t);
        jj += ja * ja + jb * jb;
    }
    let expected = jj / colloc.residual.len() as f64;
    assert!(rel_err(traces[0].unwrap(), expected) <= 1e-10, "{:?} vs {expected}", traces[0]);

    let mut ic = 0.0;
    for row in colloc.initial.as_ref().unwrap().rows() {
        ic += row[0] * row[0];
    }
    let expected_ic = ic / colloc.initial.as_ref().unwrap().len() as f64;
    assert!(rel_err(traces[2].unwrap(), expected_ic) <= 1e-10);
}

#[test]
fn scaling_a_term_scales_its_trace_quadratically() {
    let s = linear_model();
    let problem = reaction_problem(2.0);
    let colloc = desk_colloc(&problem, 6);
    let theta = [0.5, 0.25];
    let layout = s.layout().clone();
    let ev = LossEvaluator::new(&s, &problem, &colloc);
    let trace = |c: f64| {
        mean_gradient_norm(&layout, &theta, colloc.residual.len(), Execution::Sequential, |g, p, i| {
            Ok(ev.term_fields(g, p, Term::Residual, i..i + 1, true)?.into_iter().map(|f| f.scale(c)).collect())
        })
        .unwrap()
    };
    let (t1, t3) = (trace(1.0), trace(3.0));
    assert!(rel_err(t3, 9.0 * t1) <= 1e-12);
    let other = [Some(t1), Some(2.0 * t1), Some(0.5 * t1)];
    let base = weights_from_traces(other).unwrap();
    let scaled = weights_from_traces([Some(t3), other[1], other[2]]).unwrap();
    let sum = |t: [f64; 3]| t.iter().sum::<f64>();
    assert!(rel_err(base.res, sum([1.0, 2.0, 0.5])) <= 1e-12);
    assert!(rel_err(scaled.res, sum([9.0, 2.0, 0.5]) / 9.0) <= 1e-12);
    assert!(rel_err(scaled.bc, sum([9.0, 2.0, 0.5]) / 2.0) <= 1e-12);
}

#[test]
fn ntk_weights_on_a_network_are_finite_and_positive() {
    let problem = wave_problem(3.0);
    let (m, theta) = tiny_transformer(2, 3);
    let colloc = desk_colloc(&problem, 8);
    let w = LossEvaluator::new(&m, &problem, &colloc).ntk_weights(&theta, 20).unwrap();
    for v in [w.res, w.bc, w.ic] {
        assert!(v.is_finite() && v > 1.0);
    }
}
