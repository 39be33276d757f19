use std::f64::consts::PI;

use pinnsformer::autodiff::{grad, Graph, Tensor};
use pinnsformer::nn::{wavelet, ActivationKind, DecoderLayer, BIAS_INIT, EncoderLayer, Linear, MultiHeadAttention};
use pinnsformer::params::{Initializer, ParamStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn set(store: &mut ParamStore, name: &str, values: &[f64]) {
    let e = store.layout().entries()[store.layout().index_of(name).unwrap()].clone();
    assert_eq!(e.numel(), values.len(), "{name}");
    store.values_mut()[e.offset..e.offset + e.numel()].copy_from_slice(values);
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn randomize(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in store.values_mut() {
        *v = rng.random_range(-0.8..0.8);
    }
}

/// `x Wᵀ + b` row by row.
fn linear_oracle(store: &ParamStore, name: &str, x: &[f64], rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let w = store.get(&format!("{name}.weight")).unwrap();
    let b = store.get(&format!("{name}.bias")).unwrap();
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = 0.0;
            for i in 0..din {
                acc += x[r * din + i] * w[o * din + i];
            }
            out[r * dout + o] = acc + b[o];
        }
    }
    out
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Multi-head attention for one batch element, `q` `[kq, e]`, `kv` `[kk, e]`.
/// Returns the output and each head's weight matrix.
#[allow(clippy::too_many_arguments)]
fn attention_oracle(store: &ParamStore, name: &str, q: &[f64], kv: &[f64], kq: usize, kk: usize, e: usize, heads: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let qp = linear_oracle(store, &format!("{name}.q"), q, kq, e, e);
    let kp = linear_oracle(store, &format!("{name}.k"), kv, kk, e, e);
    let vp = linear_oracle(store, &format!("{name}.v"), kv, kk, e, e);
    let dh = e / heads;
    let mut joined = vec![0.0; kq * e];
    let mut all = Vec::new();
    for h in 0..heads {
        let mut wts = Vec::new();
        for i in 0..kq {
            let logits: Vec<f64> = (0..kk)
                .map(|j| (0..dh).map(|c| qp[i * e + h * dh + c] * kp[j * e + h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let w = softmax(&logits);
            for c in 0..dh {
                joined[i * e + h * dh + c] = (0..kk).map(|j| w[j] * vp[j * e + h * dh + c]).sum();
            }
            wts.extend(w);
        }
        all.push(wts);
    }
    (linear_oracle(store, &format!("{name}.o"), &joined, kq, e, e), all)
}

fn attention(e: usize, heads: usize, seed: u64) -> (MultiHeadAttention, ParamStore) {
    let mut init = Initializer::new(seed);
    let mha = MultiHeadAttention::new(&mut init, "attn", e, heads).unwrap();
    let mut store = init.finish();
    randomize(&mut store, seed + 100);
    (mha, store)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn linear_matches_loop() {
    let mut init = Initializer::new(4);
    let layer = Linear::new(&mut init, "l", 5, 3);
    let mut store = init.finish();
    randomize(&mut store, 9);
    let x = random(&mut ChaCha8Rng::seed_from_u64(1), 4 * 5);
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let y = layer.forward(&p, &Tensor::new(x.clone(), &[4, 5]).unwrap()).unwrap();
    assert_eq!(y.values(), linear_oracle(&store, "l", &x, 4, 5, 3).as_slice());
}

#[test]
fn wavelet_examples() {
    let s = |v: f64| Tensor::scalar(v);
    assert_eq!(wavelet(&s(1.0), &s(0.0), &s(0.0)).unwrap().item(), 0.0);
    assert_eq!(wavelet(&s(0.0), &s(1.0), &s(0.0)).unwrap().item(), 1.0);
    assert!((wavelet(&s(2.0), &s(3.0), &s(PI / 2.0)).unwrap().item() - 2.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn wavelet_is_2pi_periodic(w1 in -3.0..3.0f64, w2 in -3.0..3.0f64, x in -10.0..10.0f64) {
        let (a, b) = (Tensor::scalar(w1), Tensor::scalar(w2));
        let y0 = wavelet(&a, &b, &Tensor::scalar(x)).unwrap().item();
        let y1 = wavelet(&a, &b, &Tensor::scalar(x + 2.0 * PI)).unwrap().item();
        prop_assert!((y0 - y1).abs() <= 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions(seed in 0u64..1000, k in 1usize..6) {
        let (mha, store) = attention(4, 2, seed);
        let x = Tensor::new(random(&mut ChaCha8Rng::seed_from_u64(seed), 2 * k * 4), &[2, k, 4]).unwrap();
        let p = store.layout().bind(&Graph::new(), store.values(), false);
        let (_, weights) = mha.forward_with_weights(&p, &x, &x, &x).unwrap();
        for w in weights {
            for row in w.values().chunks(k) {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn attention_is_equivariant_in_key_order(seed in 0u64..1000) {
        let (mha, store) = attention(4, 2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let q = Tensor::new(random(&mut rng, 3 * 4), &[1, 3, 4]).unwrap();
        let kv = random(&mut rng, 4 * 4);
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<f64> = perm.iter().flat_map(|&j| kv[j * 4..j * 4 + 4].to_vec()).collect();
        let p = store.layout().bind(&Graph::new(), store.values(), false);
        let kv = Tensor::new(kv, &[1, 4, 4]).unwrap();
        let permuted = Tensor::new(permuted, &[1, 4, 4]).unwrap();
        let a = mha.forward(&p, &q, &kv, &kv).unwrap();
        let b = mha.forward(&p, &q, &permuted, &permuted).unwrap();
        prop_assert!(close(a.values(), b.values(), 1e-12));
    }
}

#[test]
fn single_position_attention_is_value_projection() {
    let (mha, store) = attention(4, 2, 3);
    let v = random(&mut ChaCha8Rng::seed_from_u64(5), 4);
    let q = random(&mut ChaCha8Rng::seed_from_u64(6), 4);
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let out = mha
        .forward(&p, &Tensor::new(q, &[1, 1, 4]).unwrap(), &Tensor::new(v.clone(), &[1, 1, 4]).unwrap(), &Tensor::new(v.clone(), &[1, 1, 4]).unwrap())
        .unwrap();
    let projected = linear_oracle(&store, "attn.v", &v, 1, 4, 4);
    let expected = linear_oracle(&store, "attn.o", &projected, 1, 4, 4);
    assert!(close(out.values(), &expected, 1e-14));
}

#[test]
fn identical_keys_give_uniform_weights() {
    let (mha, store) = attention(4, 2, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = Tensor::new(random(&mut rng, 3 * 4), &[1, 3, 4]).unwrap();
    let row = random(&mut rng, 4);
    let kv = Tensor::new(row.repeat(3), &[1, 3, 4]).unwrap();
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let (_, weights) = mha.forward_with_weights(&p, &q, &kv, &kv).unwrap();
    for w in weights {
        assert!(w.values().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }
}

#[test]
fn attention_matches_softmax_oracle() {
    let (mha, store) = attention(4, 2, 11);
    let x = random(&mut ChaCha8Rng::seed_from_u64(12), 3 * 4);
    let t = Tensor::new(x.clone(), &[1, 3, 4]).unwrap();
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let (out, weights) = mha.forward_with_weights(&p, &t, &t, &t).unwrap();
    let (expected, expected_w) = attention_oracle(&store, "attn", &x, &x, 3, 3, 4, 2);
    assert!(close(out.values(), &expected, 1e-10));
    for (w, e) in weights.iter().zip(&expected_w) {
        assert!(close(w.values(), e, 1e-10));
    }
}

#[test]
fn cross_attention_matches_softmax_oracle() {
    let (mha, store) = attention(6, 3, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let q = random(&mut rng, 2 * 6);
    let kv = random(&mut rng, 5 * 6);
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let kvt = Tensor::new(kv.clone(), &[1, 5, 6]).unwrap();
    let (out, weights) = mha.forward_with_weights(&p, &Tensor::new(q.clone(), &[1, 2, 6]).unwrap(), &kvt, &kvt).unwrap();
    let (expected, expected_w) = attention_oracle(&store, "attn", &q, &kv, 2, 5, 6, 3);
    assert!(close(out.values(), &expected, 1e-10));
    for (w, e) in weights.iter().zip(&expected_w) {
        assert!(close(w.values(), e, 1e-10));
    }
}

fn encoder(seed: u64, e: usize, kind: ActivationKind) -> (EncoderLayer, ParamStore) {
    let mut init = Initializer::new(seed);
    let layer = EncoderLayer::new(&mut init, "block", e, 2, &[8, 8], kind).unwrap();
    (layer, init.finish())
}

#[test]
fn zeroed_encoder_is_identity() {
    let (layer, store) = encoder(1, 4, ActivationKind::Wavelet);
    let zeros = vec![0.0; store.values().len()];
    let x = Tensor::new(random(&mut ChaCha8Rng::seed_from_u64(3), 2 * 3 * 4), &[2, 3, 4]).unwrap();
    let p = store.layout().bind(&Graph::new(), &zeros, false);
    assert_eq!(layer.forward(&p, &x).unwrap().values(), x.values());
}

#[test]
fn encoder_keeps_shape() {
    let mut init = Initializer::new(0);
    let layer = EncoderLayer::new(&mut init, "enc", 32, 2, &[256, 256], ActivationKind::Wavelet).unwrap();
    let store = init.finish();
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    let x = Tensor::new(random(&mut ChaCha8Rng::seed_from_u64(0), 2 * 5 * 32), &[2, 5, 32]).unwrap();
    assert_eq!(layer.forward(&p, &x).unwrap().shape(), &[2, 5, 32]);
}

#[test]
fn encoder_input_gradient_matches_finite_differences() {
    let (layer, mut store) = encoder(2, 4, ActivationKind::Wavelet);
    randomize(&mut store, 5);
    let x0 = random(&mut ChaCha8Rng::seed_from_u64(4), 2 * 3 * 4);
    let mean_out = |x: &[f64]| {
        let g = Graph::new();
        let p = store.layout().bind(&g, store.values(), false);
        layer.forward(&p, &Tensor::new(x.to_vec(), &[2, 3, 4]).unwrap()).unwrap().mean_all().item()
    };
    let g = Graph::new();
    let p = store.layout().bind(&g, store.values(), false);
    let x = g.leaf(x0.clone(), &[2, 3, 4]).unwrap();
    let dx = grad(&layer.forward(&p, &x).unwrap().mean_all(), &[&x], false).unwrap().remove(0);
    let h = 1e-5;
    for i in 0..x0.len() {
        let (mut a, mut b) = (x0.clone(), x0.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (mean_out(&a) - mean_out(&b)) / (2.0 * h);
        let ad = dx.values()[i];
        assert!((fd - ad).abs() <= 1e-4 * ad.abs().max(1e-3), "entry {i}: {ad} vs {fd}");
    }
}

#[test]
fn decoder_with_encoder_input_and_blind_keys_is_encoder() {
    // With zero key and value weights the attention output no longer depends
    // on what it attends to, so cross-attention to x equals self-attention.
    let mut init = Initializer::new(6);
    let enc = EncoderLayer::new(&mut init, "block", 4, 2, &[8], ActivationKind::Tanh).unwrap();
    let mut enc_store = init.finish();
    let mut init = Initializer::new(6);
    let dec = DecoderLayer::new(&mut init, "block", 4, 2, &[8], ActivationKind::Tanh).unwrap();
    let mut dec_store = init.finish();
    for store in [&mut enc_store, &mut dec_store] {
        randomize(store, 13);
        set(store, "block.attn.k.weight", &[0.0; 16]);
        set(store, "block.attn.v.weight", &[0.0; 16]);
    }
    assert_eq!(enc_store, dec_store);
    let x = Tensor::new(random(&mut ChaCha8Rng::seed_from_u64(14), 3 * 4), &[1, 3, 4]).unwrap();
    let p = enc_store.layout().bind(&Graph::new(), enc_store.values(), false);
    let a = enc.forward(&p, &x).unwrap();
    let b = dec.forward(&p, &x, &x).unwrap();
    assert_eq!(a.shape(), b.shape());
    assert!(close(a.values(), b.values(), 1e-14));
}

#[test]
fn decoder_rejects_mismatched_memory() {
    let mut init = Initializer::new(0);
    let dec = DecoderLayer::new(&mut init, "dec", 4, 2, &[8], ActivationKind::Wavelet).unwrap();
    let store = init.finish();
    let p = store.layout().bind(&Graph::new(), store.values(), false);
    assert!(dec.forward(&p, &Tensor::zeros(&[1, 3, 4]), &Tensor::zeros(&[1, 2, 4])).is_err());
}

#[test]
fn initialization_is_seeded_and_bounded() {
    let (_, a) = encoder(42, 16, ActivationKind::Wavelet);
    let (_, b) = encoder(42, 16, ActivationKind::Wavelet);
    let (_, c) = encoder(43, 16, ActivationKind::Wavelet);
    assert_eq!(a, b);
    assert_ne!(a, c);
    for e in a.layout().entries() {
        let v = a.get(&e.name).unwrap();
        if e.name.ends_with(".w1") || e.name.ends_with(".w2") {
            assert_eq!(v, &[1.0]);
        } else if e.name.ends_with(".bias") {
            assert!(v.iter().all(|&b| b == BIAS_INIT));
        } else {
            let bound = (6.0 / (e.shape[0] + e.shape[1]) as f64).sqrt();
            assert!(v.iter().all(|w| w.abs() <= bound), "{}", e.name);
        }
    }
}

#[test]
fn layers_have_no_normalization() {
    let source = include_str!("../src/nn.rs").to_lowercase();
    for pattern in ["layernorm", "layer_norm", "batchnorm", "batch_norm"] {
        assert!(!source.contains(pattern), "found {pattern}");
    }
}
