//! Attention mechanisms: uniform, Laplace, scaled dot-product, multihead,
//! and the stacked self-attention block.
//!
//! Conventions: keys `K: [n, d_k]`, values `V: [n, d_v]`, queries
//! `Q: [m, d_k]`. All mechanisms are permutation invariant in the
//! key-value pairs; self-attention is permutation equivariant.

use crate::graph::{concat_cols, Var};
use crate::nn::{BoundParams, ParamStore};
use crate::rng::Stream;

/// Which cross-attention mechanism the deterministic path uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    /// Every context weighted equally; reduces the model to a plain NP.
    Uniform,
    /// Softmax of negated L1 distances between raw x-coordinates.
    Laplace,
    /// `softmax(QK^T / sqrt(d_k)) V` on learned embeddings.
    DotProduct,
    /// Per-head linear projections, dot-product attention per head,
    /// concatenated and linearly transformed.
    MultiHead { heads: usize },
}

impl AttentionKind {
    /// Whether this kind attends through a learned key/query embedding.
    pub fn uses_key_embedding(&self) -> bool {
        matches!(self, AttentionKind::DotProduct | AttentionKind::MultiHead { .. })
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, AttentionKind::MultiHead { .. })
    }
}

/// Register multihead projection parameters under `prefix`.
///
/// The per-head projections `W^Q_h, W^K_h, W^V_h: [d, d/H]` are stored as
/// column blocks of single `[d, d]` matrices (`prefix.wq` etc.); head `h`
/// owns columns `h*d/H .. (h+1)*d/H`. The output projection is
/// `prefix.wo: [d, d]`.
pub fn add_multihead_params(store: &mut ParamStore, prefix: &str, d: usize, heads: usize, rng: &mut Stream) {
    assert!(heads >= 1 && d.is_multiple_of(heads), "multihead: {heads} heads do not divide width {d}");
    for name in ["wq", "wk", "wv", "wo"] {
        store.insert(format!("{prefix}.{name}"), rng.glorot(d, d));
    }
}

/// Mean of the value rows, tiled to every query: independent of Q and K.
pub fn uniform_attention(values: &Var, num_queries: usize) -> Var {
    let (n, _) = values.shape();
    assert!(n >= 1, "uniform_attention: empty context");
    values.mean_rows().repeat_rows(num_queries)
}

/// Laplace attention with its weight matrix `[m, n]`.
pub fn laplace_attention_weights(queries: &Var, keys: &Var) -> Var {
    let (n, dk) = keys.shape();
    let (_, dq) = queries.shape();
    assert_eq!(dq, dk, "laplace_attention: query width {dq} != key width {dk}");
    assert!(n >= 1, "laplace_attention: empty context");
    queries.l1_dist(keys).scale(-1.0).softmax_rows()
}

pub fn laplace_attention(queries: &Var, keys: &Var, values: &Var) -> Var {
    laplace_attention_weights(queries, keys).matmul(values)
}

/// Scaled dot-product attention weights `softmax(QK^T / sqrt(d_k))`.
pub fn dot_product_attention_weights(queries: &Var, keys: &Var) -> Var {
    let (n, dk) = keys.shape();
    let (_, dq) = queries.shape();
    assert_eq!(dq, dk, "dot_product_attention: query width {dq} != key width {dk}");
    assert!(n >= 1, "dot_product_attention: empty context");
    let scores = queries.matmul_t(keys).scale(1.0 / (dk as f64).sqrt());
    scores.softmax_rows()
}

pub fn dot_product_attention(queries: &Var, keys: &Var, values: &Var) -> Var {
    dot_product_attention_weights(queries, keys).matmul(values)
}

/// Multihead attention using the projections registered under `prefix`.
pub fn multihead_attention(
    params: &BoundParams,
    prefix: &str,
    heads: usize,
    queries: &Var,
    keys: &Var,
    values: &Var,
) -> Var {
    let (_, d) = queries.shape();
    assert!(heads >= 1 && d % heads == 0, "multihead: {heads} heads do not divide width {d}");
    let dh = d / heads;
    let q_proj = queries.matmul(params.get(&format!("{prefix}.wq")));
    let k_proj = keys.matmul(params.get(&format!("{prefix}.wk")));
    let v_proj = values.matmul(params.get(&format!("{prefix}.wv")));
    let head_outputs: Vec<Var> = (0..heads)
        .map(|h| {
            let lo = h * dh;
            let hi = lo + dh;
            dot_product_attention(
                &q_proj.slice_cols(lo, hi),
                &k_proj.slice_cols(lo, hi),
                &v_proj.slice_cols(lo, hi),
            )
        })
        .collect();
    let refs: Vec<&Var> = head_outputs.iter().collect();
    concat_cols(&refs).matmul(params.get(&format!("{prefix}.wo")))
}

/// Per-head attention weight matrices, for inspection.
pub fn multihead_attention_head_weights(
    params: &BoundParams,
    prefix: &str,
    heads: usize,
    queries: &Var,
    keys: &Var,
) -> Vec<Var> {
    let (_, d) = queries.shape();
    let dh = d / heads;
    let q_proj = queries.matmul(params.get(&format!("{prefix}.wq")));
    let k_proj = keys.matmul(params.get(&format!("{prefix}.wk")));
    (0..heads)
        .map(|h| {
            let lo = h * dh;
            dot_product_attention_weights(
                &q_proj.slice_cols(lo, lo + dh),
                &k_proj.slice_cols(lo, lo + dh),
            )
        })
        .collect()
}

/// Register one self-attention layer: multihead projections plus a
/// per-row two-layer MLP, both applied with residual connections.
pub fn add_self_attention_params(
    store: &mut ParamStore,
    prefix: &str,
    layers: usize,
    d: usize,
    heads: usize,
    rng: &mut Stream,
) {
    for layer in 0..layers {
        add_multihead_params(store, &format!("{prefix}.sa{layer}.attn"), d, heads, rng);
        store.add_mlp(&format!("{prefix}.sa{layer}.mlp"), &[d, d, d], rng);
    }
}

/// Stacked self-attention: each layer is multihead attention with
/// Q = K = V = the current representation, then a per-row MLP, each
/// sublayer with a residual connection. No layer norm, no dropout, no
/// positional embeddings. `layers == 0` returns the input unchanged.
pub fn self_attention_stack(
    params: &BoundParams,
    prefix: &str,
    layers: usize,
    heads: usize,
    x: &Var,
) -> Var {
    let mut rep = x.clone();
    for layer in 0..layers {
        let attn = multihead_attention(
            params,
            &format!("{prefix}.sa{layer}.attn"),
            heads,
            &rep,
            &rep,
            &rep,
        );
        rep = rep.add(&attn);
        let mlp = params.mlp(&format!("{prefix}.sa{layer}.mlp"), &rep, 2);
        rep = rep.add(&mlp);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph as G;
    use crate::tensor::Tensor;

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = Stream::new(seed);
        rng.normal_tensor(rows, cols)
    }

    #[test]
    fn uniform_is_column_mean() {
        let g = G::new();
        let v = g.constant(Tensor::from_vec(2, 1, vec![1.0, 3.0]));
        let out = uniform_attention(&v, 4);
        assert_eq!(out.value(), Tensor::filled(4, 1, 2.0));
    }

    #[test]
    fn uniform_single_row_passthrough() {
        let g = G::new();
        let v = g.constant(Tensor::from_vec(1, 3, vec![0.5, -1.0, 2.0]));
        let out = uniform_attention(&v, 2);
        for i in 0..2 {
            assert_eq!(out.value().row(i), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn uniform_matches_mean_aggregation_bitwise() {
        let g = G::new();
        let v = g.constant(rand_tensor(7, 5, 1));
        let out = uniform_attention(&v, 3).value();
        let mean = v.value().mean_rows();
        for i in 0..3 {
            assert_eq!(out.row(i), mean.row(0));
        }
    }

    #[test]
    fn uniform_independent_of_queries_and_keys() {
        // signature takes no Q or K at all; perturbing them cannot matter
        let g = G::new();
        let v = g.constant(rand_tensor(4, 3, 2));
        let a = uniform_attention(&v, 2).value();
        let b = uniform_attention(&v, 2).value();
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic(expected = "empty context")]
    fn uniform_rejects_empty_context() {
        let g = G::new();
        let v = g.constant(Tensor::zeros(0, 3));
        let _ = uniform_attention(&v, 1);
    }

    #[test]
    fn laplace_singleton_softmax() {
        let g = G::new();
        let q = g.constant(Tensor::from_vec(3, 1, vec![-5.0, 0.0, 9.0]));
        let k = g.constant(Tensor::from_vec(1, 1, vec![0.3]));
        let v = g.constant(Tensor::from_vec(1, 2, vec![1.5, -2.5]));
        let out = laplace_attention(&q, &k, &v).value();
        for i in 0..3 {
            assert_eq!(out.row(i), &[1.5, -2.5]);
        }
    }

    #[test]
    fn laplace_two_key_hand_evaluation() {
        // weights = softmax([-0, -10]) -> e^0/(e^0 + e^-10)
        let g = G::new();
        let q = g.constant(Tensor::from_vec(1, 1, vec![0.0]));
        let k = g.constant(Tensor::from_vec(2, 1, vec![0.0, 10.0]));
        let v = g.constant(Tensor::from_vec(2, 1, vec![1.0, 0.0]));
        let out = laplace_attention(&q, &k, &v).value();
        let expect = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((out.get(0, 0) - expect).abs() < 1e-12);
        assert!((out.get(0, 0) - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn laplace_permutation_invariant() {
        let ks = rand_tensor(6, 2, 3);
        let vs = rand_tensor(6, 4, 4);
        let qs = rand_tensor(5, 2, 5);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let kp = Tensor::from_fn(6, 2, |i, j| ks.get(perm[i], j));
        let vp = Tensor::from_fn(6, 4, |i, j| vs.get(perm[i], j));

        let g = G::new();
        let out1 = laplace_attention(&g.constant(qs.clone()), &g.constant(ks), &g.constant(vs)).value();
        let out2 = laplace_attention(&g.constant(qs), &g.constant(kp), &g.constant(vp)).value();
        for (a, b) in out1.data().iter().zip(out2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "width")]
    fn laplace_width_mismatch_errors() {
        let g = G::new();
        let q = g.constant(Tensor::zeros(1, 2));
        let k = g.constant(Tensor::zeros(3, 1));
        let v = g.constant(Tensor::zeros(3, 1));
        let _ = laplace_attention(&q, &k, &v);
    }

    #[test]
    fn dot_product_zero_query_is_uniform() {
        let g = G::new();
        let q = g.constant(Tensor::zeros(1, 3));
        let k = g.constant(rand_tensor(5, 3, 6));
        let v = g.constant(rand_tensor(5, 2, 7));
        let out = dot_product_attention(&q, &k, &v).value();
        let mean = v.value().mean_rows();
        for j in 0..2 {
            assert!((out.get(0, j) - mean.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_product_singleton_passthrough() {
        let g = G::new();
        let q = g.constant(rand_tensor(4, 3, 8));
        let k = g.constant(rand_tensor(1, 3, 9));
        let v = g.constant(rand_tensor(1, 2, 10));
        let out = dot_product_attention(&q, &k, &v).value();
        for i in 0..4 {
            assert_eq!(out.row(i), v.value().row(0));
        }
    }

    /// Explicit per-row loop: score, softmax, weighted sum.
    #[test]
    fn dot_product_matches_straight_line_oracle() {
        let (m, n, dk, dv) = (3, 5, 4, 2);
        let qt = rand_tensor(m, dk, 11);
        let kt = rand_tensor(n, dk, 12);
        let vt = rand_tensor(n, dv, 13);

        let g = G::new();
        let out = dot_product_attention(&g.constant(qt.clone()), &g.constant(kt.clone()), &g.constant(vt.clone())).value();

        for i in 0..m {
            let mut scores = vec![0.0; n];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for d in 0..dk {
                    acc += qt.get(i, d) * kt.get(j, d);
                }
                *s = acc / (dk as f64).sqrt();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for d in 0..dv {
                let mut acc = 0.0;
                for (j, e) in exps.iter().enumerate() {
                    acc += e / z * vt.get(j, d);
                }
                assert!((out.get(i, d) - acc).abs() < 1e-12, "({i},{d})");
            }
        }
    }

    #[test]
    fn multihead_single_identity_head_reduces_to_dot_product() {
        let d = 4;
        let mut store = ParamStore::new();
        let eye = Tensor::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 });
        for name in ["wq", "wk", "wv", "wo"] {
            store.insert(format!("mh.{name}"), eye.clone());
        }
        let g = G::new();
        let bound = BoundParams::bind(&g, &store, false);
        let q = g.constant(rand_tensor(3, d, 14));
        let k = g.constant(rand_tensor(5, d, 15));
        let v = g.constant(rand_tensor(5, d, 16));
        let mh = multihead_attention(&bound, "mh", 1, &q, &k, &v).value();
        let dp = dot_product_attention(&q, &k, &v).value();
        for (a, b) in mh.data().iter().zip(dp.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multihead_output_shape_for_all_head_counts() {
        let d = 8;
        for heads in [1usize, 2, 4, 8] {
            let mut store = ParamStore::new();
            let mut rng = Stream::new(heads as u64);
            add_multihead_params(&mut store, "mh", d, heads, &mut rng);
            let g = G::new();
            let bound = BoundParams::bind(&g, &store, false);
            let q = g.constant(rand_tensor(3, d, 20));
            let k = g.constant(rand_tensor(6, d, 21));
            let v = g.constant(rand_tensor(6, d, 22));
            let out = multihead_attention(&bound, "mh", heads, &q, &k, &v);
            assert_eq!(out.shape(), (3, d));
        }
    }

    /// Two heads computed independently from the stored column blocks,
    /// concatenated, projected.
    #[test]
    fn multihead_matches_per_head_oracle() {
        let d = 6;
        let heads = 2;
        let mut store = ParamStore::new();
        let mut rng = Stream::new(33);
        add_multihead_params(&mut store, "mh", d, heads, &mut rng);
        let qt = rand_tensor(4, d, 23);
        let kt = rand_tensor(5, d, 24);
        let vt = rand_tensor(5, d, 25);

        let g = G::new();
        let bound = BoundParams::bind(&g, &store, false);
        let out = multihead_attention(
            &bound,
            "mh",
            heads,
            &g.constant(qt.clone()),
            &g.constant(kt.clone()),
            &g.constant(vt.clone()),
        )
        .value();

        // oracle: per-head slices of the projection matrices
        let dh = d / heads;
        let wq = store.get("mh.wq").unwrap();
        let wk = store.get("mh.wk").unwrap();
        let wv = store.get("mh.wv").unwrap();
        let wo = store.get("mh.wo").unwrap();
        let mut head_outs = Vec::new();
        for h in 0..heads {
            let g2 = G::new();
            let qh = g2.constant(qt.matmul(&wq.slice_cols(h * dh, (h + 1) * dh)));
            let kh = g2.constant(kt.matmul(&wk.slice_cols(h * dh, (h + 1) * dh)));
            let vh = g2.constant(vt.matmul(&wv.slice_cols(h * dh, (h + 1) * dh)));
            head_outs.push(dot_product_attention(&qh, &kh, &vh).value());
        }
        let concat = Tensor::concat_cols(&head_outs.iter().collect::<Vec<_>>());
        let expect = concat.matmul(wo);
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_attention_zero_layers_is_identity() {
        let store = ParamStore::new();
        let g = G::new();
        let bound = BoundParams::bind(&g, &store, false);
        let x = g.constant(rand_tensor(4, 6, 30));
        let out = self_attention_stack(&bound, "enc", 0, 2, &x);
        assert_eq!(out.value(), x.value());
    }

    #[test]
    fn self_attention_single_row_preserves_shape() {
        let d = 4;
        let mut store = ParamStore::new();
        let mut rng = Stream::new(31);
        add_self_attention_params(&mut store, "enc", 2, d, 2, &mut rng);
        let g = G::new();
        let bound = BoundParams::bind(&g, &store, false);
        let x = g.constant(rand_tensor(1, d, 32));
        let out = self_attention_stack(&bound, "enc", 2, 2, &x);
        assert_eq!(out.shape(), (1, d));
    }

    #[test]
    fn self_attention_permutation_equivariant() {
        let d = 6;
        let n = 5;
        let mut store = ParamStore::new();
        let mut rng = Stream::new(34);
        add_self_attention_params(&mut store, "enc", 2, d, 2, &mut rng);
        let xt = rand_tensor(n, d, 35);
        let perm = [4usize, 2, 0, 3, 1];
        let xp = Tensor::from_fn(n, d, |i, j| xt.get(perm[i], j));

        let g = G::new();
        let bound = BoundParams::bind(&g, &store, false);
        let out = self_attention_stack(&bound, "enc", 2, 2, &g.constant(xt)).value();
        let outp = self_attention_stack(&bound, "enc", 2, 2, &g.constant(xp)).value();
        for (i, &pi) in perm.iter().enumerate() {
            for j in 0..d {
                assert!(
                    (outp.get(i, j) - out.get(pi, j)).abs() < 1e-12,
                    "row {i} col {j}"
                );
            }
        }
    }

    #[test]
    fn attention_weight_rows_sum_to_one() {
        let g = G::new();
        let q = g.constant(rand_tensor(4, 3, 40));
        let k = g.constant(rand_tensor(7, 3, 41));
        for w in [
            laplace_attention_weights(&q, &k).value(),
            dot_product_attention_weights(&q, &k).value(),
        ] {
            for i in 0..w.rows() {
                let sum: f64 = w.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }
}
