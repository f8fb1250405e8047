//! Transformer building blocks.
//!
//! One implementation serves both networks: the caption decoder (causal mask,
//! tied token-embedding logits) and the discriminator's sentence encoder
//! (bidirectional, mean-pooled). Training passes run on the autodiff graph;
//! decoding has a separate grad-free path with a KV cache.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::mat::{softmax_in_place, Mat};
use super::params::{gaussian_init, ParamId, Params};

const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e30;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Maximum sequence length including any prompt prefix.
    pub max_pos: usize,
    pub causal: bool,
}

impl TransformerConfig {
    pub fn head_dim(&self) -> usize {
        assert!(self.d_model % self.n_heads == 0, "d_model must divide by heads");
        self.d_model / self.n_heads
    }
}

#[derive(Clone, Debug)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w_up: ParamId,
    b_up: ParamId,
    w_down: ParamId,
    b_down: ParamId,
}

#[derive(Clone, Debug)]
pub struct Transformer {
    pub cfg: TransformerConfig,
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    blocks: Vec<BlockIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
}

impl Transformer {
    /// Register freshly initialized parameters in `params`.
    pub fn new(cfg: TransformerConfig, params: &mut Params, rng: &mut ChaCha12Rng) -> Self {
        let d = cfg.d_model;
        let hidden = 4 * d;
        let tok_emb = params.add("tok_emb", gaussian_init(cfg.vocab, d, INIT_STD, rng), true);
        let pos_emb = params.add("pos_emb", gaussian_init(cfg.max_pos, d, INIT_STD, rng), true);
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let ones = {
                let mut m = Mat::zeros(1, d);
                m.fill(1.0);
                m
            };
            blocks.push(BlockIds {
                ln1_g: params.add(format!("b{l}.ln1.g"), ones.clone(), false),
                ln1_b: params.add(format!("b{l}.ln1.b"), Mat::zeros(1, d), false),
                wq: params.add(format!("b{l}.wq"), gaussian_init(d, d, INIT_STD, rng), true),
                bq: params.add(format!("b{l}.bq"), Mat::zeros(1, d), false),
                wk: params.add(format!("b{l}.wk"), gaussian_init(d, d, INIT_STD, rng), true),
                bk: params.add(format!("b{l}.bk"), Mat::zeros(1, d), false),
                wv: params.add(format!("b{l}.wv"), gaussian_init(d, d, INIT_STD, rng), true),
                bv: params.add(format!("b{l}.bv"), Mat::zeros(1, d), false),
                wo: params.add(format!("b{l}.wo"), gaussian_init(d, d, INIT_STD, rng), true),
                bo: params.add(format!("b{l}.bo"), Mat::zeros(1, d), false),
                ln2_g: params.add(format!("b{l}.ln2.g"), ones, false),
                ln2_b: params.add(format!("b{l}.ln2.b"), Mat::zeros(1, d), false),
                w_up: params.add(format!("b{l}.w_up"), gaussian_init(d, hidden, INIT_STD, rng), true),
                b_up: params.add(format!("b{l}.b_up"), Mat::zeros(1, hidden), false),
                w_down: params.add(format!("b{l}.w_down"), gaussian_init(hidden, d, INIT_STD, rng), true),
                b_down: params.add(format!("b{l}.b_down"), Mat::zeros(1, d), false),
            });
        }
        let lnf_g = params.add("lnf.g", {
            let mut m = Mat::zeros(1, d);
            m.fill(1.0);
            m
        }, false);
        let lnf_b = params.add("lnf.b", Mat::zeros(1, d), false);
        Transformer { cfg, tok_emb, pos_emb, blocks, lnf_g, lnf_b }
    }

    fn causal_mask(len: usize) -> Mat {
        let mut m = Mat::zeros(len, len);
        for i in 0..len {
            for j in (i + 1)..len {
                m.set(i, j, MASK_NEG);
            }
        }
        m
    }

    fn attention_graph(
        &self,
        g: &mut Graph,
        params: &Params,
        block: &BlockIds,
        x: Var,
    ) -> Var {
        let dh = self.cfg.head_dim();
        let len = g.value(x).rows;
        let wq = g.param(params, block.wq);
        let bq = g.param(params, block.bq);
        let wk = g.param(params, block.wk);
        let bk = g.param(params, block.bk);
        let wv = g.param(params, block.wv);
        let bv = g.param(params, block.bv);
        let wo = g.param(params, block.wo);
        let bo = g.param(params, block.bo);
        let q = g.matmul(x, wq);
        let q = g.add_row(q, bq);
        let k = g.matmul(x, wk);
        let k = g.add_row(k, bk);
        let v = g.matmul(x, wv);
        let v = g.add_row(v, bv);
        let mask = if self.cfg.causal { Some(Self::causal_mask(len)) } else { None };
        let mut ctx: Option<Var> = None;
        for h in 0..self.cfg.n_heads {
            let qs = g.slice_cols(q, h * dh, dh);
            let ks = g.slice_cols(k, h * dh, dh);
            let vs = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_bt(qs, ks);
            let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            let scores = match &mask {
                Some(m) => g.add_const(scores, m),
                None => scores,
            };
            let probs = g.softmax_rows(scores);
            let mixed = g.matmul(probs, vs);
            ctx = Some(match ctx {
                None => mixed,
                Some(prev) => g.concat_cols(prev, mixed),
            });
        }
        let ctx = ctx.expect("at least one head");
        let out = g.matmul(ctx, wo);
        g.add_row(out, bo)
    }

    /// Full forward over `prefix_rows` (optional prompt pseudo-tokens) followed
    /// by embedded `ids`. Returns the final hidden states, one row per position.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        params: &Params,
        prefix_rows: Option<Var>,
        ids: &[usize],
    ) -> Var {
        let tok = g.param(params, self.tok_emb);
        let pos = g.param(params, self.pos_emb);
        let embedded = if ids.is_empty() { None } else { Some(g.embed_rows(tok, ids)) };
        let x = match (prefix_rows, embedded) {
            (Some(p), Some(e)) => g.concat_rows(p, e),
            (Some(p), None) => p,
            (None, Some(e)) => e,
            (None, None) => panic!("empty transformer input"),
        };
        let len = g.value(x).rows;
        assert!(len <= self.cfg.max_pos, "sequence longer than positional table");
        let pos_ids: Vec<usize> = (0..len).collect();
        let pos_rows = g.embed_rows(pos, &pos_ids);
        let mut h = g.add(x, pos_rows);
        for block in &self.blocks {
            let ln1g = g.param(params, block.ln1_g);
            let ln1b = g.param(params, block.ln1_b);
            let normed = g.layer_norm(h, ln1g, ln1b, LN_EPS);
            let attn = self.attention_graph(g, params, block, normed);
            h = g.add(h, attn);
            let ln2g = g.param(params, block.ln2_g);
            let ln2b = g.param(params, block.ln2_b);
            let normed2 = g.layer_norm(h, ln2g, ln2b, LN_EPS);
            let w_up = g.param(params, block.w_up);
            let b_up = g.param(params, block.b_up);
            let w_down = g.param(params, block.w_down);
            let b_down = g.param(params, block.b_down);
            let up = g.matmul(normed2, w_up);
            let up = g.add_row(up, b_up);
            let act = g.gelu(up);
            let down = g.matmul(act, w_down);
            let down = g.add_row(down, b_down);
            h = g.add(h, down);
        }
        let lnfg = g.param(params, self.lnf_g);
        let lnfb = g.param(params, self.lnf_b);
        g.layer_norm(h, lnfg, lnfb, LN_EPS)
    }

    /// Logits over the vocabulary via the tied token-embedding table.
    pub fn logits_graph(&self, g: &mut Graph, params: &Params, hidden: Var) -> Var {
        let tok = g.param(params, self.tok_emb);
        g.matmul_bt(hidden, tok)
    }

    /// Mean-pooled sentence representation (bidirectional encoder use).
    pub fn pooled_graph(&self, g: &mut Graph, params: &Params, ids: &[usize]) -> Var {
        let hidden = self.forward_graph(g, params, None, ids);
        g.mean_rows(hidden)
    }

    // ------------------------------------------------------------------
    // Grad-free incremental forward for decoding.
    // ------------------------------------------------------------------

    pub fn new_cache(&self) -> KvCache {
        KvCache {
            k: vec![Vec::new(); self.cfg.n_layers],
            v: vec![Vec::new(); self.cfg.n_layers],
            len: 0,
        }
    }

    /// Push `new_rows` (already embedded input rows, without position added)
    /// through the network, extending the cache. Returns the final hidden
    /// state of the last new position. Causal configs only.
    pub fn forward_infer(&self, params: &Params, cache: &mut KvCache, new_rows: &Mat) -> Vec<f64> {
        assert!(self.cfg.causal, "incremental forward is for causal decoding");
        let d = self.cfg.d_model;
        let dh = self.cfg.head_dim();
        let n_new = new_rows.rows;
        assert!(cache.len + n_new <= self.cfg.max_pos, "cache exceeds positional table");
        let pos_tab = params.value(self.pos_emb);
        let mut h = new_rows.clone();
        for (r, pos) in (cache.len..cache.len + n_new).enumerate() {
            let prow = pos_tab.row(pos);
            for (x, p) in h.row_mut(r).iter_mut().zip(prow.iter()) {
                *x += p;
            }
        }
        for (l, block) in self.blocks.iter().enumerate() {
            let normed = layer_norm_rows(&h, params.value(block.ln1_g), params.value(block.ln1_b));
            let q = affine(&normed, params.value(block.wq), params.value(block.bq));
            let k = affine(&normed, params.value(block.wk), params.value(block.bk));
            let v = affine(&normed, params.value(block.wv), params.value(block.bv));
            for r in 0..n_new {
                cache.k[l].push(k.row(r).to_vec());
                cache.v[l].push(v.row(r).to_vec());
            }
            let mut attn_out = Mat::zeros(n_new, d);
            for r in 0..n_new {
                let pos = cache.len + r;
                let qrow = q.row(r);
                for head in 0..self.cfg.n_heads {
                    let off = head * dh;
                    let mut scores: Vec<f64> = (0..=pos)
                        .map(|p| {
                            let krow = &cache.k[l][p][off..off + dh];
                            let mut s = 0.0;
                            for (qv, kv) in qrow[off..off + dh].iter().zip(krow.iter()) {
                                s += qv * kv;
                            }
                            s / (dh as f64).sqrt()
                        })
                        .collect();
                    softmax_in_place(&mut scores);
                    let out = attn_out.row_mut(r);
                    for (p, w) in scores.iter().enumerate() {
                        let vrow = &cache.v[l][p][off..off + dh];
                        for (j, vv) in vrow.iter().enumerate() {
                            out[off + j] += w * vv;
                        }
                    }
                }
            }
            let proj = affine(&attn_out, params.value(block.wo), params.value(block.bo));
            h.add_assign(&proj);
            let normed2 = layer_norm_rows(&h, params.value(block.ln2_g), params.value(block.ln2_b));
            let up = affine(&normed2, params.value(block.w_up), params.value(block.b_up));
            let act = gelu_mat(&up);
            let down = affine(&act, params.value(block.w_down), params.value(block.b_down));
            h.add_assign(&down);
        }
        cache.len += n_new;
        let out = layer_norm_rows(&h, params.value(self.lnf_g), params.value(self.lnf_b));
        out.row(n_new - 1).to_vec()
    }

    /// Vocabulary logits for a single hidden row (tied embeddings).
    pub fn logits_infer(&self, params: &Params, hidden: &[f64]) -> Vec<f64> {
        let tok = params.value(self.tok_emb);
        (0..tok.rows)
            .map(|i| {
                tok.row(i)
                    .iter()
                    .zip(hidden.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Embedding row for one token, used to feed decode steps.
    pub fn token_row(&self, params: &Params, id: usize) -> Mat {
        Mat::row_vec(params.value(self.tok_emb).row(id).to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct KvCache {
    k: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    pub len: usize,
}

fn affine(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    let mut out = x.matmul(w);
    for i in 0..out.rows {
        for (o, bv) in out.row_mut(i).iter_mut().zip(b.data.iter()) {
            *o += bv;
        }
    }
    out
}

fn layer_norm_rows(x: &Mat, gamma: &Mat, beta: &Mat) -> Mat {
    let mut out = Mat::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        for (j, &v) in row.iter().enumerate() {
            out.set(i, j, (v - mean) * istd * gamma.data[j] + beta.data[j]);
        }
    }
    out
}

fn gelu_mat(x: &Mat) -> Mat {
    let mut out = x.clone();
    for v in &mut out.data {
        let u = 0.797_884_560_802_865_4 * (*v + 0.044_715 * *v * *v * *v);
        *v = 0.5 * *v * (1.0 + u.tanh());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn tiny_cfg(causal: bool) -> TransformerConfig {
        TransformerConfig { vocab: 7, d_model: 8, n_layers: 2, n_heads: 2, max_pos: 12, causal }
    }

    #[test]
    fn incremental_forward_matches_graph_forward() {
        let mut params = Params::new();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let tr = Transformer::new(tiny_cfg(true), &mut params, &mut rng);
        let ids = [3usize, 1, 4, 1, 5];

        let mut g = Graph::new();
        let hidden = tr.forward_graph(&mut g, &params, None, &ids);
        let logits = tr.logits_graph(&mut g, &params, hidden);
        let full_last = g.value(logits).row(ids.len() - 1).to_vec();

        let mut cache = tr.new_cache();
        let mut last = Vec::new();
        for &id in &ids {
            let row = tr.token_row(&params, id);
            let h = tr.forward_infer(&params, &mut cache, &row);
            last = tr.logits_infer(&params, &h);
        }
        for (a, b) in full_last.iter().zip(last.iter()) {
            assert!((a - b).abs() < 1e-9, "graph {a} vs incremental {b}");
        }
    }

    #[test]
    fn incremental_forward_accepts_multi_row_prefix() {
        let mut params = Params::new();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let tr = Transformer::new(tiny_cfg(true), &mut params, &mut rng);
        let prefix = gaussian_init(3, 8, 0.5, &mut rng);
        let ids = [2usize, 6];

        let mut g = Graph::new();
        let pv = g.constant(prefix.clone());
        let hidden = tr.forward_graph(&mut g, &params, Some(pv), &ids);
        let want = g.value(hidden).row(4).to_vec();

        let mut cache = tr.new_cache();
        tr.forward_infer(&params, &mut cache, &prefix);
        let mut h = Vec::new();
        for &id in &ids {
            let row = tr.token_row(&params, id);
            h = tr.forward_infer(&params, &mut cache, &row);
        }
        for (a, b) in want.iter().zip(h.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bidirectional_pooling_is_order_sensitive_but_deterministic() {
        let mut params = Params::new();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let tr = Transformer::new(tiny_cfg(false), &mut params, &mut rng);
        let mut g1 = Graph::new();
        let p1 = tr.pooled_graph(&mut g1, &params, &[1, 2, 3]);
        let mut g2 = Graph::new();
        let p2 = tr.pooled_graph(&mut g2, &params, &[1, 2, 3]);
        assert_eq!(g1.value(p1).data, g2.value(p2).data);
    }
}
