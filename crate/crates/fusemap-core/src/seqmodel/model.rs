//! A small causal transformer over interleaved (condition, state, action)
//! tokens, written directly against ndarray in f64 so that training is
//! bit-reproducible and gradients can be checked numerically.
//!
//! Layout per timestep t: token 3t embeds the conditioning scalar, 3t+1 the
//! state vector, 3t+2 the action taken. All three share a learned timestep
//! embedding. Action predictions are read off the state token, so with the
//! causal mask the model sees exactly r[0..=t], s[0..=t], a[0..t] when
//! predicting a[t]. The final triple may omit its action token, which is how
//! closed-loop decoding queries the next action.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seqmodel::state::STATE_DIM;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub max_timesteps: usize,
    /// Residual/embedding dropout probability during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 128, heads: 2, blocks: 3, max_timesteps: 64, dropout: 0.0 }
    }
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Linear {
    w: Array2<f64>,
    b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
}

impl Linear {
    fn new(din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Linear {
        let w = Array2::from_shape_fn((din, dout), |_| normal(rng, 0.02));
        Linear { w, b: Array1::zeros(dout), gw: Array2::zeros((din, dout)), gb: Array1::zeros(dout) }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.gw += &x.t().dot(dy);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

const LN_EPS: f64 = 1e-5;

struct LayerNorm {
    g: Array1<f64>,
    b: Array1<f64>,
    gg: Array1<f64>,
    gb: Array1<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> LayerNorm {
        LayerNorm {
            g: Array1::ones(dim),
            b: Array1::zeros(dim),
            gg: Array1::zeros(dim),
            gb: Array1::zeros(dim),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let d = x.ncols() as f64;
        let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
        let mut xhat = x.clone();
        for (mut row, &m) in xhat.rows_mut().into_iter().zip(mean.iter()) {
            row -= m;
        }
        let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        for (mut row, &is) in xhat.rows_mut().into_iter().zip(inv_std.iter()) {
            row *= is;
        }
        let y = &xhat * &self.g + &self.b;
        (y, LnCache { xhat, inv_std })
    }

    fn backward(&mut self, cache: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = dy.ncols() as f64;
        self.gg += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.gb += &dy.sum_axis(Axis(0));
        let dyg = dy * &self.g;
        let sum1 = dyg.sum_axis(Axis(1));
        let sum2 = (&dyg * &cache.xhat).sum_axis(Axis(1));
        let mut dx = dyg;
        for ((mut row, xhat_row), ((&s1, &s2), &is)) in dx
            .rows_mut()
            .into_iter()
            .zip(cache.xhat.rows())
            .zip(sum1.iter().zip(sum2.iter()).zip(cache.inv_std.iter()))
        {
            for (v, &xh) in row.iter_mut().zip(xhat_row.iter()) {
                *v = is * (*v - (s1 + xh * s2) / d);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

struct AttnTape {
    ln1_out: Array2<f64>,
    qkv: Array2<f64>,
    /// Post-softmax attention weights, one matrix per head.
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

struct BlockTape {
    ln1_cache: LnCache,
    attn: AttnTape,
    attn_mask: Option<Array2<f64>>,
    ln2_cache: LnCache,
    ln2_out: Array2<f64>,
    h_pre: Array2<f64>,
    h_act: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

pub(crate) struct Tape {
    timesteps: usize,
    actions_len: usize,
    r_mat: Array2<f64>,
    s_mat: Array2<f64>,
    a_mat: Array2<f64>,
    emb_ln_cache: LnCache,
    emb_mask: Option<Array2<f64>>,
    blocks: Vec<BlockTape>,
    lnf_cache: LnCache,
    hs: Array2<f64>,
    preds: Vec<f64>,
}

impl Tape {
    pub(crate) fn predictions(&self) -> &[f64] {
        &self.preds
    }
}

pub struct Model {
    cfg: ModelConfig,
    embed_r: Linear,
    embed_s: Linear,
    embed_a: Linear,
    embed_t: Array2<f64>,
    embed_t_grad: Array2<f64>,
    embed_ln: LayerNorm,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    head: Linear,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Model {
        assert!(cfg.dim % cfg.heads == 0, "head count must divide the model dim");
        assert!(cfg.dim > 0 && cfg.blocks > 0 && cfg.max_timesteps > 0);
        assert!((0.0..1.0).contains(&cfg.dropout));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let embed_r = Linear::new(1, d, &mut rng);
        let embed_s = Linear::new(STATE_DIM, d, &mut rng);
        let embed_a = Linear::new(1, d, &mut rng);
        let embed_t = Array2::from_shape_fn((cfg.max_timesteps, d), |_| normal(&mut rng, 0.02));
        let blocks = (0..cfg.blocks)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                qkv: Linear::new(d, 3 * d, &mut rng),
                proj: Linear::new(d, d, &mut rng),
                ln2: LayerNorm::new(d),
                fc1: Linear::new(d, 4 * d, &mut rng),
                fc2: Linear::new(4 * d, d, &mut rng),
            })
            .collect();
        Model {
            embed_ln: LayerNorm::new(d),
            ln_f: LayerNorm::new(d),
            head: Linear::new(d, 1, &mut rng),
            embed_t_grad: Array2::zeros((cfg.max_timesteps, d)),
            embed_r,
            embed_s,
            embed_a,
            embed_t,
            blocks,
            cfg,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(|_, value, _, _| n += value.len());
        n
    }

    /// One prediction per timestep. `a` may omit the final action (closed-loop
    /// decoding); everything earlier must be present.
    pub fn forward(&self, r: &[f64], s: &[[f64; STATE_DIM]], a: &[f64]) -> Vec<f64> {
        self.forward_tape(r, s, a, None).preds
    }

    pub(crate) fn forward_tape(
        &self,
        r: &[f64],
        s: &[[f64; STATE_DIM]],
        a: &[f64],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Tape {
        let t_len = r.len();
        assert_eq!(s.len(), t_len);
        assert!(t_len >= 1 && t_len <= self.cfg.max_timesteps, "sequence length {t_len} out of range");
        let a_len = a.len();
        assert!(a_len == t_len || a_len + 1 == t_len, "actions must cover all timesteps or all but the last");
        let d = self.cfg.dim;
        let seq_len = 2 * t_len + a_len;

        let r_mat = Array2::from_shape_fn((t_len, 1), |(i, _)| r[i]);
        let s_mat = Array2::from_shape_fn((t_len, STATE_DIM), |(i, j)| s[i][j]);
        let a_mat = Array2::from_shape_fn((a_len, 1), |(i, _)| a[i]);
        let er = self.embed_r.forward(&r_mat);
        let es = self.embed_s.forward(&s_mat);
        let ea = self.embed_a.forward(&a_mat);

        let mut seq = Array2::zeros((seq_len, d));
        for t in 0..t_len {
            let et = self.embed_t.row(t);
            seq.row_mut(3 * t).assign(&(&er.row(t) + &et));
            seq.row_mut(3 * t + 1).assign(&(&es.row(t) + &et));
            if t < a_len {
                seq.row_mut(3 * t + 2).assign(&(&ea.row(t) + &et));
            }
        }

        let (mut x, emb_ln_cache) = self.embed_ln.forward(&seq);
        let emb_mask = self.apply_dropout(&mut x, &mut dropout_rng);

        let mut block_tapes = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (ln1_out, ln1_cache) = block.ln1.forward(&x);
            let attn = self.attention(block, ln1_out);
            let mut attn_out = block.proj.forward(&attn.ctx);
            let attn_mask = self.apply_dropout(&mut attn_out, &mut dropout_rng);
            let x_mid = &x + &attn_out;
            let (ln2_out, ln2_cache) = block.ln2.forward(&x_mid);
            let h_pre = block.fc1.forward(&ln2_out);
            let h_act = h_pre.mapv(gelu);
            let mut ffn_out = block.fc2.forward(&h_act);
            let ffn_mask = self.apply_dropout(&mut ffn_out, &mut dropout_rng);
            let x_next = &x_mid + &ffn_out;
            block_tapes.push(BlockTape {
                ln1_cache,
                attn,
                attn_mask,
                ln2_cache,
                ln2_out,
                h_pre,
                h_act,
                ffn_mask,
            });
            x = x_next;
        }

        let (lnf_out, lnf_cache) = self.ln_f.forward(&x);
        let mut hs = Array2::zeros((t_len, d));
        for t in 0..t_len {
            hs.row_mut(t).assign(&lnf_out.row(3 * t + 1));
        }
        let z = self.head.forward(&hs);
        let preds: Vec<f64> = z.column(0).iter().map(|v| v.tanh()).collect();

        Tape {
            timesteps: t_len,
            actions_len: a_len,
            r_mat,
            s_mat,
            a_mat,
            emb_ln_cache,
            emb_mask,
            blocks: block_tapes,
            lnf_cache,
            hs,
            preds,
        }
    }

    fn apply_dropout(
        &self,
        x: &mut Array2<f64>,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Option<Array2<f64>> {
        let p = self.cfg.dropout;
        let rng = rng.as_deref_mut()?;
        if p == 0.0 {
            return None;
        }
        let keep = 1.0 - p;
        let mask = Array2::from_shape_fn(x.dim(), |_| {
            if rng.gen_bool(keep) {
                1.0 / keep
            } else {
                0.0
            }
        });
        *x *= &mask;
        Some(mask)
    }

    fn attention(&self, block: &Block, ln1_out: Array2<f64>) -> AttnTape {
        let d = self.cfg.dim;
        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qkv = block.qkv.forward(&ln1_out);
        let l = qkv.nrows();
        let mut ctx = Array2::zeros((l, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut scores = q.dot(&k.t());
            scores *= scale;
            for i in 0..l {
                for j in (i + 1)..l {
                    scores[[i, j]] = f64::NEG_INFINITY;
                }
            }
            for mut row in scores.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row /= sum;
            }
            ctx.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&scores.dot(&v));
            probs.push(scores);
        }
        AttnTape { ln1_out, qkv, probs, ctx }
    }

    fn attention_backward(&mut self, index: usize, tape: &AttnTape, dctx: &Array2<f64>) -> Array2<f64> {
        let d = self.cfg.dim;
        let heads = self.cfg.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let l = tape.qkv.nrows();
        let mut dqkv = Array2::zeros((l, 3 * d));
        for h in 0..heads {
            let q = tape.qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = tape.qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = tape.qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let p = &tape.probs[h];
            let dctx_h = dctx.slice(s![.., h * dh..(h + 1) * dh]);

            let dp = dctx_h.dot(&v.t());
            dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&p.t().dot(&dctx_h));

            // softmax backward, rows independent; masked entries are exact
            // zeros in p so they contribute nothing
            let inner = (&dp * p).sum_axis(Axis(1));
            let mut dscores = dp * p;
            for (mut row, (&i_sum, p_row)) in
                dscores.rows_mut().into_iter().zip(inner.iter().zip(p.rows()))
            {
                for (v, &pv) in row.iter_mut().zip(p_row.iter()) {
                    *v -= i_sum * pv;
                }
            }
            dscores *= scale;

            dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dscores.dot(&k));
            dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dscores.t().dot(&q));
        }
        self.blocks[index].qkv.backward(&tape.ln1_out, &dqkv)
    }

    /// Accumulates parameter gradients for one sequence. `dpred` is the loss
    /// gradient with respect to each timestep's prediction.
    pub(crate) fn backward(&mut self, tape: &Tape, dpred: &[f64]) {
        assert_eq!(dpred.len(), tape.timesteps);
        let d = self.cfg.dim;
        let t_len = tape.timesteps;
        let seq_len = 2 * t_len + tape.actions_len;

        let dz = Array2::from_shape_fn((t_len, 1), |(i, _)| {
            let y = tape.preds[i];
            dpred[i] * (1.0 - y * y)
        });
        let dhs = self.head.backward(&tape.hs, &dz);
        let mut dlnf = Array2::zeros((seq_len, d));
        for t in 0..t_len {
            dlnf.row_mut(3 * t + 1).assign(&dhs.row(t));
        }
        let mut dx = self.ln_f.backward(&tape.lnf_cache, &dlnf);

        for (i, block_tape) in tape.blocks.iter().enumerate().rev() {
            let mut dffn = dx.clone();
            if let Some(mask) = &block_tape.ffn_mask {
                dffn *= mask;
            }
            let dh_act = self.blocks[i].fc2.backward(&block_tape.h_act, &dffn);
            let dh_pre = &dh_act * &block_tape.h_pre.mapv(gelu_grad);
            let dln2 = self.blocks[i].fc1.backward(&block_tape.ln2_out, &dh_pre);
            dx += &self.blocks[i].ln2.backward(&block_tape.ln2_cache, &dln2);

            let mut dattn = dx.clone();
            if let Some(mask) = &block_tape.attn_mask {
                dattn *= mask;
            }
            let dctx = self.blocks[i].proj.backward(&block_tape.attn.ctx, &dattn);
            let dln1 = self.attention_backward(i, &block_tape.attn, &dctx);
            dx += &self.blocks[i].ln1.backward(&block_tape.ln1_cache, &dln1);
        }

        let mut dseq = dx;
        if let Some(mask) = &tape.emb_mask {
            dseq *= mask;
        }
        let dseq = self.embed_ln.backward(&tape.emb_ln_cache, &dseq);

        let mut der = Array2::zeros((t_len, d));
        let mut des = Array2::zeros((t_len, d));
        let mut dea = Array2::zeros((tape.actions_len, d));
        for t in 0..t_len {
            der.row_mut(t).assign(&dseq.row(3 * t));
            des.row_mut(t).assign(&dseq.row(3 * t + 1));
            let mut dt = &dseq.row(3 * t) + &dseq.row(3 * t + 1);
            if t < tape.actions_len {
                dea.row_mut(t).assign(&dseq.row(3 * t + 2));
                dt += &dseq.row(3 * t + 2);
            }
            let mut row = self.embed_t_grad.row_mut(t);
            row += &dt;
        }
        self.embed_r.backward(&tape.r_mat, &der);
        self.embed_s.backward(&tape.s_mat, &des);
        self.embed_a.backward(&tape.a_mat, &dea);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(|_, _, grad, _| grad.fill(0.0));
    }

    /// Visits every parameter in a stable order with its gradient buffer.
    /// Adam state, checkpoints and the gradient checker all key off this
    /// order and the names.
    pub(crate) fn visit_params(
        &mut self,
        mut f: impl FnMut(&str, &mut [f64], &mut [f64], &[usize]),
    ) {
        fn lin(name: &str, l: &mut Linear, f: &mut impl FnMut(&str, &mut [f64], &mut [f64], &[usize])) {
            let (rows, cols) = l.w.dim();
            f(
                &format!("{name}.w"),
                l.w.as_slice_mut().unwrap(),
                l.gw.as_slice_mut().unwrap(),
                &[rows, cols],
            );
            let n = l.b.len();
            f(
                &format!("{name}.b"),
                l.b.as_slice_mut().unwrap(),
                l.gb.as_slice_mut().unwrap(),
                &[n],
            );
        }
        fn ln(name: &str, l: &mut LayerNorm, f: &mut impl FnMut(&str, &mut [f64], &mut [f64], &[usize])) {
            let n = l.g.len();
            f(
                &format!("{name}.g"),
                l.g.as_slice_mut().unwrap(),
                l.gg.as_slice_mut().unwrap(),
                &[n],
            );
            f(
                &format!("{name}.b"),
                l.b.as_slice_mut().unwrap(),
                l.gb.as_slice_mut().unwrap(),
                &[n],
            );
        }

        lin("embed_r", &mut self.embed_r, &mut f);
        lin("embed_s", &mut self.embed_s, &mut f);
        lin("embed_a", &mut self.embed_a, &mut f);
        let (rows, cols) = self.embed_t.dim();
        f(
            "embed_t",
            self.embed_t.as_slice_mut().unwrap(),
            self.embed_t_grad.as_slice_mut().unwrap(),
            &[rows, cols],
        );
        ln("embed_ln", &mut self.embed_ln, &mut f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            ln(&format!("blocks.{i}.ln1"), &mut block.ln1, &mut f);
            lin(&format!("blocks.{i}.qkv"), &mut block.qkv, &mut f);
            lin(&format!("blocks.{i}.proj"), &mut block.proj, &mut f);
            ln(&format!("blocks.{i}.ln2"), &mut block.ln2, &mut f);
            lin(&format!("blocks.{i}.fc1"), &mut block.fc1, &mut f);
            lin(&format!("blocks.{i}.fc2"), &mut block.fc2, &mut f);
        }
        ln("ln_f", &mut self.ln_f, &mut f);
        lin("head", &mut self.head, &mut f);
    }
}
