//! Encoder and pointer decoder expressed as tape operations.

use super::features::Features;
use super::params::{AttnIdx, BranchIdx, DualIdx, FfnIdx, ModelParams, VIEWS};
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const RMS_EPS: f64 = 1e-6;

/// Final encoder streams, all on the tape that produced them.
#[derive(Debug, Clone, Copy)]
pub struct Encoding {
    /// `1 + V + N` rows aligned with action indices.
    pub h_g: Var,
    /// Depot then customers.
    pub h_n: Var,
    /// Depot then vehicle types.
    pub h_v: Var,
    /// Depot then vehicle types, refined against the node stream.
    pub h_vd: Var,
    /// Prompt then vehicle embeddings.
    pub c: Var,
}

/// Per-view keys and values, computed once per instance.
#[derive(Debug, Clone, Copy)]
pub struct DecoderCache {
    pub keys: [Var; 4],
    pub values: [Var; 4],
    pub h_g: Var,
}

/// Borrowed parameters bound as leaves of one tape.
pub struct Bound<'m> {
    pub params: &'m ModelParams,
    pub vars: Vec<Var>,
}

impl<'m> Bound<'m> {
    pub fn new(params: &'m ModelParams, tape: &mut Tape<'m>) -> Self {
        let vars = params.bind(tape);
        Self { params, vars }
    }

    fn v(&self, idx: usize) -> Var {
        self.vars[idx]
    }

    fn mha(&self, tape: &mut Tape<'m>, a: &AttnIdx, xq: Var, xkv: Var) -> Var {
        let q = tape.matmul(xq, self.v(a.wq));
        let k = tape.matmul(xkv, self.v(a.wk));
        let v = tape.matmul(xkv, self.v(a.wv));
        let o = tape.attention(q, k, v, self.params.config().n_head);
        tape.matmul(o, self.v(a.wo))
    }

    fn swiglu(&self, tape: &mut Tape<'m>, f: &FfnIdx, x: Var) -> Var {
        let a = tape.matmul(x, self.v(f.w1));
        let a = tape.silu(a);
        let b = tape.matmul(x, self.v(f.w2));
        let h = tape.mul(a, b);
        tape.matmul(h, self.v(f.w3))
    }

    fn branch(&self, tape: &mut Tape<'m>, b: &BranchIdx, xq: Var, xkv: Var) -> Var {
        let a = self.mha(tape, &b.attn, xq, xkv);
        let h = tape.add(xq, a);
        let h = tape.layer_norm(h, self.v(b.ln1.gain), self.v(b.ln1.bias), LN_EPS);
        let f = self.swiglu(tape, &b.ffn, h);
        let o = tape.add(h, f);
        tape.layer_norm(o, self.v(b.ln2.gain), self.v(b.ln2.bias), LN_EPS)
    }

    /// Self-attention over the stacked global and prompt streams. Each row
    /// attends over every row of both, which is the same as running the two
    /// query streams separately against the concatenated memory.
    fn dual(&self, tape: &mut Tape<'m>, b: &DualIdx, x: Var) -> Var {
        let a = self.mha(tape, &b.attn, x, x);
        let h = tape.add(x, a);
        let h = tape.rms_norm(h, self.v(b.rms1), RMS_EPS);
        let f = self.swiglu(tape, &b.ffn, h);
        let o = tape.add(h, f);
        tape.rms_norm(o, self.v(b.rms2), RMS_EPS)
    }

    /// Prompt embedding `LN(v_p W_a + b_a) W_b + b_b`.
    pub fn embed_prompt(&self, tape: &mut Tape<'m>, prompt: Var) -> Var {
        let l = &self.params.layout;
        let h = tape.matmul(prompt, self.v(l.w_a));
        let h = tape.add_row(h, self.v(l.b_a));
        let h = tape.layer_norm(h, self.v(l.prompt_ln.gain), self.v(l.prompt_ln.bias), LN_EPS);
        let h = tape.matmul(h, self.v(l.w_b));
        tape.add_row(h, self.v(l.b_b))
    }

    pub fn encode(&self, tape: &mut Tape<'m>, feats: &Features) -> Result<Encoding> {
        let l = &self.params.layout;
        let n_types = feats.vehicles.rows();
        let prompt = tape.constant(feats.prompt.clone());
        let depot = tape.constant(feats.depot.clone());
        let customers = tape.constant(feats.customers.clone());
        let vehicles = tape.constant(feats.vehicles.clone());
        let depot_vehicle = {
            let rows: Vec<Vec<f64>> = (0..n_types)
                .map(|k| [feats.depot.row(0), feats.vehicles.row(k)].concat())
                .collect();
            tape.constant(Matrix::from_rows(&rows))
        };

        let p0 = self.embed_prompt(tape, prompt);
        let e_d = tape.matmul(depot, self.v(l.w_d));
        let e_c = tape.matmul(customers, self.v(l.w_c));
        let e_v = tape.matmul(vehicles, self.v(l.w_v));
        let e_vd = tape.matmul(depot_vehicle, self.v(l.w_vd));

        let mut h_n = tape.concat_rows(&[e_d, e_c]);
        let mut h_v = tape.concat_rows(&[e_d, e_vd]);
        let mut h_vd = h_v;
        let mut h_g = tape.concat_rows(&[e_d, e_vd, e_c]);
        let mut c = tape.concat_rows(&[p0, e_v]);
        let g_rows = tape.value(h_g).rows();
        let c_rows = tape.value(c).rows();

        for (li, layer) in l.layers.iter().enumerate() {
            let n_next = self.branch(tape, &layer.node, h_n, h_n);
            let v_next = self.branch(tape, &layer.vehicle, h_v, h_v);
            let vd_next = self.branch(tape, &layer.cross, h_vd, h_n);
            let stacked = tape.concat_rows(&[h_g, c]);
            let dual = self.dual(tape, &layer.dual, stacked);
            h_g = tape.slice_rows(dual, 0, g_rows);
            c = tape.slice_rows(dual, g_rows, c_rows);
            h_n = n_next;
            h_v = v_next;
            h_vd = vd_next;
            for v in [h_n, h_v, h_vd, dual] {
                if !tape.value(v).is_finite() {
                    return Err(Error::Numeric(format!("non-finite activation in encoder layer {li}")));
                }
            }
        }
        for v in [h_n, h_v, h_vd, h_g, c] {
            if !tape.value(v).is_finite() {
                return Err(Error::Numeric("non-finite encoder embedding".into()));
            }
        }
        Ok(Encoding { h_g, h_n, h_v, h_vd, c })
    }

    pub fn decoder_cache(&self, tape: &mut Tape<'m>, enc: &Encoding) -> DecoderCache {
        let l = &self.params.layout;
        let views = [enc.h_g, enc.h_n, enc.h_v, enc.h_vd];
        let mut keys = views;
        let mut values = views;
        for i in 0..VIEWS.len() {
            keys[i] = tape.matmul(views[i], self.v(l.view_k[i]));
            values[i] = tape.matmul(views[i], self.v(l.view_v[i]));
        }
        DecoderCache {
            keys,
            values,
            h_g: enc.h_g,
        }
    }

    /// Pointer scores for a batch of decisions: `rows[t]` is the current-token
    /// row of `h_g` and row `t` of `status` its dynamic context. Returns a
    /// `T × (1+V+N)` matrix of unmasked (clipped) scores.
    pub fn decode(&self, tape: &mut Tape<'m>, cache: &DecoderCache, rows: &[usize], status: Matrix) -> Var {
        let l = &self.params.layout;
        let cur = tape.gather_rows(cache.h_g, rows);
        let st = tape.constant(status);
        let ctx = tape.concat_cols(&[cur, st]);
        let q = tape.matmul(ctx, self.v(l.w_q));
        let heads = self.params.config().n_head;
        let mut glimpse = tape.attention(q, cache.keys[0], cache.values[0], heads);
        for i in 1..VIEWS.len() {
            let g = tape.attention(q, cache.keys[i], cache.values[i], heads);
            glimpse = tape.add(glimpse, g);
        }
        let m = tape.matmul(glimpse, self.v(l.w_cmb));
        let u = tape.matmul_t(m, cache.h_g);
        match self.params.config().logit_clip {
            Some(c) => tape.soft_clip(u, c),
            None => u,
        }
    }
}
