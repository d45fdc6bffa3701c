use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::features::{CUSTOMER_FEATURES, DEPOT_FEATURES, PROMPT_FEATURES, VEHICLE_FEATURES};
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Init {
    Uniform,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnIdx {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfnIdx {
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LnIdx {
    pub gain: usize,
    pub bias: usize,
}

/// Attention + FFN block with LayerNorm (self- and cross-attention branches).
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchIdx {
    pub attn: AttnIdx,
    pub ln1: LnIdx,
    pub ffn: FfnIdx,
    pub ln2: LnIdx,
}

/// Global/prompt block with RMSNorm, shared by both of its query streams.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DualIdx {
    pub attn: AttnIdx,
    pub rms1: usize,
    pub ffn: FfnIdx,
    pub rms2: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerIdx {
    pub node: BranchIdx,
    pub vehicle: BranchIdx,
    pub cross: BranchIdx,
    pub dual: DualIdx,
}

/// Decoder views in the order global, node, vehicle, vehicle-node.
pub const VIEWS: [&str; 4] = ["g", "n", "v", "vd"];

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub w_a: usize,
    pub b_a: usize,
    pub prompt_ln: LnIdx,
    pub w_b: usize,
    pub b_b: usize,
    pub w_d: usize,
    pub w_c: usize,
    pub w_v: usize,
    pub w_vd: usize,
    pub layers: Vec<LayerIdx>,
    pub view_k: [usize; 4],
    pub view_v: [usize; 4],
    pub w_q: usize,
    pub w_cmb: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Matrix,
}

struct Builder<'a> {
    tensors: &'a mut Vec<Tensor>,
    inits: &'a mut Vec<Init>,
}

impl Builder<'_> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.tensors.push(Tensor {
            name,
            value: Matrix::zeros(rows, cols),
        });
        self.inits.push(init);
        self.tensors.len() - 1
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIdx {
        LnIdx {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        AttnIdx {
            wq: self.add(format!("{prefix}.wq"), d, d, Init::Uniform),
            wk: self.add(format!("{prefix}.wk"), d, d, Init::Uniform),
            wv: self.add(format!("{prefix}.wv"), d, d, Init::Uniform),
            wo: self.add(format!("{prefix}.wo"), d, d, Init::Uniform),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIdx {
        FfnIdx {
            w1: self.add(format!("{prefix}.w1"), d, f, Init::Uniform),
            w2: self.add(format!("{prefix}.w2"), d, f, Init::Uniform),
            w3: self.add(format!("{prefix}.w3"), f, d, Init::Uniform),
        }
    }

    fn branch(&mut self, prefix: &str, d: usize, f: usize) -> BranchIdx {
        BranchIdx {
            attn: self.attn(&format!("{prefix}.attn"), d),
            ln1: self.ln(&format!("{prefix}.ln1"), d),
            ffn: self.ffn(&format!("{prefix}.ffn"), d, f),
            ln2: self.ln(&format!("{prefix}.ln2"), d),
        }
    }
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<Tensor>, Vec<Init>) {
    let (d, f) = (cfg.d_h, cfg.d_ff);
    let mut tensors = Vec::new();
    let mut inits = Vec::new();
    let mut b = Builder {
        tensors: &mut tensors,
        inits: &mut inits,
    };
    let w_a = b.add("prompt.w_a".into(), PROMPT_FEATURES, d, Init::Uniform);
    let b_a = b.add("prompt.b_a".into(), 1, d, Init::Zeros);
    let prompt_ln = b.ln("prompt.ln", d);
    let w_b = b.add("prompt.w_b".into(), d, d, Init::Uniform);
    let b_b = b.add("prompt.b_b".into(), 1, d, Init::Zeros);
    let w_d = b.add("embed.w_d".into(), DEPOT_FEATURES, d, Init::Uniform);
    let w_c = b.add("embed.w_c".into(), CUSTOMER_FEATURES, d, Init::Uniform);
    let w_v = b.add("embed.w_v".into(), VEHICLE_FEATURES, d, Init::Uniform);
    let w_vd = b.add("embed.w_vd".into(), DEPOT_FEATURES + VEHICLE_FEATURES, d, Init::Uniform);
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let p = format!("layer{l}");
            LayerIdx {
                node: b.branch(&format!("{p}.node"), d, f),
                vehicle: b.branch(&format!("{p}.vehicle"), d, f),
                cross: b.branch(&format!("{p}.cross"), d, f),
                dual: DualIdx {
                    attn: b.attn(&format!("{p}.dual.attn"), d),
                    rms1: b.add(format!("{p}.dual.rms1.gain"), 1, d, Init::Ones),
                    ffn: b.ffn(&format!("{p}.dual.ffn"), d, f),
                    rms2: b.add(format!("{p}.dual.rms2.gain"), 1, d, Init::Ones),
                },
            }
        })
        .collect();
    let view_k = VIEWS.map(|v| b.add(format!("decoder.{v}.wk"), d, d, Init::Uniform));
    let view_v = VIEWS.map(|v| b.add(format!("decoder.{v}.wv"), d, d, Init::Uniform));
    let w_q = b.add("decoder.w_q".into(), d + cfg.status_width(), d, Init::Uniform);
    let w_cmb = b.add("decoder.w_cmb".into(), d, d, Init::Uniform);
    let layout = Layout {
        w_a,
        b_a,
        prompt_ln,
        w_b,
        b_b,
        w_d,
        w_c,
        w_v,
        w_vd,
        layers,
        view_k,
        view_v,
        w_q,
        w_cmb,
    };
    (layout, tensors, inits)
}

/// All trainable tensors, in a fixed order determined by the configuration.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    pub(crate) layout: Layout,
    tensors: Vec<Tensor>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.tensors == other.tensors
    }
}

impl ModelParams {
    /// Projections uniform in `±1/√d_h`, norm gains one, biases zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.check()?;
        let (layout, mut tensors, inits) = build_layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let bound = 1.0 / (config.d_h as f64).sqrt();
        for (t, init) in tensors.iter_mut().zip(inits) {
            match init {
                Init::Uniform => {
                    for v in t.value.data_mut() {
                        *v = rng.gen_range(-bound..bound);
                    }
                }
                Init::Zeros => {}
                Init::Ones => t.value.data_mut().fill(1.0),
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            tensors,
        })
    }

    /// Rebuilds parameters from named tensors, checking names and shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.check()?;
        let (layout, expected, _) = build_layout(config);
        if expected.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (e, t) in expected.iter().zip(&tensors) {
            if e.name != t.name || e.value.shape() != t.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    t.name,
                    t.value.shape(),
                    e.name,
                    e.value.shape()
                )));
            }
            if !t.value.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{}` has non-finite entries", t.name)));
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data().len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors.iter_mut().find(|t| t.name == name).map(|t| &mut t.value)
    }

    /// Leaves for every tensor, in storage order.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(&t.value)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.is_finite())
    }
}
