use rand::Rng;

use super::config::NetConfig;
use super::layers::{Conv, Dense};
use crate::autograd::{Binding, Graph, ParamStore, Var};

const SLOPE: f32 = 0.2;

/// Stride-2 4×4 convolutions with leaky ReLU, then a global average pool.
#[derive(Clone, Debug)]
struct StridedEncoder {
    convs: Vec<Conv>,
    features: usize,
}

impl StridedEncoder {
    fn new(store: &mut ParamStore, prefix: &str, cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        let mut cin = 3;
        let convs = (0..cfg.disc_layers)
            .map(|l| {
                let cout = cfg.disc_width << l.min(3);
                let c = Conv::new(store, &format!("{prefix}.conv{l}"), cin, cout, 4, 2, 1, rng);
                cin = cout;
                c
            })
            .collect();
        Self {
            convs,
            features: cin,
        }
    }

    fn min_side(&self) -> usize {
        1 << self.convs.len()
    }

    fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(g, p, h);
            h = g.leaky_relu(h, SLOPE);
        }
        g.global_avg_pool(h)
    }
}

/// Two-headed set discriminator over a shared image encoder.
///
/// The unconditional head scores each image. The conditional head embeds
/// every `(image, time)` pair with a small MLP, max-pools the embeddings over
/// the set and scores the pooled vector, so the set score ignores order.
#[derive(Clone, Debug)]
pub struct SetDiscriminator {
    pub store: ParamStore,
    encoder: StridedEncoder,
    uncond: Dense,
    cond: Vec<Dense>,
    cond_out: Dense,
}

impl SetDiscriminator {
    pub fn new(cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let encoder = StridedEncoder::new(&mut store, "encoder", cfg, rng);
        let f = encoder.features;
        let uncond = Dense::new(&mut store, "uncond.out", f, 1, rng);
        let mut fin = f + cfg.time_encoding.channels();
        let cond = (0..cfg.cond_layers)
            .map(|l| {
                let d = Dense::new(&mut store, &format!("cond.fc{l}"), fin, cfg.cond_hidden, rng);
                fin = cfg.cond_hidden;
                d
            })
            .collect();
        let cond_out = Dense::new(&mut store, "cond.out", fin, 1, rng);
        Self {
            store,
            encoder,
            uncond,
            cond,
            cond_out,
        }
    }

    /// Smallest image side the encoder accepts.
    pub fn min_side(&self) -> usize {
        self.encoder.min_side()
    }

    /// Shared image features `[N, F]`.
    pub fn features(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        self.encoder.forward(g, p, x)
    }

    /// Per-image realism scores `[N, 1]` from encoder features.
    pub fn uncond_head(&self, g: &mut Graph, p: &mut Binding, feats: Var) -> Var {
        let s = self.uncond.forward(g, p, feats);
        g.sigmoid(s)
    }

    /// Set scores `[N / set_size, 1]`; rows of `feats` and `t` are grouped
    /// into consecutive sets of `set_size`.
    pub fn cond_head(
        &self,
        g: &mut Graph,
        p: &mut Binding,
        feats: Var,
        t: Var,
        set_size: usize,
    ) -> Var {
        let mut h = g.concat(&[feats, t]);
        for fc in &self.cond {
            h = fc.forward(g, p, h);
            h = g.leaky_relu(h, SLOPE);
        }
        let pooled = g.set_max(h, set_size);
        let s = self.cond_out.forward(g, p, pooled);
        g.sigmoid(s)
    }
}

/// DCGAN-style image classifier used on the unlabeled-video side.
#[derive(Clone, Debug)]
pub struct PlainDiscriminator {
    pub store: ParamStore,
    encoder: StridedEncoder,
    out: Dense,
}

impl PlainDiscriminator {
    pub fn new(cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let encoder = StridedEncoder::new(&mut store, "encoder", cfg, rng);
        let out = Dense::new(&mut store, "out", encoder.features, 1, rng);
        Self {
            store,
            encoder,
            out,
        }
    }

    pub fn min_side(&self) -> usize {
        self.encoder.min_side()
    }

    /// Scores `[N, 1]`.
    pub fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        let f = self.encoder.forward(g, p, x);
        let s = self.out.forward(g, p, f);
        g.sigmoid(s)
    }
}
