use rand::Rng;

use super::config::{NetConfig, VGG_STAGES};
use super::layers::Conv;
use crate::autograd::{Binding, Graph, ParamStore, Var};

/// Time-conditioned generator: VGG-style encoder, residual blocks fed with
/// broadcast `z` and time channels, upsampling decoder with a tanh output.
#[derive(Clone, Debug)]
pub struct Generator {
    pub store: ParamStore,
    encoder: Vec<Vec<Conv>>,
    blocks: Vec<(Conv, Conv)>,
    decoder: Vec<Conv>,
    out: Conv,
    d_z: usize,
    time_channels: usize,
}

impl Generator {
    pub fn new(cfg: &NetConfig, use_latent: bool, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let d_z = if use_latent { cfg.d_z } else { 0 };
        let time_channels = cfg.time_encoding.channels();

        let mut encoder = Vec::new();
        let mut cin = 3;
        for (s, &(convs, mult)) in VGG_STAGES[..cfg.encoder_pools].iter().enumerate() {
            let cout = cfg.width * mult;
            let stage = (0..convs)
                .map(|k| {
                    let c = Conv::same(&mut store, &format!("encoder.stage{s}.conv{k}"), cin, cout, rng);
                    cin = cout;
                    c
                })
                .collect();
            encoder.push(stage);
        }
        let feat = cin;
        let blocks = (0..cfg.res_blocks)
            .map(|r| {
                (
                    Conv::same(&mut store, &format!("res{r}.conv0"), feat + d_z + time_channels, feat, rng),
                    Conv::same(&mut store, &format!("res{r}.conv1"), feat, feat, rng),
                )
            })
            .collect();
        let mut decoder = Vec::new();
        for s in (0..cfg.encoder_pools).rev() {
            let cout = cfg.width * VGG_STAGES[s].1;
            decoder.push(Conv::same(&mut store, &format!("decoder.up{s}"), cin, cout, rng));
            cin = cout;
        }
        let out = Conv::same(&mut store, "decoder.out", cin, 3, rng);
        Self {
            store,
            encoder,
            blocks,
            decoder,
            out,
            d_z,
            time_channels,
        }
    }

    /// Latent length; 0 when the generator takes no latent.
    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn time_channels(&self) -> usize {
        self.time_channels
    }

    pub fn stride(&self) -> usize {
        1 << self.encoder.len()
    }

    /// `x [N,3,H,W]`, `t [N,T]`, `z [N,d_z]` → `[N,3,H,W]` in `[-1, 1]`.
    pub fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var, t: Var, z: Option<Var>) -> Var {
        let mut h = x;
        for stage in &self.encoder {
            for conv in stage {
                h = conv.forward(g, p, h);
                h = g.relu(h);
            }
            h = g.max_pool2(h);
        }
        let (fh, fw) = {
            let s = g.value(h).shape();
            (s[2], s[3])
        };
        let mut cond = Vec::with_capacity(2);
        if let Some(z) = z.filter(|_| self.d_z > 0) {
            cond.push(g.broadcast_spatial(z, fh, fw));
        }
        cond.push(g.broadcast_spatial(t, fh, fw));
        for (c0, c1) in &self.blocks {
            let mut parts = vec![h];
            parts.extend_from_slice(&cond);
            let inp = g.concat(&parts);
            let r = c0.forward(g, p, inp);
            let r = g.relu(r);
            let r = c1.forward(g, p, r);
            h = g.add(h, r);
        }
        for conv in &self.decoder {
            h = g.upsample2(h);
            h = conv.forward(g, p, h);
            h = g.relu(h);
        }
        let o = self.out.forward(g, p, h);
        g.tanh(o)
    }
}
