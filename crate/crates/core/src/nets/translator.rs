use rand::Rng;

use super::config::NetConfig;
use super::layers::Conv;
use crate::autograd::{Binding, Graph, ParamStore, Var};

/// U-Net mapping unlabeled-domain images into the labeled domain.
#[derive(Clone, Debug)]
pub struct Translator {
    pub store: ParamStore,
    inc: Conv,
    down: Vec<Conv>,
    up: Vec<Conv>,
    out: Conv,
}

impl Translator {
    pub fn new(cfg: &NetConfig, rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let c = cfg.translator_width;
        let inc = Conv::same(&mut store, "in", 3, c, rng);
        let down = (0..cfg.unet_depth)
            .map(|d| Conv::same(&mut store, &format!("down{d}"), c << d, c << (d + 1), rng))
            .collect();
        let up = (0..cfg.unet_depth)
            .rev()
            .map(|d| {
                // upsampled features plus the skip from the same level
                Conv::same(&mut store, &format!("up{d}"), (c << (d + 1)) + (c << d), c << d, rng)
            })
            .collect();
        let out = Conv::same(&mut store, "out", c, 3, rng);
        Self {
            store,
            inc,
            down,
            up,
            out,
        }
    }

    pub fn stride(&self) -> usize {
        1 << self.down.len()
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        let h = self.inc.forward(g, p, x);
        let mut h = g.relu(h);
        let mut skips = Vec::with_capacity(self.down.len());
        for conv in &self.down {
            skips.push(h);
            h = g.max_pool2(h);
            h = conv.forward(g, p, h);
            h = g.relu(h);
        }
        for conv in &self.up {
            let skip = skips.pop().expect("one skip per level");
            h = g.upsample2(h);
            h = g.concat(&[h, skip]);
            h = conv.forward(g, p, h);
            h = g.relu(h);
        }
        let o = self.out.forward(g, p, h);
        g.tanh(o)
    }
}
