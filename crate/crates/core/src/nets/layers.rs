use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Binding, Graph, ParamId, ParamStore, Tensor, Var};

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| normal.sample(rng) as f32).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.register(
            format!("{name}.weight"),
            he_normal(&[cout, cin, kernel, kernel], cin * kernel * kernel, rng),
        );
        let b = store.register(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self { w, b, stride, pad }
    }

    /// 3×3, stride 1, same padding.
    pub fn same(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new(store, name, cin, cout, 3, 1, 1, rng)
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        let w = p.var(g, self.w);
        let b = p.var(g, self.b);
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fin: usize,
        fout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.register(format!("{name}.weight"), he_normal(&[fout, fin], fin, rng));
        let b = store.register(format!("{name}.bias"), Tensor::zeros(&[fout]));
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binding, x: Var) -> Var {
        let w = p.var(g, self.w);
        let b = p.var(g, self.b);
        g.linear(x, w, b)
    }
}
