use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Compare backprop against central differences for every leaf entry.
/// Returns the norm-wise relative error.
fn fd_check(leaves: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, &vars);
        g.scalar_value(loss) as f64
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss);

    let h = 5e-3f32;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads
            .get(vars[li])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(leaf.shape()));
        for k in 0..leaf.len() {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[k] += h;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[k] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h as f64);
            let an = analytic.data()[k] as f64;
            num += (fd - an).powi(2);
            den += an.powi(2);
        }
    }
    (num / den.max(1e-30)).sqrt()
}

#[test]
fn conv_instance_norm_and_pooling_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let leaves = vec![
        random_tensor(&mut rng, &[2, 2, 6, 6], 1.0),
        random_tensor(&mut rng, &[3, 2, 3, 3], 0.5),
        random_tensor(&mut rng, &[3], 0.1),
        random_tensor(&mut rng, &[2, 3, 3, 3], 0.5),
        random_tensor(&mut rng, &[2], 0.1),
    ];
    let err = fd_check(&leaves, |g, v| {
        let h = g.conv2d(v[0], v[1], v[2], 1, 1);
        let h = g.instance_norm(h);
        let h = g.tanh(h);
        let h = g.max_pool2(h);
        let h = g.upsample2(h);
        let h = g.conv2d(h, v[3], v[4], 2, 1);
        let h = g.sigmoid(h);
        g.mean(h)
    });
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn linear_concat_broadcast_and_set_max_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let leaves = vec![
        random_tensor(&mut rng, &[4, 3], 1.0),
        random_tensor(&mut rng, &[4, 2], 1.0),
        random_tensor(&mut rng, &[5, 5], 0.5),
        random_tensor(&mut rng, &[5], 0.1),
        random_tensor(&mut rng, &[1, 5], 0.5),
        random_tensor(&mut rng, &[1], 0.1),
        random_tensor(&mut rng, &[2, 1, 2, 2], 1.0),
    ];
    let err = fd_check(&leaves, |g, v| {
        let x = g.concat(&[v[0], v[1]]);
        let h = g.linear(x, v[2], v[3]);
        let h = g.leaky_relu(h, 0.2);
        let pooled = g.set_max(h, 2);
        let s = g.linear(pooled, v[4], v[5]);
        let s = g.sigmoid(s);
        let s = g.clamp(s, 1e-7, 1.0 - 1e-7);
        let s = g.log(s);
        let a = g.mean(s);
        let maps = g.broadcast_spatial(v[1], 2, 2);
        let maps = g.reshape(maps, &[4, 2, 2, 2]);
        let pooled_maps = g.global_avg_pool(maps);
        let r = g.reshape(pooled_maps, &[8]);
        let r = g.affine(r, 0.5, 0.1);
        let r = g.tanh(r);
        let b = g.mean(r);
        let spatial = g.global_avg_pool(v[6]);
        let spatial = g.tanh(spatial);
        let c = g.mean(spatial);
        let ab = g.add(a, b);
        g.sub(ab, c)
    });
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn l1_gradient_matches_sign() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::from_vec(&[4], vec![0.5, -0.5, 0.2, -0.1]).unwrap(), true);
    let b = g.input(Tensor::zeros(&[4]));
    let d = g.sub(a, b);
    let d = g.abs(d);
    let l = g.mean(d);
    let grads = g.backward(l);
    assert_eq!(grads.get(a).unwrap().data(), &[0.25, -0.25, 0.25, -0.25]);
}

#[test]
fn stop_gradient_blocks_flow() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap(), true);
    let t = g.tanh(a);
    let cut = g.stop_gradient(t);
    let l = g.mean(cut);
    let grads = g.backward(l);
    assert!(grads.get(a).is_none());
}

#[test]
fn conv_results_do_not_depend_on_batch_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, &[3, 2, 8, 8], 1.0);
    let w = random_tensor(&mut rng, &[4, 2, 3, 3], 1.0);
    let b = random_tensor(&mut rng, &[4], 1.0);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
    let full = g.conv2d(xv, wv, bv, 1, 1);
    let single = Tensor::from_vec(&[1, 2, 8, 8], x.row(2).to_vec()).unwrap();
    let sv = g.input(single);
    let one = g.conv2d(sv, wv, bv, 1, 1);
    assert_eq!(g.value(full).row(2), g.value(one).row(0));
}
