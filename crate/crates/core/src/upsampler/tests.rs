use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_image(h: usize, w: usize, rng: &mut impl Rng) -> ImageGrid {
    let data = (0..3 * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    ImageGrid::new(h, w, data).unwrap()
}

/// Energy of one channel written directly from the objective: data term,
/// smoothness over every pixel's 4-neighbourhood, identity ridge.
fn oracle_energy(i: &ImageGrid, o: &ImageGrid, c: usize, beta: f64, eps_w: f64, ridge: f64, x: &[f64]) -> f64 {
    let (h, w) = i.dims();
    let color = |y: usize, x: usize| -> [f64; 3] { std::array::from_fn(|k| i.get(k, y, x) as f64) };
    let mut e = 0.0;
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            let (a, b) = (x[p], x[h * w + p]);
            let r = a * i.get(c, y, xx) as f64 + b - o.get(c, y, xx) as f64;
            e += r * r;
            e += ridge * ((a - 1.0).powi(2) + b * b);
            let nbrs = [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)];
            for (dy, dx) in nbrs {
                let (qy, qx) = (y as i64 + dy, xx as i64 + dx);
                if qy < 0 || qx < 0 || qy >= h as i64 || qx >= w as i64 {
                    continue;
                }
                let (qy, qx) = (qy as usize, qx as usize);
                let q = qy * w + qx;
                let (cp, cq) = (color(y, xx), color(qy, qx));
                let dist = (0..3).map(|k| (cp[k] - cq[k]).powi(2)).sum::<f64>().sqrt();
                let wt = 1.0 / (dist + eps_w);
                e += beta * wt * ((a - x[q]).powi(2) + (b - x[h * w + q]).powi(2));
            }
        }
    }
    e
}

/// Minimiser of the oracle energy: Hessian and gradient at zero recovered
/// by polarisation, then a dense LU solve. Layout `[a_0.., b_0..]`.
fn oracle_solve(i: &ImageGrid, o: &ImageGrid, c: usize, cfg: &UpsampleConfig) -> (Vec<f64>, DMatrix<f64>, DVector<f64>) {
    let n = 2 * i.height() * i.width();
    let e = |x: &[f64]| oracle_energy(i, o, c, cfg.beta, cfg.eps_w, cfg.eps_ridge, x);
    let unit = |js: &[usize]| {
        let mut v = vec![0.0; n];
        for &j in js {
            v[j] += 1.0;
        }
        v
    };
    let e0 = e(&vec![0.0; n]);
    let ei: Vec<f64> = (0..n).map(|j| e(&unit(&[j]))).collect();
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = e(&unit(&[a, b])) - ei[a] - ei[b] + e0;
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    let grad = DVector::from_fn(n, |j, _| ei[j] - e0 - 0.5 * hess[(j, j)]);
    let x = hess.clone().lu().solve(&(-&grad)).expect("oracle system solvable");
    (x.iter().copied().collect(), hess, grad)
}

fn field_channel(f: &TransformField, c: usize) -> Vec<f64> {
    f.a[c].iter().chain(&f.b[c]).copied().collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

#[test]
fn neighbor_weight_values() {
    assert!((neighbor_weight([0.3; 3], [0.3; 3], 0.01) - 100.0).abs() < 1e-9);
    assert!((neighbor_weight([0.99, 0.0, 0.0], [0.0; 3], 0.01) - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn neighbor_weight_symmetric_positive(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let w = neighbor_weight(a, b, 0.01);
        prop_assert!(w > 0.0 && w <= 100.0);
        prop_assert_eq!(w, neighbor_weight(b, a, 0.01));
    }
}

#[test]
fn cg_and_direct_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, beta) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let (i, o) = (random_image(8, 8, &mut rng), random_image(8, 8, &mut rng));
        for solver in [Solver::Cg, Solver::Dense] {
            let cfg = UpsampleConfig {
                beta,
                solver,
                ..UpsampleConfig::default()
            };
            let (field, reports) = solve_transform_report(&i, &o, &cfg).unwrap();
            for c in 0..3 {
                let (x, hess, grad) = oracle_solve(&i, &o, c, &cfg);
                let got = field_channel(&field, c);
                let err = rel_err(&got, &x);
                assert!(err < 1e-5, "case {k} {solver:?} channel {c}: {err:e}");
                // residual of the normal equations, measured on the oracle's matrix
                let r = &hess * DVector::from_vec(got) + &grad;
                let rel = r.norm() / grad.norm();
                assert!(rel <= cfg.cg_tol * 1.01, "residual {rel:e}");
                assert!(reports[c].relative_residual <= cfg.cg_tol);
            }
        }
    }
}

#[test]
fn energy_matches_oracle_and_is_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (i, o) = (random_image(6, 7, &mut rng), random_image(6, 7, &mut rng));
    let cfg = UpsampleConfig::default();
    let field = solve_transform(&i, &o, &cfg).unwrap();
    let e = transform_energy(&i, &o, &field, &cfg).unwrap();
    let e_id = transform_energy(&i, &o, &TransformField::identity(6, 7), &cfg).unwrap();
    for c in 0..3 {
        let x = field_channel(&field, c);
        let oracle = oracle_energy(&i, &o, c, cfg.beta, cfg.eps_w, cfg.eps_ridge, &x);
        assert!((e[c] - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        let (best, _, _) = oracle_solve(&i, &o, c, &cfg);
        let e_best = oracle_energy(&i, &o, c, cfg.beta, cfg.eps_w, cfg.eps_ridge, &best);
        assert!(e[c] <= e_best + 1e-8, "{} > {}", e[c], e_best);
        assert!(e[c] <= e_id[c]);
    }
}

#[test]
fn identity_target_gives_identity_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let i = random_image(12, 9, &mut rng);
    for solver in [Solver::Cg, Solver::Dense] {
        let cfg = UpsampleConfig {
            solver,
            ..UpsampleConfig::default()
        };
        let f = solve_transform(&i, &i, &cfg).unwrap();
        for c in 0..3 {
            assert!(f.a[c].iter().all(|a| (a - 1.0).abs() < 1e-6));
            assert!(f.b[c].iter().all(|b| b.abs() < 1e-6));
        }
    }
}

#[test]
fn halved_target_gives_half_scale() {
    let data: Vec<f32> = (0..3 * 64).map(|k| 0.3 + 0.6 * ((k * 7 % 11) as f32 / 11.0)).collect();
    let i = ImageGrid::new(8, 8, data).unwrap();
    let o = ImageGrid::new(8, 8, i.data().iter().map(|v| 0.5 * v).collect()).unwrap();
    let cfg = UpsampleConfig {
        beta: 100.0,
        ..UpsampleConfig::default()
    };
    let f = solve_transform(&i, &o, &cfg).unwrap();
    for c in 0..3 {
        let (x, _, _) = oracle_solve(&i, &o, c, &cfg);
        assert!(rel_err(&field_channel(&f, c), &x) < 1e-5);
        // the identity ridge biases the fit slightly toward a = 1
        assert!(f.a[c].iter().all(|a| (a - 0.5).abs() < 5e-3), "{:?}", f.a[c]);
        assert!(f.b[c].iter().all(|b| b.abs() < 5e-3));
    }
}

#[test]
fn uniform_images_give_constant_field() {
    let i = ImageGrid::filled(10, 10, 0.2);
    let o = ImageGrid::from_planes_f64(10, 10, &[vec![0.5; 100], vec![-0.1; 100], vec![0.9; 100]]).unwrap();
    let f = solve_transform(&i, &o, &UpsampleConfig::default()).unwrap();
    for c in 0..3 {
        for plane in [&f.a[c], &f.b[c]] {
            assert!(plane.iter().all(|v| (v - plane[0]).abs() < 1e-6));
        }
        assert!((f.a[c][0] * 0.2 + f.b[c][0] - o.plane(c)[0] as f64).abs() < 1e-3);
    }
}

#[test]
fn channels_are_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (i, o) = (random_image(8, 8, &mut rng), random_image(8, 8, &mut rng));
    let perm = [2, 0, 1];
    let permute = |img: &ImageGrid| {
        let planes: Vec<Vec<f64>> = perm.iter().map(|&c| img.plane_f64(c)).collect();
        ImageGrid::from_planes_f64(8, 8, &planes).unwrap()
    };
    let cfg = UpsampleConfig::default();
    let f = solve_transform(&i, &o, &cfg).unwrap();
    let g = solve_transform(&permute(&i), &permute(&o), &cfg).unwrap();
    for (k, &c) in perm.iter().enumerate() {
        assert!(rel_err(&g.a[k], &f.a[c]) < 1e-9);
        assert!(rel_err(&g.b[k], &f.b[c]).is_nan() || rel_err(&g.b[k], &f.b[c]) < 1e-6);
    }
}

#[test]
fn apply_transform_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let i = random_image(16, 12, &mut rng);
    assert_eq!(apply_transform(&i, &TransformField::identity(4, 3)).unwrap(), i);
    let half = apply_transform(&i, &TransformField::constant(4, 3, 0.0, 0.5)).unwrap();
    assert!(half.data().iter().all(|&v| v == 0.5));

    let mut f = TransformField::identity(16, 12);
    for c in 0..3 {
        for p in 0..16 * 12 {
            f.a[c][p] = rng.random_range(0.5..1.5);
            f.b[c][p] = rng.random_range(-0.2..0.2);
        }
    }
    let out = apply_transform(&i, &f).unwrap();
    for c in 0..3 {
        for p in 0..16 * 12 {
            let want = (f.a[c][p] * i.plane(c)[p] as f64 + f.b[c][p]).clamp(-1.0, 1.0);
            assert!((out.plane(c)[p] as f64 - want).abs() < 1e-6);
        }
    }
}

#[test]
fn apply_transform_is_affine_in_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let small = |rng: &mut ChaCha8Rng| {
        ImageGrid::new(8, 8, (0..192).map(|_| rng.random_range(-0.3f32..0.3)).collect()).unwrap()
    };
    let (x, y) = (small(&mut rng), small(&mut rng));
    let mut f = TransformField::identity(4, 4);
    for c in 0..3 {
        for p in 0..16 {
            f.a[c][p] = rng.random_range(0.5..1.5);
            f.b[c][p] = rng.random_range(-0.2..0.2);
        }
    }
    let alpha = 0.3f32;
    let mix = ImageGrid::new(
        8,
        8,
        x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect(),
    )
    .unwrap();
    let (tx, ty, tm) = (
        apply_transform(&x, &f).unwrap(),
        apply_transform(&y, &f).unwrap(),
        apply_transform(&mix, &f).unwrap(),
    );
    for k in 0..192 {
        let want = alpha * tx.data()[k] + (1.0 - alpha) * ty.data()[k];
        assert!((tm.data()[k] - want).abs() < 1e-5);
    }
}

#[test]
fn guided_upsample_identity_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let i = random_image(32, 24, &mut rng);
    let o = i.resize_area(8, 6);
    let out = guided_upsample(&i, &o, &UpsampleConfig::default()).unwrap();
    for (a, b) in out.data().iter().zip(i.data()) {
        assert!((a - b).abs() <= 1e-5);
    }
}

#[test]
fn guided_upsample_keeps_edges_under_recolouring() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 64;
    let mut data = vec![0.0f32; 3 * n * n];
    for c in 0..3 {
        for y in 0..n {
            for x in 0..n {
                let check = ((x / 6 + y / 6) % 2) as f32;
                data[(c * n + y) * n + x] = -0.6 + 0.8 * check + 0.1 * c as f32 + rng.random_range(-0.05..0.05);
            }
        }
    }
    let i = ImageGrid::new(n, n, data).unwrap();
    let low = i.resize_area(16, 16);
    let warm = [1.1f32, 0.9, 0.7];
    let o = ImageGrid::new(
        16,
        16,
        (0..3 * 256).map(|k| (low.data()[k] * warm[k / 256] + 0.1).clamp(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let out = guided_upsample(&i, &o, &UpsampleConfig::default()).unwrap();
    let naive = o.resize_bilinear(n, n);
    let gi = i.gradient_magnitude();
    let ours = crate::image::pearson(&out.gradient_magnitude(), &gi);
    let base = crate::image::pearson(&naive.gradient_magnitude(), &gi);
    assert!(ours > base, "{ours} <= {base}");
}

#[test]
fn cg_budget_exhaustion() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = UpsampleConfig {
        cg_max_iters: 1,
        ..UpsampleConfig::default()
    };
    let (i, o) = (random_image(64, 64, &mut rng), random_image(64, 64, &mut rng));
    assert!(matches!(
        solve_transform(&i, &o, &cfg),
        Err(Error::Nonconvergence { iterations: 1, .. })
    ));
    let (i, o) = (random_image(16, 16, &mut rng), random_image(16, 16, &mut rng));
    let (_, reports) = solve_transform_report(&i, &o, &cfg).unwrap();
    assert!(reports.iter().all(|r| r.relative_residual < 1e-9));
}

#[test]
fn shape_and_config_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (a, b) = (random_image(8, 8, &mut rng), random_image(8, 6, &mut rng));
    let cfg = UpsampleConfig::default();
    assert!(matches!(solve_transform(&a, &b, &cfg), Err(Error::Shape(_))));
    assert!(matches!(guided_upsample(&b, &a, &cfg), Err(Error::Shape(_))));
    let bad = UpsampleConfig {
        beta: -1.0,
        ..cfg
    };
    assert!(matches!(solve_transform(&a, &a, &bad), Err(Error::Config(_))));
    let bad = UpsampleConfig { cg_tol: 0.0, ..cfg };
    assert!(bad.validate().is_err());
    assert!(serde_json::from_str::<UpsampleConfig>(r#"{"gamma": 1}"#).is_err());
    let parsed: UpsampleConfig = serde_json::from_str(r#"{"beta": 2.0, "solver": "dense"}"#).unwrap();
    assert_eq!((parsed.beta, parsed.solver), (2.0, Solver::Dense));
}

#[test]
fn field_dump_is_pfm() {
    let dir = tempfile::tempdir().unwrap();
    let f = TransformField::constant(3, 5, 0.5, -0.25);
    f.write_pfm(dir.path()).unwrap();
    let bytes = std::fs::read(dir.path().join("b.pfm")).unwrap();
    let header = b"PF\n5 3\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 3 * 5 * 3 * 4);
    let v = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
    assert_eq!(v, -0.25);
}
