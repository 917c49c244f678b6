use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::batch::{prepare_labeled, prepare_unlabeled, times_tensor, LabeledBatch, UnlabeledBatch};
use super::config::TrainConfig;
use super::metrics::MetricsRecord;
use crate::autograd::{Adam, AdamConfig, Binding, Graph, Tensor, Var};
use crate::dataset::{FrameSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::losses::{graph as L, total_objective, LossReport};
use crate::nets::{Mode, ModelBundle};
use crate::time::TimeOfDay;

/// Networks plus one Adam state per network.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub bundle: ModelBundle,
    pub optimizers: BTreeMap<String, Adam>,
    /// Iterations attempted so far, including skipped ones.
    pub iteration: u64,
}

impl TrainState {
    pub fn new(bundle: ModelBundle, adam: AdamConfig) -> Self {
        let optimizers = bundle
            .stores()
            .into_iter()
            .map(|(n, s)| (n.to_string(), Adam::new(adam, s)))
            .collect();
        Self {
            bundle,
            optimizers,
            iteration: 0,
        }
    }
}

/// Points inside a step at which an observer sees the networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminators,
    Generator,
    Translator,
}

pub type Observer<'o> = &'o mut dyn FnMut(Phase, &ModelBundle);

fn digest(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.row(0).iter().flat_map(|v| v.to_le_bytes()).collect();
    Sha256::digest(&bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Scalars<'g> {
    g: &'g Graph,
    iteration: u64,
}

impl Scalars<'_> {
    fn get(&self, name: &str, v: Var) -> Result<f64> {
        let x = self.g.scalar_value(v) as f64;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonfiniteLoss {
                term: name.to_string(),
                value: x,
                iteration: self.iteration,
            })
        }
    }
}

fn expect_mode(state: &TrainState, mode: Mode) -> Result<()> {
    if state.bundle.mode != mode {
        return Err(Error::ModeMismatch(format!(
            "bundle is {:?}, step needs {mode:?}",
            state.bundle.mode
        )));
    }
    Ok(())
}

/// Runs `f`; a non-finite loss rolls every network and optimizer back to
/// where they were before the step. The iteration counter always advances.
fn guarded(
    state: &mut TrainState,
    f: impl FnOnce(&mut TrainState) -> Result<MetricsRecord>,
) -> Result<MetricsRecord> {
    let start = Instant::now();
    let snapshot = (state.bundle.clone(), state.optimizers.clone());
    let out = f(state);
    if let Err(Error::NonfiniteLoss { .. }) = &out {
        state.bundle = snapshot.0;
        state.optimizers = snapshot.1;
    }
    state.iteration += 1;
    out.map(|mut r| {
        r.step_seconds = start.elapsed().as_secs_f64();
        r.unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        r
    })
}

/// Per-frame conditional GAN step. Frames keep their source frame set only
/// so each generator input comes from the same sequence; there is no latent,
/// no pooling (every pair is its own set) and no negative pairs.
pub fn train_step_vanilla(
    state: &mut TrainState,
    batch: &[FrameSet],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<MetricsRecord> {
    expect_mode(state, Mode::Vanilla)?;
    let prep = prepare_labeled(batch, cfg, 0, false, rng)?;
    guarded(state, |s| labeled_step(s, &prep, cfg, false, &mut |_, _| {}))
}

/// Joint frame-set step on labeled data: one shared latent per frame set,
/// set-pooled conditional scores and negative pairs.
pub fn train_step_multiframe(
    state: &mut TrainState,
    batch: &[FrameSet],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<MetricsRecord> {
    train_step_multiframe_observed(state, batch, cfg, rng, &mut |_, _| {})
}

pub fn train_step_multiframe_observed(
    state: &mut TrainState,
    batch: &[FrameSet],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    observe: Observer,
) -> Result<MetricsRecord> {
    expect_mode(state, Mode::Multiframe)?;
    let prep = prepare_labeled(batch, cfg, state.bundle.g_t.d_z(), true, rng)?;
    guarded(state, |s| labeled_step(s, &prep, cfg, true, observe))
}

fn labeled_step(
    state: &mut TrainState,
    b: &LabeledBatch,
    cfg: &TrainConfig,
    pooled: bool,
    observe: Observer,
) -> Result<MetricsRecord> {
    let it = state.iteration;
    let enc = state.bundle.time_encoding();
    let group = if pooled { b.set_size } else { 1 };
    let t_all = times_tensor(&b.times, enc);
    let lit = cfg.literal_paper_loss;
    let mut rec = MetricsRecord {
        iteration: it,
        ..MetricsRecord::default()
    };

    let mut gg = Graph::new();
    let mut pg = Binding::trainable(&state.bundle.g_t.store);
    let x = gg.input(b.gen_input.clone());
    let tv = gg.input(t_all.clone());
    let zv = b.latent.clone().map(|z| gg.input(z));
    let fake = state.bundle.g_t.forward(&mut gg, &mut pg, x, tv, zv);
    let fake_val = gg.value(fake).clone();
    rec.sample_digest = digest(&fake_val);

    let (d_reports, d_grads) = {
        let d = &state.bundle.d_a;
        let mut g = Graph::new();
        let mut p = Binding::trainable(&d.store);
        let real = g.input(b.real.clone());
        let fk = g.input(fake_val);
        let t = g.input(t_all);
        let fr = d.features(&mut g, &mut p, real);
        let ff = d.features(&mut g, &mut p, fk);
        let ur = d.uncond_head(&mut g, &mut p, fr);
        let uf = d.uncond_head(&mut g, &mut p, ff);
        let cr = d.cond_head(&mut g, &mut p, fr, t, group);
        let cf = d.cond_head(&mut g, &mut p, ff, t, group);
        let u_real = L::log_score(&mut g, ur);
        let u_fake = L::fake_term(&mut g, uf, lit);
        let c_real = L::log_score(&mut g, cr);
        let c_fake = L::fake_term(&mut g, cf, lit);
        let mut terms = vec![u_real, u_fake, c_real, c_fake];
        let c_neg = match (&b.negatives, pooled) {
            (Some((imgs, times, k)), true) => {
                let ni = g.input(imgs.clone());
                let nt = g.input(times_tensor(times, enc));
                let fneg = d.features(&mut g, &mut p, ni);
                let cn = d.cond_head(&mut g, &mut p, fneg, nt, *k);
                let term = L::log_one_minus(&mut g, cn);
                terms.push(term);
                Some(term)
            }
            _ => None,
        };
        let objective = L::sum(&mut g, &terms);
        let loss = L::neg(&mut g, objective);
        let s = Scalars { g: &g, iteration: it };
        let uncond = LossReport::from_terms(
            "uncond_a",
            &[("real", s.get("uncond_a.real", u_real)?), ("fake", s.get("uncond_a.fake", u_fake)?)],
        );
        let cond = match c_neg {
            Some(neg) => LossReport::from_terms(
                "cond",
                &[
                    ("real", s.get("cond.real", c_real)?),
                    ("negative", s.get("cond.negative", neg)?),
                    ("fake", s.get("cond.fake", c_fake)?),
                ],
            ),
            None => LossReport::from_terms(
                "cond_pair",
                &[("real", s.get("cond_pair.real", c_real)?), ("fake", s.get("cond_pair.fake", c_fake)?)],
            ),
        };
        let grads = p.grads(&g.backward(loss));
        (vec![uncond, cond], grads)
    };
    let objective = total_objective(&d_reports, 0.0)?;
    for r in d_reports {
        rec.push_report("d", r);
    }
    rec.push_report("d", objective);
    state
        .optimizers
        .get_mut("d_a")
        .expect("d_a optimizer")
        .update(&mut state.bundle.d_a.store, &d_grads);
    observe(Phase::Discriminators, &state.bundle);

    let g_grads = {
        let d = &state.bundle.d_a;
        let mut pd = Binding::frozen(&d.store);
        let f = d.features(&mut gg, &mut pd, fake);
        let u = d.uncond_head(&mut gg, &mut pd, f);
        let c = d.cond_head(&mut gg, &mut pd, f, tv, group);
        let gu = L::generator_loss(&mut gg, u);
        let gc = L::generator_loss(&mut gg, c);
        let loss = gg.add(gu, gc);
        let s = Scalars { g: &gg, iteration: it };
        rec.push_report(
            "g",
            LossReport::from_terms(
                "adv",
                &[("uncond_a", s.get("g.uncond_a", gu)?), ("cond", s.get("g.cond", gc)?)],
            ),
        );
        pg.grads(&gg.backward(loss))
    };
    state
        .optimizers
        .get_mut("g_t")
        .expect("g_t optimizer")
        .update(&mut state.bundle.g_t.store, &g_grads);
    observe(Phase::Generator, &state.bundle);
    Ok(rec)
}

/// One iteration of the semi-supervised scheme: discriminators, then the
/// timestamp generator, then the translator. The translator's update
/// evaluates the conditional term only behind a gradient stop, and records
/// the largest gradient that term sends to it.
pub fn train_step_multidomain(
    state: &mut TrainState,
    labeled: &[FrameSet],
    unlabeled: &[UnlabeledSet],
    time_pool: &[TimeOfDay],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<MetricsRecord> {
    train_step_multidomain_observed(state, labeled, unlabeled, time_pool, cfg, rng, &mut |_, _| {})
}

pub fn train_step_multidomain_observed(
    state: &mut TrainState,
    labeled: &[FrameSet],
    unlabeled: &[UnlabeledSet],
    time_pool: &[TimeOfDay],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    observe: Observer,
) -> Result<MetricsRecord> {
    expect_mode(state, Mode::Multidomain)?;
    if unlabeled.is_empty() {
        return Err(Error::ModeMismatch("multidomain step needs unlabeled frames".into()));
    }
    let d_z = state.bundle.g_t.d_z();
    let lab = prepare_labeled(labeled, cfg, d_z, true, rng)?;
    let unl = prepare_unlabeled(unlabeled, time_pool, d_z, rng)?;
    guarded(state, |s| multidomain_step(s, &lab, &unl, cfg, observe))
}

fn multidomain_step(
    state: &mut TrainState,
    lab: &LabeledBatch,
    unl: &UnlabeledBatch,
    cfg: &TrainConfig,
    observe: Observer,
) -> Result<MetricsRecord> {
    let it = state.iteration;
    let enc = state.bundle.time_encoding();
    let lit = cfg.literal_paper_loss;
    let n_u = unl.set_size;
    let t_unl = times_tensor(&unl.times, enc);
    let mut rec = MetricsRecord {
        iteration: it,
        ..MetricsRecord::default()
    };
    let TrainState {
        bundle, optimizers, ..
    } = state;
    let (Some(g_a), Some(d_t)) = (bundle.g_a.clone(), bundle.d_t.clone()) else {
        return Err(Error::ModeMismatch("bundle lacks translator networks".into()));
    };

    // G_T(U) and G_A(G_T(U)); G_A frozen here
    let g_t = bundle.g_t.clone();
    let mut gt = Graph::new();
    let mut p_gt = Binding::trainable(&g_t.store);
    let mut p_ga = Binding::frozen(&g_a.store);
    let xu = gt.input(unl.images.clone());
    let tu = gt.input(t_unl.clone());
    let zu = unl.latent.clone().map(|z| gt.input(z));
    let y = g_t.forward(&mut gt, &mut p_gt, xu, tu, zu);
    let a = g_a.forward(&mut gt, &mut p_ga, y);
    let y_val = gt.value(y).clone();
    let a_val = gt.value(a).clone();
    rec.sample_digest = digest(&y_val);

    // D_A
    let (da_reports, da_grads) = {
        let d = &bundle.d_a;
        let mut g = Graph::new();
        let mut p = Binding::trainable(&d.store);
        let real = g.input(lab.real.clone());
        let t_real = g.input(times_tensor(&lab.times, enc));
        let fk = g.input(a_val);
        let t_fk = g.input(t_unl.clone());
        let fr = d.features(&mut g, &mut p, real);
        let ff = d.features(&mut g, &mut p, fk);
        let ur = d.uncond_head(&mut g, &mut p, fr);
        let uf = d.uncond_head(&mut g, &mut p, ff);
        let cr = d.cond_head(&mut g, &mut p, fr, t_real, lab.set_size);
        let cf = d.cond_head(&mut g, &mut p, ff, t_fk, n_u);
        let (imgs, times, k) = lab.negatives.as_ref().expect("negatives prepared");
        let ni = g.input(imgs.clone());
        let nt = g.input(times_tensor(times, enc));
        let fneg = d.features(&mut g, &mut p, ni);
        let cn = d.cond_head(&mut g, &mut p, fneg, nt, *k);
        let u_real = L::log_score(&mut g, ur);
        let u_fake = L::fake_term(&mut g, uf, lit);
        let c_real = L::log_score(&mut g, cr);
        let c_neg = L::log_one_minus(&mut g, cn);
        let c_fake = L::fake_term(&mut g, cf, lit);
        let objective = L::sum(&mut g, &[u_real, u_fake, c_real, c_neg, c_fake]);
        let loss = L::neg(&mut g, objective);
        let s = Scalars { g: &g, iteration: it };
        let reports = vec![
            LossReport::from_terms(
                "uncond_a",
                &[("real", s.get("uncond_a.real", u_real)?), ("fake", s.get("uncond_a.fake", u_fake)?)],
            ),
            LossReport::from_terms(
                "cond",
                &[
                    ("real", s.get("cond.real", c_real)?),
                    ("negative", s.get("cond.negative", c_neg)?),
                    ("fake", s.get("cond.fake", c_fake)?),
                ],
            ),
        ];
        (reports, p.grads(&g.backward(loss)))
    };

    // D_T
    let (dt_report, dt_grads) = {
        let mut g = Graph::new();
        let mut p = Binding::trainable(&d_t.store);
        let real = g.input(unl.images.clone());
        let fk = g.input(y_val.clone());
        let sr = d_t.forward(&mut g, &mut p, real);
        let sf = d_t.forward(&mut g, &mut p, fk);
        let t_real = L::log_score(&mut g, sr);
        let t_fake = L::fake_term(&mut g, sf, lit);
        let objective = g.add(t_real, t_fake);
        let loss = L::neg(&mut g, objective);
        let s = Scalars { g: &g, iteration: it };
        let report = LossReport::from_terms(
            "uncond_t",
            &[("real", s.get("uncond_t.real", t_real)?), ("fake", s.get("uncond_t.fake", t_fake)?)],
        );
        (report, p.grads(&g.backward(loss)))
    };

    // G_A update terms, on the generator output detached from G_T; computed
    // against the pre-update discriminator so the three updates below read
    // one consistent set of scores
    let (ga_reports, ga_grads, gating) = {
        let d = &bundle.d_a;
        let mut g = Graph::new();
        let mut p = Binding::trainable(&g_a.store);
        let mut pd = Binding::frozen(&d.store);
        let y_in = g.input(y_val);
        let tv = g.input(t_unl);
        let a2 = g_a.forward(&mut g, &mut p, y_in);
        let f = d.features(&mut g, &mut pd, a2);
        let u = d.uncond_head(&mut g, &mut pd, f);
        let gu = L::generator_loss(&mut g, u);
        let l1 = L::l1(&mut g, a2, y_in);
        let a_stop = g.stop_gradient(a2);
        let fs = d.features(&mut g, &mut pd, a_stop);
        let c = d.cond_head(&mut g, &mut pd, fs, tv, n_u);
        let gc = L::generator_loss(&mut g, c);
        let gating = p.max_abs_grad(&g.backward(gc)) as f64;
        let weighted = L::scale(&mut g, l1, cfg.lambda_rec as f32);
        let loss = L::sum(&mut g, &[gu, weighted, gc]);
        let s = Scalars { g: &g, iteration: it };
        let reports = vec![
            LossReport::from_terms(
                "adv",
                &[("uncond_a", s.get("g_a.uncond_a", gu)?), ("cond_gated", s.get("g_a.cond", gc)?)],
            ),
            LossReport::rec(s.get("g_a.rec", l1)?),
        ];
        (reports, p.grads(&g.backward(loss)), gating)
    };

    let mut objective_parts = da_reports.clone();
    objective_parts.push(dt_report.clone());
    objective_parts.push(ga_reports[1].clone());
    let objective = total_objective(&objective_parts, cfg.lambda_rec)?;
    for r in da_reports {
        rec.push_report("d", r);
    }
    rec.push_report("d", dt_report);
    rec.push_report("d", objective);

    optimizers
        .get_mut("d_a")
        .expect("d_a optimizer")
        .update(&mut bundle.d_a.store, &da_grads);
    optimizers
        .get_mut("d_t")
        .expect("d_t optimizer")
        .update(&mut bundle.d_t.as_mut().expect("d_t present").store, &dt_grads);
    observe(Phase::Discriminators, bundle);

    // G_T against the updated, frozen discriminators, through frozen G_A
    let gt_grads = {
        let d = &bundle.d_a;
        let d_t = bundle.d_t.as_ref().expect("d_t present");
        let mut pd = Binding::frozen(&d.store);
        let mut pt = Binding::frozen(&d_t.store);
        let st = d_t.forward(&mut gt, &mut pt, y);
        let f = d.features(&mut gt, &mut pd, a);
        let u = d.uncond_head(&mut gt, &mut pd, f);
        let c = d.cond_head(&mut gt, &mut pd, f, tu, n_u);
        let gt_t = L::generator_loss(&mut gt, st);
        let gt_u = L::generator_loss(&mut gt, u);
        let gt_c = L::generator_loss(&mut gt, c);
        let loss = L::sum(&mut gt, &[gt_t, gt_u, gt_c]);
        let s = Scalars { g: &gt, iteration: it };
        rec.push_report(
            "g",
            LossReport::from_terms(
                "adv",
                &[
                    ("uncond_t", s.get("g.uncond_t", gt_t)?),
                    ("uncond_a", s.get("g.uncond_a", gt_u)?),
                    ("cond", s.get("g.cond", gt_c)?),
                ],
            ),
        );
        p_gt.grads(&gt.backward(loss))
    };
    optimizers
        .get_mut("g_t")
        .expect("g_t optimizer")
        .update(&mut bundle.g_t.store, &gt_grads);
    observe(Phase::Generator, bundle);

    for r in ga_reports {
        rec.push_report("g_a", r);
    }
    rec.gating_max_abs_grad = Some(gating);
    optimizers
        .get_mut("g_a")
        .expect("g_a optimizer")
        .update(&mut bundle.g_a.as_mut().expect("g_a present").store, &ga_grads);
    observe(Phase::Translator, bundle);
    Ok(rec)
}
