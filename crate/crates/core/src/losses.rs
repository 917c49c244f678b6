//! Adversarial and reconstruction objectives.
//!
//! The plain `f64` functions evaluate the objectives as written, i.e. the
//! quantities the discriminators maximise. The [`graph`] helpers build the
//! same terms on the autodiff tape for training.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Scores are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before any log.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Labeled webcam sequences.
    Amos,
    /// Unlabeled time-lapse video.
    Tlvdb,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Amos => "a",
            Domain::Tlvdb => "t",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub name: String,
    pub value: f64,
    pub term_breakdown: BTreeMap<String, f64>,
}

pub const REC_NAME: &str = "rec";

impl LossReport {
    pub fn from_terms(name: impl Into<String>, terms: &[(&str, f64)]) -> Self {
        let term_breakdown: BTreeMap<String, f64> =
            terms.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        Self {
            name: name.into(),
            value: terms.iter().map(|&(_, v)| v).sum(),
            term_breakdown,
        }
    }

    pub fn rec(value: f64) -> Self {
        Self::from_terms(REC_NAME, &[("l1", value)])
    }

    pub fn breakdown_sum(&self) -> f64 {
        self.term_breakdown.values().sum()
    }
}

fn clamped(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(s));
    }
    Ok(s.clamp(SCORE_EPS, 1.0 - SCORE_EPS))
}

fn mean_of(scores: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut acc = 0.0;
    for &s in scores {
        acc += f(clamped(s)?);
    }
    Ok(acc / scores.len() as f64)
}

/// `mean(log s)` over real-sample scores.
pub fn adv_real_term(scores: &[f64]) -> Result<f64> {
    mean_of(scores, f64::ln)
}

/// `mean(log(1 - s))` over fake-sample scores.
pub fn adv_fake_term(scores: &[f64]) -> Result<f64> {
    mean_of(scores, |s| (1.0 - s).ln())
}

/// `mean(1 - log s)`, the literal variant of the fake term.
pub fn adv_fake_term_literal(scores: &[f64]) -> Result<f64> {
    mean_of(scores, |s| 1.0 - s.ln())
}

pub fn loss_uncond(domain: Domain, real: &[f64], fake: &[f64]) -> Result<LossReport> {
    Ok(LossReport::from_terms(
        format!("uncond_{}", domain.tag()),
        &[("real", adv_real_term(real)?), ("fake", adv_fake_term(fake)?)],
    ))
}

/// Real sets, negative-pair sets and generated sets, equally weighted.
pub fn loss_cond(real: f64, negative: f64, fake: f64) -> Result<LossReport> {
    Ok(LossReport::from_terms(
        "cond",
        &[
            ("real", clamped(real)?.ln()),
            ("negative", (1.0 - clamped(negative)?).ln()),
            ("fake", (1.0 - clamped(fake)?).ln()),
        ],
    ))
}

/// Mean absolute difference over every element.
pub fn loss_rec(translated: &ImageGrid, original: &ImageGrid) -> Result<f64> {
    translated.mean_abs_diff(original)
}

/// `Σ adversarial + λ·rec`. Reports named [`REC_NAME`] are scaled by
/// `lambda_rec`; with `λ = 0` they are left out of the breakdown entirely.
pub fn total_objective(reports: &[LossReport], lambda_rec: f64) -> Result<LossReport> {
    if !(lambda_rec >= 0.0) {
        return Err(Error::Config(format!("lambda_rec {lambda_rec} < 0")));
    }
    let mut term_breakdown = BTreeMap::new();
    for r in reports {
        if r.name == REC_NAME {
            if lambda_rec > 0.0 {
                *term_breakdown.entry(r.name.clone()).or_insert(0.0) += lambda_rec * r.value;
            }
        } else {
            *term_breakdown.entry(r.name.clone()).or_insert(0.0) += r.value;
        }
    }
    Ok(LossReport {
        name: "total".into(),
        value: term_breakdown.values().sum(),
        term_breakdown,
    })
}

/// Tape versions. Each returns a `[1]` node.
pub mod graph {
    use super::SCORE_EPS;
    use crate::autograd::{Graph, Var};

    const LO: f32 = SCORE_EPS as f32;
    const HI: f32 = 1.0 - SCORE_EPS as f32;

    /// `mean(log s)`.
    pub fn log_score(g: &mut Graph, s: Var) -> Var {
        let c = g.clamp(s, LO, HI);
        let l = g.log(c);
        g.mean(l)
    }

    /// `mean(log(1 - s))`.
    pub fn log_one_minus(g: &mut Graph, s: Var) -> Var {
        let c = g.clamp(s, LO, HI);
        let q = g.affine(c, -1.0, 1.0);
        let l = g.log(q);
        g.mean(l)
    }

    /// `mean(1 - log s)`.
    pub fn literal_fake(g: &mut Graph, s: Var) -> Var {
        let l = log_score(g, s);
        g.affine(l, -1.0, 1.0)
    }

    /// Fake-side term of a discriminator objective.
    pub fn fake_term(g: &mut Graph, s: Var, literal: bool) -> Var {
        if literal {
            literal_fake(g, s)
        } else {
            log_one_minus(g, s)
        }
    }

    /// Non-saturating generator loss `-mean(log s)`.
    pub fn generator_loss(g: &mut Graph, s: Var) -> Var {
        let l = log_score(g, s);
        g.affine(l, -1.0, 0.0)
    }

    pub fn l1(g: &mut Graph, a: Var, b: Var) -> Var {
        let d = g.sub(a, b);
        let d = g.abs(d);
        g.mean(d)
    }

    pub fn sum(g: &mut Graph, terms: &[Var]) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = g.add(acc, t);
        }
        acc
    }

    pub fn neg(g: &mut Graph, x: Var) -> Var {
        g.affine(x, -1.0, 0.0)
    }

    pub fn scale(g: &mut Graph, x: Var, k: f32) -> Var {
        g.affine(x, k, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn real_term_values() {
        assert!(close(adv_real_term(&[0.5, 0.5]).unwrap(), -0.6931, 1e-4));
        assert!(close(adv_real_term(&[1.0 - 1e-9]).unwrap(), 0.0, 1e-6));
        assert!(close(adv_real_term(&[0.9, 0.1]).unwrap(), -1.2040, 1e-4));
    }

    #[test]
    fn fake_term_values() {
        assert!(close(adv_fake_term(&[0.5]).unwrap(), -0.6931, 1e-4));
        assert!(close(adv_fake_term(&[1e-9]).unwrap(), 0.0, 1e-6));
        assert!(close(adv_fake_term(&[0.25, 0.75]).unwrap(), -0.8370, 1e-4));
        assert!(close(adv_fake_term_literal(&[0.5]).unwrap(), 1.0 + 2f64.ln(), 1e-12));
    }

    #[test]
    fn out_of_range_scores_rejected() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(adv_real_term(&[bad]), Err(Error::Domain(_))));
            assert!(matches!(loss_cond(0.5, bad, 0.5), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn uncond_values() {
        let r = loss_uncond(Domain::Amos, &[0.5], &[0.5]).unwrap();
        assert!(close(r.value, -1.3863, 1e-4));
        let perfect = loss_uncond(Domain::Tlvdb, &[1.0 - 1e-9], &[1e-9]).unwrap();
        assert!(close(perfect.value, 0.0, 1e-6));
        let a = loss_uncond(Domain::Amos, &[0.3, 0.6], &[0.3, 0.6]).unwrap();
        let b = loss_uncond(Domain::Amos, &[0.7, 0.4], &[0.7, 0.4]).unwrap();
        assert!(close(a.value, b.value, 1e-12));
    }

    #[test]
    fn cond_values() {
        assert!(close(loss_cond(0.5, 0.5, 0.5).unwrap().value, -2.0794, 1e-4));
        assert!(close(loss_cond(1.0 - 1e-9, 1e-9, 1e-9).unwrap().value, 0.0, 1e-6));
        assert!(close(loss_cond(0.9, 0.2, 0.3).unwrap().value, -0.6851, 1e-4));
    }

    #[test]
    fn rec_values() {
        let a = ImageGrid::filled(4, 5, 0.2);
        assert_eq!(loss_rec(&a, &a).unwrap(), 0.0);
        let b = ImageGrid::filled(4, 5, 0.3);
        assert!(close(loss_rec(&a, &b).unwrap(), 0.1, 1e-6));
        assert!(loss_rec(&a, &ImageGrid::filled(4, 4, 0.0)).is_err());
    }

    #[test]
    fn total_objective_weights() {
        let u = loss_uncond(Domain::Amos, &[0.5], &[0.5]).unwrap();
        let c = loss_cond(0.5, 0.5, 0.5).unwrap();
        let rec = LossReport::rec(0.2);
        let t = total_objective(&[u.clone(), c.clone(), rec.clone()], 0.5).unwrap();
        assert!(close(t.value, u.value + c.value + 0.1, 1e-12));
        let t0 = total_objective(&[u.clone(), c.clone(), rec], 0.0).unwrap();
        assert!(!t0.term_breakdown.contains_key(REC_NAME));
        assert!(close(t0.value, u.value + c.value, 1e-12));
        let zero = total_objective(&[LossReport::from_terms("x", &[("a", 0.0)])], 0.5).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(total_objective(&[], -1.0).is_err());
    }

    /// Independent oracle: explicit loop over every element.
    fn brute_mean_abs(a: &ImageGrid, b: &ImageGrid) -> f64 {
        let mut s = 0.0;
        let mut n = 0usize;
        for c in 0..3 {
            for y in 0..a.height() {
                for x in 0..a.width() {
                    s += (a.get(c, y, x) as f64 - b.get(c, y, x) as f64).abs();
                    n += 1;
                }
            }
        }
        s / n as f64
    }

    fn grid(vals: Vec<f32>) -> ImageGrid {
        ImageGrid::new(2, 3, vals).unwrap()
    }

    fn small_grid() -> impl Strategy<Value = ImageGrid> {
        proptest::collection::vec(-1.0f32..1.0, 18).prop_map(grid)
    }

    proptest! {
        #[test]
        fn rec_matches_oracle(a in small_grid(), b in small_grid()) {
            prop_assert!((loss_rec(&a, &b).unwrap() - brute_mean_abs(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn rec_is_a_metric(a in small_grid(), b in small_grid(), c in small_grid()) {
            let ab = loss_rec(&a, &b).unwrap();
            prop_assert_eq!(ab, loss_rec(&b, &a).unwrap());
            prop_assert_eq!(loss_rec(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(loss_rec(&a, &c).unwrap() <= ab + loss_rec(&b, &c).unwrap() + 1e-9);
        }

        #[test]
        fn report_value_equals_breakdown(
            real in proptest::collection::vec(1e-6f64..1.0 - 1e-6, 1..8),
            fake in proptest::collection::vec(1e-6f64..1.0 - 1e-6, 1..8),
            s in proptest::array::uniform3(1e-6f64..1.0 - 1e-6),
            rec in 0.0f64..2.0,
            lambda in 0.0f64..2.0,
        ) {
            let u = loss_uncond(Domain::Amos, &real, &fake).unwrap();
            let c = loss_cond(s[0], s[1], s[2]).unwrap();
            let t = total_objective(&[u.clone(), c.clone(), LossReport::rec(rec)], lambda).unwrap();
            for r in [&u, &c, &t] {
                prop_assert!((r.value - r.breakdown_sum()).abs() < 1e-6);
                prop_assert!(r.value.is_finite());
            }
        }

        #[test]
        fn adversarial_terms_nonpositive(
            scores in proptest::collection::vec(1e-12f64..1.0 - 1e-12, 1..8),
        ) {
            prop_assert!(adv_real_term(&scores).unwrap() <= 0.0);
            prop_assert!(adv_fake_term(&scores).unwrap() <= 0.0);
        }
    }

    #[test]
    fn tape_terms_match_plain_functions() {
        use crate::autograd::{Graph, Tensor};
        let scores = [0.2f32, 0.5, 0.9];
        let mut g = Graph::new();
        let s = g.input(Tensor::from_vec(&[3, 1], scores.to_vec()).unwrap());
        let as64: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let r = graph::log_score(&mut g, s);
        let f = graph::log_one_minus(&mut g, s);
        let l = graph::literal_fake(&mut g, s);
        let gl = graph::generator_loss(&mut g, s);
        assert!(close(g.scalar_value(r) as f64, adv_real_term(&as64).unwrap(), 1e-6));
        assert!(close(g.scalar_value(f) as f64, adv_fake_term(&as64).unwrap(), 1e-6));
        assert!(close(g.scalar_value(l) as f64, adv_fake_term_literal(&as64).unwrap(), 1e-6));
        assert!(close(g.scalar_value(gl) as f64, -adv_real_term(&as64).unwrap(), 1e-6));
    }

    #[test]
    fn tape_terms_are_finite_at_saturation() {
        use crate::autograd::{Graph, Tensor};
        let mut g = Graph::new();
        let s = g.leaf(Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).unwrap(), true);
        let r = graph::log_score(&mut g, s);
        let f = graph::log_one_minus(&mut g, s);
        let t = g.add(r, f);
        assert!(g.scalar_value(t).is_finite());
        let grads = g.backward(t);
        assert!(grads.get(s).unwrap().all_finite());
    }
}
