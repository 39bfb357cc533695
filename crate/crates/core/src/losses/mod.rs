//! Contrastive, prototype-regularization and cross-entropy losses with
//! analytic gradients.
//!
//! Functions here work on raw embeddings; cosine-based losses normalize
//! internally and backpropagate through the normalization. [`objectives`]
//! composes them with the encoders.

pub mod objectives;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, l2_norm};

/// Denominator convention of the NT-Xent term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NtXentVariant {
    /// Same-view negatives `k != i` plus every cross-view term `k = 1..N`,
    /// the positive included.
    #[default]
    AsPrinted,
    /// Cross-view sum skips the positive (decoupled denominator).
    PositiveExcluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub variant: NtXentVariant,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau: 0.02,
            variant: NtXentVariant::AsPrinted,
        }
    }
}

/// Two index-aligned embedding sets: `e1[i]` and `e2[i]` are a positive pair.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveBatch<'a> {
    pub e1: &'a [Vec<f64>],
    pub e2: &'a [Vec<f64>],
    pub tau: f64,
    pub variant: NtXentVariant,
}

impl<'a> ContrastiveBatch<'a> {
    pub fn new(e1: &'a [Vec<f64>], e2: &'a [Vec<f64>], tau: f64) -> Self {
        Self {
            e1,
            e2,
            tau,
            variant: NtXentVariant::AsPrinted,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.e1.len() != self.e2.len() {
            return Err(Error::LengthMismatch {
                left: self.e1.len(),
                right: self.e2.len(),
            });
        }
        if self.e1.len() < 2 {
            return Err(Error::BadConfig("contrastive batch needs at least 2 pairs".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::BadConfig(format!("temperature must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn unit(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

fn units(set: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    set.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
}

/// Pulls a gradient w.r.t. `v / |v|` back to `v`.
fn unit_backward(u: &[f64], norm: f64, g: &[f64]) -> Vec<f64> {
    let proj = dot(g, u);
    g.iter().zip(u).map(|(gi, ui)| (gi - proj * ui) / norm).collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Loss of anchor `i` with `anchor` as the first view and `other` as the
/// second, all inputs unit vectors. If `grads` is given, adds
/// `scale * d loss / d (unit vectors)` into it.
fn anchor_loss(
    anchor: &[Vec<f64>],
    other: &[Vec<f64>],
    i: usize,
    tau: f64,
    variant: NtXentVariant,
    scale: f64,
    grads: Option<(&mut [Vec<f64>], &mut [Vec<f64>])>,
) -> f64 {
    let n = anchor.len();
    // Candidate logits: same-view k != i first, then cross-view k.
    let mut logits = Vec::with_capacity(2 * n);
    let mut refs: Vec<(bool, usize)> = Vec::with_capacity(2 * n);
    for k in 0..n {
        if k != i {
            logits.push(dot(&anchor[i], &anchor[k]) / tau);
            refs.push((false, k));
        }
    }
    let mut pos_slot = usize::MAX;
    for k in 0..n {
        if k == i {
            if variant == NtXentVariant::PositiveExcluded {
                continue;
            }
            pos_slot = logits.len();
        }
        logits.push(dot(&anchor[i], &other[k]) / tau);
        refs.push((true, k));
    }
    let positive = dot(&anchor[i], &other[i]) / tau;
    let lse = log_sum_exp(&logits);
    let loss = lse - positive;

    if let Some((ga, go)) = grads {
        let mut coef: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        let pos_coef = -1.0;
        if pos_slot != usize::MAX {
            coef[pos_slot] += pos_coef;
        }
        let s = scale / tau;
        let mut g_anchor = vec![0.0; anchor[i].len()];
        for (&(cross, k), &c) in refs.iter().zip(&coef) {
            let target = if cross { &other[k] } else { &anchor[k] };
            for (g, t) in g_anchor.iter_mut().zip(target) {
                *g += c * t;
            }
            let dst = if cross { &mut go[k] } else { &mut ga[k] };
            for (d, a) in dst.iter_mut().zip(&anchor[i]) {
                *d += s * c * a;
            }
        }
        if pos_slot == usize::MAX {
            for (g, t) in g_anchor.iter_mut().zip(&other[i]) {
                *g += pos_coef * t;
            }
            for (d, a) in go[i].iter_mut().zip(&anchor[i]) {
                *d += s * pos_coef * a;
            }
        }
        for (d, g) in ga[i].iter_mut().zip(&g_anchor) {
            *d += s * g;
        }
    }
    loss
}

/// NT-Xent loss of pair `i`, with `e1` as the anchor view.
pub fn ntxent(batch: &ContrastiveBatch<'_>, i: usize) -> Result<f64> {
    batch.validate()?;
    if i >= batch.e1.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: batch.e1.len(),
        });
    }
    let (a, _) = units(batch.e1)?;
    let (b, _) = units(batch.e2)?;
    Ok(anchor_loss(&a, &b, i, batch.tau, batch.variant, 1.0, None))
}

/// Value and gradients of `(1/2N) sum_i [l(a_i, b_i) + l(b_i, a_i)]`.
#[derive(Debug, Clone)]
pub struct SymmetricLoss {
    pub value: f64,
    pub grad_a: Vec<Vec<f64>>,
    pub grad_b: Vec<Vec<f64>>,
}

pub fn symmetric_ntxent(a: &[Vec<f64>], b: &[Vec<f64>], cfg: &ContrastiveConfig) -> Result<SymmetricLoss> {
    let batch = ContrastiveBatch {
        e1: a,
        e2: b,
        tau: cfg.tau,
        variant: cfg.variant,
    };
    batch.validate()?;
    let n = a.len();
    let (ua, na) = units(a)?;
    let (ub, nb) = units(b)?;
    let dim = a[0].len();
    let mut ga = vec![vec![0.0; dim]; n];
    let mut gb = vec![vec![0.0; dim]; n];
    let scale = 1.0 / (2.0 * n as f64);
    let mut value = 0.0;
    for i in 0..n {
        value += anchor_loss(&ua, &ub, i, cfg.tau, cfg.variant, scale, Some((&mut ga, &mut gb)));
        value += anchor_loss(&ub, &ua, i, cfg.tau, cfg.variant, scale, Some((&mut gb, &mut ga)));
    }
    let grad_a = (0..n).map(|i| unit_backward(&ua[i], na[i], &ga[i])).collect();
    let grad_b = (0..n).map(|i| unit_backward(&ub[i], nb[i], &gb[i])).collect();
    Ok(SymmetricLoss {
        value: value * scale,
        grad_a,
        grad_b,
    })
}

/// `1 - mean_i cos(reps_i, prototype)`, in `[0, 2]`.
pub fn loss_reg(reps: &[Vec<f64>], prototype: &[f64]) -> Result<f64> {
    if reps.is_empty() {
        return Err(Error::Empty);
    }
    let protos = vec![prototype; reps.len()];
    Ok(reg_with_grad(reps, &protos, false)?.0)
}

/// `1 - mean_i cos(reps_i, protos_i)` and its gradient w.r.t. each rep.
/// Prototypes are treated as constants.
pub fn reg_with_grad(reps: &[Vec<f64>], protos: &[&[f64]], want_grad: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    if reps.len() != protos.len() {
        return Err(Error::LengthMismatch {
            left: reps.len(),
            right: protos.len(),
        });
    }
    if reps.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = reps.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(if want_grad { reps.len() } else { 0 });
    for (r, p) in reps.iter().zip(protos) {
        let (ur, nr) = unit(r)?;
        let (up, _) = unit(p)?;
        let c = dot(&ur, &up);
        total += c;
        if want_grad {
            // d(-c/n)/dr = -(up - c ur) / (n |r|)
            grads.push(
                up.iter()
                    .zip(&ur)
                    .map(|(pi, ri)| -(pi - c * ri) / (n * nr))
                    .collect(),
            );
        }
    }
    Ok(((1.0 - total / n).clamp(0.0, 2.0), grads))
}

/// Softmax cross-entropy of one sample.
pub fn loss_ce(logits: &[f64], label: usize) -> Result<f64> {
    Ok(ce_with_grad(logits, label)?.0)
}

/// Cross-entropy and `d loss / d logits` (softmax minus one-hot).
pub fn ce_with_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: label,
            len: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let mut g: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    g[label] -= 1.0;
    Ok((lse - logits[label], g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    fn e(k: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    #[test]
    fn orthogonal_pairs_give_log3() {
        let (a, b) = (vec![e(0, 4), e(1, 4)], vec![e(2, 4), e(3, 4)]);
        let batch = ContrastiveBatch::new(&a, &b, 1.0);
        assert!((ntxent(&batch, 0).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_positive_closed_form() {
        let (a, b) = (vec![e(0, 3), e(1, 3)], vec![e(0, 3), e(2, 3)]);
        let batch = ContrastiveBatch::new(&a, &b, 1.0);
        let want = -(std::f64::consts::E / (2.0 + std::f64::consts::E)).ln();
        assert!((ntxent(&batch, 0).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.5514).abs() < 1e-4);
    }

    #[test]
    fn monotone_in_positive_similarity() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let t = step as f64 * 0.15;
            let b = vec![vec![t.cos(), t.sin(), 0.0], vec![0.0, 0.0, 1.0]];
            // Rotating away from the anchor lowers the positive similarity.
            let l = ntxent(&ContrastiveBatch::new(&a, &b, 0.5), 0).unwrap();
            if step > 0 {
                assert!(l > last);
            }
            last = l;
        }
    }

    #[test]
    fn batch_validation() {
        let one = vec![e(0, 2)];
        assert!(ntxent(&ContrastiveBatch::new(&one, &one, 1.0), 0).is_err());
        let two = vec![e(0, 2), e(1, 2)];
        assert!(ntxent(&ContrastiveBatch::new(&two, &two, 0.0), 0).is_err());
        assert!(matches!(
            ntxent(&ContrastiveBatch::new(&two, &two, 1.0), 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        let zero = vec![vec![0.0, 0.0], e(1, 2)];
        assert!(matches!(ntxent(&ContrastiveBatch::new(&zero, &two, 1.0), 0), Err(Error::ZeroVector)));
    }

    #[test]
    fn small_tau_does_not_overflow() {
        let a = vec![vec![1.0, 0.0], vec![0.999, 0.01]];
        let b = vec![vec![1.0, 0.001], vec![-1.0, 0.0]];
        let cfg = ContrastiveConfig {
            tau: 1e-4,
            variant: NtXentVariant::AsPrinted,
        };
        let out = symmetric_ntxent(&a, &b, &cfg).unwrap();
        assert!(out.value.is_finite());
        assert!(out.grad_a.iter().flatten().all(|g| g.is_finite()));
    }

    #[test]
    fn reg_examples() {
        let p = vec![0.3, -0.4];
        assert!(loss_reg(&[p.clone(), vec![0.6, -0.8]], &p).unwrap().abs() < 1e-12);
        assert!((loss_reg(&[vec![0.4, 0.3]], &p).unwrap() - 1.0).abs() < 1e-12);
        assert!((loss_reg(&[vec![-0.3, 0.4]], &p).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(loss_reg(&[vec![0.0, 0.0]], &p), Err(Error::ZeroVector)));
    }

    #[test]
    fn ce_examples() {
        assert!((loss_ce(&[0.5; 5], 2).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!(loss_ce(&[50.0, 0.0, 0.0], 0).unwrap() < 1e-20);
        // Hand oracle: logits (1, 2, 3), label 0: -ln(e / (e + e^2 + e^3)).
        let e1 = 1f64.exp();
        let want = -(e1 / (e1 + e1.powi(2) + e1.powi(3))).ln();
        assert!((loss_ce(&[1.0, 2.0, 3.0], 0).unwrap() - want).abs() < 1e-12);
        assert!(matches!(loss_ce(&[1.0], 1), Err(Error::IndexOutOfRange { .. })));
    }

    fn random_set(n: usize, d: usize, s: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut rng = crate::seed::rng(s);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
    }

    /// Direct transcription of the per-anchor formula, no max shift.
    fn brute(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, tau: f64, variant: NtXentVariant) -> f64 {
        let s = |u: &[f64], v: &[f64]| (dot(u, v) / (l2_norm(u) * l2_norm(v)) / tau).exp();
        let num = s(&a[i], &b[i]);
        let mut den = 0.0;
        for k in 0..a.len() {
            if k != i {
                den += s(&a[i], &a[k]);
            }
            if k != i || variant == NtXentVariant::AsPrinted {
                den += s(&a[i], &b[k]);
            }
        }
        -(num / den).ln()
    }

    #[test]
    fn matches_brute_force() {
        let (a, b) = (random_set(5, 6, 1), random_set(5, 6, 2));
        for variant in [NtXentVariant::AsPrinted, NtXentVariant::PositiveExcluded] {
            let cfg = ContrastiveConfig { tau: 0.3, variant };
            let mut want = 0.0;
            for i in 0..5 {
                let batch = ContrastiveBatch { e1: &a, e2: &b, tau: 0.3, variant };
                let l = ntxent(&batch, i).unwrap();
                assert!((l - brute(&a, &b, i, 0.3, variant)).abs() < 1e-10);
                want += l + brute(&b, &a, i, 0.3, variant);
            }
            let got = symmetric_ntxent(&a, &b, &cfg).unwrap().value;
            assert!((got - want / 10.0).abs() < 1e-10);
        }
    }

    #[test]
    fn as_printed_matches_simclr_all_ones() {
        // All similarities 1: each term is -ln(1 / (2N - 1)).
        let a = vec![vec![1.0, 0.0]; 4];
        let l = ntxent(&ContrastiveBatch::new(&a, &a, 1.0), 2).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn symmetric_gradient_matches_finite_differences() {
        let (a, b) = (random_set(4, 5, 7), random_set(4, 5, 8));
        for variant in [NtXentVariant::AsPrinted, NtXentVariant::PositiveExcluded] {
            let cfg = ContrastiveConfig { tau: 0.5, variant };
            let out = symmetric_ntxent(&a, &b, &cfg).unwrap();
            let h = 1e-5;
            for (which, grad) in [(0, &out.grad_a), (1, &out.grad_b)] {
                for i in 0..4 {
                    for k in 0..5 {
                        let (mut ap, mut bp) = (a.clone(), b.clone());
                        let (mut am, mut bm) = (a.clone(), b.clone());
                        if which == 0 {
                            ap[i][k] += h;
                            am[i][k] -= h;
                        } else {
                            bp[i][k] += h;
                            bm[i][k] -= h;
                        }
                        let fd = (symmetric_ntxent(&ap, &bp, &cfg).unwrap().value
                            - symmetric_ntxent(&am, &bm, &cfg).unwrap().value)
                            / (2.0 * h);
                        assert!(rel_err(fd, grad[i][k]) < 1e-4, "{variant:?} {which} {i} {k}: {fd} vs {}", grad[i][k]);
                    }
                }
            }
        }
    }

    #[test]
    fn reg_and_ce_gradients() {
        let reps = random_set(3, 4, 11);
        let protos = random_set(3, 4, 12);
        let pr: Vec<&[f64]> = protos.iter().map(|p| p.as_slice()).collect();
        let (_, g) = reg_with_grad(&reps, &pr, true).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            for k in 0..4 {
                let (mut p, mut m) = (reps.clone(), reps.clone());
                p[i][k] += h;
                m[i][k] -= h;
                let fd = (reg_with_grad(&p, &pr, false).unwrap().0 - reg_with_grad(&m, &pr, false).unwrap().0) / (2.0 * h);
                assert!(rel_err(fd, g[i][k]) < 1e-4);
            }
        }
        let logits = [0.3, -1.2, 2.0, 0.1];
        let (_, g) = ce_with_grad(&logits, 1).unwrap();
        for k in 0..4 {
            let (mut p, mut m) = (logits, logits);
            p[k] += h;
            m[k] -= h;
            let fd = (loss_ce(&p, 1).unwrap() - loss_ce(&m, 1).unwrap()) / (2.0 * h);
            assert!(rel_err(fd, g[k]) < 1e-4);
        }
    }

    #[test]
    fn scale_invariant() {
        let (a, b) = (random_set(4, 3, 21), random_set(4, 3, 22));
        let cfg = ContrastiveConfig::default();
        let base = symmetric_ntxent(&a, &b, &cfg).unwrap().value;
        let a2: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x * 7.5).collect()).collect();
        assert!((symmetric_ntxent(&a2, &b, &cfg).unwrap().value - base).abs() < 1e-9);
    }

    #[test]
    fn descent_aligns_positive_pairs() {
        let (mut a, mut b) = (random_set(4, 6, 31), random_set(4, 6, 32));
        let cfg = ContrastiveConfig { tau: 0.5, ..Default::default() };
        let start = symmetric_ntxent(&a, &b, &cfg).unwrap().value;
        for _ in 0..200 {
            let out = symmetric_ntxent(&a, &b, &cfg).unwrap();
            for i in 0..4 {
                for k in 0..6 {
                    a[i][k] -= 0.5 * out.grad_a[i][k];
                    b[i][k] -= 0.5 * out.grad_b[i][k];
                }
            }
        }
        assert!(symmetric_ntxent(&a, &b, &cfg).unwrap().value < start);
        for i in 0..4 {
            assert!(cosine_sim(&a[i], &b[i]).unwrap() > 0.999);
        }
    }
}
