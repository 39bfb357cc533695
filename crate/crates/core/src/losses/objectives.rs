//! Pretraining and incremental-stage objectives over whole models.

use serde::{Deserialize, Serialize};

use super::{ce_with_grad, reg_with_grad, symmetric_ntxent, ContrastiveConfig};
use crate::encoders::{encode_points_cached, Adapter, Head, ImageBackbone, Model, PointBackbone};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::nn::Parameters;
use crate::rrm::MultiViewImage;

/// One pretraining sample: a cloud, its rendered views, and the two pose
/// seeds of the intra-modal augmentation.
#[derive(Debug, Clone, Copy)]
pub struct PretrainItem<'a> {
    pub cloud: &'a PointCloud,
    pub image: &'a MultiViewImage,
    pub pose_seeds: (u64, u64),
}

/// Weights of the intra-modal and image-point terms. Zero disables a term
/// and skips the forward passes it alone needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainWeights {
    pub imc: f64,
    pub ipc: f64,
}

impl Default for PretrainWeights {
    fn default() -> Self {
        Self { imc: 1.0, ipc: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainLoss {
    pub total: f64,
    pub imc: f64,
    pub ipc: f64,
}

/// Gradient buffers for the backbones, shaped like the model's.
#[derive(Debug, Clone)]
pub struct BackboneGrads {
    pub point: PointBackbone,
    pub twin: Option<PointBackbone>,
    pub image: ImageBackbone,
}

impl BackboneGrads {
    pub fn zeros(model: &Model) -> Self {
        Self {
            point: model.point.zeros_like(),
            twin: model.point_twin.as_ref().map(PointBackbone::zeros_like),
            image: model.image.zeros_like(),
        }
    }

    pub fn clear(&mut self) {
        self.point.fill(0.0);
        if let Some(t) = &mut self.twin {
            t.fill(0.0);
        }
        self.image.fill(0.0);
    }
}

/// `imc * L_imc + ipc * L_ipc`, with `L_imc` the symmetric NT-Xent between
/// the two pose views and `L_ipc` between the first pose view and the image.
pub fn pretrain_objective(
    model: &Model,
    items: &[PretrainItem<'_>],
    cfg: &ContrastiveConfig,
    weights: PretrainWeights,
    mut grads: Option<&mut BackboneGrads>,
) -> Result<PretrainLoss> {
    let (want_imc, want_ipc) = (weights.imc != 0.0, weights.ipc != 0.0);
    let mut p1 = Vec::with_capacity(items.len());
    let mut c1 = Vec::with_capacity(items.len());
    for it in items {
        let (e, cache, posed) = encode_points_cached(it.cloud, &model.point, Some(it.pose_seeds.0))?;
        p1.push(e);
        c1.push((cache, posed));
    }
    let mut out = PretrainLoss::default();
    if want_imc {
        let net2 = model.second_view();
        let mut p2 = Vec::with_capacity(items.len());
        let mut c2 = Vec::with_capacity(items.len());
        for it in items {
            let (e, cache, posed) = encode_points_cached(it.cloud, net2, Some(it.pose_seeds.1))?;
            p2.push(e);
            c2.push((cache, posed));
        }
        let l = symmetric_ntxent(&p1, &p2, cfg)?;
        out.imc = l.value;
        if let Some(g) = grads.as_deref_mut() {
            for (i, (cache, posed)) in c1.iter().enumerate() {
                let ge: Vec<f64> = l.grad_a[i].iter().map(|v| v * weights.imc).collect();
                model.point.backward(&posed.points, cache, &ge, &mut g.point);
            }
            let g2 = g.twin.as_mut().unwrap_or(&mut g.point);
            for (i, (cache, posed)) in c2.iter().enumerate() {
                let ge: Vec<f64> = l.grad_b[i].iter().map(|v| v * weights.imc).collect();
                net2.backward(&posed.points, cache, &ge, g2);
            }
        }
    }
    if want_ipc {
        let mut im = Vec::with_capacity(items.len());
        let mut ic = Vec::with_capacity(items.len());
        for it in items {
            let (e, cache) = model.image.forward(it.image)?;
            im.push(e);
            ic.push(cache);
        }
        let l = symmetric_ntxent(&p1, &im, cfg)?;
        out.ipc = l.value;
        if let Some(g) = grads {
            for (i, (cache, posed)) in c1.iter().enumerate() {
                let ge: Vec<f64> = l.grad_a[i].iter().map(|v| v * weights.ipc).collect();
                model.point.backward(&posed.points, cache, &ge, &mut g.point);
            }
            for (i, cache) in ic.iter().enumerate() {
                let ge: Vec<f64> = l.grad_b[i].iter().map(|v| v * weights.ipc).collect();
                model.image.backward(cache, &ge, &mut g.image);
            }
        }
    }
    out.total = weights.imc * out.imc + weights.ipc * out.ipc;
    if !out.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            stage: "pretrain".into(),
            detail: format!("imc={} ipc={}", out.imc, out.ipc),
        });
    }
    Ok(out)
}

pub fn loss_imc(model: &Model, items: &[PretrainItem<'_>], cfg: &ContrastiveConfig) -> Result<f64> {
    let w = PretrainWeights { imc: 1.0, ipc: 0.0 };
    Ok(pretrain_objective(model, items, cfg, w, None)?.imc)
}

pub fn loss_ipc(model: &Model, items: &[PretrainItem<'_>], cfg: &ContrastiveConfig) -> Result<f64> {
    let w = PretrainWeights { imc: 0.0, ipc: 1.0 };
    Ok(pretrain_objective(model, items, cfg, w, None)?.ipc)
}

pub fn loss_pretrain(model: &Model, items: &[PretrainItem<'_>], cfg: &ContrastiveConfig) -> Result<f64> {
    Ok(pretrain_objective(model, items, cfg, PretrainWeights::default(), None)?.total)
}

/// One incremental-stage sample: a frozen backbone embedding, its label and
/// the prototype it is pulled towards (`None` leaves it out of the
/// regularization term).
#[derive(Debug, Clone, Copy)]
pub struct CilItem<'a> {
    pub feature: &'a [f64],
    pub label: usize,
    pub prototype: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CilLoss {
    pub total: f64,
    pub reg: f64,
    pub ce: f64,
}

/// `mean CE(head(adapter(f)), y) + reg_weight * (1 - mean cos(adapter(f), p_y))`.
/// The regularization mean runs over items that carry a prototype.
pub fn cil_objective(
    adapter: &Adapter,
    head: &Head,
    items: &[CilItem<'_>],
    reg_weight: f64,
    grads: Option<(&mut Adapter, &mut Head)>,
) -> Result<CilLoss> {
    if items.is_empty() {
        return Err(Error::Empty);
    }
    let n = items.len() as f64;
    let mut reps = Vec::with_capacity(items.len());
    let mut caches = Vec::with_capacity(items.len());
    for it in items {
        if it.feature.len() != adapter.dim() {
            return Err(Error::ShapeMismatch {
                expected: adapter.dim(),
                got: it.feature.len(),
            });
        }
        if it.label >= head.n_classes {
            return Err(Error::LabelOutOfRange {
                label: it.label,
                n_classes: head.n_classes,
            });
        }
        let (r, c) = adapter.forward(it.feature);
        reps.push(r);
        caches.push(c);
    }
    let want = grads.is_some();
    let mut g_reps = vec![vec![0.0; adapter.dim()]; items.len()];

    let with_proto: Vec<usize> = (0..items.len()).filter(|&i| items[i].prototype.is_some()).collect();
    let mut reg = 0.0;
    if reg_weight != 0.0 && !with_proto.is_empty() {
        let sub: Vec<Vec<f64>> = with_proto.iter().map(|&i| reps[i].clone()).collect();
        let protos: Vec<&[f64]> = with_proto.iter().filter_map(|&i| items[i].prototype).collect();
        let (v, g) = reg_with_grad(&sub, &protos, want)?;
        reg = v;
        for (&i, gi) in with_proto.iter().zip(g) {
            for (a, b) in g_reps[i].iter_mut().zip(gi) {
                *a += reg_weight * b;
            }
        }
    }

    let mut ce = 0.0;
    let mut g_logits = Vec::with_capacity(if want { items.len() } else { 0 });
    for (it, r) in items.iter().zip(&reps) {
        let (v, g) = ce_with_grad(&head.logits(r), it.label)?;
        ce += v / n;
        if want {
            g_logits.push(g.into_iter().map(|x| x / n).collect::<Vec<_>>());
        }
    }

    let total = ce + reg_weight * reg;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            stage: "cil".into(),
            detail: format!("ce={ce} reg={reg}"),
        });
    }
    if let Some((ga, gh)) = grads {
        for i in 0..items.len() {
            let ge = head.backward(&reps[i], &g_logits[i], gh);
            for (a, b) in g_reps[i].iter_mut().zip(ge) {
                *a += b;
            }
            adapter.backward(items[i].feature, &caches[i], &g_reps[i], ga);
        }
    }
    Ok(CilLoss { total, reg, ce })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::geometry::PoseConfig;
    use crate::losses::NtXentVariant;
    use crate::rrm::GrayImage;
    use crate::seed;
    use rand::Rng;

    fn tiny_model(twin: bool) -> Model {
        let cfg = EncoderConfig {
            embed_dim: 4,
            point_hidden: (5, 6),
            image_hidden: 5,
            image_pool: 2,
            adapter_hidden: 3,
            twin_point_encoders: twin,
            pose: PoseConfig::default(),
        };
        Model::new(&cfg, 4, 13).unwrap()
    }

    fn data(n: usize) -> (Vec<PointCloud>, Vec<MultiViewImage>) {
        let mut rng = seed::rng(77);
        let clouds = (0..n)
            .map(|i| {
                let pts = (0..12).map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
                PointCloud::new(pts, format!("c{i}"), Some(i)).unwrap()
            })
            .collect();
        let images = (0..n)
            .map(|i| MultiViewImage {
                views: (0..2)
                    .map(|_| GrayImage {
                        size: 4,
                        levels: (0..16).map(|_| rng.random()).collect(),
                    })
                    .collect(),
                object_id: format!("c{i}"),
                mask_id: None,
                label: Some(i),
            })
            .collect();
        (clouds, images)
    }

    fn check_pretrain_grads(twin: bool) {
        let model = tiny_model(twin);
        let (clouds, images) = data(3);
        let items: Vec<PretrainItem> = (0..3)
            .map(|i| PretrainItem {
                cloud: &clouds[i],
                image: &images[i],
                pose_seeds: (100 + i as u64, 200 + i as u64),
            })
            .collect();
        let cfg = ContrastiveConfig {
            tau: 0.5,
            variant: NtXentVariant::AsPrinted,
        };
        let w = PretrainWeights { imc: 1.0, ipc: 0.7 };
        let mut g = BackboneGrads::zeros(&model);
        pretrain_objective(&model, &items, &cfg, w, Some(&mut g)).unwrap();
        let mut analytic = g.point.flatten();
        if let Some(t) = &g.twin {
            analytic.extend(t.flatten());
        }
        analytic.extend(g.image.flatten());

        let flat = |m: &Model| {
            let mut v = m.point.flatten();
            if let Some(t) = &m.point_twin {
                v.extend(t.flatten());
            }
            v.extend(m.image.flatten());
            v
        };
        let load = |m: &mut Model, v: &[f64]| {
            let np = m.point.num_params();
            m.point.load_flat(&v[..np]);
            let mut off = np;
            if let Some(t) = &mut m.point_twin {
                t.load_flat(&v[off..off + np]);
                off += np;
            }
            m.image.load_flat(&v[off..]);
        };
        let base = flat(&model);
        assert_eq!(base.len(), analytic.len());
        let h = 1e-5;
        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for j in (0..base.len()).step_by(3) {
            let mut v = base.clone();
            v[j] += h;
            load(&mut probe, &v);
            let up = pretrain_objective(&probe, &items, &cfg, w, None).unwrap().total;
            v[j] -= 2.0 * h;
            load(&mut probe, &v);
            let down = pretrain_objective(&probe, &items, &cfg, w, None).unwrap().total;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - analytic[j]).abs() / fd.abs().max(analytic[j].abs()).max(1e-4);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn pretrain_gradients_shared_views() {
        check_pretrain_grads(false);
    }

    #[test]
    fn pretrain_gradients_twin_views() {
        check_pretrain_grads(true);
    }

    #[test]
    fn term_weights_select_losses() {
        let model = tiny_model(false);
        let (clouds, images) = data(3);
        let items: Vec<PretrainItem> = (0..3)
            .map(|i| PretrainItem {
                cloud: &clouds[i],
                image: &images[i],
                pose_seeds: (i as u64, 50 + i as u64),
            })
            .collect();
        let cfg = ContrastiveConfig::default();
        let both = pretrain_objective(&model, &items, &cfg, PretrainWeights::default(), None).unwrap();
        assert!((loss_imc(&model, &items, &cfg).unwrap() - both.imc).abs() < 1e-12);
        assert!((loss_ipc(&model, &items, &cfg).unwrap() - both.ipc).abs() < 1e-12);
        assert!((loss_pretrain(&model, &items, &cfg).unwrap() - both.imc - both.ipc).abs() < 1e-12);
    }

    fn cil_setup() -> (Adapter, Head, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = seed::rng(5);
        let mut adapter = Adapter::identity(4, 3, "a", &mut rng);
        adapter.up = crate::nn::Dense::init(3, 4, 0.5, &mut rng);
        let mut head = Head::new(4);
        head.grow(3);
        for v in &mut head.columns {
            *v = rng.random::<f64>() - 0.5;
        }
        let feats = (0..4).map(|_| (0..4).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let protos = (0..3).map(|_| (0..4).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        (adapter, head, feats, protos)
    }

    #[test]
    fn cil_gradients_match_finite_differences() {
        let (adapter, head, feats, protos) = cil_setup();
        let labels = [0, 2, 1, 2];
        let items: Vec<CilItem> = (0..4)
            .map(|i| CilItem {
                feature: &feats[i],
                label: labels[i],
                prototype: (i != 1).then(|| protos[labels[i]].as_slice()),
            })
            .collect();
        let (mut ga, mut gh) = (adapter.zeros_like(), head.zeros_like());
        cil_objective(&adapter, &head, &items, 0.8, Some((&mut ga, &mut gh))).unwrap();
        let mut analytic = ga.flatten();
        analytic.extend(gh.flatten());
        let na = adapter.num_params();
        let mut base = adapter.flatten();
        base.extend(head.flatten());
        let eval = |v: &[f64]| {
            let (mut a, mut hd) = (adapter.clone(), head.clone());
            a.load_flat(&v[..na]);
            hd.load_flat(&v[na..]);
            cil_objective(&a, &hd, &items, 0.8, None).unwrap().total
        };
        let h = 1e-5;
        for j in 0..base.len() {
            let mut v = base.clone();
            v[j] += h;
            let up = eval(&v);
            v[j] -= 2.0 * h;
            let fd = (up - eval(&v)) / (2.0 * h);
            let err = (fd - analytic[j]).abs() / fd.abs().max(analytic[j].abs()).max(1e-4);
            assert!(err < 1e-4, "param {j}: {fd} vs {}", analytic[j]);
        }
    }

    #[test]
    fn cil_zero_reg_weight_is_plain_ce() {
        let (adapter, head, feats, protos) = cil_setup();
        let items: Vec<CilItem> = (0..4)
            .map(|i| CilItem {
                feature: &feats[i],
                label: i % 3,
                prototype: Some(&protos[i % 3]),
            })
            .collect();
        let l = cil_objective(&adapter, &head, &items, 0.0, None).unwrap();
        assert_eq!(l.total, l.ce);
        let bad = [CilItem {
            feature: &feats[0],
            label: 3,
            prototype: None,
        }];
        assert!(matches!(
            cil_objective(&adapter, &head, &bad, 1.0, None),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
