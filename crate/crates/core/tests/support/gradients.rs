
//! Finite-difference gradient suite shared by the op tests and the
//! acceptance run.

use massdet_core::backbone::BackboneConfig;
use massdet_core::detector::*;
use massdet_core::gradcheck::{check_all, check_indices, ActivationPattern, GradCheck};
use massdet_core::model::{Model, ModelConfig, ParamGroup};
use massdet_core::ops::*;
use massdet_core::rng::{self, Rng};
use massdet_core::training::{assign_head_targets, assign_rpn_targets, head_loss, rpn_loss, HeadTarget, RpnTargets};
use massdet_core::{Mode, Tensor};
use rand::seq::index::sample;
use rand::Rng as _;

const EPS: f32 = 1e-3;
/// Tolerance on the vector relative error of a single op.
pub const OP_TOL: f64 = 1e-3;
/// Tolerance for the whole detector pipeline.
pub const PIPELINE_TOL: f64 = 1e-2;
const PIPELINE_SEED: u64 = 32;

fn rand_vec(rng: &mut Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn rand_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, rand_vec(rng, n, -1.0, 1.0)).unwrap()
}

/// Values whose magnitude stays at least `gap` away from zero.
fn away_from_zero(rng: &mut Rng, n: usize, gap: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn weighted(y: &Tensor, r: &[f32]) -> f64 {
    y.data().iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum()
}


/// One finite-difference comparison and the tolerance it must meet.
#[derive(Debug, Clone)]
pub struct Named {
    pub name: String,
    pub check: GradCheck,
    pub tol: f64,
}

impl Named {
    pub fn passes(&self) -> bool {
        self.check.passes(self.tol)
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: rel err {:.3e} (tol {:.0e}, {} entries, {} skipped at kinks; worst entry {} analytic {:.5} numeric {:.5})",
            self.name,
            self.check.rel_err,
            self.tol,
            self.check.checked,
            self.check.skipped,
            self.check.worst,
            self.check.analytic,
            self.check.numeric
        )
    }
}

fn push(out: &mut Vec<Named>, name: &str, check: GradCheck) {
    out.push(Named { name: name.to_string(), check, tol: OP_TOL });
}

/// Panics with every failing check listed.
pub fn assert_all(checks: &[Named]) {
    assert!(!checks.is_empty());
    let bad: Vec<String> = checks.iter().filter(|c| !c.passes()).map(Named::describe).collect();
    assert!(bad.is_empty(), "gradient checks failed:\n{}", bad.join("\n"));
}

pub fn conv2d_single_channel_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(11);
    let x = rand_tensor(&mut r, &[1, 3, 3]);
    let w = rand_tensor(&mut r, &[1, 1, 3, 3]);
    let b = Tensor::zeros(&[1]);
    let ones = Tensor::full(&[1, 3, 3], 1.0);
    let g = conv2d_backward(&x, &w, 1, Padding::Same, &ones).unwrap();

    let mut xs = x.data().to_vec();
    let c = check_all(&mut xs, g.dx.data(), EPS, |v| {
        let xt = Tensor::new(&[1, 3, 3], v.to_vec()).unwrap();
        conv2d(&xt, &w, &b, 1, Padding::Same).unwrap().sum()
    });
    push(out, "conv2d 3x3 dx", c);
    let mut ws = w.data().to_vec();
    let c = check_all(&mut ws, g.dw.data(), EPS, |v| {
        let wt = Tensor::new(&[1, 1, 3, 3], v.to_vec()).unwrap();
        conv2d(&x, &wt, &b, 1, Padding::Same).unwrap().sum()
    });
    push(out, "conv2d 3x3 dw", c);
}

pub fn conv2d_strided_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(12);
    for (stride, padding) in [(1, Padding::Same), (2, Padding::Same), (1, Padding::Valid), (2, Padding::Valid)] {
        let x = rand_tensor(&mut r, &[2, 6, 5]);
        let w = rand_tensor(&mut r, &[3, 2, 3, 3]);
        let b = rand_tensor(&mut r, &[3]);
        let y = conv2d(&x, &w, &b, stride, padding).unwrap();
        let rw = rand_vec(&mut r, y.len(), -1.0, 1.0);
        let gy = Tensor::new(y.shape(), rw.clone()).unwrap();
        let g = conv2d_backward(&x, &w, stride, padding, &gy).unwrap();
        let mut xs = x.data().to_vec();
        push(out, 
            &format!("conv2d dx s{stride} {padding:?}"),
            check_all(&mut xs, g.dx.data(), EPS, |v| {
                let xt = Tensor::new(x.shape(), v.to_vec()).unwrap();
                weighted(&conv2d(&xt, &w, &b, stride, padding).unwrap(), &rw)
            }),
        );
        let mut ws = w.data().to_vec();
        push(out, 
            &format!("conv2d dw s{stride} {padding:?}"),
            check_all(&mut ws, g.dw.data(), EPS, |v| {
                let wt = Tensor::new(w.shape(), v.to_vec()).unwrap();
                weighted(&conv2d(&x, &wt, &b, stride, padding).unwrap(), &rw)
            }),
        );
        let mut bs = b.data().to_vec();
        push(out, 
            &format!("conv2d db s{stride} {padding:?}"),
            check_all(&mut bs, g.db.data(), EPS, |v| {
                let bt = Tensor::new(b.shape(), v.to_vec()).unwrap();
                weighted(&conv2d(&x, &w, &bt, stride, padding).unwrap(), &rw)
            }),
        );
    }
}

pub fn relu_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(13);
    let x = Tensor::new(&[2, 3, 3], away_from_zero(&mut r, 18, 0.05)).unwrap();
    let rw = rand_vec(&mut r, 18, -1.0, 1.0);
    let g = relu_backward(&x, &Tensor::new(x.shape(), rw.clone()).unwrap()).unwrap();
    let mut xs = x.data().to_vec();
    push(out, 
        "relu",
        check_all(&mut xs, g.data(), EPS, |v| {
            weighted(&relu(&Tensor::new(x.shape(), v.to_vec()).unwrap()), &rw)
        }),
    );
}

pub fn batchnorm_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(14);
    let shape = [3, 4, 4];
    let x = rand_tensor(&mut r, &shape);
    let gamma = Tensor::new(&[3], rand_vec(&mut r, 3, 0.5, 1.5)).unwrap();
    let beta = rand_tensor(&mut r, &[3]);
    let rw = rand_vec(&mut r, x.len(), -1.0, 1.0);
    let p = BatchNormParams::default();
    let fwd = |x: &Tensor, g: &Tensor, b: &Tensor| {
        let (mut rm, mut rv) = (Tensor::zeros(&[3]), Tensor::full(&[3], 1.0));
        batchnorm(x, g, b, &mut rm, &mut rv, Mode::Train, p).unwrap()
    };
    let (_, cache) = fwd(&x, &gamma, &beta);
    let gy = Tensor::new(&shape, rw.clone()).unwrap();
    let g = batchnorm_backward(cache.as_ref().unwrap(), &gamma, &gy).unwrap();

    let mut xs = x.data().to_vec();
    push(out, 
        "bn dx",
        check_all(&mut xs, g.dx.data(), EPS, |v| {
            weighted(&fwd(&Tensor::new(&shape, v.to_vec()).unwrap(), &gamma, &beta).0, &rw)
        }),
    );
    let mut gs = gamma.data().to_vec();
    push(out, 
        "bn dgamma",
        check_all(&mut gs, g.dgamma.data(), EPS, |v| {
            weighted(&fwd(&x, &Tensor::new(&[3], v.to_vec()).unwrap(), &beta).0, &rw)
        }),
    );
    let mut bs = beta.data().to_vec();
    push(out, 
        "bn dbeta",
        check_all(&mut bs, g.dbeta.data(), EPS, |v| {
            weighted(&fwd(&x, &gamma, &Tensor::new(&[3], v.to_vec()).unwrap()).0, &rw)
        }),
    );
}

pub fn maxpool_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(15);
    // a permutation of well-separated values keeps every window's argmax stable
    let n = 2 * 4 * 6;
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.01).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        vals.swap(i, j);
    }
    let x = Tensor::new(&[2, 4, 6], vals).unwrap();
    let (y, idx) = maxpool2x2(&x).unwrap();
    let rw = rand_vec(&mut r, y.len(), -1.0, 1.0);
    let g = maxpool2x2_backward(&idx, &Tensor::new(y.shape(), rw.clone()).unwrap()).unwrap();
    let mut xs = x.data().to_vec();
    push(out, 
        "maxpool",
        check_all(&mut xs, g.data(), EPS, |v| {
            weighted(&maxpool2x2(&Tensor::new(x.shape(), v.to_vec()).unwrap()).unwrap().0, &rw)
        }),
    );
}

pub fn dropout_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(16);
    let x = rand_tensor(&mut r, &[40]);
    let (_, mask) = dropout(&x, 0.5, Mode::Train, &mut rng::from_seed(99)).unwrap();
    let rw = rand_vec(&mut r, 40, -1.0, 1.0);
    let g = dropout_backward(mask.as_ref(), &Tensor::from_vec(rw.clone())).unwrap();
    let mut xs = x.data().to_vec();
    push(out, 
        "dropout",
        check_all(&mut xs, g.data(), EPS, |v| {
            // same seed reproduces the same mask
            let (y, _) =
                dropout(&Tensor::from_vec(v.to_vec()), 0.5, Mode::Train, &mut rng::from_seed(99)).unwrap();
            weighted(&y, &rw)
        }),
    );
}

pub fn dense_softmax_ce_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(17);
    let x = rand_tensor(&mut r, &[6]);
    let w = rand_tensor(&mut r, &[3, 6]);
    let b = rand_tensor(&mut r, &[3]);
    let label = 2;
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
        let logits = dense(x, w, b).unwrap();
        cross_entropy(&softmax(logits.data()), label)
    };
    let logits = dense(&x, &w, &b).unwrap();
    let probs = softmax(logits.data());
    let dlogits = softmax_cross_entropy_grad(&probs, label);
    let g = dense_backward(&x, &w, &Tensor::from_vec(dlogits.clone())).unwrap();

    let mut xs = x.data().to_vec();
    push(out, 
        "dense dx",
        check_all(&mut xs, g.dx.data(), EPS, |v| loss(&Tensor::from_vec(v.to_vec()), &w, &b)),
    );
    let mut ws = w.data().to_vec();
    push(out, 
        "dense dw",
        check_all(&mut ws, g.dw.data(), EPS, |v| {
            loss(&x, &Tensor::new(&[3, 6], v.to_vec()).unwrap(), &b)
        }),
    );
    let mut bs = b.data().to_vec();
    push(out, 
        "dense db",
        check_all(&mut bs, g.db.data(), EPS, |v| loss(&x, &w, &Tensor::from_vec(v.to_vec()))),
    );

    // softmax VJP alone, and the explicit CE-on-probs route agrees with the fused one
    let mut ls = logits.data().to_vec();
    let via_probs = softmax_backward(&probs, &cross_entropy_grad_probs(&probs, label));
    let fused = via_probs.iter().zip(&dlogits).all(|(a, b)| (a - b).abs() < 1e-5);
    assert!(fused, "softmax-then-CE gradient disagrees with the fused form");
    let rw = rand_vec(&mut r, 3, -1.0, 1.0);
    let g = softmax_backward(&probs, &rw);
    push(out, 
        "softmax",
        check_all(&mut ls, &g, EPS, |v| {
            softmax(v).iter().zip(&rw).map(|(&p, &w)| p as f64 * w as f64).sum()
        }),
    );
}

pub fn dense_rows_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(18);
    let x = rand_tensor(&mut r, &[4, 5]);
    let w = rand_tensor(&mut r, &[3, 5]);
    let b = rand_tensor(&mut r, &[3]);
    let rw = rand_vec(&mut r, 12, -1.0, 1.0);
    let g = dense_rows_backward(&x, &w, &Tensor::new(&[4, 3], rw.clone()).unwrap()).unwrap();
    let mut xs = x.data().to_vec();
    push(out, 
        "rows dx",
        check_all(&mut xs, g.dx.data(), EPS, |v| {
            weighted(&dense_rows(&Tensor::new(&[4, 5], v.to_vec()).unwrap(), &w, &b).unwrap(), &rw)
        }),
    );
    let mut ws = w.data().to_vec();
    push(out, 
        "rows dw",
        check_all(&mut ws, g.dw.data(), EPS, |v| {
            weighted(&dense_rows(&x, &Tensor::new(&[3, 5], v.to_vec()).unwrap(), &b).unwrap(), &rw)
        }),
    );
}

pub fn smooth_l1_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(19);
    // keep |d| away from the ±1 kink
    let pred: Vec<f32> = vec![0.3, -1.7, 2.4, -0.2];
    let target = rand_vec(&mut r, 4, -0.05, 0.05);
    let g = smooth_l1_grad(&pred, &target);
    let mut ps = pred.clone();
    push(out, "smooth_l1", check_all(&mut ps, &g, EPS, |v| smooth_l1(v, &target)));
}

pub fn roi_pool_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(20);
    let n = 3 * 6 * 7;
    // distinct, well separated values keep every bin's argmax stable
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.01 - 0.5).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        vals.swap(i, j);
    }
    let feats = Tensor::new(&[3, 6, 7], vals).unwrap();
    for roi in [BBox::new(3.0, 5.0, 70.0, 60.0).unwrap(), BBox::new(20.0, 10.0, 45.0, 90.0).unwrap()] {
        let (y, idx) = roi_pool(&feats, &roi, 16, 3).unwrap();
        let rw = rand_vec(&mut r, y.len(), -1.0, 1.0);
        let mut g = vec![0.0; feats.len()];
        roi_pool_backward(&idx, &rw, &mut g).unwrap();
        let mut xs = feats.data().to_vec();
        push(
            out,
            "roi_pool",
            check_all(&mut xs, &g, EPS, |v| {
                let f = Tensor::new(&[3, 6, 7], v.to_vec()).unwrap();
                weighted(&roi_pool(&f, &roi, 16, 3).unwrap().0, &rw)
            }),
        );
    }
}

pub fn rpn_component_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(21);
    let rpn = Rpn::new(3, 4, 2, &mut r);
    let feats = rand_tensor(&mut r, &[3, 3, 4]);
    let (o, _) = rpn.forward(&feats).unwrap();
    let rl = rand_vec(&mut r, o.logits.len(), -1.0, 1.0);
    let rd = rand_vec(&mut r, o.deltas.len(), -1.0, 1.0);
    let loss = |rpn: &Rpn, f: &Tensor| {
        let (o, _) = rpn.forward(f).unwrap();
        weighted(&o.logits, &rl) + weighted(&o.deltas, &rd)
    };
    let mut m = rpn.clone();
    let (_, cache) = m.forward(&feats).unwrap();
    let dx = m
        .backward(&cache, &Tensor::new(o.logits.shape(), rl.clone()).unwrap(), &Tensor::new(o.deltas.shape(), rd.clone()).unwrap())
        .unwrap();
    let mut xs = feats.data().to_vec();
    push(out, "rpn dfeatures", check_all(&mut xs, dx.data(), EPS, |v| loss(&rpn, &Tensor::new(feats.shape(), v.to_vec()).unwrap())));
    for k in 0..6 {
        let analytic = m.trainable_mut()[k].grad().unwrap().to_vec();
        let mut p = rpn.clone();
        let mut xs = p.trainable_mut()[k].data().to_vec();
        let c = check_all(&mut xs, &analytic, EPS, |v| {
            p.trainable_mut()[k].data_mut().copy_from_slice(v);
            loss(&p, &feats)
        });
        push(out, &format!("rpn param {k}"), c);
    }
}

pub fn head_component_checks(out: &mut Vec<Named>) {
    let mut r = rng::from_seed(22);
    let cfg = HeadConfig { hidden: 7, dropout_rate: 0.5, pool_size: 2 };
    let mut head = Head::new(cfg, 8, &mut r);
    for t in head.trainable_mut() {
        let v = rand_vec(&mut r, t.len(), -0.6, 0.6);
        t.data_mut().copy_from_slice(&v);
    }
    let x = rand_tensor(&mut r, &[3, 8]);
    let rl = rand_vec(&mut r, 3 * NUM_CLASSES, -1.0, 1.0);
    let rd = rand_vec(&mut r, 3 * 4 * NUM_CLASSES, -1.0, 1.0);
    // the head exposes probabilities, so the class term weights log-probabilities
    let loss = |h: &Head, x: &Tensor| {
        let (o, _) = h.forward(x, Mode::Train, &mut rng::from_seed(5)).unwrap();
        let lp: f64 = o.probs.data().iter().zip(&rl).map(|(&p, &w)| (p as f64).ln() * w as f64).sum();
        lp + weighted(&o.deltas, &rd)
    };
    let mut m = head.clone();
    let (_, cache) = m.forward(&x, Mode::Train, &mut rng::from_seed(5)).unwrap();
    // d/dlogit of sum_k w_k log p_k is w − p·sum(w)
    let (o, _) = head.forward(&x, Mode::Train, &mut rng::from_seed(5)).unwrap();
    let gl: Vec<f32> = rl
        .chunks(NUM_CLASSES)
        .zip(o.probs.data().chunks(NUM_CLASSES))
        .flat_map(|(w, p)| {
            let s: f32 = w.iter().sum();
            w.iter().zip(p).map(move |(w, p)| w - p * s).collect::<Vec<_>>()
        })
        .collect();
    let dx = m
        .backward(&cache, &Tensor::new(&[3, NUM_CLASSES], gl).unwrap(), &Tensor::new(&[3, 4 * NUM_CLASSES], rd.clone()).unwrap())
        .unwrap();
    let mut xs = x.data().to_vec();
    push(out, "head dx", check_all(&mut xs, dx.data(), EPS, |v| loss(&head, &Tensor::new(&[3, 8], v.to_vec()).unwrap())));
    for k in 0..8 {
        let analytic = m.trainable_mut()[k].grad().unwrap().to_vec();
        let mut p = head.clone();
        let mut xs = p.trainable_mut()[k].data().to_vec();
        let c = check_all(&mut xs, &analytic, EPS, |v| {
            p.trainable_mut()[k].data_mut().copy_from_slice(v);
            loss(&p, &x)
        });
        push(out, &format!("head param {k}"), c);
    }
}

/// Every per-op check.
pub fn op_suite() -> Vec<Named> {
    let mut out = Vec::new();
    conv2d_single_channel_checks(&mut out);
    conv2d_strided_checks(&mut out);
    relu_checks(&mut out);
    batchnorm_checks(&mut out);
    maxpool_checks(&mut out);
    dropout_checks(&mut out);
    dense_softmax_ce_checks(&mut out);
    dense_rows_checks(&mut out);
    smooth_l1_checks(&mut out);
    roi_pool_checks(&mut out);
    rpn_component_checks(&mut out);
    head_component_checks(&mut out);
    out
}

/// A tiny detector with frozen targets, ROIs and dropout masks; the loss is
/// the sum of the RPN and head losses.
pub struct TinyPipeline {
    pub model: Model,
    pub image: Tensor,
    pub anchors: AnchorSet,
    pub rpn_targets: RpnTargets,
    pub head_targets: Vec<HeadTarget>,
}

impl TinyPipeline {
    pub fn new(seed: u64) -> Self {
        Self::with(seed, 32, vec![2, 2, 2, 2, 2])
    }

    pub fn with(seed: u64, size: usize, filters: Vec<usize>) -> Self {
        let mut r = rng::from_seed(seed);
        let cfg = ModelConfig {
            backbone: BackboneConfig {
                filters,
                input_size: (size, size),
                ..BackboneConfig::default()
            },
            detector: DetectorConfig {
                anchors: AnchorConfig { scales: vec![16.0, 32.0, 48.0], ..AnchorConfig::default() },
                rpn_channels: 4,
                head: HeadConfig { hidden: 6, dropout_rate: 0.5, pool_size: 2 },
                ..DetectorConfig::default()
            },
        };
        let mut model = Model::new(cfg, &mut r).unwrap();
        condition(&mut model, &mut r);
        let image = Tensor::new(&[1, size, size], rand_vec(&mut r, size * size, 0.0, 1.0)).unwrap();
        let anchors = generate_anchors(size / 16, size / 16, &model.config.detector.anchors);
        let k = size as f64 / 64.0;
        let gts = vec![
            Annotation { bbox: BBox::new(8.0 * k, 8.0 * k, 40.0 * k, 40.0 * k).unwrap(), class: Class::Benign },
            Annotation { bbox: BBox::new(30.0 * k, 26.0 * k, 58.0 * k, 54.0 * k).unwrap(), class: Class::Malignant },
        ];
        let gt_boxes: Vec<BBox> = gts.iter().map(|a| a.bbox).collect();
        let rpn_targets = assign_rpn_targets(&anchors, &gt_boxes, 0.7, 0.3, 32, 0.5, &mut r).unwrap();
        let proposals: Vec<BBox> = (0..12)
            .map(|_| {
                let (x, y) = (r.random_range(0.0..40.0) * k, r.random_range(0.0..40.0) * k);
                let (w, h) = (r.random_range(12.0..24.0) * k, r.random_range(12.0..24.0) * k);
                BBox::new(x, y, x + w, y + h).unwrap()
            })
            .collect();
        let head_targets = assign_head_targets(&proposals, &gts, 0.5, (0.0, 0.5), 8, 0.5, true, &mut r);
        Self { model, image, anchors, rpn_targets, head_targets }
    }

    /// Loss, activation pattern and, with `backward`, the image gradient
    /// (parameter gradients accumulate in `model`).
    pub fn forward(&self, model: &mut Model, image: &Tensor, backward: bool) -> (f64, ActivationPattern, Option<Tensor>) {
        let mut pattern = ActivationPattern::new();
        let (feats, bcache) = model.backbone.forward_train(image, &mut rng::from_seed(7)).unwrap();
        bcache.record_pattern(&mut pattern);
        let (rout, rcache) = model.rpn.forward(&feats).unwrap();
        rcache.record_pattern(&mut pattern);
        let rl = rpn_loss(&rout, &self.anchors, &self.rpn_targets).unwrap();
        let ps = model.head.config.pool_size;
        let stride = model.stride();
        let mut pooled = Vec::new();
        let mut idx = Vec::new();
        for t in &self.head_targets {
            let (p, i) = roi_pool(&feats, &t.roi, stride, ps).unwrap();
            pattern.winners(&i.argmax);
            pooled.extend_from_slice(p.data());
            idx.push(i);
        }
        let row = model.head.in_features();
        let xin = Tensor::new(&[self.head_targets.len(), row], pooled).unwrap();
        let (hout, hcache) = model.head.forward(&xin, Mode::Train, &mut rng::from_seed(8)).unwrap();
        hcache.record_pattern(&mut pattern);
        let hl = head_loss(&hout, &self.head_targets).unwrap();
        let loss = rl.total() + hl.total();
        if !backward {
            return (loss, pattern, None);
        }
        let gh = model.head.backward(&hcache, &hl.grad_logits, &hl.grad_deltas).unwrap();
        let mut dfeat = model.rpn.backward(&rcache, &rl.grad_logits, &rl.grad_deltas).unwrap();
        for (k, i) in idx.iter().enumerate() {
            roi_pool_backward(i, &gh.data()[k * row..(k + 1) * row], dfeat.data_mut()).unwrap();
        }
        let dx = model.backbone.backward(&bcache, &dfeat).unwrap();
        (loss, pattern, Some(dx))
    }

    pub fn clone_parts(&self) -> Self {
        Self {
            model: self.model.clone(),
            image: self.image.clone(),
            anchors: self.anchors.clone(),
            rpn_targets: self.rpn_targets.clone(),
            head_targets: self.head_targets.clone(),
        }
    }

    pub fn loss(&self) -> f64 {
        self.forward(&mut self.model.clone(), &self.image, false).0
    }

    /// Loss at a perturbed point, or NaN when the perturbation moved any
    /// ReLU or max-pool switch relative to `base`.
    fn smooth_loss(&self, model: &Model, image: &Tensor, base: &ActivationPattern) -> f64 {
        let (loss, pattern, _) = self.forward(&mut model.clone(), image, false);
        if pattern == *base {
            loss
        } else {
            f64::NAN
        }
    }
}

/// Redraws every weight from a variance-preserving uniform law and every
/// bias, shift and scale from a positive range, so units sit away from
/// ReLU kinks and gradients stay well above float32 rounding noise.
pub fn condition(model: &mut Model, r: &mut Rng) {
    for t in model.params_mut(ParamGroup::All) {
        let n = t.len();
        let v = if t.rank() == 1 {
            rand_vec(r, n, 0.1, 0.4)
        } else {
            let fan_in = n / t.shape()[0];
            let s = (3.0 / fan_in as f32).sqrt();
            rand_vec(r, n, -s, s)
        };
        t.data_mut().copy_from_slice(&v);
    }
    for bl in &mut model.backbone.blocks {
        let g = rand_vec(r, bl.gamma.len(), 0.8, 1.2);
        bl.gamma.data_mut().copy_from_slice(&g);
    }
}

/// End-to-end checks of the tiny pipeline with kink-straddling entries
/// skipped: one over sampled input pixels and one over up to `per_tensor`
/// sampled entries of every trainable tensor taken together.
pub fn pipeline_suite(per_tensor: usize) -> Vec<Named> {
    pipeline_suite_with(TinyPipeline::new(PIPELINE_SEED), per_tensor, EPS)
}

pub fn pipeline_suite_with(p: TinyPipeline, per_tensor: usize, eps: f32) -> Vec<Named> {
    let mut m = p.model.clone();
    let (_, base, dx) = p.forward(&mut m, &p.image, true);
    let dx = dx.unwrap();
    let mut r = rng::from_seed(32);
    let mut pick = |n: usize, offset: usize| -> Vec<usize> {
        let mut v: Vec<usize> = sample(&mut r, n, per_tensor.min(n)).into_iter().map(|i| i + offset).collect();
        v.sort_unstable();
        v
    };
    let mut xs = p.image.data().to_vec();
    let idx = pick(xs.len(), 0);
    let image_check = check_indices(&mut xs, dx.data(), idx, eps, |v| {
        let img = Tensor::new(p.image.shape(), v.to_vec()).unwrap();
        p.smooth_loss(&p.model, &img, &base)
    });

    let mut analytic = Vec::new();
    let mut flat = Vec::new();
    let mut sizes = Vec::new();
    let mut indices = Vec::new();
    let mut probe = p.model.clone();
    for (t, g) in probe.params_mut(ParamGroup::All).into_iter().zip(m.params_mut(ParamGroup::All)) {
        indices.extend(pick(t.len(), flat.len()));
        flat.extend_from_slice(t.data());
        analytic.extend(g.grad().map_or_else(|| vec![0.0; t.len()], <[f32]>::to_vec));
        sizes.push(t.len());
    }
    let param_check = check_indices(&mut flat, &analytic, indices, eps, |v| {
        let mut off = 0;
        for (t, &n) in probe.params_mut(ParamGroup::All).into_iter().zip(&sizes) {
            t.data_mut().copy_from_slice(&v[off..off + n]);
            off += n;
        }
        p.smooth_loss(&probe, &p.image, &base)
    });
    vec![
        Named { name: "pipeline d/dimage".into(), check: image_check, tol: PIPELINE_TOL },
        Named { name: "pipeline d/dparams".into(), check: param_check, tol: PIPELINE_TOL },
    ]
}
