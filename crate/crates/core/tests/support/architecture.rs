//! Shape and size conformance of the default detector.

use massdet_core::detector::{generate_anchors, roi_pool, BBox};
use massdet_core::model::{image_tensor, Model, ModelConfig};
use massdet_core::rng;
use massdet_core::GrayImage;

use super::preprocess::Check;

/// Scalars in a default checkpoint, batchnorm running statistics included.
pub const DEFAULT_CHECKPOINT_SCALARS: usize = 20_476_229;
/// Trainable scalars of the default model.
pub const DEFAULT_TRAINABLE_SCALARS: usize = 20_473_285;

pub fn architecture_suite() -> Vec<Check> {
    let cfg = ModelConfig::default();
    let mut model = Model::new(cfg.clone(), &mut rng::stream(0, "init")).unwrap();
    let mut out = Vec::new();

    let (h, w) = cfg.backbone.input_size;
    let img = GrayImage::filled(w, h, 128.0).unwrap();
    let feats = model.backbone.forward_infer(&image_tensor(&img)).unwrap();
    let shape = feats.shape().to_vec();
    out.push(Check {
        name: "backbone stride 16",
        pass: model.stride() == 16 && shape == [512, h / 16, w / 16],
        detail: format!("{h}x{w} input gives features {shape:?}"),
    });

    let anchors = generate_anchors(shape[1], shape[2], &cfg.detector.anchors);
    let cell: Vec<BBox> = anchors.boxes[..anchors.per_cell].to_vec();
    let areas: Vec<f64> = cell.iter().map(BBox::area).collect();
    let mut ratios: Vec<f64> = cell.iter().map(|b| b.width() / b.height()).collect();
    let areas_ok = [32.0f64, 64.0, 128.0]
        .iter()
        .all(|s| areas.iter().filter(|&&a| (a - s * s).abs() <= 1e-3).count() == 3);
    ratios.sort_by(f64::total_cmp);
    ratios.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let ratios_ok = ratios.len() == 3
        && [0.5, 1.0, 2.0].iter().zip(&ratios).all(|(want, got)| (want - got).abs() < 1e-9);
    out.push(Check {
        name: "9 anchors per cell",
        pass: anchors.per_cell == 9 && anchors.len() == 9 * shape[1] * shape[2] && areas_ok && ratios_ok,
        detail: format!("{} per cell, areas {areas:.1?}, width/height ratios {ratios:.3?}", anchors.per_cell),
    });

    let roi = BBox { x1: 100.0, y1: 60.0, x2: 260.0, y2: 300.0 };
    let (pooled, _) = roi_pool(&feats, &roi, model.stride(), cfg.detector.head.pool_size).unwrap();
    out.push(Check {
        name: "roi pooled shape",
        pass: pooled.shape() == [512, 5, 5] && model.head.in_features() == 512 * 25,
        detail: format!("pooled {:?}, head input {}", pooled.shape(), model.head.in_features()),
    });

    let scalars = model.to_params().scalar_count();
    let trainable: usize = model.params_mut(massdet_core::model::ParamGroup::All).iter().map(|t| t.len()).sum();
    out.push(Check {
        name: "parameter count",
        pass: scalars == DEFAULT_CHECKPOINT_SCALARS && trainable == DEFAULT_TRAINABLE_SCALARS,
        detail: format!("{scalars} checkpoint scalars, {trainable} trainable"),
    });
    out
}
