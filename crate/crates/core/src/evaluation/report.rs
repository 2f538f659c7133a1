//! Plain-text report renderers. Output depends only on the report values,
//! so identical inputs give identical bytes.

use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use super::metrics::MetricsReport;

/// Published detection rates for the overlap thresholds 1, 0.75, 0.5 and
/// 0.25, measured on private clinical data. Listed beside our values for
/// layout comparison only.
pub const REFERENCE_RATES: [(f64, f64); 4] = [(1.0, 0.3626), (0.75, 0.5875), (0.5, 0.7834), (0.25, 0.942)];

/// Published accuracy, sensitivity, specificity, precision and AUC on the
/// same private data.
pub const REFERENCE_METRICS: [(&str, f64); 5] = [
    ("accuracy", 0.9186),
    ("sensitivity", 0.9467),
    ("specificity", 0.8969),
    ("precision", 0.8765),
    ("auc", 0.922),
];

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => String::from("null"),
    }
}

pub fn metrics_csv(r: &MetricsReport) -> String {
    let m = &r.metrics;
    let c = &r.confusion;
    let mut s = String::from("metric,value,reference\n");
    let values = [m.accuracy, m.sensitivity, m.specificity, m.precision, r.auc];
    for ((name, reference), v) in REFERENCE_METRICS.iter().zip(values) {
        let _ = writeln!(s, "{name},{},{reference:.4}", num(v));
    }
    let _ = writeln!(s, "matched_class_accuracy,{},", num(r.matched_class_accuracy));
    for (name, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
        let _ = writeln!(s, "{name},{v},");
    }
    let _ = writeln!(s, "threshold,{:.2},", r.threshold);
    let _ = writeln!(s, "images,{},", r.n_images);
    let _ = writeln!(s, "ground_truth,{},", r.n_ground_truth);
    let _ = writeln!(s, "detections,{},", r.n_detections);
    s
}

pub fn iou_table_csv(r: &MetricsReport) -> String {
    let mut s = String::from("threshold,detection_rate,mean_iou,matched,total_gt,reference_rate\n");
    for row in &r.iou_table {
        let reference = REFERENCE_RATES
            .iter()
            .find(|(t, _)| *t == row.threshold)
            .map_or(String::new(), |(_, v)| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{:.2},{},{},{},{},{}",
            row.threshold,
            num(row.detection_rate),
            num(row.mean_iou),
            row.matched,
            row.total_gt,
            reference
        );
    }
    s
}

pub fn roc_points_csv(r: &MetricsReport) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in &r.roc_points {
        let _ = writeln!(s, "{f:.6},{t:.6}");
    }
    s
}

/// ROC plot: unit square, chance diagonal, curve through the ROC points
/// and the AUC printed to four decimals.
pub fn roc_svg(r: &MetricsReport) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let px = |v: f64| PAD + v * (SIZE - 2.0 * PAD);
    let py = |v: f64| SIZE - PAD - v * (SIZE - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"black\"/>",
        w = SIZE - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{v:.2}</text>",
            px(v),
            SIZE - PAD + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>",
            PAD - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">False positive rate</text>",
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">True positive rate</text>",
        SIZE / 2.0,
        SIZE / 2.0
    );
    if !r.roc_points.is_empty() {
        let mut pts = String::new();
        for (i, (f, t)) in r.roc_points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", px(*f), py(*t));
        }
        let _ = writeln!(s, "<polyline points=\"{pts}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>");
    }
    let auc = r.auc.map_or(String::from("n/a"), |a| format!("{a:.4}"));
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"end\">AUC = {auc}</text>",
        px(1.0) - 6.0,
        py(0.0) - 8.0
    );
    s.push_str("</svg>\n");
    s
}
