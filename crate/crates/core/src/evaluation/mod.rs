//! Detection matching, overlap tables, confusion metrics, ROC analysis and
//! report rendering.

mod metrics;
mod report;
mod roc;

pub use metrics::{
    confusion_metrics, detection_table, evaluate, match_detections, ClassMetrics, Confusion, ImageResult, IouRow,
    MatchPair, MatchResult, MetricsReport, DEFAULT_THRESHOLD, THRESHOLDS,
};
pub use report::{iou_table_csv, metrics_csv, roc_points_csv, roc_svg, REFERENCE_METRICS, REFERENCE_RATES};
pub use roc::{roc_auc, RocCurve};
