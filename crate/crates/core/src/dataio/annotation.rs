use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detector::{Annotation, BBox, Class};
use crate::error::{arg_err, Result};

/// One labelled shape of a labelMe-style annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_type: Option<String>,
}

/// Subset of the labelMe JSON layout. Unknown fields are ignored on read
/// and never written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    #[serde(rename = "imagePath")]
    pub image_path: String,
    pub shapes: Vec<Shape>,
    #[serde(rename = "imageWidth", default, skip_serializing_if = "Option::is_none")]
    pub image_width: Option<usize>,
    #[serde(rename = "imageHeight", default, skip_serializing_if = "Option::is_none")]
    pub image_height: Option<usize>,
}

impl AnnotationFile {
    /// Rectangle shapes for `anns`.
    pub fn from_annotations(image_path: &str, anns: &[Annotation], size: Option<(usize, usize)>) -> Self {
        Self {
            image_path: image_path.to_string(),
            shapes: anns
                .iter()
                .map(|a| Shape {
                    label: a.class.name().to_string(),
                    points: alloc::vec![[a.bbox.x1, a.bbox.y1], [a.bbox.x2, a.bbox.y2]],
                    shape_type: Some("rectangle".to_string()),
                })
                .collect(),
            image_width: size.map(|s| s.0),
            image_height: size.map(|s| s.1),
        }
    }

    /// Boxes as the axis-aligned hull of each shape's points.
    pub fn annotations(&self) -> Result<Vec<Annotation>> {
        if self.shapes.is_empty() {
            return Err(arg_err!("annotation for {:?} has no shapes", self.image_path));
        }
        self.shapes
            .iter()
            .map(|s| {
                let class = Class::parse(&s.label)?;
                let xs = s.points.iter().map(|p| p[0]);
                let ys = s.points.iter().map(|p| p[1]);
                let x1 = xs.clone().fold(f64::INFINITY, f64::min);
                let x2 = xs.fold(f64::NEG_INFINITY, f64::max);
                let y1 = ys.clone().fold(f64::INFINITY, f64::min);
                let y2 = ys.fold(f64::NEG_INFINITY, f64::max);
                let bbox = BBox::new(x1, y1, x2, y2)
                    .map_err(|_| arg_err!("shape {:?} of {:?} has no area", s.label, self.image_path))?;
                Ok(Annotation { bbox, class })
            })
            .collect()
    }
}
