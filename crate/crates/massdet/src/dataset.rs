//! On-disk dataset layout: `images/<id>.png`, `annotations/<id>.json`
//! (labelMe subset) and an optional `manifest.json` split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use massdet_core::dataio::{Annotation, AnnotationFile, SplitManifest};
use massdet_core::GrayImage;

use crate::error::{CliError, CliResult};
use crate::io;

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    images: BTreeMap<String, PathBuf>,
}

impl Dataset {
    pub fn open(root: &Path) -> CliResult<Self> {
        let dir = root.join(IMAGES_DIR);
        if !dir.is_dir() {
            return Err(CliError::validation(format!("{} has no {IMAGES_DIR}/ directory", root.display())));
        }
        let mut images = BTreeMap::new();
        for p in io::list_images(&dir)? {
            if let Some(prev) = images.insert(io::stem(&p), p.clone()) {
                return Err(CliError::validation(format!(
                    "duplicate image id: {} and {}",
                    prev.display(),
                    p.display()
                )));
            }
        }
        if images.is_empty() {
            return Err(CliError::validation(format!("{} contains no images", dir.display())));
        }
        Ok(Self { root: root.to_path_buf(), images })
    }

    /// Image ids in sorted order.
    pub fn ids(&self) -> Vec<String> {
        self.images.keys().cloned().collect()
    }

    pub fn image_path(&self, id: &str) -> CliResult<&Path> {
        self.images
            .get(id)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::validation(format!("unknown image id {id:?}")))
    }

    pub fn annotation_path(&self, id: &str) -> PathBuf {
        self.root.join(ANNOTATIONS_DIR).join(format!("{id}.json"))
    }

    pub fn load_image(&self, id: &str) -> CliResult<GrayImage> {
        io::read_gray(self.image_path(id)?)
    }

    pub fn load_annotations(&self, id: &str) -> CliResult<Vec<Annotation>> {
        load_annotation_file(&self.annotation_path(id))
    }

    /// The stored split, if the dataset has one.
    pub fn manifest(&self) -> CliResult<Option<SplitManifest>> {
        let p = self.root.join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        let m: SplitManifest = io::read_json(&p)?;
        for id in m.train.iter().chain(&m.val).chain(&m.test) {
            self.image_path(id)
                .map_err(|_| CliError::validation(format!("{}: id {id:?} has no image", p.display())))?;
        }
        Ok(Some(m))
    }
}

pub fn load_annotation_file(path: &Path) -> CliResult<Vec<Annotation>> {
    let f: AnnotationFile = io::read_json(path)?;
    f.annotations()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn write_annotation_file(path: &Path, image_path: &str, anns: &[Annotation], size: (usize, usize)) -> CliResult<()> {
    let f = AnnotationFile::from_annotations(image_path, anns, Some(size));
    io::write_file(path, io::to_json_pretty(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use massdet_core::dataio::{BBox, Class};

    #[test]
    fn annotation_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let anns = vec![
            Annotation { bbox: BBox::new(1.0, 2.0, 30.5, 40.0).unwrap(), class: Class::Benign },
            Annotation { bbox: BBox::new(5.0, 6.0, 7.0, 8.0).unwrap(), class: Class::Malignant },
        ];
        write_annotation_file(&p, "../images/a.png", &anns, (64, 64)).unwrap();
        assert_eq!(load_annotation_file(&p).unwrap(), anns);
    }

    #[test]
    fn open_requires_images() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Dataset::open(dir.path()).is_err());
        std::fs::create_dir(dir.path().join(IMAGES_DIR)).unwrap();
        assert!(Dataset::open(dir.path()).is_err());
    }
}
