use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, Luma, Rgb};
use massdet_core::GrayImage;
use serde::de::DeserializeOwned;

use crate::error::{CliError, CliResult};

/// Reads an 8-bit grayscale PNG or binary PGM. Colour images are converted
/// to luma.
pub fn read_gray(path: &Path) -> CliResult<GrayImage> {
    let img = image::open(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let g = img.to_luma8();
    GrayImage::from_u8(g.width() as usize, g.height() as usize, g.as_raw())
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Writes `img` rounded to 8 bits; PGM when the extension is `.pgm`,
/// PNG otherwise.
pub fn write_gray(path: &Path, img: &GrayImage) -> CliResult<()> {
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer matches dimensions");
    let err = |e: &dyn std::fmt::Display| CliError::runtime(format!("{}: {e}", path.display()));
    if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
        return buf.save_with_format(path, ImageFormat::Png).map_err(|e| err(&e));
    }
    let file = fs::File::create(path).map_err(|e| err(&e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(buf.as_raw(), buf.width(), buf.height(), ExtendedColorType::L8)
        .map_err(|e| err(&e))
}

pub fn write_rgb_png(path: &Path, img: &image::ImageBuffer<Rgb<u8>, Vec<u8>>) -> CliResult<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn to_json_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Prepares an output directory. An existing non-empty directory is only
/// reused with `overwrite`; files in it are then replaced one by one.
pub fn prepare_out_dir(dir: &Path, overwrite: bool) -> CliResult<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::validation(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir)
            .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            return Err(CliError::validation(format!(
                "output directory {} is not empty (pass --overwrite)",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

/// Image files (`.png`, `.pgm`) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    list_with(dir, &["png", "pgm"])
}

/// Files with one of `exts` directly inside `dir`, sorted by name.
pub fn list_with(dir: &Path, exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if p.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
