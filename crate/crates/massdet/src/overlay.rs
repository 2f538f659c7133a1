//! Detection overlays: boxes and "class score" captions burned into an RGB
//! copy of the image.

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{ImageBuffer, Rgb, RgbImage};
use massdet_core::detector::Detection;
use massdet_core::GrayImage;

pub const BOX_COLOUR: Rgb<u8> = Rgb([0, 255, 0]);
const TEXT_BG: Rgb<u8> = Rgb([0, 0, 0]);
const GLYPH: i64 = 8;

pub fn render_overlay(img: &GrayImage, dets: &[Detection]) -> RgbImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let gray = img.to_u8();
    let mut out: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
        let v = gray[(y * w + x) as usize];
        Rgb([v, v, v])
    });
    for d in dets {
        let b = d.bbox;
        let (x1, y1, x2, y2) = (b.x1 as i64, b.y1 as i64, b.x2.ceil() as i64 - 1, b.y2.ceil() as i64 - 1);
        for t in 0..2 {
            draw_rect(&mut out, x1 + t, y1 + t, x2 - t, y2 - t, BOX_COLOUR);
        }
        let text = caption(d);
        let ty = if y1 > GLYPH { y1 - GLYPH - 1 } else { y2 + 2 };
        draw_text(&mut out, x1, ty, &text);
    }
    out
}

pub fn caption(d: &Detection) -> String {
    format!("{} {:.2}", d.class.name(), d.score)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_rect(img: &mut RgbImage, x1: i64, y1: i64, x2: i64, y2: i64, c: Rgb<u8>) {
    if x2 < x1 || y2 < y1 {
        return;
    }
    for x in x1..=x2 {
        put(img, x, y1, c);
        put(img, x, y2, c);
    }
    for y in y1..=y2 {
        put(img, x1, y, c);
        put(img, x2, y, c);
    }
}

/// 8×8 bitmap text on a black strip; returns the drawn width in pixels.
pub fn draw_text(img: &mut RgbImage, x0: i64, y0: i64, text: &str) -> i64 {
    let mut x = x0;
    for ch in text.chars() {
        let glyph = BASIC_FONTS.get(ch).unwrap_or([0; 8]);
        for (gy, row) in glyph.iter().enumerate() {
            for gx in 0..GLYPH {
                let on = row >> gx & 1 == 1;
                put(img, x + gx, y0 + gy as i64, if on { BOX_COLOUR } else { TEXT_BG });
            }
        }
        x += GLYPH;
    }
    x - x0
}
