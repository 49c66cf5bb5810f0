//! Side-by-side figures: the image, then one heatmap overlay per map, each
//! with a caption strip.

use std::io::Cursor;

use font8x8::legacy::BASIC_LEGACY;
use ia_core::data::{resize_map, AttentionMap, ResizeMode};
use ia_core::{IaError, Result, Scalar};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};

/// Overlay opacity at heatmap value 1.
pub const MAX_ALPHA: f64 = 0.6;
pub const GAP: u32 = 4;
pub const CAPTION_HEIGHT: u32 = 12;

/// Jet colormap on `[0, 1]`.
pub fn jet(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let ch = |c: f64| ((1.5 - (4.0 * v - c).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Blends the colormapped heatmap over the image with opacity
/// `MAX_ALPHA * value`, so zero-valued pixels keep the image unchanged.
pub fn overlay<T: Scalar>(image: &RgbImage, map: &AttentionMap<T>) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    if map.shape() != (h as usize, w as usize) {
        return Err(IaError::Argument(format!(
            "map is {}x{}, image is {h}x{w}",
            map.rows(),
            map.cols()
        )));
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let v = map.get(y as usize, x as usize).to_f64_lossy().clamp(0.0, 1.0);
        if v == 0.0 {
            continue;
        }
        let a = MAX_ALPHA * v;
        let c = jet(v);
        for k in 0..3 {
            px.0[k] = (f64::from(px.0[k]) * (1.0 - a) + f64::from(c[k]) * a).round() as u8;
        }
    }
    Ok(out)
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, max_w: u32) {
    let fits = (max_w / 8) as usize;
    for (i, ch) in text.chars().take(fits).enumerate() {
        let code = if ch.is_ascii() && !ch.is_ascii_control() { ch as usize } else { '?' as usize };
        for (row, bits) in BASIC_LEGACY[code].iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 1 {
                    let (x, y) = (x0 + 8 * i as u32 + col, y0 + row as u32);
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, Rgb([0, 0, 0]));
                    }
                }
            }
        }
    }
}

/// Image panel plus one overlay panel per map. Maps are bilinearly resized
/// to the image first. `labels` holds one caption per map, or one extra
/// leading caption for the image panel.
pub fn figure<T: Scalar>(image: &RgbImage, maps: &[AttentionMap<T>], labels: &[String]) -> Result<RgbImage> {
    if maps.is_empty() {
        return Err(IaError::Argument("figure needs at least one map".into()));
    }
    let captions: Vec<String> = if labels.len() == maps.len() + 1 {
        labels.to_vec()
    } else if labels.len() == maps.len() {
        std::iter::once("image".to_string()).chain(labels.iter().cloned()).collect()
    } else if labels.is_empty() {
        std::iter::once("image".to_string())
            .chain((1..=maps.len()).map(|i| format!("map {i}")))
            .collect()
    } else {
        return Err(IaError::Argument(format!(
            "{} labels for {} maps",
            labels.len(),
            maps.len()
        )));
    };
    let (w, h) = image.dimensions();
    let mut panels = vec![image.clone()];
    for m in maps {
        let m = resize_map(m, h as usize, w as usize, ResizeMode::Bilinear)?;
        panels.push(overlay(image, &m)?);
    }
    let n = panels.len() as u32;
    let mut out = RgbImage::from_pixel(n * w + (n - 1) * GAP, h + CAPTION_HEIGHT, Rgb([255, 255, 255]));
    for (i, (panel, caption)) in panels.iter().zip(&captions).enumerate() {
        let x0 = i as u32 * (w + GAP);
        image::imageops::replace(&mut out, panel, i64::from(x0), 0);
        draw_text(&mut out, caption, x0 + 1, h + 2, w);
    }
    Ok(out)
}

/// PNG bytes with pinned encoder settings.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new_with_quality(&mut buf, CompressionType::Best, FilterType::NoFilter).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf.into_inner())
}
