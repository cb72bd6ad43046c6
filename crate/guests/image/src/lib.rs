//! Reads a PNG from the sandbox, applies a filter chain and returns the
//! result as PNG.
//!
//! Input is a JSON `ImageJob`:
//! `{"input_path":"input.png","filters":["grayscale","invert","blur3x3"],"write_output":false,"output_path":"output.png"}`.

use std::io::Cursor;
use std::path::{Component, Path};

use image::{ImageFormat, RgbImage};
use serde::Deserialize;

wit_bindgen::generate!({ world: "function", path: "../wit" });

#[derive(Deserialize, Clone, Copy, Debug)]
#[serde(rename_all = "lowercase")]
enum Filter {
    Grayscale,
    Invert,
    Blur3x3,
}

#[derive(Deserialize)]
struct Job {
    input_path: String,
    filters: Vec<Filter>,
    #[serde(default)]
    write_output: bool,
    #[serde(default = "default_output_path")]
    output_path: String,
}

fn default_output_path() -> String {
    "output.png".to_string()
}

fn check_path(p: &str) -> Result<(), String> {
    if p.is_empty() || Path::new(p).components().any(|c| c == Component::ParentDir) {
        return Err(format!("invalid sandbox path {p:?}"));
    }
    Ok(())
}

fn grayscale(img: &mut RgbImage) {
    for px in img.pixels_mut() {
        let [r, g, b] = px.0;
        let y = (299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000;
        px.0 = [y as u8; 3];
    }
}

fn invert(img: &mut RgbImage) {
    for px in img.pixels_mut() {
        for v in px.0.iter_mut() {
            *v = 255 - *v;
        }
    }
}

fn blur3x3(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let mut sum = [0u32; 3];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as u32;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as u32;
                let p = img.get_pixel(sx, sy).0;
                for c in 0..3 {
                    sum[c] += p[c] as u32;
                }
            }
        }
        image::Rgb(sum.map(|s| ((s + 4) / 9) as u8))
    })
}

fn process(job: &Job) -> Result<Vec<u8>, String> {
    check_path(&job.input_path)?;
    check_path(&job.output_path)?;
    if job.filters.is_empty() {
        return Err("filter list is empty".into());
    }
    let raw = std::fs::read(&job.input_path).map_err(|e| format!("read {}: {e}", job.input_path))?;
    let mut img = image::load_from_memory_with_format(&raw, ImageFormat::Png)
        .map_err(|e| format!("decode {}: {e}", job.input_path))?
        .to_rgb8();
    for f in &job.filters {
        match f {
            Filter::Grayscale => grayscale(&mut img),
            Filter::Invert => invert(&mut img),
            Filter::Blur3x3 => img = blur3x3(&img),
        }
    }
    let mut encoded = Vec::new();
    img.write_to(&mut Cursor::new(&mut encoded), ImageFormat::Png)
        .map_err(|e| format!("encode: {e}"))?;
    if job.write_output {
        write_output(&job.output_path, &encoded)?;
    }
    Ok(encoded)
}

#[cfg(feature = "io")]
fn write_output(path: &str, bytes: &[u8]) -> Result<(), String> {
    std::fs::write(path, bytes).map_err(|e| format!("write {path}: {e}"))
}

#[cfg(not(feature = "io"))]
fn write_output(_path: &str, _bytes: &[u8]) -> Result<(), String> {
    Err("this build does not write output files".into())
}

struct ImageProcessing;

impl Guest for ImageProcessing {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        let job: Job = serde_json::from_slice(&input).map_err(|e| format!("bad job: {e}"))?;
        process(&job)
    }
}

export!(ImageProcessing);
