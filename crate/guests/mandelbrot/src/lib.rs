//! Sequential escape-time Mandelbrot renderer.
//!
//! Input is a JSON object (every field optional):
//! `{"width":800,"height":600,"max_iter":1000,"viewport":{"re_min":-2.5,"re_max":1.0,"im_min":-1.0,"im_max":1.0}}`.
//! Output is the row-major grid of escape counts, one little-endian `u16` per pixel.

use serde::Deserialize;

wit_bindgen::generate!({ world: "function", path: "../wit" });

#[cfg(feature = "io")]
const OUTPUT_FILE: &str = "mandelbrot.pgm";

#[derive(Deserialize)]
#[serde(default)]
struct Params {
    width: u32,
    height: u32,
    max_iter: u32,
    viewport: Viewport,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(default)]
struct Viewport {
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            width: 800,
            height: 600,
            max_iter: 1000,
            viewport: Viewport::default(),
        }
    }
}

impl Default for Viewport {
    fn default() -> Self {
        Viewport {
            re_min: -2.5,
            re_max: 1.0,
            im_min: -1.0,
            im_max: 1.0,
        }
    }
}

#[derive(Clone, Copy)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn square_plus(self, c: Complex) -> Complex {
        Complex {
            re: (self.re * self.re - self.im * self.im) + c.re,
            im: 2.0 * self.re * self.im + c.im,
        }
    }

    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

fn escape_count(c: Complex, max_iter: u32) -> u32 {
    let mut z = Complex { re: 0.0, im: 0.0 };
    for k in 1..=max_iter {
        z = z.square_plus(c);
        if z.norm_sqr() > 4.0 {
            return k;
        }
    }
    max_iter
}

fn validate(p: &Params) -> Result<(), String> {
    if p.width == 0 || p.height == 0 {
        return Err("width and height must be positive".into());
    }
    if p.max_iter == 0 || p.max_iter > u16::MAX as u32 {
        return Err(format!("max_iter must be in 1..={}", u16::MAX));
    }
    let v = p.viewport;
    if !(v.re_min < v.re_max) || !(v.im_min < v.im_max) {
        return Err("viewport bounds must be strictly increasing".into());
    }
    Ok(())
}

fn render(p: &Params) -> Vec<u16> {
    let v = p.viewport;
    let re_step = (v.re_max - v.re_min) / p.width as f64;
    let im_step = (v.im_max - v.im_min) / p.height as f64;
    let mut grid = Vec::with_capacity(p.width as usize * p.height as usize);
    for y in 0..p.height {
        let im = v.im_max - (y as f64 + 0.5) * im_step;
        for x in 0..p.width {
            let re = v.re_min + (x as f64 + 0.5) * re_step;
            grid.push(escape_count(Complex { re, im }, p.max_iter) as u16);
        }
    }
    grid
}

#[cfg(feature = "io")]
fn write_pgm(p: &Params, grid: &[u16]) -> Result<(), String> {
    let mut out = format!("P5\n{} {}\n{}\n", p.width, p.height, p.max_iter).into_bytes();
    if p.max_iter > 255 {
        out.reserve(grid.len() * 2);
        for &n in grid {
            out.extend_from_slice(&n.to_be_bytes());
        }
    } else {
        out.extend(grid.iter().map(|&n| n as u8));
    }
    std::fs::write(OUTPUT_FILE, out).map_err(|e| format!("write {OUTPUT_FILE}: {e}"))
}

struct Mandelbrot;

impl Guest for Mandelbrot {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        let params: Params = if input.iter().all(u8::is_ascii_whitespace) {
            Params::default()
        } else {
            serde_json::from_slice(&input).map_err(|e| format!("bad params: {e}"))?
        };
        validate(&params)?;
        let grid = render(&params);
        #[cfg(feature = "io")]
        write_pgm(&params, &grid)?;
        let mut out = Vec::with_capacity(grid.len() * 2);
        for n in grid {
            out.extend_from_slice(&n.to_le_bytes());
        }
        Ok(out)
    }
}

export!(Mandelbrot);
