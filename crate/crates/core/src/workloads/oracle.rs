//! Straightforward host implementations of the guest computations, used as
//! test oracles. They share no code with the guests.

use super::{Filter, MandelbrotParams};

/// `min{k : |z_k| > 2}` for `z_0 = 0`, `z_{k+1} = z_k^2 + c`, capped at `max_iter`.
pub fn escape_count(c_re: f64, c_im: f64, max_iter: u32) -> u32 {
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut k = 0;
    while k < max_iter {
        let x2 = x * x;
        let y2 = y * y;
        let next_y = 2.0 * x * y + c_im;
        x = (x2 - y2) + c_re;
        y = next_y;
        k += 1;
        if x * x + y * y > 4.0 {
            return k;
        }
    }
    max_iter
}

/// Row-major counts; pixel `(col, row)` samples the center of its cell, row 0
/// at `im_max`.
pub fn mandelbrot_grid(p: &MandelbrotParams) -> Vec<u16> {
    let v = p.viewport;
    let dx = (v.re_max - v.re_min) / f64::from(p.width);
    let dy = (v.im_max - v.im_min) / f64::from(p.height);
    (0..p.height)
        .flat_map(|row| {
            let c_im = v.im_max - (f64::from(row) + 0.5) * dy;
            (0..p.width).map(move |col| {
                let c_re = v.re_min + (f64::from(col) + 0.5) * dx;
                escape_count(c_re, c_im, p.max_iter) as u16
            })
        })
        .collect()
}

/// Packed 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "raster size mismatch");
        Rgb { width, height, data }
    }

    fn at(&self, col: usize, row: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * 3 + ch]
    }
}

/// `round(0.299 r + 0.587 g + 0.114 b)`, ties up, exact integer arithmetic.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let scaled = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    let (q, rem) = (scaled / 1000, scaled % 1000);
    (if rem >= 500 { q + 1 } else { q }) as u8
}

pub fn grayscale(img: &Rgb) -> Rgb {
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|p| [luma(p[0], p[1], p[2]); 3])
        .collect();
    Rgb::new(img.width, img.height, data)
}

pub fn invert(img: &Rgb) -> Rgb {
    Rgb::new(img.width, img.height, img.data.iter().map(|v| 255 - v).collect())
}

/// Mean of the 3x3 neighborhood, out-of-range coordinates clamped to the
/// border, rounded half up.
pub fn blur3x3(img: &Rgb) -> Rgb {
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::with_capacity(img.data.len());
    for row in 0..img.height {
        for col in 0..img.width {
            for ch in 0..3 {
                let mut sum = 0u32;
                for dr in [-1isize, 0, 1] {
                    for dc in [-1isize, 0, 1] {
                        let r = clamp(row as isize + dr, img.height);
                        let c = clamp(col as isize + dc, img.width);
                        sum += u32::from(img.at(c, r, ch));
                    }
                }
                let (q, rem) = (sum / 9, sum % 9);
                out.push((if 2 * rem >= 9 { q + 1 } else { q }) as u8);
            }
        }
    }
    Rgb::new(img.width, img.height, out)
}

pub fn apply(filters: &[Filter], img: &Rgb) -> Rgb {
    filters.iter().fold(img.clone(), |acc, f| match f {
        Filter::Grayscale => grayscale(&acc),
        Filter::Invert => invert(&acc),
        Filter::Blur3x3 => blur3x3(&acc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_never_escapes() {
        assert_eq!(escape_count(0.0, 0.0, 100), 100);
    }

    #[test]
    fn one_escapes_at_three() {
        // 0 -> 1 -> 2 -> 5
        assert_eq!(escape_count(1.0, 0.0, 100), 3);
    }

    #[test]
    fn far_point_escapes_immediately() {
        assert_eq!(escape_count(3.0, 0.0, 10), 1);
    }

    #[test]
    fn grid_is_row_major_with_top_row_first() {
        let p = MandelbrotParams {
            width: 4,
            height: 2,
            max_iter: 50,
            ..Default::default()
        };
        let grid = mandelbrot_grid(&p);
        assert_eq!(grid.len(), 8);
        // Rows mirror each other across the real axis.
        assert_eq!(&grid[..4], &grid[4..]);
    }

    #[test]
    fn luma_rounds_the_textbook_way() {
        assert_eq!(luma(100, 150, 200), 141);
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        // 0.299 * 5 = 1.495 -> 1, 0.587 * 5 = 2.935 -> 3
        assert_eq!(luma(5, 0, 0), 1);
        assert_eq!(luma(0, 5, 0), 3);
    }

    #[test]
    fn white_inverts_to_black() {
        let img = Rgb::new(1, 1, vec![255, 255, 255]);
        assert_eq!(invert(&img).data, vec![0, 0, 0]);
    }

    #[test]
    fn blur_center_is_mean_of_all_nine() {
        let data: Vec<u8> = (0..27).map(|i| (i * 9) as u8).collect();
        let img = Rgb::new(3, 3, data.clone());
        let blurred = blur3x3(&img);
        for ch in 0..3 {
            let sum: u32 = (0..9).map(|p| u32::from(data[p * 3 + ch])).sum();
            let expected = ((sum as f64) / 9.0 + 0.5).floor() as u8;
            assert_eq!(blurred.at(1, 1, ch), expected);
        }
    }

    #[test]
    fn blur_of_constant_image_is_constant() {
        let img = Rgb::new(4, 2, vec![77; 24]);
        assert_eq!(blur3x3(&img), img);
    }

    proptest! {
        #[test]
        fn invert_is_an_involution(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let data: Vec<u8> = (0..w * h * 3)
                .map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8)
                .collect();
            let img = Rgb::new(w, h, data);
            prop_assert_eq!(invert(&invert(&img)), img);
        }
    }
}
