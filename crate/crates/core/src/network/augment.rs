use rand::Rng;

use crate::tensor::Tensor;

use super::config::Augment;

/// Mirrors a `[C, H, W]` image left to right.
pub fn hflip(image: &Tensor) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..c * h {
        for x in 0..w {
            out[p * w + x] = src[p * w + (w - 1 - x)];
        }
    }
    Tensor::new(s, out).expect("same shape")
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Reflect-pads by `pad` on every side and crops an `H x W` window whose
/// top-left corner sits at `(dy, dx)` in the padded frame.
pub fn pad_crop(image: &Tensor, pad: usize, dy: usize, dx: usize) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = reflect(y as isize + dy as isize - pad as isize, h);
            for x in 0..w {
                let sx = reflect(x as isize + dx as isize - pad as isize, w);
                out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    Tensor::new(s, out).expect("same shape")
}

/// Applies the configured random flip and crop. Labels are never touched.
pub fn augment<R: Rng + ?Sized>(image: &Tensor, cfg: &Augment, rng: &mut R) -> Tensor {
    let mut out = image.clone();
    if cfg.random_crop && cfg.crop_pad > 0 {
        let dy = rng.gen_range(0..=2 * cfg.crop_pad);
        let dx = rng.gen_range(0..=2 * cfg.crop_pad);
        out = pad_crop(&out, cfg.crop_pad, dy, dx);
    }
    if cfg.horizontal_flip && rng.gen_bool(0.5) {
        out = hflip(&out);
    }
    out
}
