//! Affine grid generation and differentiable bilinear sampling.
//!
//! Normalized coordinates run from `(-1, -1)` at the top-left pixel centre to
//! `(1, 1)` at the bottom-right pixel centre. A normalized `x` maps to the
//! pixel column `(x + 1) / 2 * (W - 1)`; rows use the same rule with `H`.
//!
//! The sampler evaluates
//!
//! ```text
//! U[c, m, n] = sum_{i, j} V[c, i, j] * tent(py - i) * tent(px - j),   tent(t) = max(0, 1 - |t|)
//! ```
//!
//! where `(px, py)` is the source location of target pixel `(m, n)` in pixel
//! units and the sum runs over in-range pixels only, so anything sampled
//! outside the source contributes zero. The derivative of `|t|` at `t = 0`
//! is taken as zero, and `tent` has zero derivative wherever `|t| >= 1`.

use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::tensor::Tensor;

/// Pixel-unit distance under which a source location is snapped onto the
/// lattice, so identity grids reproduce their input bit-for-bit.
const SNAP: f64 = 1e-9;

/// The 2x3 affine matrix `((t11, t12, t13), (t21, t22, t23))` mapping target
/// to source coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    theta: [f64; 6],
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        theta: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn new(theta: [f64; 6]) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(PanError::arg(format!(
                "non-finite affine parameters {theta:?}"
            )));
        }
        Ok(AffineParams { theta })
    }

    pub fn from_rows(row0: [f64; 3], row1: [f64; 3]) -> Result<Self> {
        Self::new([row0[0], row0[1], row0[2], row1[0], row1[1], row1[2]])
    }

    /// Axis-aligned scale and offset, no rotation.
    pub fn scale_offset(sx: f64, sy: f64, tx: f64, ty: f64) -> Result<Self> {
        Self::new([sx, 0.0, tx, 0.0, sy, ty])
    }

    pub fn as_array(&self) -> [f64; 6] {
        self.theta
    }

    pub fn offset(&self) -> (f64, f64) {
        (self.theta[2], self.theta[5])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let t = &self.theta;
        (t[0] * x + t[1] * y + t[2], t[3] * x + t[4] * y + t[5])
    }

    pub fn inverse(&self) -> Result<Self> {
        let [a, b, c, d, e, f] = self.theta;
        let det = a * e - b * d;
        if det.abs() < 1e-12 {
            return Err(PanError::arg("singular affine transform"));
        }
        let ia = e / det;
        let ib = -b / det;
        let id = -d / det;
        let ie = a / det;
        Self::new([ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)])
    }
}

impl Default for AffineParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Source coordinates for every target pixel, row-major over
/// `(out_h, out_w)`, stored as interleaved `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    pub out_h: usize,
    pub out_w: usize,
    coords: Vec<f64>,
}

impl SamplingGrid {
    pub fn from_coords(out_h: usize, out_w: usize, coords: Vec<f64>) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return Err(PanError::arg("grid dimensions must be positive"));
        }
        if coords.len() != 2 * out_h * out_w {
            return Err(PanError::shape("grid", &[out_h, out_w, 2], &[coords.len()]));
        }
        Ok(SamplingGrid {
            out_h,
            out_w,
            coords,
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn source(&self, row: usize, col: usize) -> (f64, f64) {
        let k = 2 * (row * self.out_w + col);
        (self.coords[k], self.coords[k + 1])
    }
}

/// Evenly spaced coordinate of index `i` over `[-1, 1]`; a single-pixel axis
/// maps to 0.
pub fn target_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

pub fn make_grid(theta: &AffineParams, out_h: usize, out_w: usize) -> Result<SamplingGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(PanError::arg(format!(
            "grid dimensions must be positive, got {out_h}x{out_w}"
        )));
    }
    let mut coords = vec![0.0; 2 * out_h * out_w];
    fill_grid(&theta.theta, out_h, out_w, &mut coords);
    Ok(SamplingGrid {
        out_h,
        out_w,
        coords,
    })
}

pub(crate) fn fill_grid(theta: &[f64], out_h: usize, out_w: usize, coords: &mut [f64]) {
    for m in 0..out_h {
        let yt = target_coord(m, out_h);
        for n in 0..out_w {
            let xt = target_coord(n, out_w);
            let k = 2 * (m * out_w + n);
            coords[k] = theta[0] * xt + theta[1] * yt + theta[2];
            coords[k + 1] = theta[3] * xt + theta[4] * yt + theta[5];
        }
    }
}

/// Pulls a gradient on grid coordinates back onto the six affine parameters.
pub fn grid_backward(grad_coords: &[f64], out_h: usize, out_w: usize) -> [f64; 6] {
    let mut g = [0.0; 6];
    grid_backward_into(grad_coords, out_h, out_w, &mut g);
    g
}

pub(crate) fn grid_backward_into(grad_coords: &[f64], out_h: usize, out_w: usize, g: &mut [f64]) {
    for m in 0..out_h {
        let yt = target_coord(m, out_h);
        for n in 0..out_w {
            let xt = target_coord(n, out_w);
            let k = 2 * (m * out_w + n);
            let (gx, gy) = (grad_coords[k], grad_coords[k + 1]);
            g[0] += gx * xt;
            g[1] += gx * yt;
            g[2] += gx;
            g[3] += gy * xt;
            g[4] += gy * yt;
            g[5] += gy;
        }
    }
}

#[inline]
fn tent(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

#[inline]
fn tent_deriv(t: f64) -> f64 {
    if t.abs() < 1.0 {
        if t > 0.0 {
            -1.0
        } else if t < 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        0.0
    }
}

#[inline]
fn to_pixel(v: f64, size: usize) -> f64 {
    let p = (v + 1.0) * 0.5 * (size as f64 - 1.0);
    let r = p.round();
    if (p - r).abs() < SNAP {
        r
    } else {
        p
    }
}

/// In-range lattice neighbours of a pixel-unit position with their tent
/// weights. At most two entries are meaningful.
#[inline]
fn neighbours(p: f64, size: usize) -> [(usize, f64, f64); 2] {
    let mut out = [(0, 0.0, 0.0); 2];
    if !p.is_finite() || p <= -1.0 || p >= size as f64 {
        return out;
    }
    let base = p.floor() as i64;
    for (slot, idx) in [base, base + 1].into_iter().enumerate() {
        if idx >= 0 && (idx as usize) < size {
            let t = p - idx as f64;
            out[slot] = (idx as usize, tent(t), tent_deriv(t));
        }
    }
    out
}

/// Batched-friendly sampler kernel over a single `[C, H, W]` slice.
pub(crate) fn sample_into(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    coords: &[f64],
    out: &mut [f64],
) {
    let npix = coords.len() / 2;
    for p in 0..npix {
        let px = to_pixel(coords[2 * p], w);
        let py = to_pixel(coords[2 * p + 1], h);
        let nx = neighbours(px, w);
        let ny = neighbours(py, h);
        for ch in 0..c {
            let plane = &input[ch * h * w..(ch + 1) * h * w];
            let mut acc = 0.0;
            for &(i, wy, _) in &ny {
                if wy == 0.0 {
                    continue;
                }
                for &(j, wx, _) in &nx {
                    if wx == 0.0 {
                        continue;
                    }
                    acc += plane[i * w + j] * wy * wx;
                }
            }
            out[ch * npix + p] = acc;
        }
    }
}

/// Accumulates gradients of the sampler into `grad_input` (optional) and
/// `grad_coords` (optional).
pub(crate) fn sample_backward_into(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    coords: &[f64],
    upstream: &[f64],
    mut grad_input: Option<&mut [f64]>,
    mut grad_coords: Option<&mut [f64]>,
) {
    let npix = coords.len() / 2;
    let sx = 0.5 * (w as f64 - 1.0);
    let sy = 0.5 * (h as f64 - 1.0);
    for p in 0..npix {
        let px = to_pixel(coords[2 * p], w);
        let py = to_pixel(coords[2 * p + 1], h);
        let nx = neighbours(px, w);
        let ny = neighbours(py, h);
        let mut gpx = 0.0;
        let mut gpy = 0.0;
        for ch in 0..c {
            let g = upstream[ch * npix + p];
            if g == 0.0 {
                continue;
            }
            let off = ch * h * w;
            for &(i, wy, dy) in &ny {
                for &(j, wx, dx) in &nx {
                    if wy == 0.0 && dy == 0.0 || wx == 0.0 && dx == 0.0 {
                        continue;
                    }
                    let v = input[off + i * w + j];
                    if let Some(gi) = grad_input.as_deref_mut() {
                        gi[off + i * w + j] += g * wy * wx;
                    }
                    gpx += g * v * wy * dx;
                    gpy += g * v * dy * wx;
                }
            }
        }
        if let Some(gc) = grad_coords.as_deref_mut() {
            gc[2 * p] += gpx * sx;
            gc[2 * p + 1] += gpy * sy;
        }
    }
}

fn chw(input: &Tensor) -> Result<(usize, usize, usize)> {
    match *input.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(PanError::shape(
            "bilinear_sample",
            input.shape(),
            &[0, 0, 0],
        )),
    }
}

pub fn bilinear_sample(input: &Tensor, grid: &SamplingGrid) -> Result<Tensor> {
    let dims = chw(input)?;
    if grid.coords.iter().any(|v| !v.is_finite()) {
        return Err(PanError::arg("sampling grid has non-finite coordinates"));
    }
    let mut out = vec![0.0; dims.0 * grid.out_h * grid.out_w];
    sample_into(input.data(), dims, &grid.coords, &mut out);
    Tensor::new(&[dims.0, grid.out_h, grid.out_w], out)
}

/// Analytic gradients of [`bilinear_sample`] with respect to its input
/// values and its grid coordinates.
pub fn sample_backward(
    input: &Tensor,
    grid: &SamplingGrid,
    upstream: &Tensor,
) -> Result<(Tensor, SamplingGrid)> {
    let dims = chw(input)?;
    let expected = [dims.0, grid.out_h, grid.out_w];
    if upstream.shape() != expected {
        return Err(PanError::shape(
            "sample_backward",
            &expected,
            upstream.shape(),
        ));
    }
    let mut gi = vec![0.0; input.len()];
    let mut gc = vec![0.0; grid.coords.len()];
    sample_backward_into(
        input.data(),
        dims,
        &grid.coords,
        upstream.data(),
        Some(&mut gi),
        Some(&mut gc),
    );
    Ok((
        Tensor::new(input.shape(), gi)?,
        SamplingGrid {
            out_h: grid.out_h,
            out_w: grid.out_w,
            coords: gc,
        },
    ))
}

/// Renders `image` through `theta` without recording gradients.
pub fn apply_affine_to_image(
    image: &Tensor,
    theta: &AffineParams,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor> {
    let grid = make_grid(theta, out_h, out_w)?;
    bilinear_sample(image, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_grid_matches_targets() {
        let g = make_grid(&AffineParams::IDENTITY, 2, 2).unwrap();
        assert_eq!(g.coords(), &[-1.0, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn worked_example_corner() {
        let theta = AffineParams::from_rows([0.8, 0.0, -0.1], [0.0, 0.7, 0.0]).unwrap();
        let g = make_grid(&theta, 5, 7).unwrap();
        let (x, y) = g.source(0, 0);
        assert!((x + 0.9).abs() <= 1e-12);
        assert!((y + 0.7).abs() <= 1e-12);
    }

    #[test]
    fn pure_scaling_corner() {
        let theta = AffineParams::scale_offset(0.5, 0.5, 0.0, 0.0).unwrap();
        let g = make_grid(&theta, 3, 3).unwrap();
        assert_eq!(g.source(2, 2), (0.5, 0.5));
    }

    #[test]
    fn single_pixel_axis_maps_to_zero() {
        let g = make_grid(&AffineParams::IDENTITY, 1, 3).unwrap();
        assert_eq!(g.source(0, 0), (-1.0, 0.0));
        assert_eq!(g.source(0, 1), (0.0, 0.0));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            make_grid(&AffineParams::IDENTITY, 0, 3),
            Err(PanError::InvalidArgument(_))
        ));
    }

    #[test]
    fn identity_sampling_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(h, w) in &[(7, 5), (64, 32), (32, 16), (1, 4)] {
            let data: Vec<f64> = (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let img = Tensor::new(&[2, h, w], data).unwrap();
            let out = apply_affine_to_image(&img, &AffineParams::IDENTITY, h, w).unwrap();
            assert_eq!(out.data(), img.data());
        }
    }

    #[test]
    fn fully_outside_grid_gives_zeros() {
        let img = Tensor::full(&[1, 4, 4], 1.0);
        let theta = AffineParams::scale_offset(0.1, 0.1, 3.0, -3.0).unwrap();
        let out = apply_affine_to_image(&img, &theta, 4, 4).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centre_of_four_pixels() {
        // 2x2 image, centre is (0, 0) in normalized coordinates.
        let img = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let grid = SamplingGrid::from_coords(1, 1, vec![0.0, 0.0]).unwrap();
        let out = bilinear_sample(&img, &grid).unwrap();
        assert!((out.data()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_uses_in_range_neighbours_only() {
        // Half a pixel beyond the right edge: only the last column contributes, at weight 0.5.
        let img = Tensor::new(&[1, 1, 3], vec![0.0, 0.0, 2.0]).unwrap();
        let grid = SamplingGrid::from_coords(1, 1, vec![1.5, 0.0]).unwrap();
        let out = bilinear_sample(&img, &grid).unwrap();
        assert!((out.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_backward_passes_upstream() {
        let img = Tensor::full(&[2, 3, 4], 0.5);
        let grid = make_grid(&AffineParams::IDENTITY, 3, 4).unwrap();
        let up = Tensor::new(&[2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let (gi, _) = sample_backward(&img, &grid, &up).unwrap();
        assert_eq!(gi.data(), up.data());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let img = Tensor::full(&[1, 3, 3], 0.7);
        let theta = AffineParams::scale_offset(0.83, 0.77, 0.05, -0.02).unwrap();
        let grid = make_grid(&theta, 3, 3).unwrap();
        let (gi, gc) = sample_backward(&img, &grid, &Tensor::zeros(&[1, 3, 3])).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gc.coords().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_shape_mismatch() {
        let img = Tensor::full(&[1, 3, 3], 0.7);
        let grid = make_grid(&AffineParams::IDENTITY, 3, 3).unwrap();
        assert!(matches!(
            sample_backward(&img, &grid, &Tensor::zeros(&[2, 3, 3])),
            Err(PanError::InvalidShape { .. })
        ));
    }

    #[test]
    fn inverse_roundtrip() {
        let t = AffineParams::scale_offset(1.3, 0.7, 0.2, -0.1).unwrap();
        let inv = t.inverse().unwrap();
        let (x, y) = t.apply(0.3, -0.4);
        let (bx, by) = inv.apply(x, y);
        assert!((bx - 0.3).abs() < 1e-12 && (by + 0.4).abs() < 1e-12);
    }
}
