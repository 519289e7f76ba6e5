use pan_core::spatial::{
    apply_affine_to_image, bilinear_sample, grid_backward, make_grid, sample_backward, SamplingGrid,
};
use pan_core::{AffineParams, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{max_rel_err, numeric_grad, rng, uniform};

pub const C: usize = 2;
pub const H: usize = 6;
pub const W: usize = 6;
pub const OH: usize = 5;
pub const OW: usize = 5;

pub fn lattice_clearance(v: f64, size: usize) -> f64 {
    // distance, in normalized units, to the nearest pixel-centre line
    let p = (v + 1.0) * 0.5 * (size as f64 - 1.0);
    (p - p.round()).abs() * 2.0 / (size as f64 - 1.0)
}

/// Random theta with |entries| <= 1 whose grid stays 0.01 away from every
/// lattice line in both axes.
pub fn stable_theta(r: &mut ChaCha8Rng) -> [f64; 6] {
    loop {
        let theta: [f64; 6] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let grid = make_grid(&AffineParams::new(theta).unwrap(), OH, OW).unwrap();
        let ok = grid
            .coords()
            .chunks(2)
            .all(|xy| lattice_clearance(xy[0], W) >= 0.01 && lattice_clearance(xy[1], H) >= 0.01);
        if ok {
            return theta;
        }
    }
}

pub fn sample_loss(input: &[f64], theta: &[f64], proj: &[f64]) -> f64 {
    let img = Tensor::new(&[C, H, W], input.to_vec()).unwrap();
    let th = AffineParams::new(theta.try_into().unwrap()).unwrap();
    let out = apply_affine_to_image(&img, &th, OH, OW).unwrap();
    out.data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

/// Worst relative error over input, theta and grid-coordinate gradients
/// of a random linear functional of the sampled output.
pub fn sampler_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let input = uniform(&mut r, C * H * W, -1.0, 1.0);
    let theta = stable_theta(&mut r);
    let proj = uniform(&mut r, C * OH * OW, -1.0, 1.0);

    let img = Tensor::new(&[C, H, W], input.clone()).unwrap();
    let grid = make_grid(&AffineParams::new(theta).unwrap(), OH, OW).unwrap();
    let up = Tensor::new(&[C, OH, OW], proj.clone()).unwrap();
    let (gi, gg) = sample_backward(&img, &grid, &up).unwrap();
    let gt = grid_backward(gg.coords(), OH, OW);

    let ni = numeric_grad(&input, |x| sample_loss(x, &theta, &proj));
    let nt = numeric_grad(&theta, |t| sample_loss(&input, t, &proj));
    let coords = grid.coords().to_vec();
    let ng = numeric_grad(&coords, |c| {
        let g = SamplingGrid::from_coords(OH, OW, c.to_vec()).unwrap();
        let out = bilinear_sample(&img, &g).unwrap();
        out.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
    });
    [
        max_rel_err(gi.data(), &ni),
        max_rel_err(&gt, &nt),
        max_rel_err(gg.coords(), &ng),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
