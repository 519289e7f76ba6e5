//! Procedural pedestrian stand-ins: a head, a patterned torso and two legs
//! over a camera-specific background.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TorsoPattern {
    Plain,
    Stripes,
    Band,
    TwoTone,
}

/// Appearance of one identity, fixed across cameras and samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub torso: [f64; 3],
    pub accent: [f64; 3],
    pub legs: [f64; 3],
    pub pattern: TorsoPattern,
    /// Half-width of the torso in normalized units.
    pub torso_half_width: f64,
    /// Normalized y where the torso ends and the legs start.
    pub waist: f64,
    pub leg_gap: f64,
    pub stripe_period: f64,
}

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
    ]
}

impl IdentityParams {
    pub fn sample(corpus_seed: u64, identity: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[corpus_seed, 0x1d, identity as u64]));
        let tone = rng.gen_range(0.45..0.9);
        let pattern = match rng.gen_range(0..4) {
            0 => TorsoPattern::Plain,
            1 => TorsoPattern::Stripes,
            2 => TorsoPattern::Band,
            _ => TorsoPattern::TwoTone,
        };
        IdentityParams {
            skin: [tone, tone * 0.8, tone * 0.65],
            hair: color(&mut rng, 0.02, 0.5),
            torso: color(&mut rng, 0.05, 0.95),
            accent: color(&mut rng, 0.05, 0.95),
            legs: color(&mut rng, 0.05, 0.8),
            pattern,
            torso_half_width: rng.gen_range(0.34..0.48),
            waist: rng.gen_range(0.0..0.2),
            leg_gap: rng.gen_range(0.03..0.1),
            stripe_period: rng.gen_range(0.12..0.25),
        }
    }
}

/// Background and lighting of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraStyle {
    pub wall: [f64; 3],
    pub ground: [f64; 3],
    pub horizon: f64,
    pub texture_freq: f64,
    pub texture_angle: f64,
    pub texture_amp: f64,
    pub gain: f64,
}

impl CameraStyle {
    pub fn for_camera(camera: u16) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[0xca3e7a, camera as u64]));
        CameraStyle {
            wall: color(&mut rng, 0.25, 0.7),
            ground: color(&mut rng, 0.2, 0.6),
            horizon: rng.gen_range(0.2..0.6),
            texture_freq: rng.gen_range(4.0..12.0),
            texture_angle: rng.gen_range(0.0..std::f64::consts::PI),
            texture_amp: rng.gen_range(0.03..0.1),
            gain: rng.gen_range(0.8..1.15),
        }
    }
}

/// Coverage in [0, 1] of a pixel by the half-plane `d <= 0`, with a one-pixel
/// linear ramp (`d` in pixels).
#[inline]
fn cover(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

fn rect_dist(px: f64, py: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let dx = (x0 - px).max(px - x1);
    let dy = (y0 - py).max(py - y1);
    dx.max(dy)
}

/// Renders one `[3, h, w]` image in `[0, 1]`. Identical inputs give
/// identical pixels.
pub fn render_identity(
    id: &IdentityParams,
    camera: u16,
    noise_seed: u64,
    h: usize,
    w: usize,
    noise_std: f64,
) -> Tensor {
    let cam = CameraStyle::for_camera(camera);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let jitter_x = rng.gen_range(-0.04..0.04);
    let stride = rng.gen_range(-0.03..0.03);
    let brightness = cam.gain * rng.gen_range(0.95..1.05);
    let noise = Normal::new(0.0, noise_std.max(1e-12)).expect("positive std");

    // normalized -> pixel units
    let sx = 0.5 * (w as f64 - 1.0);
    let sy = 0.5 * (h as f64 - 1.0);
    let to_px = |u: f64| (u + 1.0) * sx;
    let to_py = |v: f64| (v + 1.0) * sy;

    let cx = to_px(jitter_x);
    let head_cy = to_py(-0.74);
    let head_r = 0.15 * sy;
    let torso = (
        to_px(jitter_x - id.torso_half_width),
        to_px(jitter_x + id.torso_half_width),
        to_py(-0.57),
        to_py(id.waist),
    );
    let leg_w = id.torso_half_width * 0.8 - id.leg_gap;
    let left_leg = (
        to_px(jitter_x - id.leg_gap - leg_w - stride),
        to_px(jitter_x - id.leg_gap - stride),
        to_py(id.waist - 0.02),
        to_py(0.86),
    );
    let right_leg = (
        to_px(jitter_x + id.leg_gap + stride),
        to_px(jitter_x + id.leg_gap + leg_w + stride),
        to_py(id.waist - 0.02),
        to_py(0.86),
    );
    let shoe = |leg: (f64, f64, f64, f64)| (leg.0 - 0.5, leg.1 + 0.5, to_py(0.86), to_py(0.93));
    let (ls, rs) = (shoe(left_leg), shoe(right_leg));

    let mut out = vec![0.0; 3 * h * w];
    let (ca, sa) = (cam.texture_angle.cos(), cam.texture_angle.sin());
    let horizon = to_py(cam.horizon);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let u = px / sx - 1.0;
            let v = py / sy - 1.0;
            let ground = cover(horizon - py);
            let tex = cam.texture_amp * (cam.texture_freq * (u * ca + v * sa)).sin();
            let mut rgb: [f64; 3] = std::array::from_fn(|c| {
                cam.wall[c] * (1.0 - ground) + cam.ground[c] * ground + tex
            });

            let paint = |rgb: &mut [f64; 3], col: [f64; 3], a: f64| {
                if a > 0.0 {
                    for c in 0..3 {
                        rgb[c] = rgb[c] * (1.0 - a) + col[c] * a;
                    }
                }
            };
            let legs_d = rect_dist(px, py, left_leg.0, left_leg.1, left_leg.2, left_leg.3).min(
                rect_dist(px, py, right_leg.0, right_leg.1, right_leg.2, right_leg.3),
            );
            paint(&mut rgb, id.legs, cover(legs_d));
            let shoes_d = rect_dist(px, py, ls.0, ls.1, ls.2, ls.3)
                .min(rect_dist(px, py, rs.0, rs.1, rs.2, rs.3));
            paint(&mut rgb, [0.08, 0.07, 0.06], cover(shoes_d));

            let torso_a = cover(rect_dist(px, py, torso.0, torso.1, torso.2, torso.3));
            if torso_a > 0.0 {
                let tv = (v + 0.57) / (id.waist + 0.57);
                let accent = match id.pattern {
                    TorsoPattern::Plain => 0.0,
                    TorsoPattern::Stripes => {
                        let s = (2.0 * std::f64::consts::PI * v / id.stripe_period).sin();
                        (s * 2.0).clamp(-1.0, 1.0) * 0.5 + 0.5
                    }
                    TorsoPattern::Band => {
                        cover((u - jitter_x).abs() * sx - 0.3 * id.torso_half_width * sx)
                    }
                    TorsoPattern::TwoTone => cover((0.5 - tv) * (torso.3 - torso.2)),
                };
                let col: [f64; 3] =
                    std::array::from_fn(|c| id.torso[c] * (1.0 - accent) + id.accent[c] * accent);
                paint(&mut rgb, col, torso_a);
            }

            let hd = ((px - cx).powi(2) + (py - head_cy).powi(2)).sqrt() - head_r;
            let head_a = cover(hd);
            if head_a > 0.0 {
                let hair = cover(py - (head_cy - 0.3 * head_r));
                let col: [f64; 3] =
                    std::array::from_fn(|c| id.skin[c] * (1.0 - hair) + id.hair[c] * hair);
                paint(&mut rgb, col, head_a);
            }

            for c in 0..3 {
                let val = rgb[c] * brightness + noise.sample(&mut rng);
                out[(c * h + y) * w + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[3, h, w], out).expect("shape")
}
