//! Two-branch descriptor fusion and the binary embedding format.

mod pane;

use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};

pub use pane::{
    read_pane, read_sidecar, write_pane, EmbeddingFile, EmbeddingRecord, SidecarRow, PANE_MAGIC,
    PANE_VERSION,
};

pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorMeta {
    pub sample_id: u32,
    pub identity: u32,
    pub camera: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub vector: Vec<f64>,
    pub meta: DescriptorMeta,
}

/// `v / |v|`, or `v` unchanged when its norm is at most [`NORM_EPS`].
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= NORM_EPS {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// `[alpha * f1/|f1|, (1 - alpha) * f2/|f2|]`.
pub fn fuse_vectors(f1: &[f64], f2: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PanError::arg(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut out: Vec<f64> = l2_normalize(f1).into_iter().map(|x| alpha * x).collect();
    out.extend(l2_normalize(f2).into_iter().map(|x| (1.0 - alpha) * x));
    Ok(out)
}

pub fn fuse(f1: &[f64], f2: &[f64], alpha: f64, meta: DescriptorMeta) -> Result<Descriptor> {
    let vector = fuse_vectors(f1, f2, alpha)?;
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(PanError::arg(format!(
            "non-finite descriptor for sample {}",
            meta.sample_id
        )));
    }
    Ok(Descriptor { vector, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: DescriptorMeta = DescriptorMeta {
        sample_id: 0,
        identity: 0,
        camera: 1,
    };

    #[test]
    fn normalize_examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 1.0]), vec![0.0, 1.0]);
        assert_eq!(l2_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn fuse_examples() {
        let d = fuse(&[3.0, 4.0], &[0.0, 5.0], 0.5, META).unwrap();
        for (a, b) in d.vector.iter().zip([0.3, 0.4, 0.0, 0.5]) {
            assert!((a - b).abs() <= 1e-12);
        }
        let d = fuse(&[3.0, 4.0], &[1.0, 5.0], 1.0, META).unwrap();
        assert_eq!(&d.vector[2..], &[0.0, 0.0]);
        let d = fuse(&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0], 0.5, META).unwrap();
        assert_eq!(d.vector[..3], d.vector[3..]);
    }

    #[test]
    fn alpha_range() {
        assert!(fuse_vectors(&[1.0], &[1.0], 1.5).is_err());
        assert!(fuse_vectors(&[1.0], &[1.0], -0.1).is_err());
    }
}
