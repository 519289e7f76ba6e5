use std::fs;
use std::path::{Path, PathBuf};

use pan_core::corpus::{read_image, write_image_png};
use pan_core::spatial::apply_affine_to_image;
use pan_core::{PanError, Tensor};

use crate::cmd::train::load_checkpoint;
use crate::error::CliError;
use crate::run::train_run_for;

const GAP: usize = 2;

fn side_by_side(a: &Tensor, b: &Tensor) -> Tensor {
    let (h, w) = (a.shape()[1], a.shape()[2]);
    let ow = 2 * w + GAP;
    let mut out = vec![1.0; 3 * h * ow];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out[(c * h + y) * ow + x] = a.data()[(c * h + y) * w + x];
                out[(c * h + y) * ow + w + GAP + x] = b.data()[(c * h + y) * w + x];
            }
        }
    }
    Tensor::new(&[3, h, ow], out).expect("shape")
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PanError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PanError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    v.sort();
    Ok(v)
}

/// Writes `<name>.aligned.png` per input: the original on the left and the
/// image resampled through the predicted theta on the right.
pub fn run(ckpt: &Path, images: &Path, out: &Path) -> Result<(), CliError> {
    let run = train_run_for(ckpt)?;
    let model = load_checkpoint(run.network, ckpt)?;
    let (h, w) = (model.config().input_h, model.config().input_w);
    let paths = list_images(images)?;
    if paths.is_empty() {
        return Err(PanError::Format {
            path: images.to_path_buf(),
            msg: "no png or jpeg images".into(),
        }
        .into());
    }
    for p in &paths {
        let img = read_image(p)?;
        if img.shape()[1..] != [h, w] {
            return Err(PanError::Format {
                path: p.clone(),
                msg: format!("image is {:?}, model expects 3x{h}x{w}", img.shape()),
            }
            .into());
        }
        let e = model.embed(&img)?;
        let aligned = apply_affine_to_image(&img, &e.theta, h, w)?;
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        write_image_png(
            &out.join(format!("{name}.aligned.png")),
            &side_by_side(&img, &aligned),
        )?;
    }
    eprintln!("wrote {} aligned pairs to {}", paths.len(), out.display());
    Ok(())
}
