use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSample, GenSpec, Split};
use crate::error::{PanError, Result};
use crate::fsio::write_atomic;
use crate::spatial::AffineParams;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    identity: u32,
    camera: u16,
    split: Split,
    theta: [f64; 6],
}

/// Encodes a `[3, H, W]` image in `[0, 1]` as an 8-bit RGB PNG.
pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    let [3, h, w] = s[..] else {
        return Err(PanError::shape("encode_png", s, &[3, 0, 0]));
    };
    let d = image.data();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let i = y as usize * w + x as usize;
        let q = |c: usize| (d[c * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        *px = image::Rgb([q(0), q(1), q(2)]);
    }
    let mut bytes = Vec::new();
    buf.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageOutputFormat::Png,
    )
    .map_err(|e| PanError::arg(format!("png encoding failed: {e}")))?;
    Ok(bytes)
}

pub fn write_image_png(path: &Path, image: &Tensor) -> Result<()> {
    write_atomic(path, &encode_png(image)?)
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| PanError::format(path, format!("cannot decode image: {e}")))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data)
}

/// Synthesizes the corpus described by `spec` and writes it under
/// `out_dir`. Returns the in-memory corpus.
pub fn generate(spec: &GenSpec, out_dir: &Path) -> Result<Corpus> {
    let corpus = Corpus::synthesize(spec)?;
    for split in [Split::Train, Split::Query, Split::Gallery] {
        let d = out_dir.join(split.dir_name());
        fs::create_dir_all(&d).map_err(|e| PanError::io(&d, e))?;
    }
    let mut manifest = String::new();
    for s in &corpus.samples {
        write_image_png(&out_dir.join(&s.path), &s.image)?;
        let row = ManifestRow {
            path: s.path.clone(),
            identity: s.identity,
            camera: s.camera,
            split: s.split,
            theta: s.gt_perturb.as_array(),
        };
        manifest.push_str(&serde_json::to_string(&row).expect("serializable"));
        manifest.push('\n');
    }
    write_atomic(&out_dir.join(MANIFEST), manifest.as_bytes())?;
    Ok(corpus)
}

/// Parses Market-1501 style names `IIII_cC..._SEQ.ext` into
/// `(identity, camera)`.
pub fn parse_market_name(name: &str) -> Option<(u32, u16)> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let mut parts = stem.split('_');
    let identity = parts.next()?.parse().ok()?;
    let cam = parts.next()?.strip_prefix('c')?;
    let digits: String = cam.chars().take_while(char::is_ascii_digit).collect();
    let camera = digits.parse().ok()?;
    parts.next()?;
    Some((identity, camera))
}

/// Loads a corpus directory, from its manifest when present and otherwise
/// from convention-named images in `train/`, `query/` and `gallery/`.
pub fn load(dir: &Path) -> Result<Corpus> {
    if !dir.is_dir() {
        return Err(PanError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let manifest = dir.join(MANIFEST);
    let rows = if manifest.exists() {
        read_manifest(&manifest)?
    } else {
        scan_convention(dir)?
    };
    let mut samples = Vec::with_capacity(rows.len());
    let mut missing = Vec::new();
    for row in rows {
        let path = dir.join(&row.path);
        if !path.exists() {
            missing.push(row.path.clone());
            continue;
        }
        samples.push(CorpusSample {
            image: read_image(&path)?,
            identity: row.identity,
            camera: row.camera,
            split: row.split,
            gt_perturb: AffineParams::new(row.theta)?,
            path: row.path,
        });
    }
    if !missing.is_empty() {
        return Err(PanError::Manifest {
            path: manifest,
            entries: missing
                .into_iter()
                .map(|p| format!("missing image {p}"))
                .collect(),
        });
    }
    Ok(Corpus { samples })
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path).map_err(|e| PanError::io(path, e))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ManifestRow>(line) {
            Ok(r) => rows.push(r),
            Err(e) => errors.push(format!("line {}: {e}", i + 1)),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(PanError::Manifest {
            path: path.to_path_buf(),
            entries: errors,
        })
    }
}

fn scan_convention(dir: &Path) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for split in [Split::Train, Split::Query, Split::Gallery] {
        let sub = dir.join(split.dir_name());
        if !sub.is_dir() {
            continue;
        }
        let mut names: Vec<PathBuf> = fs::read_dir(&sub)
            .map_err(|e| PanError::io(&sub, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let rel = format!("{}/{}", split.dir_name(), name);
            match parse_market_name(&name) {
                Some((identity, camera)) => rows.push(ManifestRow {
                    path: rel,
                    identity,
                    camera,
                    split,
                    theta: AffineParams::IDENTITY.as_array(),
                }),
                None => bad.push(format!("unparseable file name {rel}")),
            }
        }
    }
    if !bad.is_empty() {
        return Err(PanError::Manifest {
            path: dir.to_path_buf(),
            entries: bad,
        });
    }
    if rows.is_empty() {
        return Err(PanError::format(dir, "no manifest and no images found"));
    }
    Ok(rows)
}
