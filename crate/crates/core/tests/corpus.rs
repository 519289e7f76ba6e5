mod common;

use std::fs;

use pan_core::corpus::{
    generate, load, perturb, render_identity, Corpus, GenSpec, IdentityParams, Split, MANIFEST,
};
use pan_core::spatial::apply_affine_to_image;
use pan_core::PanError;
use rand::Rng;

fn small() -> GenSpec {
    GenSpec {
        n_train_ids: 3,
        n_test_ids: 2,
        images_per_id: 8,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn generate_then_load_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let made = generate(&small(), dir.path()).unwrap();
    let loaded = load(dir.path()).unwrap();
    assert_eq!(made.samples.len(), loaded.samples.len());
    for (a, b) in made.samples.iter().zip(&loaded.samples) {
        assert_eq!(
            (a.identity, a.camera, a.split, &a.path),
            (b.identity, b.camera, b.split, &b.path)
        );
        let (ta, tb) = (a.gt_perturb.as_array(), b.gt_perturb.as_array());
        assert!(ta.iter().zip(&tb).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(a
            .image
            .data()
            .iter()
            .zip(b.image.data())
            .all(|(x, y)| (x - y).abs() < 1e-9));
    }
}

#[test]
fn default_spec_writes_640_training_images() {
    let spec = GenSpec {
        n_test_ids: 2,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    generate(&spec, dir.path()).unwrap();
    let pngs = fs::read_dir(dir.path().join("train")).unwrap().count();
    assert_eq!(pngs, 640);
    let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    let train_rows = manifest
        .lines()
        .filter(|l| l.contains(r#""split":"train""#))
        .count();
    assert_eq!(train_rows, 640);
}

#[test]
fn generation_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&small(), a.path()).unwrap();
    generate(&small(), b.path()).unwrap();
    let ma = fs::read(a.path().join(MANIFEST)).unwrap();
    assert_eq!(ma, fs::read(b.path().join(MANIFEST)).unwrap());
    for line in String::from_utf8(ma).unwrap().lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let p = row["path"].as_str().unwrap();
        assert_eq!(
            fs::read(a.path().join(p)).unwrap(),
            fs::read(b.path().join(p)).unwrap()
        );
    }
}

#[test]
fn train_and_test_identities_are_disjoint() {
    let c = Corpus::synthesize(&small()).unwrap();
    let train: Vec<u32> = c.split(Split::Train).map(|(_, s)| s.identity).collect();
    assert!(c
        .samples
        .iter()
        .filter(|s| s.split != Split::Train)
        .all(|s| !train.contains(&s.identity)));
}

#[test]
fn corrupted_manifest_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    generate(&small(), dir.path()).unwrap();
    let p = dir.path().join(MANIFEST);
    let mut lines: Vec<String> = fs::read_to_string(&p)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[6] = "{not json".into();
    fs::write(&p, lines.join("\n")).unwrap();
    let err = load(dir.path()).unwrap_err();
    assert!(matches!(err, PanError::Manifest { .. }));
    assert!(err.to_string().contains("line 7"), "{err}");
}

#[test]
fn missing_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load(&dir.path().join("nope")).is_err());
}

#[test]
fn convention_names_load_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    generate(&small(), dir.path()).unwrap();
    fs::remove_file(dir.path().join(MANIFEST)).unwrap();
    let c = load(dir.path()).unwrap();
    assert_eq!(c.samples.len(), 40);
    let q = c.split(Split::Query).next().unwrap().1;
    assert_eq!((q.identity, q.camera), (3, 1));

    fs::write(dir.path().join("gallery/notes.txt"), "x").unwrap();
    let err = load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("gallery/notes.txt"), "{err}");
}

#[test]
fn distinct_identities_differ_in_at_least_one_percent_of_pixels() {
    let mut r = common::rng(21);
    let mut collisions = 0;
    for _ in 0..1000 {
        let a = r.gen_range(0..5000u32);
        let b = (a + r.gen_range(1..5000u32)) % 5000;
        let cam = r.gen_range(1..=4u16);
        let seed = r.gen::<u64>();
        let ia = render_identity(&IdentityParams::sample(0, a), cam, seed, 64, 32, 0.0);
        let ib = render_identity(&IdentityParams::sample(0, b), cam, seed, 64, 32, 0.0);
        let n = 64 * 32;
        let differ = (0..n)
            .filter(|&i| {
                (0..3).any(|c| (ia.data()[c * n + i] - ib.data()[c * n + i]).abs() > 1.0 / 255.0)
            })
            .count();
        if differ * 100 < n {
            collisions += 1;
        }
    }
    assert_eq!(collisions, 0);
}

#[test]
fn excessive_background_fraction_matches_sampling() {
    let spec = GenSpec {
        n_train_ids: 40,
        n_test_ids: 0,
        images_per_id: 40,
        height: 8,
        width: 4,
        ..Default::default()
    };
    let c = Corpus::synthesize(&spec).unwrap();
    let scales: Vec<f64> = c
        .samples
        .iter()
        .flat_map(|s| {
            let t = s.gt_perturb.as_array();
            [t[0], t[4]]
        })
        .collect();
    let n = scales.len() as f64;
    let frac = scales.iter().filter(|&&s| s > 1.0).count() as f64 / n;
    let p = 0.5 / 0.9;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((frac - p).abs() < 4.0 * sigma, "{frac} vs {p}");
    assert!(scales.iter().all(|s| (0.6..1.5).contains(s)));
}

#[test]
fn analytic_inverse_recovers_canonical_image() {
    let mut r = common::rng(31);
    for i in 0..40 {
        let canon = render_identity(
            &IdentityParams::sample(2, i),
            1 + (i % 4) as u16,
            i as u64,
            64,
            32,
            0.0,
        );
        let (sx, sy) = (r.gen_range(0.8..1.25), r.gen_range(0.8..1.25));
        let (tx, ty) = (r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1));
        let (img, gt) = perturb(&canon, (sx, sy), (tx, ty)).unwrap();
        let inv = gt.inverse().unwrap();
        let back = apply_affine_to_image(&img, &inv, 64, 32).unwrap();
        // only pixels whose round trip stays inside the frame
        let (mut sum, mut count) = (0.0, 0usize);
        for y in 0..64 {
            for x in 0..32 {
                let u = -1.0 + 2.0 * x as f64 / 31.0;
                let v = -1.0 + 2.0 * y as f64 / 63.0;
                let (pu, pv) = ((u - tx) / sx, (v - ty) / sy);
                if pu.abs() > 1.0 || pv.abs() > 1.0 {
                    continue;
                }
                for c in 0..3 {
                    let k = (c * 64 + y) * 32 + x;
                    sum += (back.data()[k] - canon.data()[k]).abs();
                    count += 1;
                }
            }
        }
        let mae = sum / count as f64;
        assert!(mae < 0.02, "sample {i}: mae {mae}");
    }
}
