use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use pan_core::descriptor::{read_pane, read_sidecar, write_pane, EmbeddingFile};
use pan_core::retrieval::{
    pairwise_sqdist, rank, rerank, write_pand, DistanceMatrix, RerankParams,
};
use pan_core::PanError;
use serde::Serialize;

use crate::error::{usage, CliError};
use crate::run::{version, write_json, RankRun, RUN_FILE};

pub const QUERY: &str = "query.pane";
pub const GALLERY: &str = "gallery.pane";
pub const DIST: &str = "dist.pand";
pub const DIST_RERANKED: &str = "dist_reranked.pand";
pub const RANKS: &str = "ranks.jsonl";

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Add the k-reciprocal Jaccard distance.
    #[arg(long)]
    pub rerank: bool,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Keep same-identity same-camera gallery items.
    #[arg(long)]
    pub no_cross_camera: bool,
}

#[derive(Serialize)]
struct RankLine<'a> {
    query: u32,
    gallery: Vec<u32>,
    distances: &'a [f64],
}

/// Query-by-gallery distances at fusion weight `alpha`; with `rerank`, the
/// re-ranked block of the joint query+gallery matrix.
pub fn distances(
    query: &EmbeddingFile,
    gallery: &EmbeddingFile,
    alpha: f64,
    rerank_params: Option<RerankParams>,
) -> Result<DistanceMatrix, PanError> {
    if (query.dim1, query.dim2) != (gallery.dim1, gallery.dim2) {
        return Err(PanError::InvalidShape {
            op: "rank",
            lhs: vec![query.dim1, query.dim2],
            rhs: vec![gallery.dim1, gallery.dim2],
        });
    }
    let q: Vec<Vec<f64>> = query.fused(alpha)?.into_iter().map(|d| d.vector).collect();
    let g: Vec<Vec<f64>> = gallery
        .fused(alpha)?
        .into_iter()
        .map(|d| d.vector)
        .collect();
    match rerank_params {
        None => pairwise_sqdist(&q, &g),
        Some(p) => {
            let joint: Vec<&Vec<f64>> = q.iter().chain(&g).collect();
            let refs: Vec<&[f64]> = joint.iter().map(|v| v.as_slice()).collect();
            let full = pairwise_sqdist(&refs, &refs)?;
            rerank(&full, p)?.block(0..q.len(), q.len()..refs.len())
        }
    }
}

fn copy_pane(src: &Path, dst: &Path) -> Result<EmbeddingFile, PanError> {
    let file = read_pane(src)?;
    let side = read_sidecar(src)?;
    write_pane(dst, &file, &side)?;
    Ok(file)
}

pub fn run(args: &RankArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(usage(format!(
            "--alpha must lie in [0, 1], got {}",
            args.alpha
        )));
    }
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(usage(format!(
            "--lambda must be non-negative, got {}",
            args.lambda
        )));
    }
    fs::create_dir_all(&args.out).map_err(|e| PanError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let query = copy_pane(&args.query, &args.out.join(QUERY))?;
    let gallery = copy_pane(&args.gallery, &args.out.join(GALLERY))?;
    if query.records.is_empty() || gallery.records.is_empty() {
        return Err(PanError::EmptyProtocol.into());
    }
    let params = args.rerank.then_some(RerankParams {
        k: args.k,
        lambda: args.lambda,
    });
    if let Some(p) = params {
        let n = query.records.len() + gallery.records.len();
        if p.k == 0 || p.k >= n {
            return Err(usage(format!(
                "--k must lie in [1, {n}) for {n} joint items"
            )));
        }
    }
    let run = RankRun {
        version: version(),
        query: args.query.clone(),
        gallery: args.gallery.clone(),
        alpha: args.alpha,
        rerank: params,
        cross_camera_only: !args.no_cross_camera,
    };
    write_json(&args.out.join(RUN_FILE), &run)?;

    let plain = distances(&query, &gallery, args.alpha, None)?;
    write_pand(&args.out.join(DIST), &plain)?;
    let dist = match params {
        Some(p) => {
            let d = distances(&query, &gallery, args.alpha, Some(p))?;
            write_pand(&args.out.join(DIST_RERANKED), &d)?;
            d
        }
        None => {
            let stale = args.out.join(DIST_RERANKED);
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| PanError::Io {
                    path: stale,
                    source: e,
                })?;
            }
            plain
        }
    };

    let (qm, gm) = (query.metas(), gallery.metas());
    let lists = rank(&dist, &qm, &gm, run.cross_camera_only)?;
    let mut text = String::new();
    for l in &lists {
        let distances: Vec<f64> = l.entries.iter().map(|e| e.distance).collect();
        let line = RankLine {
            query: qm[l.query].sample_id,
            gallery: l.entries.iter().map(|e| gm[e.index].sample_id).collect(),
            distances: &distances,
        };
        text.push_str(&serde_json::to_string(&line).expect("serializable"));
        text.push('\n');
    }
    pan_core::fsio::write_atomic(&args.out.join(RANKS), text.as_bytes())?;
    eprintln!(
        "ranked {} queries against {} gallery items",
        qm.len(),
        gm.len()
    );
    Ok(())
}
