use std::path::Path;

use pan_core::descriptor::read_pane;
use pan_core::fsio::write_atomic;
use pan_core::metrics::{evaluate, EvalReport};
use pan_core::retrieval::read_pand;
use serde::Serialize;

use crate::cmd::rank::{distances, DIST, DIST_RERANKED, GALLERY, QUERY};
use crate::error::{usage, CliError};
use crate::run::{read_json, version, write_json, RankRun, RUN_FILE};

#[derive(Serialize)]
struct SweepPoint {
    alpha: f64,
    #[serde(flatten)]
    report: EvalReport,
}

/// Parses `start:stop:step` into the inclusive grid of weights.
pub fn parse_sweep(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage(format!("--alpha-sweep expects start:stop:step, got {s:?}"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && (0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&stop) && start <= stop)
    {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // rounded to the step's decimal grid so 0.1 * 3 prints as 0.3
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

fn with_suffix(out: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(ranks: &Path, out: &Path, sweep: Option<&str>) -> Result<(), CliError> {
    let grid = sweep.map(parse_sweep).transpose()?;
    let run: RankRun = read_json(&ranks.join(RUN_FILE))?;
    let query = read_pane(&ranks.join(QUERY))?;
    let gallery = read_pane(&ranks.join(GALLERY))?;
    let reranked = ranks.join(DIST_RERANKED);
    let dist = if run.rerank.is_some() && reranked.exists() {
        read_pand(&reranked)?
    } else {
        read_pand(&ranks.join(DIST))?
    };
    let (qm, gm) = (query.metas(), gallery.metas());
    let report = evaluate(&dist, &qm, &gm, run.cross_camera_only)?;
    write_atomic(out, report.to_json().as_bytes())?;
    let max_rank = gm.len();
    write_atomic(
        &with_suffix(out, ".cmc.csv"),
        report.cmc_csv(max_rank).as_bytes(),
    )?;
    eprintln!(
        "rank-1 {:.4}  mAP {:.4}  ({} of {} queries valid)",
        report.rank1(),
        report.map,
        report.num_valid_queries,
        report.num_queries
    );

    if let Some(grid) = grid {
        let mut points = Vec::new();
        let mut csv = String::from("alpha,rank1,rank5,rank10,rank20,mAP\n");
        for alpha in grid {
            let d = distances(&query, &gallery, alpha, run.rerank)?;
            let r = evaluate(&d, &qm, &gm, run.cross_camera_only)?;
            let acc = |i: usize| r.rank_accuracy.get(&i).copied().unwrap_or(f64::NAN);
            csv.push_str(&format!(
                "{alpha},{},{},{},{},{}\n",
                acc(1),
                acc(5),
                acc(10),
                acc(20),
                r.map
            ));
            points.push(SweepPoint { alpha, report: r });
        }
        write_json(
            &with_suffix(out, ".sweep.json"),
            &serde_json::json!({ "version": version(), "points": points }),
        )?;
        write_atomic(&with_suffix(out, ".sweep.csv"), csv.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let g = parse_sweep("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_sweep("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert!(parse_sweep("0:2:0.1").is_err());
        assert!(parse_sweep("0:1").is_err());
        assert!(parse_sweep("0:1:0").is_err());
    }
}
