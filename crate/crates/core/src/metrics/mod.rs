//! CMC and mAP under the cross-camera protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorMeta;
use crate::error::{PanError, Result};
use crate::retrieval::{rank, DistanceMatrix, RankList};

pub const DEFAULT_RANKS: [usize; 4] = [1, 5, 10, 20];

/// `(1/P) * sum over relevant positions r of precision@r`; `None` when the
/// list holds no relevant item.
pub fn average_precision(relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, _) in relevance.iter().enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (i + 1) as f64;
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// 1-based position of the first relevant item.
pub fn first_match(relevance: &[bool]) -> Option<usize> {
    relevance.iter().position(|&r| r).map(|p| p + 1)
}

/// Fraction of queries whose first match lies within each rank in `ranks`.
/// Lists without a relevant item are skipped.
pub fn cmc(lists: &[RankList], ranks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let firsts: Vec<usize> = lists
        .iter()
        .filter_map(|l| first_match(&l.relevance()))
        .collect();
    if firsts.is_empty() {
        return Err(PanError::EmptyProtocol);
    }
    Ok(curve_at(&firsts, ranks))
}

fn curve_at(firsts: &[usize], ranks: &[usize]) -> BTreeMap<usize, f64> {
    ranks
        .iter()
        .map(|&r| {
            (
                r,
                firsts.iter().filter(|&&f| f <= r).count() as f64 / firsts.len() as f64,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: usize,
    pub ap: f64,
    pub first_match: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rank_accuracy: BTreeMap<usize, f64>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub num_queries: usize,
    pub num_valid_queries: usize,
    pub per_query: Vec<QueryResult>,
}

impl EvalReport {
    pub fn rank1(&self) -> f64 {
        self.cmc_curve(1)[0]
    }

    /// CMC accuracy at every rank `1..=max_rank`.
    pub fn cmc_curve(&self, max_rank: usize) -> Vec<f64> {
        let firsts: Vec<usize> = self.per_query.iter().map(|q| q.first_match).collect();
        let ranks: Vec<usize> = (1..=max_rank).collect();
        curve_at(&firsts, &ranks).into_values().collect()
    }

    /// `rank,accuracy` lines for plotting.
    pub fn cmc_csv(&self, max_rank: usize) -> String {
        let mut s = String::from("rank,accuracy\n");
        for (i, a) in self.cmc_curve(max_rank).iter().enumerate() {
            s.push_str(&format!("{},{a}\n", i + 1));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// Per-query AP and first-match position; queries without a relevant item
/// are dropped.
pub fn evaluate_lists(lists: &[RankList], ranks: &[usize]) -> Result<EvalReport> {
    let per_query: Vec<QueryResult> = lists
        .iter()
        .filter_map(|l| {
            let rel = l.relevance();
            Some(QueryResult {
                query: l.query,
                ap: average_precision(&rel)?,
                first_match: first_match(&rel)?,
            })
        })
        .collect();
    if per_query.is_empty() {
        return Err(PanError::EmptyProtocol);
    }
    let firsts: Vec<usize> = per_query.iter().map(|q| q.first_match).collect();
    let map = per_query.iter().map(|q| q.ap).sum::<f64>() / per_query.len() as f64;
    Ok(EvalReport {
        rank_accuracy: curve_at(&firsts, ranks),
        map,
        num_queries: lists.len(),
        num_valid_queries: per_query.len(),
        per_query,
    })
}

pub fn evaluate(
    dist: &DistanceMatrix,
    query_meta: &[DescriptorMeta],
    gallery_meta: &[DescriptorMeta],
    cross_camera_only: bool,
) -> Result<EvalReport> {
    let lists = rank(dist, query_meta, gallery_meta, cross_camera_only)?;
    evaluate_lists(&lists, &DEFAULT_RANKS)
}

/// Expected AP of a uniformly random ordering of `m` items, `p` of them
/// relevant.
pub fn chance_ap(m: usize, p: usize) -> f64 {
    assert!(p >= 1 && p <= m);
    if m == 1 {
        return 1.0;
    }
    // a relevant item at position n has on average (n-1)(p-1)/(m-1)
    // relevant items above it
    let c = (p - 1) as f64 / (m - 1) as f64;
    (1..=m)
        .map(|n| (1.0 + (n - 1) as f64 * c) / n as f64)
        .sum::<f64>()
        / m as f64
}
