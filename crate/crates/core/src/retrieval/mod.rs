//! Euclidean ranking and k-reciprocal Jaccard re-ranking.

mod pand;
mod rerank;

use rayon::prelude::*;

use crate::descriptor::DescriptorMeta;
use crate::error::{PanError, Result};

pub use pand::{read_pand, write_pand, PAND_MAGIC};
pub use rerank::{
    expand_set, jaccard_distance, k_reciprocal, rerank, KReciprocalSet, Neighbors, RerankParams,
};

/// Row-major squared Euclidean distances, queries by gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n_query: usize,
    n_gallery: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n_query: usize, n_gallery: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_query * n_gallery {
            return Err(PanError::shape(
                "DistanceMatrix::new",
                &[values.len()],
                &[n_query, n_gallery],
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PanError::arg(format!(
                "distance {v} is negative or non-finite"
            )));
        }
        Ok(DistanceMatrix {
            n_query,
            n_gallery,
            values,
        })
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn n_gallery(&self) -> usize {
        self.n_gallery
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_gallery + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_gallery..(i + 1) * self.n_gallery]
    }

    pub fn is_square(&self) -> bool {
        self.n_query == self.n_gallery
    }

    /// Sub-matrix of rows `r0..r1` and columns `c0..c1`.
    pub fn block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<Self> {
        if rows.end > self.n_query
            || cols.end > self.n_gallery
            || rows.is_empty()
            || cols.is_empty()
        {
            return Err(PanError::arg(format!(
                "block {rows:?} x {cols:?} outside {} x {}",
                self.n_query, self.n_gallery
            )));
        }
        let values = rows
            .clone()
            .flat_map(|i| self.row(i)[cols.clone()].iter().copied())
            .collect();
        Ok(DistanceMatrix {
            n_query: rows.len(),
            n_gallery: cols.len(),
            values,
        })
    }
}

/// `values[i][j] = sum_k (q_ik - g_jk)^2`. Rows are computed in parallel,
/// each with a fixed summation order.
pub fn pairwise_sqdist<Q: AsRef<[f64]> + Sync, G: AsRef<[f64]> + Sync>(
    queries: &[Q],
    gallery: &[G],
) -> Result<DistanceMatrix> {
    let dim = queries
        .first()
        .map(|q| q.as_ref().len())
        .or_else(|| gallery.first().map(|g| g.as_ref().len()))
        .unwrap_or(0);
    for v in queries
        .iter()
        .map(AsRef::as_ref)
        .chain(gallery.iter().map(AsRef::as_ref))
    {
        if v.len() != dim {
            return Err(PanError::shape("pairwise_sqdist", &[v.len()], &[dim]));
        }
    }
    let ng = gallery.len();
    let mut values = vec![0.0; queries.len() * ng];
    if ng > 0 {
        values.par_chunks_mut(ng).zip(queries).for_each(|(row, q)| {
            let q = q.as_ref();
            for (out, g) in row.iter_mut().zip(gallery) {
                *out = q
                    .iter()
                    .zip(g.as_ref())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        });
    }
    DistanceMatrix::new(queries.len(), ng, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEntry {
    pub index: usize,
    pub distance: f64,
    pub relevant: bool,
}

/// One query's gallery ordering, junk already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankList {
    pub query: usize,
    pub entries: Vec<RankEntry>,
}

impl RankList {
    pub fn num_relevant(&self) -> usize {
        self.entries.iter().filter(|e| e.relevant).count()
    }

    pub fn relevance(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.relevant).collect()
    }
}

/// Ascending order of `row`, ties by index.
pub fn argsort(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order
}

/// Ranks the gallery for every query. With `cross_camera_only`, gallery
/// items sharing both identity and camera with the query are dropped.
pub fn rank(
    dist: &DistanceMatrix,
    query_meta: &[DescriptorMeta],
    gallery_meta: &[DescriptorMeta],
    cross_camera_only: bool,
) -> Result<Vec<RankList>> {
    if query_meta.len() != dist.n_query() || gallery_meta.len() != dist.n_gallery() {
        return Err(PanError::arg(format!(
            "metadata for {} queries and {} gallery items, matrix is {} x {}",
            query_meta.len(),
            gallery_meta.len(),
            dist.n_query(),
            dist.n_gallery()
        )));
    }
    Ok((0..dist.n_query())
        .into_par_iter()
        .map(|i| {
            let q = query_meta[i];
            let row = dist.row(i);
            let entries = argsort(row)
                .into_iter()
                .filter_map(|j| {
                    let g = gallery_meta[j];
                    let same_id = g.identity == q.identity;
                    if cross_camera_only && same_id && g.camera == q.camera {
                        return None;
                    }
                    Some(RankEntry {
                        index: j,
                        distance: row[j],
                        relevant: same_id,
                    })
                })
                .collect();
            RankList { query: i, entries }
        })
        .collect())
}
