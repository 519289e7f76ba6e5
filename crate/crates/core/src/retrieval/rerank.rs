use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argsort, DistanceMatrix};
use crate::error::{PanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankParams {
    pub k: usize,
    /// Weight of the Jaccard term; 1 is plain addition.
    pub lambda: f64,
}

impl Default for RerankParams {
    fn default() -> Self {
        RerankParams { k: 20, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KReciprocalSet {
    pub anchor: usize,
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub k: usize,
}

fn check_square(dist: &DistanceMatrix, k: usize) -> Result<()> {
    if !dist.is_square() {
        return Err(PanError::shape(
            "k_reciprocal",
            &[dist.n_query(), dist.n_gallery()],
            &[dist.n_query(), dist.n_query()],
        ));
    }
    let n = dist.n_query();
    if k == 0 || k >= n {
        return Err(PanError::arg(format!(
            "k = {k} outside [1, {}) for {n} points",
            n
        )));
    }
    Ok(())
}

/// The `k` nearest neighbours of every point of a square matrix, self
/// excluded, ties broken by index.
#[derive(Debug, Clone)]
pub struct Neighbors {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl Neighbors {
    pub fn new(dist: &DistanceMatrix, k: usize) -> Result<Self> {
        check_square(dist, k)?;
        let lists = (0..dist.n_query())
            .into_par_iter()
            .map(|p| {
                let mut order = argsort(dist.row(p));
                order.retain(|&x| x != p);
                order.truncate(k);
                order
            })
            .collect();
        Ok(Neighbors { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn of(&self, p: usize) -> &[usize] {
        &self.lists[p]
    }

    /// Whether `x` is among the `k` nearest of `p`, by comparison with the
    /// last list entry.
    #[inline]
    pub fn contains(&self, dist: &DistanceMatrix, p: usize, x: usize) -> bool {
        if x == p {
            return false;
        }
        let last = *self.lists[p].last().expect("k >= 1");
        let (dx, dl) = (dist.get(p, x), dist.get(p, last));
        dx < dl || (dx == dl && x <= last)
    }

    /// `R(p, k)`.
    pub fn reciprocal(&self, dist: &DistanceMatrix, p: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.lists[p]
            .iter()
            .copied()
            .filter(|&x| self.contains(dist, x, p))
            .collect();
        r.sort_unstable();
        r
    }
}

/// `R(p, k) = { x in N(p, k) : p in N(x, k) }` over a square joint matrix.
pub fn k_reciprocal(anchor: usize, k: usize, dist: &DistanceMatrix) -> Result<KReciprocalSet> {
    let nb = Neighbors::new(dist, k)?;
    if anchor >= dist.n_query() {
        return Err(PanError::arg(format!("anchor {anchor} out of range")));
    }
    Ok(KReciprocalSet {
        anchor,
        members: nb.reciprocal(dist, anchor),
        k,
    })
}

fn half(k: usize) -> usize {
    k.div_ceil(2)
}

fn expand_with(r: &[usize], half_sets: &[Vec<usize>]) -> Vec<usize> {
    let mut out = r.to_vec();
    for &q in r {
        let cand = &half_sets[q];
        let overlap = cand.iter().filter(|x| r.binary_search(x).is_ok()).count();
        // |cand ∩ R| >= 2/3 |cand|, in integers
        if 3 * overlap >= 2 * cand.len() {
            out.extend_from_slice(cand);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `R*`: `R` joined with every `R(q, ceil(k/2))`, `q in R`, that overlaps
/// `R` in at least two thirds of its members.
pub fn expand_set(r: &KReciprocalSet, k: usize, dist: &DistanceMatrix) -> Result<Vec<usize>> {
    check_square(dist, k)?;
    let nb = Neighbors::new(dist, half(k))?;
    let half_sets: Vec<Vec<usize>> = (0..dist.n_query())
        .map(|q| {
            if r.members.contains(&q) {
                nb.reciprocal(dist, q)
            } else {
                Vec::new()
            }
        })
        .collect();
    Ok(expand_with(&r.members, &half_sets))
}

/// `1 - |a ∩ b| / |a ∪ b|` for sorted, duplicate-free sets; 1 when both are
/// empty.
pub fn jaccard_distance(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// `D + lambda * D_jaccard` over a square joint matrix.
pub fn rerank(dist: &DistanceMatrix, params: RerankParams) -> Result<DistanceMatrix> {
    let RerankParams { k, lambda } = params;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PanError::arg(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    check_square(dist, k)?;
    let n = dist.n_query();
    let full = Neighbors::new(dist, k)?;
    let small = Neighbors::new(dist, half(k))?;
    let r: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|p| full.reciprocal(dist, p))
        .collect();
    let r_half: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|p| small.reciprocal(dist, p))
        .collect();
    let r_star: Vec<Vec<usize>> = r.par_iter().map(|rp| expand_with(rp, &r_half)).collect();

    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = dist.get(p, x) + lambda * jaccard_distance(&r_star[p], &r_star[x]);
        }
    });
    DistanceMatrix::new(n, n, values)
}
