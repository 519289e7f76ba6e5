//! Brute-force re-ranking reference: full sort for every query, set algebra
//! on BTreeSets.

use std::collections::BTreeSet;

use pan_core::retrieval::{pairwise_sqdist, DistanceMatrix};
use rand::Rng;

pub fn brute_nn(d: &DistanceMatrix, p: usize, k: usize) -> Vec<usize> {
    let n = d.n_query();
    let mut idx: Vec<usize> = (0..n).filter(|&x| x != p).collect();
    // insertion sort by (distance, index)
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (idx[j - 1], idx[j]);
            if (d.get(p, a), a) > (d.get(p, b), b) {
                idx.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    idx.truncate(k);
    idx
}

pub fn brute_r(d: &DistanceMatrix, p: usize, k: usize) -> BTreeSet<usize> {
    brute_nn(d, p, k)
        .into_iter()
        .filter(|&x| brute_nn(d, x, k).contains(&p))
        .collect()
}

pub fn brute_r_star(d: &DistanceMatrix, p: usize, k: usize) -> BTreeSet<usize> {
    let r = brute_r(d, p, k);
    let mut out = r.clone();
    for &q in &r {
        let c = brute_r(d, q, k.div_ceil(2));
        let overlap = c.intersection(&r).count() as f64;
        if overlap >= 2.0 / 3.0 * c.len() as f64 {
            out.extend(c);
        }
    }
    out
}

pub fn brute_jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    1.0 - a.intersection(b).count() as f64 / union as f64
}

pub fn brute_rerank(d: &DistanceMatrix, k: usize, lambda: f64) -> Vec<f64> {
    let n = d.n_query();
    let stars: Vec<_> = (0..n).map(|p| brute_r_star(d, p, k)).collect();
    let mut out = vec![0.0; n * n];
    for p in 0..n {
        for x in 0..n {
            out[p * n + x] = d.get(p, x) + lambda * brute_jaccard(&stars[p], &stars[x]);
        }
    }
    out
}

pub fn random_points(seed: u64, n: usize, dim: usize, lattice: bool) -> Vec<Vec<f64>> {
    let mut rng = super::rng(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if lattice {
                        // coarse grid so exact distance ties occur
                        rng.gen_range(0..4) as f64
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn joint(seed: u64, n: usize, lattice: bool) -> DistanceMatrix {
    let pts = random_points(seed, n, 3, lattice);
    pairwise_sqdist(&pts, &pts).unwrap()
}
