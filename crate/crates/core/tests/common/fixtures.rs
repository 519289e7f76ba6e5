use pan_core::descriptor::DescriptorMeta;
use pan_core::metrics::{chance_ap, evaluate};
use pan_core::retrieval::{pairwise_sqdist, rank, DistanceMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn meta(identity: u32, camera: u16) -> DescriptorMeta {
    DescriptorMeta {
        sample_id: 0,
        identity,
        camera,
    }
}

pub fn three_query_fixture() -> (DistanceMatrix, Vec<DescriptorMeta>, Vec<DescriptorMeta>) {
    let q = vec![meta(1, 1), meta(2, 1), meta(3, 2)];
    let g = vec![
        meta(1, 2),
        meta(2, 2),
        meta(1, 1),
        meta(3, 1),
        meta(2, 1),
        meta(4, 2),
    ];
    #[rustfmt::skip]
    let d = vec![
        0.5, 0.1, 0.0, 0.9, 0.3, 0.2,
        0.2, 0.4, 0.6, 0.1, 0.0, 0.8,
        0.7, 0.6, 0.5, 0.05, 0.4, 0.3,
    ];
    (DistanceMatrix::new(3, 6, d).unwrap(), q, g)
}

#[derive(Debug)]
pub struct ChanceMap {
    pub mean: f64,
    pub expected: f64,
    pub se: f64,
}

impl ChanceMap {
    pub fn within_3se(&self) -> bool {
        (self.mean - self.expected).abs() <= 3.0 * self.se
    }
}

/// Mean mAP of Gaussian embeddings over `seeds` draws against its analytic
/// expectation.
pub fn chance_map(seeds: u64) -> ChanceMap {
    // 20 identities, two queries and six gallery images each, three cameras
    let (ids, dim) = (20u32, 16);
    let qm: Vec<_> = (0..ids).flat_map(|i| [meta(i, 1), meta(i, 2)]).collect();
    let gm: Vec<_> = (0..ids)
        .flat_map(|i| (0..6).map(move |j| meta(i, 1 + (j % 3) as u16)))
        .collect();
    // expected AP per query from its list length and relevant count
    let lists = rank(
        &DistanceMatrix::new(qm.len(), gm.len(), vec![0.0; qm.len() * gm.len()]).unwrap(),
        &qm,
        &gm,
        true,
    )
    .unwrap();
    let expected: f64 = lists
        .iter()
        .map(|l| chance_ap(l.entries.len(), l.num_relevant()))
        .sum::<f64>()
        / lists.len() as f64;

    let mut maps = Vec::new();
    for seed in 0..seeds {
        let mut rng = super::rng(seed);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let (q, g) = (draw(qm.len()), draw(gm.len()));
        let d = pairwise_sqdist(&q, &g).unwrap();
        maps.push(evaluate(&d, &qm, &gm, true).unwrap().map);
    }
    let n = maps.len() as f64;
    let mean = maps.iter().sum::<f64>() / n;
    let sd = (maps.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    ChanceMap { mean, expected, se }
}
