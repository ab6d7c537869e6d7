use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::rng_from_seed;

/// Random Latin hypercube: `m` points in `(0,1)^dims`, one per stratum
/// `[(k)/m, (k+1)/m)` in every coordinate.
pub fn lhd(m: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let mut pts = vec![vec![0.0; dims]; m];
    let mut perm: Vec<usize> = (0..m).collect();
    for d in 0..dims {
        perm.shuffle(&mut rng);
        for (row, &k) in pts.iter_mut().zip(&perm) {
            let u: f64 = rng.sample(Open01);
            row[d] = (k as f64 + u) / m as f64;
        }
    }
    pts
}
