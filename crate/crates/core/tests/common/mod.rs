//! Straight dense reference implementations used as test oracles. None of
//! this touches the sparse kernels of the library.

// index loops mirror the textbook formulas on purpose
#![allow(dead_code, clippy::needless_range_loop)]

use featprop::{DenseMatrix, FeatureBundle, InteractionMatrix, MissingMask, ModalityFeatureSet};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(n: usize, m: usize) -> Dense {
    vec![vec![0.0; m]; n]
}

/// `RᵀR` by the textbook triple loop.
pub fn project(r: &[Vec<u8>], num_items: usize) -> Dense {
    let mut out = zeros(num_items, num_items);
    for i in 0..num_items {
        for j in 0..num_items {
            out[i][j] = r.iter().map(|row| f64::from(row[i] * row[j])).sum();
        }
    }
    out
}

/// Per-row top-n of positive entries (ties to the lower column), binarized
/// and OR-ed with its transpose. Also returns the pre-symmetrization rows.
pub fn top_n(a: &Dense, n: usize, exclude_diagonal: bool) -> (Dense, Vec<Vec<usize>>) {
    let size = a.len();
    let mut chosen = Vec::with_capacity(size);
    for i in 0..size {
        let mut cand: Vec<usize> = (0..size)
            .filter(|&j| a[i][j] > 0.0 && !(exclude_diagonal && i == j))
            .collect();
        cand.sort_by(|&x, &y| a[i][y].partial_cmp(&a[i][x]).unwrap().then(x.cmp(&y)));
        cand.truncate(n);
        cand.sort_unstable();
        chosen.push(cand);
    }
    let mut b = zeros(size, size);
    for (i, cols) in chosen.iter().enumerate() {
        for &j in cols {
            b[i][j] = 1.0;
            b[j][i] = 1.0;
        }
    }
    (b, chosen)
}

pub fn normalize(b: &Dense) -> Dense {
    let d: Vec<f64> = b.iter().map(|row| row.iter().sum()).collect();
    let n = b.len();
    let mut out = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if b[i][j] != 0.0 {
                out[i][j] = b[i][j] / (d[i].sqrt() * d[j].sqrt());
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, f: &Dense) -> Dense {
    let n = a.len();
    let c = f.first().map_or(0, Vec::len);
    let mut out = zeros(n, c);
    for i in 0..n {
        for k in 0..n {
            for j in 0..c {
                out[i][j] += a[i][k] * f[k][j];
            }
        }
    }
    out
}

/// Fixed number of layers of `F <- ÃF` followed by resetting known rows.
/// Returns the state after every layer.
pub fn featprop_layers(a: &Dense, f: &Dense, known: &[bool], layers: usize) -> Vec<Dense> {
    let mut cur = f.clone();
    for (i, row) in cur.iter_mut().enumerate() {
        if !known[i] {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut out = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mut next = matmul(a, &cur);
        for i in 0..a.len() {
            if known[i] {
                next[i] = f[i].clone();
            }
        }
        out.push(next.clone());
        cur = next;
    }
    out
}

pub fn spectral_radius(a: &Dense) -> f64 {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |r, v| r.max(v.abs()))
}

pub fn max_abs_diff(a: &Dense, b: &DenseMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, j)).abs());
        }
    }
    worst
}

pub fn to_dense(m: &DenseMatrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_dense(d: &Dense) -> DenseMatrix {
    DenseMatrix::from_rows(d).unwrap()
}

/// Items with no path to a known item in the binary graph `b`.
pub fn unreachable(b: &Dense, known: &[bool]) -> Vec<usize> {
    let n = b.len();
    let mut seen: Vec<bool> = known.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&i| known[i]).collect();
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if b[i][j] != 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

/// Random problem instance: interactions, features and mask.
pub struct Instance {
    pub dense_r: Vec<Vec<u8>>,
    pub interactions: InteractionMatrix,
    pub features: Vec<Dense>,
    pub mask: MissingMask,
}

impl Instance {
    pub fn bundle(&self) -> FeatureBundle {
        let sets = self
            .features
            .iter()
            .enumerate()
            .map(|(m, f)| ModalityFeatureSet::new(format!("m{m}"), from_dense(f)).unwrap())
            .collect();
        FeatureBundle::new(sets).unwrap()
    }

    pub fn num_items(&self) -> usize {
        self.mask.num_items()
    }
}

/// Up to `max_users` x `max_items` interactions with density drawn per
/// instance, one or two modalities of dimension up to `max_dim`, values in
/// [-1, 1], and at least one known and one missing item.
pub fn random_instance(seed: u64, max_users: usize, max_items: usize, max_dim: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(1..=max_users);
    let items = rng.random_range(2..=max_items);
    let density = rng.random_range(0.02..0.4);
    let dense_r: Vec<Vec<u8>> = (0..users)
        .map(|_| {
            (0..items)
                .map(|_| u8::from(rng.random_bool(density)))
                .collect()
        })
        .collect();
    let interactions = InteractionMatrix::from_dense(&dense_r).unwrap();
    let modalities = rng.random_range(1..=2);
    let features = (0..modalities)
        .map(|_| {
            let dim = rng.random_range(1..=max_dim);
            (0..items)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let missing_rate = rng.random_range(0.1..0.9);
    let mut known: Vec<bool> = (0..items).map(|_| !rng.random_bool(missing_rate)).collect();
    let first = rng.random_range(0..items);
    known[first] = true;
    let second = (first + 1 + rng.random_range(0..items - 1)) % items;
    known[second] = false;
    Instance {
        dense_r,
        interactions,
        features,
        mask: MissingMask::from_known(known),
    }
}

/// Dense normalized adjacency of an instance.
pub fn dense_graph(inst: &Instance, n: usize, exclude_diagonal: bool) -> (Dense, Dense) {
    let raw = project(&inst.dense_r, inst.num_items());
    let (b, _) = top_n(&raw, n, exclude_diagonal);
    let a = normalize(&b);
    (b, a)
}
