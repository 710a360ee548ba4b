//! Shared helpers for the integration suites: seeded Gaussian draws and an
//! independent brute-force oracle for rank-restricted least squares on an
//! enumerated support.

// Compiled once per test target; not every suite touches every helper.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            g
        });
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Unconstrained least-squares objective via normal equations and Cholesky,
/// deliberately a different algorithm from the library's SVD-based solver.
fn ols_rss_cholesky(a: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let chol = nalgebra::Cholesky::new(gram).expect("oracle design should be full rank");
    let coef = chol.solve(&(a.transpose() * y));
    (y - a * coef).norm_squared()
}

/// Best rank-1 objective on the sphere: for each direction u the optimal
/// right factor is closed-form, so the objective reduces to
/// ‖Y‖² − ‖Yᵀ(Au)‖²/‖Au‖². Scans seeded directions and polishes the best by
/// alternating least squares.
fn rank_one_grid_rss(a: &DMatrix<f64>, y: &DMatrix<f64>, seed: u64) -> f64 {
    let j = a.ncols();
    let y_ss = y.norm_squared();
    let mut rng = rng(seed);
    let mut best = f64::INFINITY;
    let mut best_u = DVector::zeros(j);
    let consider = |u: &DVector<f64>, best: &mut f64, best_u: &mut DVector<f64>| {
        let w = a * u;
        let wn = w.norm_squared();
        if wn <= 1e-12 {
            return;
        }
        let obj = y_ss - (y.transpose() * &w).norm_squared() / wn;
        if obj < *best {
            *best = obj;
            *best_u = u.clone();
        }
    };
    for axis in 0..j {
        let mut u = DVector::zeros(j);
        u[axis] = 1.0;
        consider(&u, &mut best, &mut best_u);
    }
    for _ in 0..500 {
        let u = unit_vector(&mut rng, j);
        consider(&u, &mut best, &mut best_u);
    }
    // Polish: alternate the closed-form factors from the grid winner.
    let mut u = best_u.clone();
    for _ in 0..200 {
        let w = a * &u;
        let wn = w.norm_squared();
        if wn <= 1e-12 {
            break;
        }
        let v = y.transpose() * &w / wn;
        let vn = v.norm_squared();
        if vn <= 1e-300 {
            break;
        }
        let gram = a.transpose() * a;
        let Some(chol) = nalgebra::Cholesky::new(gram) else {
            break;
        };
        let next = chol.solve(&(a.transpose() * y * &v)) / vn;
        let norm = next.norm();
        if norm <= 1e-300 {
            break;
        }
        u = next / norm;
        consider(&u, &mut best, &mut best_u);
        u = best_u.clone();
    }
    best
}

/// Best rank-r objective by alternating least squares over B = UVᵀ from many
/// seeded random starts. The factor updates are the exact conditional
/// minimizers, so each run is nonincreasing; the multi-start minimum stands
/// in for the global optimum on these tiny problems.
fn rank_r_als_rss(a: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, seed: u64) -> f64 {
    let m = y.ncols();
    let mut rng = rng(seed);
    let gram = a.transpose() * a;
    let chol = nalgebra::Cholesky::new(gram).expect("oracle design should be full rank");
    let aty = a.transpose() * y;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let mut v = normal_matrix(&mut rng, m, r);
        let mut obj_prev = f64::INFINITY;
        for _ in 0..150 {
            let Some(vtv_inv) = (v.transpose() * &v).try_inverse() else {
                break;
            };
            let u = chol.solve(&(&aty * &v)) * vtv_inv;
            let w = a * &u;
            let Some(wtw_inv) = (w.transpose() * &w).try_inverse() else {
                break;
            };
            v = y.transpose() * &w * wtw_inv;
            let obj = (y - &w * v.transpose()).norm_squared();
            if obj_prev - obj <= 1e-14 * (1.0 + obj) {
                obj_prev = obj;
                break;
            }
            obj_prev = obj;
        }
        if obj_prev < best {
            best = obj_prev;
        }
    }
    best
}

/// Independent minimum of ‖Y − X B‖² over matrices supported on `support`
/// with rank ≤ r: exact closed form when the rank budget is vacuous, sphere
/// grid + polish for rank 1, multi-start alternating least squares above.
pub fn oracle_cell_rss(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    support: &[usize],
    r: usize,
    seed: u64,
) -> f64 {
    let a = x.select_columns(support.iter());
    let cap = support.len().min(y.ncols());
    assert!(r >= 1 && r <= cap, "oracle asked for rank {r} with cap {cap}");
    if r == cap {
        ols_rss_cholesky(&a, y)
    } else if r == 1 {
        rank_one_grid_rss(&a, y, seed)
    } else {
        rank_r_als_rss(&a, y, r, seed)
    }
}

/// All supports of the given size, in lexicographic order.
pub fn supports_of_size(p: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn recurse(p: usize, size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..p {
            current.push(i);
            recurse(p, size, i + 1, current, out);
            current.pop();
        }
    }
    recurse(p, size, 0, &mut current, &mut out);
    out
}
