//! Independent reference implementations shared by the integration tests.
//! None of these call into the library's numerical code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn uniform_usize(rng: &mut ChaCha8Rng, lo: usize, hi_inclusive: usize) -> usize {
    rng.random_range(lo..=hi_inclusive)
}

/// Centre each column and scale it to unit Euclidean norm.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = x.clone();
    for j in 0..z.ncols() {
        let mean = z.column(j).iter().sum::<f64>() / z.nrows() as f64;
        for i in 0..z.nrows() {
            z[(i, j)] -= mean;
        }
        let norm = z.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..z.nrows() {
            z[(i, j)] /= norm;
        }
    }
    z
}

pub fn centered(y: &[f64]) -> Vec<f64> {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| v - m).collect()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `0.5 ||y - X b||^2 + lambda ||b||_1` on
/// unit-norm columns and centred `y`.
pub fn cd_lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut beta = vec![0.0; p];
    let mut r = y.to_vec();
    for sweep in 0..2_000_000 {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let col = x.column(j);
            let rho: f64 = (0..n).map(|i| col[i] * r[i]).sum::<f64>() + beta[j];
            let new = soft(rho, lambda);
            let d = new - beta[j];
            if d != 0.0 {
                for i in 0..n {
                    r[i] -= d * col[i];
                }
                beta[j] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        if sweep % 100 == 99 {
            for i in 0..n {
                r[i] = y[i] - (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>();
            }
        }
        if max_delta < 1e-14 {
            break;
        }
    }
    beta
}

/// Gauss-Jordan elimination with partial pivoting. `None` if singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1e-300);
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(c, piv);
        for i in 0..k {
            if i != c {
                let f = m[i][c] / m[c][c];
                for jj in c..=k {
                    m[i][jj] -= f * m[c][jj];
                }
            }
        }
    }
    Some((0..k).map(|i| m[i][k] / m[i][i]).collect())
}

/// OLS with intercept on the given columns via the normal equations.
/// Returns (coefficients, intercept, rss).
pub fn normal_equations(x: &DMatrix<f64>, y: &[f64], cols: &[usize]) -> Option<(Vec<f64>, f64, f64)> {
    let n = y.len();
    let k = cols.len() + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut r = vec![1.0];
        r.extend(cols.iter().map(|&j| x[(i, j)]));
        r
    };
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for i in 0..n {
        let r = row(i);
        for u in 0..k {
            b[u] += r[u] * y[i];
            for v in 0..k {
                a[u][v] += r[u] * r[v];
            }
        }
    }
    let sol = solve_dense(&a, &b)?;
    let rss = (0..n)
        .map(|i| {
            let r = row(i);
            let f: f64 = r.iter().zip(&sol).map(|(a, b)| a * b).sum();
            (y[i] - f).powi(2)
        })
        .sum();
    Some((sol[1..].to_vec(), sol[0], rss))
}

/// Best RSS subset of each size 1..=max_size by full enumeration.
/// Ties keep the lexicographically first subset.
pub fn brute_force_subsets(x: &DMatrix<f64>, y: &[f64], max_size: usize) -> Vec<(Vec<usize>, f64)> {
    let p = x.ncols();
    let mut best: Vec<Option<(Vec<usize>, f64)>> = vec![None; max_size + 1];
    let mut combo = Vec::new();
    fn rec(
        start: usize,
        p: usize,
        max_size: usize,
        combo: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if !combo.is_empty() {
            f(combo);
        }
        if combo.len() == max_size {
            return;
        }
        for j in start..p {
            combo.push(j);
            rec(j + 1, p, max_size, combo, f);
            combo.pop();
        }
    }
    let mut visit = |s: &[usize]| {
        if let Some((_, _, rss)) = normal_equations(x, y, s) {
            let slot = &mut best[s.len()];
            let better = match slot {
                None => true,
                Some((cur, r)) => rss < *r || (rss == *r && s < cur.as_slice()),
            };
            if better {
                *slot = Some((s.to_vec(), rss));
            }
        }
    };
    rec(0, p, max_size, &mut combo, &mut visit);
    best.into_iter().skip(1).map(|b| b.expect("some subset fits")).collect()
}

/// Empirical quantile by interpolation at position `1 + (N - 1) q`.
pub fn type7_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
