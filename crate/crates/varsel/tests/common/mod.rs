//! Shared fixtures and independent oracles for the acceptance suite.

use ndarray::{Array1, Array2};
use varsel::data::{Dataset, Family};
use varsel::slope::LambdaSequence;

/// Sylvester Hadamard matrix of order 64: entries +-1, orthogonal columns.
pub fn hadamard64() -> Array2<f64> {
    let mut h = Array2::<f64>::zeros((64, 64));
    h[[0, 0]] = 1.0;
    let mut m = 1;
    while m < 64 {
        for i in 0..m {
            for j in 0..m {
                let v = h[[i, j]];
                h[[i, j + m]] = v;
                h[[i + m, j]] = v;
                h[[i + m, j + m]] = -v;
            }
        }
        m *= 2;
    }
    h
}

/// Orthogonal design with `X'X = 64 I` (p = 16) and y constructed so that
/// the z-statistics `sqrt(n) beta_hat_j / sigma` equal `z[j]` exactly at
/// sigma = 1.
pub fn orthogonal_dataset(z: &[f64]) -> Dataset {
    let h = hadamard64();
    let (n, p) = (64, z.len());
    assert!(p < 64);
    let mut x = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        x.column_mut(j).assign(&h.column(j + 1));
    }
    let mut y = Array1::<f64>::zeros(n);
    for (j, &zj) in z.iter().enumerate() {
        y.scaled_add(zj / 8.0, &x.column(j));
    }
    Dataset::new(
        y,
        x,
        (0..p).map(|j| format!("v{j}")).collect(),
        Family::Gaussian,
    )
    .unwrap()
}

/// Exhaustive prox oracle for p <= 6: enumerates every ordered partition of
/// every support subset, solves each pattern in closed form, and returns the
/// candidate with the smallest true objective. The optimum's pattern is one
/// of the candidates, so the best candidate is the exact minimizer.
pub fn prox_oracle(v: &[f64], lambda: &LambdaSequence) -> Vec<f64> {
    let p = v.len();
    assert!(p <= 6, "enumeration oracle is exponential in p");
    let objective = |x: &[f64]| -> f64 {
        let mut quad = 0.0;
        for (xi, vi) in x.iter().zip(v) {
            quad += (xi - vi) * (xi - vi);
        }
        let mut mags: Vec<f64> = x.iter().map(|t| t.abs()).collect();
        mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        0.5 * quad + mags.iter().zip(&lambda.values).map(|(m, l)| m * l).sum::<f64>()
    };

    let mut best = vec![0.0; p];
    let mut best_obj = objective(&best);

    // Enumerate support subsets by bitmask, then ordered partitions of the
    // subset into magnitude groups (first group = largest magnitude).
    for mask in 1u32..(1 << p) {
        let members: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let mut acc: Vec<Vec<usize>> = Vec::new();
        enumerate_ordered_partitions(&members, &mut acc, &mut |parts| {
            // Closed-form magnitude per group given the lambda ranks it
            // occupies; signs follow v coordinatewise.
            let mut x = vec![0.0; p];
            let mut rank = 0;
            for group in parts {
                let lam_sum: f64 = lambda.values[rank..rank + group.len()].iter().sum();
                let v_sum: f64 = group.iter().map(|&j| v[j].abs()).sum();
                let m = (v_sum - lam_sum) / group.len() as f64;
                for &j in group {
                    x[j] = m * v[j].signum();
                }
                rank += group.len();
            }
            let obj = objective(&x);
            if obj < best_obj {
                best_obj = obj;
                best = x;
            }
        });
    }
    best
}

/// Calls `f` with every ordered partition of `items` into nonempty groups.
fn enumerate_ordered_partitions<F: FnMut(&[Vec<usize>])>(
    items: &[usize],
    acc: &mut Vec<Vec<usize>>,
    f: &mut F,
) {
    if items.is_empty() {
        f(acc);
        return;
    }
    let n = items.len();
    for mask in 1u32..(1 << n) {
        let (mut first, mut rest) = (Vec::new(), Vec::new());
        for (i, &it) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                first.push(it);
            } else {
                rest.push(it);
            }
        }
        acc.push(first);
        enumerate_ordered_partitions(&rest, acc, f);
        acc.pop();
    }
}

/// Long-run subgradient descent for the gaussian SLOPE objective with
/// adaptive Polyak steps (target-level halving). Independent of the
/// proximal-gradient implementation path.
pub fn subgradient_oracle(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambda: &LambdaSequence,
    iterations: usize,
) -> f64 {
    let p = x.ncols();
    let objective = |b: &Array1<f64>| -> f64 {
        let r = y - &x.dot(b);
        let mut mags: Vec<f64> = b.iter().map(|t| t.abs()).collect();
        mags.sort_unstable_by(|a, c| c.partial_cmp(a).unwrap());
        0.5 * r.dot(&r) + mags.iter().zip(&lambda.values).map(|(m, l)| m * l).sum::<f64>()
    };
    // A valid subgradient of J at b: assign lambda by magnitude rank, signed.
    let sub_j = |b: &Array1<f64>| -> Array1<f64> {
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &c| b[c].abs().partial_cmp(&b[a].abs()).unwrap().then(a.cmp(&c)));
        let mut g = Array1::<f64>::zeros(p);
        for (rank, &j) in order.iter().enumerate() {
            g[j] = lambda.values[rank] * b[j].signum();
        }
        g
    };

    // Polyak steps against a sliding target `f_best - delta`, with `delta`
    // halved on a fixed phase schedule so the level tracks f* from above.
    let mut b = Array1::<f64>::zeros(p);
    let mut b_best = b.clone();
    let mut f_best = objective(&b);
    let mut delta = 0.5 * f_best.abs().max(1.0);
    let phases = 36;
    let per_phase = (iterations / phases).max(1);
    for _ in 0..phases {
        for _ in 0..per_phase {
            let g = x.t().dot(&(x.dot(&b) - y)) + sub_j(&b);
            let gnorm_sq = g.dot(&g);
            if gnorm_sq <= 1e-30 {
                return f_best;
            }
            let f_cur = objective(&b);
            let step = (f_cur - (f_best - delta)) / gnorm_sq;
            b = &b - &(&g * step);
            let f_new = objective(&b);
            if f_new < f_best {
                f_best = f_new;
                b_best = b.clone();
            }
        }
        // Restart each phase from the incumbent with a tighter level.
        b = b_best.clone();
        delta *= 0.5;
        if delta < 1e-16 * f_best.abs().max(1.0) {
            break;
        }
    }
    f_best
}
