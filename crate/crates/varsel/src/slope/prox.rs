//! Exact proximal operator of the sorted-L1 norm.

use super::lambda::LambdaSequence;

/// Evaluates `sum_j lambda_j |b|_(j)` with `|b|_(1) >= ... >= |b|_(p)`.
pub fn sorted_l1_norm(beta: &[f64], lambda: &LambdaSequence) -> f64 {
    assert_eq!(beta.len(), lambda.values.len());
    let mut mags: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    mags.iter().zip(&lambda.values).map(|(m, l)| m * l).sum()
}

/// The unique minimizer of `1/2 ||x - v||^2 + sum_j lambda_j |x|_(j)`.
///
/// Works on the magnitudes sorted in decreasing order: subtract lambda, pool
/// adjacent violators so the result stays non-increasing (averaging within
/// pools), clamp at zero, then undo the sort and restore signs.
pub fn prox_sorted_l1(v: &[f64], lambda: &LambdaSequence) -> Vec<f64> {
    let p = v.len();
    assert_eq!(p, lambda.values.len());
    if p == 0 {
        return vec![];
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).unwrap().then(a.cmp(&b)));

    // Pool-adjacent-violators on u - lambda, kept as (sum, width) blocks.
    let mut block_sum = Vec::with_capacity(p);
    let mut block_width = Vec::with_capacity(p);
    let mut block_mean = Vec::with_capacity(p);
    for (rank, &idx) in order.iter().enumerate() {
        let mut s = v[idx].abs() - lambda.values[rank];
        let mut w = 1usize;
        while let Some(&prev) = block_mean.last() {
            if prev <= s / w as f64 {
                s += block_sum.pop().unwrap();
                w += block_width.pop().unwrap();
                block_mean.pop();
            } else {
                break;
            }
        }
        block_sum.push(s);
        block_width.push(w);
        block_mean.push(s / w as f64);
    }

    let mut out = vec![0.0; p];
    let mut rank = 0;
    for (&mean, &w) in block_mean.iter().zip(&block_width) {
        let val = mean.max(0.0);
        for _ in 0..w {
            let idx = order[rank];
            out[idx] = val * v[idx].signum();
            rank += 1;
        }
    }
    // A block containing a zero magnitude has mean <= 0 (pool means lie
    // between the merged block means), so zero inputs stay exactly zero.
    out
}

#[cfg(test)]
mod tests {
    use super::super::lambda::LambdaSequence;
    use super::*;

    fn lam(values: &[f64]) -> LambdaSequence {
        LambdaSequence::explicit(values.to_vec()).unwrap()
    }

    #[test]
    fn norm_hand_example() {
        let l = lam(&[3.0, 2.0, 1.0]);
        assert_eq!(sorted_l1_norm(&[1.0, -3.0, 2.0], &l), 14.0);
    }

    #[test]
    fn norm_of_zero_vector() {
        let l = lam(&[3.0, 2.0, 1.0]);
        assert_eq!(sorted_l1_norm(&[0.0, 0.0, 0.0], &l), 0.0);
    }

    #[test]
    fn constant_lambda_is_l1() {
        let l = lam(&[0.7, 0.7, 0.7, 0.7]);
        let b = [1.0, -2.0, 0.5, 3.0];
        let l1: f64 = b.iter().map(|x: &f64| x.abs()).sum();
        assert!((sorted_l1_norm(&b, &l) - 0.7 * l1).abs() < 1e-12);
    }

    #[test]
    fn constant_lambda_prox_is_soft_threshold() {
        let t = 0.6;
        let l = lam(&[t, t, t, t, t]);
        let v = [1.5, -0.4, 0.61, -2.0, 0.0];
        let got = prox_sorted_l1(&v, &l);
        for (g, &vi) in got.iter().zip(&v) {
            let expected = vi.signum() * (vi.abs() - t).max(0.0);
            assert!((g - expected).abs() < 1e-14, "{g} vs {expected}");
        }
    }

    #[test]
    fn full_shrinkage_when_below_smallest_lambda() {
        let l = lam(&[3.0, 2.5, 2.0]);
        let v = [1.9, -1.5, 0.2];
        assert_eq!(prox_sorted_l1(&v, &l), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn nearby_magnitudes_pool_to_equal_outputs() {
        // u - lambda = (0.5, 0.88) violates monotonicity, so the two
        // coordinates collapse onto a shared magnitude.
        let l = lam(&[0.5, 0.1]);
        let got = prox_sorted_l1(&[1.0, -0.98], &l);
        assert!((got[0].abs() - got[1].abs()).abs() < 1e-14);
        assert!(got[0] > 0.0 && got[1] < 0.0);
        assert!((got[0] - 0.69).abs() < 1e-12);
    }

    #[test]
    fn output_magnitudes_sorted_and_dominated() {
        let mut rng = crate::rng::RngStream::new(21, 0);
        for _ in 0..50 {
            let p = 8;
            let v: Vec<f64> = (0..p).map(|_| 3.0 * rng.normal()).collect();
            let mut lv: Vec<f64> = (0..p).map(|_| rng.uniform() * 2.0).collect();
            lv.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            let l = lam(&lv);
            let out = prox_sorted_l1(&v, &l);
            let mut om: Vec<f64> = out.iter().map(|x| x.abs()).collect();
            om.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            let mut vm: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            vm.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            for i in 0..p {
                assert!(om[i] <= vm[i] + 1e-12, "shrinkage violated at {i}");
                if i > 0 {
                    assert!(om[i] <= om[i - 1] + 1e-12);
                }
            }
        }
    }
}
