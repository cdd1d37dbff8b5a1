//! Correctly-rounded f64 summation (Shewchuk partials, the `fsum`
//! algorithm). The result is the exact real sum rounded once, so it does
//! not depend on the order of the inputs — reductions built on it are
//! bitwise invariant under batch permutations.

use alloc::vec::Vec;

pub(crate) fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut keep = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[keep] = lo;
                keep += 1;
            }
            x = hi;
        }
        partials.truncate(keep);
        partials.push(x);
    }

    // Sum the non-overlapping partials from largest to smallest, applying
    // the half-ulp correction so the final rounding is exact.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

pub(crate) fn exact_mean(values: &[f64]) -> f64 {
    exact_sum(values.iter().copied()) / values.len() as f64
}

/// Population variance around the exact mean.
pub(crate) fn exact_population_variance(values: &[f64]) -> f64 {
    let mu = exact_mean(values);
    exact_sum(values.iter().map(|&x| (x - mu) * (x - mu))) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_plain_sum_on_friendly_values() {
        assert_eq!(exact_sum([2.0, 4.0, 6.0]), 12.0);
        assert_eq!(exact_sum([]), 0.0);
    }

    #[test]
    fn recovers_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([1e16, 1.0, -1e16, 1.0]), 2.0);
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let values = [0.1, -0.7, 1e-9, 3.7, -2.2, 0.30000001, 5e7, -5e7];
        let forward = exact_sum(values.iter().copied());
        let backward = exact_sum(values.iter().rev().copied());
        assert_eq!(forward.to_bits(), backward.to_bits());

        let rotated = exact_sum(values[3..].iter().chain(&values[..3]).copied());
        assert_eq!(forward.to_bits(), rotated.to_bits());
    }
}
