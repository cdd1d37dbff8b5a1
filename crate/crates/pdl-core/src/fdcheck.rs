//! Central-difference verification of the tape's backward pass.

use alloc::vec::Vec;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor for the relative-error denominator.
const REL_FLOOR: f64 = 1e-8;

/// Compares the analytic gradient of a scalar function against central
/// finite differences and returns the max relative error over all inputs.
///
/// `build` must deterministically construct a scalar loss from leaf vars
/// registered in the order of `inputs`. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check_multi<F>(build: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    debug_assert!((1e-7..=1e-3).contains(&step));

    // Analytic gradients.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.wrt(v).expect("leaf gradient").clone())
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            work[which].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[which].data()[i];
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Single-input convenience wrapper around [`finite_diff_check_multi`].
pub fn finite_diff_check<F>(build: F, input: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_diff_check_multi(
        |tape, vars| build(tape, vars[0]),
        core::slice::from_ref(input),
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::vector(vec![0.3, -1.2, 4.5, 0.0]);
        let err = finite_diff_check(|tape, v| tape.sum(v), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "linear function should be near-exact, got {err}");
    }

    #[test]
    fn quadratic_is_tight() {
        let x = Tensor::vector(vec![0.7, -0.3, 1.1, 2.0, -1.5]);
        let err = finite_diff_check(
            |tape, v| {
                let sq = tape.mul(v, v)?;
                tape.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "quadratic central difference error {err}");
    }

    #[test]
    fn chain_rule_through_ln_of_mean() {
        let x = Tensor::vector(vec![1.3, 0.8, 2.1, 0.4]);
        let err = finite_diff_check(
            |tape, v| {
                let m = tape.mean(v)?;
                Ok(tape.ln_clamped(m, 1e-9))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "ln(mean(x)) error {err}");
    }

    #[test]
    fn multi_input_matmul() {
        let a = Tensor::matrix(3, 2, vec![0.5, -0.2, 1.0, 0.3, -0.8, 0.1]).unwrap();
        let b = Tensor::matrix(2, 4, vec![0.9, 0.1, -0.4, 0.7, 0.2, -1.1, 0.6, 0.05]).unwrap();
        let err = finite_diff_check_multi(
            |tape, vars| {
                let c = tape.matmul(vars[0], vars[1])?;
                tape.sum(c)
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul gradient error {err}");
    }
}
