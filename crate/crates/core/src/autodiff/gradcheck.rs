use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences and returns the largest elementwise relative error.
///
/// `f` receives a fresh graph and the input recorded on it, and must return a
/// scalar node. It is evaluated `2·len(x) + 1` times, so any randomness inside
/// it has to be seeded identically on each call.
pub fn finite_diff_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Real,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let analytic = analytic_gradient(&f, x)?;
    let numeric = numeric_gradient(&f, x, eps)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Gradient of `f` at `x` from one backward sweep.
pub fn analytic_gradient<T, F>(f: &F, x: &Tensor<T>) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    check_finite(g.value(out))?;
    g.backward(out)?;
    Ok(g
        .grad(xv)
        .map(<[T]>::to_vec)
        .unwrap_or_else(|| vec![T::zero(); x.len()]))
}

/// Central-difference gradient of `f` at `x` with step `eps`.
pub fn numeric_gradient<T, F>(f: &F, x: &Tensor<T>, eps: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    if eps <= T::zero() {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let eval = |probe: Tensor<T>| -> Result<T> {
        let mut g = Graph::new();
        let xv = g.constant(probe);
        let out = f(&mut g, xv)?;
        check_finite(g.value(out))?;
        if !g.value(out).is_scalar() {
            return Err(Error::Contract("function must return a scalar".into()));
        }
        Ok(g.value(out).data()[0])
    };
    let two = lit::<T>(2.0);
    (0..x.len())
        .map(|i| {
            let mut plus = x.clone();
            plus.data_mut()[i] += eps;
            let mut minus = x.clone();
            minus.data_mut()[i] -= eps;
            Ok((eval(plus)? - eval(minus)?) / (two * eps))
        })
        .collect()
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, 1e-8)`.
pub fn max_relative_error<T: Real>(analytic: &[T], numeric: &[T]) -> T {
    let floor = lit::<T>(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), T::max)
}

fn check_finite<T: Real>(t: &Tensor<T>) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite function value".into()))
    }
}
