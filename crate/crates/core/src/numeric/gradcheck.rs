use crate::error::Result;
use crate::numeric::{Matrix, ParamStore, Tape, Var};

/// Largest `|analytic − central difference| / max(1, |central difference|)`
/// over every scalar in `params`.
///
/// `f` builds a scalar on a fresh tape from the current parameter values.
pub fn grad_check<F>(params: &ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let analytic = analytic_gradients(params, &f)?;
    compare_gradients(params, &analytic, eps, f)
}

pub fn analytic_gradients<F>(params: &ParamStore, f: &F) -> Result<Vec<Matrix>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut work = params.clone();
    work.zero_grad();
    let mut tape = Tape::new();
    let root = f(&mut tape, &work)?;
    let grads = tape.backward(root)?;
    work.accumulate(&tape, &grads)?;
    Ok((0..work.len()).map(|i| work.grad(i).clone()).collect())
}

/// Compares supplied gradients against central differences of `f`.
pub fn compare_gradients<F>(params: &ParamStore, analytic: &[Matrix], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut work = params.clone();
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let root = f(&mut tape, store)?;
        Ok(tape.scalar(root))
    };
    let mut worst: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate().take(work.len()) {
        for k in 0..work.value(p).len() {
            let orig = work.value(p).as_slice()[k];
            work.value_mut(p).as_mut_slice()[k] = orig + eps;
            let up = eval(&work)?;
            work.value_mut(p).as_mut_slice()[k] = orig - eps;
            let down = eval(&work)?;
            work.value_mut(p).as_mut_slice()[k] = orig;
            let fd = (up - down) / (2.0 * eps);
            let err = (grad.as_slice()[k] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
