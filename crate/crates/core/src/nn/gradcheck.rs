//! Central finite-difference checks of reverse-mode gradients, run in `f64`.
//!
//! The numeric side only ever evaluates forward passes, so it is
//! independent of every backward rule it checks.

use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::Rng;

pub const STEP: f64 = 1e-6;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`; zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn eval_inputs<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Relative error between backprop and central differences for the gradient
/// of a scalar function of several input tensors.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], f: F) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let mut analytic = Vec::new();
    for (&v, t) in vars.iter().zip(inputs) {
        match grads.wrt(v) {
            Some(gr) => analytic.extend_from_slice(gr),
            None => analytic.extend(core::iter::repeat_n(0.0, t.len())),
        }
    }

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for t in 0..inputs.len() {
        for i in 0..inputs[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + STEP;
            let up = eval_inputs(&f, &work)?;
            work[t].data_mut()[i] = orig - STEP;
            let down = eval_inputs(&f, &work)?;
            work[t].data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

/// Same check with respect to model parameters. With `samples`, only that
/// many randomly chosen scalars (seeded) are perturbed.
pub fn check_params<F>(store: &ParamStore<f64>, f: F, samples: Option<(usize, u64)>) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::with_params(store);
        let out = f(&mut g)?;
        g.backward(out)?
    };
    let mut full: Vec<Vec<f64>> = store.iter().map(|p| alloc::vec![0.0; p.value.len()]).collect();
    for (id, gr) in grads.param_grads() {
        full[id.index()].copy_from_slice(gr);
    }

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in store.iter().enumerate() {
        for i in 0..p.value.len() {
            coords.push((pi, i));
        }
    }
    if let Some((n, seed)) = samples {
        let mut rng = Rng::new(seed);
        rng.shuffle(&mut coords);
        coords.truncate(n);
    }

    let mut work = store.clone();
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::with_params(s);
        let out = f(&mut g)?;
        Ok(g.value(out).item())
    };
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    for &(pi, i) in &coords {
        let id = ParamId(pi);
        let orig = work.value(id).data()[i];
        work.get_mut(id).value.data_mut()[i] = orig + STEP;
        let up = eval(&work)?;
        work.get_mut(id).value.data_mut()[i] = orig - STEP;
        let down = eval(&work)?;
        work.get_mut(id).value.data_mut()[i] = orig;
        analytic.push(full[pi][i]);
        numeric.push((up - down) / (2.0 * STEP));
    }
    Ok(relative_error(&analytic, &numeric))
}
