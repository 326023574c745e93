use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::objectives::{GradientBuffer, ModelState};

/// Adam moments for both embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m_users: Array2<f64>,
    pub v_users: Array2<f64>,
    pub m_items: Array2<f64>,
    pub v_items: Array2<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(state: &ModelState) -> Self {
        Self {
            m_users: Array2::zeros(state.users.raw_dim()),
            v_users: Array2::zeros(state.users.raw_dim()),
            m_items: Array2::zeros(state.items.raw_dim()),
            v_items: Array2::zeros(state.items.raw_dim()),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check(name: &str, g: &Array2<f64>, expected: &Array2<f64>) -> Result<()> {
    if g.dim() != expected.dim() {
        return Err(Error::Shape {
            context: "adam_step",
            expected: expected.dim(),
            actual: g.dim(),
        });
    }
    if let Some(pos) = g.iter().position(|x| !x.is_finite()) {
        let (r, c) = (pos / g.ncols(), pos % g.ncols());
        return Err(Error::NonFinite {
            tensor: format!("{name}[{r}, {c}]"),
        });
    }
    Ok(())
}

/// One bias-corrected Adam update. Gradients are validated before anything
/// is modified.
pub fn adam_step(state: &mut ModelState, opt: &mut OptimizerState, grads: &GradientBuffer, lr: f64) -> Result<()> {
    check("dZu", &grads.d_users, &state.users)?;
    check("dZi", &grads.d_items, &state.items)?;
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |theta: &mut Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, g: &Array2<f64>| {
        Zip::from(theta).and(m).and(v).and(g).for_each(|w, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        });
    };
    update(&mut state.users, &mut opt.m_users, &mut opt.v_users, &grads.d_users);
    update(&mut state.items, &mut opt.m_items, &mut opt.v_items, &grads.d_items);
    Ok(())
}
