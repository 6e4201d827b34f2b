use serde::{Deserialize, Serialize};

use super::{Gradients, Network, Params, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Default for AdamParams {
    fn default() -> Self {
        Self::with_lr(1e-4)
    }
}

impl AdamParams {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Option<Params<T>>>,
    pub v: Vec<Option<Params<T>>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_network(net: &Network<T>) -> Self {
        let zeros: Vec<_> = net
            .params()
            .iter()
            .map(|p| p.as_ref().map(Params::zeros_like))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn cast<U: Scalar>(&self) -> AdamState<U> {
        let c =
            |x: &Vec<Option<Params<T>>>| x.iter().map(|p| p.as_ref().map(Params::cast)).collect();
        AdamState {
            step: self.step,
            m: c(&self.m),
            v: c(&self.v),
        }
    }
}

/// One bias-corrected Adam update of every trainable layer that has a
/// gradient. Frozen layers keep their weights and moments untouched.
pub fn adam_step<T: Scalar>(
    net: &mut Network<T>,
    state: &mut AdamState<T>,
    grads: &Gradients<T>,
    p: &AdamParams,
) -> Result<()> {
    let n = net.params().len();
    if grads.layers.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch {
            layer: 0,
            detail: format!(
                "gradient/moment layer counts {}/{} do not match network ({n})",
                grads.layers.len(),
                state.m.len()
            ),
        });
    }
    for (i, g) in grads.layers.iter().enumerate() {
        if let Some(g) = g {
            let ok = match (&net.params()[i], &state.m[i], &state.v[i]) {
                (Some(w), Some(m), Some(v)) => {
                    w.weights.len() == g.weights.len()
                        && w.bias.len() == g.bias.len()
                        && m.len() == w.len()
                        && v.len() == w.len()
                }
                _ => false,
            };
            if !ok {
                return Err(Error::ShapeMismatch {
                    layer: i,
                    detail: "gradient shape does not match parameters".into(),
                });
            }
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let b1 = T::from_f64(p.beta1);
    let b2 = T::from_f64(p.beta2);
    let c1 = T::from_f64(1.0 / (1.0 - p.beta1.powf(t)));
    let c2 = T::from_f64(1.0 / (1.0 - p.beta2.powf(t)));
    let lr = T::from_f64(p.learning_rate);
    let eps = T::from_f64(p.epsilon);
    let one = T::one();
    let trainable: Vec<bool> = net.spec().layers.iter().map(|l| l.trainable).collect();
    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        if !trainable[i] {
            continue;
        }
        let w = net.params_mut()[i].as_mut().expect("checked");
        let m = state.m[i].as_mut().expect("checked");
        let v = state.v[i].as_mut().expect("checked");
        let update = |theta: &mut [T], m: &mut [T], v: &mut [T], g: &[T]| {
            for j in 0..theta.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mh = m[j] * c1;
                let vh = v[j] * c2;
                theta[j] = theta[j] - lr * mh / (vh.sqrt() + eps);
            }
        };
        update(&mut w.weights, &mut m.weights, &mut v.weights, &g.weights);
        update(&mut w.bias, &mut m.bias, &mut v.bias, &g.bias);
    }
    Ok(())
}
