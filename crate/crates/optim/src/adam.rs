//! Adam over gradient feedback for number-valued parameters.

use std::collections::BTreeMap;

use thiserror::Error;

use opto_core::{Graph, NodeId, Value};

/// Per-parameter first/second moment state with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: BTreeMap<String, f64>,
    v: BTreeMap<String, f64>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl AdamState {
    pub fn with_lr(lr: f64) -> Self {
        AdamState {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdamError {
    #[error("parameter '{0}' does not hold a number")]
    NonNumericParameter(String),
    #[error("gradient for '{0}' is not finite")]
    NonFiniteGradient(String),
    #[error("no trainable parameter named '{0}'")]
    UnknownParameter(String),
}

/// One standard bias-corrected Adam update in the descent direction of the
/// provided gradients. The step counter increments once per call.
pub fn adam_step(
    graph: &mut Graph,
    params: &[NodeId],
    grads: &BTreeMap<String, f64>,
    state: &mut AdamState,
) -> Result<(), AdamError> {
    state.t += 1;
    let t = state.t as i32;
    for (name, &grad) in grads {
        if !grad.is_finite() {
            return Err(AdamError::NonFiniteGradient(name.clone()));
        }
        let id = params
            .iter()
            .copied()
            .find(|&id| {
                graph
                    .node(id)
                    .map(|n| n.name == *name && n.trainable)
                    .unwrap_or(false)
            })
            .ok_or_else(|| AdamError::UnknownParameter(name.clone()))?;
        let current = match graph.node(id).expect("param exists").value {
            Value::Number(x) => x,
            _ => return Err(AdamError::NonNumericParameter(name.clone())),
        };
        let m = state.m.entry(name.clone()).or_insert(0.0);
        *m = state.beta1 * *m + (1.0 - state.beta1) * grad;
        let m_hat = *m / (1.0 - state.beta1.powi(t));
        let v = state.v.entry(name.clone()).or_insert(0.0);
        *v = state.beta2 * *v + (1.0 - state.beta2) * grad * grad;
        let v_hat = *v / (1.0 - state.beta2.powi(t));
        let next = current - state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        graph
            .set_value(id, Value::Number(next))
            .map_err(|_| AdamError::NonNumericParameter(name.clone()))?;
    }
    Ok(())
}
