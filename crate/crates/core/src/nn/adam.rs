use std::path::Path;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;

pub const DEFAULT_LR: f64 = 0.005;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Bias-corrected Adam with one moment pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<_> = params.iter().map(|(_, p)| Array2::zeros(p.dim())).collect();
        AdamState {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[k]` belongs to parameter `k`; `None` is a
    /// zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Array2<f64>>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} parameters, {} gradients, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (id, g) in params.ids().zip(grads) {
            if let Some(g) = g {
                if g.dim() != params.get(id).dim() {
                    return Err(Error::shape(
                        "adam_step",
                        format!(
                            "gradient {:?} for `{}` {:?}",
                            g.dim(),
                            params.name(id),
                            params.get(id).dim()
                        ),
                    ));
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.lr);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, id) in params.ids().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            match &grads[k] {
                Some(g) => Zip::from(&mut *m).and(&mut *v).and(g).for_each(|m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                }),
                None => Zip::from(&mut *m).and(&mut *v).for_each(|m, v| {
                    *m *= b1;
                    *v *= b2;
                }),
            }
            Zip::from(params.get_mut(id))
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / c1;
                    let v_hat = v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }

    /// Moments as a store (`m.<name>`, `v.<name>`, plus `step`) so they can
    /// share the checkpoint format.
    pub fn to_store(&self, params: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        out.add("step", Array2::from_elem((1, 1), self.step as f64));
        out.add("lr", Array2::from_elem((1, 1), self.lr));
        for (k, (name, _)) in params.iter().enumerate() {
            out.add(format!("m.{name}"), self.m[k].clone());
            out.add(format!("v.{name}"), self.v[k].clone());
        }
        out
    }

    pub fn from_store(store: &ParamStore, params: &ParamStore, origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            path: origin.to_path_buf(),
            msg,
        };
        let scalar = |name: &str| {
            store
                .find(name)
                .map(|id| store.get(id)[[0, 0]])
                .ok_or_else(|| bad(format!("missing `{name}`")))
        };
        let mut state = AdamState::new(params, scalar("lr")?);
        state.step = scalar("step")? as u64;
        for (k, (name, p)) in params.iter().enumerate() {
            for (prefix, slot) in [("m", &mut state.m[k]), ("v", &mut state.v[k])] {
                let key = format!("{prefix}.{name}");
                let id = store.find(&key).ok_or_else(|| bad(format!("missing `{key}`")))?;
                if store.get(id).dim() != p.dim() {
                    return Err(bad(format!("`{key}` has the wrong shape")));
                }
                *slot = store.get(id).clone();
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store() -> ParamStore {
        let mut p = ParamStore::new();
        p.add("w", array![[1.0, -2.0], [0.5, 3.0]]);
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store();
        let before = p.clone();
        let mut adam = AdamState::new(&p, DEFAULT_LR);
        adam.step(&mut p, &[Some(Array2::zeros((2, 2)))]).unwrap();
        adam.step(&mut p, &[None]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m̂ = g and v̂ = g² after bias correction, so the step is
        // lr · g / (|g| + ε).
        let mut p = store();
        let before = p.clone();
        let g = array![[0.3, -4.0], [1e-3, -0.7]];
        let mut adam = AdamState::new(&p, 0.005);
        adam.step(&mut p, &[Some(g.clone())]).unwrap();
        let id = p.find("w").unwrap();
        for ((after, before), g) in p.get(id).iter().zip(before.get(id)).zip(&g) {
            let expected = -0.005 * g / (g.abs() + DEFAULT_EPSILON);
            assert!((after - before - expected).abs() < 1e-15);
            assert!((after - before + 0.005 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = store();
        let mut adam = AdamState::new(&p, DEFAULT_LR);
        assert!(adam.step(&mut p, &[Some(Array2::zeros((1, 2)))]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn state_round_trip() {
        let mut p = store();
        let mut adam = AdamState::new(&p, 0.01);
        adam.step(&mut p, &[Some(array![[1.0, 2.0], [3.0, 4.0]])]).unwrap();
        let s = adam.to_store(&p);
        let back = AdamState::from_store(&s, &p, Path::new("o")).unwrap();
        assert_eq!(back, adam);
    }
}
