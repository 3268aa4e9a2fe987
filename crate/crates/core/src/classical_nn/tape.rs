//! Tensor-level reverse-mode differentiation.
//!
//! Each node records its value, its parents and a closure mapping the
//! output cotangent to one cotangent per parent. Nodes are append-only, so
//! parents always precede children and one reverse sweep visits everything
//! in topological order.

use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub type ParamId = usize;

/// `(output cotangent, parent values, output value) -> parent cotangents`
pub type BackwardFn =
    Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Result<Vec<Tensor>> + Send + Sync>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
}

pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape for forward-only evaluation. Ops may skip work that only
    /// backward needs (e.g. QNN Jacobians); calling backward through such an
    /// op fails.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            param: Some(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an op. Every parent must already be on the tape.
    pub fn push_op(&mut self, value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Result<Var> {
        let next = self.nodes.len();
        if let Some(p) = parents.iter().find(|p| p.0 >= next) {
            return Err(Error::Autodiff(format!(
                "node {next} would depend on node {}, which is not earlier on the tape (cycle)",
                p.0
            )));
        }
        debug_assert!(value.all_finite(), "non-finite value produced on tape");
        self.nodes.push(Node {
            value,
            parents,
            backward: Some(backward),
            param: None,
        });
        Ok(Var(next))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(Error::Autodiff(format!("loss node {} not on tape", loss.0)));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, has shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let (Some(g), Some(bw)) = (grads[i].as_ref(), node.backward.as_ref()) else {
                continue;
            };
            let parent_values: Vec<&Tensor> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let parent_grads = bw(g, &parent_values, &node.value)?;
            if parent_grads.len() != node.parents.len() {
                return Err(Error::Autodiff(format!(
                    "node {i} returned {} cotangents for {} parents",
                    parent_grads.len(),
                    node.parents.len()
                )));
            }
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                if pg.shape() != self.nodes[p.0].value.shape() {
                    return Err(Error::Autodiff(format!(
                        "cotangent shape {:?} does not match parent shape {:?}",
                        pg.shape(),
                        self.nodes[p.0].value.shape()
                    )));
                }
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        let mut params = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(id) = node.param {
                let g = grads[i]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                match params.get_mut(&id) {
                    None => {
                        params.insert(id, g);
                    }
                    Some(acc) => Tensor::add_assign(acc, &g)?,
                }
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient with respect to any node, if the loss depends on it.
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a bound parameter (zeros if the loss does not depend on it).
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_nn::ops::{linear, weighted_sum};

    #[test]
    fn foreign_var_is_a_cycle_error() {
        let mut big = Tape::new();
        for _ in 0..5 {
            big.constant(Tensor::scalar(1.0));
        }
        let late = big.constant(Tensor::scalar(2.0));
        let mut small = Tape::new();
        small.constant(Tensor::scalar(0.0));
        let err = small
            .push_op(Tensor::scalar(0.0), vec![late], Box::new(|g, _, _| Ok(vec![g.clone()])))
            .err();
        assert!(matches!(err, Some(Error::Autodiff(m)) if m.contains("cycle")));
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut t = Tape::new();
        let x = t.param(0, Tensor::new(vec![2], vec![1.0, -3.0]).unwrap());
        let w = t.param(1, Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        let b = t.param(2, Tensor::zeros(&[1]));
        let x2 = {
            let v = t.value(x).clone().reshape(vec![1, 2]).unwrap();
            t.constant(v)
        };
        let y = linear(&mut t, x2, w, b).unwrap();
        let loss = weighted_sum(&mut t, y, Tensor::zeros(&[1, 1])).unwrap();
        let g = t.backward(loss).unwrap();
        for id in 0..3 {
            assert!(g.param(id).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(0, Tensor::zeros(&[3]));
        assert!(matches!(t.backward(x), Err(Error::Autodiff(_))));
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut t = Tape::new();
        let x = t.param(0, Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let a = weighted_sum(&mut t, x, Tensor::new(vec![2], vec![1.0, 0.0]).unwrap()).unwrap();
        let b = weighted_sum(&mut t, x, Tensor::new(vec![2], vec![2.0, 3.0]).unwrap()).unwrap();
        let s = {
            let v = Tensor::new(
                vec![2],
                vec![t.value(a).data()[0], t.value(b).data()[0]],
            )
            .unwrap();
            t.push_op(
                Tensor::scalar(v.data().iter().sum()),
                vec![a, b],
                Box::new(|g, _, _| Ok(vec![g.clone(), g.clone()])),
            )
            .unwrap()
        };
        let g = t.backward(s).unwrap();
        assert_eq!(g.param(0).unwrap().data(), &[3.0, 3.0]);
    }
}
