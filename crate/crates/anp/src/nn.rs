//! Named parameter storage and MLP building blocks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Named map of all trainable tensors. `BTreeMap` keeps iteration order
/// deterministic, which the optimizer and checkpoint format rely on.
#[derive(Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        let prev = self.map.insert(name.clone(), t);
        assert!(prev.is_none(), "duplicate parameter `{name}`");
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn num_values(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Register an MLP: weight layers `widths[0] -> widths[1] -> ...`,
    /// Glorot-uniform weights, zero biases.
    pub fn add_mlp(&mut self, prefix: &str, widths: &[usize], rng: &mut Stream) {
        assert!(widths.len() >= 2, "add_mlp: need at least one layer");
        for (i, w) in widths.windows(2).enumerate() {
            self.insert(format!("{prefix}.l{i}.w"), rng.glorot(w[0], w[1]));
            self.insert(format!("{prefix}.l{i}.b"), Tensor::zeros(1, w[1]));
        }
    }
}

/// Parameters bound onto a graph for one forward/backward pass.
pub struct BoundParams {
    map: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Bind every tensor in `store` as a graph input. `trainable` decides
    /// whether the bindings receive adjoints.
    pub fn bind(graph: &Graph, store: &ParamStore, trainable: bool) -> Self {
        let map = store
            .iter()
            .map(|(name, t)| {
                let var = if trainable {
                    graph.leaf(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (name.clone(), var)
            })
            .collect();
        BoundParams { map }
    }

    pub fn get(&self, name: &str) -> &Var {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.map.iter()
    }

    /// Forward through the MLP registered as `prefix` with `layers` weight
    /// layers: relu between layers, affine final layer, rows independent.
    pub fn mlp(&self, prefix: &str, input: &Var, layers: usize) -> Var {
        assert!(layers >= 1, "mlp: need at least one layer");
        let mut x = input.clone();
        for i in 0..layers {
            let w = self.get(&format!("{prefix}.l{i}.w"));
            let b = self.get(&format!("{prefix}.l{i}.b"));
            x = x.matmul(w).add_row(b);
            if i + 1 < layers {
                x = x.relu();
            }
        }
        x
    }
}

/// Plain-tensor MLP forward, shared by inference helpers and test oracles.
pub fn mlp_forward_plain(store: &ParamStore, prefix: &str, input: &Tensor, layers: usize) -> Tensor {
    let mut x = input.clone();
    for i in 0..layers {
        let w = store.get(&format!("{prefix}.l{i}.w")).unwrap();
        let b = store.get(&format!("{prefix}.l{i}.b")).unwrap();
        x = x.matmul(w).add_row(b);
        if i + 1 < layers {
            x = x.relu();
        }
    }
    x
}
