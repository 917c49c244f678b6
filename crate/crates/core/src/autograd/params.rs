use std::collections::BTreeMap;

use super::graph::{Grads, Graph, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter arrays of one network, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total scalar parameter count.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect()
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }
}

/// Attaches a [`ParamStore`] to a [`Graph`] for one evaluation. Each
/// parameter becomes a leaf the first time it is used; repeated use within
/// the same graph shares the leaf so gradients accumulate.
pub struct Binding<'s> {
    store: &'s ParamStore,
    trainable: bool,
    vars: Vec<Option<Var>>,
}

impl<'s> Binding<'s> {
    pub fn trainable(store: &'s ParamStore) -> Self {
        Self::new(store, true)
    }

    /// Parameters enter the graph as constants.
    pub fn frozen(store: &'s ParamStore) -> Self {
        Self::new(store, false)
    }

    fn new(store: &'s ParamStore, trainable: bool) -> Self {
        Self {
            store,
            trainable,
            vars: vec![None; store.len()],
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn var(&mut self, g: &mut Graph, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = g.leaf(self.store.get(id).clone(), self.trainable);
        self.vars[id.0] = Some(v);
        v
    }

    /// Per-parameter gradients aligned with the store; unused parameters
    /// get zeros.
    pub fn grads(&self, grads: &Grads) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(self.store.values())
            .map(|(v, p)| {
                v.and_then(|v| grads.get(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(p.shape()))
            })
            .collect()
    }

    /// Largest absolute gradient entry over every parameter of the store.
    pub fn max_abs_grad(&self, grads: &Grads) -> f32 {
        self.vars
            .iter()
            .filter_map(|v| v.and_then(|v| grads.get(v)))
            .fold(0.0f32, |m, t| m.max(t.max_abs()))
    }
}
