use std::collections::HashMap;

use crate::autodiff::{Real, Shape, Tape, TensorId};

/// Named parameter tensors in a stable registration order. The order is the
/// canonical layout for checkpoints and flat optimizer state.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    names: Vec<String>,
    shapes: Vec<Shape>,
    values: Vec<Vec<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), shapes: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, shape: Shape, data: Vec<T>) {
        let name = name.into();
        assert_eq!(shape.numel(), data.len(), "param {name}: shape/data mismatch");
        assert!(!self.index.contains_key(&name), "duplicate param {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.shapes.push(shape);
        self.values.push(data);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn total_elems(&self) -> usize {
        self.shapes.iter().map(|s| s.numel()).sum()
    }

    pub fn index_of(&self, name: &str) -> usize {
        *self.index.get(name).unwrap_or_else(|| panic!("unknown param {name}"))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn shape(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    pub fn value(&self, i: usize) -> &[T] {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Vec<T> {
        &mut self.values[i]
    }

    /// Concatenation of all tensors in registration order.
    pub fn flatten(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.total_elems());
        for v in &self.values {
            flat.extend_from_slice(v);
        }
        flat
    }

    pub fn unflatten(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.total_elems());
        let mut offset = 0;
        for v in &mut self.values {
            let len = v.len();
            v.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
    }

    /// Inserts every parameter as a trainable leaf; returned ids share this
    /// set's indexing.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let ids = self
            .shapes
            .iter()
            .zip(&self.values)
            .map(|(shape, v)| tape.leaf(*shape, v.clone()))
            .collect();
        BoundParams { ids }
    }

    /// Structural fingerprint input: names and shapes in order.
    pub fn layout(&self) -> Vec<(String, Shape)> {
        self.names.iter().cloned().zip(self.shapes.iter().copied()).collect()
    }
}

/// Tape handles for one forward pass, aligned with [`ParamSet`] order.
pub struct BoundParams {
    pub ids: Vec<TensorId>,
}

impl BoundParams {
    pub fn grads_flat<T: Real>(&self, tape: &Tape<T>) -> Vec<T> {
        let mut flat = Vec::new();
        for id in &self.ids {
            flat.extend(tape.grad(*id));
        }
        flat
    }
}
