use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its id.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<usize> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Tensor {
                name,
                reason: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        if self.index.contains_key(&name) {
            return Err(Error::Tensor {
                name,
                reason: "duplicate tensor name".into(),
            });
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.tensors.push(Tensor { name, shape, data });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.tensors[i])
    }

    #[inline]
    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    #[inline]
    pub fn data(&self, id: usize) -> &[f64] {
        &self.tensors[id].data
    }

    #[inline]
    pub fn data_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.tensors[id].data
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Round every value through `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Gradient buffers aligned with a [`WeightStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(ws: &WeightStore) -> Self {
        Self {
            data: ws.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add(&mut self, id: usize, g: &[f64]) {
        for (a, b) in self.data[id].iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn get(&self, id: usize) -> &[f64] {
        &self.data[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.data.iter()
    }

    pub fn global_norm(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.data {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn clear(&mut self) {
        for v in &mut self.data {
            v.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}
