use std::collections::BTreeMap;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Named learnable tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    step: u64,
}

impl<T: Scalar> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::State(format!("duplicate parameter name {name:?}")));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.params.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn increment_step(&mut self) {
        self.step += 1;
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Sets every gradient slot to zeros.
    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn clear_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::clear_grad);
    }

    /// Parameters whose names start with `prefix`, with the prefix stripped.
    pub fn with_prefix_stripped(&self, prefix: &str) -> ParameterStore<T> {
        let params = self
            .params
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.detached())))
            .collect();
        ParameterStore { params, step: 0 }
    }

    /// Copies every entry into `out` under `prefix + name`.
    pub fn merge_prefixed(&self, prefix: &str, out: &mut ParameterStore<T>) -> Result<()> {
        for (k, v) in &self.params {
            out.insert(format!("{prefix}{k}"), v.detached())?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
            step: self.step,
        }
    }

    /// FNV-1a over names, shapes and value bits; used to assert that a
    /// store was left untouched.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (k, v) in &self.params {
            eat(k.as_bytes());
            for d in v.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for x in v.data() {
                eat(&x.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_sorted() {
        let mut s = ParameterStore::<f32>::new();
        s.insert("b", Tensor::zeros(&[1])).unwrap();
        s.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(s.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn prefix_round_trip() {
        let mut s = ParameterStore::<f32>::new();
        s.insert("w", Tensor::full(&[2], 1.5)).unwrap();
        let mut out = ParameterStore::new();
        s.merge_prefixed("student/", &mut out).unwrap();
        assert!(out.contains("student/w"));
        assert_eq!(out.with_prefix_stripped("student/").get("w").unwrap().data(), &[1.5, 1.5]);
    }
}
