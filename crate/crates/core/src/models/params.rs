use std::ops::Index;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Named tensors in a fixed insertion order.
///
/// Used both for trainable parameters and for anything shaped like them
/// (gradients, moments, perturbations, Fisher diagonals).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    tensors: IndexMap<String, Tensor>,
}

/// Gradient of a scalar loss, keyed like the parameters it differentiates.
pub type GradMap = ParameterSet;

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`. Replacing keeps the original position.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Deep copy.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.map(&f))).collect(),
        }
    }

    /// All values concatenated in iteration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Squared L2 norm over the concatenation of every tensor.
    pub fn global_norm_sq(&self) -> f64 {
        self.tensors.values().map(Tensor::norm_sq).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.global_norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Same names in the same order with the same shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape())
    }

    pub fn check_layout(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_layout(other) {
            return Ok(());
        }
        for (name, t) in self.iter() {
            match other.get(name) {
                None => return Err(Error::MissingGradient(format!("{name} ({what})"))),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Shape(format!(
                        "{what}: `{name}` has shape {:?}, expected {:?}",
                        o.shape(),
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        Err(Error::Shape(format!("{what}: parameter names differ")))
    }

    /// `self + alpha * other`, elementwise.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_layout(other, "elementwise")?;
        let tensors = self
            .tensors
            .iter()
            .zip(other.tensors.values())
            .map(|((k, a), b)| {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                (k.clone(), Tensor::new(a.shape().to_vec(), data).expect("same layout"))
            })
            .collect();
        Ok(Self { tensors })
    }

    /// Sum of elementwise products over every tensor.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other, "dot")?;
        Ok(self
            .tensors
            .values()
            .zip(other.tensors.values())
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    /// True when every value is bit-for-bit equal (distinguishes `-0.0`).
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.same_layout(other)
            && self
                .tensors
                .values()
                .zip(other.tensors.values())
                .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let d = self.zip_with(other, |a, b| (a - b).abs())?;
        Ok(d.flatten().into_iter().fold(0.0, f64::max))
    }
}

impl Index<&str> for ParameterSet {
    type Output = Tensor;

    fn index(&self, name: &str) -> &Tensor {
        self.get(name).unwrap_or_else(|| panic!("no tensor named `{name}`"))
    }
}

impl FromIterator<(String, Tensor)> for ParameterSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_insertion_order() {
        let mut p = ParameterSet::new();
        p.insert("z", Tensor::scalar(1.0));
        p.insert("a", Tensor::scalar(2.0));
        p.insert("m", Tensor::scalar(3.0));
        assert_eq!(p.names().collect::<Vec<_>>(), ["z", "a", "m"]);
        assert_eq!(p.flatten(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn snapshot_is_deep() {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let snap = p.snapshot();
        p.get_mut("w").unwrap().data_mut()[0] = 9.0;
        assert_eq!(snap["w"].data(), &[1.0, 2.0]);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let mut a = ParameterSet::new();
        a.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let mut b = ParameterSet::new();
        b.insert("v", Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(a.add_scaled(1.0, &b), Err(Error::MissingGradient(_))));
        let mut c = ParameterSet::new();
        c.insert("w", Tensor::vector(vec![1.0]));
        assert!(matches!(a.dot(&c), Err(Error::Shape(_))));
    }

    #[test]
    fn bitwise_eq_sees_signed_zero() {
        let mut a = ParameterSet::new();
        a.insert("w", Tensor::scalar(0.0));
        let mut b = ParameterSet::new();
        b.insert("w", Tensor::scalar(-0.0));
        assert_eq!(a, b);
        assert!(!a.bitwise_eq(&b));
    }
}
