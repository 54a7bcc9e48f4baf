use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Named tensors in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("param_store", format!("duplicate entry `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    /// Lookup that reports a missing name as an error.
    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::invalid("param_store", format!("missing entry `{name}`")))
    }

    /// Two distinct entries borrowed mutably at once.
    pub fn pair_mut(&mut self, a: &str, b: &str) -> Result<(&mut Tensor<T>, &mut Tensor<T>)> {
        let missing = |n: &str| Error::invalid("param_store", format!("missing entry `{n}`"));
        let ia = *self.index.get(a).ok_or_else(|| missing(a))?;
        let ib = *self.index.get(b).ok_or_else(|| missing(b))?;
        if ia == ib {
            return Err(Error::invalid("param_store", format!("`{a}` borrowed twice")));
        }
        if ia < ib {
            let (lo, hi) = self.entries.split_at_mut(ib);
            Ok((&mut lo[ia].1, &mut hi[0].1))
        } else {
            let (lo, hi) = self.entries.split_at_mut(ia);
            Ok((&mut hi[0].1, &mut lo[ib].1))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over all entries.
    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// He-normal tensor with standard deviation `sqrt(2 / fan_in)`.
    pub(crate) fn insert_he<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid("init", e.to_string()))?;
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }
}

/// Tape handles of a [`ParamStore`]'s entries.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: HashMap<String, Var>,
}

impl Bindings {
    /// Put every parameter on `tape`, as trainable leaves or as constants.
    pub fn bind<T: Scalar>(tape: &mut Tape<T>, params: &ParamStore<T>, trainable: bool) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), tape.leaf(t.clone(), trainable)))
            .collect();
        Bindings { vars }
    }

    /// Pair names with variables already on a tape.
    pub fn from_vars<'a>(pairs: impl IntoIterator<Item = (&'a str, Var)>) -> Self {
        Bindings {
            vars: pairs.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid("bindings", format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, &v)| (n.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_rejects_duplicates_and_keeps_order() {
        let mut s = ParamStore::<f32>::new();
        s.insert("b", Tensor::zeros(&[2])).unwrap();
        s.insert("a", Tensor::zeros(&[3])).unwrap();
        assert!(s.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(s.num_elements(), 5);
    }

    #[test]
    fn pair_mut_gives_both_entries() {
        let mut s = ParamStore::<f32>::new();
        s.insert("x", Tensor::zeros(&[1])).unwrap();
        s.insert("y", Tensor::ones(&[1])).unwrap();
        let (y, x) = s.pair_mut("y", "x").unwrap();
        x.data_mut()[0] = 5.0;
        y.data_mut()[0] = 7.0;
        assert_eq!(s.get("x").unwrap().data(), &[5.0]);
        assert_eq!(s.get("y").unwrap().data(), &[7.0]);
        assert!(s.pair_mut("x", "x").is_err());
        assert!(s.pair_mut("x", "z").is_err());
    }
}
