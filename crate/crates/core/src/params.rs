//! Named parameter storage and per-graph bindings.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::RefCell;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ops::BatchStats;
use crate::{Graph, Scalar, Tensor, Var};

/// Whether an entry is optimized or only carried along (running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub kind: Kind,
    pub value: Tensor<T>,
}

/// Ordered collection of named tensors. Insertion order is the canonical
/// order used by checkpoints and optimizers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, kind: Kind, value: Tensor<T>) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            kind,
            value,
        });
    }

    pub fn param(&mut self, name: &str, value: Tensor<T>) {
        self.insert(name, Kind::Param, value);
    }

    pub fn buffer(&mut self, name: &str, value: Tensor<T>) {
        self.insert(name, Kind::Buffer, value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].value)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].value),
            None => Err(Error::MissingParam(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Entry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Trainable entries, in canonical order.
    pub fn trainable(&self) -> impl Iterator<Item = &Entry<T>> {
        self.entries.iter().filter(|e| e.kind == Kind::Param)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|e| e.value.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    kind: e.kind,
                    value: e.value.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Registers every trainable entry as a gradient-carrying leaf.
    pub fn bind<'a>(&'a self, g: &mut Graph<T>) -> Bindings<'a, T> {
        let vars = self
            .trainable()
            .map(|e| (e.name.clone(), g.param(e.value.clone())))
            .collect();
        Bindings {
            vars,
            buffers: self,
            stats: RefCell::new(Vec::new()),
        }
    }

    /// Binds caller-supplied leaves (one per trainable entry, canonical order).
    pub fn bind_vars<'a>(&'a self, vars: &[Var]) -> Result<Bindings<'a, T>> {
        let names: Vec<&Entry<T>> = self.trainable().collect();
        if names.len() != vars.len() {
            return Err(Error::Shape {
                op: "bind_vars",
                dim: "parameter count",
                expected: names.len(),
                got: vars.len(),
            });
        }
        Ok(Bindings {
            vars: names
                .iter()
                .zip(vars)
                .map(|(e, &v)| (e.name.clone(), v))
                .collect(),
            buffers: self,
            stats: RefCell::new(Vec::new()),
        })
    }

    /// Folds recorded batch statistics into the named running buffers.
    pub fn apply_batch_stats(
        &mut self,
        updates: &[(String, BatchStats<T>)],
        momentum: T,
    ) -> Result<()> {
        for (prefix, stats) in updates {
            let mean_name = alloc::format!("{prefix}.running_mean");
            let var_name = alloc::format!("{prefix}.running_var");
            let mut mean = self.get(&mean_name)?.clone();
            let mut var = self.get(&var_name)?.clone();
            stats.fold_into(mean.data_mut(), var.data_mut(), momentum);
            *self.get_mut(&mean_name)? = mean;
            *self.get_mut(&var_name)? = var;
        }
        Ok(())
    }
}

/// Graph leaves of a [`ParamStore`] for one forward pass, plus read access to
/// its buffers and a log of batch statistics observed during the pass.
pub struct Bindings<'a, T> {
    vars: BTreeMap<String, Var>,
    buffers: &'a ParamStore<T>,
    stats: RefCell<Vec<(String, BatchStats<T>)>>,
}

impl<'a, T: Scalar> Bindings<'a, T> {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn buffer(&self, name: &str) -> Result<&'a Tensor<T>> {
        self.buffers.get(name)
    }

    pub fn record_stats(&self, prefix: &str, stats: BatchStats<T>) {
        self.stats.borrow_mut().push((prefix.to_string(), stats));
    }

    pub fn take_stats(&self) -> Vec<(String, BatchStats<T>)> {
        core::mem::take(&mut *self.stats.borrow_mut())
    }

    /// Gradients of every trainable entry, canonical order.
    pub fn grads(&self, g: &Graph<T>) -> Vec<Tensor<T>> {
        self.buffers
            .trainable()
            .map(|e| g.grad_or_zeros(self.vars[&e.name]))
            .collect()
    }
}

/// Normal(0, std²) truncated to ±2 std by resampling.
pub fn trunc_normal<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    std: f64,
    rng: &mut R,
) -> Tensor<T> {
    Tensor::from_fn(shape, |_| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break T::of(z * std);
        }
    })
}

/// Uniform in `[-bound, bound]`.
pub fn uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..=bound)))
}
