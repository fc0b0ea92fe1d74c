use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Index;

use super::tape::{Gradients, Tape, Var};
use super::{Real, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
struct Param<T> {
    name: String,
    value: Tensor<T>,
    frozen_row: Option<usize>,
    state: Option<AdamState<T>>,
}

/// Named trainable tensors plus their optimizer state.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            frozen_row: None,
            state: None,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Marks one row (the padding embedding) as never updated.
    pub fn freeze_row(&mut self, id: ParamId, row: usize) {
        self.params[id.0].frozen_row = Some(row);
    }

    pub fn frozen_row(&self, id: ParamId) -> Option<usize> {
        self.params[id.0].frozen_row
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// Replaces a parameter value; the shape must be unchanged.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let cur = &self.params[id.0].value;
        if cur.shape() != value.shape() {
            return Err(Error::shape(
                "ParamStore::set",
                format!(
                    "`{}` is {:?}, got {:?}",
                    self.params[id.0].name,
                    cur.shape(),
                    value.shape()
                ),
            ));
        }
        self.params[id.0].value = value;
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub(crate) fn state_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &mut AdamState<T>, Option<usize>) {
        let p = &mut self.params[id.0];
        let (r, c) = p.value.shape();
        let state = p.state.get_or_insert_with(|| AdamState {
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
            steps: 0,
        });
        (&mut p.value, state, p.frozen_row)
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> Binding {
        Binding {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Binding {
        Binding {
            vars: self
                .params
                .iter()
                .map(|p| tape.constant(p.value.clone()))
                .collect(),
        }
    }
}

/// Tape handles of a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Per-parameter gradients (zeros where the loss does not depend on one).
    pub fn grads<T: Real>(&self, store: &ParamStore<T>, grads: &mut Gradients<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .zip(store.ids())
            .map(|(&v, id)| {
                grads.take(v).unwrap_or_else(|| {
                    let (r, c) = store.get(id).shape();
                    Tensor::zeros(r, c)
                })
            })
            .collect()
    }
}

impl Index<ParamId> for Binding {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}
