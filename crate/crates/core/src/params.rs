//! Named parameter tensors and their gradient buffers.

use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// Flat, ordered collection of model parameters. Order is fixed at
/// construction time and defines the checkpoint manifest order.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.into(),
            value,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(
            self.params[id.0].value.shape(),
            value.shape(),
            "parameter {} shape change",
            self.params[id.0].name
        );
        self.params[id.0].value = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn by_name(&self, name: &str) -> Option<(ParamId, &Parameter)> {
        self.params
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
            .map(|(i, p)| (ParamId(i), p))
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros(set: &ParamSet) -> Self {
        Gradients {
            slots: vec![None; set.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor) {
        match &mut self.slots[id.0] {
            Some(existing) => {
                assert_eq!(existing.shape(), grad.shape(), "gradient shape mismatch");
                let dst = existing.data_mut();
                for (d, s) in dst.iter_mut().zip(grad.data().iter()) {
                    *d += s;
                }
            }
            slot @ None => *slot = Some(grad.clone()),
        }
    }

    /// Adds another gradient set (used for batch accumulation).
    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for slot in self.slots.iter_mut().flatten() {
            for v in slot.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots[id.0].as_ref()
    }
}
