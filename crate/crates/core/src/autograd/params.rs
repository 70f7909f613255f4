use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a [`Variable`] inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a variable is for. Drives parameter accounting and optimizer eligibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
    /// Number of running-statistic updates a batch-norm layer has seen. Bookkeeping only.
    UpdateCount,
}

impl Role {
    /// Learned by gradient descent (as opposed to state updated in the forward pass).
    pub fn is_learnable(self) -> bool {
        matches!(
            self,
            Role::Weight | Role::Bias | Role::BnScale | Role::BnShift
        )
    }

    /// Counted in parameter totals.
    pub fn is_counted(self) -> bool {
        !matches!(self, Role::UpdateCount)
    }
}

/// A named tensor with an accumulated gradient.
#[derive(Clone, Debug)]
pub struct Variable<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
    pub role: Role,
}

impl<T: Real> Variable<T> {
    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn grad_is_zero(&self) -> bool {
        self.grad.data().iter().all(|g| *g == T::zero())
    }
}

/// Owns every variable of a model, addressable by [`ParamId`] or by name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Real> {
    vars: Vec<Variable<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            vars: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a variable. Learnable roles start trainable; state roles never are.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, role: Role) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate variable name `{name}`")));
        }
        let id = ParamId(self.vars.len());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable {
            name,
            grad: Tensor::zeros(value.shape()),
            value,
            trainable: role.is_learnable(),
            role,
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Variable<T> {
        &self.vars[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Variable<T> {
        &mut self.vars[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.vars[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Variable<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Variable<T>)> {
        self.vars.iter().enumerate().map(|(i, v)| (ParamId(i), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Variable<T>> {
        self.vars.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for v in &mut self.vars {
            v.grad.fill(T::zero());
        }
    }

    /// Sets the trainable flag on every learnable variable whose name starts with `prefix`.
    /// Returns how many variables were touched.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut touched = 0;
        for v in &mut self.vars {
            if v.role.is_learnable() && v.name.starts_with(prefix) {
                v.trainable = trainable;
                touched += 1;
            }
        }
        touched
    }

    /// Sets the trainable flag on every learnable variable.
    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.set_trainable_prefix("", trainable);
    }

    pub fn trainable_count(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.trainable)
            .map(Variable::numel)
            .sum()
    }

    /// Names of variables holding any nonzero gradient entry.
    pub fn nonzero_grad_names(&self) -> Vec<String> {
        self.vars
            .iter()
            .filter(|v| !v.grad_is_zero())
            .map(|v| v.name.clone())
            .collect()
    }

    /// Copy of the store with every tensor converted to another element type.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            vars: self
                .vars
                .iter()
                .map(|v| Variable {
                    name: v.name.clone(),
                    value: v.value.cast(),
                    grad: v.grad.cast(),
                    trainable: v.trainable,
                    role: v.role,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor<T>) -> Result<()> {
        let v = &mut self.vars[id.0];
        v.grad.add_assign(grad).map_err(|_| {
            Error::Shape(format!(
                "gradient {} does not fit variable `{}` {}",
                grad.shape(),
                v.name,
                v.value.shape()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor::zeros(Shape::scalar()), Role::Weight).unwrap();
        assert!(s.add("a", Tensor::zeros(Shape::scalar()), Role::Bias).is_err());
    }

    #[test]
    fn state_roles_are_never_trainable() {
        let mut s = ParamStore::<f32>::new();
        let w = s.add("l.w", Tensor::zeros(Shape::scalar()), Role::Weight).unwrap();
        let m = s.add("l.mean", Tensor::zeros(Shape::scalar()), Role::RunningMean).unwrap();
        assert!(s.get(w).trainable);
        assert!(!s.get(m).trainable);
        s.set_all_trainable(true);
        assert!(!s.get(m).trainable);
        assert_eq!(s.set_trainable_prefix("l.", false), 1);
        assert!(!s.get(w).trainable);
    }

    #[test]
    fn zero_grad_clears_everything() {
        let mut s = ParamStore::<f64>::new();
        let w = s.add("w", Tensor::zeros(Shape::vector(1, 3)), Role::Weight).unwrap();
        s.accumulate_grad(w, &Tensor::full(Shape::vector(1, 3), 2.0)).unwrap();
        assert!(!s.get(w).grad_is_zero());
        s.zero_grad();
        assert!(s.get(w).grad.data().iter().all(|g| *g == 0.0));
    }
}
