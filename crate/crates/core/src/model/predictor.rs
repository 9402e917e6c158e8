use std::collections::HashSet;

use super::ModelError;

/// A tabulated map from domain points to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    values: Vec<f64>,
}

impl Predictor {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::OutOfUnitInterval {
                    what: "prediction",
                    index,
                    value,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; n])
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise image under `f(x, value)`; clamps into `[0, 1]`.
    pub fn map_points<E>(&self, mut f: impl FnMut(usize, f64) -> Result<f64, E>) -> Result<Self, E> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i, v).map(|out| out.clamp(0.0, 1.0)))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self { values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPredictor {
    pub name: String,
    pub predictor: Predictor,
}

/// A finite, non-empty, named hypothesis class.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCollection {
    hypotheses: Vec<NamedPredictor>,
}

impl HypothesisCollection {
    pub fn new(hypotheses: Vec<NamedPredictor>) -> Result<Self, ModelError> {
        if hypotheses.is_empty() {
            return Err(ModelError::EmptyHypothesisCollection);
        }
        let mut seen = HashSet::new();
        for h in &hypotheses {
            if !seen.insert(h.name.as_str()) {
                return Err(ModelError::DuplicateName(h.name.clone()));
            }
        }
        Ok(Self { hypotheses })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NamedPredictor> {
        self.hypotheses.iter()
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn get(&self, i: usize) -> &NamedPredictor {
        &self.hypotheses[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&NamedPredictor> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    pub fn as_slice(&self) -> &[NamedPredictor] {
        &self.hypotheses
    }

    /// Append a hypothesis, keeping names unique.
    pub fn extended(&self, extra: NamedPredictor) -> Result<Self, ModelError> {
        let mut all = self.hypotheses.clone();
        all.push(extra);
        Self::new(all)
    }
}

impl<'a> IntoIterator for &'a HypothesisCollection {
    type Item = &'a NamedPredictor;
    type IntoIter = std::slice::Iter<'a, NamedPredictor>;

    fn into_iter(self) -> Self::IntoIter {
        self.hypotheses.iter()
    }
}
