use std::collections::HashSet;

use super::ModelError;

/// An ordered, finite set of opaque points.
///
/// Indices `0..len()` are stable; names are unique whitespace-free tokens so
/// they survive the instance text format unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    names: Vec<String>,
    payloads: Option<Vec<Vec<f64>>>,
}

impl Domain {
    pub fn new(names: Vec<String>) -> Result<Self, ModelError> {
        if names.is_empty() {
            return Err(ModelError::EmptyDomain);
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidPointName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicatePoint(name.clone()));
            }
        }
        Ok(Self {
            names,
            payloads: None,
        })
    }

    /// Domain of `n` points named `x0 .. x{n-1}`.
    pub fn indexed(n: usize) -> Result<Self, ModelError> {
        Self::new((0..n).map(|i| format!("x{i}")).collect())
    }

    /// Attach a real-vector payload to every point.
    pub fn with_payloads(mut self, payloads: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if payloads.len() != self.names.len() {
            return Err(ModelError::LengthMismatch {
                what: "payloads",
                expected: self.names.len(),
                got: payloads.len(),
            });
        }
        self.payloads = Some(payloads);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn payloads(&self) -> Option<&[Vec<f64>]> {
        self.payloads.as_deref()
    }
}

/// A subset of domain points, stored as sorted unique indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Group {
    members: Vec<usize>,
}

impl Group {
    pub fn new(mut members: Vec<usize>, domain_size: usize) -> Result<Self, ModelError> {
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&i| i >= domain_size) {
            return Err(ModelError::PointOutOfRange {
                index: bad,
                size: domain_size,
            });
        }
        Ok(Self { members })
    }

    pub fn full(domain_size: usize) -> Self {
        Self {
            members: (0..domain_size).collect(),
        }
    }

    pub fn singleton(index: usize) -> Self {
        Self {
            members: vec![index],
        }
    }

    pub fn empty() -> Self {
        Self {
            members: Vec::new(),
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedGroup {
    pub name: String,
    pub group: Group,
}

/// Finite, named collection of (possibly intersecting) groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupCollection {
    groups: Vec<NamedGroup>,
}

impl GroupCollection {
    pub fn new(groups: Vec<NamedGroup>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for g in &groups {
            if !seen.insert(g.name.as_str()) {
                return Err(ModelError::DuplicateName(g.name.clone()));
            }
        }
        Ok(Self { groups })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NamedGroup> {
        self.groups.iter()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn get(&self, i: usize) -> &NamedGroup {
        &self.groups[i]
    }

    pub fn as_slice(&self) -> &[NamedGroup] {
        &self.groups
    }
}

impl<'a> IntoIterator for &'a GroupCollection {
    type Item = &'a NamedGroup;
    type IntoIter = std::slice::Iter<'a, NamedGroup>;

    fn into_iter(self) -> Self::IntoIter {
        self.groups.iter()
    }
}
