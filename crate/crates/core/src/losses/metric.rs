use super::LossError;

/// Symmetric similarity metric over domain points with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    n: usize,
    entries: Vec<f64>,
}

impl Metric {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, LossError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LossError::InvalidMetric(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(LossError::InvalidMetric(format!("d({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = entries[i * n + j];
                if !(0.0..=1.0).contains(&d) {
                    return Err(LossError::InvalidMetric(format!("d({i},{j}) = {d} outside [0, 1]")));
                }
                if d != entries[j * n + i] {
                    return Err(LossError::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Binary metric where the listed pairs are at distance 0 and all other
    /// distinct pairs at distance 1.
    pub fn from_identical_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self, LossError> {
        let mut rows = vec![vec![1.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(LossError::InvalidMetric(format!("pair ({a},{b}) out of range")));
            }
            rows[a][b] = 0.0;
            rows[b][a] = 0.0;
        }
        Self::new(rows)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shape_symmetry_and_diagonal() {
        assert!(Metric::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).is_ok());
        assert!(Metric::new(vec![vec![0.0, 0.5], vec![0.4, 0.0]]).is_err());
        assert!(Metric::new(vec![vec![0.1, 0.5], vec![0.5, 0.0]]).is_err());
        assert!(Metric::new(vec![vec![0.0, 1.5], vec![1.5, 0.0]]).is_err());
        assert!(Metric::new(vec![vec![0.0], vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn identical_pairs() {
        let m = Metric::from_identical_pairs(3, &[(0, 2)]).unwrap();
        assert_eq!(m.distance(0, 2), 0.0);
        assert_eq!(m.distance(2, 0), 0.0);
        assert_eq!(m.distance(1, 2), 1.0);
        assert_eq!(m.distance(0, 1), 1.0);
    }
}
