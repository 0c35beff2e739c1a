use crate::error::{CureError, Result};

/// RBF kernel `exp(-|a - b|^2 / sigma2)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma2: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CureError::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(CureError::Numeric(format!("kernel width {sigma2}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(CureError::Numeric("kernel argument".into()));
    }
    Ok((-squared_distance(a, b) / sigma2).exp())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense symmetric matrix of pairwise squared distances.
///
/// Kept separately from the Gram matrix so that a grid over `sigma2` only
/// pays for the exponentials.
#[derive(Debug, Clone)]
pub struct SquaredDistances {
    n: usize,
    values: Vec<f64>,
}

impl SquaredDistances {
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = squared_distance(&rows[i], &rows[j]);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        SquaredDistances { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Restriction to the rows/columns in `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> SquaredDistances {
        let m = idx.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in idx {
            let row = &self.values[i * self.n..(i + 1) * self.n];
            values.extend(idx.iter().map(|&j| row[j]));
        }
        SquaredDistances { n: m, values }
    }

    pub fn gram(&self, sigma2: f64) -> Gram {
        Gram {
            n: self.n,
            values: self.values.iter().map(|d| (-d / sigma2).exp()).collect(),
        }
    }
}

/// Precomputed kernel matrix.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    values: Vec<f64>,
}

impl Gram {
    pub fn rbf(rows: &[Vec<f64>], sigma2: f64) -> Self {
        SquaredDistances::new(rows).gram(sigma2)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}
