use serde::{Deserialize, Serialize};

/// Per-coordinate polynomial degrees of one expansion term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `(sum a_i^q)^(1/q)`.
    pub fn q_norm(&self, q: f64) -> f64 {
        let s: f64 = self.0.iter().filter(|&&a| a > 0).map(|&a| (a as f64).powf(q)).sum();
        s.powf(1.0 / q)
    }

    /// Number of coordinates with a nonzero degree.
    pub fn interaction_order(&self) -> usize {
        self.0.iter().filter(|&&a| a > 0).count()
    }
}

/// Truncated set of multi-indices, zero index first, graded order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    pub indices: Vec<MultiIndex>,
    pub dim: usize,
    pub degree: usize,
    pub q: f64,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Drop terms whose degree in coordinate `i` exceeds `caps[i]`.
    pub fn capped(mut self, caps: &[usize]) -> Self {
        self.indices.retain(|a| a.0.iter().zip(caps).all(|(d, c)| (*d as usize) <= *c));
        self
    }
}

fn push_compositions(dim: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if current.len() == dim - 1 {
        current.push(remaining);
        out.push(MultiIndex(current.clone()));
        current.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        current.push(first);
        push_compositions(dim, remaining - first, current, out);
        current.pop();
    }
}

/// All multi-indices with q-norm at most `degree`.
///
/// Ordered by total degree, then by descending lexicographic order within a
/// degree, so `(1,0)` precedes `(0,1)`.
pub fn generate_index_set(dim: usize, degree: usize, q: f64) -> IndexSet {
    assert!(dim >= 1, "dimension must be positive");
    assert!(q > 0.0 && q <= 1.0, "q must lie in (0, 1]");
    let bound = degree as f64 * (1.0 + 1e-12);
    let mut indices = Vec::new();
    let mut scratch = Vec::with_capacity(dim);
    for total in 0..=degree as u32 {
        let mut layer = Vec::new();
        push_compositions(dim, total, &mut scratch, &mut layer);
        indices.extend(layer.into_iter().filter(|a| q >= 1.0 || a.q_norm(q) <= bound));
    }
    IndexSet { indices, dim, degree, q }
}
