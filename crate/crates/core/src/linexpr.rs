//! Sparse affine expressions over the QP decision vector.

use serde::{Deserialize, Serialize};

/// `constant + Σ coeff·z[index]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(index, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, index: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        for &(i, c) in &other.terms {
            self.add_term(i, scale * c);
        }
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_scaled(self, scale);
        out
    }

    /// Merge duplicate indices and drop exact zeros; terms end up sorted.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * z[i]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_merges_and_drops_cancelled_terms() {
        let mut e = LinExpr::var(3, 1.0);
        e.add_term(1, 2.0);
        e.add_term(3, -1.0);
        e.add_term(1, 0.5);
        let e = e.compact();
        assert_eq!(e.terms, vec![(1, 2.5)]);
        assert!(!e.is_constant());
    }

    #[test]
    fn eval_includes_constant() {
        let mut e = LinExpr::constant(4.0);
        e.add_term(0, 2.0);
        assert_eq!(e.eval(&[3.0]), 10.0);
    }
}
