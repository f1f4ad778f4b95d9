//! The initial search box, its affine map to the unit cube, and Latin-hypercube designs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OptError;
use crate::battery::Params;

/// Axis-aligned search box over the raw parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Zero lower bounds are lifted to this fraction of the upper bound so every
/// parameter in the box is strictly positive.
pub const POSITIVE_LIFT: f64 = 1e-3;

impl SearchBox {
    pub fn new(names: Vec<String>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, OptError> {
        if names.len() != lo.len() || lo.len() != hi.len() || lo.is_empty() {
            return Err(OptError::InvalidBox(
                "names, lower and upper bounds must have the same non-zero length".into(),
            ));
        }
        for ((n, l), h) in names.iter().zip(&lo).zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(OptError::InvalidBox(format!(
                    "{n}: need finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(SearchBox { names, lo, hi })
    }

    /// Unit cube `[0, 1]^dim` with generic coordinate names.
    pub fn unit(dim: usize) -> Self {
        SearchBox {
            names: (0..dim).map(|i| format!("z{i}")).collect(),
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// Default identification ranges for the ten cell parameters, with zero
    /// lower bounds lifted by [`POSITIVE_LIFT`].
    pub fn cell_default() -> Self {
        let ranges = [
            (7000.0, 11000.0),
            (700.0, 1100.0),
            (0.0, 0.1),
            (0.0, 0.1),
            (20.0, 70.0),
            (0.0, 20.0),
            (0.0, 10.0),
            (5.0, 15.0),
            (0.0, 100.0),
            (0.0, 100.0),
        ];
        let (lo, hi) = ranges
            .iter()
            .map(|&(l, h)| (if l > 0.0 { l } else { POSITIVE_LIFT * h }, h))
            .unzip();
        SearchBox {
            names: Params::NAMES.iter().map(|s| s.to_string()).collect(),
            lo,
            hi,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| (t - l) / (h - l))
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(z, (l, h))| l + z * (h - l))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(t, (l, h))| *l <= *t && t <= h)
    }
}

/// `n` points in `[0, 1]^dim` with exactly one point per stratum along every axis.
pub fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        perm.shuffle(rng);
        for (p, &k) in points.iter_mut().zip(&perm) {
            p[d] = (k as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cell_default_is_positive_and_contains_reference() {
        let b = SearchBox::cell_default();
        assert!(b.lo.iter().all(|&l| l > 0.0));
        assert_eq!(b.lo[2], 1e-4);
        assert_eq!(b.lo[5], 0.02);
        assert!(b.contains(&Params::REFERENCE_CELL.to_array()));
        let z = b.normalize(&Params::REFERENCE_CELL.to_array());
        assert!((z[0] - (10037.0 - 7000.0) / 4000.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(SearchBox::new(vec!["a".into()], vec![1.0], vec![1.0]).is_err());
        assert!(SearchBox::new(vec!["a".into()], vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(SearchBox::new(vec!["a".into(), "b".into()], vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = latin_hypercube(50, 10, &mut rng);
        for d in 0..10 {
            let mut strata: Vec<usize> =
                pts.iter().map(|p| (p[d] * 50.0).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..50).collect::<Vec<_>>());
        }
    }

    proptest! {
        #[test]
        fn normalization_round_trips(z in prop::collection::vec(0.0f64..=1.0, 10)) {
            let b = SearchBox::cell_default();
            let theta = b.denormalize(&z);
            prop_assert!(b.contains(&theta));
            for (a, c) in b.normalize(&theta).iter().zip(&z) {
                prop_assert!((a - c).abs() < 1e-12);
            }
        }
    }
}
