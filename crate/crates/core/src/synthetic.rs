//! Block-structured synthetic association matrices for tests and desk-scale
//! experiments when no benchmark edge list is at hand.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::AssociationMatrix;
use crate::error::{Error, Result};

/// Drugs and diseases are cut into `blocks` contiguous groups; positives fall
/// inside matching drug/disease groups, except for a `noise` fraction drawn
/// from the whole matrix. Diseases are drawn with Zipf-like weights
/// `rank^-popularity` over a random ranking; drugs uniformly. With `cover`
/// set, every drug and every disease receives at least one association
/// before the remaining positives are drawn, as in a matrix built from an
/// edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub drugs: usize,
    pub diseases: usize,
    pub blocks: usize,
    pub density: f64,
    pub noise: f64,
    pub popularity: f64,
    pub cover: bool,
    pub seed: u64,
}

impl Default for BlockSpec {
    /// The bundled 200 × 150 matrix at 1% density.
    fn default() -> Self {
        Self {
            drugs: 200,
            diseases: 150,
            blocks: 10,
            density: 0.01,
            noise: 0.05,
            popularity: 1.0,
            cover: true,
            seed: 20_230_101,
        }
    }
}

impl BlockSpec {
    pub fn generate(&self) -> Result<AssociationMatrix> {
        let (m, n, b) = (self.drugs, self.diseases, self.blocks);
        if m == 0 || n == 0 || b == 0 || b > m.min(n) {
            return Err(Error::Config(format!("invalid block layout {m}x{n} with {b} blocks")));
        }
        if !(self.density > 0.0 && self.density < 1.0) || !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("density must lie in (0,1) and noise in [0,1]".into()));
        }
        if !(self.popularity >= 0.0 && self.popularity.is_finite()) {
            return Err(Error::Config("popularity exponent must be finite and >= 0".into()));
        }
        let target = ((self.density * (m * n) as f64).round() as usize).max(1);
        let in_block: usize = (0..b).map(|k| span(m, b, k).len() * span(n, b, k).len()).sum();
        if target > in_block {
            return Err(Error::Config(format!("density too high: {target} positives, {in_block} in-block pairs")));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-self.popularity)).collect();
        weights.shuffle(&mut rng);
        let weighted = |w: &[f64]| WeightedIndex::new(w).expect("positive finite weights");
        let all = weighted(&weights);
        let per_block: Vec<_> = (0..b).map(|k| weighted(&weights[span(n, b, k)])).collect();
        let mut pairs = BTreeSet::new();
        if self.cover {
            if target < m.max(n) {
                return Err(Error::Config(format!("{target} positives cannot cover {m} drugs and {n} diseases")));
            }
            for i in 0..m {
                let j = if rng.random::<f64>() < self.noise {
                    all.sample(&mut rng)
                } else {
                    let k = block_of(i, m, b);
                    span(n, b, k).start + per_block[k].sample(&mut rng)
                };
                pairs.insert((i, j));
            }
            let mut covered = vec![false; n];
            for &(_, j) in &pairs {
                covered[j] = true;
            }
            for j in (0..n).filter(|&j| !covered[j]) {
                let i = if rng.random::<f64>() < self.noise {
                    rng.random_range(0..m)
                } else {
                    rng.random_range(span(m, b, block_of(j, n, b)))
                };
                pairs.insert((i, j));
            }
            if pairs.len() > target {
                return Err(Error::Config(format!("covering needs {} positives, density allows {target}", pairs.len())));
            }
        }
        while pairs.len() < target {
            let pair = if rng.random::<f64>() < self.noise {
                (rng.random_range(0..m), all.sample(&mut rng))
            } else {
                let k = rng.random_range(0..b);
                let i = rng.random_range(span(m, b, k));
                (i, span(n, b, k).start + per_block[k].sample(&mut rng))
            };
            pairs.insert(pair);
        }
        AssociationMatrix::from_parts(
            (0..m).map(|i| format!("drug{i:04}")).collect(),
            (0..n).map(|j| format!("disease{j:04}")).collect(),
            pairs,
        )
    }
}

fn span(len: usize, blocks: usize, k: usize) -> std::ops::Range<usize> {
    (k * len / blocks)..((k + 1) * len / blocks)
}

/// Block containing index `idx` of an axis of length `len`.
fn block_of(idx: usize, len: usize, blocks: usize) -> usize {
    (0..blocks).find(|&k| span(len, blocks, k).contains(&idx)).expect("index inside the axis")
}

/// The bundled 200 × 150, 1%-density block matrix.
pub fn bundled_block_matrix() -> AssociationMatrix {
    BlockSpec::default()
        .generate()
        .expect("default block spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_shape_and_density() {
        let mat = bundled_block_matrix();
        assert_eq!((mat.num_drugs(), mat.num_diseases(), mat.num_positives()), (200, 150, 300));
        assert!((mat.sparsity() - 0.99).abs() < 1e-12);
        assert_eq!(mat, bundled_block_matrix());
    }

    #[test]
    fn mostly_in_block() {
        let spec = BlockSpec { noise: 0.0, ..BlockSpec::default() };
        let mat = spec.generate().unwrap();
        for (i, j) in mat.positives() {
            assert_eq!(i * 10 / 200, j * 10 / 150);
        }
    }

    #[test]
    fn popularity_skews_disease_degrees() {
        let flat = BlockSpec { popularity: 0.0, ..BlockSpec::default() }.generate().unwrap();
        let skewed = bundled_block_matrix();
        let max_degree = |m: &AssociationMatrix| (0..m.num_diseases()).map(|j| m.disease_col(j).len()).max().unwrap();
        assert!(max_degree(&skewed) > max_degree(&flat));
    }

    #[test]
    fn cover_leaves_no_empty_rows_or_columns() {
        let mat = bundled_block_matrix();
        assert!((0..200).all(|i| !mat.drug_row(i).is_empty()));
        assert!((0..150).all(|j| !mat.disease_col(j).is_empty()));
        let loose = BlockSpec { cover: false, ..BlockSpec::default() }.generate().unwrap();
        assert!((0..150).any(|j| loose.disease_col(j).is_empty()));
    }

    #[test]
    fn rejects_bad_layout() {
        let spec = BlockSpec { blocks: 0, ..BlockSpec::default() };
        assert!(spec.generate().is_err());
        let spec = BlockSpec { density: 0.5, ..BlockSpec::default() };
        assert!(spec.generate().is_err());
    }
}
