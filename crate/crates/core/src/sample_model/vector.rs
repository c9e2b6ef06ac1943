//! Binary sum tree over squared entries.
//!
//! The tree lives in a heap-ordered array: node `1` is the root, node `x` has
//! children `2x` and `2x + 1`, and leaf `i` sits at `capacity + i`. Leaves past
//! `len` are zero-weight padding. Each leaf stores `v_i^2` and the sign of
//! `v_i` is kept in a parallel array, so the stored vector can be restored.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledVector {
    len: usize,
    capacity: usize,
    weights: Vec<f64>,
    signs: Vec<i8>,
}

fn sign_of(value: f64) -> i8 {
    if value > 0.0 {
        1
    } else if value < 0.0 {
        -1
    } else {
        0
    }
}

fn check_value(value: f64, index: usize) -> Result<f64> {
    let weight = value * value;
    if !value.is_finite() || !weight.is_finite() {
        return Err(Error::NonFinite {
            value,
            context: format!("vector entry {index}"),
        });
    }
    Ok(weight)
}

impl SampledVector {
    /// Builds the tree in `O(n)` from the given entries.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let len = values.len();
        let capacity = len.next_power_of_two();
        let mut weights = vec![0.0; 2 * capacity];
        let mut signs = Vec::with_capacity(len);
        for (i, &v) in values.iter().enumerate() {
            weights[capacity + i] = check_value(v, i)?;
            signs.push(sign_of(v));
        }
        let mut tree = SampledVector {
            len,
            capacity,
            weights,
            signs,
        };
        tree.rebuild();
        Ok(tree)
    }

    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        let capacity = len.next_power_of_two();
        Ok(SampledVector {
            len,
            capacity,
            weights: vec![0.0; 2 * capacity],
            signs: vec![0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of levels below the root; sampling and updates visit `depth() + 1` nodes.
    pub fn depth(&self) -> usize {
        self.capacity.trailing_zeros() as usize
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.len,
            });
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.entry(index))
    }

    #[inline]
    pub(crate) fn entry(&self, index: usize) -> f64 {
        f64::from(self.signs[index]) * self.weights[self.capacity + index].sqrt()
    }

    /// `v_i^2` as stored in the leaf.
    pub fn leaf_weight(&self, index: usize) -> Result<f64> {
        self.check_index(index)?;
        Ok(self.weights[self.capacity + index])
    }

    pub fn sign(&self, index: usize) -> Result<i8> {
        self.check_index(index)?;
        Ok(self.signs[index])
    }

    pub fn norm_squared(&self) -> f64 {
        self.weights[1]
    }

    pub fn norm(&self) -> f64 {
        self.weights[1].sqrt()
    }

    /// Probability of index `i` under `D_v`.
    pub fn probability(&self, index: usize) -> Result<f64> {
        let w = self.leaf_weight(index)?;
        let total = self.norm_squared();
        if total <= 0.0 {
            return Err(Error::ZeroNorm("vector"));
        }
        Ok(w / total)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.entry(i)).collect()
    }

    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        self.set_counted(index, value).map(|_| ())
    }

    /// Same as [`set`](Self::set) but returns the number of tree nodes written.
    pub fn set_counted(&mut self, index: usize, value: f64) -> Result<usize> {
        self.check_index(index)?;
        let weight = check_value(value, index)?;
        self.signs[index] = sign_of(value);
        Ok(self.write_leaf(index, weight))
    }

    /// Writes a leaf weight directly; used by the matrix model for norm trees.
    pub(crate) fn set_weight(&mut self, index: usize, weight: f64) {
        debug_assert!(weight >= 0.0 && weight.is_finite());
        self.signs[index] = if weight > 0.0 { 1 } else { 0 };
        self.write_leaf(index, weight);
    }

    fn write_leaf(&mut self, index: usize, weight: f64) -> usize {
        let mut node = self.capacity + index;
        self.weights[node] = weight;
        let mut touched = 1;
        while node > 1 {
            node /= 2;
            self.weights[node] = self.weights[2 * node] + self.weights[2 * node + 1];
            touched += 1;
        }
        touched
    }

    /// Re-sums every interior node from the leaves.
    pub fn rebuild(&mut self) {
        for node in (1..self.capacity).rev() {
            self.weights[node] = self.weights[2 * node] + self.weights[2 * node + 1];
        }
    }

    /// Checks that every interior node equals the sum of its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.capacity)
            .all(|node| self.weights[node] == self.weights[2 * node] + self.weights[2 * node + 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.sample_counted(rng).map(|(i, _)| i)
    }

    /// Draws `i` with probability `v_i^2 / |v|^2`, returning the index and
    /// the number of nodes visited on the way down.
    pub fn sample_counted<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        let total = self.weights[1];
        if total <= 0.0 {
            return Err(Error::ZeroNorm("vector"));
        }
        let mut target = rng.random::<f64>() * total;
        let mut node = 1;
        let mut visited = 1;
        while node < self.capacity {
            let left = self.weights[2 * node];
            let right = self.weights[2 * node + 1];
            // rounding can push `target` past the left mass; never step into a zero subtree
            if (target < left && left > 0.0) || right <= 0.0 {
                node *= 2;
            } else {
                target -= left;
                node = 2 * node + 1;
            }
            visited += 1;
        }
        Ok((node - self.capacity, visited))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn build_small() {
        let v = SampledVector::from_slice(&[3.0, 4.0]).unwrap();
        assert_eq!(v.norm_squared(), 25.0);
        assert_eq!(v.leaf_weight(0).unwrap(), 9.0);
        assert_eq!(v.leaf_weight(1).unwrap(), 16.0);
        assert_eq!(v.norm(), 5.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            SampledVector::from_slice(&[]),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn zero_vector_cannot_sample() {
        let v = SampledVector::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.norm_squared(), 0.0);
        assert_eq!(v.norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(v.sample(&mut rng), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn density_of_signed_vector() {
        let v = SampledVector::from_slice(&[1.0, -2.0, 2.0]).unwrap();
        let d: Vec<f64> = (0..3).map(|i| v.probability(i).unwrap()).collect();
        assert!((d[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((d[1] - 4.0 / 9.0).abs() < 1e-15);
        assert!((d[2] - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(v.get(1).unwrap(), -2.0);
    }

    #[test]
    fn update_changes_root() {
        let mut v = SampledVector::from_slice(&[3.0, 4.0]).unwrap();
        v.set(0, 0.0).unwrap();
        assert_eq!(v.norm_squared(), 16.0);
        v.set(1, -0.1).unwrap();
        assert_eq!(v.get(1).unwrap(), -0.1);
    }

    #[test]
    fn out_of_range() {
        let mut v = SampledVector::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            v.set(3, 1.0),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(v.get(7).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SampledVector::from_slice(&[1.0, f64::NAN]).is_err());
        assert!(SampledVector::from_slice(&[1e200]).is_err());
    }

    #[test]
    fn point_mass_always_sampled() {
        let mut values = vec![0.0; 37];
        values[22] = 1.0;
        let v = SampledVector::from_slice(&values).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(v.sample(&mut rng).unwrap(), 22);
        }
    }

    #[test]
    fn visit_counts_match_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 3, 5, 64, 65, 1000] {
            let values: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sqrt()).collect();
            let mut v = SampledVector::from_slice(&values).unwrap();
            let bound = (n as f64).log2().ceil() as usize + 1;
            for _ in 0..50 {
                let (_, visits) = v.sample_counted(&mut rng).unwrap();
                assert!(visits <= bound, "n={n} visits={visits}");
                let i = rng.random_range(0..n);
                let touched = v.set_counted(i, rng.random::<f64>()).unwrap();
                assert!(touched <= bound);
            }
        }
    }

    #[test]
    fn incremental_updates_keep_tree_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v = SampledVector::zeros(300).unwrap();
        for _ in 0..10_000 {
            let i = rng.random_range(0..300);
            v.set(i, rng.random::<f64>() * 2.0 - 1.0).unwrap();
        }
        assert!(v.is_consistent());
        let fresh = SampledVector::from_slice(&v.to_vec()).unwrap();
        let rel = (fresh.norm_squared() - v.norm_squared()).abs() / fresh.norm_squared();
        assert!(rel <= 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn stored_values_round_trip(values in proptest::collection::vec(-1e100f64..1e100, 1..80)) {
            let v = SampledVector::from_slice(&values).unwrap();
            for (i, &x) in values.iter().enumerate() {
                // x^2 underflows below ~1e-154, so exact recovery holds on the normal range
                if x.abs() > 1e-150 {
                    proptest::prop_assert_eq!(v.get(i).unwrap(), x);
                }
            }
            let direct: f64 = values.iter().map(|x| x * x).sum();
            proptest::prop_assert!((v.norm_squared() - direct).abs() <= 1e-12 * direct.max(f64::MIN_POSITIVE));
            proptest::prop_assert!(v.is_consistent());
        }
    }
}
