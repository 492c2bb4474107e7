//! The population state as a point measure: integer counts per trait atom,
//! each individual weighing `1/K`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::model::{TraitPoint, TraitSpace};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PopulationError {
    #[error("no individual carries trait {0:?}")]
    AbsentAtom(Vec<u64>),
}

/// Canonical fixed-point encoding of a trait: one integer per coordinate,
/// counting quanta of `width / 2^bits` from the lower bound.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraitKey(pub SmallVec<[u64; 2]>);

/// Encoder between trait points and [`TraitKey`]s for a given box.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer<T> {
    lower: Vec<T>,
    width: Vec<T>,
    levels: f64,
}

impl<T: Scalar> Quantizer<T> {
    pub fn new(space: &TraitSpace<T>, bits: u32) -> Self {
        let bits = bits.clamp(1, 52);
        Self {
            lower: space.bounds().iter().map(|b| b[0]).collect(),
            width: space.bounds().iter().map(|b| b[1] - b[0]).collect(),
            levels: (1u64 << bits) as f64,
        }
    }

    /// Size of one quantum along `axis`.
    pub fn quantum(&self, axis: usize) -> T {
        self.width[axis] / T::lit(self.levels)
    }

    pub fn encode(&self, x: &TraitPoint<T>) -> TraitKey {
        TraitKey(
            x.coords()
                .iter()
                .zip(self.lower.iter().zip(&self.width))
                .map(|(&c, (&lo, &w))| {
                    if w <= T::zero() {
                        return 0;
                    }
                    let frac = ((c - lo) / w).as_f64().clamp(0.0, 1.0);
                    (frac * self.levels).round() as u64
                })
                .collect(),
        )
    }

    pub fn decode(&self, key: &TraitKey) -> TraitPoint<T> {
        TraitPoint(
            key.0
                .iter()
                .zip(self.lower.iter().zip(&self.width))
                .map(|(&q, (&lo, &w))| {
                    if q as f64 >= self.levels {
                        lo + w
                    } else {
                        lo + T::lit(q as f64 / self.levels) * w
                    }
                })
                .collect(),
        )
    }

    /// Snaps a point onto the quantization lattice.
    pub fn canonical(&self, x: &TraitPoint<T>) -> TraitPoint<T> {
        self.decode(&self.encode(x))
    }
}

/// Read access to a finite atomic measure: atoms with their mass
/// (already divided by `K` where applicable).
pub trait MeasureView<T: Scalar> {
    fn for_each_atom(&self, f: &mut dyn FnMut(&TraitPoint<T>, T));

    fn support_len(&self) -> usize;

    fn mass(&self) -> T {
        let mut m = T::zero();
        self.for_each_atom(&mut |_, w| m += w);
        m
    }

    /// `<mu, f>`.
    fn observable(&self, f: &dyn Fn(&TraitPoint<T>) -> T) -> T {
        let mut s = T::zero();
        self.for_each_atom(&mut |x, w| s += f(x) * w);
        s
    }
}

/// `X^K = (1/K) sum_i delta_{x_i}` stored as counts per atom. Each atom
/// keeps the first trait value seen for its key, so traits given exactly
/// are evaluated exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMeasure<T> {
    atoms: BTreeMap<TraitKey, (TraitPoint<T>, u64)>,
    k: u64,
    quantizer: Quantizer<T>,
}

impl<T: Scalar> PointMeasure<T> {
    pub fn empty(quantizer: Quantizer<T>, k: u64) -> Self {
        Self {
            atoms: BTreeMap::new(),
            k,
            quantizer,
        }
    }

    /// `count` individuals at `x`.
    pub fn monomorphic(quantizer: Quantizer<T>, k: u64, x: &TraitPoint<T>, count: u64) -> Self {
        let mut mu = Self::empty(quantizer, k);
        if count > 0 {
            mu.atoms.insert(mu.quantizer.encode(x), (x.clone(), count));
        }
        mu
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn quantizer(&self) -> &Quantizer<T> {
        &self.quantizer
    }

    pub fn total_count(&self) -> u64 {
        self.atoms.values().map(|a| a.1).sum()
    }

    pub fn count(&self, x: &TraitPoint<T>) -> u64 {
        self.atoms.get(&self.quantizer.encode(x)).map_or(0, |a| a.1)
    }

    pub fn count_key(&self, key: &TraitKey) -> u64 {
        self.atoms.get(key).map_or(0, |a| a.1)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms in key order.
    pub fn atoms(&self) -> impl Iterator<Item = (&TraitKey, u64)> {
        self.atoms.iter().map(|(k, a)| (k, a.1))
    }

    /// Atoms in key order with their representative traits.
    pub fn points(&self) -> impl Iterator<Item = (&TraitKey, &TraitPoint<T>, u64)> {
        self.atoms.iter().map(|(k, a)| (k, &a.0, a.1))
    }

    /// Atoms in key order with decoded traits.
    pub fn decoded_atoms(&self) -> Vec<(TraitPoint<T>, u64)> {
        self.atoms.values().cloned().collect()
    }

    pub fn add_individual(&mut self, x: &TraitPoint<T>) {
        let key = self.quantizer.encode(x);
        self.add_at(key, x, 1);
    }

    /// Adds one individual at `key`; a new atom gets the decoded trait.
    pub fn add_key(&mut self, key: TraitKey) {
        match self.atoms.get_mut(&key) {
            Some(a) => a.1 += 1,
            None => {
                let x = self.quantizer.decode(&key);
                self.atoms.insert(key, (x, 1));
            }
        }
    }

    /// Adds `count` individuals at `key`, using `x` if the atom is new.
    pub fn add_at(&mut self, key: TraitKey, x: &TraitPoint<T>, count: u64) {
        if count == 0 {
            return;
        }
        self.atoms.entry(key).or_insert_with(|| (x.clone(), 0)).1 += count;
    }

    pub fn remove_individual(&mut self, x: &TraitPoint<T>) -> Result<(), PopulationError> {
        let key = self.quantizer.encode(x);
        self.remove_key(&key)
    }

    pub fn remove_key(&mut self, key: &TraitKey) -> Result<(), PopulationError> {
        match self.atoms.get_mut(key) {
            Some(a) if a.1 > 1 => {
                a.1 -= 1;
                Ok(())
            }
            Some(_) => {
                self.atoms.remove(key);
                Ok(())
            }
            None => Err(PopulationError::AbsentAtom(key.0.to_vec())),
        }
    }
}

impl<T: Scalar> MeasureView<T> for PointMeasure<T> {
    fn for_each_atom(&self, f: &mut dyn FnMut(&TraitPoint<T>, T)) {
        let k = T::from_count(self.k);
        for (x, c) in self.atoms.values() {
            f(x, T::from_count(*c) / k);
        }
    }

    fn support_len(&self) -> usize {
        self.atoms.len()
    }

    fn mass(&self) -> T {
        T::from_count(self.total_count()) / T::from_count(self.k)
    }

    /// Sums `f(x) * count` first and divides by `K` once, so that
    /// `observable(1)` equals `mass()` bit for bit.
    fn observable(&self, f: &dyn Fn(&TraitPoint<T>) -> T) -> T {
        let mut s = T::zero();
        for (x, c) in self.atoms.values() {
            s += f(x) * T::from_count(*c);
        }
        s / T::from_count(self.k)
    }
}

/// A single weighted atom `mass * delta_x`, e.g. a monomorphic equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracMeasure<T> {
    pub point: TraitPoint<T>,
    pub mass: T,
}

impl<T: Scalar> MeasureView<T> for DiracMeasure<T> {
    fn for_each_atom(&self, f: &mut dyn FnMut(&TraitPoint<T>, T)) {
        f(&self.point, self.mass);
    }

    fn support_len(&self) -> usize {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q() -> Quantizer<f64> {
        Quantizer::new(&TraitSpace::unit_interval(), 32)
    }

    fn p(x: f64) -> TraitPoint<f64> {
        TraitPoint::scalar(x)
    }

    #[test]
    fn mass_examples() {
        let mut mu = PointMeasure::empty(q(), 100);
        assert_eq!(mu.mass(), 0.0);
        for _ in 0..3 {
            mu.add_individual(&p(0.2));
        }
        assert_eq!(mu.mass(), 0.03);
        let mut mu = PointMeasure::monomorphic(q(), 100, &p(0.1), 100);
        for _ in 0..50 {
            mu.add_individual(&p(0.9));
        }
        assert_eq!(mu.mass(), 1.5);
    }

    #[test]
    fn observable_examples() {
        let mu = PointMeasure::monomorphic(q(), 4, &p(0.5), 2);
        assert_eq!(mu.observable(&|x| x.0[0]), 0.25);
        assert_eq!(mu.observable(&|_| 1.0), mu.mass());

        let mut mu = PointMeasure::monomorphic(q(), 10, &p(0.1), 1);
        for _ in 0..3 {
            mu.add_individual(&p(0.3));
        }
        let v = mu.observable(&|x| x.0[0] * x.0[0]);
        assert!((v - 0.028).abs() < 1e-12, "{v}");
    }

    #[test]
    fn add_remove() {
        let empty = PointMeasure::empty(q(), 10);
        let mut mu = empty.clone();
        mu.add_individual(&p(0.4));
        assert_eq!(mu.count(&p(0.4)), 1);
        mu.remove_individual(&p(0.4)).unwrap();
        assert_eq!(mu, empty);
        assert!(matches!(
            mu.remove_individual(&p(0.4)),
            Err(PopulationError::AbsentAtom(_))
        ));
    }

    #[test]
    fn quantization_identity() {
        let q = q();
        let a = p(0.3);
        let b = p(0.3 + 1e-12);
        assert_eq!(q.encode(&a), q.encode(&b));
        assert_ne!(q.encode(&a), q.encode(&p(0.3 + 1e-9)));
        assert_eq!(q.decode(&q.encode(&p(1.0))), p(1.0));
        assert_eq!(q.decode(&q.encode(&p(0.5))), p(0.5));
    }

    proptest! {
        #[test]
        fn decode_within_one_quantum(x in 0.0f64..=1.0) {
            let q = q();
            let back = q.decode(&q.encode(&p(x)));
            prop_assert!((back.0[0] - x).abs() <= q.quantum(0));
            prop_assert_eq!(q.encode(&back), q.encode(&p(x)));
        }

        #[test]
        fn bookkeeping_and_linearity(
            ops in prop::collection::vec((0u8..8, any::<bool>()), 1..200),
            a in -3.0f64..3.0,
        ) {
            let mut mu = PointMeasure::empty(q(), 7);
            for (slot, add) in ops {
                let x = p(slot as f64 / 8.0);
                let before = mu.total_count();
                let others: Vec<_> = mu.atoms().filter(|(k, _)| **k != q().encode(&x)).map(|(k, c)| (k.clone(), c)).collect();
                if add {
                    mu.add_individual(&x);
                    prop_assert_eq!(mu.total_count(), before + 1);
                } else if mu.remove_individual(&x).is_ok() {
                    prop_assert_eq!(mu.total_count(), before - 1);
                } else {
                    prop_assert_eq!(mu.total_count(), before);
                }
                for (k, c) in others {
                    prop_assert_eq!(mu.count_key(&k), c);
                }
                prop_assert!(mu.atoms().all(|(_, c)| c > 0));
                prop_assert!(mu.support_len() as u64 <= mu.total_count());
            }
            let f = |x: &TraitPoint<f64>| x.0[0].sin();
            let g = |x: &TraitPoint<f64>| x.0[0] * x.0[0];
            let lhs = mu.observable(&|x| a * f(x) + g(x));
            let rhs = a * mu.observable(&f) + mu.observable(&g);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert_eq!(mu.mass(), mu.observable(&|_| 1.0));
        }
    }
}
