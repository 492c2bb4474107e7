//! Trait space, rate functions, mutation kernels and the analytic quantities
//! derived from them (equilibrium density, invasion fitness, the
//! invasion-implies-substitution classification).

mod analysis;
mod kernel;
mod rates;
mod spec;
mod validate;

pub use analysis::{
    check_iis, equilibrium_mass, extinction_epsilon0, fitness, invasion_band, invasion_epsilon0,
    sample_mutant, IisClass, IisQuantities, InvasionBand, IIS_TOLERANCE,
};
pub use kernel::{AtomicRow, MutationKernel};
pub use rates::{CompetitionSpec, GridTable, RateSpec};
pub use spec::{ModelError, ModelSpec, MutationRate, DEFAULT_LATTICE_RESOLUTION};
pub use validate::{validate_spec, ValidationReport, Violation};

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// A point of the trait space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraitPoint<T>(pub Vec<T>);

impl<T: Scalar> TraitPoint<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self(coords)
    }

    /// One-dimensional trait.
    pub fn scalar(x: T) -> Self {
        Self(vec![x])
    }

    pub fn from_f64(coords: &[f64]) -> Self {
        Self(coords.iter().map(|&c| T::lit(c)).collect())
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn squared_distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }
}

/// Closed box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraitSpace<T> {
    bounds: Vec<[T; 2]>,
}

impl<T: Scalar> TraitSpace<T> {
    pub fn new(bounds: Vec<[T; 2]>) -> Self {
        Self { bounds }
    }

    /// The unit interval `[0, 1]`.
    pub fn unit_interval() -> Self {
        Self::new(vec![[T::zero(), T::one()]])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[T; 2]] {
        &self.bounds
    }

    pub fn is_well_formed(&self) -> bool {
        !self.bounds.is_empty()
            && self
                .bounds
                .iter()
                .all(|[lo, hi]| lo.is_finite() && hi.is_finite() && lo <= hi)
    }

    pub fn contains(&self, x: &TraitPoint<T>) -> bool {
        x.dim() == self.dim()
            && x.0
                .iter()
                .zip(&self.bounds)
                .all(|(&c, &[lo, hi])| c >= lo && c <= hi)
    }

    /// Folds an arbitrary point back into the box by mirror reflection at the
    /// walls, coordinate by coordinate.
    pub fn reflect(&self, coords: &mut [T]) {
        for (c, &[lo, hi]) in coords.iter_mut().zip(&self.bounds) {
            let width = hi - lo;
            if width <= T::zero() {
                *c = lo;
                continue;
            }
            let period = width + width;
            let z = *c - lo;
            let mut folded = z - (z / period).floor() * period;
            if folded > width {
                folded = period - folded;
            }
            // Guard the last ulp so the result is always inside the box.
            *c = (lo + folded).max(lo).min(hi);
        }
    }

    /// Regular lattice with `resolution` points per dimension (endpoints
    /// included). Degenerate dimensions contribute a single point.
    pub fn lattice(&self, resolution: usize) -> Vec<TraitPoint<T>> {
        let axes: Vec<Vec<T>> = self
            .bounds
            .iter()
            .map(|&[lo, hi]| {
                if resolution <= 1 || hi == lo {
                    vec![lo]
                } else {
                    let steps = T::from_usize(resolution - 1).unwrap();
                    (0..resolution)
                        .map(|i| {
                            if i == resolution - 1 {
                                hi
                            } else {
                                lo + (hi - lo) * T::from_usize(i).unwrap() / steps
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut points = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for prefix in &points {
                for &v in axis {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            points = next;
        }
        points.into_iter().map(TraitPoint).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lattice_includes_endpoints() {
        let space = TraitSpace::<f64>::unit_interval();
        let pts = space.lattice(33);
        assert_eq!(pts.len(), 33);
        assert_eq!(pts[0].0[0], 0.0);
        assert_eq!(pts[32].0[0], 1.0);
        assert_eq!(pts[16].0[0], 0.5);

        let square = TraitSpace::<f64>::new(vec![[0.0, 1.0], [2.0, 2.0]]);
        assert_eq!(square.lattice(5).len(), 5);
    }

    #[test]
    fn reflection_folds_back() {
        let space = TraitSpace::<f64>::unit_interval();
        let mut c = [-0.25];
        space.reflect(&mut c);
        assert!((c[0] - 0.25).abs() < 1e-15);
        let mut c = [1.25];
        space.reflect(&mut c);
        assert!((c[0] - 0.75).abs() < 1e-15);
        let mut c = [2.5];
        space.reflect(&mut c);
        assert!((c[0] - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn reflect_lands_in_box(z in -50.0f64..50.0, lo in -3.0f64..3.0, w in 0.0f64..4.0) {
            let space = TraitSpace::new(vec![[lo, lo + w]]);
            let mut c = [z];
            space.reflect(&mut c);
            prop_assert!(space.contains(&TraitPoint(c.to_vec())));
        }
    }
}
