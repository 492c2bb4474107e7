use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{TraitPoint, TraitSpace};
use crate::Scalar;

/// One row of an atomic kernel: the law `m(source, .)` as weighted atoms.
/// A row without `source` applies to every trait that has no row of its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicRow<T> {
    pub source: Option<TraitPoint<T>>,
    pub targets: Vec<TraitPoint<T>>,
    pub weights: Vec<T>,
}

/// Mutation kernel `m(x, dy)`, always supported on the trait box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MutationKernel<T> {
    /// Finite set of targets. Traits covered by no row mutate onto
    /// themselves (`m(x, .) = delta_x`).
    Atomic { rows: Vec<AtomicRow<T>> },
    /// Gaussian step with per-dimension standard deviation, mirrored at the
    /// box walls.
    GaussianReflected { sigma: Vec<T> },
    /// Uniform step in the Euclidean ball of the given radius, mirrored at
    /// the box walls.
    UniformBall { radius: T },
}

impl<T: Scalar> MutationKernel<T> {
    /// Kernel sending every trait to `target`.
    pub fn to_point(target: TraitPoint<T>) -> Self {
        Self::Atomic {
            rows: vec![AtomicRow {
                source: None,
                targets: vec![target],
                weights: vec![T::one()],
            }],
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Self::Atomic { .. })
    }

    /// Atomic row governing `x`; `same` decides trait identity.
    pub fn row_for<'a>(
        &'a self,
        x: &TraitPoint<T>,
        same: impl Fn(&TraitPoint<T>, &TraitPoint<T>) -> bool,
    ) -> Option<&'a AtomicRow<T>> {
        let Self::Atomic { rows } = self else {
            return None;
        };
        rows.iter()
            .find(|r| r.source.as_ref().is_some_and(|s| same(s, x)))
            .or_else(|| rows.iter().find(|r| r.source.is_none()))
    }

    /// The atoms of `m(x, .)` for atomic kernels, `None` for continuous ones.
    pub fn atoms_for(
        &self,
        x: &TraitPoint<T>,
        same: impl Fn(&TraitPoint<T>, &TraitPoint<T>) -> bool,
    ) -> Option<Vec<(TraitPoint<T>, T)>> {
        match self {
            Self::Atomic { .. } => Some(match self.row_for(x, same) {
                Some(row) => row
                    .targets
                    .iter()
                    .cloned()
                    .zip(row.weights.iter().copied())
                    .collect(),
                None => vec![(x.clone(), T::one())],
            }),
            _ => None,
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(
        &self,
        space: &TraitSpace<T>,
        x: &TraitPoint<T>,
        same: impl Fn(&TraitPoint<T>, &TraitPoint<T>) -> bool,
        rng: &mut R,
    ) -> TraitPoint<T> {
        match self {
            Self::Atomic { .. } => {
                let Some(row) = self.row_for(x, same) else {
                    return x.clone();
                };
                let total: T = row.weights.iter().copied().sum();
                let target = T::lit(rng.random::<f64>()) * total;
                let mut acc = T::zero();
                for (point, &w) in row.targets.iter().zip(&row.weights) {
                    acc += w;
                    if target < acc {
                        return point.clone();
                    }
                }
                // Rounding fallthrough: last atom with positive weight.
                row.targets
                    .iter()
                    .zip(&row.weights)
                    .rev()
                    .find(|(_, &w)| w > T::zero())
                    .map(|(p, _)| p.clone())
                    .unwrap_or_else(|| x.clone())
            }
            Self::GaussianReflected { sigma } => {
                let mut coords: Vec<T> = x
                    .coords()
                    .iter()
                    .zip(sigma)
                    .map(|(&c, &s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        c + s * T::lit(z)
                    })
                    .collect();
                space.reflect(&mut coords);
                TraitPoint(coords)
            }
            Self::UniformBall { radius } => {
                let dim = x.dim();
                let direction: Vec<f64> = loop {
                    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        break v.into_iter().map(|a| a / norm).collect();
                    }
                };
                let r = radius.as_f64() * rng.random::<f64>().powf(1.0 / dim as f64);
                let mut coords: Vec<T> = x
                    .coords()
                    .iter()
                    .zip(&direction)
                    .map(|(&c, &u)| c + T::lit(r * u))
                    .collect();
                space.reflect(&mut coords);
                TraitPoint(coords)
            }
        }
    }
}
