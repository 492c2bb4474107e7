use rand::Rng;
use serde::Serialize;

use super::{ModelError, ModelSpec, TraitPoint};
use crate::Scalar;

/// Absolute tolerance below which an invasion-implies-substitution quantity
/// counts as zero.
pub const IIS_TOLERANCE: f64 = 1e-12;

fn coords_f64<T: Scalar>(x: &TraitPoint<T>) -> Vec<f64> {
    x.coords().iter().map(|c| c.as_f64()).collect()
}

/// Monomorphic equilibrium density `(b(x) - d(x)) / alpha(x, x)`.
pub fn equilibrium_mass<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
) -> Result<T, ModelError> {
    let b = spec.birth_rate(x);
    let d = spec.death_rate(x);
    if !(b > d) {
        return Err(ModelError::NonViableTrait {
            trait_coords: coords_f64(x),
            birth: b.as_f64(),
            death: d.as_f64(),
        });
    }
    let a = spec.alpha(x, x);
    if !(a > T::zero()) {
        return Err(ModelError::NonPositiveCompetition {
            trait_coords: coords_f64(x),
            alpha: a.as_f64(),
        });
    }
    Ok((b - d) / a)
}

/// Invasion fitness of a rare `y` in an `x` population at equilibrium.
pub fn fitness<T: Scalar>(
    spec: &ModelSpec<T>,
    y: &TraitPoint<T>,
    x: &TraitPoint<T>,
) -> Result<T, ModelError> {
    let n_x = equilibrium_mass(spec, x)?;
    Ok(spec.birth_rate(y) - spec.death_rate(y) - spec.alpha(y, x) * n_x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IisClass {
    /// A `y` mutant that invades replaces the `x` resident.
    YFixates,
    /// A `y` mutant cannot invade the `x` resident.
    XFixates,
    /// Both cross quantities positive: stable coexistence, the assumption
    /// fails for this pair.
    Coexistence,
    /// Some quantity vanishes within [`IIS_TOLERANCE`].
    Degenerate,
}

/// The two cross quantities of the invasion-implies-substitution condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IisQuantities<T> {
    /// `(b(y)-d(y)) alpha(x,x) - (b(x)-d(x)) alpha(y,x)`.
    pub invade: T,
    /// `(b(x)-d(x)) alpha(y,y) - (b(y)-d(y)) alpha(x,y)`.
    pub resist: T,
}

impl<T: Scalar> IisQuantities<T> {
    pub fn compute(spec: &ModelSpec<T>, x: &TraitPoint<T>, y: &TraitPoint<T>) -> Self {
        let rx = spec.birth_rate(x) - spec.death_rate(x);
        let ry = spec.birth_rate(y) - spec.death_rate(y);
        Self {
            invade: ry * spec.alpha(x, x) - rx * spec.alpha(y, x),
            resist: rx * spec.alpha(y, y) - ry * spec.alpha(x, y),
        }
    }

    pub fn classify(&self) -> IisClass {
        let tol = T::lit(IIS_TOLERANCE);
        if self.invade.abs() <= tol || self.resist.abs() <= tol {
            IisClass::Degenerate
        } else if self.invade < T::zero() {
            IisClass::XFixates
        } else if self.resist < T::zero() {
            IisClass::YFixates
        } else {
            IisClass::Coexistence
        }
    }
}

/// Classifies the resident/mutant pair `(x, y)`.
///
/// Note: when both quantities are negative (bistability) both orderings
/// classify as [`IisClass::XFixates`].
pub fn check_iis<T: Scalar>(spec: &ModelSpec<T>, x: &TraitPoint<T>, y: &TraitPoint<T>) -> IisClass {
    IisQuantities::compute(spec, x, y).classify()
}

/// Draws from `m(x, .)`; the result always lies in the trait box.
pub fn sample_mutant<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    rng: &mut R,
) -> TraitPoint<T> {
    spec.sample_mutant(x, rng)
}

/// Largest `eps` for which a favourable mutant's death rate stays below its
/// birth rate on the invasion window: solves
/// `d(y) + alpha(y,x)(n_x + 2 eps) + 2 alpha(y,y) eps = b(y)`.
pub fn invasion_epsilon0<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    y: &TraitPoint<T>,
) -> Result<T, ModelError> {
    let fit = fitness(spec, y, x)?;
    let two = T::lit(2.0);
    Ok(fit / (two * spec.alpha(y, x) + two * spec.alpha(y, y)))
}

/// Counterpart for an unfavourable mutant: solves
/// `d(y) + alpha(y,x)(n_x - 2 eps) = b(y)`.
pub fn extinction_epsilon0<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    y: &TraitPoint<T>,
) -> Result<T, ModelError> {
    let fit = fitness(spec, y, x)?;
    Ok(-fit / (T::lit(2.0) * spec.alpha(y, x)))
}

/// Branching-process bracket for the invasion probability of a single
/// mutant: the mutant's per-capita death rate is bracketed by
/// `d_minus = d(y) + alpha(y,x)(n_x - eps)` and
/// `d_plus = d(y) + alpha(y,x)(n_x + eps) + 2 alpha(y,y) eps`
/// while the resident density stays in `[n_x - eps, n_x + eps]` and the
/// mutant density below `2 eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvasionBand<T> {
    pub epsilon: T,
    pub d_minus: T,
    pub d_plus: T,
    /// `1 - d_plus / b(y)`.
    pub lower: T,
    /// `1 - d_minus / b(y)`.
    pub upper: T,
}

pub fn invasion_band<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    y: &TraitPoint<T>,
    eps: T,
) -> Result<InvasionBand<T>, ModelError> {
    let n_x = equilibrium_mass(spec, x)?;
    let b_y = spec.birth_rate(y);
    let d_y = spec.death_rate(y);
    let a_yx = spec.alpha(y, x);
    let a_yy = spec.alpha(y, y);
    let d_minus = d_y + a_yx * (n_x - eps);
    let d_plus = d_y + a_yx * (n_x + eps) + T::lit(2.0) * a_yy * eps;
    Ok(InvasionBand {
        epsilon: eps,
        d_minus,
        d_plus,
        lower: T::one() - d_plus / b_y,
        upper: T::one() - d_minus / b_y,
    })
}
