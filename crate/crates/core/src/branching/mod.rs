//! Linear birth-death branching processes `P(b, d, n)` and the two-type
//! density-dependent chain used as oracles for the individual-based model.

mod two_type;

pub use two_type::{
    coupled_domination, lattice_bounds, simulate_two_type, CoupledState, CouplingOutcome,
    DominationBounds, Region, Side, TwoTypeChain, TwoTypeExit, TwoTypeOptions, TwoTypePath,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{exp_waiting, uniform};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchingError {
    #[error("the bound needs b != d with both positive (b = {birth}, d = {death})")]
    Inapplicable { birth: f64, death: f64 },
    #[error("initial state ({0}, {1}) lies outside the region")]
    OutsideRegion(u64, u64),
}

/// Per-individual death rate; `Infinite` is the process that is zero at all
/// times, kept out of arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeathRate<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> DeathRate<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Self::Finite(d) => Some(d),
            Self::Infinite => None,
        }
    }
}

/// Law `P(b, d, n)`: birth rate `b`, death rate `d`, `n` initial individuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingLaw<T> {
    pub birth: T,
    pub death: DeathRate<T>,
    pub initial: u64,
}

impl<T: Scalar> BranchingLaw<T> {
    pub fn new(birth: T, death: T, initial: u64) -> Self {
        Self {
            birth,
            death: DeathRate::Finite(death),
            initial,
        }
    }
}

/// Probability of eventual extinction: `(d/b)^n` if `b > d`, otherwise 1.
pub fn extinction_probability<T: Scalar>(law: &BranchingLaw<T>) -> T {
    let Some(d) = law.death.finite() else {
        return T::one();
    };
    if law.initial == 0 || !(law.birth > T::zero()) {
        return T::one();
    }
    if d <= T::zero() {
        return T::zero();
    }
    if d >= law.birth {
        return T::one();
    }
    let n = i32::try_from(law.initial).unwrap_or(i32::MAX);
    (d / law.birth).powi(n)
}

/// Bound on leaving `[K(1 - eps), K(1 + eps)]` on the wrong side: upward for
/// `b < d`, downward for `b > d`.
pub fn exit_bound<T: Scalar>(birth: T, death: T, k: u64, eps: T) -> Result<T, BranchingError> {
    if !(birth > T::zero() && death > T::zero()) || birth == death {
        return Err(BranchingError::Inapplicable {
            birth: birth.as_f64(),
            death: death.as_f64(),
        });
    }
    let ratio = if birth < death {
        death / birth
    } else {
        birth / death
    };
    Ok((-T::from_count(k) * eps * ratio.ln()).exp())
}

/// Default time window `t_K = (log K)^2`.
pub fn default_time_window<T: Scalar>(k: u64) -> T {
    let l = T::from_count(k).ln();
    l * l
}

/// Stopping rule and sampling grid for [`simulate_branching`].
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingStop<T> {
    /// Exit when the count reaches this level or below.
    pub lower: u64,
    /// Exit when the count reaches this level or above.
    pub upper: Option<u64>,
    pub horizon: T,
    /// Times at which `B(t ^ sigma)` is recorded, increasing.
    pub sample_times: Vec<T>,
}

impl<T: Scalar> BranchingStop<T> {
    pub fn extinction_or(upper: u64, horizon: T) -> Self {
        Self {
            lower: 0,
            upper: Some(upper),
            horizon,
            sample_times: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchingExit<T> {
    Lower { time: T },
    Upper { time: T },
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchingPath<T> {
    /// `(t, B(t ^ sigma))` for each requested sample time.
    pub samples: Vec<(T, u64)>,
    pub exit: BranchingExit<T>,
    pub final_count: u64,
    pub events: u64,
}

/// Exact simulation of `P(b, d, n)` until an exit level or the horizon.
pub fn simulate_branching<T: Scalar, R: Rng + ?Sized>(
    law: &BranchingLaw<T>,
    stop: &BranchingStop<T>,
    rng: &mut R,
) -> BranchingPath<T> {
    let mut samples = Vec::with_capacity(stop.sample_times.len());
    let mut next_sample = 0;
    let record_until = |t: T, n: u64, samples: &mut Vec<(T, u64)>, next: &mut usize| {
        while *next < stop.sample_times.len() && stop.sample_times[*next] < t {
            samples.push((stop.sample_times[*next], n));
            *next += 1;
        }
    };
    let Some(death) = law.death.finite() else {
        record_until(T::infinity(), 0, &mut samples, &mut next_sample);
        return BranchingPath {
            samples,
            exit: BranchingExit::Lower { time: T::zero() },
            final_count: 0,
            events: 0,
        };
    };
    let mut n = law.initial;
    let mut t = T::zero();
    let mut events = 0;
    let per_capita = law.birth + death;
    let exit = loop {
        if n <= stop.lower {
            break BranchingExit::Lower { time: t };
        }
        if stop.upper.is_some_and(|u| n >= u) {
            break BranchingExit::Upper { time: t };
        }
        if !(per_capita > T::zero()) {
            break BranchingExit::Horizon;
        }
        let next = t + exp_waiting(rng, T::from_count(n) * per_capita);
        if next > stop.horizon {
            break BranchingExit::Horizon;
        }
        record_until(next, n, &mut samples, &mut next_sample);
        t = next;
        events += 1;
        if uniform::<T, R>(rng) * per_capita < law.birth {
            n += 1;
        } else {
            n -= 1;
        }
    };
    record_until(T::infinity(), n, &mut samples, &mut next_sample);
    BranchingPath {
        samples,
        exit,
        final_count: n,
        events,
    }
}
