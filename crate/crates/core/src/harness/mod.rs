//! Replicated experiments, their reports, and the observables they use.

mod experiments;

pub use experiments::{
    branching_extinction_experiment, coupling_experiment, equilibrium_experiment,
    exactness_experiment, fixation_experiment, martingale_experiment, stationarity_experiment,
    tss_vs_ibm, tss_waiting_experiment, ComparisonMode, EquilibriumConfig, FixationConfig,
    TssVsIbmConfig,
};

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ibm::Trajectory;
use crate::model::{equilibrium_mass, ModelSpec, TraitPoint};
use crate::population::MeasureView;
use crate::rng::{replicate_rng, SimRng};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("a confidence interval needs at least one trial")]
    NoTrials,
    #[error("{successes} successes out of {trials} trials")]
    TooManySuccesses { successes: u64, trials: u64 },
    #[error("confidence level {0} must lie in (0, 1)")]
    Level(f64),
    #[error("window [{0}, {1}] is empty or outside the run")]
    Window(f64, f64),
    #[error("the trajectory was recorded without its events")]
    MissingEvents,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: u64, trials: u64, level: f64) -> Result<(f64, f64), HarnessError> {
    if trials == 0 {
        return Err(HarnessError::NoTrials);
    }
    if successes > trials {
        return Err(HarnessError::TooManySuccesses { successes, trials });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HarnessError::Level(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Ok((lo, hi))
}

/// How a target value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetBasis {
    /// Stated in closed form by the theory.
    ClosedForm,
    /// Computed from formulas or numerics in this crate.
    Computed,
    /// Holds by construction.
    Trivial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Target {
    pub value: f64,
    pub basis: TargetBasis,
    /// Acceptance band around the target, if the rule uses one.
    pub band: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Status {
    Completed,
    Refused { reason: String },
}

/// Result of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub label: String,
    pub value: Option<f64>,
}

impl ReplicateOutcome {
    pub fn new(replicate: u64, label: &str, value: Option<f64>) -> Self {
        Self {
            replicate,
            label: label.to_owned(),
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub parameters: serde_json::Value,
    pub outcomes: Vec<ReplicateOutcome>,
    pub estimate: f64,
    /// Wilson 95% interval when the estimate is a proportion.
    pub ci: Option<(f64, f64)>,
    pub target: Option<Target>,
    /// The rule `pass` was decided by.
    pub criterion: String,
    pub pass: bool,
    pub status: Status,
    pub runtime_seconds: f64,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn refused(experiment: &str, parameters: serde_json::Value, reason: String) -> Self {
        Self {
            experiment: experiment.to_owned(),
            parameters,
            outcomes: Vec::new(),
            estimate: f64::NAN,
            ci: None,
            target: None,
            criterion: String::new(),
            pass: false,
            status: Status::Refused { reason },
            runtime_seconds: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn is_refused(&self) -> bool {
        matches!(self.status, Status::Refused { .. })
    }

    /// Outcome counts by label, in order of first appearance.
    pub fn tally(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for o in &self.outcomes {
            match out.iter_mut().find(|(l, _)| *l == o.label) {
                Some((_, c)) => *c += 1,
                None => out.push((o.label.clone(), 1)),
            }
        }
        out
    }
}

/// Runs `f(i, rng_i)` for `i in 0..n` on `threads` workers (0 means all
/// cores). Results come back in index order, so folds over them do not
/// depend on scheduling.
pub fn run_replicates<R, F>(n: u64, master_seed: u64, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, &mut SimRng) -> R + Sync + Send,
{
    let job = || {
        (0..n)
            .into_par_iter()
            .map(|i| f(i, &mut replicate_rng(master_seed, i)))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

/// `{mu : supp(mu) = {x}, |<mu, 1> - n_x| <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Neighborhood<T> {
    pub center: TraitPoint<T>,
    pub radius: T,
    equilibrium: T,
}

impl<T: Scalar> Neighborhood<T> {
    pub fn new(
        spec: &ModelSpec<T>,
        center: TraitPoint<T>,
        radius: T,
    ) -> Result<Self, crate::model::ModelError> {
        assert!(radius > T::zero(), "neighborhood radius must be positive");
        let equilibrium = equilibrium_mass(spec, &center)?;
        Ok(Self {
            center,
            radius,
            equilibrium,
        })
    }

    pub fn equilibrium(&self) -> T {
        self.equilibrium
    }

    /// `same` decides trait identity, usually [`ModelSpec::same_trait`].
    pub fn contains(
        &self,
        mu: &dyn MeasureView<T>,
        same: &dyn Fn(&TraitPoint<T>, &TraitPoint<T>) -> bool,
    ) -> bool {
        let mut only_center = true;
        let mut mass = T::zero();
        mu.for_each_atom(&mut |x, w| {
            only_center &= same(x, &self.center);
            mass += w;
        });
        only_center && mu.support_len() == 1 && (mass - self.equilibrium).abs() <= self.radius
    }
}

/// `F'(<mu, f>) * sum_x (b(x) - d(x) - <mu, alpha(x, .)>) f(x) mu({x})`,
/// with `F'` passed as `f_prime`.
pub fn evaluate_b<T: Scalar>(
    spec: &ModelSpec<T>,
    mu: &dyn MeasureView<T>,
    f: &dyn Fn(&TraitPoint<T>) -> T,
    f_prime: &dyn Fn(T) -> T,
) -> T {
    let mut atoms: Vec<(TraitPoint<T>, T)> = Vec::with_capacity(mu.support_len());
    mu.for_each_atom(&mut |x, w| atoms.push((x.clone(), w)));
    let mut drift = T::zero();
    let mut pairing = T::zero();
    for (x, w) in &atoms {
        let competition: T = atoms.iter().map(|(y, v)| spec.alpha(x, y) * *v).sum();
        let fx = f(x);
        drift += (spec.birth_rate(x) - spec.death_rate(x) - competition) * fx * *w;
        pairing += fx * *w;
    }
    f_prime(pairing) * drift
}

/// Time spent in a set of states during a window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Occupation<T> {
    pub duration: T,
    /// `duration / window length`.
    pub fraction: T,
}

/// Exact sojourn accounting of `in_set` over `[window.0, window.1]` by
/// replaying the recorded events.
pub fn estimate_occupation<T: Scalar>(
    trajectory: &Trajectory<T>,
    window: (T, T),
    in_set: &dyn Fn(&dyn MeasureView<T>) -> bool,
) -> Result<Occupation<T>, HarnessError> {
    let (t0, t1) = window;
    if !(t0 < t1) || t0 < T::zero() || t1 > trajectory.horizon {
        return Err(HarnessError::Window(t0.as_f64(), t1.as_f64()));
    }
    if !trajectory.has_events() {
        return Err(HarnessError::MissingEvents);
    }
    let mut duration = T::zero();
    trajectory.for_each_sojourn(|s, e, mu| {
        let (lo, hi) = (s.max(t0), e.min(t1));
        if lo < hi && in_set(mu) {
            duration += hi - lo;
        }
    });
    Ok(Occupation {
        duration,
        fraction: duration / (t1 - t0),
    })
}

#[cfg(test)]
mod tests;
