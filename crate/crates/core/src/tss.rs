//! The trait substitution sequence: a pure-jump process on monomorphic
//! traits, jumping from `x` to `y` at rate
//! `b(x) p(x) n_x * Fit+(y, x) / b(y) * m(x, dy)`.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{equilibrium_mass, fitness, ModelError, ModelSpec, MutationKernel, TraitPoint};
use crate::quadrature::tensor_rule;
use crate::rng::{exp_waiting, uniform};
use crate::Scalar;

/// Quadrature order for continuous kernels.
pub const QUADRATURE_ORDER: usize = 64;
/// Candidate mutants drawn by [`sample_jump`] before the trait is declared
/// absorbing.
pub const CANDIDATE_BUDGET: u64 = 1_000_000;
/// Half-width of the truncated Gaussian step, in standard deviations.
const GAUSS_TAILS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TssError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the mutation kernel is not atomic")]
    NotAtomic,
}

/// Total jump rate out of a trait.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpRate<T> {
    pub value: T,
    /// `|Q_n - Q_{n/2}|` for quadrature; zero when exact.
    pub error_estimate: T,
    pub exact: bool,
}

/// Probability that a mutant `y` born into an `x` population at equilibrium
/// invades: `Fit+(y, x) / b(y)`.
pub fn survival_probability<T: Scalar>(
    spec: &ModelSpec<T>,
    y: &TraitPoint<T>,
    x: &TraitPoint<T>,
) -> Result<T, ModelError> {
    let b = spec.birth_rate(y);
    if !(b > T::zero()) {
        return Ok(T::zero());
    }
    Ok(fitness(spec, y, x)?.positive_part() / b)
}

/// Rate at which mutants appear on the evolutionary clock: `b(x) p(x) n_x`.
pub fn mutant_rate<T: Scalar>(spec: &ModelSpec<T>, x: &TraitPoint<T>) -> Result<T, ModelError> {
    Ok(spec.birth_rate(x) * spec.mutation_prob(x) * equilibrium_mass(spec, x)?)
}

fn kernel_integral<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    order: usize,
    g: &impl Fn(&TraitPoint<T>) -> T,
) -> f64 {
    let dim = x.dim();
    let image = |step: &[f64]| {
        let mut coords: Vec<T> = x
            .coords()
            .iter()
            .zip(step)
            .map(|(&c, &s)| c + T::lit(s))
            .collect();
        spec.space.reflect(&mut coords);
        g(&TraitPoint(coords)).as_f64()
    };
    let mut total = 0.0;
    match &spec.mutation_kernel {
        MutationKernel::Atomic { .. } => unreachable!("atomic kernels are summed exactly"),
        MutationKernel::GaussianReflected { sigma } => {
            let bounds: Vec<(f64, f64)> = sigma
                .iter()
                .map(|s| (-GAUSS_TAILS * s.as_f64(), GAUSS_TAILS * s.as_f64()))
                .collect();
            let norm: f64 = sigma
                .iter()
                .map(|s| (2.0 * std::f64::consts::PI).sqrt() * s.as_f64())
                .product();
            tensor_rule(order, &bounds, |z, w| {
                let q: f64 = z
                    .iter()
                    .zip(sigma)
                    .map(|(zi, s)| (zi / s.as_f64()).powi(2))
                    .sum();
                total += w * (-0.5 * q).exp() / norm * image(z);
            });
        }
        MutationKernel::UniformBall { radius } => {
            let r = radius.as_f64();
            match dim {
                1 => tensor_rule(order, &[(-r, r)], |z, w| total += w / (2.0 * r) * image(z)),
                2 => {
                    let area = std::f64::consts::PI * r * r;
                    let bounds = [(0.0, r), (0.0, 2.0 * std::f64::consts::PI)];
                    tensor_rule(order, &bounds, |p, w| {
                        let step = [p[0] * p[1].cos(), p[0] * p[1].sin()];
                        total += w * p[0] / area * image(&step);
                    });
                }
                _ => {
                    let bounds = vec![(-r, r); dim];
                    let half = dim as f64 / 2.0;
                    let volume = std::f64::consts::PI.powf(half) * r.powi(dim as i32)
                        / gamma_half_plus_one(dim);
                    tensor_rule(order, &bounds, |z, w| {
                        if z.iter().map(|a| a * a).sum::<f64>() <= r * r {
                            total += w / volume * image(z);
                        }
                    });
                }
            }
        }
    }
    total
}

/// `Gamma(d/2 + 1)`.
fn gamma_half_plus_one(dim: usize) -> f64 {
    let mut g = if dim.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt() / 2.0
    };
    let mut k = if dim.is_multiple_of(2) { 1.0 } else { 1.5 };
    while k <= dim as f64 / 2.0 + 1e-9 {
        g *= k;
        k += 1.0;
    }
    g
}

/// `lambda(x) = b(x) p(x) n_x * int Fit+(y, x) / b(y) m(x, dy)`; exact for
/// atomic kernels, Gauss-Legendre otherwise.
pub fn jump_rate<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
) -> Result<JumpRate<T>, ModelError> {
    let base = mutant_rate(spec, x)?;
    if let Some(atoms) = spec.mutation_atoms(x) {
        let mut value = T::zero();
        for (y, w) in &atoms {
            value += *w * survival_probability(spec, y, x)?;
        }
        return Ok(JumpRate {
            value: base * value,
            error_estimate: T::zero(),
            exact: true,
        });
    }
    let n_x = equilibrium_mass(spec, x)?;
    let g = |y: &TraitPoint<T>| {
        let b = spec.birth_rate(y);
        if !(b > T::zero()) {
            return T::zero();
        }
        let fit = spec.birth_rate(y) - spec.death_rate(y) - spec.alpha(y, x) * n_x;
        fit.positive_part() / b
    };
    let fine = kernel_integral(spec, x, QUADRATURE_ORDER, &g);
    let coarse = kernel_integral(spec, x, QUADRATURE_ORDER / 2, &g);
    Ok(JumpRate {
        value: base * T::lit(fine),
        error_estimate: base * T::lit((fine - coarse).abs()),
        exact: false,
    })
}

/// Outcome of one jump draw.
#[derive(Clone, Debug, PartialEq)]
pub enum Jump<T> {
    To {
        waiting: T,
        target: TraitPoint<T>,
    },
    /// No accepted candidate: the trait does not move.
    Absorbed,
}

/// Next TSS jump from `x` by thinning: candidates arrive at rate
/// `b(x) p(x) n_x` and `y ~ m(x, .)` is kept with probability
/// `Fit+(y, x) / b(y)`.
pub fn sample_jump<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
    rng: &mut R,
) -> Result<Jump<T>, ModelError> {
    let rate = mutant_rate(spec, x)?;
    if !(rate > T::zero()) {
        return Ok(Jump::Absorbed);
    }
    let mut waiting = T::zero();
    for _ in 0..CANDIDATE_BUDGET {
        waiting += exp_waiting(rng, rate);
        let y = spec.sample_mutant(x, rng);
        let accept = survival_probability(spec, &y, x)?;
        if accept > T::zero() && uniform::<T, R>(rng) < accept {
            return Ok(Jump::To { waiting, target: y });
        }
    }
    Ok(Jump::Absorbed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TssStep<T> {
    pub time: T,
    #[serde(rename = "trait")]
    pub trait_value: TraitPoint<T>,
    pub equilibrium_mass: T,
}

/// A TSS path; `steps[0]` is the initial trait at time 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TssPath<T> {
    pub steps: Vec<TssStep<T>>,
    pub horizon: T,
    /// The last trait had no admissible jump.
    pub absorbed: bool,
}

impl<T: Scalar> TssPath<T> {
    /// Trait held at time `t`.
    pub fn trait_at(&self, t: T) -> &TraitPoint<T> {
        let i = self.steps.partition_point(|s| s.time <= t);
        &self.steps[i.max(1) - 1].trait_value
    }

    pub fn jumps(&self) -> usize {
        self.steps.len() - 1
    }

    /// `(1/T) int_0^T delta_{S_t} dt` as (trait, weight) in order of
    /// first visit.
    pub fn occupation_measure(&self) -> Vec<(TraitPoint<T>, T)> {
        let mut out: Vec<(TraitPoint<T>, T)> = Vec::new();
        for (i, s) in self.steps.iter().enumerate() {
            let end = self.steps.get(i + 1).map_or(self.horizon, |n| n.time);
            let held = (end - s.time) / self.horizon;
            match out.iter_mut().find(|(y, _)| y == &s.trait_value) {
                Some((_, w)) => *w += held,
                None => out.push((s.trait_value.clone(), held)),
            }
        }
        out
    }
}

/// Simulates the TSS from `x0` up to evolutionary time `horizon`.
pub fn simulate_tss<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    x0: &TraitPoint<T>,
    horizon: T,
    rng: &mut R,
) -> Result<TssPath<T>, ModelError> {
    let mut steps = vec![TssStep {
        time: T::zero(),
        trait_value: x0.clone(),
        equilibrium_mass: equilibrium_mass(spec, x0)?,
    }];
    let mut now = T::zero();
    loop {
        let x = &steps.last().expect("path starts non-empty").trait_value;
        match sample_jump(spec, x, rng)? {
            Jump::Absorbed => {
                return Ok(TssPath {
                    steps,
                    horizon,
                    absorbed: true,
                })
            }
            Jump::To { waiting, target } => {
                now += waiting;
                if now > horizon {
                    return Ok(TssPath {
                        steps,
                        horizon,
                        absorbed: false,
                    });
                }
                let mass = equilibrium_mass(spec, &target)?;
                steps.push(TssStep {
                    time: now,
                    trait_value: target,
                    equilibrium_mass: mass,
                });
            }
        }
    }
}

/// Law of the trait held after the first mutant is resolved, atomic kernels
/// only: `P(y) = m(x, y) Fit+(y, x) / b(y)` and the rest of the mass on `x`.
pub fn one_step_law<T: Scalar>(
    spec: &ModelSpec<T>,
    x: &TraitPoint<T>,
) -> Result<Vec<(TraitPoint<T>, T)>, TssError> {
    let atoms = spec.mutation_atoms(x).ok_or(TssError::NotAtomic)?;
    let mut law: Vec<(TraitPoint<T>, T)> = vec![(x.clone(), T::one())];
    for (y, w) in atoms {
        let p = w * survival_probability(spec, &y, x)?;
        law[0].1 -= p;
        if spec.same_trait(&y, x) {
            law[0].1 += p;
            continue;
        }
        match law.iter_mut().find(|(z, _)| spec.same_trait(z, &y)) {
            Some((_, q)) => *q += p,
            None => law.push((y, p)),
        }
    }
    Ok(law)
}
