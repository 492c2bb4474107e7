use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CompetitionSpec, MutationKernel, RateSpec, TraitPoint, TraitSpace};
use crate::population::Quantizer;
use crate::Scalar;

pub const DEFAULT_LATTICE_RESOLUTION: usize = 33;
const DEFAULT_KEY_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("trait {trait_coords:?} is not viable: b = {birth} <= d = {death}")]
    NonViableTrait {
        trait_coords: Vec<f64>,
        birth: f64,
        death: f64,
    },
    #[error("self-competition at {trait_coords:?} is {alpha}, must be positive")]
    NonPositiveCompetition { trait_coords: Vec<f64>, alpha: f64 },
    #[error("trait {0:?} lies outside the trait space")]
    OutOfSpace(Vec<f64>),
}

/// Per-birth mutation probability scale `u_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MutationRate<T> {
    /// `u_K = c * K^(-a)`, with `c > 0` and `a > 1`.
    Power { c: T, a: T },
    /// `u_K = 0`: the mutation-free birth-death dynamics.
    Off,
}

impl<T: Scalar> MutationRate<T> {
    pub fn value(&self, k: u64) -> T {
        match self {
            Self::Power { c, a } => *c * T::from_count(k).powf(-*a),
            Self::Off => T::zero(),
        }
    }
}

fn default_resolution() -> usize {
    DEFAULT_LATTICE_RESOLUTION
}

fn default_key_bits() -> u32 {
    DEFAULT_KEY_BITS
}

/// Full parameterization of the individual-based model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub space: TraitSpace<T>,
    pub birth: RateSpec<T>,
    pub death: RateSpec<T>,
    pub mutation_probability: RateSpec<T>,
    pub competition: CompetitionSpec<T>,
    /// Configured `[alpha_min, alpha_max]`; when absent only positivity and
    /// finiteness are checked.
    pub competition_bounds: Option<[T; 2]>,
    pub mutation_kernel: MutationKernel<T>,
    /// System size `K`.
    pub k: u64,
    pub mutation_rate: MutationRate<T>,
    #[serde(default = "default_resolution")]
    pub lattice_resolution: usize,
    /// Bits per coordinate used to quantize traits into atom keys.
    #[serde(default = "default_key_bits")]
    pub key_bits: u32,
}

impl<T: Scalar> ModelSpec<T> {
    /// Constant-rate model on `[0, 1]` with mutations switched off.
    pub fn constant(birth: T, death: T, alpha: T, p: T, k: u64) -> Self {
        Self {
            space: TraitSpace::unit_interval(),
            birth: RateSpec::constant(birth),
            death: RateSpec::constant(death),
            mutation_probability: RateSpec::constant(p),
            competition: CompetitionSpec::constant(alpha),
            competition_bounds: None,
            mutation_kernel: MutationKernel::GaussianReflected {
                sigma: vec![T::lit(0.05)],
            },
            k,
            mutation_rate: MutationRate::Off,
            lattice_resolution: DEFAULT_LATTICE_RESOLUTION,
            key_bits: DEFAULT_KEY_BITS,
        }
    }

    pub fn with_k(mut self, k: u64) -> Self {
        self.k = k;
        self
    }

    pub fn with_mutation_rate(mut self, rule: MutationRate<T>) -> Self {
        self.mutation_rate = rule;
        self
    }

    /// Same dynamics with `u_K = 0`.
    pub fn without_mutation(&self) -> Self {
        let mut s = self.clone();
        s.mutation_rate = MutationRate::Off;
        s
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn k_scalar(&self) -> T {
        T::from_count(self.k)
    }

    pub fn birth_rate(&self, x: &TraitPoint<T>) -> T {
        self.birth.eval(x)
    }

    pub fn death_rate(&self, x: &TraitPoint<T>) -> T {
        self.death.eval(x)
    }

    pub fn mutation_prob(&self, x: &TraitPoint<T>) -> T {
        self.mutation_probability.eval(x)
    }

    pub fn alpha(&self, x: &TraitPoint<T>, y: &TraitPoint<T>) -> T {
        self.competition.eval(x, y)
    }

    pub fn u_k(&self) -> T {
        self.mutation_rate.value(self.k)
    }

    pub fn quantizer(&self) -> Quantizer<T> {
        Quantizer::new(&self.space, self.key_bits)
    }

    /// Trait identity as used for atoms: equal quantization keys.
    pub fn same_trait(&self, a: &TraitPoint<T>, b: &TraitPoint<T>) -> bool {
        let q = self.quantizer();
        q.encode(a) == q.encode(b)
    }

    /// Draws a mutant trait from `m(x, .)`.
    pub fn sample_mutant<R: Rng + ?Sized>(&self, x: &TraitPoint<T>, rng: &mut R) -> TraitPoint<T> {
        let q = self.quantizer();
        self.mutation_kernel
            .sample(&self.space, x, |a, b| q.encode(a) == q.encode(b), rng)
    }

    /// Atoms of `m(x, .)` when the kernel is atomic.
    pub fn mutation_atoms(&self, x: &TraitPoint<T>) -> Option<Vec<(TraitPoint<T>, T)>> {
        let q = self.quantizer();
        self.mutation_kernel
            .atoms_for(x, |a, b| q.encode(a) == q.encode(b))
    }
}
