//! Trait-structured birth-death-mutation populations: exact individual-based
//! simulation, the trait substitution sequence limit, the dimorphic
//! Lotka-Volterra system and branching-process bounds.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod events;
pub mod harness;
pub mod ibm;
pub mod lotka_volterra;
pub mod model;
pub mod population;
pub mod quadrature;
pub mod rng;
mod scalar;
pub mod tss;

pub use scalar::Scalar;

pub use ibm::{Engine, Event, EventKind, Termination};
pub use model::{ModelSpec, TraitPoint, TraitSpace};
pub use population::{MeasureView, PointMeasure, TraitKey};
pub use rng::{replicate_rng, SimRng};

pub type Model = ModelSpec<f64>;
pub type Trait = TraitPoint<f64>;
pub type Space = TraitSpace<f64>;
pub type Population = PointMeasure<f64>;
pub type Trajectory = ibm::Trajectory<f64>;
pub type TssPath = tss::TssPath<f64>;
pub type LvSystem = lotka_volterra::LvSystem<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
