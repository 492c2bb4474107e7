//! Exact event-driven simulation of the individual-based process.
//!
//! Each atom keeps its cached rates and its competition sum
//! `sum_j alpha(x_i, x_j) n_j`; the per-individual death rate is
//! `d(x_i) + sum_j alpha(x_i, x_j) n_j / K`, self included. Events are drawn
//! by [`select_two_level`] over per-atom (birth, death) totals.

mod trajectory;

pub use trajectory::{
    simulate, simulate_rescaled, Clock, SimOptions, Snapshot, SnapshotGrid, Trajectory,
    DEFAULT_SNAPSHOTS,
};

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::events::{select_two_level, total_rate, Transition};
use crate::model::{ModelSpec, TraitPoint};
use crate::population::{MeasureView, PointMeasure, Quantizer, TraitKey};
use crate::rng::{exp_waiting, uniform};
use crate::Scalar;

/// Above this support size competition sums are updated incrementally
/// (O(S) per event); at or below it they are recomputed from counts after
/// every event, which keeps them bit-exact.
pub const RECOMPUTE_LIMIT: usize = 16;
/// Incremental sums are resynchronised from counts this often.
const RESYNC_INTERVAL: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("population is extinct: total event rate is zero")]
    Absorbed,
    #[error("mutation rate u_K is zero; the evolutionary clock is undefined")]
    NoMutation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind<T> {
    BirthClonal {
        parent: TraitKey,
    },
    BirthMutant {
        parent: TraitKey,
        child: TraitKey,
        /// Trait drawn from the kernel (before quantization).
        child_trait: TraitPoint<T>,
    },
    Death {
        individual: TraitKey,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event<T> {
    pub time: T,
    pub kind: EventKind<T>,
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination<T> {
    Horizon,
    Extinct { time: T },
    Stopped { time: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Hooks called by [`Engine::run`]. `interval` sees the state that holds on
/// `[start, end)`; `event` sees the state right after an event.
pub trait Observer<T: Scalar> {
    fn interval(&mut self, _start: T, _end: T, _state: &IbmState<T>) {}

    fn event(&mut self, _event: &Event<T>, _state: &IbmState<T>) -> Control {
        Control::Continue
    }
}

/// Observer that records nothing.
pub struct NoObserver;

impl<T: Scalar> Observer<T> for NoObserver {}

#[derive(Clone, Debug)]
pub struct Atom<T> {
    pub key: TraitKey,
    pub point: TraitPoint<T>,
    pub count: u64,
    pub birth: T,
    pub death: T,
    pub mutation_prob: T,
    /// `sum_j alpha(x, x_j) n_j`.
    competition: T,
}

impl<T: Scalar> Atom<T> {
    /// Per-individual death rate including competition.
    pub fn death_per_capita(&self, k: T) -> T {
        self.death + self.competition / k
    }

    pub fn competition_sum(&self) -> T {
        self.competition
    }
}

/// Current population and clock.
#[derive(Clone, Debug)]
pub struct IbmState<T> {
    atoms: Vec<Atom<T>>,
    alpha: Vec<Vec<T>>,
    k: u64,
    total: u64,
    time: T,
    mutations: u64,
}

impl<T: Scalar> IbmState<T> {
    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Number of mutant births so far.
    pub fn mutation_count(&self) -> u64 {
        self.mutations
    }

    pub fn count_of(&self, key: &TraitKey) -> u64 {
        self.atoms
            .iter()
            .find(|a| &a.key == key)
            .map_or(0, |a| a.count)
    }

    /// Cached `alpha(x_i, x_j)` for two atoms.
    pub fn alpha(&self, i: usize, j: usize) -> T {
        self.alpha[i][j]
    }
}

impl<T: Scalar> MeasureView<T> for IbmState<T> {
    fn for_each_atom(&self, f: &mut dyn FnMut(&TraitPoint<T>, T)) {
        let k = T::from_count(self.k);
        for a in &self.atoms {
            f(&a.point, T::from_count(a.count) / k);
        }
    }

    fn support_len(&self) -> usize {
        self.atoms.len()
    }

    fn mass(&self) -> T {
        T::from_count(self.total) / T::from_count(self.k)
    }
}

/// Per-atom event rates of the generator at the current state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateTable<T> {
    pub birth_total: T,
    pub death_total: T,
    pub atoms: Vec<AtomRates<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomRates<T> {
    pub point: TraitPoint<T>,
    pub count: u64,
    /// `count * b(x)`.
    pub birth: T,
    /// `count * (d(x) + sum_y alpha(x,y) count(y) / K)`.
    pub death: T,
}

/// One replicate of the process. Single-threaded; create one per replicate.
pub struct Engine<'a, T: Scalar> {
    spec: &'a ModelSpec<T>,
    quantizer: Quantizer<T>,
    u_k: T,
    k: T,
    state: IbmState<T>,
    index: HashMap<TraitKey, usize>,
    rates: Vec<(T, T)>,
    since_resync: u64,
}

impl<'a, T: Scalar> Engine<'a, T> {
    pub fn new(spec: &'a ModelSpec<T>, initial: &PointMeasure<T>) -> Self {
        let quantizer = spec.quantizer();
        let mut engine = Self {
            spec,
            u_k: spec.u_k(),
            k: spec.k_scalar(),
            state: IbmState {
                atoms: Vec::new(),
                alpha: Vec::new(),
                k: spec.k,
                total: 0,
                time: T::zero(),
                mutations: 0,
            },
            index: HashMap::new(),
            rates: Vec::new(),
            since_resync: 0,
            quantizer,
        };
        for (key, point, count) in initial.points() {
            let slot = engine.insert_atom(key.clone(), point.clone());
            engine.state.atoms[slot].count = count;
            engine.state.total += count;
        }
        engine.recompute_competition();
        engine
    }

    /// Monomorphic start with `count` individuals at `x`.
    pub fn monomorphic(spec: &'a ModelSpec<T>, x: &TraitPoint<T>, count: u64) -> Self {
        let mu = PointMeasure::monomorphic(spec.quantizer(), spec.k, x, count);
        Self::new(spec, &mu)
    }

    pub fn state(&self) -> &IbmState<T> {
        &self.state
    }

    pub fn time(&self) -> T {
        self.state.time
    }

    pub fn quantizer(&self) -> &Quantizer<T> {
        &self.quantizer
    }

    pub fn measure(&self) -> PointMeasure<T> {
        let mut mu = PointMeasure::empty(self.quantizer.clone(), self.spec.k);
        for a in &self.state.atoms {
            mu.add_at(a.key.clone(), &a.point, a.count);
        }
        mu
    }

    pub fn rate_table(&self) -> RateTable<T> {
        let atoms: Vec<AtomRates<T>> = self
            .state
            .atoms
            .iter()
            .map(|a| {
                let n = T::from_count(a.count);
                AtomRates {
                    point: a.point.clone(),
                    count: a.count,
                    birth: n * a.birth,
                    death: n * a.death_per_capita(self.k),
                }
            })
            .collect();
        RateTable {
            birth_total: atoms.iter().map(|a| a.birth).sum(),
            death_total: atoms.iter().map(|a| a.death).sum(),
            atoms,
        }
    }

    fn insert_atom(&mut self, key: TraitKey, point: TraitPoint<T>) -> usize {
        let slot = self.state.atoms.len();
        let mut row = Vec::with_capacity(slot + 1);
        for (j, other) in self.state.atoms.iter().enumerate() {
            row.push(self.spec.alpha(&point, &other.point));
            let back = self.spec.alpha(&other.point, &point);
            self.state.alpha[j].push(back);
        }
        row.push(self.spec.alpha(&point, &point));
        let competition = self
            .state
            .atoms
            .iter()
            .zip(&row)
            .fold(T::zero(), |acc, (a, &alpha)| {
                acc + alpha * T::from_count(a.count)
            });
        self.state.alpha.push(row);
        self.state.atoms.push(Atom {
            birth: self.spec.birth_rate(&point),
            death: self.spec.death_rate(&point),
            mutation_prob: self.spec.mutation_prob(&point),
            key: key.clone(),
            point,
            count: 0,
            competition,
        });
        self.index.insert(key, slot);
        slot
    }

    fn remove_atom(&mut self, slot: usize) {
        let atom = self.state.atoms.remove(slot);
        self.state.alpha.remove(slot);
        for row in &mut self.state.alpha {
            row.remove(slot);
        }
        self.index.remove(&atom.key);
        for (i, a) in self.state.atoms.iter().enumerate().skip(slot) {
            self.index.insert(a.key.clone(), i);
        }
    }

    fn recompute_competition(&mut self) {
        let atoms = &mut self.state.atoms;
        for i in 0..atoms.len() {
            let row = &self.state.alpha[i];
            let mut sum = T::zero();
            for (j, &alpha) in row.iter().enumerate() {
                sum += alpha * T::from_count(atoms[j].count);
            }
            atoms[i].competition = sum;
        }
        self.since_resync = 0;
    }

    /// Applies `delta` (+1 or -1) to atom `slot` and updates competition.
    fn change_count(&mut self, slot: usize, increase: bool) {
        {
            let a = &mut self.state.atoms[slot];
            if increase {
                a.count += 1;
                self.state.total += 1;
            } else {
                a.count -= 1;
                self.state.total -= 1;
            }
        }
        let emptied = self.state.atoms[slot].count == 0;
        if emptied {
            self.remove_atom(slot);
        }
        if self.state.atoms.len() <= RECOMPUTE_LIMIT {
            self.recompute_competition();
            return;
        }
        if emptied {
            // Column already dropped: recompute from scratch.
            self.recompute_competition();
            return;
        }
        for (i, a) in self.state.atoms.iter_mut().enumerate() {
            let alpha = self.state.alpha[i][slot];
            if increase {
                a.competition += alpha;
            } else {
                a.competition -= alpha;
            }
        }
        self.since_resync += 1;
        if self.since_resync >= RESYNC_INTERVAL {
            self.recompute_competition();
        }
    }

    fn refresh_rates(&mut self) -> T {
        self.rates.clear();
        for a in &self.state.atoms {
            let n = T::from_count(a.count);
            self.rates
                .push((n * a.birth, n * (a.death + a.competition / self.k)));
        }
        total_rate(self.rates.iter().copied())
    }

    /// Picks and applies one event given the current total rate.
    fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R, total: T) -> EventKind<T> {
        let (slot, transition) = select_two_level(&self.rates, total, uniform(rng));
        match transition {
            Transition::Death => {
                let key = self.state.atoms[slot].key.clone();
                self.change_count(slot, false);
                EventKind::Death { individual: key }
            }
            Transition::Birth => {
                let parent = &self.state.atoms[slot];
                let pm = self.u_k * parent.mutation_prob;
                let mutate = pm > T::zero() && uniform::<T, R>(rng) < pm;
                let parent_key = parent.key.clone();
                if !mutate {
                    self.change_count(slot, true);
                    return EventKind::BirthClonal { parent: parent_key };
                }
                let child_point = self.spec.sample_mutant(&parent.point, rng);
                let child = self.quantizer.encode(&child_point);
                let target = match self.index.get(&child) {
                    Some(&j) => j,
                    None => self.insert_atom(child.clone(), child_point.clone()),
                };
                self.change_count(target, true);
                self.state.mutations += 1;
                EventKind::BirthMutant {
                    parent: parent_key,
                    child,
                    child_trait: child_point,
                }
            }
        }
    }

    /// One transition: exponential waiting time, then the event.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(Event<T>, T), EngineError> {
        let total = self.refresh_rates();
        if !(total > T::zero()) {
            return Err(EngineError::Absorbed);
        }
        let dt = exp_waiting(rng, total);
        self.state.time += dt;
        let kind = self.fire(rng, total);
        Ok((
            Event {
                time: self.state.time,
                kind,
            },
            dt,
        ))
    }

    /// Runs until `horizon`, extinction, or an observer stop.
    pub fn run<R: Rng + ?Sized, O: Observer<T> + ?Sized>(
        &mut self,
        horizon: T,
        rng: &mut R,
        observer: &mut O,
    ) -> Termination<T> {
        loop {
            let now = self.state.time;
            let total = self.refresh_rates();
            if !(total > T::zero()) {
                if now < horizon {
                    observer.interval(now, horizon, &self.state);
                }
                return Termination::Extinct { time: now };
            }
            let next = now + exp_waiting(rng, total);
            if next > horizon {
                if now < horizon {
                    observer.interval(now, horizon, &self.state);
                }
                self.state.time = horizon;
                return Termination::Horizon;
            }
            observer.interval(now, next, &self.state);
            self.state.time = next;
            let kind = self.fire(rng, total);
            let event = Event { time: next, kind };
            if observer.event(&event, &self.state) == Control::Stop {
                return Termination::Stopped { time: next };
            }
        }
    }
}

/// Rates of the generator at `mu`.
pub fn total_rates<T: Scalar>(spec: &ModelSpec<T>, mu: &PointMeasure<T>) -> RateTable<T> {
    Engine::new(spec, mu).rate_table()
}

/// One transition from `mu`, returning the event and waiting time; `mu` is
/// updated in place.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    mu: &mut PointMeasure<T>,
    rng: &mut R,
) -> Result<(Event<T>, T), EngineError> {
    let mut engine = Engine::new(spec, mu);
    let out = engine.step(rng)?;
    *mu = engine.measure();
    Ok(out)
}

#[cfg(test)]
mod tests;
