use rand::Rng;
use serde::Serialize;

use super::{Control, Engine, EngineError, Event, EventKind, IbmState, Observer, Termination};
use crate::model::{ModelSpec, TraitPoint};
use crate::population::PointMeasure;
use crate::Scalar;

pub const DEFAULT_SNAPSHOTS: usize = 512;

/// Times at which the state is recorded.
#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotGrid<T> {
    None,
    /// `n` evenly spaced times in `[0, horizon]`, both ends included.
    Even(usize),
    Times(Vec<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions<T> {
    pub snapshots: SnapshotGrid<T>,
    pub record_events: bool,
}

impl<T> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            snapshots: SnapshotGrid::Even(DEFAULT_SNAPSHOTS),
            record_events: true,
        }
    }
}

impl<T> SimOptions<T> {
    pub fn summary_only() -> Self {
        Self {
            snapshots: SnapshotGrid::None,
            record_events: false,
        }
    }
}

/// Time scale of the recorded times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Clock<T> {
    Ecological,
    /// Ecological time multiplied by `scale = K u_K`.
    Evolutionary {
        scale: T,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot<T> {
    pub time: T,
    /// Atoms in key order.
    pub atoms: Vec<(TraitPoint<T>, u64)>,
}

/// A recorded run. All times are on `clock`.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub initial: PointMeasure<T>,
    pub horizon: T,
    pub clock: Clock<T>,
    /// Empty unless events were recorded.
    pub events: Vec<Event<T>>,
    pub snapshots: Vec<Snapshot<T>>,
    /// Mutant births as (time, mutant trait).
    pub mutations: Vec<(T, TraitPoint<T>)>,
    pub termination: Termination<T>,
    pub final_state: PointMeasure<T>,
    pub event_count: u64,
}

impl<T: Scalar> Trajectory<T> {
    /// State right after all recorded events with time `<= t`. Needs events.
    pub fn replay(&self, t: T) -> PointMeasure<T> {
        let mut mu = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            apply(&mut mu, &e.kind);
        }
        mu
    }

    /// Calls `f(start, end, state)` for each maximal interval on which the
    /// recorded state is constant, up to the end of the run. Needs events.
    pub fn for_each_sojourn(&self, mut f: impl FnMut(T, T, &PointMeasure<T>)) {
        let mut mu = self.initial.clone();
        let mut t = T::zero();
        for e in &self.events {
            if e.time > t {
                f(t, e.time, &mu);
            }
            apply(&mut mu, &e.kind);
            t = e.time;
        }
        let end = match self.termination {
            Termination::Stopped { time } => time,
            _ => self.horizon,
        };
        if end > t {
            f(t, end, &mu);
        }
    }

    /// Whether every event was recorded.
    pub fn has_events(&self) -> bool {
        self.events.len() as u64 == self.event_count
    }

    /// Number of mutant births up to time `t`.
    pub fn mutations_until(&self, t: T) -> usize {
        self.mutations.iter().take_while(|(s, _)| *s <= t).count()
    }
}

fn apply<T: Scalar>(mu: &mut PointMeasure<T>, kind: &EventKind<T>) {
    match kind {
        EventKind::BirthClonal { parent } => mu.add_key(parent.clone()),
        EventKind::BirthMutant {
            child, child_trait, ..
        } => mu.add_at(child.clone(), child_trait, 1),
        EventKind::Death { individual } => mu
            .remove_key(individual)
            .expect("recorded death of an individual that is present"),
    }
}

struct Recorder<T: Scalar> {
    internal_grid: Vec<T>,
    reported_grid: Vec<T>,
    next: usize,
    horizon: T,
    scale: T,
    snapshots: Vec<Snapshot<T>>,
    events: Option<Vec<Event<T>>>,
    mutations: Vec<(T, TraitPoint<T>)>,
    event_count: u64,
}

impl<T: Scalar> Observer<T> for Recorder<T> {
    fn interval(&mut self, start: T, end: T, state: &IbmState<T>) {
        while self.next < self.internal_grid.len() {
            let g = self.internal_grid[self.next];
            let inside = g < end || (end >= self.horizon && g <= end);
            if !inside {
                break;
            }
            debug_assert!(g >= start);
            let mut atoms: Vec<_> = state.atoms().iter().collect();
            atoms.sort_by(|a, b| a.key.cmp(&b.key));
            self.snapshots.push(Snapshot {
                time: self.reported_grid[self.next],
                atoms: atoms.iter().map(|a| (a.point.clone(), a.count)).collect(),
            });
            self.next += 1;
        }
    }

    fn event(&mut self, event: &Event<T>, state: &IbmState<T>) -> Control {
        self.event_count += 1;
        let time = event.time * self.scale;
        if let EventKind::BirthMutant { child, .. } = &event.kind {
            let point = state
                .atoms()
                .iter()
                .find(|a| &a.key == child)
                .map(|a| a.point.clone())
                .expect("mutant atom exists after its birth");
            self.mutations.push((time, point));
        }
        if let Some(events) = &mut self.events {
            events.push(Event {
                time,
                kind: event.kind.clone(),
            });
        }
        Control::Continue
    }
}

fn grid_times<T: Scalar>(grid: &SnapshotGrid<T>, horizon: T) -> Vec<T> {
    match grid {
        SnapshotGrid::None => Vec::new(),
        SnapshotGrid::Even(0) => Vec::new(),
        SnapshotGrid::Even(1) => vec![T::zero()],
        SnapshotGrid::Even(n) => {
            let steps = T::from_count(*n as u64 - 1);
            (0..*n)
                .map(|i| horizon * T::from_count(i as u64) / steps)
                .collect()
        }
        SnapshotGrid::Times(ts) => {
            let mut ts: Vec<T> = ts
                .iter()
                .copied()
                .filter(|t| *t >= T::zero() && *t <= horizon)
                .collect();
            ts.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
            ts
        }
    }
}

fn run_recorded<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    initial: &PointMeasure<T>,
    horizon: T,
    scale: T,
    clock: Clock<T>,
    rng: &mut R,
    options: &SimOptions<T>,
) -> Trajectory<T> {
    let reported_grid = grid_times(&options.snapshots, horizon);
    let internal_horizon = horizon / scale;
    let internal_grid = reported_grid.iter().map(|&t| t / scale).collect();
    let mut recorder = Recorder {
        internal_grid,
        reported_grid,
        next: 0,
        horizon: internal_horizon,
        scale,
        snapshots: Vec::new(),
        events: options.record_events.then(Vec::new),
        mutations: Vec::new(),
        event_count: 0,
    };
    let mut engine = Engine::new(spec, initial);
    let termination = match engine.run(internal_horizon, rng, &mut recorder) {
        Termination::Horizon => Termination::Horizon,
        Termination::Extinct { time } => Termination::Extinct { time: time * scale },
        Termination::Stopped { time } => Termination::Stopped { time: time * scale },
    };
    Trajectory {
        initial: initial.clone(),
        horizon,
        clock,
        events: recorder.events.unwrap_or_default(),
        snapshots: recorder.snapshots,
        mutations: recorder.mutations,
        termination,
        final_state: engine.measure(),
        event_count: recorder.event_count,
    }
}

/// Simulates on the ecological clock up to `horizon`.
pub fn simulate<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    initial: &PointMeasure<T>,
    horizon: T,
    rng: &mut R,
    options: &SimOptions<T>,
) -> Trajectory<T> {
    run_recorded(
        spec,
        initial,
        horizon,
        T::one(),
        Clock::Ecological,
        rng,
        options,
    )
}

/// Simulates `Z^K_t = X^K_{t / (K u_K)}` up to evolutionary time `horizon`.
pub fn simulate_rescaled<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    initial: &PointMeasure<T>,
    horizon: T,
    rng: &mut R,
    options: &SimOptions<T>,
) -> Result<Trajectory<T>, EngineError> {
    let scale = spec.k_scalar() * spec.u_k();
    if !(scale > T::zero()) {
        return Err(EngineError::NoMutation);
    }
    Ok(run_recorded(
        spec,
        initial,
        horizon,
        scale,
        Clock::Evolutionary { scale },
        rng,
        options,
    ))
}
