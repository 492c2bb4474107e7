use super::*;
use crate::model::{CompetitionSpec, GridTable, MutationKernel, MutationRate, RateSpec};
use crate::rng::replicate_rng;

fn p(x: f64) -> TraitPoint<f64> {
    TraitPoint::scalar(x)
}

fn logistic(k: u64) -> ModelSpec<f64> {
    ModelSpec::constant(2.0, 1.0, 1.0, 1.0, k)
}

#[test]
fn rate_table_by_hand() {
    let mut spec = logistic(10);
    spec.competition = CompetitionSpec::GridTable(GridTable {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        shape: vec![2, 2],
        values: vec![1.0, 0.5, 0.25, 2.0],
    });
    let mut mu = PointMeasure::monomorphic(spec.quantizer(), 10, &p(0.0), 3);
    mu.add_at(spec.quantizer().encode(&p(1.0)), &p(1.0), 2);
    let table = total_rates(&spec, &mu);
    assert_eq!(table.atoms[0].birth, 6.0);
    // 3 * (1 + (1 * 3 + 0.5 * 2) / 10)
    assert!((table.atoms[0].death - 4.2).abs() < 1e-12);
    // 2 * (1 + (0.25 * 3 + 2 * 2) / 10)
    assert!((table.atoms[1].death - 2.95).abs() < 1e-12);
    assert!((table.birth_total - 10.0).abs() < 1e-12);
}

#[test]
fn step_on_empty_population_is_absorbed() {
    let spec = logistic(10);
    let mut mu = PointMeasure::empty(spec.quantizer(), 10);
    let mut rng = replicate_rng(0, 0);
    assert_eq!(step(&spec, &mut mu, &mut rng), Err(EngineError::Absorbed));
}

#[test]
fn single_step_changes_one_count() {
    let spec = logistic(10);
    let mut mu = PointMeasure::monomorphic(spec.quantizer(), 10, &p(0.5), 10);
    let mut rng = replicate_rng(3, 0);
    let (event, dt) = step(&spec, &mut mu, &mut rng).unwrap();
    assert!(dt > 0.0);
    match event.kind {
        EventKind::BirthClonal { .. } => assert_eq!(mu.total_count(), 11),
        EventKind::Death { .. } => assert_eq!(mu.total_count(), 9),
        EventKind::BirthMutant { .. } => panic!("mutation is off"),
    }
}

#[test]
fn subcritical_population_dies_and_snapshots_go_empty() {
    let spec = ModelSpec::constant(0.5, 1.0, 1.0, 1.0, 20);
    let mu = PointMeasure::monomorphic(spec.quantizer(), 20, &p(0.5), 5);
    let mut rng = replicate_rng(9, 0);
    let traj = simulate(&spec, &mu, 200.0, &mut rng, &SimOptions::default());
    assert!(matches!(traj.termination, Termination::Extinct { .. }));
    assert_eq!(traj.snapshots.len(), DEFAULT_SNAPSHOTS);
    assert!(traj.snapshots.last().unwrap().atoms.is_empty());
    assert!(traj.final_state.is_empty());
}

#[test]
fn replay_reproduces_final_state_and_snapshots() {
    let mut spec = logistic(50).with_mutation_rate(MutationRate::Power { c: 5.0, a: 1.2 });
    spec.mutation_kernel = MutationKernel::GaussianReflected { sigma: vec![0.1] };
    let mu = PointMeasure::monomorphic(spec.quantizer(), 50, &p(0.5), 50);
    let mut rng = replicate_rng(4, 0);
    let traj = simulate(&spec, &mu, 20.0, &mut rng, &SimOptions::default());
    assert_eq!(traj.termination, Termination::Horizon);
    assert!(!traj.mutations.is_empty());
    assert_eq!(traj.replay(traj.horizon), traj.final_state);
    assert_eq!(traj.events.len() as u64, traj.event_count);
    for snap in traj.snapshots.iter().step_by(37) {
        let replayed = traj.replay(snap.time);
        assert_eq!(replayed.decoded_atoms(), snap.atoms);
    }
    let last = traj.snapshots.last().unwrap();
    assert_eq!(last.time, 20.0);
    assert_eq!(last.atoms, traj.final_state.decoded_atoms());
}

#[test]
fn same_seed_same_path() {
    let spec = logistic(30);
    let mu = PointMeasure::monomorphic(spec.quantizer(), 30, &p(0.5), 30);
    let run = |seed| {
        let mut rng = replicate_rng(seed, 7);
        simulate(&spec, &mu, 5.0, &mut rng, &SimOptions::default()).events
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn large_population_settles_near_equilibrium() {
    let spec = logistic(1000);
    let mu = PointMeasure::monomorphic(spec.quantizer(), 1000, &p(0.5), 200);
    let mut rng = replicate_rng(2, 0);
    let opts = SimOptions {
        snapshots: SnapshotGrid::Times(vec![20.0, 25.0, 30.0]),
        record_events: false,
    };
    let traj = simulate(&spec, &mu, 30.0, &mut rng, &opts);
    for snap in &traj.snapshots {
        let mass = snap.atoms[0].1 as f64 / 1000.0;
        assert!((mass - 1.0).abs() < 0.15, "{mass}");
    }
}

/// Compares cached competition sums with a fresh computation.
struct SumCheck {
    worst: f64,
}

impl Observer<f64> for SumCheck {
    fn event(&mut self, _: &Event<f64>, state: &IbmState<f64>) -> Control {
        let atoms = state.atoms();
        for (i, a) in atoms.iter().enumerate() {
            let fresh: f64 = atoms
                .iter()
                .enumerate()
                .map(|(j, b)| state.alpha(i, j) * b.count as f64)
                .sum();
            let err = (a.competition_sum() - fresh).abs() / fresh.max(1.0);
            self.worst = self.worst.max(err);
        }
        Control::Continue
    }
}

#[test]
fn incremental_competition_stays_exact_enough() {
    let mut spec = logistic(200).with_mutation_rate(MutationRate::Power { c: 50.0, a: 1.1 });
    spec.competition = CompetitionSpec::GaussianKernel {
        amplitude: 1.0,
        width: 0.3,
        floor: 0.1,
    };
    spec.mutation_kernel = MutationKernel::GaussianReflected { sigma: vec![0.05] };
    let mut engine = Engine::monomorphic(&spec, &p(0.5), 200);
    let mut rng = replicate_rng(12, 0);
    let mut check = SumCheck { worst: 0.0 };
    engine.run(40.0, &mut rng, &mut check);
    assert!(engine.state().atoms().len() > RECOMPUTE_LIMIT);
    assert!(check.worst < 1e-9, "{}", check.worst);
}

/// Mutation count minus its compensator `int sum_i n_i b p u_K dt`.
struct Compensator {
    bpu: f64,
    integral: f64,
    count: u64,
}

impl Observer<f64> for Compensator {
    fn interval(&mut self, start: f64, end: f64, state: &IbmState<f64>) {
        self.integral += (end - start) * state.total_count() as f64 * self.bpu;
    }

    fn event(&mut self, e: &Event<f64>, _: &IbmState<f64>) -> Control {
        if matches!(e.kind, EventKind::BirthMutant { .. }) {
            self.count += 1;
        }
        Control::Continue
    }
}

#[test]
fn mutant_births_match_their_intensity() {
    // Kernel delta_x keeps the population monomorphic.
    let mut spec = logistic(100).with_mutation_rate(MutationRate::Power { c: 10.0, a: 2.0 });
    spec.mutation_probability = RateSpec::constant(0.5);
    spec.mutation_kernel = MutationKernel::Atomic { rows: vec![] };
    let u = spec.u_k();
    let reps = 400;
    let (mut diff, mut lambda) = (0.0, 0.0);
    for r in 0..reps {
        let mut engine = Engine::monomorphic(&spec, &p(0.5), 100);
        let mut rng = replicate_rng(21, r);
        let mut c = Compensator {
            bpu: 2.0 * 0.5 * u,
            integral: 0.0,
            count: 0,
        };
        engine.run(50.0, &mut rng, &mut c);
        assert_eq!(engine.state().atoms().len(), 1);
        diff += c.count as f64 - c.integral;
        lambda += c.integral;
    }
    let sd = (lambda / reps as f64).sqrt() / (reps as f64).sqrt();
    assert!((diff / reps as f64).abs() < 4.0 * sd, "{diff} {lambda}");
}

#[test]
fn rescaled_clock() {
    let spec = logistic(100).with_mutation_rate(MutationRate::Power { c: 10.0, a: 2.0 });
    let mu = PointMeasure::monomorphic(spec.quantizer(), 100, &p(0.5), 100);
    let mut rng = replicate_rng(5, 0);
    let traj = simulate_rescaled(&spec, &mu, 2.0, &mut rng, &SimOptions::default()).unwrap();
    assert_eq!(traj.clock, Clock::Evolutionary { scale: 0.1 });
    assert!(traj.events.last().unwrap().time <= 2.0);
    // Mutants arrive at rate <Z, b p> <= b sup mass on this clock.
    let sup = traj
        .snapshots
        .iter()
        .map(|s| s.atoms.iter().map(|a| a.1).sum::<u64>() as f64 / 100.0)
        .fold(0.0, f64::max);
    assert!((traj.mutations.len() as f64) < 2.0 * 2.0 * sup * 2.0 + 10.0);

    let off = logistic(100);
    assert!(matches!(
        simulate_rescaled(&off, &mu, 1.0, &mut rng, &SimOptions::default()),
        Err(EngineError::NoMutation)
    ));
}

#[test]
fn runs_in_single_precision() {
    let spec: ModelSpec<f32> = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 100);
    let x = TraitPoint::scalar(0.5f32);
    let mu = PointMeasure::monomorphic(spec.quantizer(), 100, &x, 100);
    let mut rng = replicate_rng(1, 0);
    let traj = simulate(&spec, &mu, 5.0f32, &mut rng, &SimOptions::default());
    assert_eq!(traj.termination, Termination::Horizon);
    assert!(traj.final_state.total_count() > 50);
}
