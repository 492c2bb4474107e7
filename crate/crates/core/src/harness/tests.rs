use super::*;
use crate::ibm::{simulate, SimOptions};
use crate::model::{MutationRate, RateSpec};
use crate::population::{DiracMeasure, PointMeasure};
use proptest::prelude::*;

fn p(x: f64) -> TraitPoint<f64> {
    TraitPoint::scalar(x)
}

#[test]
fn wilson_examples() {
    let (lo, _) = wilson_ci(0, 40, 0.95).unwrap();
    assert_eq!(lo, 0.0);
    let (_, hi) = wilson_ci(40, 40, 0.95).unwrap();
    assert_eq!(hi, 1.0);
    let (lo, hi) = wilson_ci(50, 100, 0.95).unwrap();
    assert!(
        (lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3,
        "{lo} {hi}"
    );
    assert_eq!(wilson_ci(0, 0, 0.95), Err(HarnessError::NoTrials));
    assert!(wilson_ci(5, 4, 0.95).is_err());
    assert!(wilson_ci(1, 4, 1.0).is_err());
}

proptest! {
    #[test]
    fn wilson_contains_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let s = (frac * n as f64).floor() as u64;
        let (lo, hi) = wilson_ci(s, n, 0.95).unwrap();
        let est = s as f64 / n as f64;
        prop_assert!(lo <= est && est <= hi);
    }
}

#[test]
fn evaluate_b_examples() {
    let spec = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 100);
    let one = |_: &TraitPoint<f64>| 1.0;
    let id = |_: f64| 1.0;
    let eq = PointMeasure::monomorphic(spec.quantizer(), 100, &p(0.5), 100);
    assert_eq!(evaluate_b(&spec, &eq, &one, &id), 0.0);
    let empty = PointMeasure::empty(spec.quantizer(), 100);
    assert_eq!(evaluate_b(&spec, &empty, &one, &id), 0.0);
    let half = PointMeasure::monomorphic(spec.quantizer(), 100, &p(0.5), 50);
    assert_eq!(evaluate_b(&spec, &half, &one, &id), 0.25);
    // F(u) = u^2 doubles by F'(0.5) = 1.
    assert_eq!(evaluate_b(&spec, &half, &one, &|u| 2.0 * u), 0.25);
}

proptest! {
    #[test]
    fn evaluate_b_vanishes_at_equilibrium(
        b0 in 1.1f64..4.0, slope in -0.5f64..0.5, d in 0.0f64..0.5, alpha in 0.1f64..3.0, x in 0.0f64..1.0,
    ) {
        let mut spec = ModelSpec::constant(b0, d, alpha, 1.0, 100);
        spec.birth = RateSpec::Affine { intercept: b0, gradient: vec![slope] };
        let x = p(x);
        let n = crate::model::equilibrium_mass(&spec, &x).unwrap();
        let mu = DiracMeasure { point: x, mass: n };
        let v = evaluate_b(&spec, &mu, &|_| 1.0, &|_| 1.0);
        prop_assert!(v.abs() < 1e-14 * (1.0 + n * n), "{}", v);
    }
}

#[test]
fn neighborhood_membership() {
    let spec = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 100);
    let nb = Neighborhood::new(&spec, p(0.5), 0.1).unwrap();
    let same = |a: &TraitPoint<f64>, b: &TraitPoint<f64>| spec.same_trait(a, b);
    let inside = PointMeasure::monomorphic(spec.quantizer(), 100, &p(0.5), 95);
    assert!(nb.contains(&inside, &same));
    let low = PointMeasure::monomorphic(spec.quantizer(), 100, &p(0.5), 80);
    assert!(!nb.contains(&low, &same));
    let mut two = inside.clone();
    two.add_individual(&p(0.7));
    assert!(!nb.contains(&two, &same));
}

#[test]
fn occupation_accounting() {
    let spec = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 1000);
    let mu = PointMeasure::monomorphic(spec.quantizer(), 1000, &p(0.5), 1000);
    let mut rng = crate::replicate_rng(3, 0);
    let traj = simulate(&spec, &mu, 20.0, &mut rng, &SimOptions::default());
    let all = estimate_occupation(&traj, (5.0, 20.0), &|_| true).unwrap();
    assert_eq!(all.duration, 15.0);
    assert_eq!(all.fraction, 1.0);

    let nb = Neighborhood::new(&spec, p(0.5), 0.1).unwrap();
    let same = |a: &TraitPoint<f64>, b: &TraitPoint<f64>| spec.same_trait(a, b);
    let a = |m: &dyn MeasureView<f64>| nb.contains(m, &same);
    let not_a = |m: &dyn MeasureView<f64>| !nb.contains(m, &same);
    let in_a = estimate_occupation(&traj, (5.0, 20.0), &a).unwrap();
    let out_a = estimate_occupation(&traj, (5.0, 20.0), &not_a).unwrap();
    assert!((in_a.duration + out_a.duration - 15.0).abs() < 1e-12);
    assert!(in_a.fraction >= 0.95, "{}", in_a.fraction);

    let first = estimate_occupation(&traj, (5.0, 12.0), &a).unwrap();
    let second = estimate_occupation(&traj, (12.0, 20.0), &a).unwrap();
    assert!((first.duration + second.duration - in_a.duration).abs() < 1e-12);

    let big = |m: &dyn MeasureView<f64>| m.mass() > 1.0;
    let small = |m: &dyn MeasureView<f64>| m.mass() <= 1.0;
    let sum = estimate_occupation(&traj, (5.0, 20.0), &big)
        .unwrap()
        .duration
        + estimate_occupation(&traj, (5.0, 20.0), &small)
            .unwrap()
            .duration;
    assert!((sum - 15.0).abs() < 1e-12);

    assert!(estimate_occupation(&traj, (5.0, 30.0), &a).is_err());
    let quiet = simulate(&spec, &mu, 2.0, &mut rng, &SimOptions::summary_only());
    assert_eq!(
        estimate_occupation(&quiet, (0.0, 1.0), &a),
        Err(HarnessError::MissingEvents)
    );
}

#[test]
fn replicate_order_is_independent_of_threads() {
    let f = |i: u64, rng: &mut crate::SimRng| {
        use rand::Rng;
        (i, rng.random::<u64>())
    };
    assert_eq!(run_replicates(50, 9, 1, f), run_replicates(50, 9, 3, f));
}

fn two_trait(k: u64) -> ModelSpec<f64> {
    let mut spec = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, k);
    spec.birth = RateSpec::Affine {
        intercept: 2.0,
        gradient: vec![1.0],
    };
    spec
}

#[test]
fn fixation_refuses_unfit_mutants() {
    let spec = two_trait(100);
    let cfg = FixationConfig {
        replicates: 10,
        ..FixationConfig::default()
    };
    let r = fixation_experiment(&spec, &p(1.0), &p(0.0), &cfg);
    assert!(r.is_refused());
    assert!(r.outcomes.is_empty());
}

#[test]
fn neutral_mutant_fixes_with_one_over_population() {
    let spec = ModelSpec::constant(2.0, 1.0, 1.0, 1.0, 20);
    let cfg = FixationConfig {
        k: 20,
        replicates: 4000,
        enforce_preconditions: false,
        horizon: 1e5,
        seed: 4,
        threads: 1,
        ..FixationConfig::default()
    };
    let r = fixation_experiment(&spec, &p(0.2), &p(0.8), &cfg);
    assert_eq!(r.status, Status::Completed);
    let target: f64 = 1.0 / 21.0;
    let sd = (target * (1.0 - target) / 4000.0).sqrt();
    assert!((r.estimate - target).abs() < 4.0 * sd, "{}", r.estimate);
    let tally = r.tally();
    assert!(tally.iter().all(|(l, _)| l != "undecided"));
}

#[test]
fn small_fixation_run_is_deterministic() {
    let spec = two_trait(100);
    let cfg = FixationConfig {
        k: 100,
        replicates: 200,
        seed: 2,
        threads: 2,
        ..FixationConfig::default()
    };
    let a = fixation_experiment(&spec, &p(0.0), &p(1.0), &cfg);
    let b = fixation_experiment(
        &spec,
        &p(0.0),
        &p(1.0),
        &FixationConfig { threads: 1, ..cfg },
    );
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(a.estimate, b.estimate);
    let (lo, hi) = a.ci.unwrap();
    assert!(lo <= a.estimate && a.estimate <= hi);
}

#[test]
fn tss_comparison_refuses_without_mutation() {
    let spec = two_trait(100);
    let r = tss_vs_ibm(&spec, &p(0.0), &TssVsIbmConfig::default());
    assert!(r.is_refused());
}

#[test]
fn tss_comparison_small_k() {
    let mut spec = two_trait(100).with_mutation_rate(MutationRate::Power { c: 1.0, a: 2.0 });
    spec.mutation_kernel = crate::model::MutationKernel::Atomic {
        rows: vec![
            crate::model::AtomicRow {
                source: Some(p(0.0)),
                targets: vec![p(1.0)],
                weights: vec![1.0],
            },
            crate::model::AtomicRow {
                source: Some(p(1.0)),
                targets: vec![p(0.0)],
                weights: vec![1.0],
            },
        ],
    };
    let cfg = TssVsIbmConfig {
        k: 100,
        replicates: 300,
        tolerance: 0.1,
        threads: 1,
        ..TssVsIbmConfig::default()
    };
    let r = tss_vs_ibm(&spec, &p(0.0), &cfg);
    assert_eq!(r.status, Status::Completed);
    assert!(r.pass, "{} {:?}", r.estimate, r.notes);

    let subst = tss_vs_ibm(
        &spec,
        &p(0.0),
        &TssVsIbmConfig {
            mode: ComparisonMode::FirstSubstitution,
            replicates: 100,
            ..cfg
        },
    );
    // Only one trait can be reached: the law is a point mass.
    assert!(subst.estimate < 1e-12);
}
