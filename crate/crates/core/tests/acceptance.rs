//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! `cargo test -p tsslab --test acceptance` (add `-- --only 3,6` to pick a
//! subset while iterating).

use std::process::ExitCode;
use std::time::Instant;

use tsslab::branching::{lattice_bounds, BranchingLaw, Region, TwoTypeChain};
use tsslab::harness::{
    branching_extinction_experiment, coupling_experiment, equilibrium_experiment,
    exactness_experiment, fixation_experiment, martingale_experiment, stationarity_experiment,
    tss_vs_ibm, tss_waiting_experiment, EquilibriumConfig, ExperimentReport, FixationConfig,
    TssVsIbmConfig,
};
use tsslab::lotka_volterra::LvSystem;
use tsslab::model::{check_iis, AtomicRow, IisClass, MutationKernel, MutationRate, RateSpec};
use tsslab::{Model, Trait};

const SEED: u64 = 20_240_601;
const THREADS: usize = 0;

fn p(x: f64) -> Trait {
    Trait::scalar(x)
}

/// b = 2 + x, d = 1, alpha = 1 on [0, 1]: n_x = 1 + x, Fit(1, 0) = 1.
fn two_trait(k: u64, p_mut: f64) -> Model {
    let mut spec = Model::constant(2.0, 1.0, 1.0, p_mut, k);
    spec.birth = RateSpec::Affine {
        intercept: 2.0,
        gradient: vec![1.0],
    };
    spec
}

struct Line {
    pass: bool,
    detail: String,
}

fn from_report(r: &ExperimentReport) -> Line {
    let mut detail = format!("estimate {:.6}", r.estimate);
    if let Some((lo, hi)) = r.ci {
        detail += &format!(", 95% CI [{lo:.4}, {hi:.4}]");
    }
    if let Some(t) = &r.target {
        detail += &format!(", target {:.6}", t.value);
        if let Some((lo, hi)) = t.band {
            detail += &format!(" band [{lo:.4}, {hi:.4}]");
        }
    }
    for n in &r.notes {
        detail += &format!("; {n}");
    }
    if r.is_refused() {
        detail = format!("refused: {:?}", r.status);
    }
    Line {
        pass: r.pass && !r.is_refused(),
        detail,
    }
}

fn c1() -> Line {
    let spec = Model::constant(2.0, 1.0, 1.0, 0.0, 1000).with_mutation_rate(MutationRate::Off);
    let cfg = EquilibriumConfig {
        seed: SEED,
        threads: THREADS,
        ..EquilibriumConfig::default()
    };
    let reports = equilibrium_experiment(&spec, &p(0.5), &cfg).expect("viable trait");
    let r = &reports[0];
    let mut line = from_report(r);
    line.detail = format!("{:?}; {}", r.tally(), line.detail);
    line
}

fn c2() -> Line {
    let spec = two_trait(300, 0.0);
    let cfg = FixationConfig {
        seed: SEED,
        threads: THREADS,
        ..FixationConfig::default()
    };
    let r = fixation_experiment(&spec, &p(0.0), &p(1.0), &cfg);
    let mut line = from_report(&r);
    line.detail = format!("{:?}; {}", r.tally(), line.detail);
    line
}

fn c3() -> Line {
    let law = BranchingLaw::new(2.0, 1.0, 1);
    from_report(&branching_extinction_experiment(
        &law, 64, 100_000, 0.005, SEED, THREADS,
    ))
}

fn c4() -> Line {
    let law = BranchingLaw::new(2.0, 1.0, 5);
    from_report(&martingale_experiment(
        &law,
        &[1.0, 2.0, 5.0],
        50,
        100_000,
        SEED,
        THREADS,
    ))
}

fn c5() -> Line {
    let spec = Model::constant(2.0, 1.0, 1.0, 0.0, 1000).with_mutation_rate(MutationRate::Off);
    let cfg = EquilibriumConfig {
        ks: vec![100, 300, 1000],
        replicates: 20,
        seed: SEED,
        threads: THREADS,
        ..EquilibriumConfig::default()
    };
    let reports = stationarity_experiment(&spec, &p(0.5), &cfg).expect("viable trait");
    let values: Vec<f64> = reports.iter().map(|r| r.estimate).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let last = *values.last().unwrap();
    Line {
        pass: decreasing && last < 0.05,
        detail: format!(
            "K = 100, 300, 1000: {}; decreasing {decreasing}, last < 0.05 {}",
            values
                .iter()
                .map(|v| format!("{v:.5}"))
                .collect::<Vec<_>>()
                .join(", "),
            last < 0.05
        ),
    }
}

fn c6() -> Line {
    let spec = two_trait(1000, 0.0);
    let (x, y) = (p(0.0), p(1.0));
    let class = check_iis(&spec, &x, &y);
    let sys = LvSystem::from_spec(&spec, &x, &y).expect("viable pair");
    let traj = sys.integrate((1.0, 0.01), 100.0, 1e-2).expect("integrates");
    let (nx, ny) = traj.final_state();
    let err = nx.abs().max((ny - 2.0).abs());
    Line {
        pass: class == IisClass::YFixates && err < 1e-6 && traj.clamps.is_empty(),
        detail: format!(
            "{class:?}; final ({nx:.3e}, {ny:.12}), distance {err:.3e}, {} clamps",
            traj.clamps.len()
        ),
    }
}

fn c7() -> Line {
    let mut spec = two_trait(1000, 0.1);
    spec.mutation_kernel = MutationKernel::to_point(p(1.0));
    from_report(&tss_waiting_experiment(
        &spec,
        &p(0.0),
        10_000,
        SEED,
        THREADS,
    ))
}

fn c8() -> Line {
    let mut spec = two_trait(1000, 1.0).with_mutation_rate(MutationRate::Power { c: 1.0, a: 2.0 });
    let row = |from: f64, to: f64| AtomicRow {
        source: Some(p(from)),
        targets: vec![p(to)],
        weights: vec![1.0],
    };
    spec.mutation_kernel = MutationKernel::Atomic {
        rows: vec![row(0.0, 1.0), row(1.0, 0.0)],
    };
    let cfg = TssVsIbmConfig {
        seed: SEED,
        threads: THREADS,
        ..TssVsIbmConfig::default()
    };
    from_report(&tss_vs_ibm(&spec, &p(0.0), &cfg))
}

fn c9() -> Line {
    let k = 300u64;
    let eps = 0.05;
    let kf = k as f64;
    let region = Region {
        a: kf * (1.0 - eps),
        b: kf * (1.0 + eps),
        c: 1.0,
        d: kf * eps,
    };
    let chain = TwoTypeChain::from_spec(&two_trait(k, 0.0), &p(0.0), &p(1.0), (k, 1), region);
    let bounds = lattice_bounds(&chain).expect("region contains lattice points");
    from_report(&coupling_experiment(
        &chain, &bounds, 10_000, 1e4, SEED, THREADS,
    ))
}

fn c10() -> Line {
    let spec = two_trait(100, 0.0);
    from_report(&exactness_experiment(
        &spec,
        &p(0.0),
        &p(1.0),
        (100, 10),
        20.0,
        100,
        SEED,
        THREADS,
    ))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::args()
        .skip_while(|a| a != "--only")
        .nth(1)
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    type Criterion = (&'static str, fn() -> Line);
    let criteria: [Criterion; 10] = [
        ("equilibrium mass", c1),
        ("fixation probability", c2),
        ("branching extinction", c3),
        ("martingale identity", c4),
        ("generator stationarity", c5),
        ("Lotka-Volterra substitution", c6),
        ("substitution waiting time", c7),
        ("substitution sequence vs individual-based", c8),
        ("coupling domination", c9),
        ("cross-module exactness", c10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let line = run();
        let verdict = if line.pass { "PASS" } else { "FAIL" };
        failed += (!line.pass) as usize;
        println!(
            "[{verdict}] {n:>2} {name} ({:.1} s): {}",
            started.elapsed().as_secs_f64(),
            line.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
