use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use tsslab::branching::{lattice_bounds, BranchingLaw, Region, TwoTypeChain};
use tsslab::harness::{
    branching_extinction_experiment, coupling_experiment, equilibrium_experiment,
    exactness_experiment, fixation_experiment, martingale_experiment, stationarity_experiment,
    tss_vs_ibm, tss_waiting_experiment, ComparisonMode, EquilibriumConfig, ExperimentReport,
    FixationConfig, Status, TssVsIbmConfig,
};
use tsslab::ibm::{simulate, simulate_rescaled, SimOptions, SnapshotGrid};
use tsslab::model::{check_iis, equilibrium_mass, fitness, validate_spec};
use tsslab::tss::{jump_rate, simulate_tss};
use tsslab::{replicate_rng, LvSystem, Model, Population, Trait};

use crate::config::{
    BranchingParams, CheckParams, ClockChoice, ComparisonParams, EquilibriumParams, Experiment,
    FixationParams, IbmParams, LvParams, ModeChoice, RunConfig, TssParams,
};
use crate::export;
use crate::CliError;

/// Files written into the output directory, in order.
pub type Outputs = Vec<String>;

fn precondition(message: impl ToString) -> CliError {
    CliError::Precondition {
        message: message.to_string(),
        report: None,
    }
}

fn create(dir: &Path, name: &str, outputs: &mut Outputs) -> Result<BufWriter<File>, CliError> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<S: Serialize>(
    dir: &Path,
    name: &str,
    value: &S,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let mut w = create(dir, name, outputs)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the report, then turns a refusal into a precondition failure.
fn finish(dir: &Path, reports: &[ExperimentReport], outputs: &mut Outputs) -> Result<(), CliError> {
    if let [single] = reports {
        write_json(dir, "report.json", single, outputs)?;
    } else {
        write_json(dir, "report.json", &reports, outputs)?;
    }
    for r in reports {
        if let Status::Refused { reason } = &r.status {
            return Err(CliError::Precondition {
                message: format!("{} refused: {reason}", r.experiment),
                report: serde_json::to_value(r).ok(),
            });
        }
    }
    Ok(())
}

fn midpoint(spec: &Model) -> Trait {
    Trait::new(
        spec.space
            .bounds()
            .iter()
            .map(|[lo, hi]| 0.5 * (lo + hi))
            .collect(),
    )
}

fn point(x: &Option<Vec<f64>>, spec: &Model) -> Trait {
    x.clone().map_or_else(|| midpoint(spec), Trait::new)
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(precondition(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

pub fn execute(exp: &Experiment, cfg: &RunConfig, dir: &Path) -> Result<Outputs, CliError> {
    let mut outputs = Vec::new();
    match exp {
        Experiment::SimulateIbm(p) => simulate_ibm(p, cfg, dir, &mut outputs)?,
        Experiment::SimulateTss(p) => simulate_tss_cmd(p, cfg, dir, &mut outputs)?,
        Experiment::LvOde(p) => lv_ode(p, cfg, dir, &mut outputs)?,
        Experiment::CheckAssumptions(p) => check_assumptions(p, cfg, dir, &mut outputs)?,
        Experiment::Equilibrium(p) => equilibrium(p, cfg, dir, &mut outputs)?,
        Experiment::Fixation(p) => fixation(p, cfg, dir, &mut outputs)?,
        Experiment::TssVsIbm(p) => comparison(p, cfg, dir, &mut outputs)?,
        Experiment::BranchingOracle(p) => branching(p, cfg, dir, &mut outputs)?,
    }
    Ok(outputs)
}

fn simulate_ibm(
    p: &IbmParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    positive("horizon", p.horizon)?;
    let q = spec.quantizer();
    let mut mu = Population::empty(q.clone(), spec.k);
    if p.initial.is_empty() {
        let x = midpoint(spec);
        let n = equilibrium_mass(spec, &x).map_err(precondition)?;
        mu.add_at(q.encode(&x), &x, (n * spec.k as f64).floor() as u64);
    }
    for a in &p.initial {
        let x = Trait::new(a.trait_value.clone());
        mu.add_at(q.encode(&x), &x, a.count);
    }
    let opts = SimOptions {
        snapshots: match p.snapshots {
            0 => SnapshotGrid::None,
            n => SnapshotGrid::Even(n),
        },
        record_events: p.record_events,
    };
    let mut rng = replicate_rng(cfg.seed, 0);
    let traj = match p.clock {
        ClockChoice::Ecological => simulate(spec, &mu, p.horizon, &mut rng, &opts),
        ClockChoice::Evolutionary => {
            simulate_rescaled(spec, &mu, p.horizon, &mut rng, &opts).map_err(precondition)?
        }
    };
    let dim = spec.dim();
    if p.record_events {
        let w = create(dir, "events.csv", outputs)?;
        export::write_events(w, &traj, dim)?;
    }
    let w = create(dir, "snapshots.csv", outputs)?;
    export::write_snapshots(w, &traj, dim, spec.k)?;
    let final_state: Vec<Value> = traj
        .final_state
        .points()
        .map(|(_, x, n)| json!({"trait": x, "count": n}))
        .collect();
    let report = json!({
        "experiment": "simulate-ibm",
        "seed": cfg.seed,
        "horizon": traj.horizon,
        "clock": traj.clock,
        "termination": traj.termination,
        "event_count": traj.event_count,
        "mutations": traj.mutations.len(),
        "snapshots": traj.snapshots.len(),
        "final_state": final_state,
    });
    write_json(dir, "report.json", &report, outputs)
}

fn simulate_tss_cmd(
    p: &TssParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    positive("horizon", p.horizon)?;
    let x0 = point(&p.trait_value, spec);
    let rate = jump_rate(spec, &x0).map_err(precondition)?;
    let mut rng = replicate_rng(cfg.seed, 0);
    let path = simulate_tss(spec, &x0, p.horizon, &mut rng).map_err(precondition)?;
    let w = create(dir, "tss_path.csv", outputs)?;
    export::write_tss_path(w, &path, spec.dim())?;
    let last = path.steps.last().expect("path has its initial step");
    let report = json!({
        "experiment": "simulate-tss",
        "seed": cfg.seed,
        "initial_trait": x0,
        "initial_jump_rate": rate,
        "horizon": path.horizon,
        "jumps": path.jumps(),
        "absorbed": path.absorbed,
        "final_trait": last.trait_value,
        "final_equilibrium_mass": last.equilibrium_mass,
    });
    write_json(dir, "report.json", &report, outputs)
}

fn lv_ode(
    p: &LvParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    let (x, y) = (Trait::new(p.x.clone()), Trait::new(p.y.clone()));
    positive("t_end", p.t_end)?;
    let sys = LvSystem::from_spec(spec, &x, &y).map_err(precondition)?;
    let initial = match p.initial {
        Some([a, b]) => (a, b),
        None => (equilibrium_mass(spec, &x).map_err(precondition)?, 0.01),
    };
    let traj = sys
        .integrate(initial, p.t_end, p.step)
        .map_err(precondition)?;
    let w = create(dir, "lv.csv", outputs)?;
    export::write_lv(w, &traj)?;
    let equilibria: Vec<Value> = sys
        .equilibria()
        .iter()
        .map(|e| {
            let stability = sys.classify_stability(e.point.0, e.point.1).ok();
            json!({"equilibrium": e, "stability": stability})
        })
        .collect();
    let (nx, ny) = traj.final_state();
    let report = json!({
        "experiment": "lv-ode",
        "x": x, "y": y,
        "classification": check_iis(spec, &x, &y),
        "equilibria": equilibria,
        "initial": [initial.0, initial.1],
        "t_end": p.t_end,
        "step": p.step,
        "final_state": [nx, ny],
        "clamps": traj.clamps,
    });
    write_json(dir, "report.json", &report, outputs)
}

fn check_assumptions(
    p: &CheckParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    let validation = validate_spec(spec);
    let traits: Vec<Value> = p
        .traits
        .iter()
        .map(|c| {
            let x = Trait::new(c.clone());
            json!({
                "trait": x,
                "birth": spec.birth_rate(&x),
                "death": spec.death_rate(&x),
                "equilibrium_mass": equilibrium_mass(spec, &x).ok(),
                "jump_rate": jump_rate(spec, &x).ok(),
            })
        })
        .collect();
    let pairs: Vec<Value> = p
        .pairs
        .iter()
        .map(|[a, b]| {
            let (x, y) = (Trait::new(a.clone()), Trait::new(b.clone()));
            json!({
                "x": x, "y": y,
                "fitness_y_in_x": fitness(spec, &y, &x).ok(),
                "fitness_x_in_y": fitness(spec, &x, &y).ok(),
                "classification": check_iis(spec, &x, &y),
            })
        })
        .collect();
    let report = json!({
        "experiment": "check-assumptions",
        "valid": validation.is_valid(),
        "lattice_points": validation.lattice_points,
        "violations": validation.summary(),
        "u_k": spec.u_k(),
        "traits": traits,
        "pairs": pairs,
    });
    write_json(dir, "report.json", &report, outputs)
}

fn equilibrium(
    p: &EquilibriumParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    positive("horizon", p.horizon)?;
    let x = point(&p.trait_value, spec);
    let window = p.window.unwrap_or([0.5 * p.horizon, p.horizon]);
    if !(0.0 <= window[0] && window[0] < window[1] && window[1] <= p.horizon) {
        return Err(precondition(format!(
            "window {window:?} must be a nonempty interval inside [0, horizon]"
        )));
    }
    let eq = EquilibriumConfig {
        ks: if p.ks.is_empty() {
            vec![spec.k]
        } else {
            p.ks.clone()
        },
        replicates: cfg.replicates,
        horizon: p.horizon,
        window: (window[0], window[1]),
        tolerance: p.tolerance,
        required_fraction: p.required_fraction,
        residual_threshold: p.residual_threshold,
        seed: cfg.seed,
        threads: cfg.threads(),
    };
    let mut reports = equilibrium_experiment(spec, &x, &eq).map_err(precondition)?;
    if p.stationarity {
        reports.extend(stationarity_experiment(spec, &x, &eq).map_err(precondition)?);
    }
    finish(dir, &reports, outputs)
}

fn fixation(
    p: &FixationParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let fx = FixationConfig {
        k: cfg.model.k,
        replicates: cfg.replicates,
        epsilon: p.epsilon,
        horizon: p.horizon,
        seed: cfg.seed,
        threads: cfg.threads(),
        enforce_preconditions: p.enforce_preconditions,
    };
    let (x, y) = (Trait::new(p.resident.clone()), Trait::new(p.mutant.clone()));
    let report = fixation_experiment(&cfg.model, &x, &y, &fx);
    finish(dir, &[report], outputs)
}

fn comparison(
    p: &ComparisonParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let tc = TssVsIbmConfig {
        k: cfg.model.k,
        replicates: cfg.replicates,
        mode: match p.mode {
            ModeChoice::FirstResolution => ComparisonMode::FirstResolution,
            ModeChoice::FirstSubstitution => ComparisonMode::FirstSubstitution,
        },
        horizon: p.horizon,
        tolerance: p.tolerance,
        seed: cfg.seed,
        threads: cfg.threads(),
    };
    let report = tss_vs_ibm(&cfg.model, &point(&p.trait_value, &cfg.model), &tc);
    let mut reports = vec![report];
    if cfg.model.mutation_kernel.is_atomic() {
        let waiting = tss_waiting_experiment(
            &cfg.model,
            &point(&p.trait_value, &cfg.model),
            cfg.replicates,
            cfg.seed,
            cfg.threads(),
        );
        if !waiting.is_refused() {
            reports.push(waiting);
        }
    }
    finish(dir, &reports, outputs)
}

/// `P(b, d, n)` from explicit rates, or from a `mutant` in a `resident`
/// at equilibrium: `b = b(y)`, `d = d(y) + alpha(y, x) n_x`.
fn law(
    spec: &Model,
    birth: Option<f64>,
    death: Option<f64>,
    resident: &Option<Vec<f64>>,
    mutant: &Option<Vec<f64>>,
    initial: u64,
) -> Result<BranchingLaw<f64>, CliError> {
    let (b, d) = match (birth, death, resident, mutant) {
        (Some(b), Some(d), None, None) => (b, d),
        (None, None, Some(x), Some(y)) => {
            let (x, y) = (Trait::new(x.clone()), Trait::new(y.clone()));
            let n = equilibrium_mass(spec, &x).map_err(precondition)?;
            (
                spec.birth_rate(&y),
                spec.death_rate(&y) + spec.alpha(&y, &x) * n,
            )
        }
        _ => {
            return Err(precondition(
                "give either `birth` and `death`, or `resident` and `mutant`",
            ))
        }
    };
    positive("birth", b)?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(precondition(format!(
            "death must be finite and nonnegative, got {d}"
        )));
    }
    if initial == 0 {
        return Err(precondition("initial must be positive"));
    }
    Ok(BranchingLaw::new(b, d, initial))
}

fn branching(
    p: &BranchingParams,
    cfg: &RunConfig,
    dir: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let spec = &cfg.model;
    let (reps, seed, threads) = (cfg.replicates, cfg.seed, cfg.threads());
    let report = match p {
        BranchingParams::Extinction {
            birth,
            death,
            resident,
            mutant,
            initial,
            upper,
            tolerance,
        } => {
            let law = law(spec, *birth, *death, resident, mutant, *initial)?;
            if *upper <= *initial {
                return Err(precondition("upper must exceed initial"));
            }
            branching_extinction_experiment(&law, *upper, reps, *tolerance, seed, threads)
        }
        BranchingParams::Martingale {
            birth,
            death,
            resident,
            mutant,
            initial,
            times,
            upper,
        } => {
            let law = law(spec, *birth, *death, resident, mutant, *initial)?;
            if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(precondition(
                    "times must be a nonempty list of nonnegative numbers",
                ));
            }
            martingale_experiment(&law, times, *upper, reps, seed, threads)
        }
        BranchingParams::Coupling {
            resident,
            mutant,
            epsilon,
            horizon,
        } => {
            let (x, y) = (Trait::new(resident.clone()), Trait::new(mutant.clone()));
            positive("epsilon", *epsilon)?;
            let n = equilibrium_mass(spec, &x).map_err(precondition)?;
            let k = spec.k as f64;
            let region = Region {
                a: k * (n - epsilon),
                b: k * (n + epsilon),
                c: 1.0,
                d: k * epsilon,
            };
            let start = ((n * k).floor() as u64, 1);
            let chain = TwoTypeChain::from_spec(spec, &x, &y, start, region);
            let bounds = lattice_bounds(&chain)
                .ok_or_else(|| precondition("the invasion region contains no lattice point"))?;
            coupling_experiment(&chain, &bounds, reps, *horizon, seed, threads)
        }
        BranchingParams::Exactness {
            x,
            y,
            initial,
            horizon,
        } => {
            let (x, y) = (Trait::new(x.clone()), Trait::new(y.clone()));
            positive("horizon", *horizon)?;
            exactness_experiment(
                spec,
                &x,
                &y,
                (initial[0], initial[1]),
                *horizon,
                reps,
                seed,
                threads,
            )
        }
    };
    finish(dir, &[report], outputs)
}
