use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::{
    evaluate_b, run_replicates, wilson_ci, ExperimentReport, ReplicateOutcome, Status, Target,
    TargetBasis,
};
use crate::branching::{
    coupled_domination, extinction_probability, simulate_branching, simulate_two_type,
    BranchingExit, BranchingLaw, BranchingStop, DominationBounds, Region, TwoTypeChain,
    TwoTypeExit, TwoTypeOptions,
};
use crate::ibm::{Control, Engine, Event, EventKind, IbmState, Observer};
use crate::model::{
    check_iis, equilibrium_mass, fitness, invasion_band, IisClass, ModelError, ModelSpec,
    TraitPoint,
};
use crate::population::{MeasureView, PointMeasure, TraitKey};
use crate::tss::{jump_rate, one_step_law, sample_jump, survival_probability, Jump};

const LEVEL: f64 = 0.95;

fn coords(x: &TraitPoint<f64>) -> Vec<f64> {
    x.coords().to_vec()
}

fn resident_count(spec: &ModelSpec<f64>, x: &TraitPoint<f64>) -> Result<u64, ModelError> {
    Ok((equilibrium_mass(spec, x)? * spec.k as f64).floor() as u64)
}

/// Settings shared by the equilibrium and stationarity experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumConfig {
    pub ks: Vec<u64>,
    pub replicates: u64,
    pub horizon: f64,
    /// Averaging window, usually the second half of the horizon.
    pub window: (f64, f64),
    /// Relative half-width of the band around the equilibrium mass.
    pub tolerance: f64,
    /// Fraction of replicates that must land in the band.
    pub required_fraction: f64,
    /// Acceptance threshold for the stationarity residual.
    pub residual_threshold: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self {
            ks: vec![1000],
            replicates: 50,
            horizon: 200.0,
            window: (100.0, 200.0),
            tolerance: 0.05,
            required_fraction: 0.94,
            residual_threshold: 0.05,
            seed: 1,
            threads: 0,
        }
    }
}

/// Time integral of `g(state)` over a window.
struct WindowAverage<G> {
    window: (f64, f64),
    integral: f64,
    g: G,
}

impl<G: FnMut(&IbmState<f64>) -> f64> Observer<f64> for WindowAverage<G> {
    fn interval(&mut self, start: f64, end: f64, state: &IbmState<f64>) {
        let lo = start.max(self.window.0);
        let hi = end.min(self.window.1);
        if lo < hi {
            self.integral += (hi - lo) * (self.g)(state);
        }
    }
}

fn window_average<G: FnMut(&IbmState<f64>) -> f64>(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    count: u64,
    cfg: &EquilibriumConfig,
    rng: &mut crate::SimRng,
    g: G,
) -> Option<f64> {
    let mut engine = Engine::monomorphic(spec, x, count);
    let mut obs = WindowAverage {
        window: cfg.window,
        integral: 0.0,
        g,
    };
    let end = engine.run(cfg.horizon, rng, &mut obs);
    match end {
        crate::ibm::Termination::Extinct { .. } => None,
        _ => Some(obs.integral / (cfg.window.1 - cfg.window.0)),
    }
}

/// Time-averaged total mass of a mutation-free monomorphic population over
/// the window, one report per `K`.
pub fn equilibrium_experiment(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    cfg: &EquilibriumConfig,
) -> Result<Vec<ExperimentReport>, ModelError> {
    let n_hat = equilibrium_mass(spec, x)?;
    let (lo, hi) = (n_hat * (1.0 - cfg.tolerance), n_hat * (1.0 + cfg.tolerance));
    let mut reports = Vec::new();
    for &k in &cfg.ks {
        let started = Instant::now();
        let spec_k = spec.without_mutation().with_k(k);
        let count = resident_count(&spec_k, x)?;
        let averages = run_replicates(cfg.replicates, cfg.seed, cfg.threads, |_, rng| {
            window_average(&spec_k, x, count, cfg, rng, |s| s.mass())
        });
        let outcomes: Vec<ReplicateOutcome> = averages
            .iter()
            .enumerate()
            .map(|(i, a)| match a {
                None => ReplicateOutcome::new(i as u64, "absorbed", None),
                Some(v) if (lo..=hi).contains(v) => {
                    ReplicateOutcome::new(i as u64, "within", Some(*v))
                }
                Some(v) => ReplicateOutcome::new(i as u64, "outside", Some(*v)),
            })
            .collect();
        let within = outcomes.iter().filter(|o| o.label == "within").count() as u64;
        let absorbed = outcomes.iter().filter(|o| o.label == "absorbed").count();
        let survivors: Vec<f64> = averages.iter().flatten().copied().collect();
        let mean = survivors.iter().sum::<f64>() / survivors.len().max(1) as f64;
        let estimate = within as f64 / cfg.replicates as f64;
        reports.push(ExperimentReport {
            experiment: "equilibrium".into(),
            parameters: json!({
                "trait": coords(x), "k": k, "initial_count": count,
                "replicates": cfg.replicates, "horizon": cfg.horizon,
                "window": [cfg.window.0, cfg.window.1], "tolerance": cfg.tolerance,
                "required_fraction": cfg.required_fraction, "seed": cfg.seed,
            }),
            outcomes,
            estimate,
            ci: Some(wilson_ci(within, cfg.replicates, LEVEL).expect("replicates > 0")),
            target: Some(Target {
                value: n_hat,
                basis: TargetBasis::Trivial,
                band: Some((lo, hi)),
            }),
            criterion: format!(
                "fraction of replicates with window-averaged mass in the band >= {}",
                cfg.required_fraction
            ),
            pass: estimate >= cfg.required_fraction,
            status: Status::Completed,
            runtime_seconds: started.elapsed().as_secs_f64(),
            notes: vec![
                format!(
                    "mean window-averaged mass {mean:.6} (bias {:.3e})",
                    mean - n_hat
                ),
                format!("{absorbed} replicates went extinct"),
            ],
        });
    }
    Ok(reports)
}

/// Time average of `evaluate_b(f = 1, F = id)` over the window, averaged in
/// absolute value across replicates, one report per `K`.
pub fn stationarity_experiment(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    cfg: &EquilibriumConfig,
) -> Result<Vec<ExperimentReport>, ModelError> {
    let mut reports = Vec::new();
    for &k in &cfg.ks {
        let started = Instant::now();
        let spec_k = spec.without_mutation().with_k(k);
        let count = resident_count(&spec_k, x)?;
        let averages = run_replicates(cfg.replicates, cfg.seed, cfg.threads, |_, rng| {
            window_average(&spec_k, x, count, cfg, rng, |s| {
                evaluate_b(&spec_k, s, &|_| 1.0, &|_| 1.0)
            })
        });
        let outcomes: Vec<ReplicateOutcome> = averages
            .iter()
            .enumerate()
            .map(|(i, a)| {
                ReplicateOutcome::new(
                    i as u64,
                    if a.is_some() { "survived" } else { "absorbed" },
                    *a,
                )
            })
            .collect();
        let values: Vec<f64> = averages.iter().flatten().map(|v| v.abs()).collect();
        let estimate = values.iter().sum::<f64>() / values.len().max(1) as f64;
        reports.push(ExperimentReport {
            experiment: "stationarity".into(),
            parameters: json!({
                "trait": coords(x), "k": k, "initial_count": count,
                "replicates": cfg.replicates, "horizon": cfg.horizon,
                "window": [cfg.window.0, cfg.window.1], "seed": cfg.seed,
            }),
            outcomes,
            estimate,
            ci: None,
            target: Some(Target {
                value: 0.0,
                basis: TargetBasis::Computed,
                band: Some((0.0, cfg.residual_threshold)),
            }),
            criterion: format!("mean |time-averaged residual| < {}", cfg.residual_threshold),
            pass: estimate < cfg.residual_threshold,
            status: Status::Completed,
            runtime_seconds: started.elapsed().as_secs_f64(),
            notes: vec![],
        });
    }
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixationConfig {
    pub k: u64,
    pub replicates: u64,
    /// Window half-width used for the branching band.
    pub epsilon: f64,
    /// Ecological time after which a replicate counts as undecided.
    pub horizon: f64,
    pub seed: u64,
    pub threads: usize,
    /// Refuse unless `Fit(y, x) > 0` and the pair substitutes.
    pub enforce_preconditions: bool,
}

impl Default for FixationConfig {
    fn default() -> Self {
        Self {
            k: 300,
            replicates: 10_000,
            epsilon: 0.05,
            horizon: 1e4,
            seed: 1,
            threads: 0,
            enforce_preconditions: true,
        }
    }
}

struct Fixation {
    resident: TraitKey,
    mutant: TraitKey,
    outcome: Option<&'static str>,
}

impl Observer<f64> for Fixation {
    fn event(&mut self, _: &Event<f64>, state: &IbmState<f64>) -> Control {
        if state.count_of(&self.mutant) == 0 {
            self.outcome = Some("lost");
        } else if state.count_of(&self.resident) == 0 {
            self.outcome = Some("invaded");
        }
        if self.outcome.is_some() {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}

/// One `y` mutant in an `x` population at equilibrium, mutation off: how
/// often does the resident die out first?
pub fn fixation_experiment(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    y: &TraitPoint<f64>,
    cfg: &FixationConfig,
) -> ExperimentReport {
    let started = Instant::now();
    let spec_k = spec.without_mutation().with_k(cfg.k);
    let mut params = json!({
        "resident": coords(x), "mutant": coords(y), "k": cfg.k,
        "replicates": cfg.replicates, "epsilon": cfg.epsilon,
        "horizon": cfg.horizon, "seed": cfg.seed,
    });
    let fit = match fitness(&spec_k, y, x) {
        Ok(f) => f,
        Err(e) => return ExperimentReport::refused("fixation", params, e.to_string()),
    };
    let class = check_iis(&spec_k, x, y);
    params["fitness"] = json!(fit);
    params["classification"] = json!(class);
    if cfg.enforce_preconditions {
        if !(fit > 0.0) {
            return ExperimentReport::refused(
                "fixation",
                params,
                format!("mutant fitness {fit} is not positive"),
            );
        }
        if class != IisClass::YFixates {
            return ExperimentReport::refused(
                "fixation",
                params,
                format!("pair does not substitute: classified {class:?}"),
            );
        }
    }
    if spec_k.same_trait(x, y) {
        return ExperimentReport::refused(
            "fixation",
            params,
            "resident and mutant coincide".into(),
        );
    }
    let residents = match resident_count(&spec_k, x) {
        Ok(n) => n,
        Err(e) => return ExperimentReport::refused("fixation", params, e.to_string()),
    };
    let q = spec_k.quantizer();
    let (rk, mk) = (q.encode(x), q.encode(y));
    let mut initial = PointMeasure::monomorphic(q, cfg.k, x, residents);
    initial.add_at(mk.clone(), y, 1);
    let labels = run_replicates(cfg.replicates, cfg.seed, cfg.threads, |_, rng| {
        let mut engine = Engine::new(&spec_k, &initial);
        let mut obs = Fixation {
            resident: rk.clone(),
            mutant: mk.clone(),
            outcome: None,
        };
        engine.run(cfg.horizon, rng, &mut obs);
        obs.outcome.unwrap_or("undecided")
    });
    let outcomes: Vec<ReplicateOutcome> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ReplicateOutcome::new(i as u64, l, None))
        .collect();
    let invaded = labels.iter().filter(|l| **l == "invaded").count() as u64;
    let undecided = labels.iter().filter(|l| **l == "undecided").count();
    let estimate = invaded as f64 / cfg.replicates as f64;
    let ci = wilson_ci(invaded, cfg.replicates, LEVEL).expect("replicates > 0");
    let target_value = survival_probability(&spec_k, y, x).unwrap_or(f64::NAN);
    let band = invasion_band(&spec_k, x, y, cfg.epsilon)
        .ok()
        .map(|b| (b.lower, b.upper));
    let pass = band.is_some_and(|(lo, hi)| ci.0 <= hi && lo <= ci.1);
    params["initial_residents"] = json!(residents);
    ExperimentReport {
        experiment: "fixation".into(),
        parameters: params,
        outcomes,
        estimate,
        ci: Some(ci),
        target: Some(Target {
            value: target_value,
            basis: TargetBasis::ClosedForm,
            band,
        }),
        criterion: "95% Wilson interval intersects the branching band".into(),
        pass,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes: vec![format!(
            "{undecided} replicates undecided by t = {} ({:.4} of all)",
            cfg.horizon,
            undecided as f64 / cfg.replicates as f64
        )],
    }
}

/// What the individual-based runs are compared on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonMode {
    /// Trait held once the first mutant has died out or taken over, against
    /// the one-step law of the substitution sequence.
    FirstResolution,
    /// Trait and evolutionary time of the first completed substitution,
    /// against the first jump of the substitution sequence.
    FirstSubstitution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TssVsIbmConfig {
    pub k: u64,
    pub replicates: u64,
    pub mode: ComparisonMode,
    /// Cap on the evolutionary clock.
    pub horizon: f64,
    /// Acceptance bound on the total-variation distance.
    pub tolerance: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TssVsIbmConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            replicates: 2000,
            mode: ComparisonMode::FirstResolution,
            horizon: 1e3,
            tolerance: 0.06,
            seed: 1,
            threads: 0,
        }
    }
}

struct FirstResolution {
    mode: ComparisonMode,
    resident: TraitKey,
    mutant: Option<TraitKey>,
    outcome: Option<(TraitPoint<f64>, f64)>,
}

impl Observer<f64> for FirstResolution {
    fn event(&mut self, event: &Event<f64>, state: &IbmState<f64>) -> Control {
        if self.mutant.is_none() {
            if let EventKind::BirthMutant { child, .. } = &event.kind {
                if *child != self.resident {
                    self.mutant = Some(child.clone());
                }
            }
            return Control::Continue;
        }
        let resident = state.count_of(&self.resident);
        let resolved = match self.mode {
            ComparisonMode::FirstResolution => {
                let key = self.mutant.as_ref().expect("checked above");
                let m = state.count_of(key);
                if m == 0 {
                    Some(self.resident.clone())
                } else if state.total_count() == m {
                    Some(key.clone())
                } else {
                    None
                }
            }
            ComparisonMode::FirstSubstitution => {
                (resident == 0 && state.total_count() > 0).then(|| {
                    state
                        .atoms()
                        .iter()
                        .max_by_key(|a| a.count)
                        .expect("population is nonempty")
                        .key
                        .clone()
                })
            }
        };
        match resolved {
            Some(key) => {
                let point = state
                    .atoms()
                    .iter()
                    .find(|a| a.key == key)
                    .map(|a| a.point.clone())
                    .expect("resolved trait is present");
                self.outcome = Some((point, event.time));
                Control::Stop
            }
            None => Control::Continue,
        }
    }
}

fn total_variation(a: &[(TraitPoint<f64>, f64)], b: &[(TraitPoint<f64>, f64)]) -> f64 {
    let mut support: Vec<&TraitPoint<f64>> = a.iter().map(|p| &p.0).collect();
    for (y, _) in b {
        if !support.contains(&y) {
            support.push(y);
        }
    }
    let mass = |law: &[(TraitPoint<f64>, f64)], y: &TraitPoint<f64>| {
        law.iter()
            .filter(|(z, _)| z == y)
            .map(|(_, w)| w)
            .sum::<f64>()
    };
    0.5 * support
        .iter()
        .map(|y| (mass(a, y) - mass(b, y)).abs())
        .sum::<f64>()
}

/// Individual-based runs with rare mutations against the substitution
/// sequence started from the same trait.
pub fn tss_vs_ibm(
    spec: &ModelSpec<f64>,
    x0: &TraitPoint<f64>,
    cfg: &TssVsIbmConfig,
) -> ExperimentReport {
    let started = Instant::now();
    let spec_k = spec.clone().with_k(cfg.k);
    let mut params = json!({
        "initial_trait": coords(x0), "k": cfg.k, "replicates": cfg.replicates,
        "mode": cfg.mode, "horizon": cfg.horizon, "tolerance": cfg.tolerance, "seed": cfg.seed,
    });
    let u = spec_k.u_k();
    if !(u > 0.0) {
        return ExperimentReport::refused("tss-vs-ibm", params, "mutation rate u_K is zero".into());
    }
    params["u_k"] = json!(u);
    let target_law = match cfg.mode {
        ComparisonMode::FirstResolution => one_step_law(&spec_k, x0).map_err(|e| e.to_string()),
        ComparisonMode::FirstSubstitution => one_step_law(&spec_k, x0)
            .map_err(|e| e.to_string())
            .and_then(|law| {
                let moving: f64 = law.iter().skip(1).map(|(_, w)| w).sum();
                if moving > 0.0 {
                    Ok(law
                        .into_iter()
                        .skip(1)
                        .map(|(y, w)| (y, w / moving))
                        .collect())
                } else {
                    Err("no mutant can invade: the sequence never jumps".to_string())
                }
            }),
    };
    let target_law: Vec<(TraitPoint<f64>, f64)> = match target_law {
        Ok(l) => l,
        Err(reason) => return ExperimentReport::refused("tss-vs-ibm", params, reason),
    };
    let lambda = match jump_rate(&spec_k, x0) {
        Ok(r) => r.value,
        Err(e) => return ExperimentReport::refused("tss-vs-ibm", params, e.to_string()),
    };
    let residents = match resident_count(&spec_k, x0) {
        Ok(n) => n,
        Err(e) => return ExperimentReport::refused("tss-vs-ibm", params, e.to_string()),
    };
    let scale = spec_k.k as f64 * u;
    let resident_key = spec_k.quantizer().encode(x0);
    let results = run_replicates(cfg.replicates, cfg.seed, cfg.threads, |_, rng| {
        let mut engine = Engine::monomorphic(&spec_k, x0, residents);
        let mut obs = FirstResolution {
            mode: cfg.mode,
            resident: resident_key.clone(),
            mutant: None,
            outcome: None,
        };
        engine.run(cfg.horizon / scale, rng, &mut obs);
        obs.outcome.map(|(y, t)| (y, t * scale))
    });
    let decided: Vec<&(TraitPoint<f64>, f64)> = results.iter().flatten().collect();
    let mut empirical: Vec<(TraitPoint<f64>, f64)> = Vec::new();
    for (y, _) in &decided {
        let w = 1.0 / decided.len() as f64;
        match empirical.iter_mut().find(|(z, _)| z == y) {
            Some((_, c)) => *c += w,
            None => empirical.push((y.clone(), w)),
        }
    }
    let tv = total_variation(&empirical, &target_law);
    let outcomes = results
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Some((y, t)) => ReplicateOutcome::new(i as u64, &format!("{:?}", y.coords()), Some(*t)),
            None => ReplicateOutcome::new(i as u64, "undecided", None),
        })
        .collect();
    let mut notes = vec![
        format!(
            "target law {:?}",
            target_law
                .iter()
                .map(|(y, w)| (y.coords().to_vec(), *w))
                .collect::<Vec<_>>()
        ),
        format!(
            "{} of {} replicates undecided",
            results.len() - decided.len(),
            results.len()
        ),
    ];
    if cfg.mode == ComparisonMode::FirstSubstitution && !decided.is_empty() && lambda > 0.0 {
        let mean = decided.iter().map(|(_, t)| t).sum::<f64>() / decided.len() as f64;
        let expected = 1.0 / lambda;
        notes.push(format!(
            "mean substitution time {mean:.6} vs {expected:.6} (relative error {:.4})",
            (mean - expected).abs() / expected
        ));
        params["mean_time"] = json!(mean);
        params["expected_time"] = json!(expected);
    }
    ExperimentReport {
        experiment: "tss-vs-ibm".into(),
        parameters: params,
        outcomes,
        estimate: tv,
        ci: None,
        target: Some(Target {
            value: 0.0,
            basis: TargetBasis::ClosedForm,
            band: Some((0.0, cfg.tolerance)),
        }),
        criterion: format!("total-variation distance < {}", cfg.tolerance),
        pass: !decided.is_empty() && tv < cfg.tolerance,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes,
    }
}

/// Mean waiting time of the first substitution-sequence jump against
/// `1 / lambda(x)`, accepted within three standard errors.
pub fn tss_waiting_experiment(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    replicates: u64,
    seed: u64,
    threads: usize,
) -> ExperimentReport {
    let started = Instant::now();
    let params = json!({"trait": coords(x), "replicates": replicates, "seed": seed});
    let lambda = match jump_rate(spec, x) {
        Ok(r) if r.value > 0.0 => r.value,
        Ok(_) => {
            return ExperimentReport::refused("tss-waiting", params, "jump rate is zero".into())
        }
        Err(e) => return ExperimentReport::refused("tss-waiting", params, e.to_string()),
    };
    let waits = run_replicates(replicates, seed, threads, |_, rng| {
        match sample_jump(spec, x, rng) {
            Ok(Jump::To { waiting, .. }) => Some(waiting),
            _ => None,
        }
    });
    let values: Vec<f64> = waits.iter().flatten().copied().collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let target = 1.0 / lambda;
    ExperimentReport {
        experiment: "tss-waiting".into(),
        parameters: params,
        outcomes: waits
            .iter()
            .enumerate()
            .map(|(i, w)| {
                ReplicateOutcome::new(
                    i as u64,
                    if w.is_some() { "jumped" } else { "absorbed" },
                    *w,
                )
            })
            .collect(),
        estimate: mean,
        ci: Some((mean - 1.96 * se, mean + 1.96 * se)),
        target: Some(Target {
            value: target,
            basis: TargetBasis::Computed,
            band: Some((target - 3.0 * se, target + 3.0 * se)),
        }),
        criterion: "mean within 3 standard errors of 1/lambda".into(),
        pass: (mean - target).abs() < 3.0 * se,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes: vec![format!("lambda = {lambda}")],
    }
}

/// Extinction frequency of `P(b, d, n)`, with `upper` as an absorbing
/// stand-in for escape.
pub fn branching_extinction_experiment(
    law: &BranchingLaw<f64>,
    upper: u64,
    replicates: u64,
    tolerance: f64,
    seed: u64,
    threads: usize,
) -> ExperimentReport {
    let started = Instant::now();
    let stop = BranchingStop::extinction_or(upper, f64::INFINITY);
    let exits = run_replicates(replicates, seed, threads, |_, rng| {
        simulate_branching(law, &stop, rng).exit
    });
    let extinct = exits
        .iter()
        .filter(|e| matches!(e, BranchingExit::Lower { .. }))
        .count() as u64;
    let estimate = extinct as f64 / replicates as f64;
    let target = extinction_probability(law);
    ExperimentReport {
        experiment: "branching-extinction".into(),
        parameters: json!({
            "birth": law.birth, "death": law.death, "initial": law.initial,
            "upper": upper, "replicates": replicates, "seed": seed,
        }),
        outcomes: exits
            .iter()
            .enumerate()
            .map(|(i, e)| match e {
                BranchingExit::Lower { time } => ReplicateOutcome::new(i as u64, "extinct", Some(*time)),
                BranchingExit::Upper { time } => ReplicateOutcome::new(i as u64, "escaped", Some(*time)),
                BranchingExit::Horizon => ReplicateOutcome::new(i as u64, "undecided", None),
            })
            .collect(),
        estimate,
        ci: Some(wilson_ci(extinct, replicates, LEVEL).expect("replicates > 0")),
        target: Some(Target {
            value: target,
            basis: TargetBasis::ClosedForm,
            band: Some((target - tolerance, target + tolerance)),
        }),
        criterion: format!("|estimate - target| < {tolerance}"),
        pass: (estimate - target).abs() < tolerance,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes: vec![format!(
            "escape is declared at {upper} individuals; extinction from there has probability {:.3e}",
            extinction_probability(&BranchingLaw { initial: upper, ..*law })
        )],
    }
}

/// Mean of `(d/b)^{B(t ^ sigma)}` at each time against `(d/b)^{n}`, each
/// within three standard errors. `sigma` exits at 0 or `upper`.
pub fn martingale_experiment(
    law: &BranchingLaw<f64>,
    times: &[f64],
    upper: u64,
    replicates: u64,
    seed: u64,
    threads: usize,
) -> ExperimentReport {
    let started = Instant::now();
    let params = json!({
        "birth": law.birth, "death": law.death, "initial": law.initial,
        "times": times, "upper": upper, "replicates": replicates, "seed": seed,
    });
    let Some(d) = law.death.finite() else {
        return ExperimentReport::refused("martingale", params, "death rate is infinite".into());
    };
    let ratio = d / law.birth;
    let stop = BranchingStop {
        lower: 0,
        upper: Some(upper),
        horizon: times.iter().copied().fold(0.0, f64::max),
        sample_times: times.to_vec(),
    };
    let samples = run_replicates(replicates, seed, threads, |_, rng| {
        simulate_branching(law, &stop, rng).samples
    });
    let target = ratio.powi(law.initial as i32);
    let mut outcomes = Vec::new();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut pass = true;
    for (j, t) in times.iter().enumerate() {
        let values: Vec<f64> = samples.iter().map(|s| ratio.powi(s[j].1 as i32)).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let z = (mean - target).abs() / se;
        worst = worst.max(z);
        pass &= z < 3.0;
        notes.push(format!(
            "t = {t}: mean {mean:.6}, standard error {se:.3e}, |z| = {z:.3}"
        ));
        outcomes.push(ReplicateOutcome::new(
            j as u64,
            &format!("t={t}"),
            Some(mean),
        ));
    }
    ExperimentReport {
        experiment: "martingale".into(),
        parameters: params,
        outcomes,
        estimate: worst,
        ci: None,
        target: Some(Target {
            value: target,
            basis: TargetBasis::Trivial,
            band: None,
        }),
        criterion: "every time point within 3 standard errors; estimate is the largest |z|".into(),
        pass,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes,
    }
}

/// Coupled paths of the chain and its four branching bounds; passes when no
/// path ever breaks domination.
pub fn coupling_experiment(
    chain: &TwoTypeChain<f64>,
    bounds: &DominationBounds<f64>,
    paths: u64,
    horizon: f64,
    seed: u64,
    threads: usize,
) -> ExperimentReport {
    let started = Instant::now();
    let params = json!({
        "chain": chain, "bounds": bounds, "paths": paths, "horizon": horizon, "seed": seed,
    });
    let results = run_replicates(paths, seed, threads, |_, rng| {
        coupled_domination(chain, bounds, horizon, false, rng)
    });
    let mut outcomes = Vec::new();
    let (mut violating, mut breached, mut epochs) = (0u64, 0u64, 0u64);
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(out) => {
                violating += (out.violations > 0) as u64;
                breached += (out.breaches > 0) as u64;
                epochs += out.epochs;
                let label = match out.exit {
                    TwoTypeExit::Left {
                        coordinate, side, ..
                    } => format!("left-{coordinate}-{side:?}").to_lowercase(),
                    TwoTypeExit::Absorbed { .. } => "absorbed".into(),
                    TwoTypeExit::Horizon => "horizon".into(),
                };
                outcomes.push(ReplicateOutcome::new(
                    i as u64,
                    &label,
                    Some(out.violations as f64),
                ));
            }
            Err(e) => {
                return ExperimentReport::refused("coupling", params, e.to_string());
            }
        }
    }
    ExperimentReport {
        experiment: "coupling".into(),
        parameters: params,
        outcomes,
        estimate: violating as f64,
        ci: None,
        target: Some(Target {
            value: 0.0,
            basis: TargetBasis::Trivial,
            band: None,
        }),
        criterion: "no path with a domination violation or a bound breach".into(),
        pass: violating == 0 && breached == 0,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes: vec![format!(
            "{epochs} epochs checked; {breached} paths breached the bounds"
        )],
    }
}

struct PairCounts {
    keys: [TraitKey; 2],
    path: Vec<(f64, u64, u64)>,
}

impl Observer<f64> for PairCounts {
    fn event(&mut self, e: &Event<f64>, s: &IbmState<f64>) -> Control {
        self.path
            .push((e.time, s.count_of(&self.keys[0]), s.count_of(&self.keys[1])));
        Control::Continue
    }
}

/// Runs the two-type chain and the engine on the same streams and counts
/// replicates whose paths differ in any event time or count.
#[allow(clippy::too_many_arguments)]
pub fn exactness_experiment(
    spec: &ModelSpec<f64>,
    x: &TraitPoint<f64>,
    y: &TraitPoint<f64>,
    initial: (u64, u64),
    horizon: f64,
    replicates: u64,
    seed: u64,
    threads: usize,
) -> ExperimentReport {
    let started = Instant::now();
    let spec0 = spec.without_mutation();
    let q = spec0.quantizer();
    let params = json!({
        "x": coords(x), "y": coords(y), "initial": [initial.0, initial.1],
        "horizon": horizon, "replicates": replicates, "seed": seed,
    });
    // The engine orders atoms by key; the chain's type 1 must come first.
    let (kx, ky) = (q.encode(x), q.encode(y));
    if kx == ky {
        return ExperimentReport::refused("exactness", params, "traits coincide".into());
    }
    let ((first, n1), (second, n2)) = if kx < ky {
        ((x, initial.0), (y, initial.1))
    } else {
        ((y, initial.1), (x, initial.0))
    };
    let chain = TwoTypeChain::from_spec(&spec0, first, second, (n1, n2), Region::everything());
    let mut mu = PointMeasure::monomorphic(q.clone(), spec0.k, first, n1);
    mu.add_at(q.encode(second), second, n2);
    let keys = [q.encode(first), q.encode(second)];
    let opts = TwoTypeOptions {
        horizon,
        stop_at_exit: false,
        record_path: true,
    };
    let results = run_replicates(replicates, seed, threads, |i, _| {
        let chain_path = simulate_two_type(&chain, &opts, &mut crate::replicate_rng(seed, i))
            .expect("no region check when not stopping at exit")
            .path;
        let mut engine = Engine::new(&spec0, &mu);
        let mut obs = PairCounts {
            keys: keys.clone(),
            path: vec![(0.0, n1, n2)],
        };
        engine.run(horizon, &mut crate::replicate_rng(seed, i), &mut obs);
        (chain_path == obs.path, obs.path.len() - 1)
    });
    let mismatches = results.iter().filter(|r| !r.0).count();
    let events: usize = results.iter().map(|r| r.1).sum();
    ExperimentReport {
        experiment: "exactness".into(),
        parameters: params,
        outcomes: results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                ReplicateOutcome::new(
                    i as u64,
                    if r.0 { "identical" } else { "different" },
                    Some(r.1 as f64),
                )
            })
            .collect(),
        estimate: mismatches as f64,
        ci: None,
        target: Some(Target {
            value: 0.0,
            basis: TargetBasis::Trivial,
            band: None,
        }),
        criterion: "every replicate path identical".into(),
        pass: mismatches == 0,
        status: Status::Completed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        notes: vec![format!("{events} events compared")],
    }
}
