//! Run configuration: one TOML document with top-level run settings, a
//! `[model]` table and an optional `[experiment]` table.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use tsslab::model::{
    validate_spec, CompetitionSpec, MutationKernel, MutationRate, RateSpec, Violation,
    DEFAULT_LATTICE_RESOLUTION,
};
use tsslab::{Model, Space, Trait};

pub const DEFAULT_OUTPUT: &str = "tsslab-out";
const DEFAULT_KEY_BITS: u32 = 32;

/// Names accepted in `[experiment] name`, one per subcommand.
pub const EXPERIMENTS: [&str; 8] = [
    "simulate-ibm",
    "simulate-tss",
    "lv-ode",
    "check-assumptions",
    "equilibrium",
    "fixation",
    "tss-vs-ibm",
    "branching-oracle",
];

/// A located problem in the config text. Lines and columns are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Problem {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("syntax error at {0}")]
    Syntax(Problem),
    #[error("invalid config: {}", .0.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
    Semantic(Vec<Problem>),
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MissingFile { .. } => "missing-file",
            Self::Syntax(_) => "syntax",
            Self::Semantic(_) => "semantic",
        }
    }

    pub fn problems(&self) -> Vec<Problem> {
        match self {
            Self::MissingFile { .. } => vec![Problem {
                line: None,
                column: None,
                message: self.to_string(),
            }],
            Self::Syntax(p) => vec![p.clone()],
            Self::Semantic(ps) => ps.clone(),
        }
    }
}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

fn problem(src: &str, span: Option<Range<usize>>, message: impl Into<String>) -> Problem {
    let (line, column) = match span {
        Some(s) => {
            let (l, c) = position(src, s.start);
            (Some(l), Some(c))
        }
        None => (None, None),
    };
    Problem {
        line,
        column,
        message: message.into(),
    }
}

fn from_toml_error(src: &str, e: &toml::de::Error) -> Problem {
    problem(src, e.span(), e.message().trim().to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Spanned<i64>,
    replicates: Option<Spanned<i64>>,
    threads: Option<Spanned<i64>>,
    output: Option<String>,
    model: Spanned<RawModel>,
    experiment: Option<Spanned<toml::Table>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    space: Spanned<Vec<[f64; 2]>>,
    k: Spanned<i64>,
    birth: Spanned<RateSpec<f64>>,
    death: Spanned<RateSpec<f64>>,
    mutation_probability: Spanned<RateSpec<f64>>,
    competition: Spanned<CompetitionSpec<f64>>,
    competition_bounds: Option<Spanned<[f64; 2]>>,
    mutation_kernel: Spanned<MutationKernel<f64>>,
    mutation_rate: Option<Spanned<MutationRate<f64>>>,
    lattice_resolution: Option<Spanned<usize>>,
    key_bits: Option<Spanned<u32>>,
}

/// `initial` entry of `simulate-ibm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialAtom {
    #[serde(rename = "trait")]
    pub trait_value: Vec<f64>,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockChoice {
    Ecological,
    Evolutionary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbmParams {
    /// Empty: one atom at the centre of the trait box at its equilibrium size.
    #[serde(default)]
    pub initial: Vec<InitialAtom>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "yes")]
    pub record_events: bool,
    #[serde(default = "default_clock")]
    pub clock: ClockChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TssParams {
    #[serde(rename = "trait")]
    pub trait_value: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvParams {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Defaults to `(n_x, 0.01)`.
    pub initial: Option<[f64; 2]>,
    #[serde(default = "default_horizon")]
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default)]
    pub traits: Vec<Vec<f64>>,
    /// `[x, y]` pairs to classify.
    #[serde(default)]
    pub pairs: Vec<[Vec<f64>; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumParams {
    #[serde(rename = "trait")]
    pub trait_value: Option<Vec<f64>>,
    /// Defaults to the model's `k`.
    #[serde(default)]
    pub ks: Vec<u64>,
    #[serde(default = "default_eq_horizon")]
    pub horizon: f64,
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_required")]
    pub required_fraction: f64,
    #[serde(default = "default_tolerance")]
    pub residual_threshold: f64,
    #[serde(default = "yes")]
    pub stationarity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixationParams {
    pub resident: Vec<f64>,
    pub mutant: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_fixation_horizon")]
    pub horizon: f64,
    #[serde(default = "yes")]
    pub enforce_preconditions: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    FirstResolution,
    FirstSubstitution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonParams {
    #[serde(rename = "trait")]
    pub trait_value: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub mode: ModeChoice,
    #[serde(default = "default_comparison_horizon")]
    pub horizon: f64,
    #[serde(default = "default_tv")]
    pub tolerance: f64,
}

/// The branching oracle. `extinction` and `martingale` use `P(b, d, n)`
/// with `b`, `d` given directly or taken from a mutant in a resident at
/// equilibrium; `coupling` and `exactness` use the two-type chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BranchingParams {
    Extinction {
        birth: Option<f64>,
        death: Option<f64>,
        resident: Option<Vec<f64>>,
        mutant: Option<Vec<f64>>,
        #[serde(default = "one")]
        initial: u64,
        #[serde(default = "default_upper")]
        upper: u64,
        #[serde(default = "default_branching_tolerance")]
        tolerance: f64,
    },
    Martingale {
        birth: Option<f64>,
        death: Option<f64>,
        resident: Option<Vec<f64>>,
        mutant: Option<Vec<f64>>,
        #[serde(default = "one")]
        initial: u64,
        #[serde(default = "default_times")]
        times: Vec<f64>,
        #[serde(default = "default_upper")]
        upper: u64,
    },
    Coupling {
        resident: Vec<f64>,
        mutant: Vec<f64>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_fixation_horizon")]
        horizon: f64,
    },
    Exactness {
        x: Vec<f64>,
        y: Vec<f64>,
        initial: [u64; 2],
        #[serde(default = "default_exactness_horizon")]
        horizon: f64,
    },
}

fn yes() -> bool {
    true
}
fn one() -> u64 {
    1
}
fn default_horizon() -> f64 {
    100.0
}
fn default_eq_horizon() -> f64 {
    200.0
}
fn default_snapshots() -> usize {
    tsslab::ibm::DEFAULT_SNAPSHOTS
}
fn default_clock() -> ClockChoice {
    ClockChoice::Ecological
}
fn default_step() -> f64 {
    tsslab::lotka_volterra::DEFAULT_STEP
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_required() -> f64 {
    0.94
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_fixation_horizon() -> f64 {
    1e4
}
fn default_mode() -> ModeChoice {
    ModeChoice::FirstResolution
}
fn default_comparison_horizon() -> f64 {
    1e3
}
fn default_tv() -> f64 {
    0.06
}
fn default_upper() -> u64 {
    64
}
fn default_branching_tolerance() -> f64 {
    0.005
}
fn default_times() -> Vec<f64> {
    vec![1.0, 2.0, 5.0]
}
fn default_exactness_horizon() -> f64 {
    20.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Experiment {
    SimulateIbm(IbmParams),
    SimulateTss(TssParams),
    LvOde(LvParams),
    CheckAssumptions(CheckParams),
    Equilibrium(EquilibriumParams),
    Fixation(FixationParams),
    TssVsIbm(ComparisonParams),
    BranchingOracle(BranchingParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SimulateIbm(_) => "simulate-ibm",
            Self::SimulateTss(_) => "simulate-tss",
            Self::LvOde(_) => "lv-ode",
            Self::CheckAssumptions(_) => "check-assumptions",
            Self::Equilibrium(_) => "equilibrium",
            Self::Fixation(_) => "fixation",
            Self::TssVsIbm(_) => "tss-vs-ibm",
            Self::BranchingOracle(_) => "branching-oracle",
        }
    }

    /// Parses `params` (the `[experiment]` table without `name`).
    pub fn parse(name: &str, params: toml::Table) -> Result<Self, String> {
        fn get<P: DeserializeOwned>(t: toml::Table) -> Result<P, String> {
            P::deserialize(toml::Value::Table(t)).map_err(|e| e.message().trim().to_string())
        }
        Ok(match name {
            "simulate-ibm" => Self::SimulateIbm(get(params)?),
            "simulate-tss" => Self::SimulateTss(get(params)?),
            "lv-ode" => Self::LvOde(get(params)?),
            "check-assumptions" => Self::CheckAssumptions(get(params)?),
            "equilibrium" => Self::Equilibrium(get(params)?),
            "fixation" => Self::Fixation(get(params)?),
            "tss-vs-ibm" => Self::TssVsIbm(get(params)?),
            "branching-oracle" => Self::BranchingOracle(get(params)?),
            other => {
                return Err(format!(
                    "unknown experiment `{other}`; expected one of {}",
                    EXPERIMENTS.join(", ")
                ))
            }
        })
    }

    /// Parameters with every default filled in.
    pub fn defaults(name: &str) -> Option<Self> {
        Self::parse(name, toml::Table::new()).ok()
    }

    /// Every trait named in the parameters.
    fn traits(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = Vec::new();
        match self {
            Self::SimulateIbm(p) => out.extend(p.initial.iter().map(|a| &a.trait_value)),
            Self::SimulateTss(p) => out.extend(p.trait_value.as_ref()),
            Self::LvOde(p) => out.extend([&p.x, &p.y]),
            Self::CheckAssumptions(p) => {
                out.extend(p.traits.iter());
                out.extend(p.pairs.iter().flat_map(|[a, b]| [a, b]));
            }
            Self::Equilibrium(p) => out.extend(p.trait_value.as_ref()),
            Self::Fixation(p) => out.extend([&p.resident, &p.mutant]),
            Self::TssVsIbm(p) => out.extend(p.trait_value.as_ref()),
            Self::BranchingOracle(p) => match p {
                BranchingParams::Extinction {
                    resident, mutant, ..
                }
                | BranchingParams::Martingale {
                    resident, mutant, ..
                } => {
                    out.extend(resident.as_ref());
                    out.extend(mutant.as_ref());
                }
                BranchingParams::Coupling {
                    resident, mutant, ..
                } => out.extend([resident, mutant]),
                BranchingParams::Exactness { x, y, .. } => out.extend([x, y]),
            },
        }
        out
    }
}

/// A fully validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub replicates: u64,
    /// `None`: available parallelism.
    pub threads: Option<usize>,
    pub output: PathBuf,
    pub model: Model,
    pub experiment: Option<Experiment>,
}

impl RunConfig {
    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(0)
    }
}

pub const DEFAULT_REPLICATES: u64 = 100;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConfigError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&src)
}

pub fn parse_config_str(src: &str) -> Result<RunConfig, ConfigError> {
    if let Err(e) = toml::from_str::<toml::Table>(src) {
        return Err(ConfigError::Syntax(from_toml_error(src, &e)));
    }
    let raw: RawConfig =
        toml::from_str(src).map_err(|e| ConfigError::Semantic(vec![from_toml_error(src, &e)]))?;

    let mut problems = Vec::new();
    let mut positive = |v: &Spanned<i64>, what: &str| -> u64 {
        if *v.get_ref() <= 0 {
            problems.push(problem(
                src,
                Some(v.span()),
                format!("{what} must be positive"),
            ));
            1
        } else {
            *v.get_ref() as u64
        }
    };
    let seed = positive(&raw.seed, "seed");
    let replicates = raw
        .replicates
        .as_ref()
        .map_or(DEFAULT_REPLICATES, |r| positive(r, "replicates"));
    let threads = match &raw.threads {
        Some(t) if *t.get_ref() < 0 => {
            problems.push(problem(src, Some(t.span()), "threads must be nonnegative"));
            None
        }
        Some(t) if *t.get_ref() == 0 => None,
        Some(t) => Some(*t.get_ref() as usize),
        None => None,
    };

    let (model, model_problems) = build_model(src, raw.model.into_inner());
    problems.extend(model_problems);

    let experiment = match raw.experiment {
        None => None,
        Some(table) => {
            let span = table.span();
            let mut table = table.into_inner();
            match table.remove("name") {
                Some(toml::Value::String(name)) => match Experiment::parse(&name, table) {
                    Ok(e) => {
                        for x in e.traits() {
                            if let Some(msg) = trait_problem(&model.space, x) {
                                problems.push(problem(src, Some(span.clone()), msg));
                            }
                        }
                        Some(e)
                    }
                    Err(msg) => {
                        problems.push(problem(src, Some(span), format!("[experiment]: {msg}")));
                        None
                    }
                },
                _ => {
                    problems.push(problem(
                        src,
                        Some(span),
                        "[experiment] needs a string `name`",
                    ));
                    None
                }
            }
        }
    };

    if !problems.is_empty() {
        return Err(ConfigError::Semantic(problems));
    }
    Ok(RunConfig {
        seed,
        replicates,
        threads,
        output: PathBuf::from(raw.output.unwrap_or_else(|| DEFAULT_OUTPUT.into())),
        model,
        experiment,
    })
}

fn trait_problem(space: &Space, x: &[f64]) -> Option<String> {
    let point = Trait::new(x.to_vec());
    if x.len() != space.dim() {
        Some(format!(
            "trait {x:?} has {} coordinates, trait space has {}",
            x.len(),
            space.dim()
        ))
    } else if !space.contains(&point) {
        Some(format!("trait {x:?} lies outside the trait space"))
    } else {
        None
    }
}

fn build_model(src: &str, raw: RawModel) -> (Model, Vec<Problem>) {
    let mut problems = Vec::new();
    let k = match *raw.k.get_ref() {
        k if k > 0 => k as u64,
        _ => {
            problems.push(problem(
                src,
                Some(raw.k.span()),
                "k must be a positive integer",
            ));
            1
        }
    };
    let model = Model {
        space: Space::new(raw.space.get_ref().clone()),
        birth: raw.birth.get_ref().clone(),
        death: raw.death.get_ref().clone(),
        mutation_probability: raw.mutation_probability.get_ref().clone(),
        competition: raw.competition.get_ref().clone(),
        competition_bounds: raw.competition_bounds.as_ref().map(|b| *b.get_ref()),
        mutation_kernel: raw.mutation_kernel.get_ref().clone(),
        k,
        mutation_rate: raw
            .mutation_rate
            .as_ref()
            .map_or(MutationRate::Off, |r| r.get_ref().clone()),
        lattice_resolution: raw
            .lattice_resolution
            .as_ref()
            .map_or(DEFAULT_LATTICE_RESOLUTION, |r| *r.get_ref()),
        key_bits: raw
            .key_bits
            .as_ref()
            .map_or(DEFAULT_KEY_BITS, |r| *r.get_ref()),
    };
    let report = validate_spec(&model);
    // Growth failures on the whole lattice collapse to one line.
    let growth_everywhere = report.lattice_points > 0
        && report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::GrowthNotPositive { .. }))
            .count()
            == report.lattice_points;
    if growth_everywhere {
        problems.push(problem(
            src,
            Some(raw.birth.span()),
            "b-d>0 fails everywhere",
        ));
    }
    for v in &report.violations {
        if growth_everywhere && matches!(v, Violation::GrowthNotPositive { .. }) {
            continue;
        }
        let span = match v {
            Violation::Shape { field, .. } => match field.as_str() {
                "space" => raw.space.span(),
                "birth" => raw.birth.span(),
                "death" => raw.death.span(),
                "mutation_probability" => raw.mutation_probability.span(),
                _ => raw.competition.span(),
            },
            Violation::GrowthNotPositive { .. } => raw.birth.span(),
            Violation::RateNotFinite { rate, .. } => match rate.as_str() {
                "d" => raw.death.span(),
                "p" => raw.mutation_probability.span(),
                _ => raw.birth.span(),
            },
            Violation::MutationProbability { .. } => raw.mutation_probability.span(),
            Violation::MutationRateTooLarge { .. } | Violation::MutationRateRule { .. } => raw
                .mutation_rate
                .as_ref()
                .map_or(raw.mutation_probability.span(), |r| r.span()),
            Violation::Competition { .. } => raw
                .competition_bounds
                .as_ref()
                .map_or(raw.competition.span(), |b| b.span()),
            Violation::Kernel { .. } => raw.mutation_kernel.span(),
            Violation::SystemSize => raw.k.span(),
        };
        problems.push(problem(src, Some(span), v.to_string()));
    }
    (model, problems)
}
