//! Scenario configuration, method runners, parameter sweeps and the bound
//! validation grid, with CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::allocate_channels;
use crate::bounds::{zeta, DelayBoundTable, LinkBoundParams};
use crate::caching::{baseline_no_d2d, place_all};
use crate::delivery::{evaluate_deliveries, Assignment, DeliveryEvaluation};
use crate::error::{Error, Result};
use crate::exact::{solve_exhaustive, SolveLimits};
use crate::montecarlo::{sample_delay, TrialConfig};
use crate::popularity::PopularityModel;
use crate::topology::{NetworkInstance, NetworkParams};

pub const PRESET_NAME: &str = "default";

/// Environment variable that overrides the sweep worker count.
pub const WORKERS_ENV: &str = "D2DCACHE_WORKERS";

/// Everything needed to build instances from a seed. `Default` is the
/// reference preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_ue: usize,
    pub num_sbs: usize,
    /// Zipf exponent shared by all classes.
    pub beta: f64,
    /// Every class ranks the files identically instead of by a seeded
    /// permutation.
    pub identical_ranks: bool,
    /// Explicit `[user][class]` membership; the three-class preset when
    /// absent.
    pub class_probs: Option<Vec<Vec<f64>>>,
    pub network: NetworkParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_ue: 10,
            num_sbs: 4,
            beta: 2.0,
            identical_ranks: false,
            class_probs: None,
            network: NetworkParams::default(),
        }
    }
}

/// Sweepable parameters: short name and description.
pub const SWEEP_PARAMETERS: &[(&str, &str)] = &[
    ("U", "number of UEs"),
    ("S", "number of SBSs"),
    ("W", "number of channels"),
    ("F", "number of files"),
    ("R", "users per channel"),
    ("C_U", "UE cache (bits)"),
    ("C_S", "SBS cache (bits)"),
    ("C_m", "MBS cache (bits)"),
    ("L", "file length (bits)"),
    ("D_th", "delay threshold (slots)"),
    ("T0", "backhaul delay (slots)"),
    ("P_U", "UE power (W)"),
    ("P_S", "SBS power (W)"),
    ("P_m", "MBS power (W)"),
    ("noise", "noise power (W)"),
    ("alpha", "path-loss exponent"),
    ("B", "channel bandwidth (Hz)"),
    ("tau", "slot duration (s)"),
    ("beta", "Zipf exponent"),
];

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::invalid(format!(
            "{name} needs a non-negative integer, got {value}"
        )))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn get_param(&self, name: &str) -> Result<f64> {
        let n = &self.network;
        Ok(match name {
            "U" => self.num_ue as f64,
            "S" => self.num_sbs as f64,
            "W" => n.num_channels as f64,
            "F" => n.file_count as f64,
            "R" => n.reuse_limit.map_or(f64::NAN, |r| r as f64),
            "C_U" => n.ue_cache_bits,
            "C_S" => n.sbs_cache_bits,
            "C_m" => n.mbs_cache_bits,
            "L" => n.file_length,
            "D_th" => n.delay_threshold,
            "T0" => n.backhaul_delay,
            "P_U" => n.ue_power,
            "P_S" => n.sbs_power,
            "P_m" => n.mbs_power,
            "noise" => n.noise_power,
            "alpha" => n.path_loss_exponent,
            "B" => n.bandwidth,
            "tau" => n.slot_duration,
            "beta" => self.beta,
            _ => return Err(unknown_param(name)),
        })
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let n = &mut self.network;
        match name {
            "U" => self.num_ue = as_count(name, value)?,
            "S" => self.num_sbs = as_count(name, value)?,
            "W" => n.num_channels = as_count(name, value)?,
            "F" => n.file_count = as_count(name, value)?,
            "R" => n.reuse_limit = Some(as_count(name, value)?),
            "C_U" => n.ue_cache_bits = value,
            "C_S" => n.sbs_cache_bits = value,
            "C_m" => n.mbs_cache_bits = value,
            "L" => n.file_length = value,
            "D_th" => n.delay_threshold = value,
            "T0" => n.backhaul_delay = value,
            "P_U" => n.ue_power = value,
            "P_S" => n.sbs_power = value,
            "P_m" => n.mbs_power = value,
            "noise" => n.noise_power = value,
            "alpha" => n.path_loss_exponent = value,
            "B" => n.bandwidth = value,
            "tau" => n.slot_duration = value,
            "beta" => self.beta = value,
            _ => return Err(unknown_param(name)),
        }
        Ok(())
    }

    /// Dotted keys whose values differ from the preset, with their values.
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, String>) {
            match v {
                toml::Value::Table(t) => {
                    for (k, v) in t {
                        let key = if prefix.is_empty() {
                            k.clone()
                        } else {
                            format!("{prefix}.{k}")
                        };
                        flatten(&key, v, out);
                    }
                }
                other => {
                    out.insert(prefix.to_string(), other.to_string());
                }
            }
        }
        let mut mine = BTreeMap::new();
        let mut base = BTreeMap::new();
        flatten("", &toml::Value::try_from(self)?, &mut mine);
        flatten("", &toml::Value::try_from(ScenarioConfig::default())?, &mut base);
        Ok(mine.into_iter().filter(|(k, v)| base.get(k) != Some(v)).collect())
    }

    pub fn popularity(&self, seed: u64) -> Result<PopularityModel> {
        let files = self.network.file_count;
        match &self.class_probs {
            None => PopularityModel::with_default_classes(seed, self.num_ue, files, self.beta, self.identical_ranks),
            Some(probs) => {
                let classes = probs.first().map_or(0, Vec::len);
                let ranks = PopularityModel::random_ranks(seed, files, classes, self.identical_ranks);
                PopularityModel::new(self.beta, ranks, probs.clone())
            }
        }
    }

    pub fn build(&self, seed: u64) -> Result<Scenario> {
        let instance = NetworkInstance::generate(seed, self.num_ue, self.num_sbs, &self.network)?;
        let popularity = self.popularity(seed)?;
        Scenario::new(instance, popularity)
    }
}

fn unknown_param(name: &str) -> Error {
    let known: Vec<&str> = SWEEP_PARAMETERS.iter().map(|(n, _)| *n).collect();
    Error::invalid(format!("unknown parameter {name:?}; known: {}", known.join(", ")))
}

/// An instance with its popularity model and delay-bound table.
#[derive(Debug)]
pub struct Scenario {
    pub instance: NetworkInstance,
    pub popularity: PopularityModel,
    pub table: DelayBoundTable,
}

impl Scenario {
    pub fn new(instance: NetworkInstance, popularity: PopularityModel) -> Result<Self> {
        if popularity.num_users() != instance.num_ue || popularity.num_files() != instance.num_files() {
            return Err(Error::DimensionMismatch(format!(
                "popularity covers {} users x {} files, instance has {} x {}",
                popularity.num_users(),
                popularity.num_files(),
                instance.num_ue,
                instance.num_files()
            )));
        }
        let table = DelayBoundTable::new(&instance)?;
        Ok(Scenario {
            instance,
            popularity,
            table,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Optimal,
    Heuristic,
    NoD2d,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Optimal, Method::Heuristic, Method::NoD2d];

    pub fn name(self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::Heuristic => "heuristic",
            Method::NoD2d => "no_d2d",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "optimal" | "exact" => Ok(Method::Optimal),
            "heuristic" => Ok(Method::Heuristic),
            "no_d2d" | "nod2d" => Ok(Method::NoD2d),
            _ => Err(Error::invalid(format!(
                "unknown method {s:?} (optimal, heuristic, no_d2d)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub assignment: Assignment,
    pub evaluation: DeliveryEvaluation,
    pub sdr: f64,
    pub mean_g: f64,
    pub runtime_s: f64,
}

/// Runs one method on a scenario. The returned assignment carries the
/// implied delivery matrix.
pub fn run_method(scenario: &Scenario, method: Method, limits: &SolveLimits) -> Result<MethodOutcome> {
    let start = Instant::now();
    let Scenario {
        instance,
        popularity,
        table,
    } = scenario;
    let (mut assignment, evaluation) = match method {
        Method::Optimal => {
            let r = solve_exhaustive(instance, popularity, table, limits)?;
            (r.assignment, r.evaluation)
        }
        Method::Heuristic | Method::NoD2d => {
            let alloc = allocate_channels(instance)?;
            let placement = if method == Method::Heuristic {
                place_all(instance, popularity, &alloc.channel_of, table)?
            } else {
                baseline_no_d2d(instance, popularity, &alloc.channel_of, table)?
            };
            let a = Assignment::from_parts(instance, &placement.holder, &alloc.channel_of)?;
            let e = evaluate_deliveries(instance, &a, popularity, table)?;
            (a, e)
        }
    };
    assignment.delivery = evaluation.delivery.clone();
    Ok(MethodOutcome {
        method,
        sdr: evaluation.sdr,
        mean_g: evaluation.mean_bound(popularity),
        assignment,
        evaluation,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSweep {
    pub base: ScenarioConfig,
    pub param: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    #[serde(skip, default)]
    pub limits: SolveLimits,
}

impl ExperimentSweep {
    pub fn new(base: ScenarioConfig, param: &str, values: Vec<f64>, seeds: Vec<u64>, methods: Vec<Method>) -> Self {
        ExperimentSweep {
            base,
            param: param.to_string(),
            values,
            seeds,
            methods,
            limits: SolveLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.get_param(&self.param)?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("a sweep needs at least one seed"));
        }
        if self.values.is_empty() {
            return Err(Error::invalid("a sweep needs at least one value"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("a sweep needs at least one method"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Run,
    Mean,
    Std,
}

/// One CSV row. Aggregate rows leave `seed` empty and count failures in
/// `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RowKind,
    pub param: String,
    pub value: f64,
    pub seed: Option<u64>,
    pub method: Method,
    pub sdr: Option<f64>,
    pub mean_g: Option<f64>,
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub sweep: ExperimentSweep,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn runs(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Run)
    }

    /// Mean SDR per value for `method`, in sweep order.
    pub fn mean_sdr(&self, method: Method) -> Vec<Option<f64>> {
        self.sweep
            .values
            .iter()
            .map(|v| {
                self.rows
                    .iter()
                    .find(|r| r.kind == RowKind::Mean && r.method == method && r.value == *v)
                    .and_then(|r| r.sdr)
            })
            .collect()
    }
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by the environment override, or on the global
/// pool.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers_from_env() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// One row per (value, seed, method), then mean and sample standard
/// deviation per (value, method). A failing point fills `error` and the
/// sweep carries on.
pub fn run_sweep(sweep: &ExperimentSweep) -> Result<SweepResult> {
    sweep.validate()?;
    let jobs: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&v| sweep.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let per_job: Vec<Vec<SweepRow>> = with_workers(|| {
        jobs.par_iter()
            .map(|&(value, seed)| {
                let row = |method: Method, r: Result<MethodOutcome>| match r {
                    Ok(o) => SweepRow {
                        kind: RowKind::Run,
                        param: sweep.param.clone(),
                        value,
                        seed: Some(seed),
                        method,
                        sdr: Some(o.sdr),
                        mean_g: Some(o.mean_g),
                        runtime_s: Some(o.runtime_s),
                        error: None,
                    },
                    Err(e) => SweepRow {
                        kind: RowKind::Run,
                        param: sweep.param.clone(),
                        value,
                        seed: Some(seed),
                        method,
                        sdr: None,
                        mean_g: None,
                        runtime_s: None,
                        error: Some(e.to_string()),
                    },
                };
                let scenario = (|| {
                    let mut cfg = sweep.base.clone();
                    cfg.set_param(&sweep.param, value)?;
                    cfg.build(seed)
                })();
                match scenario {
                    Ok(sc) => sweep
                        .methods
                        .iter()
                        .map(|&m| row(m, run_method(&sc, m, &sweep.limits)))
                        .collect(),
                    Err(e) => {
                        let msg = e.to_string();
                        sweep
                            .methods
                            .iter()
                            .map(|&m| row(m, Err(Error::invalid(msg.clone()))))
                            .collect()
                    }
                }
            })
            .collect()
    })?;

    let mut rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();
    let mut aggregates = Vec::new();
    for &value in &sweep.values {
        for &method in &sweep.methods {
            let ok: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && r.method == method && r.sdr.is_some())
                .collect();
            let failed = sweep.seeds.len() - ok.len();
            let sdr: Vec<f64> = ok.iter().filter_map(|r| r.sdr).collect();
            let g: Vec<f64> = ok.iter().filter_map(|r| r.mean_g).collect();
            let t: Vec<f64> = ok.iter().filter_map(|r| r.runtime_s).collect();
            let error = (failed > 0).then(|| format!("{failed} of {} runs failed", sweep.seeds.len()));
            let agg = |kind, f: fn(&[f64]) -> Option<f64>| SweepRow {
                kind,
                param: sweep.param.clone(),
                value,
                seed: None,
                method,
                sdr: f(&sdr),
                mean_g: f(&g),
                runtime_s: f(&t),
                error: error.clone(),
            };
            aggregates.push(agg(RowKind::Mean, mean));
            aggregates.push(agg(RowKind::Std, sample_std));
        }
    }
    rows.extend(aggregates);
    Ok(SweepResult {
        sweep: sweep.clone(),
        rows,
    })
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "kind",
    "param",
    "value",
    "seed",
    "method",
    "sdr",
    "mean_g",
    "runtime_s",
    "error",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes `#` metadata lines (preset, overrides, sweep definition), the
/// header row and every row.
pub fn write_sweep_csv<W: Write>(mut out: W, result: &SweepResult) -> Result<()> {
    let s = &result.sweep;
    writeln!(out, "# preset: {PRESET_NAME}")?;
    for (k, v) in s.base.overrides()? {
        writeln!(out, "# override: {k} = {v}")?;
    }
    writeln!(out, "# sweep: {} = {:?}", s.param, s.values)?;
    writeln!(out, "# seeds: {:?}", s.seeds)?;
    let methods: Vec<&str> = s.methods.iter().map(|m| m.name()).collect();
    writeln!(out, "# methods: {}", methods.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &result.rows {
        let kind = match r.kind {
            RowKind::Run => "run",
            RowKind::Mean => "mean",
            RowKind::Std => "std",
        };
        w.write_record([
            kind.to_string(),
            r.param.clone(),
            r.value.to_string(),
            opt(&r.seed),
            r.method.to_string(),
            opt(&r.sdr),
            opt(&r.mean_g),
            opt(&r.runtime_s),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundValidationConfig {
    pub thetas: Vec<f64>,
    /// Interferer SNRs for the single-interferer grid; each is paired with
    /// every entry of `thetas`.
    pub interferer_thetas: Vec<f64>,
    pub max_slots: u64,
    pub trials: usize,
    pub load: f64,
    pub seed: u64,
}

impl Default for BoundValidationConfig {
    fn default() -> Self {
        BoundValidationConfig {
            thetas: vec![1.0, 10.0, 100.0, 1000.0],
            interferer_thetas: vec![1.0, 10.0, 100.0],
            max_slots: 10,
            trials: 100_000,
            load: NetworkParams::default().load(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub theta: f64,
    pub interferer: Option<f64>,
    pub slots: u64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound - (empirical - 3 std_error)`.
    pub margin: f64,
    pub flagged: bool,
}

/// Compares the clipped Chernoff bound with the Monte Carlo exceedance
/// `P[T > slots]` on the whole grid.
pub fn run_bound_validation(cfg: &BoundValidationConfig) -> Result<Vec<ValidationRow>> {
    if cfg.thetas.is_empty() || cfg.max_slots == 0 {
        return Err(Error::invalid("bound validation needs thetas and max_slots >= 1"));
    }
    let mut links: Vec<(f64, Option<f64>)> = cfg.thetas.iter().map(|&t| (t, None)).collect();
    for &i in &cfg.interferer_thetas {
        links.extend(cfg.thetas.iter().map(|&t| (t, Some(i))));
    }
    let per_link: Vec<Result<Vec<ValidationRow>>> = with_workers(|| {
        links
            .par_iter()
            .enumerate()
            .map(|(k, &(theta, interferer))| {
                let its: Vec<f64> = interferer.into_iter().collect();
                let params = LinkBoundParams::new(theta, its.clone(), cfg.load)?;
                let seed = cfg.seed.wrapping_add(k as u64);
                let dist = sample_delay(&TrialConfig::new(theta, its, cfg.load, cfg.trials, seed))?;
                (1..=cfg.max_slots)
                    .map(|t| {
                        let bound = zeta(&params, t)?.value.min(1.0);
                        let empirical = dist.exceedance(t);
                        let std_error = dist.exceedance_std_error(t);
                        let margin = bound - (empirical - 3.0 * std_error);
                        Ok(ValidationRow {
                            theta,
                            interferer,
                            slots: t,
                            empirical,
                            std_error,
                            bound,
                            margin,
                            flagged: margin < 0.0,
                        })
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for r in per_link {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn write_validation_csv<W: Write>(out: W, rows: &[ValidationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theta",
        "interferer_theta",
        "T",
        "empirical",
        "std_error",
        "bound",
        "margin",
        "flagged",
    ])?;
    for r in rows {
        w.write_record([
            r.theta.to_string(),
            opt(&r.interferer),
            r.slots.to_string(),
            r.empirical.to_string(),
            r.std_error.to_string(),
            r.bound.to_string(),
            r.margin.to_string(),
            r.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A generated instance as written by the `generate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub instance: NetworkInstance,
    pub popularity: PopularityModel,
}

impl InstanceFile {
    pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        Ok(InstanceFile {
            seed,
            instance: NetworkInstance::generate(seed, config.num_ue, config.num_sbs, &config.network)?,
            popularity: config.popularity(seed)?,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        Scenario::new(self.instance, self.popularity)
    }
}

/// An assignment with the method and objective that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: String,
    pub sdr: f64,
    pub assignment: Assignment,
}

impl SolutionFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig {
            num_ue: 4,
            num_sbs: 1,
            ..ScenarioConfig::default()
        };
        c.network.file_count = 6;
        c.network.num_channels = 2;
        c
    }

    #[test]
    fn params_round_trip_through_names() {
        let mut c = ScenarioConfig::default();
        for (name, _) in SWEEP_PARAMETERS {
            c.set_param(name, 7.0).unwrap();
            assert_eq!(c.get_param(name).unwrap(), 7.0, "{name}");
        }
        assert!(c.set_param("nope", 1.0).is_err());
        assert!(c.set_param("U", 2.5).is_err());
    }

    #[test]
    fn overrides_list_changed_keys_only() {
        assert!(ScenarioConfig::default().overrides().unwrap().is_empty());
        let mut c = ScenarioConfig::default();
        c.set_param("C_U", 0.0).unwrap();
        c.set_param("U", 22.0).unwrap();
        let keys: Vec<String> = c.overrides().unwrap().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["network.ue_cache_bits", "num_ue"]);
    }

    #[test]
    fn config_toml_round_trip() {
        let mut c = small();
        c.network.reuse_limit = Some(2);
        let back = ScenarioConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(ScenarioConfig::from_toml("num_ue = 3\nbogus = 1\n").is_err());
        let partial = ScenarioConfig::from_toml("[network]\nfile_count = 7\n").unwrap();
        assert_eq!(partial.network.file_count, 7);
        assert_eq!(partial.num_ue, 10);
    }

    #[test]
    fn sweep_rows_and_aggregates() {
        let sweep = ExperimentSweep::new(
            small(),
            "C_U",
            vec![0.0, 100.0],
            vec![1, 2],
            vec![Method::Heuristic, Method::NoD2d],
        );
        let r = run_sweep(&sweep).unwrap();
        assert_eq!(r.runs().count(), 2 * 2 * 2);
        assert_eq!(r.rows.len(), 8 + 2 * 2 * 2);
        for row in r.runs() {
            let s = row.sdr.unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
        let again = run_sweep(&sweep).unwrap();
        let strip = |rows: &[SweepRow]| rows.iter().map(|r| (r.sdr, r.mean_g, r.seed)).collect::<Vec<_>>();
        assert_eq!(strip(&r.rows), strip(&again.rows));
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &r).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains("# override: network.file_count = 6"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + r.rows.len());
    }

    #[test]
    fn failing_points_are_recorded() {
        let sweep = ExperimentSweep::new(small(), "alpha", vec![1.0, 3.0], vec![0], vec![Method::Heuristic]);
        let r = run_sweep(&sweep).unwrap();
        let bad = r.runs().find(|row| row.value == 1.0).unwrap();
        assert!(bad.error.is_some() && bad.sdr.is_none());
        assert!(r.runs().find(|row| row.value == 3.0).unwrap().sdr.is_some());
    }

    #[test]
    fn instance_file_round_trip() {
        let f = InstanceFile::generate(&small(), 5).unwrap();
        let back = InstanceFile::from_toml(&f.to_toml().unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn validation_grid_is_clean_for_strong_links() {
        let cfg = BoundValidationConfig {
            thetas: vec![10.0, 1e6],
            interferer_thetas: vec![10.0],
            max_slots: 4,
            trials: 20_000,
            ..BoundValidationConfig::default()
        };
        let rows = run_bound_validation(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 4 * 2);
        assert!(rows.iter().all(|r| !r.flagged));
        let strong = rows.iter().find(|r| r.theta == 1e6 && r.interferer.is_none()).unwrap();
        assert!(strong.bound < 1e-3 && strong.empirical < 1e-3);
    }
}
