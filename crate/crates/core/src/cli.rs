//! Experiment configs, dispatch, run reports and CSV side tables.
//!
//! Configs are flat `key = value` text; `#` starts a comment. The experiment
//! named in the config picks the pipeline, so one file reproduces one run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::constructions::{
    default_schedule, make_comb, make_h_s, make_interval_example, make_l2_counterexample,
    make_random_frostman, product_lattice_defect, CantorSpec, Keep,
};
use crate::dyadic_sets::{covering_number, projection_scan, DyadicGridSet};
use crate::error::{Error, Result};
use crate::flattening_lab::{
    run_base_case, run_flattening, run_induction_chain, run_keystep_scan, run_level_sets,
    run_theorem_second, Verdict, VerdictKind,
};
use crate::measure_grid::{cell_width, pushforward_affine, GridMeasure};
use crate::numeric::exact_log2;
use crate::spectral::{decay_profile_of, fourier_at, product_fourier};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "DECAYLAB_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "decaylab-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BaseCase,
    Decay,
    Flatten,
    LevelSets,
    Induction,
    Theorem2,
    Keystep,
    Project,
    Counterexample,
    Hset,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::BaseCase,
        Experiment::Decay,
        Experiment::Flatten,
        Experiment::LevelSets,
        Experiment::Induction,
        Experiment::Theorem2,
        Experiment::Keystep,
        Experiment::Project,
        Experiment::Counterexample,
        Experiment::Hset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BaseCase => "base-case",
            Experiment::Decay => "decay",
            Experiment::Flatten => "flatten",
            Experiment::LevelSets => "level-sets",
            Experiment::Induction => "induction",
            Experiment::Theorem2 => "theorem2",
            Experiment::Keystep => "keystep",
            Experiment::Project => "project",
            Experiment::Counterexample => "counterexample",
            Experiment::Hset => "hset",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Allowed number of inputs, inclusive.
    fn input_range(self) -> (usize, usize) {
        match self {
            Experiment::BaseCase | Experiment::Flatten | Experiment::Keystep | Experiment::Project => (2, 2),
            Experiment::Decay => (1, 2),
            Experiment::LevelSets => (1, 1),
            Experiment::Induction => (3, usize::MAX),
            Experiment::Theorem2 => (2, usize::MAX),
            Experiment::Counterexample | Experiment::Hset => (0, 0),
        }
    }

    fn params(self) -> &'static [Param] {
        use Kind::*;
        macro_rules! p {
            ($key:expr, $kind:expr, $req:expr) => {
                Param { key: $key, kind: $kind, required: $req }
            };
        }
        match self {
            Experiment::BaseCase => &[
                p!("s", Real, true),
                p!("t", Real, true),
                p!("delta", Dyadic, false),
                p!("n_samples", Count, false),
                p!("band", Band, false),
            ],
            Experiment::Decay => &[p!("band", Band, false), p!("n_samples", Count, false)],
            Experiment::Flatten => &[
                p!("s", Real, true),
                p!("t", Real, true),
                p!("delta", Dyadic, false),
                p!("kappa", Positive, false),
                p!("k_max", Count, false),
            ],
            Experiment::LevelSets => &[p!("r", Dyadic, false)],
            Experiment::Induction => &[
                p!("delta", Dyadic, false),
                p!("k", Count, false),
                p!("n_samples", Count, false),
                p!("exponents", Reals, false),
                p!("fixture_rhs_bias", Real, false),
            ],
            Experiment::Theorem2 => &[
                p!("sigma", Unit, true),
                p!("c0", Positive, false),
                p!("delta", Dyadic, false),
                p!("n_samples", Count, false),
            ],
            Experiment::Keystep => &[
                p!("s", Real, true),
                p!("t", Real, true),
                p!("delta", Dyadic, false),
                p!("eps", Positive, false),
                p!("c", Positive, false),
                p!("tau", Real, false),
            ],
            Experiment::Project => &[p!("s", Real, true), p!("t", Real, true), p!("c", Positive, false)],
            Experiment::Counterexample => &[
                p!("variant", Choice(&["l2", "interval"]), false),
                p!("s", Real, false),
                p!("delta", Dyadic, false),
                p!("c", Positive, false),
            ],
            Experiment::Hset => &[
                p!("s", Unit, true),
                p!("schedule", Counts, false),
                p!("product_s", Unit, false),
            ],
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Real,
    Positive,
    /// In (0, 1].
    Unit,
    /// A positive power of two.
    Dyadic,
    Count,
    /// `lo:hi` with `1 <= lo < hi`.
    Band,
    Reals,
    Counts,
    Choice(&'static [&'static str]),
}

struct Param {
    key: &'static str,
    kind: Kind,
    required: bool,
}

const RESERVED: [&str; 7] = ["schema_version", "experiment", "scale", "seed", "inputs", "output_dir", "threads"];

/// Numbers may be written as decimals, `a/b`, or `a^b` (e.g. `2^-10`).
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = if let Some((a, b)) = s.split_once('^') {
        a.trim().parse::<f64>().ok()?.powf(b.trim().parse::<f64>().ok()?)
    } else if let Some((a, b)) = s.split_once('/') {
        a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?
    } else {
        s.parse::<f64>().ok()?
    };
    v.is_finite().then_some(v)
}

fn check_kind(kind: Kind, key: &str, v: &str) -> std::result::Result<(), String> {
    let num = || parse_number(v).ok_or_else(|| format!("`{key}` = `{v}` is not a number"));
    match kind {
        Kind::Real => num().map(|_| ()),
        Kind::Positive => match num()? {
            x if x > 0.0 => Ok(()),
            _ => Err(format!("`{key}` must be positive, got {v}")),
        },
        Kind::Unit => match num()? {
            x if x > 0.0 && x <= 1.0 => Ok(()),
            _ => Err(format!("`{key}` in (0,1] required, got {v}")),
        },
        Kind::Dyadic => {
            let x = num()?;
            if exact_log2(x).is_some() {
                Ok(())
            } else {
                Err(format!("`{key}` = {v} is not a dyadic scale (power of two)"))
            }
        }
        Kind::Count => v
            .parse::<u64>()
            .map(|_| ())
            .map_err(|_| format!("`{key}` must be a nonnegative integer, got {v}")),
        Kind::Band => {
            let parts: Vec<Option<f64>> = v.split(':').map(parse_number).collect();
            match parts.as_slice() {
                [Some(a), Some(b)] if *a >= 1.0 && b > a => Ok(()),
                _ => Err(format!("`{key}` must be lo:hi with 1 <= lo < hi, got {v}")),
            }
        }
        Kind::Reals => {
            if v.split(',').all(|x| parse_number(x).is_some()) {
                Ok(())
            } else {
                Err(format!("`{key}` must be a comma-separated list of numbers, got {v}"))
            }
        }
        Kind::Counts => {
            if v.split(',').all(|x| x.trim().parse::<u64>().is_ok()) {
                Ok(())
            } else {
                Err(format!("`{key}` must be a comma-separated list of integers, got {v}"))
            }
        }
        Kind::Choice(options) => {
            if options.contains(&v) {
                Ok(())
            } else {
                Err(format!("`{key}` must be one of {options:?}, got {v}"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub scale: u32,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub params: BTreeMap<String, String>,
    pub output_dir: Option<String>,
    pub threads: Option<usize>,
}

struct Entry {
    /// 0 for command-line overrides.
    line: usize,
    key: String,
    value: String,
}

fn location(line: usize) -> String {
    if line == 0 {
        "--param".into()
    } else {
        format!("line {line}")
    }
}

fn tokenize(text: &str, violations: &mut Vec<String>) -> Vec<Entry> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            violations.push(format!("line {line}: expected `key = value`, got `{body}`"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            violations.push(format!("line {line}: empty key or value"));
            continue;
        }
        if let Some(prev) = entries.iter().find(|e| e.key == k) {
            violations.push(format!(
                "line {line}: duplicate key `{k}` (first defined at line {})",
                prev.line
            ));
            continue;
        }
        entries.push(Entry { line, key: k.to_string(), value: v.to_string() });
    }
    entries
}

fn validate(entries: Vec<Entry>, mut violations: Vec<String>) -> Result<ExperimentConfig> {
    let get = |k: &str| entries.iter().find(|e| e.key == k);
    if let Some(e) = get("schema_version") {
        if e.value != SCHEMA_VERSION.to_string() {
            violations.push(format!(
                "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                location(e.line),
                e.value
            ));
        }
    }
    let experiment = match get("experiment") {
        None => {
            violations.push("missing required key `experiment`".into());
            None
        }
        Some(e) => {
            let x = Experiment::from_name(&e.value);
            if x.is_none() {
                let names: Vec<&str> = Experiment::ALL.iter().map(|x| x.name()).collect();
                violations.push(format!(
                    "{}: unknown experiment `{}`; expected one of {}",
                    location(e.line),
                    e.value,
                    names.join(", ")
                ));
            }
            x
        }
    };
    let scale = match get("scale") {
        None => {
            violations.push("missing required key `scale`".into());
            0
        }
        Some(e) => match e.value.parse::<u32>() {
            Ok(m) if (1..=30).contains(&m) => m,
            _ => {
                violations.push(format!(
                    "{}: `scale` must be a grid level in 1..=30, got {}",
                    location(e.line),
                    e.value
                ));
                0
            }
        },
    };
    let seed = match get("seed") {
        None => 0,
        Some(e) => e.value.parse::<u64>().unwrap_or_else(|_| {
            violations.push(format!("{}: `seed` must be a nonnegative integer", location(e.line)));
            0
        }),
    };
    let threads = match get("threads") {
        None => None,
        Some(e) => match e.value.parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                violations.push(format!("{}: `threads` must be a positive integer", location(e.line)));
                None
            }
        },
    };
    let inputs: Vec<String> = match get("inputs") {
        None => Vec::new(),
        Some(e) => e
            .value
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    if let Some(e) = get("inputs") {
        for spec in &inputs {
            if let Err(msg) = InputSpec::parse(spec) {
                violations.push(format!("{}: input `{spec}`: {msg}", location(e.line)));
            }
        }
    }
    let output_dir = get("output_dir").map(|e| e.value.clone());
    let mut params = BTreeMap::new();
    if let Some(x) = experiment {
        let specs = x.params();
        for e in &entries {
            if RESERVED.contains(&e.key.as_str()) {
                continue;
            }
            match specs.iter().find(|p| p.key == e.key) {
                None => violations.push(format!(
                    "{}: unknown key `{}` for experiment {}",
                    location(e.line),
                    e.key,
                    x.name()
                )),
                Some(p) => match check_kind(p.kind, &e.key, &e.value) {
                    Ok(()) => {
                        params.insert(e.key.clone(), e.value.clone());
                    }
                    Err(msg) => violations.push(format!("{}: {msg}", location(e.line))),
                },
            }
        }
        for p in specs.iter().filter(|p| p.required) {
            if get(p.key).is_none() {
                violations.push(format!("missing required parameter `{}` for {}", p.key, x.name()));
            }
        }
        let (lo, hi) = x.input_range();
        if !inputs.is_empty() && (inputs.len() < lo || inputs.len() > hi) {
            violations.push(format!(
                "{} takes {} inputs, got {}",
                x.name(),
                if hi == usize::MAX { format!("at least {lo}") } else if lo == hi { lo.to_string() } else { format!("{lo} to {hi}") },
                inputs.len()
            ));
        }
    }
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    Ok(ExperimentConfig {
        experiment: experiment.expect("checked above"),
        scale,
        seed,
        inputs,
        params,
        output_dir,
        threads,
    })
}

/// Parses and validates a config, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &[])
}

/// Like [`parse_config`], with `key=value` overrides applied on top.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut violations = Vec::new();
    let mut entries = tokenize(text, &mut violations);
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            violations.push(format!("--param: expected key=value, got `{o}`"));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        match entries.iter_mut().find(|e| e.key == k) {
            Some(e) => {
                e.value = v;
                e.line = 0;
            }
            None => entries.push(Entry { line: 0, key: k, value: v }),
        }
    }
    validate(entries, violations)
}

impl ExperimentConfig {
    /// Canonical text form; `parse_config(serialize())` returns `self`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
        let _ = writeln!(out, "experiment = {}", self.experiment.name());
        let _ = writeln!(out, "scale = {}", self.scale);
        let _ = writeln!(out, "seed = {}", self.seed);
        if !self.inputs.is_empty() {
            let _ = writeln!(out, "inputs = {}", self.inputs.join(", "));
        }
        if let Some(d) = &self.output_dir {
            let _ = writeln!(out, "output_dir = {d}");
        }
        if let Some(n) = self.threads {
            let _ = writeln!(out, "threads = {n}");
        }
        for (k, v) in &self.params {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn num(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).and_then(|v| parse_number(v)).unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> usize {
        self.params.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }

    fn band(&self, key: &str) -> Option<(f64, f64)> {
        let v = self.params.get(key)?;
        let (a, b) = v.split_once(':')?;
        Some((parse_number(a)?, parse_number(b)?))
    }

    fn reals(&self, key: &str) -> Option<Vec<f64>> {
        let v = self.params.get(key)?;
        v.split(',').map(parse_number).collect()
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.params.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    /// Default scale for regularization: three levels above the grid.
    fn delta(&self) -> f64 {
        self.num("delta", cell_width(self.scale.saturating_sub(3)))
    }
}

// ------------------------------------------------------------------ inputs

#[derive(Clone, Debug, PartialEq)]
pub enum InputSpec {
    Uniform(f64, f64),
    Point(f64),
    /// Missing seed means config seed plus input index.
    Cantor { block: u32, keep: u32, depth: u32, seed: Option<u64> },
    Comb { r: f64, c: f64, shift: f64 },
    Interval { s: f64, delta: f64, c: f64 },
    File(String),
}

impl InputSpec {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let nums = |xs: &[&str]| -> std::result::Result<Vec<f64>, String> {
            xs.iter()
                .map(|x| parse_number(x).ok_or_else(|| format!("`{x}` is not a number")))
                .collect()
        };
        let ints = |xs: &[&str]| -> std::result::Result<Vec<u64>, String> {
            xs.iter()
                .map(|x| x.parse::<u64>().map_err(|_| format!("`{x}` is not an integer")))
                .collect()
        };
        match parts.as_slice() {
            ["uniform", a, b] => {
                let v = nums(&[a, b])?;
                if v[0] < v[1] {
                    Ok(InputSpec::Uniform(v[0], v[1]))
                } else {
                    Err("uniform:a:b needs a < b".into())
                }
            }
            ["point", x] => Ok(InputSpec::Point(nums(&[x])?[0])),
            ["cantor", rest @ ..] if rest.len() == 3 || rest.len() == 4 => {
                let v = ints(rest)?;
                Ok(InputSpec::Cantor {
                    block: v[0] as u32,
                    keep: v[1] as u32,
                    depth: v[2] as u32,
                    seed: v.get(3).copied(),
                })
            }
            ["comb", rest @ ..] if rest.len() == 2 || rest.len() == 3 => {
                let v = nums(rest)?;
                Ok(InputSpec::Comb { r: v[0], c: v[1], shift: v.get(2).copied().unwrap_or(0.0) })
            }
            ["interval", s, d, c] => {
                let v = nums(&[s, d, c])?;
                Ok(InputSpec::Interval { s: v[0], delta: v[1], c: v[2] })
            }
            ["file", path] => Ok(InputSpec::File(path.to_string())),
            _ => Err("expected uniform:a:b, point:x, cantor:D:keep:depth[:seed], comb:r:c[:shift], interval:s:delta:c or file:path".into()),
        }
    }

    /// Dimension hint used for default exponents.
    fn dimension(&self) -> f64 {
        match self {
            InputSpec::Cantor { block, keep, .. } => (*keep as f64).log2() / *block as f64,
            InputSpec::Point(_) => 0.0,
            _ => 1.0,
        }
    }

    /// Builds the measure at `level`, refining constructions that come with
    /// a coarser native grid.
    pub fn build(&self, level: u32, default_seed: u64) -> Result<GridMeasure> {
        let native = match self {
            InputSpec::Uniform(a, b) => return GridMeasure::uniform(*a, *b, level),
            InputSpec::Point(x) => return GridMeasure::point_mass(*x, level),
            InputSpec::Cantor { block, keep, depth, seed } => {
                let spec = CantorSpec {
                    block: *block,
                    keep: Keep::Fixed(*keep),
                    depth: *depth,
                    seed: seed.unwrap_or(default_seed),
                };
                make_random_frostman(&spec)?.measure
            }
            InputSpec::Comb { r, c, shift } => {
                let comb = make_comb(*r, *c)?.measure;
                if *shift != 0.0 {
                    pushforward_affine(&comb, 1.0, *shift)?
                } else {
                    comb
                }
            }
            InputSpec::Interval { s, delta, c } => make_interval_example(*s, *delta, *c)?.measure,
            InputSpec::File(path) => GridMeasure::from_text(&std::fs::read_to_string(path)?)?,
        };
        if native.level() > level {
            return Err(Error::Precondition(format!(
                "input needs grid level {} but scale is {level}",
                native.level()
            )));
        }
        native.refine(level)
    }
}

fn build_inputs(cfg: &ExperimentConfig, defaults: &[&str]) -> Result<(Vec<InputSpec>, Vec<GridMeasure>)> {
    let raw: Vec<String> = if cfg.inputs.is_empty() {
        defaults.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.inputs.clone()
    };
    let specs: Vec<InputSpec> = raw
        .iter()
        .map(|s| InputSpec::parse(s).map_err(|m| Error::Config(vec![format!("input `{s}`: {m}")])))
        .collect::<Result<_>>()?;
    let measures = specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.build(cfg.scale, cfg.seed + i as u64))
        .collect::<Result<_>>()?;
    Ok((specs, measures))
}

fn support_set(mu: &GridMeasure) -> Result<DyadicGridSet> {
    let cells = mu
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, _)| mu.offset() + i as i64)
        .collect();
    DyadicGridSet::from_cells_1d(mu.level(), cells)
}

// ----------------------------------------------------------------- reports

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub seed: u64,
    /// Canonical config text after overrides.
    pub config: String,
    pub overrides: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<String>,
    pub results: Value,
}

impl RunReport {
    /// 1 when an exact-mathematics verdict failed, else 0.
    pub fn exit_code(&self) -> i32 {
        let exact_failed = self
            .verdicts
            .iter()
            .any(|v| v.kind == VerdictKind::Exact && !v.pass);
        i32::from(exact_failed)
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<Table>,
    /// Wall time per stage in seconds; kept out of the report so reports
    /// stay byte-identical across runs.
    pub timings: Vec<(String, f64)>,
}

fn table(name: &str, contents: String) -> Table {
    Table { name: name.to_string(), contents }
}

struct Outcome {
    results: Value,
    verdicts: Vec<Verdict>,
    tables: Vec<Table>,
}

fn csv_rows<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let scale = cfg.scale;
    match cfg.experiment {
        Experiment::BaseCase => {
            let (_, ms) = build_inputs(cfg, &["uniform:1:2", "uniform:1:2"])?;
            let r = run_base_case(
                &ms[0],
                &ms[1],
                cfg.num("s", 1.0),
                cfg.num("t", 1.0),
                cfg.delta(),
                cfg.count("n_samples", 64),
                cfg.band("band"),
            )?;
            let mut tables = vec![table(
                "base_case.csv",
                csv_rows(
                    "xi,magnitude",
                    r.xi_samples.iter().zip(&r.magnitudes).map(|(x, m)| format!("{x:.12e},{m:.12e}")),
                ),
            )];
            if let Some(p) = &r.profile {
                tables.push(table("decay.csv", p.to_csv()));
                tables.push(table("decay.json", pretty(&p.sidecar())?));
            }
            Ok(Outcome { verdicts: r.verdicts.clone(), results: serde_json::to_value(&r)?, tables })
        }
        Experiment::Decay => {
            let (_, ms) = build_inputs(cfg, &["uniform:1:2"])?;
            let band = cfg.band("band").unwrap_or((16.0, 256.0));
            let n = cfg.count("n_samples", 32);
            let p = match ms.as_slice() {
                [mu] => decay_profile_of(|x| fourier_at(mu, x), band, n)?,
                [mu, nu] => decay_profile_of(|x| product_fourier(mu, nu, x), band, n)?,
                _ => unreachable!("input count validated"),
            };
            let verdicts = vec![Verdict::new(
                "decay-fit",
                VerdictKind::Evidence,
                !p.degenerate,
                Some(p.tau_hat),
                format!("{} of {} samples below the magnitude floor", p.floor_hits, n),
            )];
            Ok(Outcome {
                verdicts,
                tables: vec![table("decay.csv", p.to_csv()), table("decay.json", pretty(&p.sidecar())?)],
                results: serde_json::to_value(&p)?,
            })
        }
        Experiment::Flatten => {
            let (_, ms) = build_inputs(cfg, &["uniform:-1:1", "uniform:-1:1"])?;
            let tr = run_flattening(
                &ms[0],
                &ms[1],
                cfg.num("s", 0.5),
                cfg.num("t", 0.5),
                cfg.delta(),
                cfg.count("k_max", 4) as u32,
                cfg.num("kappa", 0.1),
            )?;
            Ok(Outcome {
                verdicts: tr.verdicts.clone(),
                tables: vec![table("flatten.csv", tr.to_csv())],
                results: serde_json::to_value(&tr)?,
            })
        }
        Experiment::LevelSets => {
            let (_, ms) = build_inputs(cfg, &["uniform:0:1"])?;
            let r = run_level_sets(&ms[0], cfg.num("r", cell_width(scale.saturating_sub(2))))?;
            let verdicts = vec![
                Verdict::new(
                    "sandwich-upper",
                    VerdictKind::Bound,
                    r.c_upper <= 8.0,
                    Some(r.c_upper),
                    "sum_{j>=1} 2^j 1_{A_j} <= C Lambda_4r with C <= 8".into(),
                ),
                Verdict::new(
                    "sandwich-lower",
                    VerdictKind::Exact,
                    r.c_lower <= 1.0 + 1e-12,
                    Some(r.c_lower),
                    "Lambda_r <= sum 2^j 1_{A_j}".into(),
                ),
            ];
            Ok(Outcome {
                verdicts,
                tables: vec![table(
                    "level_sets.csv",
                    csv_rows("j,count", r.classes.iter().map(|(j, c)| format!("{j},{c}"))),
                )],
                results: serde_json::to_value(&r)?,
            })
        }
        Experiment::Induction => {
            let (specs, ms) = build_inputs(cfg, &["uniform:1:2", "uniform:1:2", "uniform:1:2"])?;
            let exps = cfg
                .reals("exponents")
                .unwrap_or_else(|| specs.iter().map(InputSpec::dimension).collect());
            let r = run_induction_chain(
                &ms,
                &exps,
                cfg.num("delta", cell_width(scale)),
                cfg.count("k", 1) as u32,
                cfg.count("n_samples", 64),
                cfg.num("fixture_rhs_bias", 0.0),
            )?;
            let rows = r.samples.iter().map(|c| {
                format!("{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", c.xi, c.rescaled_xi, c.lhs, c.middle, c.rhs)
            });
            Ok(Outcome {
                verdicts: r.verdicts.clone(),
                tables: vec![table("induction.csv", csv_rows("xi,rescaled_xi,lhs,middle,rhs", rows))],
                results: serde_json::to_value(&r)?,
            })
        }
        Experiment::Theorem2 => {
            let sigma = cfg.num("sigma", 1.0);
            let c0 = cfg.num("c0", 2.0);
            let ell = (c0 / sigma).ceil() as usize;
            let defaults = vec!["uniform:1:2"; 2 * ell];
            let (_, ms) = build_inputs(cfg, &defaults)?;
            let r = run_theorem_second(&ms, sigma, cfg.delta(), c0, cfg.count("n_samples", 32))?;
            let rows = r.stage_reports.iter().map(|s| {
                format!("{},{},{:.12e},{:.4},{:.6e}", s.stage, s.cells, s.energy_sigma, s.gain, s.c_meas)
            });
            Ok(Outcome {
                verdicts: r.verdicts.clone(),
                tables: vec![table("stages.csv", csv_rows("stage,cells,energy_sigma,gain,c_meas", rows))],
                results: serde_json::to_value(&r)?,
            })
        }
        Experiment::Keystep => {
            let (_, ms) = build_inputs(cfg, &["uniform:1:2", "uniform:1:2"])?;
            let r = run_keystep_scan(
                &ms[0],
                &ms[1],
                cfg.num("s", 0.5),
                cfg.num("t", 0.5),
                cfg.num("delta", cell_width(scale.saturating_sub(2))),
                cfg.num("eps", 0.05),
                cfg.num("c", 16.0),
                cfg.num("tau", 0.01),
            )?;
            let rows = r.rows.iter().map(|x| {
                format!(
                    "{:.12e},{:.12e},{:.12e},{},{},{}",
                    x.rho, x.mu_l2_sq, x.pi_l2_sq, x.antecedent, x.consequent, x.level_set_energy
                )
            });
            Ok(Outcome {
                verdicts: r.verdicts.clone(),
                tables: vec![table(
                    "keystep.csv",
                    csv_rows("rho,mu_l2_sq,pi_l2_sq,antecedent,consequent,level_set_energy", rows),
                )],
                results: serde_json::to_value(&r)?,
            })
        }
        Experiment::Project => {
            let depth = (scale / 2).max(1);
            let d0 = format!("cantor:2:2:{depth}");
            let (_, ms) = build_inputs(cfg, &[&d0, &d0])?;
            let a1 = support_set(&ms[0])?;
            let a2 = support_set(&ms[1])?;
            let ys = DyadicGridSet::interval(0.0, 1.0, scale)?;
            let (s, t) = (cfg.num("s", 0.5), cfg.num("t", 1.0));
            let scan = projection_scan(&a1, &a2, &ys, s, t, 1.0 / cfg.num("c", 24.0))?;
            let verdicts = vec![Verdict::new(
                "projection-max",
                VerdictKind::Evidence,
                scan.pass,
                Some(scan.max as f64),
                format!("max covering vs threshold {:.4}", scan.threshold),
            )];
            let verdict_json = json!({
                "pass": scan.pass,
                "max": scan.max,
                "argmax": scan.argmax,
                "threshold": scan.threshold,
                "fraction_meeting": scan.fraction_meeting,
            });
            Ok(Outcome {
                verdicts,
                tables: vec![
                    table("projection.csv", scan.to_csv()),
                    table("projection.json", pretty(&verdict_json)?),
                ],
                results: serde_json::to_value(&scan)?,
            })
        }
        Experiment::Counterexample => {
            if cfg.text("variant", "l2") == "interval" {
                let delta = cfg.num("delta", 2f64.powi(-12));
                let c = cfg.num("c", 0.25);
                let ex = make_interval_example(cfg.num("s", 0.5), delta, c)?;
                let verdicts = vec![
                    Verdict::new(
                        "triple-support",
                        VerdictKind::Exact,
                        ex.triple_support <= c * delta,
                        Some(ex.triple_support),
                        format!("spt(mu x mu x mu) within [0, c delta] = [0, {:.4e}]", c * delta),
                    ),
                    Verdict::new(
                        "triple-transform",
                        VerdictKind::Bound,
                        ex.triple_magnitude >= 0.5,
                        Some(ex.triple_magnitude),
                        "|(mu x mu x mu)^(1/delta)| >= 1/2".into(),
                    ),
                ];
                Ok(Outcome { verdicts, tables: Vec::new(), results: serde_json::to_value(&ex)? })
            } else {
                let ex = make_l2_counterexample(
                    cfg.num("s", 0.4),
                    cfg.num("delta", 2f64.powi(-20)),
                    cfg.num("c", 1.0 / 16.0),
                )?;
                let ratio = ex.l2_sq / ex.l2_target;
                let verdicts = vec![
                    Verdict::new(
                        "l2-norm",
                        VerdictKind::Bound,
                        (1.0 / 16.0..=16.0).contains(&ratio),
                        Some(ratio),
                        "||mu_delta||_2^2 / delta^(s-1) within [1/16, 16]".into(),
                    ),
                    Verdict::new(
                        "triple-transform",
                        VerdictKind::Bound,
                        ex.triple_magnitude >= 0.125,
                        Some(ex.triple_magnitude),
                        "|(mu x mu x mu)^(1/delta)| >= 1/8".into(),
                    ),
                    Verdict::new(
                        "phase-audit",
                        VerdictKind::Exact,
                        ex.phase_gap <= ex.phase_budget + 1e-9,
                        Some(ex.phase_gap),
                        format!("budget {:.4e}", ex.phase_budget),
                    ),
                ];
                Ok(Outcome { verdicts, tables: Vec::new(), results: serde_json::to_value(&ex)? })
            }
        }
        Experiment::Hset => {
            let s = cfg.num("s", 0.5);
            let schedule: Vec<u64> = match cfg.params.get("schedule") {
                Some(v) => v.split(',').map(|x| x.trim().parse().expect("validated")).collect(),
                None => default_schedule(scale),
            };
            let (set, _) = make_h_s(s, &schedule, scale)?;
            let mut rows = Vec::new();
            for q in 0..=scale {
                rows.push(format!("{:.12e},{}", cell_width(q), covering_number(&set, cell_width(q))?));
            }
            let mut verdicts = vec![Verdict::new(
                "nonempty",
                VerdictKind::Evidence,
                !set.is_empty(),
                Some(set.len() as f64),
                format!("schedule {schedule:?}"),
            )];
            let mut defect = None;
            if let (Some(s2), Some(&n)) = (cfg.params.get("product_s").and_then(|v| parse_number(v)), schedule.last()) {
                let (other, _) = make_h_s(s2, &schedule, scale)?;
                let d = product_lattice_defect(&set, &other, s + s2, n)?;
                let nf = n as f64;
                let bound = 2.0 / nf * (1.0 + 1.0 / nf) + 1.0 / (nf * nf);
                verdicts.push(Verdict::new(
                    "product-containment",
                    VerdictKind::Exact,
                    d <= bound + 1e-12,
                    Some(d),
                    format!("distance to n^-(s+s')Z vs {bound:.4e}"),
                ));
                defect = Some(d);
            }
            Ok(Outcome {
                verdicts,
                tables: vec![table("covering.csv", csv_rows("r,covering", rows))],
                results: json!({
                    "s": s,
                    "schedule": schedule,
                    "cells": set.len(),
                    "product_defect": defect,
                }),
            })
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Runs the configured experiment. `overrides` are echoed into the report.
pub fn dispatch(cfg: &ExperimentConfig, overrides: &[String]) -> Result<RunOutput> {
    let start = Instant::now();
    let outcome = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| run_experiment(cfg))?,
        None => run_experiment(cfg)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut artifacts: Vec<String> = outcome.tables.iter().map(|t| t.name.clone()).collect();
    artifacts.push("report.json".into());
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool: "decaylab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment,
        seed: cfg.seed,
        config: cfg.serialize(),
        overrides: overrides.to_vec(),
        verdicts: outcome.verdicts,
        artifacts,
        results: outcome.results,
    };
    Ok(RunOutput {
        report,
        tables: outcome.tables,
        timings: vec![(cfg.experiment.name().to_string(), elapsed)],
    })
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes the CSV and JSON side tables.
pub fn emit_plot_data(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for t in &out.tables {
        let p = dir.join(&t.name);
        write_atomic(&p, t.contents.as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

/// Side tables, then `report.json`, then `timings.json`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_plot_data(out, dir)?;
    let report = dir.join("report.json");
    write_atomic(&report, pretty(&out.report)?.as_bytes())?;
    paths.push(report);
    let timings: BTreeMap<&str, f64> = out.timings.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let tp = dir.join("timings.json");
    write_atomic(&tp, pretty(&timings)?.as_bytes())?;
    paths.push(tp);
    Ok(paths)
}

/// Command-line flag, then config, then environment, then the default.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(d) = &cfg.output_dir {
        return PathBuf::from(d);
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}
