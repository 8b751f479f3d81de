//! Plain-text experiment plans.
//!
//! One `key = value` pair per line, `#` starts a comment, lists are
//! comma-separated:
//!
//! ```text
//! # pressure vs velocity mask on the saddle problem
//! problem = saddle
//! sizes = 17, 33
//! mode = mask
//! tol = 1e-6
//! out = results/saddle_masks.csv
//! ```
//!
//! `mode` selects a template that fills in the configuration axes not given
//! explicitly:
//!
//! * `mask`: every field mask plus `none`, no adaptivity, `p = 1`;
//! * `adaptivity`: no mask, all five strategies, `p = 1`;
//! * `best`: all masks x all strategies x `p` in `1..=4` (capped per
//!   problem), marking the fastest converged configuration per size;
//! * `custom` (default): `masks = none`, `adapt = none`, `p = 1`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use aap_core::problems::PLaplacianInit;
use aap_core::{Adaptivity, ProblemKind, ProblemOptions, SolverConfig, StaticMask};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::run::RunSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("plan line {line}: {message}")]
pub struct PlanError {
    /// 1-based; 0 for errors that concern the plan as a whole.
    pub line: usize,
    pub message: String,
}

fn plan_error(line: usize, message: impl Into<String>) -> PlanError {
    PlanError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Mask,
    Adaptivity,
    Best,
    Custom,
}

impl FromStr for PlanMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mask" => Ok(Self::Mask),
            "adaptivity" => Ok(Self::Adaptivity),
            "best" => Ok(Self::Best),
            "custom" => Ok(Self::Custom),
            other => Err(format!("unknown mode `{other}` (mask|adaptivity|best|custom)")),
        }
    }
}

/// One point of the configuration matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub mask: StaticMask,
    pub adaptivity: Adaptivity,
    pub alternation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub problem: ProblemKind,
    pub sizes: Vec<usize>,
    pub mode: PlanMode,
    pub configs: Vec<PlanConfig>,
    pub repetitions: usize,
    pub out: PathBuf,
    /// Directory receiving one trace per run.
    pub trace_dir: Option<PathBuf>,
    pub seed: u64,
    pub options: ProblemOptions,
    /// Template for every run; mask, adaptivity and alternation come from
    /// `configs`. `window = 0` means the problem's recommendation.
    pub base: SolverConfig,
    /// Run iteration-count experiments concurrently; no timings are reported.
    pub parallel: bool,
}

impl ExperimentPlan {
    /// Run specification of one `(size, config)` cell.
    pub fn spec(&self, size: usize, config: &PlanConfig) -> RunSpec {
        let mut cfg = self.base.clone();
        cfg.static_mask = config.mask.clone();
        cfg.adaptivity = config.adaptivity;
        cfg.alternation = config.alternation;
        RunSpec {
            problem: self.problem,
            size,
            options: self.options.clone(),
            config: cfg,
        }
    }

    pub fn row_count(&self) -> usize {
        self.sizes.len() * self.configs.len()
    }
}

fn parse_list<T, E: std::fmt::Display>(value: &str, line: usize, parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, PlanError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).map_err(|e| plan_error(line, format!("`{s}`: {e}"))))
        .collect()
}

fn parse_one<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T, PlanError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| plan_error(line, format!("invalid value for `{key}`: {e}")))
}

pub fn parse_mask(s: &str) -> StaticMask {
    if s == "none" {
        StaticMask::Identity
    } else {
        StaticMask::Field(s.to_owned())
    }
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan, PlanError> {
    const KEYS: &[&str] = &[
        "problem", "sizes", "mode", "masks", "adapt", "alternation", "window", "sketch", "tol", "max_iterations",
        "repetitions", "seed", "out", "trace_dir", "q", "beta", "init", "dims", "omega", "strict", "eta_exponent",
        "sigma_iterations", "parallel",
    ];
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| plan_error(line, format!("expected `key = value`, got `{content}`")))?;
        let key = match key.trim() {
            "p" => "alternation",
            "m" => "window",
            "mask" => "masks",
            "size" => "sizes",
            k => k,
        };
        if !KEYS.contains(&key) {
            return Err(plan_error(line, format!("unknown key `{key}`")));
        }
        let value = value.trim().to_owned();
        if value.is_empty() {
            return Err(plan_error(line, format!("empty value for `{key}`")));
        }
        if let Some((first, _)) = entries.insert(key.to_owned(), (line, value)) {
            return Err(plan_error(line, format!("`{key}` already set on line {first}")));
        }
    }
    let get = |k: &str| entries.get(k).map(|(l, v)| (*l, v.as_str()));

    let (pl, pv) = get("problem").ok_or_else(|| plan_error(0, "missing `problem`"))?;
    let problem: ProblemKind = parse_one(pv, pl, "problem")?;
    let (sl, sv) = get("sizes").ok_or_else(|| plan_error(0, "missing `sizes`"))?;
    let sizes: Vec<usize> = parse_list(sv, sl, usize::from_str)?;
    if sizes.is_empty() {
        return Err(plan_error(sl, "`sizes` is empty"));
    }
    let mode = match get("mode") {
        Some((l, v)) => parse_one(v, l, "mode")?,
        None => PlanMode::Custom,
    };

    let all_masks = || {
        std::iter::once(StaticMask::Identity)
            .chain(problem.fields().iter().map(|f| StaticMask::Field((*f).into())))
            .collect::<Vec<_>>()
    };
    let masks = match get("masks") {
        Some((l, v)) => parse_list(v, l, |s| Ok::<_, String>(parse_mask(s)))?,
        None => match mode {
            PlanMode::Mask | PlanMode::Best => all_masks(),
            _ => vec![StaticMask::Identity],
        },
    };
    for m in &masks {
        if let StaticMask::Field(f) = m {
            if !problem.fields().contains(&f.as_str()) {
                let l = get("masks").map_or(0, |(l, _)| l);
                return Err(plan_error(
                    l,
                    format!("unknown field `{f}` for {problem} (valid: none, {})", problem.fields().join(", ")),
                ));
            }
        }
    }
    let adapt = match get("adapt") {
        Some((l, v)) => parse_list(v, l, Adaptivity::from_str)?,
        None => match mode {
            PlanMode::Adaptivity | PlanMode::Best => Adaptivity::ALL.to_vec(),
            _ => vec![Adaptivity::None],
        },
    };
    let alternation = match get("alternation") {
        Some((l, v)) => parse_list(v, l, usize::from_str)?,
        None => match mode {
            PlanMode::Best => (1..=problem.max_alternation()).collect(),
            _ => vec![1],
        },
    };
    let mut configs = Vec::with_capacity(masks.len() * adapt.len() * alternation.len());
    for &p in &alternation {
        for mask in &masks {
            for &a in &adapt {
                configs.push(PlanConfig {
                    mask: mask.clone(),
                    adaptivity: a,
                    alternation: p,
                });
            }
        }
    }
    if configs.is_empty() {
        return Err(plan_error(0, "configuration matrix is empty"));
    }

    let seed = match get("seed") {
        Some((l, v)) => parse_one(v, l, "seed")?,
        None => 0,
    };
    let repetitions = match get("repetitions") {
        Some((l, v)) => {
            let r: usize = parse_one(v, l, "repetitions")?;
            if r < 1 {
                return Err(plan_error(l, "repetitions must be at least 1"));
            }
            r
        }
        None => 1,
    };

    let mut options = ProblemOptions {
        seed,
        ..Default::default()
    };
    if let Some((l, v)) = get("q") {
        options.q = parse_one(v, l, "q")?;
    }
    if let Some((l, v)) = get("beta") {
        options.beta = parse_one(v, l, "beta")?;
    }
    if let Some((l, v)) = get("dims") {
        options.plaplace_dims = parse_one(v, l, "dims")?;
    }
    if let Some((l, v)) = get("init") {
        options.plaplace_init = v.parse::<PLaplacianInit>().map_err(|e| plan_error(l, e.to_string()))?;
    }

    let mut base = SolverConfig {
        window: 0,
        rng_seed: seed,
        ..Default::default()
    };
    if let Some((l, v)) = get("window") {
        base.window = parse_one(v, l, "window")?;
    }
    if let Some((l, v)) = get("sketch") {
        base.sketch_percent = parse_one(v, l, "sketch")?;
    }
    if let Some((l, v)) = get("tol") {
        base.rel_tolerance = parse_one(v, l, "tol")?;
    }
    if let Some((l, v)) = get("max_iterations") {
        base.max_iterations = parse_one(v, l, "max_iterations")?;
    }
    if let Some((l, v)) = get("omega") {
        base.omega = Some(parse_one(v, l, "omega")?);
    }
    if let Some((l, v)) = get("strict") {
        base.strict_lhs = parse_one(v, l, "strict")?;
    }
    if let Some((l, v)) = get("eta_exponent") {
        base.eta_exponent = parse_one(v, l, "eta_exponent")?;
    }
    if let Some((l, v)) = get("sigma_iterations") {
        base.sigma_min_iterations = parse_one(v, l, "sigma_iterations")?;
    }
    // Validate the template with a concrete window so bad values surface as
    // plan errors rather than as rows full of failures.
    let mut probe = base.clone();
    probe.window = probe.window.max(1);
    probe.validate().map_err(|e| plan_error(0, e.to_string()))?;
    for &p in &alternation {
        if p < 1 {
            let l = get("alternation").map_or(0, |(l, _)| l);
            return Err(plan_error(l, "alternation must be at least 1"));
        }
    }

    let parallel = match get("parallel") {
        Some((l, v)) => parse_one(v, l, "parallel")?,
        None => false,
    };
    if parallel && mode == PlanMode::Best {
        let l = get("parallel").map_or(0, |(l, _)| l);
        return Err(plan_error(l, "best-overall sweeps compare wall times and cannot run in parallel"));
    }

    Ok(ExperimentPlan {
        problem,
        sizes,
        mode,
        configs,
        repetitions,
        out: get("out").map_or_else(|| PathBuf::from("results.csv"), |(_, v)| PathBuf::from(v)),
        trace_dir: get("trace_dir").map(|(_, v)| PathBuf::from(v)),
        seed,
        options,
        base,
        parallel,
    })
}
