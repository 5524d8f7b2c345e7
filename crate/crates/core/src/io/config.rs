//! Run configuration in flat `key = value` form.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are either top-level
//! (`alpha`) or carry a dotted section prefix (`design.block_k`). Unknown or
//! repeated keys are errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::ctmc::{ExactDesign, DEFAULT_ENUMERATION_LIMIT, MAX_CLUSTER_SIZE};
use crate::designs::{BaselineScheme, BlockRule, ClusterSizeDist, CovariateScheme};
use crate::error::{Error, Result};
use crate::estimators::{Aggregation, Exclusion, DEFAULT_Z_THRESHOLD};
use crate::hazard::EpidemicParams;
use crate::simulator::{IndexCaseDesign, ObservationRule, StudyConfig};
use crate::sweep::{GridSpec, MapMode, McOptions, TimeSpec};

pub const KNOWN_KEYS: &[&str] = &[
    "mode",
    "seed",
    "alpha",
    "omega",
    "t",
    "target_incidence",
    "observation.rule",
    "observation.mean",
    "design.cluster_size",
    "design.n",
    "design.size_mean",
    "design.size_shift",
    "design.covariate",
    "design.p",
    "design.block",
    "design.block_k",
    "design.exact_split",
    "design.baseline",
    "design.q1",
    "design.q0",
    "design.clusters",
    "index.enabled",
    "index.burn_in",
    "index.follow_up",
    "index.target",
    "index.max_attempts",
    "grid.beta_min",
    "grid.beta_max",
    "grid.beta_step",
    "grid.gamma_min",
    "grid.gamma_max",
    "grid.gamma_step",
    "sweep.replicates",
    "sweep.z_threshold",
    "sweep.exclusion",
    "sweep.aggregation",
    "sweep.continuity_correction",
    "sweep.workers",
    "ctmc.max_size",
];

/// Everything a map run needs, with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: MapMode,
    pub seed: u64,
    pub alpha: f64,
    pub omega: f64,
    pub time: TimeSpec,
    pub observation: ObservationRule,
    pub covariates: CovariateScheme,
    pub sizes: ClusterSizeDist,
    pub baseline: BaselineScheme,
    pub clusters: usize,
    pub grid: GridSpec,
    pub mc: McOptions,
    pub enumeration_limit: usize,
}

impl RunConfig {
    /// Study template for Monte Carlo runs; `beta` and `gamma` are set per cell.
    pub fn study(&self) -> Result<StudyConfig> {
        Ok(StudyConfig {
            params: EpidemicParams::new(self.alpha, self.omega, 0.0, 0.0)?,
            covariates: self.covariates,
            sizes: self.sizes,
            baseline: self.baseline,
            observation: self.observation,
            clusters: self.clusters,
            master_seed: self.seed,
        })
    }

    pub fn exact_design(&self) -> ExactDesign {
        ExactDesign {
            covariates: self.covariates,
            sizes: self.sizes,
            baseline: self.baseline,
            exclusion: self.mc.exclusion,
        }
    }
}

/// Raw `key -> (line, value)` pairs.
fn tokenize(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Syntax {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Syntax {
                line,
                message: format!("missing value for `{key}`"),
            });
        }
        if let Some((first, _)) = entries.insert(key.to_string(), (line, value)) {
            return Err(Error::Syntax {
                line,
                message: format!("`{key}` already set on line {first}"),
            });
        }
    }
    Ok(entries)
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(key, format!("cannot parse `{v}`"))),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::invalid(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn choice<'a>(&'a self, key: &str, default: &'a str, allowed: &[&str]) -> Result<&'a str> {
        let v = self.raw(key).unwrap_or(default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(Error::invalid(
                key,
                format!("expected one of {}, got `{v}`", allowed.join(", ")),
            ))
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(key, format!("must be finite and > 0, got {v}")))
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw = tokenize(text)?;
    if let Some(key) = raw.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::UnknownKey(key.clone()));
    }
    let e = Entries(raw);

    let mode: MapMode = e
        .raw("mode")
        .ok_or_else(|| Error::invalid("mode", "required (exact-pair, ctmc or monte-carlo)"))?
        .parse()?;
    let seed = e.get_or("seed", 0u64)?;
    let alpha: f64 = e.get("alpha")?.ok_or_else(|| Error::invalid("alpha", "required"))?;
    let omega: f64 = e.get("omega")?.ok_or_else(|| Error::invalid("omega", "required"))?;
    EpidemicParams::new(alpha, omega, 0.0, 0.0)?;

    let time = match (e.get::<f64>("t")?, e.get::<f64>("target_incidence")?) {
        (Some(_), Some(_)) => return Err(Error::invalid("t", "set either `t` or `target_incidence`, not both")),
        (Some(t), None) => TimeSpec::Fixed(positive("t", t)?),
        (None, Some(target)) => {
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::invalid(
                    "target_incidence",
                    format!("must lie in (0, 1), got {target}"),
                ));
            }
            TimeSpec::TargetIncidence(target)
        }
        (None, None) => return Err(Error::invalid("t", "one of `t` or `target_incidence` is required")),
    };
    let observation = match e.choice("observation.rule", "fixed", &["fixed", "exponential"])? {
        "fixed" => {
            if e.has("observation.mean") {
                return Err(Error::invalid(
                    "observation.mean",
                    "only used with observation.rule = exponential",
                ));
            }
            ObservationRule::Fixed(match time {
                TimeSpec::Fixed(t) => t,
                // Replaced by the calibrated time before simulation.
                TimeSpec::TargetIncidence(_) => 1.0,
            })
        }
        _ => {
            let default = match time {
                TimeSpec::Fixed(t) => t,
                TimeSpec::TargetIncidence(_) => {
                    return Err(Error::invalid(
                        "observation.rule",
                        "exponential observation needs `t` or `observation.mean`, not a target",
                    ))
                }
            };
            ObservationRule::Exponential {
                mean: positive("observation.mean", e.get_or("observation.mean", default)?)?,
            }
        }
    };

    let sizes = match e.choice("design.cluster_size", "fixed", &["fixed", "poisson"])? {
        "fixed" => ClusterSizeDist::Fixed(e.get_or("design.n", 2usize)?),
        _ => ClusterSizeDist::ShiftedPoisson {
            mean: e.get_or("design.size_mean", 3.0)?,
            shift: e.get_or("design.size_shift", 1usize)?,
        },
    };
    sizes.validate()?;

    let covariates = match e.choice("design.covariate", "block", &["block", "bernoulli", "cluster"])? {
        "block" => {
            let rule = match e.choice("design.block", "k", &["k", "half", "one"])? {
                "k" => BlockRule::ExactlyK(e.get_or("design.block_k", 1usize)?),
                "half" => BlockRule::FloorHalf,
                _ => BlockRule::ExactlyOne,
            };
            CovariateScheme::Block(rule)
        }
        "bernoulli" => CovariateScheme::Bernoulli {
            p: e.get_or("design.p", 0.5)?,
        },
        _ => CovariateScheme::ClusterRandomized {
            p: e.get_or("design.p", 0.5)?,
            exact_split: e.bool_or("design.exact_split", false)?,
        },
    };
    covariates.validate()?;

    let baseline = match e.choice("design.baseline", "none", &["none", "bernoulli"])? {
        "none" => BaselineScheme::NoneInfected,
        _ => BaselineScheme::ConditionalBernoulli {
            q1: e.get_or("design.q1", 0.0)?,
            q0: e.get_or("design.q0", 0.0)?,
        },
    };
    baseline.validate()?;

    let clusters = e.get_or("design.clusters", 500usize)?;
    if clusters == 0 {
        return Err(Error::invalid("design.clusters", "must be >= 1"));
    }

    let index_case = if e.bool_or("index.enabled", false)? {
        let target = e.get_or("index.target", 500usize)?;
        let mut design = IndexCaseDesign::new(
            e.get_or("index.burn_in", 75.0)?,
            e.get_or("index.follow_up", 10.0)?,
            target,
        );
        design.max_attempts = e.get_or("index.max_attempts", design.max_attempts)?;
        design.validate()?;
        Some(design)
    } else {
        None
    };

    let d = GridSpec::default();
    let grid = GridSpec {
        beta_min: e.get_or("grid.beta_min", d.beta_min)?,
        beta_max: e.get_or("grid.beta_max", d.beta_max)?,
        beta_step: e.get_or("grid.beta_step", d.beta_step)?,
        gamma_min: e.get_or("grid.gamma_min", d.gamma_min)?,
        gamma_max: e.get_or("grid.gamma_max", d.gamma_max)?,
        gamma_step: e.get_or("grid.gamma_step", d.gamma_step)?,
    };
    grid.validate()?;

    let exclusion: Exclusion = e.get_or("sweep.exclusion", Exclusion::AllSubjects)?;
    if exclusion == Exclusion::ExcludeIndexOnly && index_case.is_none() {
        return Err(Error::invalid(
            "sweep.exclusion",
            "exclude-index needs index.enabled = true",
        ));
    }
    let mc = McOptions {
        replicates: e.get_or("sweep.replicates", 200usize)?,
        z_threshold: e.get_or("sweep.z_threshold", DEFAULT_Z_THRESHOLD)?,
        exclusion,
        aggregation: e.get_or("sweep.aggregation", Aggregation::MeanOfLogs)?,
        continuity_correction: e.bool_or("sweep.continuity_correction", false)?,
        index_case,
        workers: e.get_or("sweep.workers", 0usize)?,
    };
    mc.validate()?;

    let enumeration_limit = e.get_or("ctmc.max_size", DEFAULT_ENUMERATION_LIMIT)?;
    if enumeration_limit == 0 || enumeration_limit > MAX_CLUSTER_SIZE {
        return Err(Error::invalid(
            "ctmc.max_size",
            format!("must lie in 1..={MAX_CLUSTER_SIZE}, got {enumeration_limit}"),
        ));
    }

    Ok(RunConfig {
        mode,
        seed,
        alpha,
        omega,
        time,
        observation,
        covariates,
        sizes,
        baseline,
        clusters,
        grid,
        mc,
        enumeration_limit,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
