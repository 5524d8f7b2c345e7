//! Sweeps over the `(beta, gamma)` grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::calibration::calibrate_t;
use crate::ctmc::{expected_rr_exact_with_limit, ExactDesign, DEFAULT_ENUMERATION_LIMIT};
use crate::designs::{BlockRule, ClusterSizeDist, CovariateScheme};
use crate::error::{Error, Result};
use crate::estimators::{
    aggregate, classify_direction, risk_ratio_with, Aggregation, Classification, Exclusion, DEFAULT_Z_THRESHOLD,
};
use crate::exact_pair::exact_risk_ratio;
use crate::hazard::EpidemicParams;
use crate::rng::StreamSeed;
use crate::simulator::{run_index_case_design, simulate_study_with, IndexCaseDesign, ObservationRule, StudyConfig};

/// Exact log risk ratios this close to zero are treated as zero.
pub const EXACT_NULL_SNAP: f64 = 1e-9;

/// Inclusive `(beta, gamma)` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(-3.0, 3.0, 0.25)
    }
}

impl GridSpec {
    /// The same range and step on both axes.
    pub fn square(min: f64, max: f64, step: f64) -> Self {
        Self {
            beta_min: min,
            beta_max: max,
            beta_step: step,
            gamma_min: min,
            gamma_max: max,
            gamma_step: step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("grid.beta", self.beta_min, self.beta_max, self.beta_step)?;
        check_axis("grid.gamma", self.gamma_min, self.gamma_max, self.gamma_step)
    }

    pub fn betas(&self) -> Vec<f64> {
        axis(self.beta_min, self.beta_max, self.beta_step)
    }

    pub fn gammas(&self) -> Vec<f64> {
        axis(self.gamma_min, self.gamma_max, self.gamma_step)
    }

    pub fn cell_count(&self) -> usize {
        self.betas().len() * self.gammas().len()
    }
}

fn check_axis(prefix: &str, min: f64, max: f64, step: f64) -> Result<()> {
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::invalid(format!("{prefix}_min"), "bounds must be finite"));
    }
    if max < min {
        return Err(Error::invalid(
            format!("{prefix}_max"),
            format!("{max} is below the minimum {min}"),
        ));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(
            format!("{prefix}_step"),
            format!("must be > 0, got {step}"),
        ));
    }
    Ok(())
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            let v = min + i as f64 * step;
            // Keeps grid points like 0.1 * 3 from carrying representation noise.
            let r = (v * 1e12).round() / 1e12;
            if r == 0.0 {
                0.0
            } else {
                r
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    ExactPair,
    Ctmc,
    MonteCarlo,
}

impl MapMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapMode::ExactPair => "exact-pair",
            MapMode::Ctmc => "ctmc",
            MapMode::MonteCarlo => "monte-carlo",
        }
    }
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-pair" => Ok(MapMode::ExactPair),
            "ctmc" => Ok(MapMode::Ctmc),
            "monte-carlo" => Ok(MapMode::MonteCarlo),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Observation time given directly or solved from a null incidence target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    Fixed(f64),
    TargetIncidence(f64),
}

impl TimeSpec {
    pub fn resolve(&self, alpha: f64, omega: f64, sizes: &ClusterSizeDist) -> Result<f64> {
        match *self {
            TimeSpec::Fixed(t) if t.is_finite() && t > 0.0 => Ok(t),
            TimeSpec::Fixed(t) => Err(Error::invalid("t", format!("must be finite and > 0, got {t}"))),
            TimeSpec::TargetIncidence(target) => calibrate_t(target, alpha, omega, sizes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub beta: f64,
    pub gamma: f64,
    /// NaN when the cell has no defined estimate.
    pub mean_log_rr: f64,
    pub se: f64,
    pub replicates_used: usize,
    pub replicates_dropped: usize,
    pub classification: Classification,
    /// `ok`, or a short description of why the cell has no estimate.
    pub status: String,
}

impl CellResult {
    fn exact(beta: f64, gamma: f64, rr: Result<f64>) -> Self {
        match rr {
            Ok(rr) if rr > 0.0 && rr.is_finite() => {
                let mut log_rr = rr.ln();
                if log_rr.abs() <= EXACT_NULL_SNAP {
                    log_rr = 0.0;
                }
                Self {
                    beta,
                    gamma,
                    mean_log_rr: log_rr,
                    se: 0.0,
                    replicates_used: 1,
                    replicates_dropped: 0,
                    classification: classify_direction(beta, log_rr, 0.0, DEFAULT_Z_THRESHOLD),
                    status: "ok".into(),
                }
            }
            Ok(rr) => Self::failed(beta, gamma, 0, 1, format!("non-positive risk ratio {rr}")),
            Err(e) => Self::failed(beta, gamma, 0, 1, e.to_string()),
        }
    }

    fn failed(beta: f64, gamma: f64, used: usize, dropped: usize, status: String) -> Self {
        Self {
            beta,
            gamma,
            mean_log_rr: f64::NAN,
            se: f64::NAN,
            replicates_used: used,
            replicates_dropped: dropped,
            classification: Classification::Indeterminate,
            status: status.replace([',', '\n'], ";"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub grid: GridSpec,
    pub mode: MapMode,
    /// Cells sorted by `(beta, gamma)`.
    pub cells: Vec<CellResult>,
    pub fingerprint: String,
    pub master_seed: u64,
    /// Observation time used, after calibration.
    pub t: f64,
}

impl MapResult {
    pub fn cell(&self, beta: f64, gamma: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| (c.beta - beta).abs() < 1e-9 && (c.gamma - gamma).abs() < 1e-9)
    }
}

/// First 16 hex digits of the SHA-256 of a canonical description.
pub fn fingerprint(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn grid_points(grid: &GridSpec) -> Vec<(usize, usize, f64, f64)> {
    let gammas = grid.gammas();
    grid.betas()
        .into_iter()
        .enumerate()
        .flat_map(|(ib, b)| gammas.iter().enumerate().map(move |(ig, &g)| (ib, ig, b, g)))
        .collect()
}

/// Two-person clusters with one treated subject, from the closed form.
pub fn run_exact_map(grid: &GridSpec, alpha: f64, omega: f64, time: TimeSpec) -> Result<MapResult> {
    grid.validate()?;
    let base = EpidemicParams::new(alpha, omega, 0.0, 0.0)?;
    if alpha == 0.0 {
        return Err(Error::invalid("alpha", "the exact map needs alpha > 0"));
    }
    let t = time.resolve(alpha, omega, &ClusterSizeDist::Fixed(2))?;
    let cells = grid_points(grid)
        .into_iter()
        .map(|(_, _, b, g)| CellResult::exact(b, g, exact_risk_ratio(&base.with_effects(b, g), t)))
        .collect();
    Ok(MapResult {
        grid: *grid,
        mode: MapMode::ExactPair,
        cells,
        fingerprint: fingerprint(&format!(
            "mode=exact-pair;alpha={alpha:?};omega={omega:?};time={time:?};t={t:?};grid={grid:?}"
        )),
        master_seed: 0,
        t,
    })
}

/// Exact expected risk ratio per cell for a general design.
pub fn run_ctmc_map(
    grid: &GridSpec,
    design: &ExactDesign,
    alpha: f64,
    omega: f64,
    time: TimeSpec,
    workers: usize,
) -> Result<MapResult> {
    run_ctmc_map_with_limit(grid, design, alpha, omega, time, workers, DEFAULT_ENUMERATION_LIMIT)
}

pub fn run_ctmc_map_with_limit(
    grid: &GridSpec,
    design: &ExactDesign,
    alpha: f64,
    omega: f64,
    time: TimeSpec,
    workers: usize,
    enumeration_limit: usize,
) -> Result<MapResult> {
    grid.validate()?;
    let base = EpidemicParams::new(alpha, omega, 0.0, 0.0)?;
    let t = time.resolve(alpha, omega, &design.sizes)?;
    let points = grid_points(grid);
    let cells = with_pool(workers, || {
        points
            .par_iter()
            .map(|&(_, _, b, g)| {
                let rr = expected_rr_exact_with_limit(design, &base.with_effects(b, g), t, enumeration_limit);
                CellResult::exact(b, g, rr)
            })
            .collect()
    })?;
    Ok(MapResult {
        grid: *grid,
        mode: MapMode::Ctmc,
        cells,
        fingerprint: fingerprint(&format!(
            "mode=ctmc;alpha={alpha:?};omega={omega:?};design={design:?};time={time:?};t={t:?};\
             limit={enumeration_limit};grid={grid:?}"
        )),
        master_seed: 0,
        t,
    })
}

/// Monte Carlo settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub replicates: usize,
    pub z_threshold: f64,
    pub exclusion: Exclusion,
    pub aggregation: Aggregation,
    pub continuity_correction: bool,
    /// Two-phase selection through an index case instead of `simulate_study`.
    pub index_case: Option<IndexCaseDesign>,
    pub workers: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            replicates: 200,
            z_threshold: DEFAULT_Z_THRESHOLD,
            exclusion: Exclusion::AllSubjects,
            aggregation: Aggregation::MeanOfLogs,
            continuity_correction: false,
            index_case: None,
            workers: 0,
        }
    }
}

impl McOptions {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("sweep.replicates", "must be >= 2"));
        }
        if !(self.z_threshold.is_finite() && self.z_threshold > 0.0) {
            return Err(Error::invalid(
                "sweep.z_threshold",
                format!("must be finite and > 0, got {}", self.z_threshold),
            ));
        }
        if let Some(design) = &self.index_case {
            design.validate()?;
        }
        Ok(())
    }
}

/// Replicate studies per cell. Replicate `r` of cell `(i, j)` uses streams
/// under `root(master_seed).child(i).child(j).child(r)`, so the map depends
/// only on the inputs and never on scheduling.
pub fn run_mc_sweep(grid: &GridSpec, template: &StudyConfig, time: TimeSpec, options: &McOptions) -> Result<MapResult> {
    grid.validate()?;
    options.validate()?;
    let params = template.params;
    let mut config = *template;
    if options.index_case.is_none() {
        if let TimeSpec::TargetIncidence(_) = time {
            config.observation = ObservationRule::Fixed(time.resolve(params.alpha, params.omega, &template.sizes)?);
        } else if let TimeSpec::Fixed(t) = time {
            config.observation = ObservationRule::Fixed(t);
        }
    }
    config.validate()?;
    let t = match (options.index_case, config.observation) {
        (Some(design), _) => design.follow_up,
        (None, ObservationRule::Fixed(t)) => t,
        (None, ObservationRule::Exponential { mean }) => mean,
    };
    let root = StreamSeed::root(template.master_seed);
    let points = grid_points(grid);
    let replicates = options.replicates;
    let units: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|c| (0..replicates).map(move |r| (c, r)))
        .collect();
    let estimates = with_pool(options.workers, || {
        units
            .par_iter()
            .map(|&(c, r)| {
                let (ib, ig, b, g) = points[c];
                let cfg = StudyConfig {
                    params: params.with_effects(b, g),
                    ..config
                };
                let seed = root.child(ib as u64).child(ig as u64).child(r as u64);
                let outcomes = match &options.index_case {
                    Some(design) => run_index_case_design(&cfg, design, seed)?,
                    None => simulate_study_with(&cfg, seed)?,
                };
                risk_ratio_with(&outcomes, options.exclusion, options.continuity_correction)
            })
            .collect::<Vec<_>>()
    })?;
    let cells = points
        .iter()
        .zip(estimates.chunks(replicates))
        .map(|(&(_, _, b, g), chunk)| {
            let mut ok = Vec::with_capacity(chunk.len());
            for e in chunk {
                match e {
                    Ok(est) => ok.push(*est),
                    Err(err) => return CellResult::failed(b, g, 0, replicates, err.to_string()),
                }
            }
            match aggregate(&ok, options.aggregation) {
                Ok(summary) => match summary.mean_log_rr {
                    Some(mean) => CellResult {
                        beta: b,
                        gamma: g,
                        mean_log_rr: mean,
                        se: summary.se,
                        replicates_used: summary.used,
                        replicates_dropped: summary.dropped,
                        classification: classify_direction(b, mean, summary.se, options.z_threshold),
                        status: "ok".into(),
                    },
                    None => CellResult::failed(b, g, 0, replicates, "all replicates undefined".into()),
                },
                Err(err) => CellResult::failed(b, g, 0, replicates, err.to_string()),
            }
        })
        .collect();
    let options_key = McOptions { workers: 0, ..*options };
    Ok(MapResult {
        grid: *grid,
        mode: MapMode::MonteCarlo,
        cells,
        fingerprint: fingerprint(&format!(
            "mode=monte-carlo;config={config:?};time={time:?};options={options_key:?};grid={grid:?}"
        )),
        master_seed: template.master_seed,
        t,
    })
}

/// The design behind the two-person closed form, for use with the CTMC map.
pub fn pair_design() -> ExactDesign {
    ExactDesign::fixed(2, CovariateScheme::Block(BlockRule::ExactlyOne))
}
