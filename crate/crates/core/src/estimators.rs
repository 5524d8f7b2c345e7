//! Pooled risk ratios, replicate aggregation, and direction classification.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simulator::ClusterOutcome;

/// Which subjects enter the risk ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exclusion {
    #[default]
    AllSubjects,
    /// Only subjects uninfected at baseline.
    ExcludeBaselineInfected,
    /// Everyone except the index case of each cluster.
    ExcludeIndexOnly,
}

impl Exclusion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Exclusion::AllSubjects => "all",
            Exclusion::ExcludeBaselineInfected => "exclude-baseline",
            Exclusion::ExcludeIndexOnly => "exclude-index",
        }
    }
}

impl FromStr for Exclusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-subjects" => Ok(Exclusion::AllSubjects),
            "exclude-baseline" | "exclude-baseline-infected" => Ok(Exclusion::ExcludeBaselineInfected),
            "exclude-index" | "exclude-index-only" => Ok(Exclusion::ExcludeIndexOnly),
            other => Err(Error::invalid("sweep.exclusion", format!("unknown rule `{other}`"))),
        }
    }
}

/// Pooled counts per covariate arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArmCounts {
    pub infected_treated: u64,
    pub total_treated: u64,
    pub infected_control: u64,
    pub total_control: u64,
}

impl ArmCounts {
    pub fn add_outcome(&mut self, outcome: &ClusterOutcome, exclusion: Exclusion) {
        for j in 0..outcome.n() {
            let eligible = match exclusion {
                Exclusion::AllSubjects => true,
                Exclusion::ExcludeBaselineInfected => !outcome.y0[j],
                Exclusion::ExcludeIndexOnly => outcome.index != Some(j),
            };
            if !eligible {
                continue;
            }
            let infected = u64::from(outcome.y_t[j]);
            if outcome.x[j] {
                self.total_treated += 1;
                self.infected_treated += infected;
            } else {
                self.total_control += 1;
                self.infected_control += infected;
            }
        }
    }

    pub fn risk_treated(&self) -> Option<f64> {
        (self.total_treated > 0).then(|| self.infected_treated as f64 / self.total_treated as f64)
    }

    pub fn risk_control(&self) -> Option<f64> {
        (self.total_control > 0).then(|| self.infected_control as f64 / self.total_control as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Undefined {
    NoTreatedSubjects,
    NoControlSubjects,
    NoControlInfections,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRatioEstimate {
    pub counts: ArmCounts,
    pub exclusion: Exclusion,
    /// `None` exactly when `undefined` is set. May be zero when the treated
    /// arm has no infections.
    pub rr: Option<f64>,
    pub undefined: Option<Undefined>,
}

impl RiskRatioEstimate {
    /// `ln rr` when it is finite; replicates without it are dropped from
    /// aggregation.
    pub fn log_rr(&self) -> Option<f64> {
        self.rr.filter(|&r| r > 0.0).map(f64::ln)
    }
}

/// Computes the ratio from pooled counts. With `continuity_correction`, a
/// table with any zero cell gets one half added to every cell.
pub fn risk_ratio_from_counts(
    counts: ArmCounts,
    exclusion: Exclusion,
    continuity_correction: bool,
) -> RiskRatioEstimate {
    let (i1, n1, i0, n0) = (
        counts.infected_treated as f64,
        counts.total_treated as f64,
        counts.infected_control as f64,
        counts.total_control as f64,
    );
    let zero_cell = i1 == 0.0 || i0 == 0.0 || i1 == n1 || i0 == n0;
    let (rr, undefined) = if counts.total_treated == 0 {
        (None, Some(Undefined::NoTreatedSubjects))
    } else if counts.total_control == 0 {
        (None, Some(Undefined::NoControlSubjects))
    } else if continuity_correction && zero_cell {
        (Some(((i1 + 0.5) / (n1 + 1.0)) / ((i0 + 0.5) / (n0 + 1.0))), None)
    } else if counts.infected_control == 0 {
        (None, Some(Undefined::NoControlInfections))
    } else {
        (Some((i1 / n1) / (i0 / n0)), None)
    };
    RiskRatioEstimate {
        counts,
        exclusion,
        rr,
        undefined,
    }
}

/// Pools eligible subjects across clusters and forms the arm-wise ratio of
/// infected fractions.
pub fn risk_ratio(outcomes: &[ClusterOutcome], exclusion: Exclusion) -> Result<RiskRatioEstimate> {
    risk_ratio_with(outcomes, exclusion, false)
}

pub fn risk_ratio_with(
    outcomes: &[ClusterOutcome],
    exclusion: Exclusion,
    continuity_correction: bool,
) -> Result<RiskRatioEstimate> {
    if outcomes.is_empty() {
        return Err(Error::invalid("outcomes", "at least one cluster is required"));
    }
    let mut counts = ArmCounts::default();
    for outcome in outcomes {
        counts.add_outcome(outcome, exclusion);
    }
    Ok(risk_ratio_from_counts(counts, exclusion, continuity_correction))
}

/// How replicate estimates combine into one log risk ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean of per-replicate `ln rr`.
    #[default]
    MeanOfLogs,
    /// `ln` of the ratio of replicate-averaged arm risks; standard error by
    /// the delta method.
    LogOfMeanRisks,
}

impl Aggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::MeanOfLogs => "mean-log",
            Aggregation::LogOfMeanRisks => "log-mean",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-log" => Ok(Aggregation::MeanOfLogs),
            "log-mean" => Ok(Aggregation::LogOfMeanRisks),
            other => Err(Error::invalid(
                "sweep.aggregation",
                format!("unknown aggregator `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRrSummary {
    /// `None` when no replicate was usable.
    pub mean_log_rr: Option<f64>,
    /// Standard error of the mean; NaN with fewer than two usable replicates.
    pub se: f64,
    pub used: usize,
    pub dropped: usize,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Drops undefined replicates and averages `ln rr` over the rest.
pub fn aggregate_log_rr(estimates: &[RiskRatioEstimate]) -> Result<LogRrSummary> {
    if estimates.is_empty() {
        return Err(Error::invalid("estimates", "at least one replicate is required"));
    }
    let logs: Vec<f64> = estimates.iter().filter_map(RiskRatioEstimate::log_rr).collect();
    let dropped = estimates.len() - logs.len();
    if logs.is_empty() {
        return Ok(LogRrSummary {
            mean_log_rr: None,
            se: f64::NAN,
            used: 0,
            dropped,
        });
    }
    let (mean, se) = mean_and_se(&logs);
    Ok(LogRrSummary {
        mean_log_rr: Some(mean),
        se,
        used: logs.len(),
        dropped,
    })
}

/// `ln(mean risk_1 / mean risk_0)` over replicates with both arms present.
pub fn aggregate_log_of_mean_risks(estimates: &[RiskRatioEstimate]) -> Result<LogRrSummary> {
    if estimates.is_empty() {
        return Err(Error::invalid("estimates", "at least one replicate is required"));
    }
    let pairs: Vec<(f64, f64)> = estimates
        .iter()
        .filter_map(|e| Some((e.counts.risk_treated()?, e.counts.risk_control()?)))
        .collect();
    let dropped = estimates.len() - pairs.len();
    let n = pairs.len() as f64;
    let m1 = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let m0 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    if pairs.is_empty() || m1 <= 0.0 || m0 <= 0.0 {
        return Ok(LogRrSummary {
            mean_log_rr: None,
            se: f64::NAN,
            used: 0,
            dropped: estimates.len(),
        });
    }
    let se = if pairs.len() < 2 {
        f64::NAN
    } else {
        let (mut v1, mut v0, mut c) = (0.0, 0.0, 0.0);
        for &(p1, p0) in &pairs {
            v1 += (p1 - m1).powi(2);
            v0 += (p0 - m0).powi(2);
            c += (p1 - m1) * (p0 - m0);
        }
        let d = n - 1.0;
        let var = (v1 / d) / (m1 * m1) + (v0 / d) / (m0 * m0) - 2.0 * (c / d) / (m1 * m0);
        (var.max(0.0) / n).sqrt()
    };
    Ok(LogRrSummary {
        mean_log_rr: Some((m1 / m0).ln()),
        se,
        used: pairs.len(),
        dropped,
    })
}

pub fn aggregate(estimates: &[RiskRatioEstimate], how: Aggregation) -> Result<LogRrSummary> {
    match how {
        Aggregation::MeanOfLogs => aggregate_log_rr(estimates),
        Aggregation::LogOfMeanRisks => aggregate_log_of_mean_risks(estimates),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    DirectionUnbiased,
    DirectionBiased,
    NullConsistent,
    Indeterminate,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::DirectionUnbiased => "direction-unbiased",
            Classification::DirectionBiased => "direction-biased",
            Classification::NullConsistent => "null-consistent",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direction-unbiased" => Ok(Classification::DirectionUnbiased),
            "direction-biased" => Ok(Classification::DirectionBiased),
            "null-consistent" => Ok(Classification::NullConsistent),
            "indeterminate" => Ok(Classification::Indeterminate),
            other => Err(Error::invalid("classification", format!("unknown value `{other}`"))),
        }
    }
}

/// Default two-sigma screen for Monte Carlo cells.
pub const DEFAULT_Z_THRESHOLD: f64 = 2.0;

/// Compares the sign of the estimated log risk ratio with the sign of `beta`
/// (the log hazard ratio). With `se = 0` this is the exact definition:
/// any nonzero log risk ratio is decisive.
pub fn classify_direction(beta: f64, mean_log_rr: f64, se: f64, z_threshold: f64) -> Classification {
    let z = if se == 0.0 {
        if mean_log_rr == 0.0 {
            0.0
        } else {
            mean_log_rr.signum() * f64::INFINITY
        }
    } else {
        mean_log_rr / se
    };
    if z.is_nan() {
        return Classification::Indeterminate;
    }
    let decisive = z.abs() >= z_threshold;
    if beta == 0.0 {
        if decisive {
            Classification::DirectionBiased
        } else {
            Classification::NullConsistent
        }
    } else if !decisive {
        Classification::Indeterminate
    } else if mean_log_rr.signum() == beta.signum() {
        Classification::DirectionUnbiased
    } else {
        Classification::DirectionBiased
    }
}
