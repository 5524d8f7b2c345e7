//! Exact transient solution of the within-cluster infection process.
//!
//! The state is the set of infected subjects, encoded as a bitmask. From
//! state `S`, susceptible `j` is infected at rate
//! `e^{x_j beta} (alpha + sum_{k in S} omega e^{x_k gamma})`. The forward
//! equations over all `2^n` states are integrated with adaptive
//! Dormand-Prince steps; the generator is applied matrix-free.

use crate::designs::{binomial_pmf, BaselineScheme, ClusterSizeDist, CovariateScheme};
use crate::error::{Error, Result};
use crate::estimators::Exclusion;
use crate::hazard::{hazard_from_counts, EpidemicParams};
use crate::ode::{integrate, Tolerance};

/// Largest cluster the subset chain accepts (`2^14` states).
pub const MAX_CLUSTER_SIZE: usize = 14;

/// Default largest cluster size enumerated by [`expected_rr_exact`].
pub const DEFAULT_ENUMERATION_LIMIT: usize = 10;

/// Tail mass dropped when enumerating a cluster-size distribution.
pub const SIZE_TAIL_MASS: f64 = 1e-9;

/// Allowed drift of total probability mass.
const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Infection process of one cluster as a Markov chain over infected subsets.
#[derive(Debug, Clone)]
pub struct SubsetChain {
    x: Vec<bool>,
    /// Total exit rate of each state.
    exit_rate: Vec<f64>,
    /// Transitions out of state `s` live in `targets[offsets[s]..offsets[s + 1]]`.
    offsets: Vec<usize>,
    targets: Vec<(u32, f64)>,
    max_rate: f64,
}

impl SubsetChain {
    pub fn new(x: &[bool], params: &EpidemicParams) -> Result<Self> {
        params.validate()?;
        let n = x.len();
        if n > MAX_CLUSTER_SIZE {
            return Err(Error::SizeLimit {
                size: n,
                limit: MAX_CLUSTER_SIZE,
            });
        }
        let states = 1usize << n;
        let mut exit_rate = vec![0.0; states];
        let mut offsets = Vec::with_capacity(states + 1);
        let mut targets = Vec::with_capacity(n * states / 2);
        let mut max_rate = 0.0f64;
        #[allow(clippy::needless_range_loop)] // s is also the bitmask
        for s in 0..states {
            offsets.push(targets.len());
            let (mut treated, mut control) = (0, 0);
            for (k, &xk) in x.iter().enumerate() {
                if s & (1 << k) != 0 {
                    if xk {
                        treated += 1;
                    } else {
                        control += 1;
                    }
                }
            }
            let per_arm = [
                hazard_from_counts(params, false, treated, control),
                hazard_from_counts(params, true, treated, control),
            ];
            for (j, &xj) in x.iter().enumerate() {
                if s & (1 << j) == 0 {
                    let rate = per_arm[usize::from(xj)];
                    if rate > 0.0 {
                        targets.push(((s | (1 << j)) as u32, rate));
                        exit_rate[s] += rate;
                    }
                }
            }
            max_rate = max_rate.max(exit_rate[s]);
        }
        offsets.push(targets.len());
        Ok(Self {
            x: x.to_vec(),
            exit_rate,
            offsets,
            targets,
            max_rate,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[bool] {
        &self.x
    }

    /// Rate of the transition `state -> state + {j}`; zero if `j` is
    /// already infected.
    pub fn rate(&self, state: usize, j: usize) -> f64 {
        let to = (state | (1 << j)) as u32;
        if to as usize == state {
            return 0.0;
        }
        self.targets[self.offsets[state]..self.offsets[state + 1]]
            .iter()
            .find(|&&(t, _)| t == to)
            .map_or(0.0, |&(_, r)| r)
    }

    fn apply_generator(&self, p: &[f64], dp: &mut [f64]) {
        dp.fill(0.0);
        for (s, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            dp[s] -= self.exit_rate[s] * mass;
            for &(to, rate) in &self.targets[self.offsets[s]..self.offsets[s + 1]] {
                dp[to as usize] += rate * mass;
            }
        }
    }

    /// Distribution over infected subsets at `t`, starting from the point
    /// mass on `y0`.
    pub fn transient(&self, y0: &[bool], t: f64, tol: Tolerance) -> Result<Vec<f64>> {
        if y0.len() != self.n() {
            return Err(Error::invalid(
                "y0",
                format!("length {} does not match cluster size {}", y0.len(), self.n()),
            ));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
        }
        let start = y0
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &y)| if y { acc | (1 << j) } else { acc });
        let mut p0 = vec![0.0; 1 << self.n()];
        p0[start] = 1.0;
        let p = integrate(|p, dp| self.apply_generator(p, dp), &p0, t, self.max_rate, tol)?;
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > CONSERVATION_TOLERANCE {
            return Err(Error::Numerical(format!(
                "probability mass drifted to {total} (n = {}, t = {t})",
                self.n()
            )));
        }
        Ok(p)
    }

    /// `P(Y_j(t) = 1)` for every subject.
    pub fn marginals(&self, y0: &[bool], t: f64) -> Result<Vec<f64>> {
        let p = self.transient(y0, t, Tolerance::default())?;
        Ok(marginals_from_distribution(&p, y0))
    }
}

fn marginals_from_distribution(p: &[f64], y0: &[bool]) -> Vec<f64> {
    let n = y0.len();
    let mut out = vec![0.0; n];
    for (s, &mass) in p.iter().enumerate() {
        for (j, slot) in out.iter_mut().enumerate() {
            if s & (1 << j) != 0 {
                *slot += mass;
            }
        }
    }
    for (slot, &infected) in out.iter_mut().zip(y0) {
        *slot = if infected { 1.0 } else { slot.clamp(0.0, 1.0) };
    }
    out
}

/// Exact `P(Y_j(t) = 1)` for every subject of a cluster with covariates `x`
/// and baseline infections `y0`.
pub fn infection_marginals(x: &[bool], params: &EpidemicParams, y0: &[bool], t: f64) -> Result<Vec<f64>> {
    SubsetChain::new(x, params)?.marginals(y0, t)
}

/// Expected infected fraction at `t` under `beta = gamma = 0`, from the
/// chain on the number infected (rate `(n - k)(alpha + k omega)` from `k`).
pub fn null_cumulative_incidence(n: usize, alpha: f64, omega: f64, t: f64) -> Result<f64> {
    EpidemicParams::new(alpha, omega, 0.0, 0.0)?;
    if n == 0 {
        return Err(Error::invalid("n", "cluster size must be >= 1"));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    let rates: Vec<f64> = (0..=n).map(|k| (n - k) as f64 * (alpha + k as f64 * omega)).collect();
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    let rhs = |p: &[f64], dp: &mut [f64]| {
        dp[0] = -rates[0] * p[0];
        for k in 1..=n {
            dp[k] = rates[k - 1] * p[k - 1] - rates[k] * p[k];
        }
    };
    let mut p0 = vec![0.0; n + 1];
    p0[0] = 1.0;
    let p = integrate(rhs, &p0, t, max_rate, Tolerance::default())?;
    let expected: f64 = p.iter().enumerate().map(|(k, &m)| k as f64 * m).sum();
    Ok((expected / n as f64).clamp(0.0, 1.0))
}

/// Design evaluated exactly by [`expected_rr_exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactDesign {
    pub covariates: CovariateScheme,
    pub sizes: ClusterSizeDist,
    pub baseline: BaselineScheme,
    pub exclusion: Exclusion,
}

impl ExactDesign {
    /// Fixed-size clusters, nobody infected at baseline, all subjects counted.
    pub fn fixed(n: usize, covariates: CovariateScheme) -> Self {
        Self {
            covariates,
            sizes: ClusterSizeDist::Fixed(n),
            baseline: BaselineScheme::NoneInfected,
            exclusion: Exclusion::AllSubjects,
        }
    }
}

/// Subject-level risks `(E[Y | x = 1], E[Y | x = 0])` among eligible
/// subjects, pooled over the design's size and assignment distributions.
///
/// Each scheme is exchangeable within a cluster, so per-arm expected counts
/// depend only on how many subjects are treated and, within each arm, how
/// many are infected at baseline. One representative assignment is solved
/// per such configuration and weighted by its probability.
pub fn expected_arm_risks(
    design: &ExactDesign,
    params: &EpidemicParams,
    t: f64,
    enumeration_limit: usize,
) -> Result<(f64, f64)> {
    design.covariates.validate()?;
    design.sizes.validate()?;
    design.baseline.validate()?;
    if design.exclusion == Exclusion::ExcludeIndexOnly {
        return Err(Error::NotApplicable(
            "index-case selection has no exact enumeration; use Monte Carlo".into(),
        ));
    }
    let limit = enumeration_limit.min(MAX_CLUSTER_SIZE);
    let sizes = design.sizes.truncated_pmf(SIZE_TAIL_MASS);
    if let Some(&(largest, _)) = sizes.iter().max_by_key(|e| e.0) {
        if largest > limit {
            return Err(Error::SizeLimit { size: largest, limit });
        }
    }
    let (q1, q0) = design.baseline.probabilities();
    let (mut num1, mut den1, mut num0, mut den0) = (0.0, 0.0, 0.0, 0.0);
    for (n, size_mass) in sizes {
        for (m, count_mass) in design.covariates.treated_count_pmf(n).into_iter().enumerate() {
            if count_mass == 0.0 {
                continue;
            }
            let mut x = vec![true; m];
            x.resize(n, false);
            let chain = SubsetChain::new(&x, params)?;
            for a in 0..=m {
                let wa = binomial_pmf(m, a, q1);
                for b in 0..=(n - m) {
                    let w = size_mass * count_mass * wa * binomial_pmf(n - m, b, q0);
                    if w == 0.0 {
                        continue;
                    }
                    let y0: Vec<bool> = (0..n).map(|j| if j < m { j < a } else { j - m < b }).collect();
                    let marg = chain.marginals(&y0, t)?;
                    for j in 0..n {
                        if design.exclusion == Exclusion::ExcludeBaselineInfected && y0[j] {
                            continue;
                        }
                        if x[j] {
                            num1 += w * marg[j];
                            den1 += w;
                        } else {
                            num0 += w * marg[j];
                            den0 += w;
                        }
                    }
                }
            }
        }
    }
    if den1 == 0.0 || den0 == 0.0 {
        return Err(Error::UndefinedRatio(
            "design leaves one covariate arm without eligible subjects".into(),
        ));
    }
    Ok((num1 / den1, num0 / den0))
}

/// `E[Y | x = 1] / E[Y | x = 0]` for the design, exact up to integration
/// tolerance.
pub fn expected_rr_exact(design: &ExactDesign, params: &EpidemicParams, t: f64) -> Result<f64> {
    expected_rr_exact_with_limit(design, params, t, DEFAULT_ENUMERATION_LIMIT)
}

pub fn expected_rr_exact_with_limit(
    design: &ExactDesign,
    params: &EpidemicParams,
    t: f64,
    enumeration_limit: usize,
) -> Result<f64> {
    let (p1, p0) = expected_arm_risks(design, params, t, enumeration_limit)?;
    if p0 == 0.0 {
        return Err(Error::UndefinedRatio("control-arm risk is zero".into()));
    }
    Ok(p1 / p0)
}
