//! Event-driven simulation of cluster cohorts.

use rand::Rng;
use rand_distr::Exp1;

use crate::designs::{
    assign_baseline, assign_covariates, draw_cluster_size, exact_split_arms, BaselineScheme, ClusterSizeDist,
    CovariateScheme,
};
use crate::error::{Error, Result};
use crate::hazard::{total_susceptible_hazard, ClusterState, EpidemicParams};
use crate::rng::StreamSeed;

/// How each cluster's observation time is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationRule {
    Fixed(f64),
    Exponential { mean: f64 },
}

impl ObservationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ObservationRule::Fixed(t) if !(t.is_finite() && t > 0.0) => Err(Error::invalid(
                "observation.t",
                format!("must be finite and > 0, got {t}"),
            )),
            ObservationRule::Exponential { mean } if !(mean.is_finite() && mean > 0.0) => Err(Error::invalid(
                "observation.mean",
                format!("must be finite and > 0, got {mean}"),
            )),
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ObservationRule::Fixed(t) => t,
            ObservationRule::Exponential { mean } => {
                let e: f64 = rng.sample(Exp1);
                e * mean
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub params: EpidemicParams,
    pub covariates: CovariateScheme,
    pub sizes: ClusterSizeDist,
    pub baseline: BaselineScheme,
    pub observation: ObservationRule,
    pub clusters: usize,
    pub master_seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.covariates.validate()?;
        self.sizes.validate()?;
        self.baseline.validate()?;
        self.observation.validate()?;
        if self.clusters == 0 {
            return Err(Error::invalid("design.clusters", "must be >= 1"));
        }
        Ok(())
    }
}

/// One simulated cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub x: Vec<bool>,
    /// Infected at baseline.
    pub y0: Vec<bool>,
    /// Infected by the end of observation.
    pub y_t: Vec<bool>,
    /// Index case, for clusters selected through an infected subject.
    pub index: Option<usize>,
    /// Length of the observation window after baseline.
    pub observed_at: f64,
}

impl ClusterOutcome {
    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Runs the competing-risks process from `state` until absolute time `until`.
fn run_until<R: Rng + ?Sized>(rng: &mut R, state: &mut ClusterState, params: &EpidemicParams, until: f64) {
    loop {
        let hazards = total_susceptible_hazard(state, params);
        if hazards.total <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / hazards.total;
        let next = state.now() + wait;
        if next > until {
            break;
        }
        let mut target = rng.gen::<f64>() * hazards.total;
        let mut chosen = hazards.rates[hazards.rates.len() - 1].0;
        for &(j, rate) in &hazards.rates {
            if target < rate {
                chosen = j;
                break;
            }
            target -= rate;
        }
        state.infect(chosen, next);
    }
    state.advance_to(until.max(state.now()));
}

/// Simulates one cluster from baseline `y0` for time `t`.
pub fn simulate_cluster<R: Rng + ?Sized>(
    rng: &mut R,
    x: &[bool],
    y0: &[bool],
    params: &EpidemicParams,
    t: f64,
) -> Result<ClusterOutcome> {
    let mut state = ClusterState::with_baseline(x.to_vec(), y0)?;
    run_until(rng, &mut state, params, t);
    Ok(ClusterOutcome {
        x: x.to_vec(),
        y0: y0.to_vec(),
        y_t: state.infected(),
        index: None,
        observed_at: t,
    })
}

/// Simulates a study with streams rooted at the config's master seed.
pub fn simulate_study(config: &StudyConfig) -> Result<Vec<ClusterOutcome>> {
    simulate_study_with(config, StreamSeed::root(config.master_seed))
}

/// Simulates a study; cluster `i` draws from `seed.child(i)`.
pub fn simulate_study_with(config: &StudyConfig, seed: StreamSeed) -> Result<Vec<ClusterOutcome>> {
    config.validate()?;
    let split = match config.covariates {
        CovariateScheme::ClusterRandomized { p, exact_split: true } => {
            Some(exact_split_arms(&mut seed.child(u64::MAX).rng(), config.clusters, p))
        }
        _ => None,
    };
    (0..config.clusters)
        .map(|i| {
            let mut rng = seed.child(i as u64).rng();
            let n = draw_cluster_size(&mut rng, &config.sizes);
            let x = match &split {
                Some(arms) => vec![arms[i]; n],
                None => assign_covariates(&mut rng, &config.covariates, n),
            };
            let y0 = assign_baseline(&mut rng, &config.baseline, &x);
            let t = config.observation.draw(&mut rng);
            simulate_cluster(&mut rng, &x, &y0, &config.params, t)
        })
        .collect()
}

/// Two-phase design: clusters enter the study through an infected subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexCaseDesign {
    pub burn_in: f64,
    pub follow_up: f64,
    pub target: usize,
    /// Largest number of clusters simulated before giving up.
    pub max_attempts: usize,
}

impl IndexCaseDesign {
    pub fn new(burn_in: f64, follow_up: f64, target: usize) -> Self {
        Self {
            burn_in,
            follow_up,
            target,
            max_attempts: target.saturating_mul(1000).max(10_000),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in.is_finite() && self.burn_in > 0.0) {
            return Err(Error::invalid(
                "index.burn_in",
                format!("must be > 0, got {}", self.burn_in),
            ));
        }
        if !(self.follow_up.is_finite() && self.follow_up > 0.0) {
            return Err(Error::invalid(
                "index.follow_up",
                format!("must be > 0, got {}", self.follow_up),
            ));
        }
        if self.target == 0 {
            return Err(Error::invalid("index.target", "must be >= 1"));
        }
        Ok(())
    }
}

/// Simulates all-uninfected clusters through the burn-in, keeps those with
/// an infection, picks an index case uniformly among the infected and
/// follows the cluster further. Clusters are drawn in batches of
/// `4 * target`; the first `target` retained clusters in index order are
/// returned. The config's baseline scheme and observation rule are unused.
pub fn run_index_case_design(
    config: &StudyConfig,
    design: &IndexCaseDesign,
    seed: StreamSeed,
) -> Result<Vec<ClusterOutcome>> {
    config.validate()?;
    design.validate()?;
    let batch = design.target.saturating_mul(4);
    let mut retained = Vec::with_capacity(design.target);
    let mut next = 0usize;
    while retained.len() < design.target {
        if next >= design.max_attempts {
            return Err(Error::ProgressFailure {
                attempts: next,
                reason: format!(
                    "{} of {} clusters had an infection by the end of burn-in",
                    retained.len(),
                    design.target
                ),
            });
        }
        let end = (next + batch).min(design.max_attempts);
        for i in next..end {
            if retained.len() == design.target {
                break;
            }
            if let Some(outcome) = index_cluster(config, design, seed.child(i as u64)) {
                retained.push(outcome);
            }
        }
        next = end;
    }
    Ok(retained)
}

fn index_cluster(config: &StudyConfig, design: &IndexCaseDesign, seed: StreamSeed) -> Option<ClusterOutcome> {
    let mut rng = seed.rng();
    let n = draw_cluster_size(&mut rng, &config.sizes);
    let x = assign_covariates(&mut rng, &config.covariates, n);
    let mut state = ClusterState::new(x.clone());
    run_until(&mut rng, &mut state, &config.params, design.burn_in);
    let y0 = state.infected();
    let infected: Vec<usize> = (0..n).filter(|&j| y0[j]).collect();
    if infected.is_empty() {
        return None;
    }
    let index = infected[rng.gen_range(0..infected.len())];
    run_until(&mut rng, &mut state, &config.params, design.burn_in + design.follow_up);
    Some(ClusterOutcome {
        x,
        y0,
        y_t: state.infected(),
        index: Some(index),
        observed_at: design.follow_up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::BlockRule;
    use crate::exact_pair::expected_infection_probs;

    fn params(alpha: f64, omega: f64, beta: f64, gamma: f64) -> EpidemicParams {
        EpidemicParams::new(alpha, omega, beta, gamma).unwrap()
    }

    fn fig3_config(seed: u64) -> StudyConfig {
        StudyConfig {
            params: params(1e-4, 1e-2, 0.0, 0.0),
            covariates: CovariateScheme::Block(BlockRule::ExactlyK(2)),
            sizes: ClusterSizeDist::Fixed(4),
            baseline: BaselineScheme::NoneInfected,
            observation: ObservationRule::Fixed(450.0),
            clusters: 500,
            master_seed: seed,
        }
    }

    fn within(mean: f64, p: f64, reps: usize) -> bool {
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        (mean - p).abs() <= 3.0 * se.max(1e-12)
    }

    #[test]
    fn no_exogenous_force_no_infections() {
        let p = params(0.0, 0.5, 1.0, 1.0);
        for s in 0..20 {
            let mut rng = StreamSeed::root(s).rng();
            let o = simulate_cluster(&mut rng, &[true, false, true], &[false; 3], &p, 1e6).unwrap();
            assert_eq!(o.y_t, vec![false; 3]);
        }
    }

    #[test]
    fn baseline_infections_persist() {
        let p = params(1e-3, 0.1, 0.0, 0.0);
        let mut rng = StreamSeed::root(1).rng();
        let o = simulate_cluster(&mut rng, &[true, false, false], &[false, true, false], &p, 5.0).unwrap();
        assert!(o.y_t[1]);
    }

    #[test]
    fn independent_bernoulli_without_contagion() {
        let p = params(1e-3, 0.0, 0.0, 0.0);
        let reps = 100_000;
        let root = StreamSeed::root(7);
        let mut infected = 0usize;
        for r in 0..reps {
            let mut rng = root.child(r as u64).rng();
            let o = simulate_cluster(&mut rng, &[true, false], &[false; 2], &p, 300.0).unwrap();
            infected += o.y_t.iter().filter(|&&y| y).count();
        }
        let mean = infected as f64 / (2 * reps) as f64;
        let expected = 1.0 - (-0.3f64).exp();
        assert!(within(mean, expected, 2 * reps), "{mean} vs {expected}");
    }

    #[test]
    fn pair_matches_closed_form() {
        let p = params(1e-4, 1e-2, 0.5, -0.5);
        let exact = expected_infection_probs(&p, 450.0).unwrap();
        let reps = 100_000;
        let root = StreamSeed::root(11);
        let (mut y1, mut y2) = (0usize, 0usize);
        for r in 0..reps {
            let mut rng = root.child(r as u64).rng();
            let o = simulate_cluster(&mut rng, &[true, false], &[false; 2], &p, 450.0).unwrap();
            y1 += usize::from(o.y_t[0]);
            y2 += usize::from(o.y_t[1]);
        }
        assert!(within(y1 as f64 / reps as f64, exact.p_treated, reps));
        assert!(within(y2 as f64 / reps as f64, exact.p_control, reps));
    }

    #[test]
    fn study_shape_and_determinism() {
        let a = simulate_study(&fig3_config(42)).unwrap();
        assert_eq!(a.len(), 500);
        for o in &a {
            assert_eq!(o.n(), 4);
            assert_eq!(o.x.iter().filter(|&&x| x).count(), 2);
            assert_eq!(o.observed_at, 450.0);
        }
        assert_eq!(a, simulate_study(&fig3_config(42)).unwrap());
        assert_ne!(a, simulate_study(&fig3_config(43)).unwrap());
    }

    #[test]
    fn zero_clusters_rejected() {
        let cfg = StudyConfig {
            clusters: 0,
            ..fig3_config(1)
        };
        match simulate_study(&cfg) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "design.clusters"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exponential_observation_times() {
        let cfg = StudyConfig {
            observation: ObservationRule::Exponential { mean: 450.0 },
            clusters: 20_000,
            ..fig3_config(5)
        };
        let out = simulate_study(&cfg).unwrap();
        let mean = out.iter().map(|o| o.observed_at).sum::<f64>() / out.len() as f64;
        let se = 450.0 / (out.len() as f64).sqrt();
        assert!((mean - 450.0).abs() < 3.0 * se);
    }

    #[test]
    fn exact_split_treats_fixed_number_of_clusters() {
        let cfg = StudyConfig {
            covariates: CovariateScheme::ClusterRandomized {
                p: 0.5,
                exact_split: true,
            },
            clusters: 101,
            ..fig3_config(3)
        };
        let out = simulate_study(&cfg).unwrap();
        let treated = out.iter().filter(|o| o.x[0]).count();
        assert_eq!(treated, 51);
        assert!(out.iter().all(|o| o.x.iter().all(|&x| x == o.x[0])));
    }

    #[test]
    fn index_case_postconditions() {
        let design = IndexCaseDesign::new(75.0, 10.0, 200);
        let out = run_index_case_design(&fig3_config(9), &design, StreamSeed::root(9)).unwrap();
        assert_eq!(out.len(), 200);
        for o in &out {
            let idx = o.index.unwrap();
            assert!(o.y0[idx]);
            for j in 0..o.n() {
                assert!(!o.y0[j] || o.y_t[j]);
            }
        }
    }

    #[test]
    fn index_case_without_seeding_fails() {
        let cfg = StudyConfig {
            params: params(0.0, 1e-2, 0.0, 0.0),
            ..fig3_config(1)
        };
        let design = IndexCaseDesign {
            max_attempts: 2_000,
            ..IndexCaseDesign::new(75.0, 10.0, 10)
        };
        assert!(matches!(
            run_index_case_design(&cfg, &design, StreamSeed::root(1)),
            Err(Error::ProgressFailure { attempts: 2_000, .. })
        ));
    }
}
