//! Model parameters and the instantaneous infection hazard.
//!
//! A susceptible subject `j` with binary covariate `x_j` experiences
//!
//! ```text
//! lambda_j = exp(x_j * beta) * (alpha + sum_{k infected} omega * exp(x_k * gamma))
//! ```
//!
//! Hazards are constant in time: the exogenous force `alpha` and the
//! per-infective force `omega` do not vary with calendar time or time since
//! infection.

use crate::error::{Error, Result};

/// The four scalars of the data-generating process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicParams {
    /// Exogenous force of infection, per unit time.
    pub alpha: f64,
    /// Force of infection exerted by one infective on one susceptible, per unit time.
    pub omega: f64,
    /// Log susceptibility effect of `x = 1`.
    pub beta: f64,
    /// Log infectiousness effect of `x = 1`.
    pub gamma: f64,
}

impl EpidemicParams {
    pub fn new(alpha: f64, omega: f64, beta: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            alpha,
            omega,
            beta,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if !self.omega.is_finite() || self.omega < 0.0 {
            return Err(Error::invalid(
                "omega",
                format!("must be finite and >= 0, got {}", self.omega),
            ));
        }
        if !self.beta.is_finite() {
            return Err(Error::invalid("beta", format!("must be finite, got {}", self.beta)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("must be finite, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Same forces of infection with different covariate effects.
    pub fn with_effects(&self, beta: f64, gamma: f64) -> Self {
        Self { beta, gamma, ..*self }
    }

    #[inline]
    pub(crate) fn susceptibility(&self, x: bool) -> f64 {
        if x {
            self.beta.exp()
        } else {
            1.0
        }
    }

    #[inline]
    pub(crate) fn infectiousness(&self, x: bool) -> f64 {
        if x {
            self.gamma.exp()
        } else {
            1.0
        }
    }
}

/// Hazard of infection for a susceptible with covariate `x_j`, given the
/// covariates of the currently infected cluster members.
pub fn individual_hazard<I>(params: &EpidemicParams, x_j: bool, infected_covariates: I) -> f64
where
    I: IntoIterator<Item = bool>,
{
    let mut treated = 0usize;
    let mut control = 0usize;
    for x_k in infected_covariates {
        if x_k {
            treated += 1;
        } else {
            control += 1;
        }
    }
    hazard_from_counts(params, x_j, treated, control)
}

/// Hazard given only how many infectives of each covariate value are present.
#[inline]
pub(crate) fn hazard_from_counts(
    params: &EpidemicParams,
    x_j: bool,
    infected_treated: usize,
    infected_control: usize,
) -> f64 {
    let force =
        params.alpha + params.omega * (infected_control as f64 + infected_treated as f64 * params.infectiousness(true));
    params.susceptibility(x_j) * force
}

/// `exp(beta)`: the ratio of instantaneous risks for `x = 1` versus `x = 0`
/// at any fixed set of infectious contacts.
pub fn hazard_ratio(params: &EpidemicParams) -> f64 {
    params.beta.exp()
}

/// Infection state of one cluster at time `now`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    x: Vec<bool>,
    infection_time: Vec<Option<f64>>,
    now: f64,
}

impl ClusterState {
    /// Everyone susceptible at time zero.
    pub fn new(x: Vec<bool>) -> Self {
        let n = x.len();
        Self {
            x,
            infection_time: vec![None; n],
            now: 0.0,
        }
    }

    /// Subjects flagged in `y0` are infected at time zero.
    pub fn with_baseline(x: Vec<bool>, y0: &[bool]) -> Result<Self> {
        if x.len() != y0.len() {
            return Err(Error::invalid(
                "y0",
                format!("length {} does not match cluster size {}", y0.len(), x.len()),
            ));
        }
        let infection_time = y0.iter().map(|&y| y.then_some(0.0)).collect();
        Ok(Self {
            x,
            infection_time,
            now: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[bool] {
        &self.x
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn infection_time(&self, j: usize) -> Option<f64> {
        self.infection_time[j]
    }

    pub fn is_infected(&self, j: usize) -> bool {
        self.infection_time[j].is_some()
    }

    /// Infection indicators at `now`.
    pub fn infected(&self) -> Vec<bool> {
        self.infection_time.iter().map(Option::is_some).collect()
    }

    pub fn infected_count(&self) -> usize {
        self.infection_time.iter().filter(|t| t.is_some()).count()
    }

    /// Moves the clock forward without any new infections.
    pub fn advance_to(&mut self, time: f64) {
        debug_assert!(time >= self.now);
        self.now = time;
    }

    /// Records the infection of subject `j` at `time` and moves the clock there.
    pub fn infect(&mut self, j: usize, time: f64) {
        debug_assert!(self.infection_time[j].is_none());
        debug_assert!(time >= self.now);
        self.infection_time[j] = Some(time);
        self.now = time;
    }
}

/// Total hazard summed over susceptibles, with the per-susceptible rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibleHazards {
    pub total: f64,
    /// `(subject index, hazard)` for every susceptible, in index order.
    pub rates: Vec<(usize, f64)>,
}

pub fn total_susceptible_hazard(state: &ClusterState, params: &EpidemicParams) -> SusceptibleHazards {
    let (mut treated, mut control) = (0usize, 0usize);
    for (j, &x) in state.x.iter().enumerate() {
        if state.is_infected(j) {
            if x {
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
    let rates: Vec<(usize, f64)> = state
        .x
        .iter()
        .enumerate()
        .filter(|&(j, _)| !state.is_infected(j))
        .map(|(j, &x)| (j, per_arm[usize::from(x)]))
        .collect();
    let total = rates.iter().map(|&(_, r)| r).sum();
    SusceptibleHazards { total, rates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, omega: f64, beta: f64, gamma: f64) -> EpidemicParams {
        EpidemicParams::new(alpha, omega, beta, gamma).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn individual_hazard_examples() {
        let p = params(0.0001, 0.01, 0.0, 0.0);
        assert!(close(individual_hazard(&p, false, []), 0.0001));

        let p = params(0.0001, 0.01, 2f64.ln(), 0.0);
        assert!(close(individual_hazard(&p, true, []), 0.0002));

        let p = params(0.0001, 0.01, 0.0, 3f64.ln());
        assert!(close(individual_hazard(&p, false, [true]), 0.0301));
    }

    #[test]
    fn total_hazard_examples() {
        let p = params(0.0001, 0.01, 0.0, 0.0);
        let state = ClusterState::with_baseline(vec![true, false], &[true, true]).unwrap();
        let h = total_susceptible_hazard(&state, &p);
        assert_eq!(h.total, 0.0);
        assert!(h.rates.is_empty());

        let state = ClusterState::new(vec![true, false]);
        let h = total_susceptible_hazard(&state, &p);
        assert!(close(h.total, 0.0002));

        let p = params(0.0001, 0.01, 2f64.ln(), 3f64.ln());
        let state = ClusterState::with_baseline(vec![true, true, false], &[true, false, false]).unwrap();
        let h = total_susceptible_hazard(&state, &p);
        assert_eq!(h.rates.len(), 2);
        assert_eq!(h.rates[0].0, 1);
        assert!(close(h.rates[0].1, 0.0602));
        assert_eq!(h.rates[1].0, 2);
        assert!(close(h.rates[1].1, 0.0301));
        assert!(close(h.total, 0.0903));
    }

    #[test]
    fn hazard_ratio_examples() {
        assert_eq!(hazard_ratio(&params(1e-4, 1e-2, 0.0, 0.0)), 1.0);
        assert!(close(hazard_ratio(&params(1e-4, 1e-2, 2f64.ln(), 0.0)), 2.0));
        assert!((hazard_ratio(&params(1e-4, 1e-2, -1.0, 0.0)) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(EpidemicParams::new(-1.0, 0.0, 0.0, 0.0).is_err());
        assert!(EpidemicParams::new(0.0, f64::INFINITY, 0.0, 0.0).is_err());
        assert!(EpidemicParams::new(0.0, 0.0, f64::NAN, 0.0).is_err());
        let err = EpidemicParams::new(0.0, 0.0, 0.0, f64::NEG_INFINITY).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn baseline_length_mismatch() {
        assert!(ClusterState::with_baseline(vec![true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn ratio_is_exp_beta(
            alpha in 0.0f64..1.0, omega in 0.0f64..1.0,
            beta in -5.0f64..5.0, gamma in -5.0f64..5.0,
            infected in proptest::collection::vec(any::<bool>(), 0..6),
        ) {
            prop_assume!(alpha > 1e-9 || (omega > 1e-9 && !infected.is_empty()));
            let p = params(alpha, omega, beta, gamma);
            let h1 = individual_hazard(&p, true, infected.iter().copied());
            let h0 = individual_hazard(&p, false, infected.iter().copied());
            prop_assert!((h1 / h0 - beta.exp()).abs() <= 1e-12 * beta.exp());
        }

        #[test]
        fn monotone_in_infected_contacts(
            alpha in 0.0f64..1.0, omega in 1e-6f64..1.0,
            beta in -5.0f64..5.0, gamma in -5.0f64..5.0,
            x_j in any::<bool>(), mut infected in proptest::collection::vec(any::<bool>(), 0..6),
            extra in any::<bool>(),
        ) {
            let p = params(alpha, omega, beta, gamma);
            let before = individual_hazard(&p, x_j, infected.iter().copied());
            infected.push(extra);
            let after = individual_hazard(&p, x_j, infected.iter().copied());
            prop_assert!(after >= before);
        }

        #[test]
        fn joint_force_scaling(
            alpha in 0.0f64..1.0, omega in 0.0f64..1.0,
            beta in -5.0f64..5.0, gamma in -5.0f64..5.0, c in 0.01f64..100.0,
            x_j in any::<bool>(), infected in proptest::collection::vec(any::<bool>(), 0..6),
        ) {
            let p = params(alpha, omega, beta, gamma);
            let q = params(alpha * c, omega * c, beta, gamma);
            let h = individual_hazard(&p, x_j, infected.iter().copied());
            let hc = individual_hazard(&q, x_j, infected.iter().copied());
            prop_assert!((hc - c * h).abs() <= 1e-12 * (c * h).max(1e-300));
        }
    }
}
