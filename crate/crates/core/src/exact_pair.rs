//! Closed-form results for a two-person cluster with `x = (1, 0)`, both
//! susceptible at time zero.
//!
//! The first infection happens at rate `a = alpha (e^beta + 1)` and falls on
//! the treated subject with probability `e^beta / (1 + e^beta)`. After that
//! the remaining subject is infected at a constant rate: `e^beta (alpha + omega)`
//! for the treated subject, `alpha + omega e^gamma` for the control. The
//! probability that a subject is still uninfected at `t` is therefore
//!
//! ```text
//! P(Y(t) = 0) = e^{-a t} + c * int_0^t e^{-a s} e^{-b (t - s)} ds
//! ```
//!
//! with `(c, b) = (alpha, e^beta (alpha + omega))` for the treated subject and
//! `(alpha e^beta, alpha + omega e^gamma)` for the control. The integral has a
//! removable singularity at `a = b`; both sides of it are evaluated through
//! `expm1` so the generic and tied forms agree to rounding.

use crate::error::{Error, Result};
use crate::hazard::EpidemicParams;

/// Relative tolerance below which two competing rates are treated as tied.
pub const BRANCH_TOLERANCE: f64 = 1e-9;

/// Which closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairBranch {
    /// `e^beta omega != alpha` and `alpha e^beta != omega e^gamma`.
    Generic,
    /// `e^beta omega = alpha`: the treated subject's two rates are tied.
    TreatedTied,
    /// `alpha e^beta = omega e^gamma`: the control subject's two rates are tied.
    ControlTied,
    /// Both ties hold.
    BothTied,
}

impl PairBranch {
    fn treated_tied(self) -> bool {
        matches!(self, PairBranch::TreatedTied | PairBranch::BothTied)
    }

    fn control_tied(self) -> bool {
        matches!(self, PairBranch::ControlTied | PairBranch::BothTied)
    }

    fn from_ties(treated: bool, control: bool) -> Self {
        match (treated, control) {
            (false, false) => PairBranch::Generic,
            (true, false) => PairBranch::TreatedTied,
            (false, true) => PairBranch::ControlTied,
            (true, true) => PairBranch::BothTied,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvaluation {
    /// `E[Y_1(t)]`, the treated subject.
    pub p_treated: f64,
    /// `E[Y_2(t)]`, the control subject.
    pub p_control: f64,
    pub branch: PairBranch,
}

impl PairEvaluation {
    /// `p_treated / p_control`, or `None` when the control probability is zero.
    pub fn rr(&self) -> Option<f64> {
        (self.p_control > 0.0).then(|| self.p_treated / self.p_control)
    }
}

/// Law of the first infection time and its identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstInfectionLaw {
    pub rate: f64,
    pub p_first_is_treated: f64,
}

/// The rates that drive every closed form.
#[derive(Debug, Clone, Copy)]
struct PairRates {
    exp_beta: f64,
    /// Rate of the first infection.
    first: f64,
    /// Treated subject's rate once the control is infected.
    treated_after: f64,
    /// Control subject's rate once the treated is infected.
    control_after: f64,
}

impl PairRates {
    fn new(p: &EpidemicParams) -> Self {
        let exp_beta = p.beta.exp();
        Self {
            exp_beta,
            first: p.alpha * (exp_beta + 1.0),
            treated_after: exp_beta * (p.alpha + p.omega),
            control_after: p.alpha + p.omega * p.gamma.exp(),
        }
    }
}

fn tied(u: f64, v: f64) -> bool {
    (u - v).abs() <= BRANCH_TOLERANCE * u.abs().max(v.abs())
}

/// Branch selected for `params`, using [`BRANCH_TOLERANCE`].
pub fn select_branch(params: &EpidemicParams) -> PairBranch {
    let exp_beta = params.beta.exp();
    let treated = tied(exp_beta * params.omega, params.alpha);
    let control = tied(params.alpha * exp_beta, params.omega * params.gamma.exp());
    PairBranch::from_ties(treated, control)
}

/// `int_0^t e^{-a s} e^{-b (t - s)} ds`. With `tied` set the rates are taken
/// as equal and the result is `t e^{-a t}`.
fn convolved_survival(a: f64, b: f64, t: f64, tied: bool) -> f64 {
    let gap = (a - b).abs();
    if tied || gap == 0.0 {
        return t * (-a * t).exp();
    }
    let slow = a.min(b);
    (-slow * t).exp() * (-(-gap * t).exp_m1()) / gap
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Evaluates the closed forms in a forced branch. Used to probe continuity
/// across branch boundaries; [`expected_infection_probs`] picks the branch.
pub fn evaluate_in_branch(params: &EpidemicParams, t: f64, branch: PairBranch) -> Result<PairEvaluation> {
    params.validate()?;
    check_time(t)?;
    let r = PairRates::new(params);
    let first_by_t = -(-r.first * t).exp_m1();
    let p_treated = first_by_t - params.alpha * convolved_survival(r.first, r.treated_after, t, branch.treated_tied());
    let p_control =
        first_by_t - params.alpha * r.exp_beta * convolved_survival(r.first, r.control_after, t, branch.control_tied());
    Ok(PairEvaluation {
        p_treated: p_treated.clamp(0.0, 1.0),
        p_control: p_control.clamp(0.0, 1.0),
        branch,
    })
}

/// `(E[Y_1(t)], E[Y_2(t)])` for the treated and control subject.
pub fn expected_infection_probs(params: &EpidemicParams, t: f64) -> Result<PairEvaluation> {
    evaluate_in_branch(params, t, select_branch(params))
}

/// `E[Y_1(t)] / E[Y_2(t)]`.
pub fn exact_risk_ratio(params: &EpidemicParams, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::UndefinedRatio("no time has elapsed at t = 0".into()));
    }
    if params.alpha == 0.0 {
        return Err(Error::UndefinedRatio("alpha = 0: nobody is ever infected".into()));
    }
    let eval = expected_infection_probs(params, t)?;
    eval.rr()
        .ok_or_else(|| Error::UndefinedRatio(format!("control risk underflows at t = {t}")))
}

/// `sum_i coef_i e^{exponent_i}` with the largest exponent factored out.
/// Only the sign of the result is meaningful.
fn scaled_sum(terms: &[(f64, f64)]) -> f64 {
    let top = terms.iter().map(|&(_, e)| e).fold(f64::NEG_INFINITY, f64::max);
    terms.iter().map(|&(c, e)| c * (e - top).exp()).sum()
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of `E[Y_1(t)] - E[Y_2(t)]`, from the piecewise risk-difference
/// expression of the selected branch.
pub fn risk_difference_sign(params: &EpidemicParams, t: f64) -> Result<i8> {
    params.validate()?;
    check_time(t)?;
    if t == 0.0 || params.alpha == 0.0 {
        return Ok(0);
    }
    let (alpha, omega) = (params.alpha, params.omega);
    let r = PairRates::new(params);
    let eb = r.exp_beta;
    let omega_eg = (omega.ln() + params.gamma).exp();
    let omega_e2b = (omega.ln() + 2.0 * params.beta).exp();
    let first = -r.first * t;
    let treated_after = -r.treated_after * t;
    let control_after = -r.control_after * t;
    let treated_gap = alpha - omega * eb;
    let control_gap = alpha * eb - omega_eg;

    let value = match select_branch(params) {
        PairBranch::Generic => {
            let numerator = scaled_sum(&[
                (omega_e2b - omega_eg, first),
                (omega_eg - alpha * eb, treated_after),
                (eb * treated_gap, control_after),
            ]);
            sign(numerator) as f64 * sign(treated_gap * control_gap) as f64
        }
        PairBranch::TreatedTied => {
            let numerator = scaled_sum(&[(eb, control_after), (-(eb + t * control_gap), first)]);
            sign(numerator) as f64 * sign(control_gap) as f64
        }
        PairBranch::ControlTied => {
            let numerator = scaled_sum(&[(1.0 + t * eb * treated_gap, first), (-1.0, treated_after)]);
            sign(numerator) as f64 * sign(treated_gap) as f64
        }
        PairBranch::BothTied => t * (eb - 1.0),
    };
    Ok(sign(value))
}

/// True when `(beta, gamma)` lies in the region where, for long enough
/// follow-up, the risk ratio points opposite to the hazard ratio.
pub fn direction_bias_condition(params: &EpidemicParams) -> Result<bool> {
    params.validate()?;
    if params.omega == 0.0 {
        return Err(Error::NotApplicable("direction-bias region needs omega > 0".into()));
    }
    let (beta, gamma) = (params.beta, params.gamma);
    let eb = beta.exp();
    let eg = gamma.exp();
    let mixed = eb + params.alpha / params.omega * (eb - 1.0);
    Ok(if beta < 0.0 {
        gamma < 2.0 * beta && eg < mixed
    } else if beta > 0.0 {
        gamma > 2.0 * beta && eg > mixed
    } else {
        false
    })
}

/// How the exogenous and contact rates are ordered; selects which
/// sufficient threshold applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdRegime {
    /// `alpha < omega e^beta`.
    ContactDominant,
    /// `alpha > omega e^beta`.
    ExogenousDominant,
    /// `alpha = omega e^beta`; no closed-form threshold.
    TreatedRatesTied,
    /// `alpha e^beta = omega e^gamma`.
    ControlRatesTied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStar {
    /// Refined threshold: the risk ratio is reversed at `t_star` and at the
    /// checked multiples of it.
    pub t_star: f64,
    /// Sufficient threshold from the regime's inequality, when one exists.
    pub analytic_bound: Option<f64>,
    pub regime: ThresholdRegime,
}

/// Multiples of `t*` at which the reversed sign is verified.
pub const PERSISTENCE_MULTIPLES: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

fn regime(params: &EpidemicParams) -> ThresholdRegime {
    match select_branch(params) {
        PairBranch::TreatedTied => ThresholdRegime::TreatedRatesTied,
        PairBranch::ControlTied => ThresholdRegime::ControlRatesTied,
        _ if params.alpha < params.omega * params.beta.exp() => ThresholdRegime::ContactDominant,
        _ => ThresholdRegime::ExogenousDominant,
    }
}

fn log_ratio_threshold(num_hi: f64, num_lo: f64, rate: f64) -> Option<f64> {
    if num_hi <= 0.0 || num_lo <= 0.0 || rate <= 0.0 {
        return None;
    }
    let t = (num_hi.ln() - num_lo.ln()) / rate;
    (t.is_finite() && t > 0.0).then_some(t)
}

fn analytic_threshold(params: &EpidemicParams, regime: ThresholdRegime) -> Option<f64> {
    let (alpha, omega, beta) = (params.alpha, params.omega, params.beta);
    let eb = beta.exp();
    let e2b = (2.0 * beta).exp();
    let eg = params.gamma.exp();
    let control_gap = alpha * eb - omega * eg;
    let treated_gap = alpha - omega * eb;
    let bound = if beta < 0.0 {
        match regime {
            ThresholdRegime::ContactDominant if control_gap < 0.0 => {
                log_ratio_threshold(eb * (omega * eb - alpha), omega * (e2b - eg), omega * eg - alpha * eb)
            }
            ThresholdRegime::ContactDominant => {
                log_ratio_threshold(omega * (e2b - eg), eb * (omega * eb - alpha), control_gap)
            }
            ThresholdRegime::ExogenousDominant => log_ratio_threshold(
                control_gap,
                eb * treated_gap,
                eb * (alpha + omega) - (alpha + omega * eg),
            ),
            ThresholdRegime::TreatedRatesTied => None,
            ThresholdRegime::ControlRatesTied => {
                let rate = eb * (omega * eb - alpha);
                (rate > 0.0).then(|| 1.0 / rate)
            }
        }
    } else {
        match regime {
            ThresholdRegime::ExogenousDominant if control_gap < 0.0 => {
                log_ratio_threshold(omega * (eg - e2b), omega * eg - alpha * eb, treated_gap)
            }
            ThresholdRegime::ExogenousDominant => {
                log_ratio_threshold(eb * treated_gap, control_gap, treated_gap - control_gap)
            }
            ThresholdRegime::ContactDominant => {
                log_ratio_threshold(omega * eg - alpha * eb, omega * (eg - e2b), omega * eb - alpha)
            }
            ThresholdRegime::TreatedRatesTied => {
                let rate = omega * eg - alpha * eb;
                (rate > 0.0).then(|| eb / rate)
            }
            ThresholdRegime::ControlRatesTied => None,
        }
    };
    bound.filter(|t| t.is_finite() && *t > 0.0)
}

/// Smallest `t` (up to bisection resolution) past which the risk ratio's
/// direction is reversed relative to the hazard ratio.
pub fn tstar_bound(params: &EpidemicParams) -> Result<TStar> {
    if !direction_bias_condition(params)? {
        return Err(Error::NotEligible);
    }
    let reversed_sign: i8 = if params.beta < 0.0 { 1 } else { -1 };
    let reversed = |t: f64| -> Result<bool> { Ok(risk_difference_sign(params, t)? == reversed_sign) };
    let persists = |t: f64| -> Result<bool> {
        for m in PERSISTENCE_MULTIPLES {
            if !reversed(m * t)? {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let regime = regime(params);
    let analytic = analytic_threshold(params, regime);

    // Start from a time where the sign is already reversed and stays so.
    let mut upper = match analytic {
        // The inequalities are strict, so step just past the bound.
        Some(bound) => bound * (1.0 + 1e-9),
        None => 1.0 / (params.alpha + params.omega),
    };
    let mut guard = 0;
    while !persists(upper)? {
        upper *= 2.0;
        guard += 1;
        if guard > 200 || !upper.is_finite() {
            return Err(Error::Numerical(format!(
                "risk-difference sign never settled for {params:?}"
            )));
        }
    }

    // Walk down to a time with the unreversed sign, then bisect.
    let mut lower = upper;
    loop {
        lower *= 0.5;
        if lower < upper * 1e-12 {
            return Ok(TStar {
                t_star: upper,
                analytic_bound: analytic,
                regime,
            });
        }
        if !reversed(lower)? {
            break;
        }
    }
    let mut hi = upper;
    for _ in 0..200 {
        let mid = 0.5 * (lower + hi);
        if reversed(mid)? {
            hi = mid;
        } else {
            lower = mid;
        }
        if hi - lower <= 1e-12 * hi {
            break;
        }
    }
    let t_star = if persists(hi)? { hi } else { upper };
    Ok(TStar {
        t_star,
        analytic_bound: analytic,
        regime,
    })
}

/// Rate and identity law of the first infection in the pair.
pub fn first_infection_law(params: &EpidemicParams) -> Result<FirstInfectionLaw> {
    params.validate()?;
    if params.alpha <= 0.0 {
        return Err(Error::Degenerate("alpha = 0: the first infection never happens".into()));
    }
    Ok(FirstInfectionLaw {
        rate: params.alpha * (params.beta.exp() + 1.0),
        p_first_is_treated: 1.0 / (1.0 + (-params.beta).exp()),
    })
}
