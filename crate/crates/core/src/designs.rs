//! Study designs: cluster sizes, covariate assignment, baseline infections.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Number of treated subjects in a block-randomized cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRule {
    ExactlyK(usize),
    FloorHalf,
    ExactlyOne,
}

impl BlockRule {
    /// Treated count for a cluster of size `n`. `ExactlyK` with `k > n` is
    /// clamped to `n`.
    pub fn treated_count(&self, n: usize) -> usize {
        match *self {
            BlockRule::ExactlyK(k) if k > n => {
                log::warn!("block size k = {k} exceeds cluster size {n}; clamping to {n}");
                n
            }
            BlockRule::ExactlyK(k) => k,
            BlockRule::FloorHalf => n / 2,
            BlockRule::ExactlyOne => 1.min(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateScheme {
    /// Independent `x_j ~ Bernoulli(p)`.
    Bernoulli { p: f64 },
    /// A uniformly random subset of fixed size is treated.
    Block(BlockRule),
    /// The whole cluster shares one covariate value, treated with probability
    /// `p`. With `exact_split` the study treats exactly `round(p N)` clusters
    /// chosen uniformly, instead of flipping a coin per cluster.
    ClusterRandomized { p: f64, exact_split: bool },
}

impl CovariateScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovariateScheme::Bernoulli { p } | CovariateScheme::ClusterRandomized { p, .. } => {
                check_probability("design.p", p)
            }
            CovariateScheme::Block(_) => Ok(()),
        }
    }

    /// Distribution of the number of treated subjects in a cluster of size
    /// `n`; entry `m` is `P(sum x = m)`. Every scheme here is exchangeable,
    /// so this count determines the assignment law up to relabeling.
    pub fn treated_count_pmf(&self, n: usize) -> Vec<f64> {
        let mut pmf = vec![0.0; n + 1];
        match *self {
            CovariateScheme::Bernoulli { p } => {
                for (m, slot) in pmf.iter_mut().enumerate() {
                    *slot = binomial_pmf(n, m, p);
                }
            }
            CovariateScheme::Block(rule) => pmf[rule.treated_count(n)] = 1.0,
            CovariateScheme::ClusterRandomized { p, .. } => {
                pmf[n] += p;
                pmf[0] += 1.0 - p;
            }
        }
        pmf
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterSizeDist {
    Fixed(usize),
    /// `Poisson(mean) + shift`.
    ShiftedPoisson {
        mean: f64,
        shift: usize,
    },
}

impl ClusterSizeDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClusterSizeDist::Fixed(0) => Err(Error::invalid("design.n", "cluster size must be >= 1")),
            ClusterSizeDist::Fixed(_) => Ok(()),
            ClusterSizeDist::ShiftedPoisson { mean, shift } => {
                if !mean.is_finite() || mean < 0.0 {
                    return Err(Error::invalid(
                        "design.size_mean",
                        format!("must be finite and >= 0, got {mean}"),
                    ));
                }
                if shift < 1 {
                    return Err(Error::invalid("design.size_shift", "must be >= 1"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ClusterSizeDist::Fixed(n) => n as f64,
            ClusterSizeDist::ShiftedPoisson { mean, shift } => mean + shift as f64,
        }
    }

    /// `(size, probability)` pairs covering at least `1 - tail` of the mass,
    /// renormalized to sum to one.
    pub fn truncated_pmf(&self, tail: f64) -> Vec<(usize, f64)> {
        match *self {
            ClusterSizeDist::Fixed(n) => vec![(n, 1.0)],
            ClusterSizeDist::ShiftedPoisson { mean, shift } => {
                if mean == 0.0 {
                    return vec![(shift, 1.0)];
                }
                let mut out = Vec::new();
                let mut mass = (-mean).exp();
                let mut cumulative = 0.0;
                let mut k = 0usize;
                loop {
                    out.push((k + shift, mass));
                    cumulative += mass;
                    // Past the mode the remaining tail is below the next term
                    // times a geometric factor, so cumulative mass suffices.
                    if cumulative >= 1.0 - tail && k as f64 >= mean {
                        break;
                    }
                    k += 1;
                    mass *= mean / k as f64;
                }
                for entry in &mut out {
                    entry.1 /= cumulative;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineScheme {
    NoneInfected,
    /// Independent baseline infection with probability `q1` for treated and
    /// `q0` for control subjects.
    ConditionalBernoulli {
        q1: f64,
        q0: f64,
    },
}

impl BaselineScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineScheme::NoneInfected => Ok(()),
            BaselineScheme::ConditionalBernoulli { q1, q0 } => {
                check_probability("design.q1", q1)?;
                check_probability("design.q0", q0)
            }
        }
    }

    pub(crate) fn probabilities(&self) -> (f64, f64) {
        match *self {
            BaselineScheme::NoneInfected => (0.0, 0.0),
            BaselineScheme::ConditionalBernoulli { q1, q0 } => (q1, q0),
        }
    }
}

fn check_probability(field: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(field, format!("must lie in [0, 1], got {p}")));
    }
    Ok(())
}

pub(crate) fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let mut log_choose = 0.0;
    for i in 0..k {
        log_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (log_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

pub fn draw_cluster_size<R: Rng + ?Sized>(rng: &mut R, dist: &ClusterSizeDist) -> usize {
    match *dist {
        ClusterSizeDist::Fixed(n) => n,
        ClusterSizeDist::ShiftedPoisson { mean, shift } => {
            if mean == 0.0 {
                return shift;
            }
            let poisson = Poisson::new(mean).expect("validated Poisson mean");
            let draw: f64 = poisson.sample(rng);
            draw as usize + shift
        }
    }
}

pub fn assign_covariates<R: Rng + ?Sized>(rng: &mut R, scheme: &CovariateScheme, n: usize) -> Vec<bool> {
    match *scheme {
        CovariateScheme::Bernoulli { p } => (0..n).map(|_| rng.gen_bool(p)).collect(),
        CovariateScheme::Block(rule) => {
            let k = rule.treated_count(n);
            let mut x = vec![false; n];
            for j in sample(rng, n, k) {
                x[j] = true;
            }
            x
        }
        CovariateScheme::ClusterRandomized { p, .. } => vec![rng.gen_bool(p); n],
    }
}

/// Arms for an exact-split cluster-randomized study: exactly
/// `round(p * clusters)` entries are `true`, placed uniformly at random.
pub fn exact_split_arms<R: Rng + ?Sized>(rng: &mut R, clusters: usize, p: f64) -> Vec<bool> {
    let treated = ((p * clusters as f64).round() as usize).min(clusters);
    let mut arms = vec![false; clusters];
    for i in sample(rng, clusters, treated) {
        arms[i] = true;
    }
    arms
}

pub fn assign_baseline<R: Rng + ?Sized>(rng: &mut R, scheme: &BaselineScheme, x: &[bool]) -> Vec<bool> {
    match *scheme {
        BaselineScheme::NoneInfected => vec![false; x.len()],
        BaselineScheme::ConditionalBernoulli { q1, q0 } => {
            x.iter().map(|&xj| rng.gen_bool(if xj { q1 } else { q0 })).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    const DRAWS: usize = 100_000;

    fn within_3se(mean: f64, expected: f64, variance: f64, n: usize) -> bool {
        (mean - expected).abs() <= 3.0 * (variance / n as f64).sqrt()
    }

    #[test]
    fn fixed_size() {
        let mut rng = StreamSeed::root(1).rng();
        assert!((0..100).all(|_| draw_cluster_size(&mut rng, &ClusterSizeDist::Fixed(4)) == 4));
    }

    #[test]
    fn shifted_poisson_moments() {
        let mut rng = StreamSeed::root(2).rng();
        let dist = ClusterSizeDist::ShiftedPoisson { mean: 3.0, shift: 1 };
        let sum: usize = (0..DRAWS).map(|_| draw_cluster_size(&mut rng, &dist)).sum();
        assert!(within_3se(sum as f64 / DRAWS as f64, 4.0, 3.0, DRAWS));

        let degenerate = ClusterSizeDist::ShiftedPoisson { mean: 0.0, shift: 1 };
        assert!((0..100).all(|_| draw_cluster_size(&mut rng, &degenerate) == 1));
    }

    #[test]
    fn truncated_pmf_mass() {
        let pmf = ClusterSizeDist::ShiftedPoisson { mean: 2.0, shift: 1 }.truncated_pmf(1e-9);
        let total: f64 = pmf.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(pmf[0].0, 1);
        let mean: f64 = pmf.iter().map(|&(n, p)| n as f64 * p).sum();
        assert!((mean - 3.0).abs() < 1e-7);
        assert_eq!(ClusterSizeDist::Fixed(4).truncated_pmf(1e-9), vec![(4, 1.0)]);
    }

    #[test]
    fn block_rules() {
        let mut rng = StreamSeed::root(3).rng();
        for _ in 0..1000 {
            let x = assign_covariates(&mut rng, &CovariateScheme::Block(BlockRule::ExactlyK(2)), 4);
            assert_eq!(x.iter().filter(|&&v| v).count(), 2);
            let x = assign_covariates(&mut rng, &CovariateScheme::Block(BlockRule::FloorHalf), 5);
            assert_eq!(x.iter().filter(|&&v| v).count(), 2);
            let x = assign_covariates(&mut rng, &CovariateScheme::Block(BlockRule::ExactlyOne), 3);
            assert_eq!(x.iter().filter(|&&v| v).count(), 1);
        }
        let x = assign_covariates(&mut rng, &CovariateScheme::Block(BlockRule::ExactlyK(6)), 3);
        assert_eq!(x, vec![true; 3]);
    }

    #[test]
    fn block_positions_exchangeable() {
        let mut rng = StreamSeed::root(4).rng();
        let scheme = CovariateScheme::Block(BlockRule::ExactlyK(2));
        let mut counts = [0usize; 5];
        for _ in 0..DRAWS {
            for (j, v) in assign_covariates(&mut rng, &scheme, 5).into_iter().enumerate() {
                counts[j] += usize::from(v);
            }
        }
        for c in counts {
            assert!(within_3se(c as f64 / DRAWS as f64, 0.4, 0.24, DRAWS));
        }
    }

    #[test]
    fn cluster_randomized_is_all_or_nothing() {
        let mut rng = StreamSeed::root(5).rng();
        let scheme = CovariateScheme::ClusterRandomized {
            p: 0.5,
            exact_split: false,
        };
        let mut ones = 0usize;
        for _ in 0..DRAWS {
            let x = assign_covariates(&mut rng, &scheme, 4);
            assert!(x.iter().all(|&v| v == x[0]));
            ones += usize::from(x[0]);
        }
        assert!(within_3se(ones as f64 / DRAWS as f64, 0.5, 0.25, DRAWS));
    }

    #[test]
    fn exact_split_count() {
        let mut rng = StreamSeed::root(6).rng();
        let arms = exact_split_arms(&mut rng, 500, 0.3);
        assert_eq!(arms.iter().filter(|&&a| a).count(), 150);
    }

    #[test]
    fn bernoulli_components_uncorrelated() {
        let mut rng = StreamSeed::root(7).rng();
        let scheme = CovariateScheme::Bernoulli { p: 0.5 };
        let (mut s0, mut s1, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..DRAWS {
            let x = assign_covariates(&mut rng, &scheme, 3);
            let (a, b) = (f64::from(u8::from(x[0])), f64::from(u8::from(x[1])));
            s0 += a;
            s1 += b;
            s01 += a * b;
        }
        let n = DRAWS as f64;
        let cov = s01 / n - (s0 / n) * (s1 / n);
        // Var of the product of two independent Bernoulli(1/2) is 3/16.
        assert!(cov.abs() <= 3.0 * (0.1875 / n).sqrt());
    }

    #[test]
    fn baseline_draws() {
        let mut rng = StreamSeed::root(8).rng();
        let x = vec![true, false, true, false];
        assert_eq!(
            assign_baseline(&mut rng, &BaselineScheme::NoneInfected, &x),
            vec![false; 4]
        );
        let zero = BaselineScheme::ConditionalBernoulli { q1: 0.0, q0: 0.0 };
        assert_eq!(assign_baseline(&mut rng, &zero, &x), vec![false; 4]);

        let scheme = BaselineScheme::ConditionalBernoulli { q1: 0.3, q0: 0.1 };
        let x = vec![true, false];
        let (mut c1, mut c0) = (0usize, 0usize);
        for _ in 0..DRAWS {
            let y = assign_baseline(&mut rng, &scheme, &x);
            c1 += usize::from(y[0]);
            c0 += usize::from(y[1]);
        }
        assert!(within_3se(c1 as f64 / DRAWS as f64, 0.3, 0.21, DRAWS));
        assert!(within_3se(c0 as f64 / DRAWS as f64, 0.1, 0.09, DRAWS));
    }

    #[test]
    fn treated_count_pmfs() {
        let pmf = CovariateScheme::Bernoulli { p: 0.5 }.treated_count_pmf(4);
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
        for (a, b) in pmf.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let pmf = CovariateScheme::ClusterRandomized {
            p: 0.25,
            exact_split: false,
        }
        .treated_count_pmf(3);
        assert_eq!(pmf, vec![0.75, 0.0, 0.0, 0.25]);
        assert_eq!(
            CovariateScheme::Block(BlockRule::FloorHalf).treated_count_pmf(5)[2],
            1.0
        );
    }

    #[test]
    fn validation() {
        assert!(CovariateScheme::Bernoulli { p: 1.5 }.validate().is_err());
        assert!(ClusterSizeDist::Fixed(0).validate().is_err());
        assert!(ClusterSizeDist::ShiftedPoisson { mean: 1.0, shift: 0 }
            .validate()
            .is_err());
        assert!(BaselineScheme::ConditionalBernoulli { q1: -0.1, q0: 0.0 }
            .validate()
            .is_err());
    }
}
