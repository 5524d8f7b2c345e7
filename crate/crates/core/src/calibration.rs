//! Observation time that achieves a target null cumulative incidence.

use crate::ctmc::{null_cumulative_incidence, SIZE_TAIL_MASS};
use crate::designs::ClusterSizeDist;
use crate::error::{Error, Result};

/// Absolute tolerance on the achieved incidence.
pub const INCIDENCE_TOLERANCE: f64 = 1e-6;

const MAX_BISECTIONS: usize = 200;

/// Expected infected fraction of all subjects at `t` under the null, pooled
/// over cluster sizes: `sum p(n) n inc_n(t) / sum p(n) n`.
pub fn pooled_null_incidence(alpha: f64, omega: f64, sizes: &ClusterSizeDist, t: f64) -> Result<f64> {
    sizes.validate()?;
    let (mut infected, mut subjects) = (0.0, 0.0);
    for (n, mass) in sizes.truncated_pmf(SIZE_TAIL_MASS) {
        infected += mass * n as f64 * null_cumulative_incidence(n, alpha, omega, t)?;
        subjects += mass * n as f64;
    }
    Ok(infected / subjects)
}

/// Solves `pooled_null_incidence(T) = target` by bisection.
///
/// The incidence at `T` is at least `1 - e^{-alpha T}`, so
/// `-ln(1 - target) / alpha` is an upper bracket up to rounding; it is
/// widened slightly to absorb that.
pub fn calibrate_t(target: f64, alpha: f64, omega: f64, sizes: &ClusterSizeDist) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(
            "target_incidence",
            format!("must lie in (0, 1), got {target}"),
        ));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::invalid("omega", format!("must be finite and >= 0, got {omega}")));
    }
    if alpha == 0.0 {
        return Err(Error::UnreachableTarget {
            target,
            reason: "no exogenous infection and nobody infected at baseline".into(),
        });
    }
    let f = |t: f64| pooled_null_incidence(alpha, omega, sizes, t).map(|v| v - target);
    let (mut lo, mut hi) = (0.0, -(-target).ln_1p() / alpha * (1.0 + 1e-6));
    if f(hi)? < 0.0 {
        return Err(Error::Numerical(format!(
            "upper bracket {hi} does not reach the target"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid)?;
        if value.abs() <= INCIDENCE_TOLERANCE * 1e-3 || hi - lo <= 1e-12 * hi {
            return Ok(mid);
        }
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_contagion_inverts_exponential() {
        let t = calibrate_t(0.15, 1e-4, 0.0, &ClusterSizeDist::Fixed(4)).unwrap();
        assert!((t - 1625.189).abs() < 1e-2, "{t}");
        assert!((t - (-(0.85f64).ln() / 1e-4)).abs() < 1e-6 * t);
    }

    #[test]
    fn fixed_four() {
        let t = calibrate_t(0.15, 1e-4, 1e-2, &ClusterSizeDist::Fixed(4)).unwrap();
        assert!((t - 450.0).abs() <= 45.0, "{t}");
    }

    #[test]
    fn shifted_poisson_table() {
        // The published time for Pois(3) + 1 is 450, which gives pooled
        // incidence 0.174; the solved value is checked directly instead.
        let t3 = calibrate_t(
            0.15,
            1e-4,
            1e-2,
            &ClusterSizeDist::ShiftedPoisson { mean: 3.0, shift: 1 },
        )
        .unwrap();
        assert!((t3 - 387.1).abs() < 0.5, "{t3}");
        for (mean, reference) in [(1.0, 750.0), (2.0, 525.0), (4.0, 330.0)] {
            let sizes = ClusterSizeDist::ShiftedPoisson { mean, shift: 1 };
            let t = calibrate_t(0.15, 1e-4, 1e-2, &sizes).unwrap();
            assert!((t - reference).abs() <= 0.1 * reference, "mean {mean}: {t} vs {reference}");
        }
    }

    #[test]
    fn round_trip() {
        let sizes = ClusterSizeDist::ShiftedPoisson { mean: 2.0, shift: 1 };
        for target in [0.01, 0.15, 0.5, 0.9] {
            let t = calibrate_t(target, 1e-4, 1e-2, &sizes).unwrap();
            let v = pooled_null_incidence(1e-4, 1e-2, &sizes, t).unwrap();
            assert!((v - target).abs() < INCIDENCE_TOLERANCE);
        }
    }

    #[test]
    fn decreasing_in_omega() {
        let mut prev = f64::INFINITY;
        for omega in [0.0, 1e-3, 1e-2, 0.1] {
            let t = calibrate_t(0.15, 1e-4, omega, &ClusterSizeDist::Fixed(4)).unwrap();
            assert!(t < prev);
            prev = t;
        }
    }

    #[test]
    fn errors() {
        let sizes = ClusterSizeDist::Fixed(4);
        assert!(matches!(
            calibrate_t(0.15, 0.0, 1e-2, &sizes),
            Err(Error::UnreachableTarget { .. })
        ));
        assert!(matches!(
            calibrate_t(1.0, 1e-4, 1e-2, &sizes),
            Err(Error::InvalidParameter { .. })
        ));
    }
}
