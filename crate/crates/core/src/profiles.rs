//! Initial density profiles and the observables paired against them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::heat::continuous_backward_flow;
use crate::test_function::TestFunction;

/// Unnormalised initial densities on `[-π, π)`. Placement normalises them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// `½ + |sin((x-π)/2)|^{1/2}`.
    Cusp,
    /// `3 - 2exp(-sin⁶(x/2)/0.05)`.
    Bump,
    /// `3 - 2exp(-sin⁸(x/2)/0.03)`.
    NarrowBump,
    Uniform,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Cusp,
        Profile::Bump,
        Profile::NarrowBump,
        Profile::Uniform,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Profile::Cusp => "cusp",
            Profile::Bump => "bump",
            Profile::NarrowBump => "narrow-bump",
            Profile::Uniform => "uniform",
        }
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            Profile::Cusp => 0.5 + ((x - std::f64::consts::PI) / 2.0).sin().abs().sqrt(),
            Profile::Bump => 3.0 - 2.0 * (-(x / 2.0).sin().powi(6) / 0.05).exp(),
            Profile::NarrowBump => 3.0 - 2.0 * (-(x / 2.0).sin().powi(8) / 0.03).exp(),
            Profile::Uniform => 1.0,
        }
    }

    /// `(min, max)` of the unnormalised formula.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Profile::Cusp => (0.5, 1.5),
            Profile::Bump | Profile::NarrowBump => (1.0, 3.0),
            Profile::Uniform => (1.0, 1.0),
        }
    }

    pub fn test_function(self) -> TestFunction {
        TestFunction::from_fn(self.tag(), move |x| self.value(x))
    }

    /// Smooth first observable: the profile itself, or `exp(cos x - 1)` for
    /// the non-smooth cusp.
    pub fn primary_observable(self) -> TestFunction {
        match self {
            Profile::Cusp | Profile::Uniform => {
                TestFunction::from_fn("exp(cos-1)", |x| (x.cos() - 1.0).exp())
            }
            _ => self.test_function(),
        }
    }

    /// `(φ₁, φ₂)` with `φ₂ = |∂_x P^{t/4} φ₁|²`, optionally scaled to unit L² norm.
    pub fn observables(self, t: f64, normalize_l2: bool) -> Result<(TestFunction, TestFunction)> {
        let phi1 = self.primary_observable();
        let phi2 = continuous_backward_flow(&phi1, t / 4.0)?.gradient_squared();
        if normalize_l2 {
            Ok((phi1.normalized_l2()?, phi2.normalized_l2()?))
        } else {
            Ok((phi1, phi2))
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown profile {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn formula_values() {
        assert!((Profile::Bump.value(0.0) - 1.0).abs() < 1e-15);
        assert!((Profile::Bump.value(-PI) - (3.0 - 2.0 * (-20.0f64).exp())).abs() < 1e-15);
        assert!((Profile::NarrowBump.value(0.0) - 1.0).abs() < 1e-15);
        assert!((Profile::Cusp.value(PI) - 0.5).abs() < 1e-15);
        assert!((Profile::Cusp.value(0.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_hold_on_fine_samples() {
        for p in Profile::ALL {
            let (lo, hi) = p.bounds();
            for i in 0..4096 {
                let v = p.value(-PI + 2.0 * PI * i as f64 / 4096.0);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{p} at {i}: {v}");
            }
        }
    }

    #[test]
    fn tags_round_trip() {
        for p in Profile::ALL {
            assert_eq!(p.tag().parse::<Profile>().unwrap(), p);
        }
        assert!("fig9".parse::<Profile>().is_err());
    }

    #[test]
    fn observables_are_smooth() {
        let (phi1, phi2) = Profile::Bump.observables(0.4, false).unwrap();
        phi1.check_tail(1e-10).unwrap();
        phi2.check_tail(1e-10).unwrap();
        assert!(phi2.eval(0.3) >= -1e-12);
        let (n1, _) = Profile::Cusp.observables(0.4, true).unwrap();
        assert!((n1.l2_norm() - 1.0).abs() < 1e-12);
    }
}
