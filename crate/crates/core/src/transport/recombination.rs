//! Recombination-generation `R(N, P) = R₀(N, P) (N P - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecombinationKind {
    None,
    /// `R₀ = r0`
    Constant {
        r0: f64,
    },
    /// Shockley-Read-Hall: `R₀ = 1 / (τ_p (N + 1) + τ_n (P + 1))`
    Srh {
        tau_n: f64,
        tau_p: f64,
    },
    /// Auger: `R₀ = c_n N + c_p P`
    Auger {
        c_n: f64,
        c_p: f64,
    },
}

/// Recombination model together with its growth constant `R̄`,
/// `0 ≤ R₀(N, P) ≤ R̄ (1 + N + P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecombinationSpec {
    pub kind: RecombinationKind,
    pub rbar: f64,
}

impl RecombinationSpec {
    pub fn none() -> Self {
        Self {
            kind: RecombinationKind::None,
            rbar: 0.0,
        }
    }

    pub fn new(kind: RecombinationKind) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "recombination parameter {name} = {v} must be positive"
                )))
            }
        };
        let rbar = match kind {
            RecombinationKind::None => 0.0,
            RecombinationKind::Constant { r0 } => {
                positive("r0", r0)?;
                r0
            }
            RecombinationKind::Srh { tau_n, tau_p } => {
                positive("tau_n", tau_n)?;
                positive("tau_p", tau_p)?;
                1.0 / (tau_n + tau_p)
            }
            RecombinationKind::Auger { c_n, c_p } => {
                positive("c_n", c_n)?;
                positive("c_p", c_p)?;
                c_n.max(c_p)
            }
        };
        let spec = Self { kind, rbar };
        spec.check_growth_bound()?;
        Ok(spec)
    }

    /// `R₀(n, p)`
    #[inline]
    pub fn prefactor(&self, n: f64, p: f64) -> f64 {
        match self.kind {
            RecombinationKind::None => 0.0,
            RecombinationKind::Constant { r0 } => r0,
            RecombinationKind::Srh { tau_n, tau_p } => 1.0 / (tau_p * (n + 1.0) + tau_n * (p + 1.0)),
            RecombinationKind::Auger { c_n, c_p } => c_n * n + c_p * p,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, RecombinationKind::None)
    }

    /// Samples `0 ≤ R₀ ≤ R̄ (1 + N + P)` on a log grid of nonnegative densities.
    pub fn check_growth_bound(&self) -> Result<()> {
        let mut samples = vec![0.0];
        samples.extend((0..=40).map(|i| 10f64.powf(-8.0 + 0.4 * f64::from(i))));
        for &n in &samples {
            for &p in &samples {
                let r0 = self.prefactor(n, p);
                let bound = self.rbar * (1.0 + n + p);
                if !(r0 >= 0.0) || r0 > bound * (1.0 + 1e-12) {
                    return Err(Error::HypothesisViolation {
                        hypothesis: Hypothesis::H5,
                        detail: format!("R0({n}, {p}) = {r0} exceeds {} (1 + N + P)", self.rbar),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `R(n, p) = R₀(n, p) (n p - 1)`.
#[inline]
pub fn recombination_rate(n: f64, p: f64, spec: &RecombinationSpec) -> f64 {
    spec.prefactor(n, p) * (n * p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        let specs = [
            RecombinationSpec::none(),
            RecombinationSpec::new(RecombinationKind::Constant { r0: 1.0 }).unwrap(),
            RecombinationSpec::new(RecombinationKind::Srh { tau_n: 1.0, tau_p: 1.0 }).unwrap(),
            RecombinationSpec::new(RecombinationKind::Auger { c_n: 0.1, c_p: 0.3 }).unwrap(),
        ];
        for s in &specs {
            assert_eq!(recombination_rate(1.0, 1.0, s), 0.0);
        }
        assert_eq!(recombination_rate(2.0, 2.0, &specs[1]), 3.0);
        assert_eq!(recombination_rate(2.0, 2.0, &specs[2]), 0.5);
        assert_eq!(specs[2].rbar, 0.5);
        assert_eq!(specs[3].rbar, 0.3);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RecombinationSpec::new(RecombinationKind::Srh { tau_n: 0.0, tau_p: 1.0 }).is_err());
        assert!(RecombinationSpec::new(RecombinationKind::Constant { r0: -1.0 }).is_err());
    }

    #[test]
    fn growth_bound_detects_understated_rbar() {
        let s = RecombinationSpec {
            kind: RecombinationKind::Constant { r0: 2.0 },
            rbar: 1.0,
        };
        assert!(matches!(
            s.check_growth_bound(),
            Err(Error::HypothesisViolation {
                hypothesis: Hypothesis::H5,
                ..
            })
        ));
    }
}
