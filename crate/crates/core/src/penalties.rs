use crate::Result;

/// ALM penalty weights `β1..β4` shared by the two-phase and DG3PD solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalties {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

impl Penalties {
    /// `β3 = θ/(1−θ)·β4`, `β1 = c_β1·β4`, `β2 = c_β2·β3`.
    pub fn from_theta(theta: f64, beta4: f64, c_beta1: f64, c_beta2: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return crate::invalid(format!("θ must lie in (0, 1), got {theta}"));
        }
        let beta3 = theta / (1.0 - theta) * beta4;
        let p = Penalties {
            beta1: c_beta1 * beta4,
            beta2: c_beta2 * beta3,
            beta3,
            beta4,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("β1", self.beta1),
            ("β2", self.beta2),
            ("β3", self.beta3),
            ("β4", self.beta4),
        ] {
            if !(b > 0.0) || !b.is_finite() {
                return crate::invalid(format!("{name} must be positive, got {b}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_schedule() {
        let p = Penalties::from_theta(0.9, 0.04, 1.0, 1.3).unwrap();
        assert!((p.beta3 - 0.36).abs() < 1e-12);
        assert!((p.beta2 - 0.468).abs() < 1e-12);
        assert_eq!(p.beta1, 0.04);
        assert!(Penalties::from_theta(1.0, 0.04, 1.0, 1.0).is_err());
        assert!(Penalties::from_theta(0.5, 0.04, 0.0, 1.0).is_err());
    }
}
