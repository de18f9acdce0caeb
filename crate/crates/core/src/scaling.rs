//! Nondimensionalization and the curvature/friction scaling rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionalSetup {
    pub height_gap: f64,
    pub temp_gap: f64,
    pub viscosity: f64,
    pub thermal_diffusivity: f64,
    pub expansion_coeff: f64,
    pub gravity: f64,
    pub density_ref: f64,
}

impl Default for DimensionalSetup {
    fn default() -> Self {
        Self {
            height_gap: 1.0,
            temp_gap: 1.0,
            viscosity: 1.0,
            thermal_diffusivity: 1.0,
            expansion_coeff: 1.0,
            gravity: 1.0,
            density_ref: 1.0,
        }
    }
}

impl DimensionalSetup {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("height_gap", self.height_gap),
            ("temp_gap", self.temp_gap),
            ("viscosity", self.viscosity),
            ("thermal_diffusivity", self.thermal_diffusivity),
            ("expansion_coeff", self.expansion_coeff),
            ("gravity", self.gravity),
            ("density_ref", self.density_ref),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `(Ra, Pr) = (alpha g dT H^3 / (nu kappa), nu / kappa)`.
pub fn nondimensionalize(s: &DimensionalSetup) -> Result<(f64, f64)> {
    s.validate()?;
    let ra = s.expansion_coeff * s.gravity * s.temp_gap * s.height_gap.powi(3) / (s.viscosity * s.thermal_diffusivity);
    Ok((ra, s.viscosity / s.thermal_diffusivity))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureScaling {
    pub ra_ratio: f64,
    /// `(H2^2 + H2) / (H1^2 + H1)`.
    pub kappa_ratio_exact: f64,
    /// `(H2 / H1)^2`.
    pub kappa_ratio_leading: f64,
}

/// Ratios between two setups sharing the same dimensional wall profile.
pub fn curvature_scaling(s1: &DimensionalSetup, s2: &DimensionalSetup) -> Result<CurvatureScaling> {
    let (ra1, _) = nondimensionalize(s1)?;
    let (ra2, _) = nondimensionalize(s2)?;
    let (h1, h2) = (s1.height_gap, s2.height_gap);
    Ok(CurvatureScaling { ra_ratio: ra2 / ra1, kappa_ratio_exact: (h2 * h2 + h2) / (h1 * h1 + h1), kappa_ratio_leading: (h2 / h1).powi(2) })
}

/// `temp_ratio^{rho / (2 - 3 rho)}`: the height ratio making the curvature
/// norm scale like `Ra^rho`.
pub fn ratio_for_target_exponent(rho: f64, temp_ratio: f64) -> Result<f64> {
    if !(temp_ratio > 0.0 && temp_ratio.is_finite()) {
        return Err(Error::Invalid(format!("temp_ratio must be positive, got {temp_ratio}")));
    }
    let denom = 2.0 - 3.0 * rho;
    if denom.abs() < 1e-12 {
        return Err(Error::Invalid(format!("rho = {rho} is the pole rho = 2/3 of the exponent rho/(2 - 3 rho)")));
    }
    Ok(temp_ratio.powf(rho / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nondimensional_examples() {
        let base = DimensionalSetup::default();
        assert_eq!(nondimensionalize(&base).unwrap(), (1.0, 1.0));
        let tall = DimensionalSetup { height_gap: 2.0, ..base };
        assert_eq!(nondimensionalize(&tall).unwrap(), (8.0, 1.0));
        let s = DimensionalSetup { viscosity: 1e-2, thermal_diffusivity: 1e-3, ..base };
        let (ra, pr) = nondimensionalize(&s).unwrap();
        assert_relative_eq!(ra, 1e5, max_relative = 1e-12);
        assert_relative_eq!(pr, 10.0, max_relative = 1e-12);
        assert!(nondimensionalize(&DimensionalSetup { gravity: 0.0, ..base }).is_err());
    }

    #[test]
    fn curvature_examples() {
        let base = DimensionalSetup::default();
        let c = curvature_scaling(&base, &base).unwrap();
        assert_eq!((c.ra_ratio, c.kappa_ratio_exact, c.kappa_ratio_leading), (1.0, 1.0, 1.0));
        let c = curvature_scaling(&base, &DimensionalSetup { height_gap: 2.0, ..base }).unwrap();
        assert_eq!(c.ra_ratio, 8.0);
        assert_eq!(c.kappa_ratio_leading, 4.0);
        assert_eq!(c.kappa_ratio_exact, 3.0);
        let c = curvature_scaling(&base, &DimensionalSetup { temp_gap: 2.0, ..base }).unwrap();
        assert_eq!((c.ra_ratio, c.kappa_ratio_leading), (2.0, 1.0));
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(ratio_for_target_exponent(0.0, 7.0).unwrap(), 1.0);
        assert_relative_eq!(ratio_for_target_exponent(0.5, 4.0).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(ratio_for_target_exponent(1.5, 3.0).unwrap(), 3f64.powf(-0.6), max_relative = 1e-12);
        let e = ratio_for_target_exponent(2.0 / 3.0, 2.0).unwrap_err().to_string();
        assert!(e.contains("pole"), "{e}");
    }
}
