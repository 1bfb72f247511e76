use super::{SchemeFunction, SchemeKind};
use crate::error::{param, Result};
use crate::numerics::log_space;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct StabilityGrid {
    pub boundary_points_per_ray: usize,
    pub interior_angles: usize,
    pub interior_moduli: usize,
    pub min_modulus: f64,
    pub max_modulus: f64,
}

impl Default for StabilityGrid {
    fn default() -> Self {
        StabilityGrid {
            boundary_points_per_ray: 10_000,
            interior_angles: 20,
            interior_moduli: 50,
            min_modulus: 1e-6,
            max_modulus: 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub scheme: String,
    pub angle_tested: f64,
    pub max_modulus_boundary: f64,
    pub max_modulus_interior_sample: f64,
    /// Modulus of `r(infinity)`.
    pub modulus_at_infinity: f64,
    pub worst_point: Option<Complex64>,
    pub grid_size: usize,
    pub pole_in_sector: Option<Complex64>,
    pub passes: bool,
    pub notes: Vec<String>,
}

const TOL: f64 = 1e-12;

/// Sample `|r|` on the boundary rays `arg z = +-theta` and an interior grid.
/// With no pole in the closed sector and `|r(infinity)| <= 1`, the maximum
/// modulus principle reduces stability to the boundary.
pub fn check_stability(scheme: &SchemeFunction, theta: f64, grid: &StabilityGrid) -> Result<StabilityReport> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2 + 1e-15) {
        return param(format!("theta = {theta} outside (0, pi/2]"));
    }
    let mut report = StabilityReport {
        scheme: scheme.name.clone(),
        angle_tested: theta,
        max_modulus_boundary: 0.0,
        max_modulus_interior_sample: 0.0,
        modulus_at_infinity: scheme.gamma_infinity.norm(),
        worst_point: None,
        grid_size: 0,
        pole_in_sector: None,
        passes: false,
        notes: vec![],
    };
    if let Some(p) = scheme.poles.iter().find(|p| p.location().arg().abs() <= theta || p.a.norm() == 0.0) {
        report.pole_in_sector = Some(p.location());
        report.notes.push(format!("pole at {} inside the sector", p.location()));
        return Ok(report);
    }
    let modulus = |z: Complex64| -> f64 {
        match scheme.kind {
            SchemeKind::Exponential => (-z.re).exp(),
            SchemeKind::Rational => scheme.eval(z).map(|v| v.norm()).unwrap_or(f64::INFINITY),
        }
    };
    let mut worst = 0.0f64;
    let mut worst_point = None;
    let radii = log_space(grid.min_modulus, grid.max_modulus, grid.boundary_points_per_ray);
    for sign in [-1.0, 1.0] {
        let dir = Complex64::from_polar(1.0, sign * theta);
        for &rho in &radii {
            let z = dir * rho;
            let m = modulus(z);
            if m > worst || m.is_nan() {
                worst = if m.is_nan() { f64::INFINITY } else { m };
                worst_point = Some(z);
            }
        }
    }
    report.max_modulus_boundary = worst;
    let mut interior = 0.0f64;
    let ir = log_space(grid.min_modulus, grid.max_modulus, grid.interior_moduli);
    for i in 0..grid.interior_angles {
        let phi = theta * (2.0 * (i as f64 + 0.5) / grid.interior_angles as f64 - 1.0);
        let dir = Complex64::from_polar(1.0, phi);
        for &rho in &ir {
            let m = modulus(dir * rho);
            if m > interior || m.is_nan() {
                interior = if m.is_nan() { f64::INFINITY } else { m };
                if interior > worst {
                    worst_point = Some(dir * rho);
                }
            }
        }
    }
    report.max_modulus_interior_sample = interior;
    report.worst_point = worst_point;
    report.grid_size = 2 * radii.len() + grid.interior_angles * ir.len();
    report.passes = worst.max(interior).max(report.modulus_at_infinity) <= 1.0 + TOL;
    if scheme.kind == SchemeKind::Rational && report.modulus_at_infinity != 0.0 {
        report.notes.push(format!(
            "r(infinity) = {} != 0: excluded from maximal regularity studies",
            scheme.gamma_infinity
        ));
    }
    if !report.passes {
        if let Some(a) = scheme.declared_angle {
            if a < theta {
                report.notes.push(format!(
                    "declared stability angle is {:.2} degrees < {:.2} degrees tested",
                    a.to_degrees(),
                    theta.to_degrees()
                ));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational_calc::{build_pade_subdiagonal, builtin_scheme, BuiltinScheme};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn catalog_stability() {
        let g = StabilityGrid::default();
        for s in [
            builtin_scheme(BuiltinScheme::ImplicitEuler),
            build_pade_subdiagonal(0, 2).unwrap(),
            build_pade_subdiagonal(1, 2).unwrap(),
            build_pade_subdiagonal(1, 3).unwrap(),
        ] {
            assert!(check_stability(&s, FRAC_PI_2, &g).unwrap().passes, "{}", s.name);
        }
        let r03 = builtin_scheme(BuiltinScheme::Pade03);
        assert!(check_stability(&r03, 88f64.to_radians(), &g).unwrap().passes);
        let at_right = check_stability(&r03, FRAC_PI_2, &g).unwrap();
        assert!(!at_right.passes);
        assert!(at_right.notes.iter().any(|n| n.contains("88.23")));
        let ee = builtin_scheme(BuiltinScheme::ExplicitEuler);
        assert!(!check_stability(&ee, FRAC_PI_2, &g).unwrap().passes);
        assert!((ee.eval(Complex64::new(3.0, 0.0)).unwrap().norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn crank_nicolson_passes_with_note() {
        let cn = builtin_scheme(BuiltinScheme::CrankNicolson);
        let r = check_stability(&cn, FRAC_PI_2, &StabilityGrid::default()).unwrap();
        assert!(r.passes);
        assert!(r.notes.iter().any(|n| n.contains("r(infinity)")));
    }

    #[test]
    fn bad_angle_rejected() {
        let s = builtin_scheme(BuiltinScheme::ImplicitEuler);
        assert!(check_stability(&s, 0.0, &StabilityGrid::default()).is_err());
        assert!(check_stability(&s, 2.0, &StabilityGrid::default()).is_err());
    }
}
