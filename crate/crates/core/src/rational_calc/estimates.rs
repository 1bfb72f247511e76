use super::series::defect_series;
use super::{horner_c, SchemeFunction, SchemeKind};
use crate::error::{param, Error, Result};
use crate::numerics::{clog1p, golden_section_min, ln_abs_expm1, log_space};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    /// `|r^n - e^{-nz}| <= C n |z|^{l+1} e^{-cn|z|}`, `|z| <= 1`.
    DiffSmallZ,
    /// `|r|^n <= C e^{-cn|z|}`, `|z| <= 1`.
    GrowthSmallZ,
    /// `|r|^n <= C |z|^{-1} e^{-cn}`, `|z| >= 1`.
    DecayLargeZ,
    /// `|z^a (e^{-nz} - r^n)| <= C n^{-l-a}`.
    FracPowerDiff,
    /// `|z^a r^n| <= C n^{-a}`.
    FracPowerScheme,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateGrid {
    pub moduli_per_decade: usize,
    pub n_per_octave: usize,
    pub min_modulus: f64,
    pub max_modulus: f64,
    pub diff_alphas: Vec<f64>,
    /// Only `a >= 0`: for `a < 0` the scalar bound fails as `z -> 0`.
    pub scheme_alphas: Vec<f64>,
}

impl Default for EstimateGrid {
    fn default() -> Self {
        EstimateGrid {
            moduli_per_decade: 8,
            n_per_octave: 2,
            min_modulus: 1e-4,
            max_modulus: 1e4,
            diff_alphas: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            scheme_alphas: vec![0.0, 0.5, 1.0],
        }
    }
}

impl EstimateGrid {
    pub fn refined(&self) -> Self {
        EstimateGrid {
            moduli_per_decade: 2 * self.moduli_per_decade,
            n_per_octave: 2 * self.n_per_octave,
            ..self.clone()
        }
    }

    fn describe(&self, nu: f64, n_max: u64) -> String {
        format!(
            "rays arg z in {{0, +-{:.4}}}, |z| in [{:e}, {:e}] at {} per decade, n in [1, {}] at {} per octave",
            nu, self.min_modulus, self.max_modulus, self.moduli_per_decade, n_max, self.n_per_octave
        )
    }
}

#[derive(Clone, Debug, Serialize)]
#[allow(non_snake_case)]
pub struct EstimateReport {
    pub inequality_id: InequalityId,
    pub alpha: Option<f64>,
    /// Supremum of the ratio on the refined grid at the fitted `c`.
    pub fitted_C: f64,
    pub fitted_c: Option<f64>,
    /// Supremum on the base grid.
    pub coarse_C: f64,
    pub refinement_ratio: f64,
    pub worst_ratio: f64,
    pub worst_z: Option<Complex64>,
    pub worst_n: Option<u64>,
    pub passes: bool,
    pub grid_spec: String,
}

struct Point {
    mod_z: f64,
    n: f64,
    ln_r: f64,
    /// `ln |r^n - e^{-nz}|`
    ln_diff: f64,
    z: Complex64,
}

fn n_grid(n_max: u64, per_octave: usize) -> Vec<u64> {
    let mut ns = vec![];
    let steps = ((n_max as f64).log2() * per_octave as f64).ceil() as usize;
    for i in 0..=steps {
        let n = 2f64.powf(i as f64 / per_octave as f64).round() as u64;
        if n <= n_max {
            ns.push(n);
        }
    }
    ns.push(n_max);
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Accurate `log(r(z) e^z)` near the origin, from the exact defect series.
pub struct SchemeLog<'a> {
    scheme: &'a SchemeFunction,
    defect: Vec<f64>,
}

impl<'a> SchemeLog<'a> {
    pub fn new(scheme: &'a SchemeFunction) -> Self {
        let defect = match scheme.kind {
            SchemeKind::Exponential => vec![],
            SchemeKind::Rational => defect_series(scheme.exact_numerator(), scheme.exact_denominator(), 40)
                .iter()
                .map(|c| c.to_f64().unwrap_or(0.0))
                .collect(),
        };
        SchemeLog { scheme, defect }
    }

    /// `log(r(z) e^z)`: from the exact defect series for `|z| <= 1`.
    pub fn log_ratio(&self, z: Complex64, r: Complex64) -> Complex64 {
        match self.scheme.kind {
            SchemeKind::Exponential => Complex64::new(0.0, 0.0),
            SchemeKind::Rational if z.norm() <= 1.0 => {
                let u = horner_c(&self.defect, z) / horner_c(&self.scheme.denominator_coeffs, z);
                clog1p(u)
            }
            SchemeKind::Rational => z + r.ln(),
        }
    }

    fn points(&self, nu: f64, lo: f64, hi: f64, grid: &EstimateGrid, n_max: u64) -> Result<Vec<Point>> {
        let decades = (hi / lo).log10();
        let count = (decades * grid.moduli_per_decade as f64).round() as usize + 1;
        let radii = log_space(lo, hi, count.max(2));
        let ns = n_grid(n_max, grid.n_per_octave);
        let mut out = Vec::with_capacity(3 * radii.len() * ns.len());
        for ang in [-nu, 0.0, nu] {
            let dir = Complex64::from_polar(1.0, ang);
            for &rho in &radii {
                let z = dir * rho;
                let r = self.scheme.eval(z)?;
                let lw = self.log_ratio(z, r);
                for &n in &ns {
                    let nf = n as f64;
                    out.push(Point {
                        mod_z: rho,
                        n: nf,
                        ln_r: r.norm().ln(),
                        ln_diff: -nf * z.re + ln_abs_expm1(lw * nf),
                        z,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Affine-in-`c` log ratios `b + c w`.
struct Family {
    terms: Vec<(f64, f64, Complex64, u64)>,
}

impl Family {
    fn ln_sup(&self, c: f64) -> (f64, Option<(Complex64, u64)>) {
        let mut best = f64::NEG_INFINITY;
        let mut at = None;
        for &(b, w, z, n) in &self.terms {
            let v = b + c * w;
            if v > best {
                best = v;
                at = Some((z, n));
            }
        }
        (best, at)
    }
}

fn family(points: &[Point], id: InequalityId, order: f64, alpha: f64) -> Family {
    let terms = points
        .iter()
        .filter_map(|p| {
            let lz = p.mod_z.ln();
            let ln_n = p.n.ln();
            let (b, w) = match id {
                InequalityId::DiffSmallZ => (p.ln_diff - ln_n - (order + 1.0) * lz, p.n * p.mod_z),
                InequalityId::GrowthSmallZ => (p.n * p.ln_r, p.n * p.mod_z),
                InequalityId::DecayLargeZ => (p.n * p.ln_r + lz, p.n),
                InequalityId::FracPowerDiff => (alpha * lz + p.ln_diff + (order + alpha) * ln_n, 0.0),
                InequalityId::FracPowerScheme => (alpha * lz + p.n * p.ln_r + alpha * ln_n, 0.0),
            };
            (b > f64::NEG_INFINITY).then_some((b, w, p.z, p.n as u64))
        })
        .collect();
    Family { terms }
}

/// Fit the constants of the scalar decay estimates on a sector grid and
/// check that they do not grow under one refinement.
///
/// For the inequalities with a rate, `c in (0, cos nu]` minimises
/// `C(c) c^{-(l+1)}` (the difference bound) or `C(c) / c` (the growth
/// bounds), which are the combinations entering the integrals that consume
/// them.
pub fn verify_decay_estimates(
    scheme: &SchemeFunction,
    nu: f64,
    n_max: u64,
    grid: &EstimateGrid,
) -> Result<Vec<EstimateReport>> {
    if n_max < 32 {
        return param("n_max must be at least 32");
    }
    let theta = scheme.declared_angle.unwrap_or(std::f64::consts::FRAC_PI_2);
    if !(nu > 0.0 && nu < theta) {
        return param(format!("nu = {nu} must lie in (0, {theta})"));
    }
    if scheme.gamma_infinity.norm() != 0.0 {
        return param(format!("{}: the decay estimates need r(infinity) = 0", scheme.name));
    }
    let order = match scheme.kind {
        SchemeKind::Exponential => 1.0,
        SchemeKind::Rational => scheme.order()? as f64,
    };
    let fine_grid = grid.refined();
    let ev = SchemeLog::new(scheme);
    let small = ev.points(nu, grid.min_modulus, 1.0, grid, n_max)?;
    let small_f = ev.points(nu, grid.min_modulus, 1.0, &fine_grid, n_max)?;
    let large = ev.points(nu, 1.0, grid.max_modulus, grid, n_max)?;
    let large_f = ev.points(nu, 1.0, grid.max_modulus, &fine_grid, n_max)?;
    let all = ev.points(nu, grid.min_modulus, grid.max_modulus, grid, n_max)?;
    let all_f = ev.points(nu, grid.min_modulus, grid.max_modulus, &fine_grid, n_max)?;
    let cmax = nu.cos();
    let spec = grid.describe(nu, n_max);

    let mut reports = vec![];
    let mut push = |id: InequalityId, alpha: Option<f64>, coarse: Family, fine: Family, kappa: Option<f64>| {
        let c = kappa.map(|k| {
            if coarse.terms.is_empty() {
                cmax
            } else {
                golden_section_min(|c| coarse.ln_sup(c).0 - k * c.ln(), 1e-3 * cmax, cmax, 1e-9)
            }
        });
        let cc = c.unwrap_or(0.0);
        let (lc, _) = coarse.ln_sup(cc);
        let (lf, at) = fine.ln_sup(cc);
        let (coarse_c, fitted) = (lc.exp(), lf.exp());
        let ratio = if coarse_c > 0.0 { fitted / coarse_c } else { 1.0 };
        reports.push(EstimateReport {
            inequality_id: id,
            alpha,
            fitted_C: fitted,
            fitted_c: c,
            coarse_C: coarse_c,
            refinement_ratio: ratio,
            worst_ratio: fitted,
            worst_z: at.map(|a| a.0),
            worst_n: at.map(|a| a.1),
            passes: fitted.is_finite() && ratio < 1.2,
            grid_spec: spec.clone(),
        });
    };
    let k1 = Some(order + 1.0);
    push(
        InequalityId::DiffSmallZ,
        None,
        family(&small, InequalityId::DiffSmallZ, order, 0.0),
        family(&small_f, InequalityId::DiffSmallZ, order, 0.0),
        k1,
    );
    push(
        InequalityId::GrowthSmallZ,
        None,
        family(&small, InequalityId::GrowthSmallZ, order, 0.0),
        family(&small_f, InequalityId::GrowthSmallZ, order, 0.0),
        Some(1.0),
    );
    push(
        InequalityId::DecayLargeZ,
        None,
        family(&large, InequalityId::DecayLargeZ, order, 0.0),
        family(&large_f, InequalityId::DecayLargeZ, order, 0.0),
        Some(1.0),
    );
    for &a in &grid.diff_alphas {
        push(
            InequalityId::FracPowerDiff,
            Some(a),
            family(&all, InequalityId::FracPowerDiff, order, a),
            family(&all_f, InequalityId::FracPowerDiff, order, a),
            None,
        );
    }
    for &a in &grid.scheme_alphas {
        push(
            InequalityId::FracPowerScheme,
            Some(a),
            family(&all, InequalityId::FracPowerScheme, order, a),
            family(&all_f, InequalityId::FracPowerScheme, order, a),
            None,
        );
    }
    if let Some(bad) = reports.iter().find(|r| !r.fitted_C.is_finite()) {
        return Err(Error::Analysis(format!(
            "{}: no finite constant for {:?} (alpha {:?})",
            scheme.name, bad.inequality_id, bad.alpha
        )));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational_calc::{builtin_scheme, BuiltinScheme};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn implicit_euler_all_pass() {
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let reps = verify_decay_estimates(&ie, FRAC_PI_4, 128, &EstimateGrid::default()).unwrap();
        assert_eq!(reps.len(), 11);
        for r in &reps {
            assert!(r.passes, "{:?} {:?} ratio {}", r.inequality_id, r.alpha, r.refinement_ratio);
            if let Some(c) = r.fitted_c {
                assert!(c > 0.0 && c <= FRAC_PI_4.cos() + 1e-12);
            }
        }
    }

    #[test]
    fn z_times_implicit_euler_bounded_by_secant() {
        // |z/(1+z)| <= 1/cos(nu) on the sector
        let ie = builtin_scheme(BuiltinScheme::ImplicitEuler);
        let reps = verify_decay_estimates(&ie, FRAC_PI_4, 32, &EstimateGrid::default()).unwrap();
        let r = reps
            .iter()
            .find(|r| r.inequality_id == InequalityId::FracPowerScheme && r.alpha == Some(1.0))
            .unwrap();
        assert!(r.fitted_C <= 1.0 / FRAC_PI_4.cos() + 1e-12);
        assert!(r.fitted_C > 0.5);
    }

    #[test]
    fn exponential_differences_vanish() {
        let ee = builtin_scheme(BuiltinScheme::ExponentialEuler);
        let reps = verify_decay_estimates(&ee, FRAC_PI_4, 32, &EstimateGrid::default()).unwrap();
        for r in reps.iter().filter(|r| {
            matches!(r.inequality_id, InequalityId::DiffSmallZ | InequalityId::FracPowerDiff)
        }) {
            assert_eq!(r.fitted_C, 0.0);
        }
    }

    #[test]
    fn crank_nicolson_rejected() {
        let cn = builtin_scheme(BuiltinScheme::CrankNicolson);
        assert!(verify_decay_estimates(&cn, FRAC_PI_4, 32, &EstimateGrid::default()).is_err());
    }
}
