use super::{horner_c, Pole, Residue, SchemeFunction, SchemeKind};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct PartialFractions {
    pub gamma_infinity: Complex64,
    pub poles: Vec<Pole>,
    pub residues: Vec<Residue>,
}

type C = Complex64;

fn zero() -> C {
    C::new(0.0, 0.0)
}

/// Derivative of a complex polynomial (ascending powers).
fn deriv(c: &[C]) -> Vec<C> {
    c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect()
}

fn newton(c: &[C], mut z: C) -> C {
    let d = deriv(c);
    for _ in 0..60 {
        let f = horner_c_c(c, z);
        let fp = horner_c_c(&d, z);
        if fp.norm() == 0.0 {
            break;
        }
        let step = f / fp;
        z -= step;
        if step.norm() <= 1e-16 * z.norm().max(1e-300) {
            break;
        }
    }
    z
}

fn horner_c_c(c: &[C], z: C) -> C {
    c.iter().rev().fold(zero(), |acc, &a| acc * z + a)
}

/// Taylor coefficients of `p(z0 + w)` in `w`.
fn shift(p: &[C], z0: C) -> Vec<C> {
    let mut a = p.to_vec();
    let n = a.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = a[j + 1] * z0;
            a[j] += t;
        }
    }
    a
}

fn series_div_c(num: &[C], den: &[C], terms: usize) -> Vec<C> {
    let mut out: Vec<C> = Vec::with_capacity(terms);
    for i in 0..terms {
        let mut acc = num.get(i).copied().unwrap_or_else(zero);
        for j in 1..=i.min(den.len().saturating_sub(1)) {
            acc -= den[j] * out[i - j];
        }
        out.push(acc / den[0]);
    }
    out
}

fn poly_mul(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of the denominator with multiplicities: companion-matrix
/// eigenvalues, clustered, then Newton-polished on the derivative of order
/// `multiplicity - 1`.
fn denominator_roots(den: &[f64]) -> Result<Vec<(C, usize)>> {
    let d = den.len() - 1;
    if d == 0 {
        return Ok(vec![]);
    }
    let lead = den[d];
    let raw: Vec<C> = if d == 1 {
        vec![C::new(-den[0] / lead, 0.0)]
    } else {
        let m = DMatrix::<f64>::from_fn(d, d, |i, j| {
            if j == d - 1 {
                -den[i] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        m.complex_eigenvalues().iter().copied().collect()
    };
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("companion eigenvalues did not converge".into()));
    }
    let poly: Vec<C> = den.iter().map(|&x| C::new(x, 0.0)).collect();
    let scale = raw.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    let mut used = vec![false; raw.len()];
    let mut roots = Vec::new();
    for i in 0..raw.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![raw[i]];
        used[i] = true;
        for j in i + 1..raw.len() {
            if !used[j] && (raw[j] - raw[i]).norm() < 1e-4 * scale {
                used[j] = true;
                members.push(raw[j]);
            }
        }
        let mult = members.len();
        let centre = members.iter().sum::<C>() / mult as f64;
        let mut target = poly.clone();
        for _ in 1..mult {
            target = deriv(&target);
        }
        let mut z = newton(&target, centre);
        if z.im.abs() < 1e-14 * z.norm() {
            z.im = 0.0;
        }
        roots.push((z, mult));
    }
    let resid = roots
        .iter()
        .map(|&(z, _)| horner_c_c(&poly, z).norm() / den.iter().map(|c| c.abs()).sum::<f64>().max(1.0))
        .fold(0.0, f64::max);
    if resid > 1e-8 {
        return Err(Error::Numeric(format!("root polishing left residual {resid:e}")));
    }
    Ok(roots)
}

/// Canonical form `r(z) = gamma + sum_{j,k} gamma_{j,k} (a_j + z)^{-k}`.
pub fn partial_fractions(scheme: &SchemeFunction) -> Result<PartialFractions> {
    if scheme.kind == SchemeKind::Exponential {
        return Err(Error::Parameter("the exponential scheme has no partial fractions".into()));
    }
    let num = &scheme.numerator_coeffs;
    let den = &scheme.denominator_coeffs;
    if num.len() > den.len() {
        return Err(Error::Parameter(format!("{} is not proper (deg N > deg D)", scheme.name)));
    }
    let d = den.len() - 1;
    let gamma_infinity = if num.len() == den.len() {
        C::new(num[d] / den[d], 0.0)
    } else {
        zero()
    };
    let roots = denominator_roots(den)?;
    let numc: Vec<C> = num.iter().map(|&x| C::new(x, 0.0)).collect();
    let mut poles = Vec::new();
    let mut residues = Vec::new();
    for (j, &(zj, mj)) in roots.iter().enumerate() {
        // D(z) = (z - z_j)^{m_j} D_j(z), D_j = lead * prod_{i != j} (z - z_i)^{m_i}
        let mut dj = vec![C::new(den[d], 0.0)];
        for (i, &(zi, mi)) in roots.iter().enumerate() {
            if i != j {
                for _ in 0..mi {
                    dj = poly_mul(&dj, &[zj - zi, C::new(1.0, 0.0)]);
                }
            }
        }
        let h = series_div_c(&shift(&numc, zj), &dj, mj);
        poles.push(Pole { a: -zj, order: mj });
        for k in 1..=mj {
            residues.push(Residue { pole: j, power: k, coeff: h[mj - k] });
        }
    }
    let pf = PartialFractions { gamma_infinity, poles, residues };
    check_reconstruction(scheme, &pf)?;
    Ok(pf)
}

/// Evaluate the canonical form at `z`.
pub fn reconstruct(pf: &PartialFractions, z: C) -> C {
    let mut acc = pf.gamma_infinity;
    for r in &pf.residues {
        acc += r.coeff / (pf.poles[r.pole].a + z).powi(r.power as i32);
    }
    acc
}

fn check_reconstruction(scheme: &SchemeFunction, pf: &PartialFractions) -> Result<()> {
    let rmax = pf.poles.iter().fold(1.0f64, |a, p| a.max(p.a.norm()));
    let mut worst = 0.0f64;
    for i in 0..100 {
        let t = i as f64 / 100.0;
        let rho = rmax * (0.05 + 4.0 * t);
        let z = C::from_polar(rho, 2.0 * std::f64::consts::PI * t * 7.0 + 0.3);
        if pf.poles.iter().any(|p| (p.location() - z).norm() < 1e-3 * rmax) {
            continue;
        }
        let exact = horner_c(&scheme.numerator_coeffs, z) / horner_c(&scheme.denominator_coeffs, z);
        let err = (reconstruct(pf, z) - exact).norm() / exact.norm().max(1e-300);
        worst = worst.max(err);
    }
    if worst > 1e-10 {
        return Err(Error::Numeric(format!(
            "partial fraction reconstruction error {worst:e} for {}",
            scheme.name
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational_calc::{build_pade_subdiagonal, builtin_scheme, BuiltinScheme};

    #[test]
    fn implicit_euler_canonical() {
        let pf = partial_fractions(&builtin_scheme(BuiltinScheme::ImplicitEuler)).unwrap();
        assert_eq!(pf.gamma_infinity, zero());
        assert_eq!(pf.poles.len(), 1);
        assert!((pf.poles[0].a - C::new(1.0, 0.0)).norm() < 1e-15);
        assert!((pf.residues[0].coeff - C::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pade_0_2_poles() {
        // 1 + z + z^2/2 = 0  <=>  z = -1 +- i
        let pf = partial_fractions(&build_pade_subdiagonal(0, 2).unwrap()).unwrap();
        let mut a: Vec<C> = pf.poles.iter().map(|p| p.a).collect();
        a.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((a[0] - C::new(1.0, -1.0)).norm() < 1e-14);
        assert!((a[1] - C::new(1.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn crank_nicolson_canonical() {
        // (1 - z/2)/(1 + z/2) = -1 + 4/(2 + z)
        let pf = partial_fractions(&builtin_scheme(BuiltinScheme::CrankNicolson)).unwrap();
        assert_eq!(pf.gamma_infinity, C::new(-1.0, 0.0));
        assert!((pf.poles[0].a - C::new(2.0, 0.0)).norm() < 1e-15);
        assert!((pf.residues[0].coeff - C::new(4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn double_pole() {
        // (1 + 3z) / (1 + z)^2 = 3/(1+z) - 2/(1+z)^2
        let s = SchemeFunction::from_f64_coeffs("dbl", &[1.0, 3.0], &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.poles.len(), 1);
        assert_eq!(s.poles[0].order, 2);
        let g1 = s.residue_table.iter().find(|r| r.power == 1).unwrap().coeff;
        let g2 = s.residue_table.iter().find(|r| r.power == 2).unwrap().coeff;
        assert!((g1 - C::new(3.0, 0.0)).norm() < 1e-6);
        assert!((g2 - C::new(-2.0, 0.0)).norm() < 1e-6);
    }
}
