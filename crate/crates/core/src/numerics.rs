//! Small numerical helpers shared across modules.

use num_complex::Complex64;

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// length of the input, so results are reproducible regardless of how the
/// values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `n` log-spaced points from `a` to `b` inclusive (`n >= 2`).
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > 0.0 && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let (x, fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    // endpoints matter when the minimum sits on the boundary
    let (fa, fb) = (f(a), f(b));
    if fa < fx && fa <= fb {
        a
    } else if fb < fx {
        b
    } else {
        x
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Ordinary least-squares line fit. Returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Standard error of the OLS slope when each `y_i` carries an independent
/// error with standard deviation `sd_i`.
pub fn slope_stderr(x: &[f64], sd: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    x.iter()
        .zip(sd)
        .map(|(a, s)| ((a - mx) / sxx * s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `log(1 + u)` accurate for small complex `u`.
pub fn clog1p(u: Complex64) -> Complex64 {
    if u.norm() < 1e-3 {
        let mut term = u;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..=14 {
            acc += term / k as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
            term *= u;
        }
        acc
    } else {
        (Complex64::new(1.0, 0.0) + u).ln()
    }
}

/// `exp(w) - 1` accurate for small complex `w`.
pub fn cexpm1(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        let mut term = w;
        let mut acc = w;
        for k in 2..=12 {
            term *= w / k as f64;
            acc += term;
        }
        acc
    } else {
        w.exp() - 1.0
    }
}

/// `ln |exp(w) - 1|` without overflow for large `Re w`.
pub fn ln_abs_expm1(w: Complex64) -> f64 {
    if w.re > 1.0 {
        w.re + (Complex64::new(1.0, 0.0) - (-w).exp()).norm().ln()
    } else {
        cexpm1(w).norm().ln()
    }
}

/// `(1 - e^{-x}) / x` for `x >= 0`, with a series near zero.
pub fn one_minus_exp_over_x(x: f64) -> f64 {
    if x < 1e-5 {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}
