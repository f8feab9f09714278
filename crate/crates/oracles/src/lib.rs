//! Brute-force numerical oracles for the test suites.
//!
//! Nothing in here shares code with `nof1-core`. Every routine takes the slow,
//! obviously-correct route (quadrature, grids, bisection) so that the fast
//! closed-form paths in the library can be checked against it.

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Student-t CDF by quadrature, valid for `dof >= 1`.
///
/// Substituting `t = sqrt(dof) * tan(theta)` turns the unnormalised density
/// `(1 + t^2/dof)^(-(dof+1)/2) dt` into `sqrt(dof) * cos(theta)^(dof-1) dtheta`
/// on a finite interval, so both the partial integral and the normaliser are
/// plain trigonometric quadratures with no gamma functions involved.
pub fn student_t_cdf_quadrature(x: f64, dof: f64) -> f64 {
    assert!(dof >= 1.0, "quadrature oracle needs dof >= 1");
    let g = |theta: f64| theta.cos().powf(dof - 1.0);
    let theta_x = (x / dof.sqrt()).atan();
    // The integrand peaks at 0 with width ~ 1/sqrt(dof); split there so the
    // adaptive rule does not step over the peak.
    let width = (4.0 / dof.sqrt()).min(PI / 2.0);
    let half = |upper: f64| -> f64 {
        let u = upper.abs();
        let inner = u.min(width);
        let mut s = adaptive_simpson(&g, 0.0, inner, 1e-15);
        if u > inner {
            s += adaptive_simpson(&g, inner, u, 1e-15);
        }
        s
    };
    let total = half(PI / 2.0);
    let part = half(theta_x);
    let tail = 0.5 * part / total;
    if x >= 0.0 {
        0.5 + tail
    } else {
        0.5 - tail
    }
}

/// Student-t density with location/scale, normalised by quadrature.
pub fn student_t_pdf_quadrature(x: f64, location: f64, scale: f64, dof: f64) -> f64 {
    let g = |theta: f64| theta.cos().powf(dof - 1.0);
    let width = (4.0 / dof.sqrt()).min(PI / 2.0);
    let total = adaptive_simpson(&g, 0.0, width, 1e-15)
        + if width < PI / 2.0 {
            adaptive_simpson(&g, width, PI / 2.0, 1e-15)
        } else {
            0.0
        };
    // integral over the whole line of the unnormalised density = 2 sqrt(dof) * total
    let z = (x - location) / scale;
    (1.0 + z * z / dof).powf(-(dof + 1.0) / 2.0) / (2.0 * dof.sqrt() * total * scale)
}

/// Quantile of the Student-t distribution by bisection on the quadrature CDF.
pub fn student_t_quantile_bisection(p: f64, dof: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while student_t_cdf_quadrature(lo, dof) > p {
        lo *= 2.0;
    }
    while student_t_cdf_quadrature(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf_quadrature(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal CDF via quadrature of the density from 0.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let part = adaptive_simpson(&phi, 0.0, x.abs(), 1e-15);
    if x >= 0.0 {
        0.5 + part
    } else {
        0.5 - part
    }
}

/// Marginal posterior of the effect coefficient of a two-column regression
/// `y = b0 + b1 * x + e`, tabulated on a grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub beta: Vec<f64>,
    pub weight: Vec<f64>,
}

impl GridPosterior {
    pub fn mean(&self) -> f64 {
        self.beta.iter().zip(&self.weight).map(|(b, w)| b * w).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.beta
            .iter()
            .zip(&self.weight)
            .map(|(b, w)| (b - m) * (b - m) * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Posterior CDF at `x`, interpolating the cumulative trapezoid mass
    /// linearly between grid nodes.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.beta[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.beta.len() {
            if self.beta[i] > x {
                let prev = self.beta[i - 1];
                let frac = (x - prev) / (self.beta[i] - prev);
                return acc + frac * self.weight[i];
            }
            acc += self.weight[i];
        }
        acc
    }
}

/// Grid-quadrature posterior of the effect coefficient under the
/// normal-inverse-gamma model
///
/// ```text
/// y_i | b, s2  ~ N(b0 + b1 x_i, s2)
/// b0, b1 | s2  ~ N(0, v s2) independently
/// s2           ~ InvGamma(a0, rate b0_ig)
/// ```
///
/// The intercept is integrated out by completing the square in one scalar;
/// the remaining two dimensions (b1, log s2) are integrated on a dense grid.
pub fn nig_effect_grid(
    xs: &[f64],
    ys: &[f64],
    v: f64,
    a0: f64,
    rate0: f64,
    n_beta: usize,
    n_logvar: usize,
) -> GridPosterior {
    // coarse pass locates the bulk, fine pass resolves it
    let coarse = nig_effect_grid_range(xs, ys, v, a0, rate0, -200.0, 200.0, 4001, n_logvar);
    let (m, s) = (coarse.mean(), coarse.sd());
    nig_effect_grid_range(
        xs,
        ys,
        v,
        a0,
        rate0,
        m - 40.0 * s,
        m + 40.0 * s,
        n_beta,
        n_logvar,
    )
}

#[allow(clippy::too_many_arguments)]
fn nig_effect_grid_range(
    xs: &[f64],
    ys: &[f64],
    v: f64,
    a0: f64,
    rate0: f64,
    lo: f64,
    hi: f64,
    n_beta: usize,
    n_logvar: usize,
) -> GridPosterior {
    let n = xs.len() as f64;
    let (u_lo, u_hi) = ((1e-8f64).ln(), (1e8f64).ln());
    let du = (u_hi - u_lo) / (n_logvar - 1) as f64;
    let db = (hi - lo) / (n_beta - 1) as f64;

    // Residual quadratic form after the intercept has been integrated out.
    let quad_form = |b1: f64| -> f64 {
        let mut sum_r = 0.0;
        let mut sum_r2 = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - b1 * x;
            sum_r += r;
            sum_r2 += r * r;
        }
        sum_r2 - sum_r * sum_r / (n + 1.0 / v) + b1 * b1 / v
    };
    // s2^(-n/2) from the likelihood, s2^(-1/2) from the b1 prior,
    // s2^(-a0-1) from the inverse gamma, s2^(+1) from the ds2 = s2 du Jacobian
    let power = -0.5 * n - 0.5 - a0 - 1.0 + 1.0;

    let mut logs = vec![0.0; n_beta * n_logvar];
    let mut max = f64::NEG_INFINITY;
    for i in 0..n_beta {
        let quad = quad_form(lo + i as f64 * db);
        for j in 0..n_logvar {
            let u = u_lo + j as f64 * du;
            let l = power * u - (0.5 * quad + rate0) * (-u).exp();
            logs[i * n_logvar + j] = l;
            if l > max {
                max = l;
            }
        }
    }
    let mut beta = Vec::with_capacity(n_beta);
    let mut weight = Vec::with_capacity(n_beta);
    for i in 0..n_beta {
        let mut row = 0.0;
        for j in 0..n_logvar {
            let edge = if j == 0 || j == n_logvar - 1 {
                0.5
            } else {
                1.0
            };
            row += edge * (logs[i * n_logvar + j] - max).exp();
        }
        let edge = if i == 0 || i == n_beta - 1 { 0.5 } else { 1.0 };
        beta.push(lo + i as f64 * db);
        weight.push(edge * row);
    }
    let total: f64 = weight.iter().sum();
    for w in &mut weight {
        *w /= total;
    }
    GridPosterior { beta, weight }
}

/// Gaussian KL divergence KL(N(m1, v1) || N(m0, v0)) written out longhand.
pub fn gaussian_kl(m1: f64, v1: f64, m0: f64, v0: f64) -> f64 {
    0.5 * ((v0 / v1).ln() + v1 / v0 + (m1 - m0).powi(2) / v0 - 1.0)
}

/// Ordinary least squares slope and intercept for a single regressor.
pub fn ols_simple(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
