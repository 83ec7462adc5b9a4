//! Nonlinear least-squares engine shared by the hole-shape, decay and
//! calibration fits.
//!
//! Damped Gauss-Newton iteration with a numeric central-difference
//! jacobian. When the damping cannot tame the model an optional
//! Nelder-Mead pass takes over from the best point found so far. The
//! covariance of the fitted parameters is estimated from the jacobian at
//! the solution.

use crate::error::{Error, Result};

/// Tuning knobs for [`least_squares`]. The defaults suit all fits in
/// this crate.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Largest relative parameter step that still counts as converged.
    pub step_tolerance: f64,
    /// Relative cost improvement below which the iteration stops.
    pub cost_tolerance: f64,
    /// Fall back to a Nelder-Mead simplex if Gauss-Newton stalls.
    pub simplex_fallback: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-14,
            simplex_fallback: true,
        }
    }
}

/// What the solver did and how well the model matched.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: usize,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// Parameter covariance `s^2 (J^T J)^-1` with `s^2 = cost / (m - n)`;
    /// entries are NaN when the jacobian is rank deficient.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub used_simplex_fallback: bool,
}

impl FitReport {
    /// One-sigma uncertainty of parameter `i`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }
}

const JACOBIAN_STEP: f64 = 6.055e-6; // cbrt(f64::EPSILON)

/// Minimizes `sum r_i(p)^2` where `model(p, &mut r)` writes the residual
/// vector. Trial points failing `feasible` are rejected; the initial
/// guess must be feasible. Returns the fitted parameters and a report.
///
/// The model is evaluated at small steps around feasible points when
/// building the jacobian, so it must stay finite slightly outside the
/// feasible region.
pub fn least_squares<F>(
    mut model: F,
    init: &[f64],
    feasible: impl Fn(&[f64]) -> bool,
    opts: &FitOptions,
) -> Result<(Vec<f64>, FitReport)>
where
    F: FnMut(&[f64], &mut Vec<f64>),
{
    let n = init.len();
    if n == 0 {
        return Err(Error::InvalidInput("fit has no parameters".into()));
    }
    if !feasible(init) {
        return Err(Error::InvalidInput(
            "initial guess violates the fit constraints".into(),
        ));
    }
    let mut p = init.to_vec();
    let mut r = Vec::new();
    model(&p, &mut r);
    let m = r.len();
    if m < n {
        return Err(Error::DegenerateData(format!(
            "{m} residuals cannot constrain {n} parameters"
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "model is not finite at the initial guess".into(),
        ));
    }

    let mut cost = dot(&r, &r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut jac = vec![0.0; m * n];
    let mut r_trial = Vec::with_capacity(m);

    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        numeric_jacobian(&mut model, &p, &mut jac, m);
        let (jtj, jtr) = normal_equations(&jac, &r, m, n);

        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for i in 0..n {
                damped[i * n + i] += lambda * jtj[i * n + i].max(1e-30);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let delta = match solve(&damped, &rhs, n) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
            if !feasible(&trial) {
                lambda *= 10.0;
                continue;
            }
            model(&trial, &mut r_trial);
            let trial_cost = dot(&r_trial, &r_trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step = delta
                    .iter()
                    .zip(&p)
                    .map(|(d, pi)| d.abs() / pi.abs().max(1.0))
                    .fold(0.0f64, f64::max);
                let gain = cost - trial_cost;
                p = trial;
                std::mem::swap(&mut r, &mut r_trial);
                converged = step < opts.step_tolerance || gain <= opts.cost_tolerance * cost;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }

    let mut used_simplex_fallback = false;
    if !converged && opts.simplex_fallback {
        used_simplex_fallback = true;
        let mut scratch = Vec::with_capacity(m);
        let mut evals = 0usize;
        let mut cost_fn = |q: &[f64]| -> f64 {
            evals += 1;
            if !feasible(q) {
                return f64::INFINITY;
            }
            model(q, &mut scratch);
            let c = dot(&scratch, &scratch);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        };
        let (best, best_cost, nm_converged) = nelder_mead(&mut cost_fn, &p, 500 * n);
        if best_cost <= cost {
            p = best;
            cost = best_cost;
            model(&p, &mut r);
        }
        converged = nm_converged;
        iterations += evals;
    }

    if !converged {
        return Err(Error::FitDidNotConverge {
            iterations,
            residual_norm: cost.sqrt(),
            best: p,
        });
    }

    numeric_jacobian(&mut model, &p, &mut jac, m);
    let (jtj, _) = normal_equations(&jac, &r, m, n);
    let covariance = covariance_from(&jtj, cost, m, n);
    Ok((
        p,
        FitReport {
            iterations,
            residual_norm: cost.sqrt(),
            covariance,
            converged: true,
            used_simplex_fallback,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference jacobian, row-major `m x n`. Columns where the
/// model goes non-finite are zeroed; the damping loop then works around
/// them.
fn numeric_jacobian<F>(model: &mut F, p: &[f64], jac: &mut [f64], m: usize)
where
    F: FnMut(&[f64], &mut Vec<f64>),
{
    let n = p.len();
    let mut q = p.to_vec();
    let mut hi = Vec::with_capacity(m);
    let mut lo = Vec::with_capacity(m);
    for j in 0..n {
        let h = JACOBIAN_STEP * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        model(&q, &mut hi);
        q[j] = p[j] - h;
        model(&q, &mut lo);
        q[j] = p[j];
        let ok = hi.iter().chain(lo.iter()).all(|x| x.is_finite());
        for i in 0..m {
            jac[i * n + j] = if ok { (hi[i] - lo[i]) / (2.0 * h) } else { 0.0 };
        }
    }
}

fn normal_equations(jac: &[f64], r: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for a in 0..n {
            jtr[a] += row[a] * r[i];
            for b in a..n {
                jtj[a * n + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a * n + b] = jtj[b * n + a];
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        let pivot = m[pivot_row * n + col];
        if pivot.abs() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        for row in (col + 1)..n {
            let f = m[row * n + col] / m[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for k in (col + 1)..n {
            v -= m[col * n + k] * x[k];
        }
        x[col] = v / m[col * n + col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn covariance_from(jtj: &[f64], cost: f64, m: usize, n: usize) -> Vec<Vec<f64>> {
    let sigma2 = if m > n { cost / (m - n) as f64 } else { 0.0 };
    let mut cov = vec![vec![f64::NAN; n]; n];
    let mut unit = vec![0.0; n];
    for col in 0..n {
        unit[col] = 1.0;
        if let Some(col_vals) = solve(jtj, &unit, n) {
            for row in 0..n {
                cov[row][col] = sigma2 * col_vals[row];
            }
        }
        unit[col] = 0.0;
    }
    cov
}

/// Standard Nelder-Mead downhill simplex. Returns the best vertex, its
/// cost, and whether the simplex collapsed below tolerance before the
/// evaluation budget ran out.
fn nelder_mead<C>(cost: &mut C, init: &[f64], budget: usize) -> (Vec<f64>, f64, bool)
where
    C: FnMut(&[f64]) -> f64,
{
    let n = init.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((init.to_vec(), cost(init)));
    for j in 0..n {
        let mut v = init.to_vec();
        v[j] += 0.05 * v[j].abs().max(1.0);
        let c = cost(&v);
        simplex.push((v, c));
    }

    let mut used = n + 1;
    while used < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && worst - best <= 1e-12 * (best.abs() + 1e-12) {
            return (simplex[0].0.clone(), simplex[0].1, true);
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let at = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let refl = at(1.0);
        let refl_cost = cost(&refl);
        used += 1;
        if refl_cost < simplex[0].1 {
            let exp = at(2.0);
            let exp_cost = cost(&exp);
            used += 1;
            simplex[n] = if exp_cost < refl_cost {
                (exp, exp_cost)
            } else {
                (refl, refl_cost)
            };
        } else if refl_cost < simplex[n - 1].1 {
            simplex[n] = (refl, refl_cost);
        } else {
            let contr = if refl_cost < simplex[n].1 {
                at(0.5)
            } else {
                at(-0.5)
            };
            let contr_cost = cost(&contr);
            used += 1;
            if contr_cost < simplex[n].1.min(refl_cost) {
                simplex[n] = (contr, contr_cost);
            } else {
                let anchor = simplex[0].0.clone();
                for (v, c) in simplex.iter_mut().skip(1) {
                    for (x, a) in v.iter_mut().zip(&anchor) {
                        *x = a + 0.5 * (*x - a);
                    }
                    *c = cost(v);
                    used += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decay_data() -> (Vec<f64>, Vec<f64>) {
        let ts: Vec<f64> = (0..40).map(|k| 0.5 * k as f64).collect();
        let ys = ts.iter().map(|t| 2.3 * (-0.17 * t).exp()).collect();
        (ts, ys)
    }

    fn decay_model<'a>(
        ts: &'a [f64],
        ys: &'a [f64],
    ) -> impl FnMut(&[f64], &mut Vec<f64>) + 'a {
        move |p, out| {
            out.clear();
            for (t, y) in ts.iter().zip(ys) {
                out.push(p[0] * (-p[1] * t).exp() - y);
            }
        }
    }

    #[test]
    fn recovers_exponential_parameters() {
        let (ts, ys) = decay_data();
        let (p, report) = least_squares(
            decay_model(&ts, &ys),
            &[1.0, 0.3],
            |p| p[0] > 0.0 && p[1] > 0.0,
            &FitOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(p[0], 2.3, max_relative = 1e-8);
        assert_relative_eq!(p[1], 0.17, max_relative = 1e-8);
        assert!(report.converged);
        assert!(!report.used_simplex_fallback);
        assert!(report.residual_norm < 1e-8);
    }

    #[test]
    fn exact_start_converges_immediately() {
        let (ts, ys) = decay_data();
        let (_, report) = least_squares(
            decay_model(&ts, &ys),
            &[2.3, 0.17],
            |_| true,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(report.iterations <= 2, "took {}", report.iterations);
    }

    #[test]
    fn covariance_matches_known_noise() {
        let xs: Vec<f64> = (1..=200).map(|k| 0.05 * k as f64).collect();
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                1.7 * x + sigma * g
            })
            .collect();
        let model = |p: &[f64], out: &mut Vec<f64>| {
            out.clear();
            for (x, y) in xs.iter().zip(&ys) {
                out.push(p[0] * x - y);
            }
        };
        let (p, report) =
            least_squares(model, &[1.0], |_| true, &FitOptions::default()).unwrap();
        let expect_var = sigma * sigma / xs.iter().map(|x| x * x).sum::<f64>();
        assert_relative_eq!(p[0], 1.7, max_relative = 0.02);
        assert_relative_eq!(report.covariance[0][0], expect_var, max_relative = 0.4);
    }

    #[test]
    fn simplex_rescues_a_capped_iteration() {
        let (ts, ys) = decay_data();
        let opts = FitOptions {
            max_iterations: 1,
            ..FitOptions::default()
        };
        let (p, report) = least_squares(
            decay_model(&ts, &ys),
            &[0.5, 1.0],
            |p| p[0] > 0.0 && p[1] > 0.0,
            &opts,
        )
        .unwrap();
        assert!(report.used_simplex_fallback);
        assert!(report.converged);
        assert_relative_eq!(p[0], 2.3, max_relative = 1e-3);
        assert_relative_eq!(p[1], 0.17, max_relative = 1e-3);
    }

    #[test]
    fn reports_failure_with_best_point() {
        let (ts, ys) = decay_data();
        let opts = FitOptions {
            max_iterations: 1,
            simplex_fallback: false,
            ..FitOptions::default()
        };
        let err = least_squares(
            decay_model(&ts, &ys),
            &[0.5, 1.0],
            |p| p[0] > 0.0 && p[1] > 0.0,
            &opts,
        )
        .unwrap_err();
        match &err {
            Error::FitDidNotConverge {
                iterations, best, ..
            } => {
                assert_eq!(*iterations, 1);
                assert_eq!(best.len(), 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rejects_infeasible_start() {
        let (ts, ys) = decay_data();
        assert!(least_squares(
            decay_model(&ts, &ys),
            &[-1.0, 0.3],
            |p| p[0] > 0.0,
            &FitOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn rejects_underdetermined_fit() {
        let model = |p: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.push(p[0] + p[1] - 1.0);
        };
        assert!(matches!(
            least_squares(model, &[0.0, 0.0], |_| true, &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn constraint_keeps_parameters_in_domain() {
        // minimize (p - (-3))^2 subject to p >= 0: best feasible point is 0
        let model = |p: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.push(p[0] + 3.0);
            out.push(0.1 * p[0]);
        };
        let (p, _) =
            least_squares(model, &[2.0], |p| p[0] >= 0.0, &FitOptions::default()).unwrap();
        assert!(p[0] >= 0.0);
        assert!(p[0] < 0.05, "stopped at {}", p[0]);
    }
}
