//! Derivative-free minimization (Nelder–Mead with dimension-adaptive
//! coefficients) and a Levenberg–Marquardt polish for weighted least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once every vertex is within this sup-norm distance of the best.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            x_tol: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], options: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    if n == 0 {
        let value = finite_or_inf(f(x0));
        return Minimum {
            x: Vec::new(),
            value,
            iterations: 0,
            converged: true,
        };
    }
    let nf = n.max(2) as f64;
    let (reflect, expand, contract, shrink) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut eval = |x: &[f64]| finite_or_inf(f(x));
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += options.initial_step * x0[i].abs().max(1.0);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    while iterations < options.max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let diameter = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < options.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(reflect);
        let fr = eval(&xr);
        if fr < values[best] {
            let xe = along(reflect * expand);
            let fe = eval(&xe);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = along(reflect * contract);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-contract);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                *x = a + shrink * (*x - a);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

fn weighted_norm(r: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    finite_or_inf(r.dot(&(w * r)))
}

/// Minimizes `r(x)ᵀ W r(x)` with a Levenberg–Marquardt iteration on a
/// central-difference Jacobian. `residual` returns `None` outside the domain.
pub fn levenberg_marquardt<R: Fn(&[f64]) -> Option<Vec<f64>>>(
    residual: R,
    w: &DMatrix<f64>,
    x0: &[f64],
    max_iter: usize,
) -> Minimum {
    let p = x0.len();
    let eval = |x: &[f64]| {
        residual(x)
            .map(DVector::from_vec)
            .filter(|r| r.iter().all(|v| v.is_finite()))
    };
    let mut x = x0.to_vec();
    let Some(mut r) = eval(&x) else {
        return Minimum {
            x,
            value: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    };
    let mut value = weighted_norm(&r, w);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter && value > 0.0 {
        iterations += 1;
        let mut jac = DMatrix::zeros(r.len(), p);
        let mut usable = true;
        for k in 0..p {
            let h = 1e-6 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            match (eval(&xp), eval(&xm)) {
                (Some(a), Some(b)) => jac.set_column(k, &((a - b) / (2.0 * h))),
                _ => {
                    usable = false;
                    break;
                }
            }
        }
        if !usable {
            break;
        }
        let jtw = jac.transpose() * w;
        let normal = &jtw * &jac;
        let gradient = &jtw * &r;
        let mut stepped = false;
        while lambda < 1e12 {
            let mut damped = normal.clone();
            for k in 0..p {
                damped[(k, k)] += lambda * normal[(k, k)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&gradient))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match eval(&trial) {
                Some(rt) if weighted_norm(&rt, w) < value => {
                    let small = step.amax() <= 1e-12 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    x = trial;
                    r = rt;
                    value = weighted_norm(&r, w);
                    lambda = (lambda / 10.0).max(1e-15);
                    stepped = true;
                    converged = small;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !stepped {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_in_five_dims() {
        let target = [1.0, -2.0, 0.5, 3.0, -0.25];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                .sum()
        };
        let m = nelder_mead(f, &[0.0; 5], &NelderMeadOptions::default());
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.1).powi(2) };
        let m = nelder_mead(f, &[2.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn levenberg_marquardt_solves_rosenbrock_residuals() {
        let residual = |x: &[f64]| Some(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]);
        let w = DMatrix::identity(2, 2);
        let m = levenberg_marquardt(residual, &w, &[-1.2, 1.0], 200);
        assert!(m.value < 1e-20, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-9 && (m.x[1] - 1.0).abs() < 1e-9);
        let outside = levenberg_marquardt(|_: &[f64]| None, &w, &[0.0, 0.0], 10);
        assert_eq!(outside.value, f64::INFINITY);
    }
}
