//! Derivative-free simplex minimization with restarts.

/// Outcome of a minimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Initial simplex edge length along each coordinate.
    pub step: f64,
    /// Relative spread of simplex values at which a run stops.
    pub tolerance: f64,
    pub max_evaluations: usize,
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { step: 0.5, tolerance: 1e-8, max_evaluations: 4000, max_restarts: 5 }
    }
}

fn spread_small(best: f64, worst: f64, tol: f64) -> bool {
    (worst - best).abs() <= tol * (best.abs() + 1e-12)
}

/// Minimize `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    if n == 0 {
        return Minimum { x: best_x, value: best_f, evaluations: evals, converged: true, restarts: 0 };
    }

    let mut restarts = 0;
    loop {
        let (x, fx, converged) = run(&mut eval, &best_x, best_f, opts, &mut evals);
        let improved = fx < best_f && !spread_small(fx, best_f, opts.tolerance);
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        if !converged {
            return Minimum { x: best_x, value: best_f, evaluations: evals, converged: false, restarts };
        }
        if !improved && restarts > 0 {
            return Minimum { x: best_x, value: best_f, evaluations: evals, converged: true, restarts };
        }
        if restarts >= opts.max_restarts {
            return Minimum { x: best_x, value: best_f, evaluations: evals, converged: true, restarts };
        }
        restarts += 1;
    }
}

fn run<E>(eval: &mut E, x0: &[f64], f0: f64, opts: &NelderMeadOptions, evals: &mut usize) -> (Vec<f64>, f64, bool)
where
    E: FnMut(&[f64], &mut usize) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.step;
        vals.push(eval(&p, evals));
        pts.push(p);
    }

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        if vals[0].is_finite() && spread_small(vals[0], vals[n], opts.tolerance) {
            return (pts[0].clone(), vals[0], true);
        }
        if *evals >= opts.max_evaluations {
            return (pts[0].clone(), vals[0], false);
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(0.5);
            let fc = eval(&xc, evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, p)| b + 0.5 * (p - b)).collect();
            vals[i] = eval(&shrunk, evals);
            pts[i] = shrunk;
        }
    }
}
