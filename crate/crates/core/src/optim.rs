//! Derivative-free minimization: Nelder–Mead with restarts, plus a smooth
//! map from an unbounded space onto a positive box.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of objective values over the simplex drops below
    /// `f_tol · (1 + |f_best|)` and the simplex diameter below `x_tol`.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Restart from the incumbent until a restart gains less than `f_tol`.
    pub max_restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-13,
            x_tol: 1e-10,
            max_restarts: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with initial simplex edge lengths `step`.
/// Non-finite objective values are treated as `+∞`.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], opts: &NelderMead) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = x0.to_vec();
    let mut best_f = eval(&best);
    let mut evals = 1;
    let mut converged = false;
    for restart in 0..=opts.max_restarts {
        let scale = if restart == 0 { 1.0 } else { 0.1 };
        let step: Vec<f64> = step.iter().map(|s| s * scale).collect();
        let run = simplex_run(
            &eval,
            &best,
            best_f,
            &step,
            opts,
            opts.max_evals.saturating_sub(evals),
        );
        evals += run.evals;
        let gain = best_f - run.f;
        if run.f <= best_f {
            best = run.x;
            best_f = run.f;
        }
        converged = run.converged;
        if !(gain > opts.f_tol * (1.0 + best_f.abs())) && restart > 0 {
            break;
        }
        if evals >= opts.max_evals {
            converged = false;
            break;
        }
    }
    Minimum {
        x: best,
        f: best_f,
        evals,
        converged,
    }
}

fn simplex_run<F>(
    f: &F,
    x0: &[f64],
    f0: f64,
    step: &[f64],
    opts: &NelderMead,
    budget: usize,
) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    vals.push(f0);
    let mut evals = 0;
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        vals.push(f(&p));
        pts.push(p);
        evals += 1;
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evals < budget {
        // order: best first, ties broken by index for determinism
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diam = pts[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if vals[0].is_finite() && spread <= opts.f_tol * (1.0 + vals[0].abs()) && diam <= opts.x_tol
        {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(gamma);
            let fe = f(&xe);
            evals += 1;
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
            let xc = along(rho);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = pts[0]
                .iter()
                .zip(&pts[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            vals[i] = f(&p);
            pts[i] = p;
            evals += 1;
        }
    }
    let (bi, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .unwrap();
    Minimum {
        x: pts[bi].clone(),
        f: vals[bi],
        evals,
        converged,
    }
}

/// Bounded positive interval `[lo, hi]` reached from the whole real line by
/// `t ↦ lo · (hi/lo)^logistic(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBox {
    pub lo: f64,
    pub hi: f64,
}

impl LogBox {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(0.0 < lo && lo < hi);
        Self { lo, hi }
    }

    pub fn to_bounded(&self, t: f64) -> f64 {
        let s = 1.0 / (1.0 + (-t).exp());
        (self.lo.ln() + s * (self.hi / self.lo).ln())
            .exp()
            .clamp(self.lo, self.hi)
    }

    pub fn to_free(&self, x: f64) -> f64 {
        let s = ((x.clamp(self.lo, self.hi)).ln() - self.lo.ln()) / (self.hi / self.lo).ln();
        let s = s.clamp(1e-12, 1.0 - 1e-12);
        (s / (1.0 - s)).ln()
    }

    /// True when `t` maps to within a relative `1e-4` of either bound.
    pub fn at_boundary(&self, t: f64) -> bool {
        let x = self.to_bounded(t);
        x <= self.lo * (1.0 + 1e-4) || x >= self.hi * (1.0 - 1e-4)
    }
}
