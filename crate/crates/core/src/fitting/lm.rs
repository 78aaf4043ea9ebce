//! Levenberg-Marquardt for the three saturation parameters.
//!
//! Parameters are optimized in log space, `theta = (ln a, ln b, ln c)`, which
//! keeps them positive and makes the step size a relative change. Each
//! coordinate is additionally clamped into a box.

/// Residual model for `y = a (1 - exp(-b x^c))`.
pub(crate) struct SaturationProblem<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Stop once the largest log-parameter step falls below this.
    pub step_tolerance: f64,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOutcome {
    pub theta: [f64; 3],
    pub rss: f64,
}

impl SaturationProblem<'_> {
    fn rss(&self, theta: &[f64; 3]) -> f64 {
        let (a, ln_b, c) = (theta[0].exp(), theta[1], theta[2].exp());
        self.xs
            .iter()
            .zip(self.ys)
            .map(|(&x, &y)| {
                let r = saturation(a, ln_b, c, x) - y;
                r * r
            })
            .sum()
    }

    /// Returns `(rss, J^T J, J^T r)`.
    fn normal_equations(&self, theta: &[f64; 3]) -> (f64, [[f64; 3]; 3], [f64; 3]) {
        let (a, ln_b, c) = (theta[0].exp(), theta[1], theta[2].exp());
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        let mut rss = 0.0;
        for (&x, &y) in self.xs.iter().zip(self.ys) {
            let (f, grad) = if x > 0.0 {
                let ln_x = x.ln();
                let u = (ln_b + c * ln_x).exp();
                let rise = -(-u).exp_m1();
                let tail = a * (-u).exp() * u;
                (a * rise, [a * rise, tail, tail * c * ln_x])
            } else {
                (0.0, [0.0; 3])
            };
            let r = f - y;
            rss += r * r;
            for i in 0..3 {
                jtr[i] += grad[i] * r;
                for k in i..3 {
                    jtj[i][k] += grad[i] * grad[k];
                }
            }
        }
        for i in 0..3 {
            for k in 0..i {
                jtj[i][k] = jtj[k][i];
            }
        }
        (rss, jtj, jtr)
    }

    pub(crate) fn solve(&self, start: [f64; 3], opts: &LmOptions) -> LmOutcome {
        let clamp = |t: [f64; 3]| -> [f64; 3] {
            let mut out = t;
            for i in 0..3 {
                out[i] = out[i].clamp(opts.lower[i], opts.upper[i]);
            }
            out
        };
        let mut theta = clamp(start);
        let (mut rss, mut jtj, mut jtr) = self.normal_equations(&theta);
        let mut lambda = 1e-3;
        let mut iterations = 0;
        while iterations < opts.max_iterations {
            iterations += 1;
            if !rss.is_finite() || rss == 0.0 {
                break;
            }
            let mut accepted = false;
            let mut small_step = false;
            while lambda < 1e16 {
                let mut system = jtj;
                for (i, row) in system.iter_mut().enumerate() {
                    row[i] += lambda * jtj[i][i].max(1e-12);
                }
                let Some(delta) = solve3(system, [-jtr[0], -jtr[1], -jtr[2]]) else {
                    lambda *= 4.0;
                    continue;
                };
                let candidate = clamp([theta[0] + delta[0], theta[1] + delta[1], theta[2] + delta[2]]);
                let step = (0..3).map(|i| (candidate[i] - theta[i]).abs()).fold(0.0, f64::max);
                let candidate_rss = self.rss(&candidate);
                if candidate_rss.is_finite() && candidate_rss < rss {
                    theta = candidate;
                    (rss, jtj, jtr) = self.normal_equations(&theta);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    small_step = step < opts.step_tolerance;
                    break;
                }
                if step < opts.step_tolerance {
                    small_step = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted || small_step {
                break;
            }
        }
        LmOutcome { theta, rss }
    }
}

/// `a (1 - exp(-b x^c))` with `b` given as `ln b`.
#[inline]
pub(crate) fn saturation(a: f64, ln_b: f64, c: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let u = (ln_b + c * x.ln()).exp();
    -a * (-u).exp_m1()
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &k| m[i][col].abs().total_cmp(&m[k][col].abs()))
            .unwrap_or(col);
        if !(m[pivot][col].abs() > 1e-300) {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
