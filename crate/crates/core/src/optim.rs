//! Box-bounded Nelder-Mead minimizer. Trial points are clamped into the box,
//! which keeps the simplex feasible without penalty terms.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Initial simplex edge per coordinate.
    pub step: Vec<f64>,
    pub max_iters: usize,
    /// Stop when the spread of simplex values drops below this.
    pub f_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
}

impl NelderMead {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Minimizes `f` from `x0`. The returned point is the best one evaluated,
    /// so `f(result) <= f(x0)` always.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, x0: &[f64], mut f: F) -> Minimum {
        let n = x0.len();
        assert!(self.lower.len() == n && self.upper.len() == n && self.step.len() == n);
        let mut start = x0.to_vec();
        self.clamp(&mut start);
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let f0 = eval(&start, &mut evals);
        if self.max_iters == 0 || n == 0 {
            return Minimum { x: start, f: f0, iters: 0, evals };
        }

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut v = start.clone();
            v[i] += self.step[i];
            if v[i] > self.upper[i] {
                v[i] = start[i] - self.step[i];
            }
            self.clamp(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        let mut iters = 0;
        while iters < self.max_iters {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[n].1 - simplex[0].1 <= self.f_tol {
                break;
            }
            iters += 1;
            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect();
                self.clamp(&mut p);
                p
            };
            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let fx = eval(&x, &mut evals);
                (x, fx)
            } else {
                let x = along(0.5);
                let fx = eval(&x, &mut evals);
                (x, fx)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            // Shrink toward the best vertex.
            let best = simplex[0].0.clone();
            for (v, fv) in simplex.iter_mut().skip(1) {
                for (x, b) in v.iter_mut().zip(&best) {
                    *x = b + 0.5 * (*x - b);
                }
                *fv = eval(v, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Minimum { x, f: fx, iters, evals }
    }
}
