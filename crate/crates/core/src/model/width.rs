//! Gaussian-process regression of the cross-section radius over arc length.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_N: f64 = 0.002;
pub const DEFAULT_SIGMA_F: f64 = 1.0;
pub const DEFAULT_LENGTH_SCALE: f64 = 0.1;

const JITTER_BASE: f64 = 1e-10;
const JITTER_DOUBLINGS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// `2|r|³ - 3Rr² + R³`, the thin-plate covariance used for implicit
    /// surfaces, with `R` covering every pairwise distance of the data.
    #[serde(rename = "thinplate")]
    ThinPlate,
    /// Cubic-spline (integrated Wiener) covariance on `l + length_scale`.
    #[serde(rename = "cubic")]
    Cubic,
    #[serde(rename = "sqexp")]
    SqExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub sigma_f: f64,
    /// Length scale for `sqexp`, origin offset for `cubic`; unused by `thinplate`.
    pub length_scale: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Self {
            kind: KernelKind::ThinPlate,
            sigma_f: DEFAULT_SIGMA_F,
            length_scale: DEFAULT_LENGTH_SCALE,
        }
    }
}

impl Kernel {
    pub fn thin_plate(sigma_f: f64) -> Self {
        Self {
            kind: KernelKind::ThinPlate,
            sigma_f,
            ..Self::default()
        }
    }

    /// `support` is the thin-plate `R`, fixed when the model is fitted.
    fn eval(&self, s: f64, t: f64, support: f64) -> f64 {
        let scale = self.sigma_f * self.sigma_f;
        match self.kind {
            KernelKind::ThinPlate => {
                let r = (s - t).abs().min(support);
                scale * (2.0 * r * r * r - 3.0 * support * r * r + support * support * support)
            }
            KernelKind::Cubic => {
                let (a, b) = (s + self.length_scale, t + self.length_scale);
                let v = a.min(b);
                scale * ((a - b).abs() * v * v / 2.0 + v * v * v / 3.0)
            }
            KernelKind::SqExp => {
                let r = (s - t) / self.length_scale;
                scale * (-0.5 * r * r).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(Error::InvalidWidthSamples(format!(
                "sigma_f must be positive, got {}",
                self.sigma_f
            )));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::InvalidWidthSamples(format!(
                "length_scale must be positive, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }
}

/// GP posterior of the width function `w(l)`.
#[derive(Debug, Clone)]
pub struct WidthModel {
    train_l: Vec<f64>,
    train_w: Vec<f64>,
    sigma_n: f64,
    kernel: Kernel,
    support: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl PartialEq for WidthModel {
    fn eq(&self, other: &Self) -> bool {
        self.train_l == other.train_l
            && self.train_w == other.train_w
            && self.sigma_n == other.sigma_n
            && self.kernel == other.kernel
    }
}

impl WidthModel {
    /// Fits the posterior to `(arc length, width)` samples.
    pub fn fit(samples: &[(f64, f64)], sigma_n: f64, kernel: Kernel) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWidthSamples("no samples".into()));
        }
        if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidWidthSamples(format!("sigma_n = {sigma_n}")));
        }
        kernel.validate()?;
        for &(l, w) in samples {
            if !(l >= 0.0 && l.is_finite() && w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidWidthSamples(format!(
                    "sample ({l}, {w}) must be finite and non-negative"
                )));
            }
        }
        let train_l: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let train_w: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (lo, hi) = train_l
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
        // Twice the data span keeps queries over the fitted curve inside R.
        let support = 2.0 * (hi - lo).max(1e-3);

        let n = samples.len();
        let mut gram = DMatrix::from_fn(n, n, |i, j| kernel.eval(train_l[i], train_l[j], support));
        for i in 0..n {
            gram[(i, i)] += sigma_n * sigma_n;
        }
        let chol = factor_with_jitter(gram)?;
        let weights = chol.solve(&DVector::from_column_slice(&train_w));
        Ok(Self {
            train_l,
            train_w,
            sigma_n,
            kernel,
            support,
            chol,
            weights,
        })
    }

    pub fn train_l(&self) -> &[f64] {
        &self.train_l
    }

    pub fn train_w(&self) -> &[f64] {
        &self.train_w
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.train_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_l.is_empty()
    }

    fn cross_cov(&self, l: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.train_l.len(),
            self.train_l.iter().map(|&t| self.kernel.eval(l, t, self.support)),
        )
    }

    /// Posterior mean, clamped at zero.
    pub fn mean(&self, l: f64) -> f64 {
        let m: f64 = self
            .train_l
            .iter()
            .zip(self.weights.iter())
            .map(|(&t, &a)| self.kernel.eval(l, t, self.support) * a)
            .sum();
        m.max(0.0)
    }

    /// Posterior mean (clamped at zero) and variance.
    pub fn predict(&self, l: f64) -> (f64, f64) {
        let k_star = self.cross_cov(l);
        let mean = k_star.dot(&self.weights).max(0.0);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("Cholesky factor has a non-zero diagonal");
        let var = self.kernel.eval(l, l, self.support) - v.norm_squared();
        (mean, var.max(0.0))
    }

    pub fn to_file(&self) -> WidthFile {
        WidthFile {
            l: self.train_l.clone(),
            w: self.train_w.clone(),
            sigma_n: self.sigma_n,
            kernel: self.kernel.kind,
            sigma_f: self.kernel.sigma_f,
            length_scale: Some(self.kernel.length_scale),
        }
    }

    pub fn from_file(f: &WidthFile) -> Result<Self> {
        if f.l.len() != f.w.len() {
            return Err(Error::InvalidWidthSamples(format!(
                "{} arc lengths but {} widths",
                f.l.len(),
                f.w.len()
            )));
        }
        let samples: Vec<(f64, f64)> = f.l.iter().copied().zip(f.w.iter().copied()).collect();
        let kernel = Kernel {
            kind: f.kernel,
            sigma_f: f.sigma_f,
            length_scale: f.length_scale.unwrap_or(DEFAULT_LENGTH_SCALE),
        };
        Self::fit(&samples, f.sigma_n, kernel)
    }
}

fn factor_with_jitter(gram: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(gram.clone()) {
        return Ok(c);
    }
    let n = gram.nrows();
    let base = JITTER_BASE * gram.trace().abs() / n as f64;
    for k in 0..=JITTER_DOUBLINGS {
        let jitter = base * f64::from(1u32 << k);
        let mut g = gram.clone();
        for i in 0..n {
            g[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(g) {
            return Ok(c);
        }
    }
    Err(Error::SingularGram)
}

/// Serialized width model: the training set plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthFile {
    pub l: Vec<f64>,
    pub w: Vec<f64>,
    pub sigma_n: f64,
    pub kernel: KernelKind,
    pub sigma_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
}

pub fn width_fit(samples: &[(f64, f64)], sigma_n: f64, kernel: Kernel) -> Result<WidthModel> {
    WidthModel::fit(samples, sigma_n, kernel)
}

pub fn width_predict(model: &WidthModel, l: f64) -> (f64, f64) {
    model.predict(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const KERNELS: [KernelKind; 3] = [KernelKind::ThinPlate, KernelKind::Cubic, KernelKind::SqExp];

    fn kernel(kind: KernelKind) -> Kernel {
        Kernel {
            kind,
            ..Kernel::default()
        }
    }

    #[test]
    fn single_sample_interpolates() {
        for kind in KERNELS {
            let m = width_fit(&[(0.1, 0.02)], 0.0, kernel(kind)).unwrap();
            let (mean, var) = width_predict(&m, 0.1);
            assert_abs_diff_eq!(mean, 0.02, epsilon = 1e-12);
            assert!(var < 1e-9);
        }
    }

    #[test]
    fn noiseless_linear_profile_interpolates() {
        let samples: Vec<(f64, f64)> = (0..5).map(|i| (0.1 * i as f64, 0.005 * i as f64)).collect();
        for kind in KERNELS {
            let m = width_fit(&samples, 0.0, kernel(kind)).unwrap();
            for &(l, w) in &samples {
                let (mean, var) = m.predict(l);
                assert_abs_diff_eq!(mean, w, epsilon = 1e-9);
                assert!(var < 1e-9, "{kind:?}: variance {var} at training point");
            }
        }
    }

    /// Direct Gram solve with Gaussian elimination, independent of the
    /// Cholesky path.
    fn oracle_mean(samples: &[(f64, f64)], sigma_n: f64, k: &Kernel, support: f64, at: f64) -> f64 {
        let n = samples.len();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| k.eval(samples[i].0, samples[j].0, support))
                    .collect();
                row[i] += sigma_n * sigma_n;
                row.push(samples[i].1);
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for j in c..=n {
                        a[r][j] -= f * a[c][j];
                    }
                }
            }
        }
        (0..n)
            .map(|i| k.eval(at, samples[i].0, support) * a[i][n] / a[i][i])
            .sum()
    }

    #[test]
    fn noisy_profile_is_smoothed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.004).unwrap();
        let truth = |l: f64| 0.04 * (std::f64::consts::PI * l / 0.5).sin();
        let samples: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let l = 0.5 * (i as f64 + 0.5) / 20.0;
                (l, (truth(l) + noise.sample(&mut rng)).max(0.0))
            })
            .collect();
        let m = width_fit(&samples, 0.004, Kernel::thin_plate(1.0)).unwrap();
        let mut fit_se = 0.0;
        let mut noise_se = 0.0;
        for &(l, w) in &samples {
            let oracle = oracle_mean(&samples, 0.004, m.kernel(), m.support, l);
            assert_abs_diff_eq!(m.mean(l), oracle.max(0.0), epsilon = 1e-9);
            fit_se += (m.mean(l) - truth(l)).powi(2);
            noise_se += (w - truth(l)).powi(2);
        }
        assert!(fit_se <= noise_se, "fit RMSE {} > noise RMSE {}", fit_se.sqrt(), noise_se.sqrt());
    }

    #[test]
    fn between_points_stays_near_cubic_interpolant() {
        let samples: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let l = 0.05 * i as f64;
                (l, 0.01 + 0.08 * l + 0.05 * l * l)
            })
            .collect();
        let m = width_fit(&samples, 0.0, Kernel::thin_plate(1.0)).unwrap();
        // Lagrange cubic through the 4 nearest samples around l = 0.225.
        let q = 0.225;
        let pts = &samples[3..7];
        let lagrange: f64 = (0..4)
            .map(|i| {
                let mut term = pts[i].1;
                for j in 0..4 {
                    if i != j {
                        term *= (q - pts[j].0) / (pts[i].0 - pts[j].0);
                    }
                }
                term
            })
            .sum();
        let mean = m.mean(q);
        assert!((mean - lagrange).abs() <= 0.2 * lagrange, "{mean} vs {lagrange}");
        assert!(mean > samples[4].1 && mean < samples[5].1);
    }

    #[test]
    fn extrapolation_variance_grows() {
        let samples: Vec<(f64, f64)> = (0..8).map(|i| (0.04 * i as f64, 0.03)).collect();
        for kind in KERNELS {
            let m = width_fit(&samples, 0.002, kernel(kind)).unwrap();
            let far = m.predict(5.0).1;
            for &(l, _) in &samples {
                assert!(far >= m.predict(l).1, "{kind:?}");
            }
        }
    }

    #[test]
    fn interpolation_holds_for_random_profiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(3..40);
            let mut ls: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            ls.sort_by(f64::total_cmp);
            ls.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let samples: Vec<(f64, f64)> =
                ls.iter().map(|&l| (l, rng.random_range(0.0..0.06))).collect();
            let m = width_fit(&samples, 0.0, Kernel::thin_plate(1.0)).unwrap();
            for &(l, w) in &samples {
                assert_abs_diff_eq!(m.mean(l), w, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_samples() {
        let k = Kernel::default();
        assert!(width_fit(&[], 0.0, k).is_err());
        assert!(width_fit(&[(0.1, -0.01)], 0.0, k).is_err());
        assert!(width_fit(&[(-0.1, 0.01)], 0.0, k).is_err());
        assert!(width_fit(&[(0.1, 0.01)], -1.0, k).is_err());
    }

    #[test]
    fn duplicate_inputs_fall_back_to_jitter() {
        let m = width_fit(&[(0.1, 0.02), (0.1, 0.02), (0.2, 0.03)], 0.0, Kernel::default()).unwrap();
        assert_abs_diff_eq!(m.mean(0.1), 0.02, epsilon = 1e-6);
    }

    #[test]
    fn file_round_trip_reproduces_predictions() {
        let samples = [(0.0, 0.005), (0.1, 0.03), (0.25, 0.04), (0.4, 0.01)];
        let m = width_fit(&samples, 0.002, Kernel::default()).unwrap();
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back = WidthModel::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        for l in [0.0, 0.05, 0.33] {
            assert_eq!(m.predict(l), back.predict(l));
        }
    }
}
