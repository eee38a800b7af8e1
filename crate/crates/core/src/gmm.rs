//! Two-component one-dimensional Gaussian mixture fitted by EM.
//!
//! Inputs are min-max normalized to `[0, 1]` before fitting, so the
//! tolerance and the initialization do not depend on the scale of the
//! losses. Component 0 is always the low-mean mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest number of values accepted by [`fit_gmm_1d`].
pub const MIN_SAMPLES: usize = 10;

/// Variance floor in normalized units.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Input ranges below this are treated as a single point.
pub const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the change in mean per-sample log-likelihood.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Parameters of a fitted mixture, expressed in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit<T> {
    pub means: [T; 2],
    pub variances: [T; 2],
    pub weights: [T; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Set when every input was (numerically) identical.
    pub degenerate: bool,
    pub input_min: T,
    pub input_max: T,
    /// Mean per-sample log-likelihood after each E-step.
    pub log_likelihood: Vec<T>,
}

impl<T: Scalar> GmmFit<T> {
    /// A fit with explicit parameters and no input normalization.
    pub fn from_params(means: [T; 2], variances: [T; 2], weights: [T; 2]) -> Result<Self> {
        if variances.iter().any(|v| *v <= T::zero()) {
            return Err(Error::Config("variances must be positive".into()));
        }
        let total = weights[0] + weights[1];
        if (total - T::one()).abs() > T::of(1e-9) || weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::Config("mixing weights must be a distribution".into()));
        }
        let mut fit = Self {
            means,
            variances,
            weights,
            iterations: 0,
            converged: true,
            degenerate: false,
            input_min: T::zero(),
            input_max: T::one(),
            log_likelihood: Vec::new(),
        };
        fit.sort_components();
        Ok(fit)
    }

    fn normalize(&self, v: T) -> T {
        (v - self.input_min) / (self.input_max - self.input_min)
    }

    /// Component means mapped back to input units.
    pub fn means_in_input_units(&self) -> [T; 2] {
        let span = self.input_max - self.input_min;
        self.means.map(|m| self.input_min + m * span)
    }

    /// Standard deviations mapped back to input units.
    pub fn std_devs_in_input_units(&self) -> [T; 2] {
        let span = self.input_max - self.input_min;
        self.variances.map(|v| v.sqrt() * span)
    }

    fn log_joint(&self, x: T) -> [T; 2] {
        let ln_2pi = T::of((2.0 * std::f64::consts::PI).ln());
        let half = T::of(0.5);
        std::array::from_fn(|k| {
            let d = x - self.means[k];
            self.weights[k].ln() - half * (ln_2pi + self.variances[k].ln())
                - d * d / (T::of(2.0) * self.variances[k])
        })
    }

    /// Posterior probability that `value` was drawn from the low-mean
    /// component. A degenerate fit returns 1 for every input.
    pub fn posterior_low(&self, value: T) -> T {
        if self.degenerate {
            return T::one();
        }
        let [l0, l1] = self.log_joint(self.normalize(value));
        logistic(l0 - l1)
    }

    /// [`GmmFit::posterior_low`] with the input clamped to the interval
    /// between the two means. Unequal variances make the raw posterior rise
    /// again in the far tail of the wider component; between the means it is
    /// always non-increasing, so the clamped version is monotone everywhere.
    pub fn posterior_low_monotone(&self, value: T) -> T {
        if self.degenerate {
            return T::one();
        }
        let x = self.normalize(value).max(self.means[0]).min(self.means[1]);
        let [l0, l1] = self.log_joint(x);
        logistic(l0 - l1)
    }

    /// Complement of [`GmmFit::posterior_low`].
    pub fn posterior_high(&self, value: T) -> T {
        if self.degenerate {
            return T::zero();
        }
        let [l0, l1] = self.log_joint(self.normalize(value));
        logistic(l1 - l0)
    }

    fn sort_components(&mut self) {
        if self.means[0] > self.means[1] {
            self.means.swap(0, 1);
            self.variances.swap(0, 1);
            self.weights.swap(0, 1);
        }
    }
}

fn logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fits a two-component mixture to `values` by expectation maximization.
///
/// Initialization is deterministic: means at the 10th and 90th percentiles,
/// both variances at a quarter of the sample variance, equal weights.
pub fn fit_gmm_1d<T: Scalar>(values: &[T], options: &GmmOptions) -> Result<GmmFit<T>> {
    if values.len() < MIN_SAMPLES {
        return Err(Error::Contract(format!(
            "mixture fit needs at least {MIN_SAMPLES} values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("mixture fit input is not finite".into()));
    }
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let floor = T::of(VARIANCE_FLOOR);

    if max - min < T::of(DEGENERATE_RANGE) {
        return Ok(GmmFit {
            means: [T::zero(); 2],
            variances: [floor; 2],
            weights: [T::of(0.5); 2],
            iterations: 0,
            converged: true,
            degenerate: true,
            input_min: min,
            input_max: max,
            log_likelihood: Vec::new(),
        });
    }

    let span = max - min;
    let x: Vec<T> = values.iter().map(|&v| (v - min) / span).collect();
    let n = T::of(x.len() as f64);

    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let init_var = (var / T::of(4.0)).max(floor);

    let mut fit = GmmFit {
        means: [percentile(&sorted, 0.1), percentile(&sorted, 0.9)],
        variances: [init_var; 2],
        weights: [T::of(0.5); 2],
        iterations: 0,
        converged: false,
        degenerate: false,
        input_min: min,
        input_max: max,
        log_likelihood: Vec::with_capacity(options.max_iter),
    };

    let tol = T::of(options.tol);
    let tiny = T::of(1e-300_f64.max(f64::from(f32::MIN_POSITIVE)));
    let mut resp = vec![[T::zero(); 2]; x.len()];

    for iter in 0..options.max_iter {
        // E-step
        let mut ll = T::zero();
        for (r, &xi) in resp.iter_mut().zip(&x) {
            let [l0, l1] = fit.log_joint(xi);
            let m = l0.max(l1);
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            *r = [(l0 - lse).exp(), (l1 - lse).exp()];
            ll = ll + lse;
        }
        let ll = ll / n;
        if let Some(&prev) = fit.log_likelihood.last() {
            debug_assert!(
                ll >= prev - T::of(1e-9) * (T::one() + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            fit.log_likelihood.push(ll);
            if (ll - prev).abs() < tol {
                fit.converged = true;
                fit.iterations = iter;
                break;
            }
        } else {
            fit.log_likelihood.push(ll);
        }

        // M-step
        for k in 0..2 {
            let nk = resp.iter().map(|r| r[k]).sum::<T>().max(tiny);
            let mu = resp.iter().zip(&x).map(|(r, &xi)| r[k] * xi).sum::<T>() / nk;
            let v = resp
                .iter()
                .zip(&x)
                .map(|(r, &xi)| r[k] * (xi - mu) * (xi - mu))
                .sum::<T>()
                / nk;
            fit.means[k] = mu;
            fit.variances[k] = v.max(floor);
            fit.weights[k] = (nk / n).max(tiny);
        }
        let total = fit.weights[0] + fit.weights[1];
        fit.weights = fit.weights.map(|w| w / total);
        fit.iterations = iter + 1;
    }

    fit.sort_components();
    Ok(fit)
}
