//! Exogenous regressor series, interpolated linearly between samples and
//! held constant beyond either end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

/// One linear piece `[start, end]` of the interpolant with its end values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub value_start: f64,
    pub value_end: f64,
}

impl ForcingSeries {
    /// Builds a series from samples in any order; times must be distinct.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} forcing times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::DomainError("forcing series is empty".into()));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DomainError("forcing series has non-finite entries".into()));
        }
        let mut pairs: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateTime(w[0].0));
            }
        }
        let (times, values) = pairs.into_iter().unzip();
        Ok(ForcingSeries { times, values })
    }

    /// A series that is `value` everywhere.
    pub fn constant(value: f64) -> Self {
        ForcingSeries {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Linear pieces of the interpolant covering `[t0, t1]`.
    pub fn segments(&self, t0: f64, t1: f64) -> Vec<Segment> {
        let mut cuts = vec![t0];
        cuts.extend(self.times.iter().copied().filter(|&t| t > t0 && t < t1));
        cuts.push(t1);
        cuts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| Segment {
                start: w[0],
                end: w[1],
                value_start: self.value_at(w[0]),
                value_end: self.value_at(w[1]),
            })
            .collect()
    }

    /// Exact value of `∫_{t0}^{t1} exp(rate·(t1 − u)) T(u) du` for the
    /// piecewise-linear interpolant `T`.
    pub fn exp_weighted_integral(&self, rate: f64, t0: f64, t1: f64) -> f64 {
        self.segments(t0, t1)
            .iter()
            .map(|seg| {
                let h = seg.end - seg.start;
                let z = rate * h;
                let decay = (rate * (t1 - seg.end)).exp();
                decay * h * (seg.value_end * phi1(z) - (seg.value_end - seg.value_start) * psi(z))
            })
            .sum()
    }
}

/// `(e^z − 1)/z`, continuous at zero.
pub(crate) fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// `∫_0^1 v e^{zv} dv = (e^z (z − 1) + 1)/z²`, by series near zero.
pub(crate) fn psi(z: f64) -> f64 {
    if z.abs() < 0.5 {
        // sum z^n / (n! (n + 2))
        let mut term = 1.0;
        let mut sum = 0.5;
        for n in 1..30 {
            term *= z / n as f64;
            let add = term / (n as f64 + 2.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // composite Simpson
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn two_point_series_interpolates_and_extends() {
        let f = ForcingSeries::new(vec![1.0, 0.0], vec![3.0, 1.0]).unwrap();
        assert_eq!(f.value_at(0.5), 2.0);
        assert_eq!(f.value_at(-10.0), 1.0);
        assert_eq!(f.value_at(10.0), 3.0);
    }

    #[test]
    fn single_point_is_constant() {
        let f = ForcingSeries::new(vec![2.0], vec![4.5]).unwrap();
        assert_eq!(f.value_at(-1e6), 4.5);
        assert_eq!(f.value_at(1e6), 4.5);
    }

    #[test]
    fn duplicate_times_rejected() {
        let e = ForcingSeries::new(vec![0.0, 1.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(e, Error::DuplicateTime(0.0));
    }

    #[test]
    fn psi_series_matches_closed_form_at_switch() {
        for z in [-0.49999, 0.49999, -0.3, 0.2] {
            let closed = (f64::exp(z) * (z - 1.0) + 1.0) / (z * z);
            assert!((psi(z) - closed).abs() < 1e-12, "z={z}");
        }
        assert_eq!(psi(0.0), 0.5);
    }

    #[test]
    fn weighted_integral_matches_quadrature() {
        let f = ForcingSeries::new(vec![0.0, 1.0, 2.5, 4.0], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        for rate in [-3.0, -0.001, 0.0, 0.7] {
            for (t0, t1) in [(-1.0, 5.0), (0.3, 2.0), (1.0, 1.0), (4.5, 6.0)] {
                let got = f.exp_weighted_integral(rate, t0, t1);
                // Simpson per knot interval so the kinks fall on grid points
                let mut cuts = vec![t0];
                cuts.extend(f.times().iter().copied().filter(|&t| t > t0 && t < t1));
                cuts.push(t1);
                let want: f64 = cuts
                    .windows(2)
                    .map(|w| quad(|u| (rate * (t1 - u)).exp() * f.value_at(u), w[0], w[1], 2000))
                    .sum();
                assert!((got - want).abs() < 1e-9, "rate={rate} [{t0},{t1}] {got} vs {want}");
            }
        }
    }
}
