//! CDF sketches evaluated on a grid, and the operations that need a valid
//! (monotone) CDF: quantiles, inverse-transform sampling, means.

use rand::Rng;

use crate::error::{CcnError, Result};
use crate::scalar::Real;

/// Pool-adjacent-violators: least-squares non-decreasing fit, equal weights.
pub fn isotonic_non_decreasing<S: Real>(values: &[S]) -> Vec<S> {
    // Each block: (sum, count).
    let mut blocks: Vec<(S, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / S::c(c1 as f64) > s2 / S::c(c2 as f64) {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let m = s / S::c(c as f64);
        out.extend(std::iter::repeat_n(m, c));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdfCurve<S> {
    pub z_grid: Vec<S>,
    pub probs: Vec<S>,
}

/// A quantile lookup. `extrapolated` is set when the requested level lies
/// outside the probabilities the curve attains, in which case `value` is
/// the nearest grid endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantileEstimate<S> {
    pub value: S,
    pub extrapolated: bool,
}

impl<S: Real> CdfCurve<S> {
    /// Projects raw network outputs onto a valid CDF sketch: isotonic in z
    /// and clamped to `[0, 1]`.
    pub fn from_raw(z_grid: Vec<S>, raw: &[S]) -> Result<Self> {
        if z_grid.len() < 2 || z_grid.len() != raw.len() {
            return Err(CcnError::InvalidConfig(format!(
                "curve needs >= 2 aligned points, got {} grid / {} probs",
                z_grid.len(),
                raw.len()
            )));
        }
        if z_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CcnError::InvalidData("curve grid must be strictly increasing".into()));
        }
        let probs = isotonic_non_decreasing(raw).into_iter().map(|p| p.max(S::zero()).min(S::one())).collect();
        Ok(CdfCurve { z_grid, probs })
    }

    pub fn len(&self) -> usize {
        self.z_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_grid.is_empty()
    }

    /// Piecewise-linear interpolation, constant beyond the grid.
    pub fn eval(&self, z: S) -> S {
        let g = &self.z_grid;
        if z <= g[0] {
            return self.probs[0];
        }
        let last = g.len() - 1;
        if z >= g[last] {
            return self.probs[last];
        }
        let hi = g.partition_point(|v| *v <= z).min(last);
        let lo = hi - 1;
        let t = (z - g[lo]) / (g[hi] - g[lo]);
        self.probs[lo] + t * (self.probs[hi] - self.probs[lo])
    }

    /// Bisection on the interpolated curve, to `1e-6` of the grid width.
    pub fn quantile(&self, q: S) -> QuantileEstimate<S> {
        let last = self.len() - 1;
        if q < self.probs[0] {
            return QuantileEstimate { value: self.z_grid[0], extrapolated: true };
        }
        if q > self.probs[last] {
            return QuantileEstimate { value: self.z_grid[last], extrapolated: true };
        }
        let (mut lo, mut hi) = (self.z_grid[0], self.z_grid[last]);
        let tol = S::c(1e-6) * (hi - lo);
        while hi - lo > tol {
            let mid = (lo + hi) / S::c(2.0);
            if self.eval(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        QuantileEstimate { value: (lo + hi) / S::c(2.0), extrapolated: false }
    }

    /// Inverse-transform draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<S> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                self.quantile(S::c(u)).value
            })
            .collect()
    }

    /// Mean of the piecewise-linear CDF, with the mass below the first grid
    /// point placed at it and the mass above the last placed at it.
    pub fn mean(&self) -> S {
        let last = self.len() - 1;
        let mut integral = S::zero();
        for i in 0..last {
            let dz = self.z_grid[i + 1] - self.z_grid[i];
            integral += dz * (self.probs[i] + self.probs[i + 1]) / S::c(2.0);
        }
        self.z_grid[last] - integral
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn pav_fixes_violations() {
        let fit = isotonic_non_decreasing(&[0.1f64, 0.5, 0.3, 0.7, 0.6, 0.9]);
        assert_eq!(fit.len(), 6);
        assert!((fit[1] - 0.4).abs() < 1e-12 && (fit[2] - 0.4).abs() < 1e-12);
        assert!((fit[3] - 0.65).abs() < 1e-12);
        assert!(fit.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn monotone_input_is_untouched() {
        let v = [0.0, 0.2, 0.2, 0.9, 1.0];
        assert_eq!(isotonic_non_decreasing(&v), v.to_vec());
    }

    #[test]
    fn uniform_curve_quantiles_and_mean() {
        let z = linspace(0.0, 1.0, 101);
        let curve = CdfCurve::from_raw(z.clone(), &z).unwrap();
        let q = curve.quantile(0.3);
        assert!(!q.extrapolated && (q.value - 0.3).abs() < 1e-5);
        assert!((curve.mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_below_range_is_flagged() {
        let z = linspace(-1.0, 1.0, 11);
        let p: Vec<f64> = z.iter().map(|v| 0.2 + 0.3 * (v + 1.0)).collect();
        let curve = CdfCurve::from_raw(z, &p).unwrap();
        let q = curve.quantile(0.1);
        assert!(q.extrapolated);
        assert_eq!(q.value, -1.0);
        assert!(curve.quantile(0.95).extrapolated);
    }

    #[test]
    fn step_curve_samples_concentrate_at_the_step() {
        let z = linspace(0.0, 10.0, 1001);
        let raw: Vec<f64> = z.iter().map(|v| if *v < 4.0 { 0.0 } else { 1.0 }).collect();
        let curve = CdfCurve::from_raw(z, &raw).unwrap();
        let mut rng = seeded(2);
        for s in curve.sample(500, &mut rng) {
            assert!((s - 4.0).abs() <= 0.011, "{s}");
        }
        assert!((curve.mean() - 4.0).abs() < 0.011);
    }

    proptest! {
        #[test]
        fn projection_is_monotone_and_bounded(raw in proptest::collection::vec(-0.5f64..1.5, 2..60)) {
            let z = linspace(0.0, 1.0, raw.len());
            let c = CdfCurve::from_raw(z, &raw).unwrap();
            prop_assert!(c.probs.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.probs.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(c.probs[0] <= c.probs[c.len() - 1]);
        }

        #[test]
        fn quantile_round_trips_inside_range(q in 0.02f64..0.98) {
            let z = linspace(-4.0, 4.0, 257);
            let raw: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-1.7 * v).exp())).collect();
            let c = CdfCurve::from_raw(z, &raw).unwrap();
            let est = c.quantile(q);
            prop_assert!(!est.extrapolated);
            prop_assert!((c.eval(est.value) - q).abs() < 1e-4);
        }
    }
}
