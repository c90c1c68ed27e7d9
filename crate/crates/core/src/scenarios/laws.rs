//! Univariate outcome laws with closed-form CDFs and exact samplers.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Gumbel, Normal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, gamma_lr};

/// Euler–Mascheroni constant, the mean of a standard Gumbel.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Normal {
        mean: f64,
        sd: f64,
    },
    Logistic {
        location: f64,
        scale: f64,
    },
    Gumbel {
        location: f64,
        scale: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
    /// `shift + Beta(a, b)`.
    ShiftedBeta {
        a: f64,
        b: f64,
        shift: f64,
    },
    /// `shift + Exponential(rate)`.
    ShiftedExp {
        rate: f64,
        shift: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Law>,
    },
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Law {
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Law::Normal { mean, sd } => normal_cdf((y - mean) / sd),
            Law::Logistic { location, scale } => 1.0 / (1.0 + (-(y - location) / scale).exp()),
            Law::Gumbel { location, scale } => (-(-(y - location) / scale).exp()).exp(),
            Law::Gamma { shape, scale } => {
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, y / scale)
                }
            }
            Law::Weibull { scale, shape } => {
                if y <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(y / scale).powf(*shape)).exp()
                }
            }
            Law::ShiftedBeta { a, b, shift } => {
                let u = y - shift;
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    beta_reg(*a, *b, u)
                }
            }
            Law::ShiftedExp { rate, shift } => {
                let u = y - shift;
                if u <= 0.0 {
                    0.0
                } else {
                    -(-rate * u).exp_m1()
                }
            }
            Law::Mixture { weights, components } => weights.iter().zip(components).map(|(w, c)| w * c.cdf(y)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Normal { mean, .. } => *mean,
            Law::Logistic { location, .. } => *location,
            Law::Gumbel { location, scale } => location + EULER_GAMMA * scale,
            Law::Gamma { shape, scale } => shape * scale,
            Law::Weibull { scale, shape } => scale * gamma(1.0 + 1.0 / shape),
            Law::ShiftedBeta { a, b, shift } => shift + a / (a + b),
            Law::ShiftedExp { rate, shift } => shift + 1.0 / rate,
            Law::Mixture { weights, components } => weights.iter().zip(components).map(|(w, c)| w * c.mean()).sum(),
        }
    }

    /// Quantile by bracketing and bisection on the CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, 1.0);
        while self.cdf(lo) > q {
            lo *= 2.0;
        }
        while self.cdf(hi) < q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Normal { mean, sd } => Normal::new(*mean, *sd).expect("normal params").sample(rng),
            Law::Logistic { location, scale } => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                location + scale * (u / (1.0 - u)).ln()
            }
            Law::Gumbel { location, scale } => Gumbel::new(*location, *scale).expect("gumbel params").sample(rng),
            Law::Gamma { shape, scale } => Gamma::new(*shape, *scale).expect("gamma params").sample(rng),
            Law::Weibull { scale, shape } => Weibull::new(*scale, *shape).expect("weibull params").sample(rng),
            Law::ShiftedBeta { a, b, shift } => shift + Beta::new(*a, *b).expect("beta params").sample(rng),
            Law::ShiftedExp { rate, shift } => shift + Exp::new(*rate).expect("exp params").sample(rng),
            Law::Mixture { weights, components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").sample(rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn kolmogorov(law: &Law, n: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let mut s: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, y) in s.iter().enumerate() {
            let f = law.cdf(*y);
            d = d.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
        }
        d
    }

    fn all_laws() -> Vec<Law> {
        vec![
            Law::Normal { mean: 1.0, sd: 2.0 },
            Law::Logistic { location: -1.0, scale: 0.7 },
            Law::Gumbel { location: 0.5, scale: 3.0 },
            Law::Gamma { shape: 2.5, scale: 1.3 },
            Law::Weibull { scale: 2.0, shape: 0.8 },
            Law::ShiftedBeta { a: 0.4, b: 1.7, shift: -0.3 },
            Law::ShiftedExp { rate: 2.0, shift: 1.0 },
            Law::Mixture {
                weights: vec![0.5, 0.5],
                components: vec![Law::Normal { mean: -2.0, sd: 1.0 }, Law::ShiftedExp { rate: 1.0, shift: 0.0 }],
            },
        ]
    }

    #[test]
    fn samplers_match_cdfs() {
        for (k, law) in all_laws().iter().enumerate() {
            let d = kolmogorov(law, 20_000, k as u64);
            assert!(d < 0.02, "{law:?}: {d}");
        }
    }

    #[test]
    fn means_match_monte_carlo() {
        for (k, law) in all_laws().iter().enumerate() {
            let mut rng = seeded(100 + k as u64);
            let n = 200_000;
            let m = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
            assert!((m - law.mean()).abs() < 0.03 * (1.0 + law.mean().abs()), "{law:?}: {m}");
        }
    }

    #[test]
    fn closed_form_identities() {
        let f = normal_cdf(1.959963984540054);
        assert!((f - 0.975).abs() < 1e-11, "{f}");
        let w = Law::Weibull { scale: 3.0, shape: 1.7 };
        assert!((w.cdf(3.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let b = Law::ShiftedBeta { a: 2.0, b: 2.0, shift: 1.0 };
        assert!((b.cdf(1.5) - 0.5).abs() < 1e-12);
        let e = Law::ShiftedExp { rate: 2.0, shift: 0.0 };
        let width = e.quantile(0.95) - e.quantile(0.05);
        assert!((width - (20.0f64.ln() - (20.0f64 / 19.0).ln()) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn cdfs_are_monotone_with_limits() {
        for law in all_laws() {
            let mut prev = 0.0;
            for i in 0..=400 {
                let y = -50.0 + i as f64 * 0.25;
                let f = law.cdf(y);
                assert!(f >= prev - 1e-15 && (0.0..=1.0).contains(&f), "{law:?} at {y}");
                prev = f;
            }
            assert!(law.cdf(-1e4) < 1e-9 && law.cdf(1e4) > 1.0 - 1e-9, "{law:?}");
        }
    }
}
