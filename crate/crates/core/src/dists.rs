//! Positive-valued distributions for interarrival times, service times and
//! batch masses.
//!
//! Every family carries an analytic mean, a survival function and a mean
//! residual life `E{ξ − x | ξ > x}`. The aging class (NBUE / NWUE) is
//! assigned analytically per family; [`empirical_mrl_check`] validates a
//! classification against raw samples.
//!
//! | Family | Parameters | Mean | Aging |
//! |---|---|---|---|
//! | `exponential` | rate | 1/rate | both |
//! | `deterministic` | value | value | NBUE |
//! | `erlang` | shape k, rate | k/rate | NBUE (k ≥ 2) |
//! | `hyperexp` | weights, rates | Σ wᵢ/rateᵢ | NWUE (≥ 2 distinct rates) |
//! | `uniform` | lo, hi | (lo+hi)/2 | NBUE |
//! | `lattice` | span, multipliers, probs | span·Σ kᵢpᵢ | unknown unless a point mass |

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{mean_and_se, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("x = {x} lies beyond the support (survival probability is zero)")]
    OutsideSupport { x: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

impl DistError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        DistError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Prefixes the offending field with its location in a larger document.
    pub fn within(self, path: &str) -> Self {
        match self {
            DistError::InvalidParameter { field, reason } => DistError::InvalidParameter {
                field: format!("{path}.{field}"),
                reason,
            },
            other => other,
        }
    }
}

/// Parametric descriptor of a positive random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec<T> {
    Exponential {
        rate: T,
    },
    Deterministic {
        value: T,
    },
    Erlang {
        shape: u32,
        rate: T,
    },
    #[serde(rename = "hyperexp")]
    HyperExponential {
        weights: Vec<T>,
        rates: Vec<T>,
    },
    Uniform {
        lo: T,
        hi: T,
    },
    /// Support `{k·span : k in multipliers}`.
    #[serde(rename = "lattice")]
    LatticeDiscrete {
        span: T,
        multipliers: Vec<u64>,
        probs: Vec<T>,
    },
}

/// Aging class of a distribution in the mean-residual-life sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgingClass {
    /// New better than used in expectation: `mrl(x) ≤ mean` for all x.
    Nbue,
    /// New worse than used in expectation: `mrl(x) ≥ mean` for all x.
    Nwue,
    /// Both inequalities hold with equality (memoryless).
    Both,
    Unknown,
}

impl AgingClass {
    pub fn is_nwue(self) -> bool {
        matches!(self, AgingClass::Nwue | AgingClass::Both)
    }

    pub fn is_nbue(self) -> bool {
        matches!(self, AgingClass::Nbue | AgingClass::Both)
    }
}

impl fmt::Display for AgingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgingClass::Nbue => "NBUE",
            AgingClass::Nwue => "NWUE",
            AgingClass::Both => "NBUE+NWUE",
            AgingClass::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn check_positive<T: Real>(field: &str, v: T) -> Result<(), DistError> {
    if !(v.is_finite() && v > T::zero()) {
        return Err(DistError::invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ));
    }
    Ok(())
}

fn check_probability_vector<T: Real>(field: &str, probs: &[T]) -> Result<(), DistError> {
    if probs.is_empty() {
        return Err(DistError::invalid(field, "must not be empty"));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= T::zero())) {
        return Err(DistError::invalid(
            field,
            format!("entries must be nonnegative, got {p}"),
        ));
    }
    let total: T = probs.iter().copied().sum();
    if (total - T::one()).abs() > T::probability_tolerance() {
        return Err(DistError::invalid(
            field,
            format!("must sum to 1, sums to {total}"),
        ));
    }
    Ok(())
}

impl<T: Real> DistributionSpec<T> {
    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Exponential { .. } => "exponential",
            DistributionSpec::Deterministic { .. } => "deterministic",
            DistributionSpec::Erlang { .. } => "erlang",
            DistributionSpec::HyperExponential { .. } => "hyperexp",
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::LatticeDiscrete { .. } => "lattice",
        }
    }

    /// Checks every parameter constraint of the family.
    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            DistributionSpec::Exponential { rate } => check_positive("rate", *rate),
            DistributionSpec::Deterministic { value } => check_positive("value", *value),
            DistributionSpec::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(DistError::invalid("shape", "must be a positive integer"));
                }
                check_positive("rate", *rate)
            }
            DistributionSpec::HyperExponential { weights, rates } => {
                check_probability_vector("weights", weights)?;
                if rates.len() != weights.len() {
                    return Err(DistError::invalid(
                        "rates",
                        format!(
                            "length {} differs from weights length {}",
                            rates.len(),
                            weights.len()
                        ),
                    ));
                }
                rates.iter().try_for_each(|r| check_positive("rates", *r))
            }
            DistributionSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && *lo >= T::zero()) {
                    return Err(DistError::invalid(
                        "lo",
                        format!("must be nonnegative, got {lo}"),
                    ));
                }
                if !(hi.is_finite() && *hi > *lo) {
                    return Err(DistError::invalid(
                        "hi",
                        format!("must exceed lo = {lo}, got {hi}"),
                    ));
                }
                Ok(())
            }
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => {
                check_positive("span", *span)?;
                check_probability_vector("probs", probs)?;
                if multipliers.len() != probs.len() {
                    return Err(DistError::invalid(
                        "multipliers",
                        format!(
                            "length {} differs from probs length {}",
                            multipliers.len(),
                            probs.len()
                        ),
                    ));
                }
                if multipliers.contains(&0) {
                    return Err(DistError::invalid(
                        "multipliers",
                        "must be positive integers",
                    ));
                }
                let g = multipliers.iter().fold(0, |g, &k| gcd(g, k));
                if g != 1 {
                    return Err(DistError::invalid(
                        "multipliers",
                        format!("greatest common divisor is {g}; fold it into span"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Folds a common divisor of lattice multipliers into the span, so the
    /// stored span is the true span. Returns a warning when anything changed.
    pub fn normalized(self) -> (Self, Option<String>) {
        match self {
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => {
                let g = multipliers.iter().fold(0, |g, &k| gcd(g, k));
                if g <= 1 {
                    return (
                        DistributionSpec::LatticeDiscrete {
                            span,
                            multipliers,
                            probs,
                        },
                        None,
                    );
                }
                let new_span = span * T::from_count(g);
                let new_mult: Vec<u64> = multipliers.iter().map(|k| k / g).collect();
                let warning = format!(
                    "lattice multipliers {multipliers:?} share divisor {g}; normalized to span {new_span}, multipliers {new_mult:?}"
                );
                (
                    DistributionSpec::LatticeDiscrete {
                        span: new_span,
                        multipliers: new_mult,
                        probs,
                    },
                    Some(warning),
                )
            }
            other => (other, None),
        }
    }

    /// Exact first moment.
    pub fn mean(&self) -> T {
        match self {
            DistributionSpec::Exponential { rate } => T::one() / *rate,
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Erlang { shape, rate } => T::from_count(u64::from(*shape)) / *rate,
            DistributionSpec::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| *w / *r).sum()
            }
            DistributionSpec::Uniform { lo, hi } => (*lo + *hi) / T::lit(2.0),
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => {
                *span
                    * multipliers
                        .iter()
                        .zip(probs)
                        .map(|(k, p)| T::from_count(*k) * *p)
                        .sum::<T>()
            }
        }
    }

    /// `P{ξ > x}`.
    pub fn survival(&self, x: T) -> T {
        if x < T::zero() {
            return T::one();
        }
        match self {
            DistributionSpec::Exponential { rate } => (-*rate * x).exp(),
            DistributionSpec::Deterministic { value } => {
                if x < *value {
                    T::one()
                } else {
                    T::zero()
                }
            }
            DistributionSpec::Erlang { shape, rate } => {
                let rx = *rate * x;
                let mut term = T::one();
                let mut acc = T::one();
                for j in 1..*shape {
                    term = term * rx / T::from_count(u64::from(j));
                    acc = acc + term;
                }
                (-rx).exp() * acc
            }
            DistributionSpec::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| *w * (-*r * x).exp())
                .sum(),
            DistributionSpec::Uniform { lo, hi } => {
                if x < *lo {
                    T::one()
                } else if x >= *hi {
                    T::zero()
                } else {
                    (*hi - x) / (*hi - *lo)
                }
            }
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => multipliers
                .iter()
                .zip(probs)
                .filter(|(k, _)| *span * T::from_count(**k) > x)
                .map(|(_, p)| *p)
                .sum(),
        }
    }

    /// `P{ξ ≤ x}`.
    pub fn cdf(&self, x: T) -> T {
        T::one() - self.survival(x)
    }

    /// True when the variable takes a single value with probability one.
    pub fn is_point_mass(&self) -> bool {
        match self {
            DistributionSpec::Deterministic { .. } => true,
            DistributionSpec::LatticeDiscrete { probs, .. } => {
                probs.iter().filter(|p| **p > T::zero()).count() == 1
            }
            _ => false,
        }
    }

    /// Mean residual life `E{ξ − x | ξ > x}`.
    ///
    /// Closed form for every family except Erlang, which integrates the
    /// survival function numerically.
    pub fn mean_residual_life(&self, x: T) -> Result<T, DistError> {
        let outside = || DistError::OutsideSupport {
            x: x.to_f64_lossy(),
        };
        if x < T::zero() {
            return Err(DistError::invalid("x", "must be nonnegative"));
        }
        match self {
            DistributionSpec::Exponential { rate } => Ok(T::one() / *rate),
            DistributionSpec::Deterministic { value } => {
                if x < *value {
                    Ok(*value - x)
                } else {
                    Err(outside())
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if x < *lo {
                    Ok(self.mean() - x)
                } else if x < *hi {
                    Ok((*hi - x) / T::lit(2.0))
                } else {
                    Err(outside())
                }
            }
            DistributionSpec::HyperExponential { weights, rates } => {
                // Scale every term by exp(r_min x) so large x does not underflow.
                let r_min = rates
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > T::zero())
                    .map(|(r, _)| *r)
                    .fold(T::infinity(), T::min);
                let mut num = T::zero();
                let mut den = T::zero();
                for (w, r) in weights.iter().zip(rates) {
                    if *w > T::zero() {
                        let scaled = *w * (-(*r - r_min) * x).exp();
                        num = num + scaled / *r;
                        den = den + scaled;
                    }
                }
                Ok(num / den)
            }
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => {
                let mut num = T::zero();
                let mut den = T::zero();
                for (k, p) in multipliers.iter().zip(probs) {
                    let s = *span * T::from_count(*k);
                    if s > x {
                        num = num + *p * (s - x);
                        den = den + *p;
                    }
                }
                if den > T::zero() {
                    Ok(num / den)
                } else {
                    Err(outside())
                }
            }
            DistributionSpec::Erlang { .. } => self.mean_residual_life_numeric(x),
        }
    }

    /// `(∫ₓ^∞ S(u) du) / S(x)` by adaptive Simpson quadrature, truncating the
    /// tail once the survival drops below 1e-14.
    pub fn mean_residual_life_numeric(&self, x: T) -> Result<T, DistError> {
        let sx = self.survival(x);
        if sx <= T::zero() {
            return Err(DistError::OutsideSupport {
                x: x.to_f64_lossy(),
            });
        }
        let cutoff = T::lit(1e-14).max(T::epsilon());
        let step = self.mean();
        let tol = (T::lit(1e-11) * sx).max(T::min_positive_value());
        let mut integral = T::zero();
        let mut lo = x;
        // At most 10^4 mean-length panels; survival of a finite-mean law is
        // far below the cutoff long before that.
        for _ in 0..10_000 {
            let hi = lo + step;
            integral = integral + adaptive_simpson(&|u| self.survival(u), lo, hi, tol, 48);
            lo = hi;
            if self.survival(lo) < cutoff * sx {
                break;
            }
        }
        Ok(integral / sx)
    }

    /// Analytic aging class of the family.
    pub fn classify_aging(&self) -> AgingClass {
        match self {
            DistributionSpec::Exponential { .. } => AgingClass::Both,
            DistributionSpec::Deterministic { .. } | DistributionSpec::Uniform { .. } => {
                AgingClass::Nbue
            }
            DistributionSpec::Erlang { shape, .. } => {
                if *shape == 1 {
                    AgingClass::Both
                } else {
                    AgingClass::Nbue
                }
            }
            DistributionSpec::HyperExponential { weights, rates } => {
                let mut active = rates
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > T::zero())
                    .map(|(r, _)| *r);
                let first = active.next();
                match first {
                    Some(r0) if active.any(|r| r != r0) => AgingClass::Nwue,
                    _ => AgingClass::Both,
                }
            }
            DistributionSpec::LatticeDiscrete { .. } => {
                if self.is_point_mass() {
                    AgingClass::Nbue
                } else {
                    AgingClass::Unknown
                }
            }
        }
    }

    /// When every support point is a positive integer multiple of `unit`,
    /// returns the pmf over multiples `1..=J` (index 0 holds multiple 1).
    pub fn lattice_pmf(&self, unit: T) -> Option<Vec<T>> {
        let points: Vec<(T, T)> = match self {
            DistributionSpec::Deterministic { value } => vec![(*value, T::one())],
            DistributionSpec::LatticeDiscrete {
                span,
                multipliers,
                probs,
            } => multipliers
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > T::zero())
                .map(|(k, p)| (*span * T::from_count(*k), *p))
                .collect(),
            _ => return None,
        };
        let tol = T::lit(1e-9);
        let mut pmf: Vec<T> = Vec::new();
        for (point, p) in points {
            let ratio = point / unit;
            let k = ratio.round();
            if k < T::one() || (ratio - k).abs() > tol * ratio.max(T::one()) {
                return None;
            }
            let k = k.to_usize()?;
            if pmf.len() < k {
                pmf.resize(k, T::zero());
            }
            pmf[k - 1] = pmf[k - 1] + p;
        }
        Some(pmf)
    }
}

fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T, depth: u32) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / two;
    let fm = f(m);
    let whole = (b - a) * (fa + T::lit(4.0) * fm + fb) / six;
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) * (fa + four * flm + fm) / six;
    let right = (b - m) * (fm + four * frm + fb) / six;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

/// Validated distribution ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler<T> {
    spec: DistributionSpec<T>,
    cumulative: Vec<T>,
}

impl<T: Real> Sampler<T> {
    pub fn new(spec: DistributionSpec<T>) -> Result<Self, DistError> {
        spec.validate()?;
        let cumulative = match &spec {
            DistributionSpec::HyperExponential { weights: p, .. }
            | DistributionSpec::LatticeDiscrete { probs: p, .. } => p
                .iter()
                .scan(T::zero(), |acc, w| {
                    *acc = *acc + *w;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(Sampler { spec, cumulative })
    }

    pub fn spec(&self) -> &DistributionSpec<T> {
        &self.spec
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::sample_open01(rng);
        self.cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    fn positive_exp1<R: Rng + ?Sized>(rng: &mut R) -> T {
        loop {
            let e = T::sample_exp1(rng);
            if e > T::zero() {
                return e;
            }
        }
    }

    /// One strictly positive draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match &self.spec {
            DistributionSpec::Exponential { rate } => Self::positive_exp1(rng) / *rate,
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Erlang { shape, rate } => {
                (0..*shape).map(|_| Self::positive_exp1(rng)).sum::<T>() / *rate
            }
            DistributionSpec::HyperExponential { rates, .. } => {
                let i = self.pick(rng);
                Self::positive_exp1(rng) / rates[i]
            }
            DistributionSpec::Uniform { lo, hi } => *lo + (*hi - *lo) * T::sample_open01(rng),
            DistributionSpec::LatticeDiscrete {
                span, multipliers, ..
            } => {
                let i = self.pick(rng);
                *span * T::from_count(multipliers[i])
            }
        }
    }
}

/// Validates `spec` and draws one value.
pub fn sample<T: Real, R: Rng + ?Sized>(
    spec: &DistributionSpec<T>,
    rng: &mut R,
) -> Result<T, DistError> {
    Ok(Sampler::new(spec.clone())?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStatus {
    Conclusive,
    /// Fewer than the required number of samples exceed the grid point.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrlPoint<T> {
    pub x: T,
    pub mrl: T,
    pub std_error: T,
    pub exceedances: usize,
    pub status: GridStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrlReport<T> {
    pub points: Vec<MrlPoint<T>>,
    pub sample_mean: T,
    pub sample_mean_se: T,
    /// Every conclusive point satisfies `mrl̂(x) ≤ mean + 2 SE`.
    pub nbue_consistent: bool,
    /// Every conclusive point satisfies `mrl̂(x) ≥ mean − 2 SE`.
    pub nwue_consistent: bool,
}

impl<T: Real> MrlReport<T> {
    pub fn consistent_with(&self, class: AgingClass) -> bool {
        match class {
            AgingClass::Nbue => self.nbue_consistent,
            AgingClass::Nwue => self.nwue_consistent,
            AgingClass::Both => self.nbue_consistent && self.nwue_consistent,
            AgingClass::Unknown => true,
        }
    }
}

pub const MRL_MIN_SAMPLES: usize = 10_000;
pub const MRL_MIN_EXCEEDANCES: usize = 100;

/// Empirical mean residual life on a grid, with NBUE/NWUE consistency flags.
pub fn empirical_mrl_check<T: Real>(samples: &[T], grid: &[T]) -> Result<MrlReport<T>, DistError> {
    if samples.len() < MRL_MIN_SAMPLES {
        return Err(DistError::InsufficientSamples {
            needed: MRL_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let (sample_mean, sample_mean_se) = mean_and_se(samples.iter().copied());
    let two = T::lit(2.0);
    let mut nbue_consistent = true;
    let mut nwue_consistent = true;
    let mut points = Vec::with_capacity(grid.len());
    for &x in grid {
        let excess: Vec<T> = samples.iter().filter(|s| **s > x).map(|s| *s - x).collect();
        let (mrl, std_error) = mean_and_se(excess.iter().copied());
        let status = if excess.len() >= MRL_MIN_EXCEEDANCES {
            GridStatus::Conclusive
        } else {
            GridStatus::Inconclusive
        };
        if status == GridStatus::Conclusive {
            let slack = two * (std_error * std_error + sample_mean_se * sample_mean_se).sqrt();
            nbue_consistent &= mrl <= sample_mean + slack;
            nwue_consistent &= mrl >= sample_mean - slack;
        }
        points.push(MrlPoint {
            x,
            mrl,
            std_error,
            exceedances: excess.len(),
            status,
        });
    }
    Ok(MrlReport {
        points,
        sample_mean,
        sample_mean_se,
        nbue_consistent,
        nwue_consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn hyper(w: &[f64], r: &[f64]) -> DistributionSpec<f64> {
        DistributionSpec::HyperExponential {
            weights: w.to_vec(),
            rates: r.to_vec(),
        }
    }

    fn lattice_13() -> DistributionSpec<f64> {
        DistributionSpec::LatticeDiscrete {
            span: 1.0,
            multipliers: vec![1, 3],
            probs: vec![0.5, 0.5],
        }
    }

    #[test]
    fn deterministic_sample_is_constant() {
        let mut rng = stream(1, 0);
        let s = Sampler::new(DistributionSpec::Deterministic { value: 2.0 }).unwrap();
        assert!((0..100).all(|_| s.sample(&mut rng) == 2.0));
    }

    #[test]
    fn lattice_draws_stay_on_support_with_right_frequency() {
        let mut rng = stream(2, 0);
        let s = Sampler::new(lattice_13()).unwrap();
        let n = 100_000;
        let mut ones = 0usize;
        for _ in 0..n {
            let v = s.sample(&mut rng);
            assert!(v == 1.0 || v == 3.0);
            ones += usize::from(v == 1.0);
        }
        let freq = ones as f64 / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = stream(3, 0);
        let s = Sampler::new(DistributionSpec::Exponential { rate: 2.0 }).unwrap();
        let draws: Vec<f64> = (0..1_000_000).map(|_| s.sample(&mut rng)).collect();
        let (m, se) = mean_and_se(draws.iter().copied());
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn analytic_means() {
        assert_eq!(
            DistributionSpec::Erlang {
                shape: 2,
                rate: 4.0
            }
            .mean(),
            0.5
        );
        assert_eq!(hyper(&[0.5, 0.5], &[0.5, 2.0]).mean(), 1.25);
        assert_eq!(lattice_13().mean(), 2.0);
    }

    #[test]
    fn mrl_closed_forms() {
        let e = DistributionSpec::Exponential { rate: 1.0f64 };
        assert!((e.mean_residual_life(7.3).unwrap() - 1.0).abs() < 1e-15);
        let d = DistributionSpec::Deterministic { value: 5.0 };
        assert_eq!(d.mean_residual_life(2.0).unwrap(), 3.0);
        assert!(matches!(
            d.mean_residual_life(5.0),
            Err(DistError::OutsideSupport { .. })
        ));
        let u = DistributionSpec::Uniform { lo: 1.0, hi: 3.0 };
        assert_eq!(u.mean_residual_life(0.5).unwrap(), 1.5);
        assert_eq!(u.mean_residual_life(2.0).unwrap(), 0.5);
        assert!(u.mean_residual_life(3.0).is_err());
    }

    #[test]
    fn hyperexponential_mrl_rises_toward_slowest_phase_mean() {
        let h = hyper(&[0.5, 0.5], &[0.5, 2.0]);
        let at10 = h.mean_residual_life(10.0).unwrap();
        assert!(at10 > 1.25 && at10 <= 2.0, "{at10}");
        let quad = h.mean_residual_life_numeric(10.0).unwrap();
        assert!((at10 - quad).abs() < 1e-9, "{at10} vs {quad}");
        let mut prev = h.mean_residual_life(0.0).unwrap();
        for x in [1.0, 2.0, 5.0, 10.0, 50.0, 500.0] {
            let v = h.mean_residual_life(x).unwrap();
            assert!(v >= prev && v <= 2.0);
            prev = v;
        }
        assert!((prev - 2.0).abs() < 1e-12);
    }

    #[test]
    fn erlang_numeric_mrl_matches_closed_form() {
        // ∫ₓ^∞ S = e^{-rx}/r · Σ_{j<k} (k−j)(rx)^j/j!
        fn closed(k: u32, r: f64, x: f64) -> f64 {
            let rx = r * x;
            let (mut num, mut den, mut term) = (0.0, 0.0, 1.0);
            for j in 0..k {
                if j > 0 {
                    term *= rx / j as f64;
                }
                num += (k - j) as f64 * term;
                den += term;
            }
            num / (r * den)
        }
        for (k, r) in [(2u32, 4.0), (3, 1.0), (5, 0.5)] {
            let spec = DistributionSpec::Erlang { shape: k, rate: r };
            for x in [0.0, 0.3, 1.0, 4.0, 12.0] {
                let got = spec.mean_residual_life(x).unwrap();
                let want = closed(k, r, x);
                assert!(
                    (got - want).abs() < 1e-9,
                    "k={k} r={r} x={x}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn classification_per_family() {
        assert_eq!(
            DistributionSpec::Exponential { rate: 3.0 }.classify_aging(),
            AgingClass::Both
        );
        assert_eq!(
            DistributionSpec::Deterministic { value: 1.0 }.classify_aging(),
            AgingClass::Nbue
        );
        assert_eq!(
            hyper(&[0.9, 0.1], &[2.0, 0.25]).classify_aging(),
            AgingClass::Nwue
        );
        assert_eq!(
            hyper(&[0.3, 0.7], &[2.0, 2.0]).classify_aging(),
            AgingClass::Both
        );
        assert_eq!(lattice_13().classify_aging(), AgingClass::Unknown);
        assert_eq!(
            DistributionSpec::Erlang {
                shape: 1,
                rate: 2.0
            }
            .classify_aging(),
            AgingClass::Both
        );
    }

    #[test]
    fn nwue_hyperexponential_on_grid() {
        let h = hyper(&[0.9, 0.1], &[2.0, 0.25]);
        let mean = h.mean();
        for i in 0..=200 {
            let x = i as f64 * 0.1;
            assert!(h.mean_residual_life(x).unwrap() >= mean - 1e-12, "x={x}");
        }
    }

    #[test]
    fn validation_names_the_field() {
        let err = DistributionSpec::Exponential { rate: -1.0 }
            .validate()
            .unwrap_err();
        assert!(err.to_string().starts_with("rate"));
        let err = hyper(&[0.5, 0.6], &[1.0, 2.0]).validate().unwrap_err();
        assert!(err.to_string().starts_with("weights"));
        let err = DistributionSpec::Uniform { lo: 2.0, hi: 1.0 }
            .validate()
            .unwrap_err();
        assert!(err.to_string().starts_with("hi"));
        let err = DistributionSpec::LatticeDiscrete {
            span: 1.0,
            multipliers: vec![2, 4],
            probs: vec![0.5, 0.5],
        }
        .validate()
        .unwrap_err();
        assert!(err.to_string().contains("divisor is 2"));
        assert_eq!(
            err.clone()
                .within("model.arrival_batch")
                .to_string()
                .split(':')
                .next(),
            Some("model.arrival_batch.multipliers")
        );
        assert!(sample(
            &DistributionSpec::Erlang {
                shape: 0,
                rate: 1.0
            },
            &mut stream(0, 0)
        )
        .is_err());
    }

    #[test]
    fn lattice_normalization_folds_gcd_into_span() {
        let (spec, warning) = DistributionSpec::LatticeDiscrete {
            span: 0.5,
            multipliers: vec![2, 4],
            probs: vec![0.5, 0.5],
        }
        .normalized();
        assert!(warning.is_some());
        assert_eq!(
            spec,
            DistributionSpec::LatticeDiscrete {
                span: 1.0,
                multipliers: vec![1, 2],
                probs: vec![0.5, 0.5]
            }
        );
        assert!(lattice_13().normalized().1.is_none());
    }

    #[test]
    fn lattice_pmf_in_units() {
        assert_eq!(lattice_13().lattice_pmf(1.0), Some(vec![0.5, 0.0, 0.5]));
        assert_eq!(
            DistributionSpec::Deterministic { value: 2.0 }.lattice_pmf(1.0),
            Some(vec![0.0, 1.0])
        );
        assert_eq!(lattice_13().lattice_pmf(2.0), None);
        assert_eq!(
            DistributionSpec::Exponential { rate: 1.0 }.lattice_pmf(1.0),
            None
        );
    }

    #[test]
    fn empirical_mrl_exponential_and_deterministic() {
        let mut rng = stream(11, 0);
        let e = Sampler::new(DistributionSpec::Exponential { rate: 1.0 }).unwrap();
        let draws: Vec<f64> = (0..1_000_000).map(|_| e.sample(&mut rng)).collect();
        let rep = empirical_mrl_check(&draws, &[0.0, 1.0, 2.0]).unwrap();
        for p in &rep.points {
            assert!((p.mrl - 1.0).abs() < 2.0 * p.std_error, "{p:?}");
        }
        let det = vec![5.0f64; 1_000_000];
        let rep = empirical_mrl_check(&det, &[0.0, 2.0]).unwrap();
        assert_eq!(rep.points[0].mrl, 5.0);
        assert_eq!(rep.points[1].mrl, 3.0);
        assert!(rep.nbue_consistent);
    }

    #[test]
    fn empirical_mrl_flags_inconclusive_and_short_input() {
        let draws: Vec<f64> = (0..20_000).map(|i| 1.0 + (i % 10) as f64).collect();
        let rep = empirical_mrl_check(&draws, &[9.5, 100.0]).unwrap();
        assert_eq!(rep.points[0].status, GridStatus::Conclusive);
        assert_eq!(rep.points[1].status, GridStatus::Inconclusive);
        assert!(matches!(
            empirical_mrl_check(&draws[..10], &[0.0]),
            Err(DistError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let spec: DistributionSpec<f32> = DistributionSpec::HyperExponential {
            weights: vec![0.5, 0.5],
            rates: vec![0.5, 2.0],
        };
        assert!((spec.mean() - 1.25).abs() < 1e-6);
        let s = Sampler::new(spec).unwrap();
        let mut rng = stream(5, 0);
        assert!((0..1000).all(|_| s.sample(&mut rng) > 0.0));
    }

    #[test]
    fn serde_uses_family_tag() {
        let spec: DistributionSpec<f64> =
            serde_json::from_str(r#"{"family":"hyperexp","weights":[0.5,0.5],"rates":[0.5,2]}"#)
                .unwrap();
        assert_eq!(spec, hyper(&[0.5, 0.5], &[0.5, 2.0]));
        let bad = serde_json::from_str::<DistributionSpec<f64>>(
            r#"{"family":"exponential","rate":1,"extra":2}"#,
        );
        assert!(bad.is_err());
    }
}
