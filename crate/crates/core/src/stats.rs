//! Regenerative estimation over i.i.d. busy cycles, Wald-identity residuals,
//! bound checks and the hypothesis tests for the loss theorem and lemma.
//!
//! Population quantities (`a`, `b`, `E X_1`, `E Y_1`) always come from the
//! model's analytic means; only cycle quantities are estimated. Bound checks
//! allow a slack of [`SLACK_SE`] standard errors.

use std::fmt;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::engine::{CycleRecord, QueueModel};
use crate::num::{mean_and_se, Real};

/// Standard errors of slack granted to every bound check.
pub const SLACK_SE: f64 = 3.0;

/// Tolerance on `|E X_1 − a·d/b|` for the theorem's mean-balance condition.
pub const MEAN_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 cycle records, got {0}")]
    TooFewRecords(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("lemma precondition failed: {0}")]
    Lemma(LemmaCondition),
    #[error("theorem precondition failed: {0}")]
    Theorem(TheoremCondition),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleField {
    Arrivals,
    Services,
    MassArrived,
    MassServed,
    MassLost,
    Idle,
    Busy,
    Cycle,
}

impl CycleField {
    pub const ALL: [CycleField; 8] = [
        CycleField::Arrivals,
        CycleField::Services,
        CycleField::MassArrived,
        CycleField::MassServed,
        CycleField::MassLost,
        CycleField::Idle,
        CycleField::Busy,
        CycleField::Cycle,
    ];

    pub fn value<T: Real>(self, r: &CycleRecord<T>) -> T {
        match self {
            CycleField::Arrivals => T::from_count(r.n_arrivals),
            CycleField::Services => T::from_count(r.n_services),
            CycleField::MassArrived => r.mass_arrived,
            CycleField::MassServed => r.mass_served,
            CycleField::MassLost => r.mass_lost,
            CycleField::Idle => r.idle_length,
            CycleField::Busy => r.busy_length,
            CycleField::Cycle => r.cycle_length,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CycleField::Arrivals => "N_A",
            CycleField::Services => "N_S",
            CycleField::MassArrived => "M_A",
            CycleField::MassServed => "M_S",
            CycleField::MassLost => "M_L",
            CycleField::Idle => "I",
            CycleField::Busy => "busy",
            CycleField::Cycle => "cycle",
        }
    }
}

/// Point estimate with a two-sided normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub point: T,
    pub ci_lo: T,
    pub ci_hi: T,
    pub std_error: T,
    pub level: f64,
}

impl<T: Real> Estimate<T> {
    pub fn half_width(&self) -> T {
        (self.ci_hi - self.ci_lo) / T::lit(2.0)
    }

    pub fn contains(&self, value: T) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `z` with `P{Z ≤ z} = p`.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidLevel(level))
    }
}

fn check_len<T>(records: &[T]) -> Result<(), StatsError> {
    if records.len() < 2 {
        Err(StatsError::TooFewRecords(records.len()))
    } else {
        Ok(())
    }
}

/// Mean of per-cycle values with a CI at `level`.
pub fn mean_estimate<T: Real>(
    values: impl ExactSizeIterator<Item = T> + Clone,
    level: f64,
) -> Result<Estimate<T>, StatsError> {
    check_level(level)?;
    if values.len() < 2 {
        return Err(StatsError::TooFewRecords(values.len()));
    }
    let (point, std_error) = mean_and_se(values);
    let half = T::lit(normal_quantile((1.0 + level) / 2.0)) * std_error;
    Ok(Estimate {
        point,
        ci_lo: point - half,
        ci_hi: point + half,
        std_error,
        level,
    })
}

/// Sample mean of `field` over the cycles, with CI `mean ± z·s/√k`.
pub fn regenerative_estimate<T: Real>(
    records: &[CycleRecord<T>],
    field: CycleField,
    level: f64,
) -> Result<Estimate<T>, StatsError> {
    mean_estimate(records.iter().map(|r| field.value(r)), level)
}

/// Wald-identity residuals and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldResiduals<T> {
    /// `mean(M_A) − E X_1 · mean(N_A)`.
    pub r1: T,
    pub r1_se: T,
    /// `a · mean(N_A) − b · mean(N_S) − mean(I)`.
    pub r2: T,
    pub r2_se: T,
}

impl<T: Real> WaldResiduals<T> {
    /// Both residuals lie within `k` standard errors of zero.
    pub fn within(&self, k: T) -> bool {
        self.r1.abs() <= k * self.r1_se && self.r2.abs() <= k * self.r2_se
    }
}

/// Each residual is the mean of a per-cycle linear combination, so its
/// standard error is the plain SE of that combination.
pub fn wald_residuals<T: Real>(
    records: &[CycleRecord<T>],
    model: &QueueModel<T>,
) -> Result<WaldResiduals<T>, StatsError> {
    check_len(records)?;
    let ex = model.mean_arrival_batch();
    let a = model.mean_interarrival();
    let b = model.mean_service();
    let (r1, r1_se) = mean_and_se(
        records
            .iter()
            .map(|r| r.mass_arrived - ex * T::from_count(r.n_arrivals)),
    );
    let (r2, r2_se) = mean_and_se(records.iter().map(|r| {
        a * T::from_count(r.n_arrivals) - b * T::from_count(r.n_services) - r.idle_length
    }));
    Ok(WaldResiduals {
        r1,
        r1_se,
        r2,
        r2_se,
    })
}

/// One inequality `gap ≥ 0` checked with a slack of [`SLACK_SE`] SEs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck<T> {
    pub gap: T,
    pub std_error: T,
    /// `gap ≥ −3 SE`.
    pub holds: bool,
    /// `gap > 3 SE`: the inequality is resolved as strict.
    pub strict: bool,
}

impl<T: Real> BoundCheck<T> {
    fn from_values(values: impl ExactSizeIterator<Item = T> + Clone) -> Self {
        let (gap, std_error) = mean_and_se(values);
        let slack = T::lit(SLACK_SE) * std_error;
        BoundCheck {
            gap,
            std_error,
            holds: gap >= -slack,
            strict: gap > slack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundChecks<T> {
    /// `a·E N_A − a ≥ b·E N_S`.
    pub busy_time: BoundCheck<T>,
    /// `E M_S ≤ E N_S · E Y_1`; `strict` is only reported for a nontrivial `Y_1`.
    pub served_mass: BoundCheck<T>,
    /// `E I ≥ a`; `None` unless the interarrival law is NWUE (or exponential).
    pub idle: Option<BoundCheck<T>>,
}

pub fn bound_checks<T: Real>(
    records: &[CycleRecord<T>],
    model: &QueueModel<T>,
) -> Result<BoundChecks<T>, StatsError> {
    check_len(records)?;
    let a = model.mean_interarrival();
    let b = model.mean_service();
    let ey = model.mean_service_batch();
    let busy_time = BoundCheck::from_values(
        records
            .iter()
            .map(|r| a * T::from_count(r.n_arrivals) - a - b * T::from_count(r.n_services)),
    );
    let mut served_mass = BoundCheck::from_values(
        records
            .iter()
            .map(|r| T::from_count(r.n_services) * ey - r.mass_served),
    );
    served_mass.strict &= !model.service_batch.is_point_mass();
    let idle = model
        .interarrival
        .classify_aging()
        .is_nwue()
        .then(|| BoundCheck::from_values(records.iter().map(|r| r.idle_length - a)));
    Ok(BoundChecks {
        busy_time,
        served_mass,
        idle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremVerdict {
    Consistent,
    ViolatedHigh,
    ViolatedLow,
}

impl fmt::Display for TheoremVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TheoremVerdict::Consistent => "consistent",
            TheoremVerdict::ViolatedHigh => "violated-high",
            TheoremVerdict::ViolatedLow => "violated-low",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaVerdict {
    StrictlyGreater,
    Inconclusive,
}

impl fmt::Display for LemmaVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LemmaVerdict::StrictlyGreater => "strictly-greater",
            LemmaVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Whether the CI of `E M_L` at `level` contains `expected`.
pub fn test_theorem_equality<T: Real>(
    records: &[CycleRecord<T>],
    expected: T,
    level: f64,
) -> Result<TheoremVerdict, StatsError> {
    let est = regenerative_estimate(records, CycleField::MassLost, level)?;
    Ok(if est.ci_lo > expected {
        TheoremVerdict::ViolatedHigh
    } else if est.ci_hi < expected {
        TheoremVerdict::ViolatedLow
    } else {
        TheoremVerdict::Consistent
    })
}

/// One-sided test of `E M_L > E X_1` at significance `alpha`.
pub fn test_lemma_inequality<T: Real>(
    records: &[CycleRecord<T>],
    model: &QueueModel<T>,
    alpha: f64,
) -> Result<LemmaVerdict, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    check_lemma_conditions(model).map_err(StatsError::Lemma)?;
    check_len(records)?;
    let expected = model.mean_arrival_batch();
    let (mean, se) = mean_and_se(records.iter().map(|r| r.mass_lost));
    let z = T::lit(normal_quantile(1.0 - alpha));
    Ok(if mean - expected > z * se {
        LemmaVerdict::StrictlyGreater
    } else {
        LemmaVerdict::Inconclusive
    })
}

/// Hypotheses of the equality characterization `E M_L = E X_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremCondition {
    PoissonArrivals,
    DeterministicServiceBatch,
    LatticeArrivalBatch,
    MeanBalance,
}

impl fmt::Display for TheoremCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TheoremCondition::PoissonArrivals => {
                "arrivals must be Poisson (exponential interarrival times)"
            }
            TheoremCondition::DeterministicServiceBatch => "Y_1 must take a single value d",
            TheoremCondition::LatticeArrivalBatch => {
                "X_1 must be lattice with span d (support in d*{1,2,...})"
            }
            TheoremCondition::MeanBalance => "E X_1 must equal a*d/b",
        })
    }
}

/// Checks the equality hypotheses; on success returns the service mass `d`.
pub fn check_theorem_conditions<T: Real>(model: &QueueModel<T>) -> Result<T, TheoremCondition> {
    if model.interarrival.classify_aging() != crate::dists::AgingClass::Both {
        return Err(TheoremCondition::PoissonArrivals);
    }
    if !model.service_batch.is_point_mass() {
        return Err(TheoremCondition::DeterministicServiceBatch);
    }
    let d = model.mean_service_batch();
    if model.arrival_batch.lattice_pmf(d).is_none() {
        return Err(TheoremCondition::LatticeArrivalBatch);
    }
    let balance = model.mean_interarrival() * d / model.mean_service();
    if (model.mean_arrival_batch() - balance).abs() >= T::lit(MEAN_BALANCE_TOL) {
        return Err(TheoremCondition::MeanBalance);
    }
    Ok(d)
}

/// Hypotheses of the strict inequality `E M_L > E X_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaCondition {
    NwueArrivals,
    MassRate,
    ArrivalFits,
    NontrivialServiceBatch,
}

impl fmt::Display for LemmaCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LemmaCondition::NwueArrivals => "the interarrival law must be NWUE",
            LemmaCondition::MassRate => "E X_1 / a must be >= E Y_1 / b",
            LemmaCondition::ArrivalFits => "P{X_1 <= n} must be positive",
            LemmaCondition::NontrivialServiceBatch => {
                "Y_1 must be nontrivial (take at least two values)"
            }
        })
    }
}

pub fn check_lemma_conditions<T: Real>(model: &QueueModel<T>) -> Result<(), LemmaCondition> {
    if !model.interarrival.classify_aging().is_nwue() {
        return Err(LemmaCondition::NwueArrivals);
    }
    let arrival_rate = model.mean_arrival_batch() / model.mean_interarrival();
    let service_rate = model.mean_service_batch() / model.mean_service();
    if arrival_rate < service_rate * (T::one() - T::lit(1e-12)) {
        return Err(LemmaCondition::MassRate);
    }
    if model.arrival_batch.cdf(model.capacity) <= T::zero() {
        return Err(LemmaCondition::ArrivalFits);
    }
    if model.service_batch.is_point_mass() {
        return Err(LemmaCondition::NontrivialServiceBatch);
    }
    Ok(())
}
