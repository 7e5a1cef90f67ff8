//! Exact expected loss per busy cycle for Poisson arrivals, deterministic
//! service time, a deterministic service mass `d` and arrival masses on the
//! lattice `d·{1, 2, …}`.
//!
//! With every mass a multiple of `d` the content is a level in `0..=K`,
//! `K = ⌊n/d⌋`. Conditioning on the Poisson number of arrivals during one
//! service gives the loss and end-level law of that service; the expected
//! loss until the system empties then solves a finite absorbing chain.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{QueueModel, RejectionPolicy};
use crate::num::Real;

/// Default Poisson tail mass dropped when truncating the arrival count.
pub const DEFAULT_POISSON_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("model has no finite lattice chain: {0}")]
    NotLattice(String),
    #[error("invalid lattice model: {0}")]
    Invalid(String),
    #[error("start level {level} outside 1..={levels}")]
    StartLevel { level: usize, levels: usize },
    #[error("singular linear system at pivot {0}")]
    Singular(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeModel<T> {
    /// Poisson arrival rate λ = 1/a.
    pub arrival_rate: T,
    /// Deterministic service time b.
    pub service_time: T,
    /// Service mass d, also the lattice unit of the arrival masses.
    pub span: T,
    /// Capacity in units of d, `K = ⌊n/d⌋`.
    pub levels: usize,
    /// `batch_pmf[j-1] = P{X_1 = j·d}`.
    pub batch_pmf: Vec<T>,
    pub policy: RejectionPolicy,
    pub poisson_truncation: T,
}

fn relative_eq<T: Real>(x: T, y: T) -> bool {
    (x - y).abs() <= T::lit(1e-9) * x.abs().max(y.abs()).max(T::one())
}

impl<T: Real> LatticeModel<T> {
    pub fn new(
        arrival_rate: T,
        service_time: T,
        span: T,
        levels: usize,
        batch_pmf: Vec<T>,
        policy: RejectionPolicy,
    ) -> Result<Self, OracleError> {
        let m = LatticeModel {
            arrival_rate,
            service_time,
            span,
            levels,
            batch_pmf,
            policy,
            poisson_truncation: T::lit(DEFAULT_POISSON_TRUNCATION),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let positive = |name: &str, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(OracleError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("arrival_rate", self.arrival_rate)?;
        positive("service_time", self.service_time)?;
        positive("span", self.span)?;
        positive("poisson_truncation", self.poisson_truncation)?;
        if self
            .batch_pmf
            .iter()
            .any(|p| !(p.is_finite() && *p >= T::zero()))
        {
            return Err(OracleError::Invalid(
                "batch_pmf entries must be nonnegative".into(),
            ));
        }
        let total: T = self.batch_pmf.iter().copied().sum();
        if (total - T::one()).abs() > T::probability_tolerance() {
            return Err(OracleError::Invalid(format!("batch_pmf sums to {total}")));
        }
        if self.arrival_rate * self.service_time > T::lit(700.0) {
            return Err(OracleError::Invalid(
                "arrival_rate * service_time too large for the Poisson weights".into(),
            ));
        }
        Ok(())
    }

    /// Builds the chain description of a simulation model, when one exists.
    ///
    /// Needs exponential interarrivals, deterministic service time, a
    /// deterministic service mass `d` and arrival masses in `d·{1, 2, …}`.
    /// Full rejection works for any capacity; partial rejection only when the
    /// capacity is a multiple of `d`, since clipping would otherwise leave
    /// the lattice.
    pub fn from_queue_model(model: &QueueModel<T>) -> Result<Self, OracleError> {
        use crate::dists::DistributionSpec as D;
        let not = |why: &str| OracleError::NotLattice(why.to_string());
        model
            .validate()
            .map_err(|e| OracleError::Invalid(e.to_string()))?;
        let arrival_rate = match &model.interarrival {
            D::Exponential { rate } => *rate,
            _ => return Err(not("interarrival times must be exponential")),
        };
        let service_time = match &model.service_time {
            D::Deterministic { value } => *value,
            _ => return Err(not("service time must be deterministic")),
        };
        if !model.service_batch.is_point_mass() {
            return Err(not("service mass Y must be deterministic"));
        }
        let span = model.service_batch.mean();
        let batch_pmf = model
            .arrival_batch
            .lattice_pmf(span)
            .ok_or_else(|| not("arrival masses must be positive multiples of the service mass"))?;
        let ratio = model.capacity / span;
        let rounded = ratio.round();
        let levels_real = if relative_eq(ratio, rounded) {
            rounded
        } else {
            ratio.floor()
        };
        if model.policy == RejectionPolicy::PartialRejection && !relative_eq(ratio, rounded) {
            return Err(not(
                "partial rejection needs a capacity that is a multiple of the service mass",
            ));
        }
        let levels = levels_real
            .to_usize()
            .ok_or_else(|| not("capacity in lattice units does not fit in usize"))?;
        Self::new(
            arrival_rate,
            service_time,
            span,
            levels,
            batch_pmf,
            model.policy,
        )
    }

    pub fn with_truncation(mut self, eps: T) -> Self {
        self.poisson_truncation = eps;
        self
    }

    /// `E X_1`.
    pub fn mean_batch_mass(&self) -> T {
        self.span
            * self
                .batch_pmf
                .iter()
                .enumerate()
                .map(|(i, p)| T::from_count(i as u64 + 1) * *p)
                .sum::<T>()
    }

    /// `a·d/b`, the batch mean at which the theorem's equality applies.
    pub fn balance_mean(&self) -> T {
        self.span / (self.arrival_rate * self.service_time)
    }

    /// Level after admitting `units` at `level`, and the units lost.
    fn admit_units(&self, level: usize, units: usize) -> (usize, usize) {
        let free = self.levels.saturating_sub(level);
        match self.policy {
            RejectionPolicy::FullRejection if units <= free => (level + units, 0),
            RejectionPolicy::FullRejection => (level, units),
            RejectionPolicy::PartialRejection => {
                let taken = units.min(free);
                (level + taken, units - taken)
            }
        }
    }
}

/// Truncated, renormalized law of the number of arrivals in one service.
#[derive(Debug, Clone)]
struct PoissonWeights<T> {
    pmf: Vec<T>,
    /// `tail[i] = P{N ≥ i}`.
    tail: Vec<T>,
    truncated: T,
}

impl<T: Real> PoissonWeights<T> {
    fn new(mean: T, eps: T) -> Self {
        let mut p = (-mean).exp();
        let mut pmf = vec![p];
        let mut cum = p;
        let mut k: u64 = 0;
        let limit = 10_000 + (mean.to_f64_lossy() * 20.0) as u64;
        while T::one() - cum >= eps && k < limit {
            k += 1;
            p = p * mean / T::from_count(k);
            pmf.push(p);
            cum = cum + p;
        }
        let truncated = (T::one() - cum).max(T::zero());
        for q in &mut pmf {
            *q = *q / cum;
        }
        let mut tail = vec![T::zero(); pmf.len()];
        let mut acc = T::zero();
        for i in (0..pmf.len()).rev() {
            acc = acc + pmf[i];
            tail[i] = acc;
        }
        PoissonWeights {
            pmf,
            tail,
            truncated,
        }
    }
}

/// Result of one deterministic service interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceOutcome<T> {
    pub expected_lost_mass: T,
    /// Law of the level right after the completion, over `0..=K`.
    pub end_level_distribution: Vec<T>,
    /// Poisson tail mass dropped before renormalizing.
    pub truncated_mass: T,
}

fn service_dp_with<T: Real>(
    start_level: usize,
    model: &LatticeModel<T>,
    weights: &PoissonWeights<T>,
) -> Result<ServiceOutcome<T>, OracleError> {
    let k = model.levels;
    if start_level == 0 || start_level > k {
        return Err(OracleError::StartLevel {
            level: start_level,
            levels: k,
        });
    }
    let mut dist = vec![T::zero(); k + 1];
    dist[start_level] = T::one();
    let mut end = vec![T::zero(); k + 1];
    end[start_level - 1] = weights.pmf[0];
    let mut lost_units = T::zero();
    let mut next = vec![T::zero(); k + 1];
    for i in 1..weights.pmf.len() {
        next.iter_mut().for_each(|x| *x = T::zero());
        let mut step_loss = T::zero();
        for (level, &mass) in dist.iter().enumerate() {
            if mass == T::zero() {
                continue;
            }
            for (j, &pj) in model.batch_pmf.iter().enumerate() {
                if pj == T::zero() {
                    continue;
                }
                let (to, lost) = model.admit_units(level, j + 1);
                let w = mass * pj;
                next[to] = next[to] + w;
                if lost > 0 {
                    step_loss = step_loss + w * T::from_count(lost as u64);
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
        lost_units = lost_units + weights.tail[i] * step_loss;
        for level in 1..=k {
            end[level - 1] = end[level - 1] + weights.pmf[i] * dist[level];
        }
    }
    Ok(ServiceOutcome {
        expected_lost_mass: lost_units * model.span,
        end_level_distribution: end,
        truncated_mass: weights.truncated,
    })
}

/// Expected mass lost during one service that starts at `start_level`
/// (the level includes the unit being served), and the level law at its end.
pub fn service_dp<T: Real>(
    start_level: usize,
    model: &LatticeModel<T>,
) -> Result<ServiceOutcome<T>, OracleError> {
    model.validate()?;
    let weights = PoissonWeights::new(
        model.arrival_rate * model.service_time,
        model.poisson_truncation,
    );
    service_dp_with(start_level, model, &weights)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution<T> {
    /// `E M_L` per busy cycle, initiator losses included.
    pub expected_loss: T,
    /// `v[m]`: expected loss from a service start at level `m` until the
    /// system empties; `v[0] = 0`.
    pub loss_from_level: Vec<T>,
    /// Expected mass lost by the initiating batch itself.
    pub initiator_loss: T,
    pub truncated_mass: T,
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>, OracleError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if a[pivot][col].abs() <= T::epsilon() * T::lit(1e-6) {
            return Err(OracleError::Singular(col));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let (upper, lower) = a.split_at_mut(row);
            let (pivot_row, target) = (&upper[col], &mut lower[0]);
            let factor = target[col] / pivot_row[col];
            if factor == T::zero() {
                continue;
            }
            for (t, p) in target[col..].iter_mut().zip(&pivot_row[col..]) {
                *t = *t - factor * *p;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s: T = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Solves the absorbing chain on levels at service completions.
pub fn solve<T: Real>(model: &LatticeModel<T>) -> Result<OracleSolution<T>, OracleError> {
    model.validate()?;
    let k = model.levels;
    let weights = PoissonWeights::new(
        model.arrival_rate * model.service_time,
        model.poisson_truncation,
    );
    // Unknowns v[1..=K]: v(m) = L(m) + Σ_{m'≥1} P(m→m') v(m').
    let mut a = vec![vec![T::zero(); k]; k];
    let mut rhs = vec![T::zero(); k];
    for m in 1..=k {
        let out = service_dp_with(m, model, &weights)?;
        rhs[m - 1] = out.expected_lost_mass;
        a[m - 1][m - 1] = T::one();
        for to in 1..=k {
            a[m - 1][to - 1] = a[m - 1][to - 1] - out.end_level_distribution[to];
        }
    }
    let v = solve_dense(a, rhs)?;
    let mut loss_from_level = vec![T::zero()];
    loss_from_level.extend(v);

    let mut expected_loss = T::zero();
    let mut initiator_loss = T::zero();
    for (j, &pj) in model.batch_pmf.iter().enumerate() {
        if pj == T::zero() {
            continue;
        }
        let (level, lost) = model.admit_units(0, j + 1);
        let lost_mass = T::from_count(lost as u64) * model.span;
        initiator_loss = initiator_loss + pj * lost_mass;
        expected_loss = expected_loss + pj * (lost_mass + loss_from_level[level]);
    }
    Ok(OracleSolution {
        expected_loss,
        loss_from_level,
        initiator_loss,
        truncated_mass: weights.truncated,
    })
}

/// `E M_L` per busy cycle.
pub fn exact_expected_loss_per_cycle<T: Real>(model: &LatticeModel<T>) -> Result<T, OracleError> {
    Ok(solve(model)?.expected_loss)
}
