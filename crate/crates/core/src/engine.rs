//! Discrete-event simulation of the single-server loss queue with real-valued
//! batch arrivals and batch services.
//!
//! The system holds a single mass ledger `total_mass`, which includes the
//! mass committed to the service in progress. A service that starts with
//! workload `m` commits `min(Y, m)` and removes it at completion; mass that
//! arrives mid-service waits for the next service. Capacity bounds the whole
//! ledger. Every arrival that finds the system empty is a regeneration epoch,
//! so simulation proceeds one busy cycle at a time.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{DistError, DistributionSpec, Sampler};
use crate::num::Real;
use crate::rng::stream;

/// Default per-cycle event budget before a cycle is declared runaway.
pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;

/// Cycles simulated from one random stream; stream `b` produces cycles
/// `b·CYCLES_PER_STREAM ..`.
pub const CYCLES_PER_STREAM: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid model: {0}")]
    InvalidModel(#[from] DistError),
    #[error("runaway cycle: more than {events} events without the system emptying{}", stream_suffix(*.stream))]
    RunawayCycle { events: u64, stream: Option<u64> },
    #[error("num_cycles must be at least 1")]
    NoCycles,
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

fn stream_suffix(stream: Option<u64>) -> String {
    stream.map(|s| format!(" (stream {s})")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionPolicy {
    /// A batch that does not fit entirely is lost entirely.
    #[serde(rename = "full")]
    FullRejection,
    /// A batch is clipped to the free space; the overflow is lost.
    #[serde(rename = "partial")]
    PartialRejection,
}

impl fmt::Display for RejectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectionPolicy::FullRejection => "full",
            RejectionPolicy::PartialRejection => "partial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admission<T> {
    pub accepted: T,
    pub lost: T,
}

/// Rounding allowance on capacity comparisons, so lattice masses such as
/// `0.1 + 0.2` still fit a capacity of `0.3`.
fn capacity_slack<T: Real>(capacity: T) -> T {
    capacity * T::epsilon() * T::lit(64.0)
}

/// Splits an arriving batch into accepted and lost mass.
pub fn admit<T: Real>(
    total_mass: T,
    batch: T,
    capacity: T,
    policy: RejectionPolicy,
) -> Admission<T> {
    match policy {
        RejectionPolicy::FullRejection => {
            if total_mass + batch <= capacity + capacity_slack(capacity) {
                Admission {
                    accepted: batch,
                    lost: T::zero(),
                }
            } else {
                Admission {
                    accepted: T::zero(),
                    lost: batch,
                }
            }
        }
        RejectionPolicy::PartialRejection => {
            let free = (capacity - total_mass).max(T::zero());
            let accepted = batch.min(free);
            Admission {
                accepted,
                lost: batch - accepted,
            }
        }
    }
}

/// Full system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueModel<T> {
    /// Interarrival law A, mean `a`.
    pub interarrival: DistributionSpec<T>,
    /// Service time law B, mean `b`.
    pub service_time: DistributionSpec<T>,
    /// Law of the arriving mass X.
    pub arrival_batch: DistributionSpec<T>,
    /// Law of the service mass Y.
    pub service_batch: DistributionSpec<T>,
    pub capacity: T,
    pub policy: RejectionPolicy,
}

impl<T: Real> QueueModel<T> {
    pub fn validate(&self) -> Result<(), DistError> {
        self.interarrival
            .validate()
            .map_err(|e| e.within("interarrival"))?;
        self.service_time
            .validate()
            .map_err(|e| e.within("service_time"))?;
        self.arrival_batch
            .validate()
            .map_err(|e| e.within("arrival_batch"))?;
        self.service_batch
            .validate()
            .map_err(|e| e.within("service_batch"))?;
        if !(self.capacity.is_finite() && self.capacity > T::zero()) {
            return Err(DistError::InvalidParameter {
                field: "capacity".into(),
                reason: format!("must be positive and finite, got {}", self.capacity),
            });
        }
        Ok(())
    }

    /// Mean interarrival time `a`.
    pub fn mean_interarrival(&self) -> T {
        self.interarrival.mean()
    }

    /// Mean service time `b`.
    pub fn mean_service(&self) -> T {
        self.service_time.mean()
    }

    pub fn mean_arrival_batch(&self) -> T {
        self.arrival_batch.mean()
    }

    pub fn mean_service_batch(&self) -> T {
        self.service_batch.mean()
    }

    pub fn with_capacity(&self, capacity: T) -> Self {
        QueueModel {
            capacity,
            ..self.clone()
        }
    }
}

/// Snapshot of the server between events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState<T> {
    pub clock: T,
    /// Waiting mass plus the mass committed to the current service.
    pub total_mass: T,
    pub server_busy: bool,
    /// Mass `min(Y, m)` the current service will remove.
    pub committed_mass: T,
    pub next_arrival_time: T,
    pub service_completion_time: Option<T>,
}

impl<T: Real> SystemState<T> {
    fn empty() -> Self {
        SystemState {
            clock: T::zero(),
            total_mass: T::zero(),
            server_busy: false,
            committed_mass: T::zero(),
            next_arrival_time: T::zero(),
            service_completion_time: None,
        }
    }

    /// Describes the first violated state invariant, if any.
    pub fn invariant_violation(&self, capacity: T) -> Option<String> {
        if self.total_mass < T::zero() || self.total_mass > capacity + capacity_slack(capacity) {
            return Some(format!(
                "total mass {} outside [0, {}]",
                self.total_mass, capacity
            ));
        }
        let committed = self.committed_mass > T::zero();
        if self.server_busy != self.service_completion_time.is_some()
            || self.server_busy != committed
        {
            return Some("server_busy, completion time and committed mass disagree".into());
        }
        if !self.server_busy && self.total_mass != T::zero() {
            return Some(format!("idle server with mass {}", self.total_mass));
        }
        None
    }
}

/// Statistics of one busy cycle: the busy period started by an arrival to an
/// empty system, plus the idle time until the next such arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleRecord<T> {
    /// Arrivals in the cycle, the initiator included.
    pub n_arrivals: u64,
    /// Service completions in the busy period.
    pub n_services: u64,
    pub mass_arrived: T,
    pub mass_served: T,
    pub mass_lost: T,
    pub busy_length: T,
    pub idle_length: T,
    pub cycle_length: T,
    pub sum_interarrival: T,
    pub sum_service: T,
    /// The initiating batch was rejected whole; no service took place.
    pub degenerate: bool,
}

fn close<T: Real>(x: T, y: T, rel: T) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(T::min_positive_value())
}

impl<T: Real> CycleRecord<T> {
    /// Describes the first violated conservation identity at relative
    /// tolerance `rel`, if any.
    pub fn conservation_violation(&self, rel: T) -> Option<String> {
        if !close(self.mass_arrived, self.mass_served + self.mass_lost, rel) {
            return Some(format!(
                "mass: arrived {} != served {} + lost {}",
                self.mass_arrived, self.mass_served, self.mass_lost
            ));
        }
        if !close(self.cycle_length, self.busy_length + self.idle_length, rel) {
            return Some(format!(
                "time: cycle {} != busy {} + idle {}",
                self.cycle_length, self.busy_length, self.idle_length
            ));
        }
        if !close(self.cycle_length, self.sum_interarrival, rel) {
            return Some(format!(
                "time: cycle {} != sum of interarrivals {}",
                self.cycle_length, self.sum_interarrival
            ));
        }
        if !close(self.busy_length, self.sum_service, rel) {
            return Some(format!(
                "time: busy {} != sum of service times {}",
                self.busy_length, self.sum_service
            ));
        }
        if self.degenerate
            && (self.n_services != 0
                || self.mass_served != T::zero()
                || self.busy_length != T::zero()
                || self.mass_lost != self.mass_arrived)
        {
            return Some("degenerate cycle with service activity".into());
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    ServiceStart,
    Completion,
    CycleEnd,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service_start",
            EventKind::Completion => "completion",
            EventKind::CycleEnd => "cycle_end",
        })
    }
}

/// One line of the event trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent<T> {
    pub time: T,
    pub kind: EventKind,
    pub mass_before: T,
    pub mass_after: T,
    pub lost: T,
    /// Mass committed to the service in progress after the event.
    pub committed: T,
}

impl<T: Real> fmt::Display for TraceEvent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.time, self.kind, self.mass_before, self.mass_after, self.lost
        )
    }
}

/// Validated model with ready samplers.
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    model: QueueModel<T>,
    interarrival: Sampler<T>,
    service_time: Sampler<T>,
    arrival_batch: Sampler<T>,
    service_batch: Sampler<T>,
    max_events: u64,
}

struct CycleRun<'a, T, R: ?Sized, F> {
    sim: &'a Simulator<T>,
    rng: &'a mut R,
    observer: F,
    state: SystemState<T>,
    record: CycleRecord<T>,
}

impl<T: Real, R: Rng + ?Sized, F: FnMut(&TraceEvent<T>)> CycleRun<'_, T, R, F> {
    fn emit(&mut self, kind: EventKind, mass_before: T, lost: T) {
        debug_assert!(
            self.state
                .invariant_violation(self.sim.model.capacity)
                .is_none(),
            "{:?}",
            self.state.invariant_violation(self.sim.model.capacity)
        );
        let event = TraceEvent {
            time: self.state.clock,
            kind,
            mass_before,
            mass_after: self.state.total_mass,
            lost,
            committed: self.state.committed_mass,
        };
        (self.observer)(&event);
    }

    fn arrive(&mut self) {
        let st = &mut self.state;
        st.clock = st.next_arrival_time;
        let batch = self.sim.arrival_batch.sample(self.rng);
        let before = st.total_mass;
        let adm = admit(
            before,
            batch,
            self.sim.model.capacity,
            self.sim.model.policy,
        );
        st.total_mass = before + adm.accepted;
        let tau = self.sim.interarrival.sample(self.rng);
        st.next_arrival_time = st.clock + tau;

        let rec = &mut self.record;
        rec.n_arrivals += 1;
        rec.mass_arrived = rec.mass_arrived + batch;
        rec.mass_lost = rec.mass_lost + adm.lost;
        rec.sum_interarrival = rec.sum_interarrival + tau;

        let started = !self.state.server_busy && self.state.total_mass > T::zero();
        if started {
            self.begin_service();
        }
        self.emit(EventKind::Arrival, before, adm.lost);
        if started {
            self.emit(EventKind::ServiceStart, self.state.total_mass, T::zero());
        }
    }

    /// Starts a service on the current workload `m`, committing `min(Y, m)`.
    fn begin_service(&mut self) {
        let st = &mut self.state;
        let duration = self.sim.service_time.sample(self.rng);
        let service_mass = self.sim.service_batch.sample(self.rng);
        st.committed_mass = service_mass.min(st.total_mass);
        st.server_busy = true;
        st.service_completion_time = Some(st.clock + duration);
        self.record.sum_service = self.record.sum_service + duration;
    }

    fn complete(&mut self, at: T) {
        let st = &mut self.state;
        st.clock = at;
        let before = st.total_mass;
        let served = st.committed_mass;
        st.total_mass = before - served;
        st.committed_mass = T::zero();
        st.server_busy = false;
        st.service_completion_time = None;
        self.record.n_services += 1;
        self.record.mass_served = self.record.mass_served + served;
        let started = self.state.total_mass > T::zero();
        if started {
            self.begin_service();
        }
        self.emit(EventKind::Completion, before, T::zero());
        if started {
            self.emit(EventKind::ServiceStart, self.state.total_mass, T::zero());
        }
    }

    fn run(mut self) -> Result<CycleRecord<T>, SimError> {
        self.arrive();
        let mut events: u64 = 1;
        loop {
            if events > self.sim.max_events {
                return Err(SimError::RunawayCycle {
                    events: self.sim.max_events,
                    stream: None,
                });
            }
            events += 1;
            match self.state.service_completion_time {
                // Completions win ties with arrivals.
                Some(at) if at <= self.state.next_arrival_time => self.complete(at),
                Some(_) => self.arrive(),
                None => break,
            }
        }
        let st = self.state;
        let rec = &mut self.record;
        rec.busy_length = st.clock;
        rec.idle_length = st.next_arrival_time - st.clock;
        rec.cycle_length = st.next_arrival_time;
        rec.degenerate = rec.n_services == 0;
        self.emit(EventKind::CycleEnd, T::zero(), T::zero());
        Ok(self.record)
    }
}

impl<T: Real> Simulator<T> {
    pub fn new(model: QueueModel<T>) -> Result<Self, SimError> {
        model.validate()?;
        Ok(Simulator {
            interarrival: Sampler::new(model.interarrival.clone())?,
            service_time: Sampler::new(model.service_time.clone())?,
            arrival_batch: Sampler::new(model.arrival_batch.clone())?,
            service_batch: Sampler::new(model.service_batch.clone())?,
            model,
            max_events: DEFAULT_MAX_EVENTS,
        })
    }

    pub fn with_max_events(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn model(&self) -> &QueueModel<T> {
        &self.model
    }

    /// Simulates one busy cycle from an arrival to an empty system up to
    /// (excluding) the next such arrival.
    pub fn simulate_cycle<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CycleRecord<T>, SimError> {
        self.simulate_cycle_observed(rng, |_| {})
    }

    /// Like [`Simulator::simulate_cycle`], calling `observer` after every event.
    pub fn simulate_cycle_observed<R, F>(
        &self,
        rng: &mut R,
        observer: F,
    ) -> Result<CycleRecord<T>, SimError>
    where
        R: Rng + ?Sized,
        F: FnMut(&TraceEvent<T>),
    {
        let zero = T::zero();
        CycleRun {
            sim: self,
            rng,
            observer,
            state: SystemState::empty(),
            record: CycleRecord {
                n_arrivals: 0,
                n_services: 0,
                mass_arrived: zero,
                mass_served: zero,
                mass_lost: zero,
                busy_length: zero,
                idle_length: zero,
                cycle_length: zero,
                sum_interarrival: zero,
                sum_service: zero,
                degenerate: false,
            },
        }
        .run()
    }

    fn run_block(
        &self,
        seed: u64,
        block: usize,
        count: usize,
    ) -> Result<Vec<CycleRecord<T>>, SimError> {
        let mut rng = stream(seed, block as u64);
        (0..count)
            .map(|_| {
                self.simulate_cycle(&mut rng).map_err(|e| match e {
                    SimError::RunawayCycle { events, .. } => SimError::RunawayCycle {
                        events,
                        stream: Some(block as u64),
                    },
                    other => other,
                })
            })
            .collect()
    }

    /// Simulates `num_cycles` i.i.d. cycles. The output depends only on
    /// `seed`, never on `workers`.
    pub fn run_cycles(
        &self,
        num_cycles: usize,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<CycleRecord<T>>, SimError> {
        if num_cycles == 0 {
            return Err(SimError::NoCycles);
        }
        let blocks = num_cycles.div_ceil(CYCLES_PER_STREAM);
        let block_len = |b: usize| CYCLES_PER_STREAM.min(num_cycles - b * CYCLES_PER_STREAM);
        let chunks: Vec<Vec<CycleRecord<T>>> = if workers <= 1 || blocks == 1 {
            (0..blocks)
                .map(|b| self.run_block(seed, b, block_len(b)))
                .collect::<Result<_, _>>()?
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| SimError::Workers(e.to_string()))?;
            pool.install(|| {
                (0..blocks)
                    .into_par_iter()
                    .map(|b| self.run_block(seed, b, block_len(b)))
                    .collect::<Result<_, _>>()
            })?
        };
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Simulates `num_cycles` cycles of `model`; see [`Simulator::run_cycles`].
pub fn run_cycles<T: Real>(
    model: &QueueModel<T>,
    num_cycles: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<CycleRecord<T>>, SimError> {
    Simulator::new(model.clone())?.run_cycles(num_cycles, seed, workers)
}
