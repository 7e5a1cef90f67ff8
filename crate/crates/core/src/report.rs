//! Per-experiment estimate reports and their CSV / text renderings.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use crate::engine::{CycleRecord, QueueModel, RejectionPolicy};
use crate::num::Real;
use crate::stats::{
    bound_checks, regenerative_estimate, wald_residuals, BoundCheck, BoundChecks, CycleField,
    Estimate, LemmaVerdict, StatsError, TheoremVerdict, WaldResiduals,
};

/// Frozen CSV column order. New columns may only be appended.
pub const CSV_COLUMNS: [&str; 15] = [
    "n",
    "policy",
    "cycles",
    "seed",
    "ml_mean",
    "ml_lo",
    "ml_hi",
    "ex1",
    "verdict",
    "r1",
    "r1_se",
    "r2",
    "r2_se",
    "idle_mean",
    "a",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport<T> {
    pub capacity: T,
    pub policy: RejectionPolicy,
    pub num_cycles: usize,
    pub seed: u64,
    pub level: f64,
    pub arrivals: Estimate<T>,
    pub services: Estimate<T>,
    pub mass_arrived: Estimate<T>,
    pub mass_served: Estimate<T>,
    pub mass_lost: Estimate<T>,
    pub idle: Estimate<T>,
    pub busy: Estimate<T>,
    pub wald: WaldResiduals<T>,
    pub bounds: BoundChecks<T>,
    /// Analytic `E X_1`.
    pub mean_arrival_batch: T,
    /// Analytic `a`.
    pub mean_interarrival: T,
    pub theorem: Option<TheoremVerdict>,
    pub lemma: Option<LemmaVerdict>,
}

/// One row of the experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub n: f64,
    pub policy: String,
    pub cycles: usize,
    pub seed: u64,
    pub ml_mean: f64,
    pub ml_lo: f64,
    pub ml_hi: f64,
    pub ex1: f64,
    pub verdict: String,
    pub r1: f64,
    pub r1_se: f64,
    pub r2: f64,
    pub r2_se: f64,
    pub idle_mean: f64,
    pub a: f64,
}

impl<T: Real> EstimateReport<T> {
    pub fn new(
        records: &[CycleRecord<T>],
        model: &QueueModel<T>,
        level: f64,
        seed: u64,
    ) -> Result<Self, StatsError> {
        let est = |field| regenerative_estimate(records, field, level);
        Ok(EstimateReport {
            capacity: model.capacity,
            policy: model.policy,
            num_cycles: records.len(),
            seed,
            level,
            arrivals: est(CycleField::Arrivals)?,
            services: est(CycleField::Services)?,
            mass_arrived: est(CycleField::MassArrived)?,
            mass_served: est(CycleField::MassServed)?,
            mass_lost: est(CycleField::MassLost)?,
            idle: est(CycleField::Idle)?,
            busy: est(CycleField::Busy)?,
            wald: wald_residuals(records, model)?,
            bounds: bound_checks(records, model)?,
            mean_arrival_batch: model.mean_arrival_batch(),
            mean_interarrival: model.mean_interarrival(),
            theorem: None,
            lemma: None,
        })
    }

    pub fn with_theorem(mut self, verdict: TheoremVerdict) -> Self {
        self.theorem = Some(verdict);
        self
    }

    pub fn with_lemma(mut self, verdict: LemmaVerdict) -> Self {
        self.lemma = Some(verdict);
        self
    }

    pub fn verdict_label(&self) -> String {
        match (self.theorem, self.lemma) {
            (Some(t), _) => t.to_string(),
            (None, Some(l)) => l.to_string(),
            (None, None) => "none".to_string(),
        }
    }

    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            n: self.capacity.to_f64_lossy(),
            policy: self.policy.to_string(),
            cycles: self.num_cycles,
            seed: self.seed,
            ml_mean: self.mass_lost.point.to_f64_lossy(),
            ml_lo: self.mass_lost.ci_lo.to_f64_lossy(),
            ml_hi: self.mass_lost.ci_hi.to_f64_lossy(),
            ex1: self.mean_arrival_batch.to_f64_lossy(),
            verdict: self.verdict_label(),
            r1: self.wald.r1.to_f64_lossy(),
            r1_se: self.wald.r1_se.to_f64_lossy(),
            r2: self.wald.r2.to_f64_lossy(),
            r2_se: self.wald.r2_se.to_f64_lossy(),
            idle_mean: self.idle.point.to_f64_lossy(),
            a: self.mean_interarrival.to_f64_lossy(),
        }
    }

    /// Human-readable multi-line summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "n = {}  policy = {}  cycles = {}  seed = {}  level = {}",
            self.capacity, self.policy, self.num_cycles, self.seed, self.level
        );
        let rows = [
            ("E N_A", &self.arrivals),
            ("E N_S", &self.services),
            ("E M_A", &self.mass_arrived),
            ("E M_S", &self.mass_served),
            ("E M_L", &self.mass_lost),
            ("E I", &self.idle),
            ("E busy", &self.busy),
        ];
        for (name, e) in rows {
            let _ = writeln!(
                out,
                "  {name:<7} {:>14.6}  [{:.6}, {:.6}]  se {:.3e}",
                e.point, e.ci_lo, e.ci_hi, e.std_error
            );
        }
        let _ = writeln!(
            out,
            "  E X_1 = {}  a = {}",
            self.mean_arrival_batch, self.mean_interarrival
        );
        let _ = writeln!(
            out,
            "  wald r1 = {:.6e} (se {:.3e})  r2 = {:.6e} (se {:.3e})",
            self.wald.r1, self.wald.r1_se, self.wald.r2, self.wald.r2_se
        );
        let check = |c: &BoundCheck<T>| {
            format!(
                "gap {:.6e} se {:.3e} {}{}",
                c.gap,
                c.std_error,
                if c.holds { "holds" } else { "VIOLATED" },
                if c.strict { " (strict)" } else { "" }
            )
        };
        let _ = writeln!(
            out,
            "  a E N_A - a >= b E N_S:  {}",
            check(&self.bounds.busy_time)
        );
        let _ = writeln!(
            out,
            "  E M_S <= E N_S E Y_1:    {}",
            check(&self.bounds.served_mass)
        );
        match &self.bounds.idle {
            Some(c) => {
                let _ = writeln!(out, "  E I >= a:                {}", check(c));
            }
            None => {
                let _ = writeln!(
                    out,
                    "  E I >= a:                not applicable (arrivals not NWUE)"
                );
            }
        }
        if self.theorem.is_some() || self.lemma.is_some() {
            let _ = writeln!(out, "  verdict: {}", self.verdict_label());
        }
        out
    }
}

/// Writes a header plus one row per report.
pub fn write_csv<W: io::Write>(writer: W, rows: &[CsvRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DistributionSpec::Deterministic;
    use crate::engine::run_cycles;

    fn model() -> QueueModel<f64> {
        QueueModel {
            interarrival: Deterministic { value: 2.0 },
            service_time: Deterministic { value: 1.0 },
            arrival_batch: Deterministic { value: 1.0 },
            service_batch: Deterministic { value: 1.0 },
            capacity: 1.0,
            policy: RejectionPolicy::FullRejection,
        }
    }

    #[test]
    fn csv_header_is_frozen() {
        let recs = run_cycles(&model(), 40, 5, 1).unwrap();
        let rep = EstimateReport::new(&recs, &model(), 0.95, 5)
            .unwrap()
            .with_theorem(TheoremVerdict::ViolatedLow);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[rep.csv_row()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "1.0,full,40,5,0.0,0.0,0.0,1.0,violated-low,0.0,0.0,0.0,0.0,1.0,2.0"
        );
        let mut empty = Vec::new();
        write_csv(&mut empty, &[]).unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap().trim_end(),
            CSV_COLUMNS.join(",")
        );
    }

    #[test]
    fn text_report_mentions_every_quantity() {
        let recs = run_cycles(&model(), 40, 5, 1).unwrap();
        let text = EstimateReport::new(&recs, &model(), 0.95, 5)
            .unwrap()
            .render();
        for key in ["E N_A", "E M_L", "E I", "wald r1", "not applicable"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
    }
}
