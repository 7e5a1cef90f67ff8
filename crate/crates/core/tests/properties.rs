use proptest::prelude::*;

use batchloss::dists::{AgingClass, DistributionSpec, Sampler};
use batchloss::engine::{run_cycles, QueueModel, RejectionPolicy, Simulator};
use batchloss::oracle::{exact_expected_loss_per_cycle, LatticeModel};
use batchloss::rng::stream;
use batchloss::stats::{regenerative_estimate, CycleField};

use DistributionSpec::*;

fn spec_strategy() -> impl Strategy<Value = DistributionSpec<f64>> {
    prop_oneof![
        (0.1f64..10.0).prop_map(|rate| Exponential { rate }),
        (0.1f64..10.0).prop_map(|value| Deterministic { value }),
        (1u32..6, 0.2f64..5.0).prop_map(|(shape, rate)| Erlang { shape, rate }),
        (0.05f64..0.95, 0.1f64..5.0, 0.1f64..5.0).prop_map(|(w, r1, r2)| HyperExponential {
            weights: vec![w, 1.0 - w],
            rates: vec![r1, r2],
        }),
        (0.0f64..3.0, 0.1f64..3.0).prop_map(|(lo, width)| Uniform { lo, hi: lo + width }),
    ]
}

fn lattice_strategy() -> impl Strategy<Value = (u32, Vec<f64>)> {
    // span exponent in {-2..1} keeps every level exactly representable
    (-2i32..2, prop::collection::vec(0.05f64..1.0, 1..5)).prop_map(|(e, w)| {
        let total: f64 = w.iter().sum();
        ((e + 2) as u32, w.into_iter().map(|p| p / total).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampling_is_reproducible(spec in spec_strategy(), seed in any::<u64>()) {
        let sampler = Sampler::new(spec).unwrap();
        let mut r1 = stream(seed, 3);
        let mut r2 = stream(seed, 3);
        for _ in 0..64 {
            let (a, b) = (sampler.sample(&mut r1), sampler.sample(&mut r2));
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a > 0.0);
        }
    }

    #[test]
    fn mrl_at_zero_is_the_mean(spec in spec_strategy()) {
        let m = spec.mean_residual_life(0.0).unwrap();
        prop_assert!((m - spec.mean()).abs() <= 1e-9 * spec.mean().max(1.0), "{m} vs {}", spec.mean());
    }

    #[test]
    fn aging_class_agrees_with_mrl_grid(spec in spec_strategy()) {
        let mean = spec.mean();
        let class = spec.classify_aging();
        for q in 0..=20 {
            let x = q as f64 * 0.25 * mean;
            if spec.survival(x) <= 0.0 {
                continue;
            }
            let m = spec.mean_residual_life(x).unwrap();
            let tol = 1e-9 * mean.max(1.0);
            match class {
                AgingClass::Nbue => prop_assert!(m <= mean + tol, "x={x}: {m} > {mean}"),
                AgingClass::Nwue => prop_assert!(m >= mean - tol, "x={x}: {m} < {mean}"),
                AgingClass::Both => prop_assert!((m - mean).abs() <= tol),
                AgingClass::Unknown => {}
            }
        }
    }

    #[test]
    fn engine_respects_capacity(
        capacity in 0.3f64..6.0,
        rate in 0.2f64..3.0,
        partial in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let model = QueueModel {
            interarrival: Exponential { rate },
            service_time: Uniform { lo: 0.2, hi: 1.4 },
            arrival_batch: Exponential { rate: 1.0 },
            service_batch: Uniform { lo: 0.3, hi: 1.7 },
            capacity,
            policy: if partial { RejectionPolicy::PartialRejection } else { RejectionPolicy::FullRejection },
        };
        let sim = Simulator::new(model).unwrap();
        let mut rng = stream(seed, 0);
        for _ in 0..20 {
            let mut bad = None;
            let rec = sim
                .simulate_cycle_observed(&mut rng, |e| {
                    let slack = 1e-12 * capacity;
                    if bad.is_none() && !(e.mass_after >= 0.0 && e.mass_after <= capacity + slack && e.lost >= 0.0) {
                        bad = Some(format!("{e}"));
                    }
                })
                .unwrap();
            prop_assert!(bad.is_none(), "event outside [0, n]: {:?}", bad);
            prop_assert!(rec.conservation_violation(1e-9).is_none());
        }
    }

    #[test]
    fn lattice_inputs_stay_on_the_lattice(
        (span_idx, pmf) in lattice_strategy(),
        levels in 1usize..8,
        rate in 0.2f64..2.0,
        seed in any::<u64>(),
    ) {
        let d = [0.25, 0.5, 1.0, 2.0][span_idx as usize];
        let model = QueueModel {
            interarrival: Exponential { rate },
            service_time: Deterministic { value: 1.0 },
            arrival_batch: LatticeDiscrete {
                span: d,
                multipliers: (1..=pmf.len() as u64).collect(),
                probs: pmf,
            },
            service_batch: Deterministic { value: d },
            capacity: levels as f64 * d + 0.5 * d,
            policy: RejectionPolicy::FullRejection,
        };
        let sim = Simulator::new(model).unwrap();
        let mut rng = stream(seed, 1);
        for _ in 0..20 {
            let mut off = None;
            sim.simulate_cycle_observed(&mut rng, |e| {
                let units = e.mass_after / d;
                if off.is_none() && (units - units.round()).abs() > 1e-9 {
                    off = Some(format!("{e}"));
                }
            })
            .unwrap();
            prop_assert!(off.is_none(), "mass left the lattice: {:?}", off);
        }
    }

    #[test]
    fn oracle_equality_under_balance(
        pmf in prop::collection::vec(0.05f64..1.0, 1..5),
        d in 0.25f64..3.0,
        b in 0.25f64..3.0,
        k in 1usize..=10,
    ) {
        let total: f64 = pmf.iter().sum();
        let pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        let mean_units: f64 = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        // E X_1 = a d / b with a = 1/λ
        let lambda = 1.0 / (b * mean_units);
        let lm = LatticeModel::new(lambda, b, d, k, pmf, RejectionPolicy::FullRejection).unwrap();
        let exact = exact_expected_loss_per_cycle(&lm).unwrap();
        let ex = lm.mean_batch_mass();
        prop_assert!((exact - ex).abs() <= 1e-8 * ex.max(1.0), "K={k}: {exact} vs {ex}");
    }

    #[test]
    fn oracle_loss_decreases_in_capacity_when_subcritical(
        pmf in prop::collection::vec(0.05f64..1.0, 1..4),
        load in 0.1f64..0.9,
    ) {
        let total: f64 = pmf.iter().sum();
        let pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        let mean_units: f64 = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let lambda = load / mean_units;
        let mut prev = f64::INFINITY;
        for k in 1..=12 {
            let lm = LatticeModel::new(lambda, 1.0, 1.0, k, pmf.clone(), RejectionPolicy::FullRejection).unwrap();
            let v = exact_expected_loss_per_cycle(&lm).unwrap();
            prop_assert!(v <= prev + 1e-10, "K={k}: {v} > {prev}");
            prop_assert!(v < lm.mean_batch_mass());
            prev = v;
        }
    }
}

#[test]
fn records_do_not_depend_on_workers() {
    let model = QueueModel {
        interarrival: HyperExponential {
            weights: vec![0.9, 0.1],
            rates: vec![2.0, 0.25],
        },
        service_time: Erlang {
            shape: 2,
            rate: 2.0,
        },
        arrival_batch: Uniform { lo: 0.5, hi: 1.5 },
        service_batch: Exponential { rate: 1.0 },
        capacity: 2.7,
        policy: RejectionPolicy::PartialRejection,
    };
    let one = run_cycles(&model, 10_000, 11, 1).unwrap();
    let four = run_cycles(&model, 10_000, 11, 4).unwrap();
    assert_eq!(one, four);
    let other = run_cycles(&model, 10_000, 12, 1).unwrap();
    assert_ne!(one, other);
}

#[test]
fn doubling_cycles_shrinks_half_width_by_root_two() {
    let model = QueueModel {
        interarrival: Exponential { rate: 1.0 },
        service_time: Deterministic { value: 1.0 },
        arrival_batch: Deterministic { value: 1.0 },
        service_batch: Deterministic { value: 1.0 },
        capacity: 2.0,
        policy: RejectionPolicy::FullRejection,
    };
    let records = run_cycles(&model, 100_000, 21, 1).unwrap();
    let fields = [
        CycleField::MassLost,
        CycleField::Cycle,
        CycleField::Busy,
        CycleField::Idle,
    ];
    for field in fields {
        let half = regenerative_estimate(&records[..50_000], field, 0.95)
            .unwrap()
            .half_width();
        let full = regenerative_estimate(&records, field, 0.95)
            .unwrap()
            .half_width();
        let ratio = half / full;
        assert!(
            (ratio / 2f64.sqrt() - 1.0).abs() < 0.2,
            "{}: ratio {ratio}",
            field.name()
        );
    }
}
