use std::collections::HashMap;

use proptest::prelude::*;
use wadc_core::pdcsim::{self, Emission, LatencyModel, PmuPacket, SynthSpec};

fn channels() -> Vec<String> {
    vec!["A".into(), "B".into(), "C".into()]
}

fn replay(spec: &SynthSpec) -> (Vec<PmuPacket>, pdcsim::PdcRun) {
    let packets = pdcsim::synth_packet_stream(spec).unwrap();
    let run = pdcsim::run_pdc(&spec.channels, &packets, spec.h, 0, spec.steps as i64 + 20, &vec![0.0; spec.channels.len()])
        .unwrap();
    (packets, run)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emission_log_invariants(
        seed in any::<u64>(),
        disorder in 0.0..0.4f64,
        dropout in 0.0..0.3f64,
    ) {
        let spec = SynthSpec {
            channels: channels(),
            steps: 150,
            disorder_probability: disorder,
            dropout_probability: dropout,
            seed,
            ..SynthSpec::default()
        };
        let (packets, run) = replay(&spec);
        let by_key: HashMap<(String, i64), &PmuPacket> =
            packets.iter().map(|p| ((p.channel.clone(), p.stamp_index), p)).collect();
        let min_lag = packets
            .iter()
            .map(|p| p.arrival_time - p.stamp_index as f64 * spec.h)
            .fold(f64::INFINITY, f64::min);

        // One emission per sampling instant, nothing in between.
        let steps: Vec<i64> = run.log.iter().map(Emission::step).collect();
        prop_assert_eq!(steps, (0..=spec.steps as i64 + 20).collect::<Vec<_>>());

        let mut last_stamp = i64::MIN;
        let mut warm = false;
        for e in &run.log {
            match e {
                Emission::Cold { values, .. } => {
                    prop_assert!(!warm, "cold entry after warm-up");
                    prop_assert!(values.iter().all(|v| *v == 0.0));
                }
                Emission::Sample(s) => {
                    warm = true;
                    prop_assert!(s.source_stamp >= last_stamp);
                    prop_assert_eq!(s.held, s.source_stamp == last_stamp);
                    last_stamp = s.source_stamp;
                    // Every value comes from a packet with this stamp that had already arrived.
                    for (ch, v) in spec.channels.iter().zip(&s.values) {
                        let p = by_key[&(ch.clone(), s.source_stamp)];
                        prop_assert_eq!(p.value, *v);
                        prop_assert!(p.arrival_time < s.emitted_at as f64 * spec.h);
                    }
                    prop_assert!(s.effective_delay() as f64 * spec.h > min_lag);
                }
            }
        }
        if let Ok(trace) = pdcsim::effective_delay_trace(&run.log) {
            let warm: Vec<i64> = run
                .log
                .iter()
                .filter_map(|e| match e {
                    Emission::Sample(s) => Some(s.emitted_at - s.source_stamp),
                    Emission::Cold { .. } => None,
                })
                .collect();
            prop_assert_eq!(trace.entries.iter().map(|&d| d as i64).collect::<Vec<_>>(), warm);
        }
    }

    #[test]
    fn constant_latency_gives_constant_trace(steps_of_h in 0.05..6.0f64, h in prop::sample::select(vec![0.02, 1.0 / 60.0, 0.1])) {
        let latency = steps_of_h * h;
        let spec = SynthSpec {
            channels: channels(),
            steps: 80,
            h,
            latency: LatencyModel::fixed(latency),
            ..SynthSpec::default()
        };
        let (_, run) = replay(&spec);
        let trace = pdcsim::effective_delay_trace(&run.log).unwrap();
        let expected = (latency / h - 1e-9).ceil() as usize;
        // The tail after the last stamp is pure hold and keeps growing.
        let head = &trace.entries[..60];
        prop_assert!(head.iter().all(|&d| d == expected), "{:?} vs {expected}", head);
    }

    #[test]
    fn clipping_keeps_entries_in_range(entries in prop::collection::vec(0usize..30, 1..50), lo in 2usize..8, span in 0usize..10) {
        let hi = lo + span;
        let seq = pdcsim::DelaySequence { entries: entries.clone(), n_min: 0, n_max: 30, seed: None };
        let (clipped, moved) = seq.clipped(lo, hi).unwrap();
        prop_assert!(clipped.entries.iter().all(|&d| (lo..=hi).contains(&d)));
        prop_assert_eq!(moved, entries.iter().filter(|&&d| d < lo || d > hi).count());
    }

    #[test]
    fn synthetic_stream_is_seed_deterministic(seed in any::<u64>()) {
        let spec = SynthSpec { steps: 40, disorder_probability: 0.2, dropout_probability: 0.1, seed, ..SynthSpec::default() };
        prop_assert_eq!(pdcsim::synth_packet_stream(&spec).unwrap(), pdcsim::synth_packet_stream(&spec).unwrap());
    }
}

#[test]
fn exact_multiple_latency_waits_one_more_step() {
    // Arrival exactly at t[K] is usable only at t[K+1].
    let packets: Vec<PmuPacket> = (0..10)
        .map(|k| PmuPacket { channel: "A".into(), stamp_index: k, value: k as f64, arrival_time: (k + 3) as f64 })
        .collect();
    let run = pdcsim::run_pdc(&["A".to_string()], &packets, 1.0, 0, 12, &[0.0]).unwrap();
    let trace = pdcsim::effective_delay_trace(&run.log).unwrap();
    assert!(trace.entries[..7].iter().all(|&d| d == 4), "{:?}", trace.entries);
}

#[test]
fn stale_and_unknown_packets_are_counted() {
    let ch = vec!["A".to_string()];
    let packets = vec![
        PmuPacket { channel: "A".into(), stamp_index: 2, value: 2.0, arrival_time: 2.5 },
        PmuPacket { channel: "A".into(), stamp_index: 1, value: 1.0, arrival_time: 2.7 },
        PmuPacket { channel: "Z".into(), stamp_index: 2, value: 9.0, arrival_time: 2.8 },
    ];
    let run = pdcsim::run_pdc(&ch, &packets, 1.0, 0, 4, &[0.0]).unwrap();
    assert_eq!(run.stats.stored, 1);
    assert_eq!(run.stats.discarded, 1);
    assert_eq!(run.stats.unknown, 1);
}

#[test]
fn packets_from_the_future_are_rejected() {
    let packets = vec![PmuPacket { channel: "A".into(), stamp_index: 5, value: 0.0, arrival_time: 2.0 }];
    assert!(pdcsim::run_pdc(&["A".to_string()], &packets, 1.0, 0, 6, &[0.0]).is_err());
}

#[test]
fn invalid_probabilities_are_rejected() {
    let spec = SynthSpec { dropout_probability: 1.5, ..SynthSpec::default() };
    assert!(matches!(pdcsim::synth_packet_stream(&spec), Err(wadc_core::Error::InvalidProbability(_))));
}

#[test]
fn emission_csv_has_one_row_per_step() {
    let trace = pdcsim::two_pmu_scenario();
    let run = pdcsim::run_pdc(&trace.channels(), trace.packets(), 1.0, 1, 8, &[0.0, 0.0]).unwrap();
    let mut buf = Vec::new();
    pdcsim::write_emission_csv(&run, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[1].contains("cold"));
}
