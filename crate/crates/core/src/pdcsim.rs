//! Phasor data concentrator pipeline: time alignment and buffering, the
//! disorder/dropout policy, and zero-order-hold composite emission.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmuPacket {
    pub channel: String,
    pub stamp_index: i64,
    pub value: f64,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IngestOutcome {
    Stored,
    /// Stamp not newer than the channel's high-water mark.
    Discarded,
    UnknownChannel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub stored: usize,
    pub discarded: usize,
    pub unknown: usize,
}

/// Per-channel stamp-indexed store.
#[derive(Debug, Clone, PartialEq)]
pub struct PdcBuffer {
    channels: Vec<String>,
    data: HashMap<String, BTreeMap<i64, f64>>,
    high_water: HashMap<String, i64>,
    stats: IngestStats,
}

impl PdcBuffer {
    pub fn new(channels: &[String]) -> Self {
        Self {
            channels: channels.to_vec(),
            data: channels.iter().map(|c| (c.clone(), BTreeMap::new())).collect(),
            high_water: HashMap::new(),
            stats: IngestStats::default(),
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn high_water(&self, channel: &str) -> Option<i64> {
        self.high_water.get(channel).copied()
    }

    pub fn value(&self, channel: &str, stamp: i64) -> Option<f64> {
        self.data.get(channel)?.get(&stamp).copied()
    }

    pub fn ingest(&mut self, packet: &PmuPacket) -> IngestOutcome {
        let Some(store) = self.data.get_mut(&packet.channel) else {
            self.stats.unknown += 1;
            return IngestOutcome::UnknownChannel;
        };
        let hw = self.high_water.get(&packet.channel).copied();
        if hw.is_some_and(|hw| packet.stamp_index <= hw) {
            self.stats.discarded += 1;
            return IngestOutcome::Discarded;
        }
        store.insert(packet.stamp_index, packet.value);
        self.high_water.insert(packet.channel.clone(), packet.stamp_index);
        self.stats.stored += 1;
        IngestOutcome::Stored
    }

    /// Largest stamp present on every channel.
    pub fn latest_complete(&self) -> Option<i64> {
        let (first, rest) = self.channels.split_first()?;
        self.data[first]
            .keys()
            .rev()
            .copied()
            .find(|s| rest.iter().all(|c| self.data[c].contains_key(s)))
    }

    fn values_at(&self, stamp: i64) -> Vec<f64> {
        self.channels.iter().map(|c| self.data[c][&stamp]).collect()
    }

    /// Drop entries at or below `stamp`; they can never form a newer set.
    pub fn prune_through(&mut self, stamp: i64) {
        for store in self.data.values_mut() {
            *store = store.split_off(&(stamp + 1));
        }
    }
}

/// Functional form of [`PdcBuffer::ingest`].
pub fn pdc_ingest(mut buffer: PdcBuffer, packet: &PmuPacket) -> PdcBuffer {
    buffer.ingest(packet);
    buffer
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSample {
    pub emitted_at: i64,
    pub source_stamp: i64,
    pub values: Vec<f64>,
    pub held: bool,
}

impl CompositeSample {
    pub fn effective_delay(&self) -> i64 {
        self.emitted_at - self.source_stamp
    }
}

/// ZOH output at sampling instant `step` from data already in `buffer`.
pub fn pdc_emit(
    buffer: &PdcBuffer,
    step: i64,
    previous: Option<&CompositeSample>,
) -> Result<CompositeSample> {
    if let Some(prev) = previous {
        if step <= prev.emitted_at {
            return Err(Error::InvalidArgument(format!(
                "emission step {step} not after {}",
                prev.emitted_at
            )));
        }
    }
    let newest = buffer.latest_complete();
    match (newest, previous) {
        (Some(s), prev) if prev.is_none_or(|p| s > p.source_stamp) => Ok(CompositeSample {
            emitted_at: step,
            source_stamp: s,
            values: buffer.values_at(s),
            held: false,
        }),
        (_, Some(prev)) => Ok(CompositeSample {
            emitted_at: step,
            held: true,
            ..prev.clone()
        }),
        (None, None) => Err(Error::ColdStart),
        (Some(_), None) => unreachable!("covered by the first arm"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Emission {
    /// Before any complete set: the configured initial output.
    Cold { step: i64, values: Vec<f64> },
    Sample(CompositeSample),
}

impl Emission {
    pub fn step(&self) -> i64 {
        match self {
            Emission::Cold { step, .. } => *step,
            Emission::Sample(s) => s.emitted_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdcRun {
    pub channels: Vec<String>,
    pub h: f64,
    pub log: Vec<Emission>,
    pub stats: IngestStats,
}

/// Data is usable at `t[K]` only if it arrived strictly before `t[K]`.
fn arrived_before(arrival: f64, step: i64, h: f64) -> bool {
    arrival < (step as f64 - 1e-9) * h
}

/// Replay `packets` through a PDC, emitting at every step in `first..=last`.
pub fn run_pdc(
    channels: &[String],
    packets: &[PmuPacket],
    h: f64,
    first: i64,
    last: i64,
    initial: &[f64],
) -> Result<PdcRun> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h = {h}")));
    }
    if initial.len() != channels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial values for {} channels",
            initial.len(),
            channels.len()
        )));
    }
    if let Some(p) = packets
        .iter()
        .find(|p| !(p.arrival_time >= (p.stamp_index as f64 - 1e-9) * h))
    {
        return Err(Error::InvalidArgument(format!(
            "packet {}[{}] arrives at {} before it is generated",
            p.channel, p.stamp_index, p.arrival_time
        )));
    }
    let mut order: Vec<&PmuPacket> = packets.iter().collect();
    order.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
    let mut pending = order.into_iter().peekable();

    let mut buffer = PdcBuffer::new(channels);
    let mut log = Vec::new();
    let mut previous: Option<CompositeSample> = None;
    for step in first..=last {
        while let Some(p) = pending.next_if(|p| arrived_before(p.arrival_time, step, h)) {
            buffer.ingest(p);
        }
        match pdc_emit(&buffer, step, previous.as_ref()) {
            Ok(sample) => {
                buffer.prune_through(sample.source_stamp - 1);
                log.push(Emission::Sample(sample.clone()));
                previous = Some(sample);
            }
            Err(Error::ColdStart) => log.push(Emission::Cold {
                step,
                values: initial.to_vec(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(PdcRun {
        channels: channels.to_vec(),
        h,
        log,
        stats: buffer.stats(),
    })
}

/// Per-step delay in sampling steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySequence {
    pub entries: Vec<usize>,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: Option<u64>,
}

impl DelaySequence {
    pub fn new(entries: Vec<usize>, n_min: usize, n_max: usize, seed: Option<u64>) -> Result<Self> {
        if n_min > n_max || entries.iter().any(|&n| n < n_min || n > n_max) {
            return Err(Error::InvalidRange { n_min, n_max });
        }
        Ok(Self {
            entries,
            n_min,
            n_max,
            seed,
        })
    }

    pub fn constant(n: usize, len: usize) -> Self {
        Self {
            entries: vec![n; len],
            n_min: n,
            n_max: n,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Saturate into `[n_min, n_max]`; returns the sequence and how many entries moved.
    pub fn clipped(&self, n_min: usize, n_max: usize) -> Result<(DelaySequence, usize)> {
        if n_min > n_max {
            return Err(Error::InvalidRange { n_min, n_max });
        }
        let mut moved = 0;
        let entries = self
            .entries
            .iter()
            .map(|&n| {
                let c = n.clamp(n_min, n_max);
                moved += usize::from(c != n);
                c
            })
            .collect();
        Ok((
            DelaySequence {
                entries,
                n_min,
                n_max,
                seed: self.seed,
            },
            moved,
        ))
    }
}

/// `emitted_at - source_stamp` per warm emission; leading cold steps are skipped.
pub fn effective_delay_trace(log: &[Emission]) -> Result<DelaySequence> {
    if log.is_empty() {
        return Err(Error::InvalidArgument("empty emission log".into()));
    }
    let warm_start = log
        .iter()
        .position(|e| matches!(e, Emission::Sample(_)))
        .ok_or(Error::ColdStartGap)?;
    let entries = log[warm_start..]
        .iter()
        .map(|e| match e {
            Emission::Sample(s) => usize::try_from(s.effective_delay())
                .map_err(|_| Error::InvalidArgument(format!("negative delay at step {}", s.emitted_at))),
            Emission::Cold { .. } => Err(Error::ColdStartGap),
        })
        .collect::<Result<Vec<_>>>()?;
    let n_min = *entries.iter().min().expect("non-empty");
    let n_max = *entries.iter().max().expect("non-empty");
    Ok(DelaySequence {
        entries,
        n_min,
        n_max,
        seed: None,
    })
}

/// Total-delay model `tau_p + tau_c + tau_o`, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    /// PMU processing delay: normal, truncated at zero.
    pub pmu_mean: f64,
    pub pmu_std: f64,
    /// Network latency: fixed part plus an exponential tail with this mean.
    pub comm_fixed: f64,
    pub comm_exp_mean: f64,
    /// Controller-side processing delay.
    pub operational: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            pmu_mean: 0.02,
            pmu_std: 0.005,
            comm_fixed: 0.03,
            comm_exp_mean: 0.01,
            operational: 0.005,
        }
    }
}

impl LatencyModel {
    pub fn fixed(total: f64) -> Self {
        Self {
            pmu_mean: 0.0,
            pmu_std: 0.0,
            comm_fixed: total,
            comm_exp_mean: 0.0,
            operational: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            self.pmu_mean,
            self.pmu_std,
            self.comm_fixed,
            self.comm_exp_mean,
            self.operational,
        ];
        if fields.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "latency model needs finite non-negative parameters: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub channels: Vec<String>,
    /// Stamps `0..steps` are generated on every channel.
    pub steps: usize,
    pub h: f64,
    pub latency: LatencyModel,
    pub disorder_probability: f64,
    pub dropout_probability: f64,
    /// Extra delay of a disordered packet, drawn uniformly in this range of steps.
    pub disorder_extra_steps: (f64, f64),
    /// Frequency of the synthetic measured signal.
    pub signal_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            channels: vec!["A".into(), "B".into()],
            steps: 600,
            h: 0.02,
            latency: LatencyModel::default(),
            disorder_probability: 0.0,
            dropout_probability: 0.0,
            disorder_extra_steps: (1.0, 2.0),
            signal_hz: 0.67,
            seed: 0,
        }
    }
}

pub fn synth_packet_stream(spec: &SynthSpec) -> Result<Vec<PmuPacket>> {
    for p in [spec.disorder_probability, spec.dropout_probability] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    if !(spec.h > 0.0) {
        return Err(Error::InvalidArgument(format!("h = {}", spec.h)));
    }
    let (lo, hi) = spec.disorder_extra_steps;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument(format!("disorder range ({lo}, {hi})")));
    }
    let lat = spec.latency;
    lat.validate()?;
    let pmu = Normal::new(lat.pmu_mean, lat.pmu_std)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let comm_tail = (lat.comm_exp_mean > 0.0)
        .then(|| Exp::new(1.0 / lat.comm_exp_mean))
        .transpose()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let omega = 2.0 * std::f64::consts::PI * spec.signal_hz;
    let mut packets = Vec::with_capacity(spec.steps * spec.channels.len());
    for stamp in 0..spec.steps as i64 {
        let t = stamp as f64 * spec.h;
        for (ci, channel) in spec.channels.iter().enumerate() {
            // Every draw happens regardless of outcome so streams stay aligned across settings.
            let tau_p = pmu.sample(&mut rng).max(0.0);
            let tau_c = lat.comm_fixed + comm_tail.map_or(0.0, |d| d.sample(&mut rng));
            let disorder = rng.random::<f64>() < spec.disorder_probability;
            let extra = lo + (hi - lo) * rng.random::<f64>();
            let dropped = rng.random::<f64>() < spec.dropout_probability;
            if dropped {
                continue;
            }
            let mut arrival = t + tau_p + tau_c + lat.operational;
            if disorder {
                arrival += extra * spec.h;
            }
            packets.push(PmuPacket {
                channel: channel.clone(),
                stamp_index: stamp,
                value: (omega * t + ci as f64).sin(),
                arrival_time: arrival,
            });
        }
    }
    Ok(packets)
}

/// Packet trace file: either a bare packet list or an object with `h` and channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PacketTrace {
    Full {
        h: f64,
        channels: Vec<String>,
        packets: Vec<PmuPacket>,
    },
    Bare(Vec<PmuPacket>),
}

impl PacketTrace {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn packets(&self) -> &[PmuPacket] {
        match self {
            PacketTrace::Full { packets, .. } | PacketTrace::Bare(packets) => packets,
        }
    }

    pub fn h(&self) -> Option<f64> {
        match self {
            PacketTrace::Full { h, .. } => Some(*h),
            PacketTrace::Bare(_) => None,
        }
    }

    /// Declared channel order, or first-appearance order for bare traces.
    pub fn channels(&self) -> Vec<String> {
        match self {
            PacketTrace::Full { channels, .. } => channels.clone(),
            PacketTrace::Bare(packets) => {
                let mut seen: Vec<String> = Vec::new();
                for p in packets {
                    if !seen.contains(&p.channel) {
                        seen.push(p.channel.clone());
                    }
                }
                seen
            }
        }
    }
}

/// Two-PMU scenario covering normal flow, disorder and dropout (h = 1).
pub const TWO_PMU_TRACE: &str = include_str!("../data/two_pmu_scenario.json");

pub fn two_pmu_scenario() -> PacketTrace {
    PacketTrace::parse(TWO_PMU_TRACE).expect("bundled scenario parses")
}

/// CSV: step, source_stamp, held, effective_delay, one column per channel.
pub fn write_emission_csv<W: Write>(run: &PdcRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "step".to_string(),
        "source_stamp".into(),
        "held".into(),
        "effective_delay".into(),
    ];
    header.extend(run.channels.iter().cloned());
    w.write_record(&header)?;
    for e in &run.log {
        let mut row = match e {
            Emission::Cold { step, .. } => vec![step.to_string(), String::new(), "cold".into(), String::new()],
            Emission::Sample(s) => vec![
                s.emitted_at.to_string(),
                s.source_stamp.to_string(),
                s.held.to_string(),
                s.effective_delay().to_string(),
            ],
        };
        let values = match e {
            Emission::Cold { values, .. } => values,
            Emission::Sample(s) => &s.values,
        };
        row.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
