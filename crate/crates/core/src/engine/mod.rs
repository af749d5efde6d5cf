//! Monte Carlo simulation of the pulsed source, analyzers and detectors.
//!
//! Pulses are processed in fixed blocks of [`BLOCK_PULSES`]. Each block owns an
//! RNG stream derived from the run seed and the block index, so the output does
//! not depend on how blocks are spread across threads.

pub mod config;
pub mod events;

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal};
use rayon::prelude::*;

use crate::analytic::{Geometry, JointDistribution, Outcome, PhaseSetting, Port, JOINT_ENTRIES};
use crate::error::{invalid, Result};
use crate::pair_stats::PairNumberDistribution;

pub use config::{DetectorConfig, ExperimentConfig, PairSource};
pub use events::{DetectionEvent, Detector, EventStream, Origin, PairTally};

/// Pulses per RNG block.
pub const BLOCK_PULSES: u64 = 1 << 14;

/// Derives an independent seed for sub-run `index` of a scan.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(index))
}

/// Draws pair numbers per pulse.
#[derive(Clone, Debug)]
pub struct PairSampler {
    source: PairSource,
    cdf: Vec<f64>,
    gap: Option<Geometric>,
}

impl PairSampler {
    pub fn new(source: PairSource, mu: f64) -> Result<Self> {
        if source == PairSource::ExactlyOne {
            return Ok(Self {
                source,
                cdf: vec![0.0, 1.0],
                gap: Geometric::new(1.0).ok(),
            });
        }
        let dist = PairNumberDistribution::poisson(mu)?;
        let mut cdf: Vec<f64> = dist
            .probabilities()
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        let p_nonempty = 1.0 - cdf[0];
        let gap = if p_nonempty > 0.0 {
            Some(Geometric::new(p_nonempty).map_err(|e| invalid("mu", e.to_string()))?)
        } else {
            None
        };
        Ok(Self { source, cdf, gap })
    }

    fn invert(&self, u: f64) -> u32 {
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1) as u32
    }

    /// Pair number of a single pulse.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self.source {
            PairSource::ExactlyOne => 1,
            PairSource::Poisson => self.invert(rng.random::<f64>()),
        }
    }

    /// Pair number conditioned on being at least one.
    fn sample_nonempty<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self.source {
            PairSource::ExactlyOne => 1,
            PairSource::Poisson => {
                let p0 = self.cdf[0];
                self.invert(p0 + (1.0 - p0) * rng.random::<f64>()).max(1)
            }
        }
    }

    /// Empty pulses before the next non-empty one; `None` if no pulse ever
    /// carries a pair.
    fn skip<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        self.gap.as_ref().map(|g| g.sample(rng))
    }
}

/// Draws one pair number from a Poisson distribution with mean `mu`.
pub fn sample_pairs_per_pulse<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<u32> {
    Ok(PairSampler::new(PairSource::Poisson, mu)?.sample(rng))
}

/// Samples `(Alice slot, Bob slot)` outcomes from the joint distribution,
/// blended with the phase-averaged table to model an intrinsic visibility
/// below one.
#[derive(Clone, Debug)]
pub struct OutcomeSampler {
    cumulative: [f64; JOINT_ENTRIES],
}

impl OutcomeSampler {
    pub fn new(
        phases: &PhaseSetting,
        geometry: Geometry,
        intrinsic_visibility: f64,
    ) -> Result<Self> {
        if !phases.is_finite() {
            return Err(invalid("phases", "all phases must be finite"));
        }
        if !(0.0..=1.0).contains(&intrinsic_visibility) {
            return Err(invalid(
                "intrinsic_visibility",
                format!("{intrinsic_visibility} is outside [0, 1]"),
            ));
        }
        let coherent = JointDistribution::for_geometry(phases, geometry);
        let averaged = JointDistribution::phase_averaged(phases, geometry);
        let v = intrinsic_visibility;
        let mut cumulative = [0.0; JOINT_ENTRIES];
        let mut acc = 0.0;
        for (i, c) in cumulative.iter_mut().enumerate() {
            acc += v * coherent.probabilities()[i] + (1.0 - v) * averaged.probabilities()[i];
            *c = acc;
        }
        Ok(Self { cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let total = self.cumulative[JOINT_ENTRIES - 1];
        let u = rng.random::<f64>() * total;
        let idx = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| {
                // u landed on the total through rounding: take the last non-empty entry.
                (0..JOINT_ENTRIES)
                    .rev()
                    .find(|&i| i == 0 || self.cumulative[i] > self.cumulative[i - 1])
                    .unwrap()
            });
        Outcome::from_index(idx)
    }
}

/// Draws one outcome of a pair in the full interferometric geometry.
pub fn sample_pair_outcome<R: Rng + ?Sized>(phases: &PhaseSetting, rng: &mut R) -> Result<Outcome> {
    Ok(OutcomeSampler::new(phases, Geometry::FRANSON, 1.0)?.sample(rng))
}

/// Execution options that do not affect the physics.
#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Number of parallel work units. Output is identical for any value.
    pub chunks: usize,
    /// Keep the per-pulse pair numbers in [`EventStream::ground_truth`].
    pub record_ground_truth: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            chunks: rayon::current_num_threads(),
            record_ground_truth: true,
        }
    }
}

pub fn simulate_run(config: &ExperimentConfig) -> Result<EventStream> {
    simulate_run_with(config, &SimOptions::default())
}

pub fn simulate_run_with(config: &ExperimentConfig, options: &SimOptions) -> Result<EventStream> {
    config.validate()?;
    let model = Apparatus::new(config)?;
    let n_blocks = config.n_pulses.div_ceil(BLOCK_PULSES);
    let chunks = (options.chunks.max(1) as u64).min(n_blocks.max(1));
    let ranges: Vec<Range<u64>> = (0..chunks)
        .map(|k| (k * n_blocks / chunks)..((k + 1) * n_blocks / chunks))
        .collect();

    let parts: Vec<Chunk> = ranges
        .into_par_iter()
        .map(|r| model.run_chunk(r, n_blocks))
        .collect();

    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut tally = Vec::new();
    for part in parts {
        alice.extend(part.alice);
        bob.extend(part.bob);
        if options.record_ground_truth {
            tally.extend(part.tally);
        }
    }
    Ok(EventStream {
        config: config.clone(),
        events: model.finalize(alice, bob),
        ground_truth: options
            .record_ground_truth
            .then(|| PairTally::from_entries(tally)),
    })
}

/// Passes given pair outcomes through the channels and detectors, adding dark
/// counts over the whole run.
pub fn apply_channel_and_detectors<R: Rng + ?Sized>(
    outcomes: &[(u64, Outcome)],
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<EventStream> {
    config.validate()?;
    let model = Apparatus::new(config)?;
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut pairs: BTreeMap<u64, u32> = BTreeMap::new();
    for &(pulse, outcome) in outcomes {
        if pulse >= config.n_pulses {
            return Err(invalid(
                "outcomes",
                format!("pulse {pulse} is beyond n_pulses = {}", config.n_pulses),
            ));
        }
        *pairs.entry(pulse).or_default() += 1;
        model.detect_pair(pulse, outcome, rng, &mut alice, &mut bob);
    }
    let span = model.dark_span(0..config.n_pulses, config.n_pulses);
    model.darks(Detector::Alice, span.clone(), rng, &mut alice);
    model.darks(Detector::Bob, span, rng, &mut bob);
    Ok(EventStream {
        config: config.clone(),
        events: model.finalize(alice, bob),
        ground_truth: Some(PairTally::from_entries(pairs.into_iter().collect())),
    })
}

struct Arm {
    click: f64,
    delay: u64,
    jitter: Option<Normal<f64>>,
    dark: Option<Exp<f64>>,
    dead_time: u64,
}

impl Arm {
    fn new(d: &DetectorConfig) -> Result<Self> {
        let jitter = if d.jitter_ps > 0.0 {
            Some(Normal::new(0.0, d.jitter_ps).map_err(|e| invalid("jitter_ps", e.to_string()))?)
        } else {
            None
        };
        let rate = d.dark_rate_per_ps();
        let dark = if rate > 0.0 {
            Some(Exp::new(rate).map_err(|e| invalid("dark_rate", e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            click: d.transmission * d.efficiency,
            delay: d.delay_ps,
            jitter,
            dark,
            dead_time: d.dead_time_ps,
        })
    }
}

struct Apparatus {
    period: u64,
    separation: u64,
    n_pulses: u64,
    seed: u64,
    pairs: PairSampler,
    outcomes: OutcomeSampler,
    alice: Arm,
    bob: Arm,
    pass_a: f64,
    pass_b_twin_passed: f64,
    pass_b_twin_blocked: f64,
    gate: Option<(u64, u64)>,
    tail: u64,
}

struct Chunk {
    alice: Vec<DetectionEvent>,
    bob: Vec<DetectionEvent>,
    tally: Vec<(u64, u32)>,
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

impl Apparatus {
    fn new(c: &ExperimentConfig) -> Result<Self> {
        let gate = c
            .bob
            .gated
            .then(|| (c.gate_offset_ps() as u64, c.bob.gate_width_ps));
        let jitter_reach = 8.0 * c.alice.jitter_ps.max(c.bob.jitter_ps);
        let tail = c.alice.delay_ps.max(c.bob.delay_ps)
            + 2 * c.bin_separation_ps
            + gate.map_or(0, |(o, w)| o + w)
            + jitter_reach.ceil() as u64;
        Ok(Self {
            period: c.pulse_period_ps,
            separation: c.bin_separation_ps,
            n_pulses: c.n_pulses,
            seed: c.seed,
            pairs: PairSampler::new(c.pair_source, c.mu)?,
            outcomes: OutcomeSampler::new(&c.phases, c.geometry(), c.intrinsic_visibility)?,
            alice: Arm::new(&c.alice)?,
            bob: Arm::new(&c.bob)?,
            pass_a: c.alice.filter_pass,
            pass_b_twin_passed: c.bob.filter_pass_given_twin,
            pass_b_twin_blocked: c
                .bob_filter_pass_given_twin_blocked()
                .unwrap_or(c.bob.filter_pass)
                .clamp(0.0, 1.0),
            gate,
            tail,
        })
    }

    fn photon_time<R: Rng + ?Sized>(&self, arm: &Arm, pulse: u64, bin: u8, rng: &mut R) -> u64 {
        let t = pulse * self.period + bin as u64 * self.separation + arm.delay;
        match &arm.jitter {
            Some(n) => (t as f64 + n.sample(rng)).round().max(0.0) as u64,
            None => t,
        }
    }

    fn detect_pair<R: Rng + ?Sized>(
        &self,
        pulse: u64,
        outcome: Outcome,
        rng: &mut R,
        alice: &mut Vec<DetectionEvent>,
        bob: &mut Vec<DetectionEvent>,
    ) {
        let passed_a = bernoulli(rng, self.pass_a);
        let p_b = if passed_a {
            self.pass_b_twin_passed
        } else {
            self.pass_b_twin_blocked
        };
        let passed_b = bernoulli(rng, p_b);
        if passed_a && outcome.alice.port == Port::Minus && bernoulli(rng, self.alice.click) {
            alice.push(DetectionEvent {
                time_ps: self.photon_time(&self.alice, pulse, outcome.alice.bin, rng),
                detector: Detector::Alice,
                origin: Origin::Photon,
                pulse_index: pulse,
                bin_index: Some(outcome.alice.bin),
            });
        }
        if passed_b && outcome.bob.port == Port::Minus && bernoulli(rng, self.bob.click) {
            bob.push(DetectionEvent {
                time_ps: self.photon_time(&self.bob, pulse, outcome.bob.bin, rng),
                detector: Detector::Bob,
                origin: Origin::Photon,
                pulse_index: pulse,
                bin_index: Some(outcome.bob.bin),
            });
        }
    }

    /// Time interval whose dark counts belong to the given pulses. The last
    /// pulse range extends past the final pulse so open gates still see noise.
    fn dark_span(&self, pulses: Range<u64>, n_pulses: u64) -> Range<u64> {
        let start = pulses.start * self.period;
        let mut end = pulses.end * self.period;
        if pulses.end >= n_pulses {
            end += self.tail;
        }
        start..end
    }

    fn darks<R: Rng + ?Sized>(
        &self,
        detector: Detector,
        span: Range<u64>,
        rng: &mut R,
        out: &mut Vec<DetectionEvent>,
    ) {
        let arm = match detector {
            Detector::Alice => &self.alice,
            Detector::Bob => &self.bob,
        };
        let Some(exp) = &arm.dark else { return };
        let mut t = span.start as f64;
        loop {
            t += exp.sample(rng);
            if t >= span.end as f64 {
                break;
            }
            let time_ps = t as u64;
            out.push(DetectionEvent {
                time_ps,
                detector,
                origin: Origin::Dark,
                pulse_index: time_ps.saturating_sub(arm.delay) / self.period,
                bin_index: None,
            });
        }
    }

    fn generate_block(&self, index: u64) -> Chunk {
        let first = index * BLOCK_PULSES;
        let end = (first + BLOCK_PULSES).min(self.n_pulses);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);

        let mut alice = Vec::new();
        let mut bob = Vec::new();
        let mut tally = Vec::new();
        let mut pulse = first;
        while let Some(skip) = self.pairs.skip(&mut rng) {
            pulse = pulse.saturating_add(skip);
            if pulse >= end {
                break;
            }
            let n = self.pairs.sample_nonempty(&mut rng);
            tally.push((pulse, n));
            for _ in 0..n {
                let outcome = self.outcomes.sample(&mut rng);
                self.detect_pair(pulse, outcome, &mut rng, &mut alice, &mut bob);
            }
            pulse += 1;
        }
        let span = self.dark_span(first..end, self.n_pulses);
        self.darks(Detector::Alice, span.clone(), &mut rng, &mut alice);
        self.darks(Detector::Bob, span, &mut rng, &mut bob);
        alice.sort_by_key(|e| e.time_ps);
        bob.sort_by_key(|e| e.time_ps);
        Chunk { alice, bob, tally }
    }

    /// Simulates a contiguous range of blocks. Bob's clicks are pre-filtered
    /// against gates opened by raw Alice clicks of the neighbouring blocks,
    /// which keeps memory proportional to the number of gates.
    fn run_chunk(&self, blocks: Range<u64>, n_blocks: u64) -> Chunk {
        let empty = || Chunk {
            alice: Vec::new(),
            bob: Vec::new(),
            tally: Vec::new(),
        };
        let generate = |b: u64| {
            if b < n_blocks {
                self.generate_block(b)
            } else {
                empty()
            }
        };
        let mut out = empty();
        if blocks.is_empty() {
            return out;
        }
        let mut prev = match blocks.start.checked_sub(1) {
            Some(b) if self.gate.is_some() => generate(b),
            _ => empty(),
        };
        let mut cur = generate(blocks.start);
        let last = blocks.end;
        for b in blocks {
            let next = if self.gate.is_some() || b + 1 < last {
                generate(b + 1)
            } else {
                empty()
            };
            let bob = match self.gate {
                Some((offset, width)) => {
                    let mut starts: Vec<u64> = prev
                        .alice
                        .iter()
                        .chain(&cur.alice)
                        .chain(&next.alice)
                        .map(|e| e.time_ps)
                        .collect();
                    starts.sort_unstable();
                    gate_filter(std::mem::take(&mut cur.bob), &starts, offset, width)
                }
                None => std::mem::take(&mut cur.bob),
            };
            out.alice.extend_from_slice(&cur.alice);
            out.bob.extend(bob);
            out.tally.append(&mut cur.tally);
            prev = cur;
            cur = next;
        }
        out
    }

    fn finalize(
        &self,
        mut alice: Vec<DetectionEvent>,
        mut bob: Vec<DetectionEvent>,
    ) -> Vec<DetectionEvent> {
        alice.sort_by_key(|e| e.time_ps);
        let alice = detector_response(alice, self.alice.dead_time);
        bob.sort_by_key(|e| e.time_ps);
        bob.dedup_by_key(|e| e.time_ps);
        if let Some((offset, width)) = self.gate {
            let starts: Vec<u64> = alice.iter().map(|e| e.time_ps).collect();
            bob = gate_filter(bob, &starts, offset, width);
        }
        let bob = detector_response(bob, self.bob.dead_time);
        let mut events = alice;
        events.extend(bob);
        events.sort_by_key(|e| (e.time_ps, e.detector));
        events
    }
}

/// Keeps events inside any gate `[start + offset, start + offset + width)`.
fn gate_filter(
    events: Vec<DetectionEvent>,
    starts: &[u64],
    offset: u64,
    width: u64,
) -> Vec<DetectionEvent> {
    events
        .into_iter()
        .filter(|e| {
            let k = starts.partition_point(|&s| s + offset <= e.time_ps);
            k > 0 && e.time_ps < starts[k - 1] + offset + width
        })
        .collect()
}

/// Non-photon-number-resolving detector: coincident clicks merge, and a
/// click blinds the detector for the dead time.
fn detector_response(events: Vec<DetectionEvent>, dead_time: u64) -> Vec<DetectionEvent> {
    let mut out: Vec<DetectionEvent> = Vec::with_capacity(events.len());
    for e in events {
        match out.last() {
            Some(last) if e.time_ps == last.time_ps => continue,
            Some(last) if e.time_ps < last.time_ps + dead_time => continue,
            _ => out.push(e),
        }
    }
    out
}
