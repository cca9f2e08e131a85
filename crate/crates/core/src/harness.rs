//! Trajectory execution and ensemble statistics.
//!
//! Each trajectory is driven by the five streams of [`crate::rng::Streams`]
//! keyed by `(master_seed, sample_index)`, so a sample is reproducible in
//! isolation and the ensemble is independent of scheduling. Ensembles run
//! on a rayon pool whose size comes from [`worker_count`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::BitState;
use crate::config::{ConfigError, ExperimentConfig, InitPolicy, Mode, Observable};
use crate::control::{control_step, ControlOutcome};
use crate::dynamics::{chaotic_step, sample_perturb_site, sample_permutation, ChaoticStepSpec};
use crate::hilbert::{format_config, sample_uniform_bits, FibBasis, HilbertError};
use crate::observables::{ancilla_entropy, h_zz, half_chain_entropy, make_ancilla_joint, tripartite_mutual_information, z_profile};
use crate::rng::Streams;
use crate::statevec::{PureState, StateError};

/// Environment variable overriding the worker pool size.
pub const WORKERS_ENV: &str = "PXPCTL_WORKERS";

/// Largest tolerated `| ‖ψ‖² − 1 |` at a recording time.
pub const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("sample {sample}, step {step}: {source}")]
    Trajectory {
        sample: u64,
        step: usize,
        #[source]
        source: StateError,
    },
    #[error("sample {sample}, step {step}: norm drifted to {norm_sqr}")]
    NormDrift { sample: u64, step: usize, norm_sqr: f64 },
    #[error("sample {sample}, step {step}: observable {observable} returned {value}")]
    NonFinite { sample: u64, step: usize, observable: Observable, value: f64 },
    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("record {index} has a different time grid or observable set")]
    Misaligned { index: usize },
    #[error("observable {0} was not recorded")]
    NotRecorded(Observable),
    #[error("t = {t} lies outside the recorded span [{lo}, {hi}]")]
    Extrapolation { t: f64, lo: f64, hi: f64 },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One scalar observable sampled along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub observable: Observable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub sample_index: u64,
    pub master_seed: u64,
    /// Initial bitstring (site 1 first); empty for ancilla-joint starts.
    pub initial: String,
    /// One character per step: `U` chaotic, `C` control.
    pub circuit: String,
    pub times: Vec<usize>,
    pub series: Vec<Series>,
    /// `<Z_j>` rows, one per recorded time, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_profile: Option<Vec<Vec<f64>>>,
}

impl TrajectoryRecord {
    pub fn series(&self, o: Observable) -> Option<&[f64]> {
        self.series.iter().find(|s| s.observable == o).map(|s| s.values.as_slice())
    }

    pub fn control_steps(&self) -> usize {
        self.circuit.bytes().filter(|&c| c == b'C').count()
    }
}

/// The operations a trajectory needs from a simulation engine.
trait Engine {
    fn chaotic(&mut self, theta: f64, perturb: bool, streams: &mut Streams);
    fn control(&mut self, q: f64, streams: &mut Streams) -> Result<ControlOutcome, StateError>;
    fn observe(&self, o: Observable) -> f64;
    fn z_profile(&self) -> Vec<f64>;
    fn norm_sqr(&self) -> f64;
}

impl Engine for PureState<f64> {
    fn chaotic(&mut self, theta: f64, perturb: bool, streams: &mut Streams) {
        chaotic_step(self, &ChaoticStepSpec { theta, perturb }, &mut streams.circuit);
    }

    fn control(&mut self, q: f64, streams: &mut Streams) -> Result<ControlOutcome, StateError> {
        control_step(self, q, &mut streams.site, &mut streams.measurement)
    }

    fn observe(&self, o: Observable) -> f64 {
        match o {
            Observable::Hzz => h_zz(self),
            Observable::Sa => half_chain_entropy(self),
            Observable::Tmi => tripartite_mutual_information(self).expect("validated L"),
            Observable::Sanc => ancilla_entropy(self).expect("validated init"),
            Observable::Zprofile => unreachable!("profile is recorded separately"),
        }
    }

    fn z_profile(&self) -> Vec<f64> {
        z_profile(self)
    }

    fn norm_sqr(&self) -> f64 {
        PureState::norm_sqr(self)
    }
}

impl Engine for BitState {
    fn chaotic(&mut self, _theta: f64, perturb: bool, streams: &mut Streams) {
        self.ca_upxp();
        let sigma = sample_permutation(self.l(), &mut streams.circuit);
        self.ca_usigma(&sigma);
        if perturb {
            let s = sample_perturb_site(self.l(), &mut streams.circuit);
            self.pxp_flip(s);
        }
    }

    fn control(&mut self, q: f64, streams: &mut Streams) -> Result<ControlOutcome, StateError> {
        Ok(self.ca_control_step(q, &mut streams.site))
    }

    fn observe(&self, o: Observable) -> f64 {
        match o {
            Observable::Hzz => self.h_zz(),
            // Product states carry no entanglement.
            Observable::Sa | Observable::Tmi => 0.0,
            Observable::Sanc => unreachable!("rejected by validation"),
            Observable::Zprofile => unreachable!("profile is recorded separately"),
        }
    }

    fn z_profile(&self) -> Vec<f64> {
        BitState::z_profile(self)
    }

    fn norm_sqr(&self) -> f64 {
        1.0
    }
}

/// A validated configuration with its shared basis.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    basis: Option<Arc<FibBasis>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let basis = match config.mode {
            Mode::Quantum => Some(Arc::new(FibBasis::enumerate(config.l)?)),
            Mode::Classical => None,
        };
        Ok(Self { config, basis })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_trajectory(&self, sample_index: u64) -> Result<TrajectoryRecord, HarnessError> {
        let c = &self.config;
        let mut streams = Streams::new(c.master_seed, sample_index);
        let bits: Option<Vec<bool>> = match &c.init {
            InitPolicy::RandomCb => Some(sample_uniform_bits(c.l, &mut streams.init)?),
            InitPolicy::Explicit(s) => Some(s.bytes().map(|b| b == b'1').collect()),
            InitPolicy::AncillaJoint => None,
        };
        let trajectory_err = |e| HarnessError::Trajectory { sample: sample_index, step: 0, source: e };
        match (c.mode, bits) {
            (Mode::Classical, Some(bits)) => {
                let state = BitState::from_bits(&bits);
                let initial = state.to_bit_string();
                self.drive(state, initial, sample_index, streams)
            }
            (Mode::Classical, None) => unreachable!("rejected by validation"),
            (Mode::Quantum, bits) => {
                let basis = self.basis.clone().expect("quantum basis");
                match bits {
                    Some(bits) => {
                        let cfg = bits.iter().rev().fold(0u64, |acc, &b| acc << 1 | b as u64);
                        let state = PureState::basis_state(basis, cfg).map_err(trajectory_err)?;
                        self.drive(state, format_config(cfg, c.l), sample_index, streams)
                    }
                    None => {
                        let state = make_ancilla_joint(basis, &mut streams.init);
                        self.drive(state, String::new(), sample_index, streams)
                    }
                }
            }
        }
    }

    fn drive<E: Engine>(
        &self,
        mut engine: E,
        initial: String,
        sample_index: u64,
        mut streams: Streams,
    ) -> Result<TrajectoryRecord, HarnessError> {
        let c = &self.config;
        let t_max = c.steps();
        let times = c.record_times();
        let scalars: Vec<Observable> = c.observables.iter().copied().filter(|&o| o != Observable::Zprofile).collect();
        let want_profile = c.observables.contains(&Observable::Zprofile);
        let mut series: Vec<Series> =
            scalars.iter().map(|&o| Series { observable: o, values: Vec::with_capacity(times.len()) }).collect();
        let mut profile = want_profile.then(|| Vec::with_capacity(times.len()));
        let mut circuit = String::with_capacity(t_max);
        let mut next = 0;

        for t in 0..=t_max {
            if t > 0 {
                if streams.coin.random::<f64>() < c.p {
                    engine
                        .control(c.q, &mut streams)
                        .map_err(|e| HarnessError::Trajectory { sample: sample_index, step: t, source: e })?;
                    circuit.push('C');
                } else {
                    engine.chaotic(c.theta, c.perturb, &mut streams);
                    circuit.push('U');
                }
            }
            if times.get(next) != Some(&t) {
                continue;
            }
            next += 1;
            let n = engine.norm_sqr();
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(HarnessError::NormDrift { sample: sample_index, step: t, norm_sqr: n });
            }
            for s in &mut series {
                let v = engine.observe(s.observable);
                if !v.is_finite() {
                    return Err(HarnessError::NonFinite { sample: sample_index, step: t, observable: s.observable, value: v });
                }
                s.values.push(v);
            }
            if let Some(rows) = profile.as_mut() {
                rows.push(engine.z_profile());
            }
        }
        Ok(TrajectoryRecord {
            sample_index,
            master_seed: c.master_seed,
            initial,
            circuit,
            times,
            series,
            z_profile: profile,
        })
    }

    /// All samples `0..n_samples`, in index order regardless of scheduling.
    pub fn run_ensemble(&self, workers: usize) -> Result<Vec<TrajectoryRecord>, HarnessError> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        pool.install(|| (0..self.config.n_samples as u64).into_par_iter().map(|i| self.run_trajectory(i)).collect())
    }
}

/// Convenience wrapper building the basis on every call.
pub fn run_trajectory(config: &ExperimentConfig, sample_index: u64) -> Result<TrajectoryRecord, HarnessError> {
    Experiment::new(config.clone())?.run_trajectory(sample_index)
}

/// Worker count: `PXPCTL_WORKERS` if set and positive, else the number of
/// available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSeries {
    pub observable: Observable,
    pub times: Vec<usize>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub n: usize,
}

/// Sum with a fixed binary tree, so the result depends only on the order of
/// the input.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Mean and standard error of the mean: the standard deviation of the
/// sample values (normalized by `n`) over `√n`.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / n;
    (mean, (var / n).sqrt())
}

pub fn aggregate(records: &[TrajectoryRecord], observable: Observable) -> Result<AggregatedSeries, HarnessError> {
    if records.len() < 2 {
        return Err(HarnessError::TooFewRecords { need: 2, got: records.len() });
    }
    let times = records[0].times.clone();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(records.len()); times.len()];
    for (index, r) in records.iter().enumerate() {
        let s = r.series(observable).ok_or(HarnessError::NotRecorded(observable))?;
        if r.times != times || s.len() != times.len() {
            return Err(HarnessError::Misaligned { index });
        }
        for (col, &v) in columns.iter_mut().zip(s) {
            col.push(v);
        }
    }
    let (mean, sem) = columns.iter().map(|c| mean_sem(c)).unzip();
    Ok(AggregatedSeries { observable, times, mean, sem, n: records.len() })
}

/// Linear interpolation of the mean, and of the error bar, at a possibly
/// non-integer time inside the recorded span.
pub fn interpolate_at(series: &AggregatedSeries, t_star: f64) -> Result<(f64, f64), HarnessError> {
    let ts = &series.times;
    let (lo, hi) = (ts[0] as f64, *ts.last().expect("nonempty grid") as f64);
    if !(lo..=hi).contains(&t_star) {
        return Err(HarnessError::Extrapolation { t: t_star, lo, hi });
    }
    let k = ts.partition_point(|&t| (t as f64) <= t_star);
    if k > 0 && ts[k - 1] as f64 == t_star {
        return Ok((series.mean[k - 1], series.sem[k - 1]));
    }
    let (t0, t1) = (ts[k - 1] as f64, ts[k] as f64);
    let w = (t_star - t0) / (t1 - t0);
    let lerp = |a: f64, b: f64| a + w * (b - a);
    Ok((lerp(series.mean[k - 1], series.mean[k]), lerp(series.sem[k - 1], series.sem[k])))
}
