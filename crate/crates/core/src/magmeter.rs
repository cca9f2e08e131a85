//! Gate-level collective magnetization measurement through an ancilla
//! register.
//!
//! `N = ⌈log₂(L+1)⌉` ancillas start in `|+>^N`, the Fourier state of count
//! zero. Controlled phases `R_m(i, m)` with angle `2π/2^m` between system
//! qubit `i` and ancilla `m` add `q_i` to the Fourier count, an inverse QFT
//! turns the count into binary, and single-ancilla Z readouts reveal it.
//!
//! Conventions: ancilla `j` (1-based) carries phase `e^{2πiQ/2^j}` and,
//! after the inverse QFT, holds bit `j-1` of the count. Readout goes from
//! ancilla `N` (most significant) down to ancilla 1.
//!
//! Text export: one gate per line, `CP m i j` (system site `i` and ancilla
//! `j`, both 1-based) followed by a single `IQFT` line.

use std::fmt::Write as _;

use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;
use crate::statevec::{PureState, StateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagGate {
    /// Phase `2π/2^m` on `|1>_system |1>_ancilla`.
    ControlledPhase { m: u32, system: usize, ancilla: u32 },
    /// Inverse QFT over the whole ancilla register.
    Iqft,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MagCircuit {
    sites: Vec<usize>,
    n_ancilla: u32,
    gates: Vec<MagGate>,
}

/// `⌈log₂(n+1)⌉`.
pub fn ancilla_count(n: usize) -> u32 {
    usize::BITS - n.leading_zeros()
}

impl MagCircuit {
    /// Counts 1s on system sites `0..l`.
    pub fn new(l: usize) -> Self {
        Self::for_sites((0..l).collect())
    }

    /// Counts 1s on the given 0-based system sites only.
    pub fn for_sites(sites: Vec<usize>) -> Self {
        assert!(!sites.is_empty(), "need at least one counted site");
        let n_ancilla = ancilla_count(sites.len());
        let mut gates = Vec::with_capacity(sites.len() * n_ancilla as usize + 1);
        for &i in &sites {
            for m in 1..=n_ancilla {
                gates.push(MagGate::ControlledPhase { m, system: i, ancilla: m });
            }
        }
        gates.push(MagGate::Iqft);
        Self { sites, n_ancilla, gates }
    }

    pub fn n_ancilla(&self) -> u32 {
        self.n_ancilla
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn gates(&self) -> &[MagGate] {
        &self.gates
    }

    /// Controlled phases in the counting block (excludes the IQFT).
    pub fn umag_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, MagGate::ControlledPhase { .. })).count()
    }

    pub fn export(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            match g {
                MagGate::ControlledPhase { m, system, ancilla } => {
                    writeln!(out, "CP {m} {} {ancilla}", system + 1).unwrap()
                }
                MagGate::Iqft => writeln!(out, "IQFT").unwrap(),
            }
        }
        out
    }

    /// Number of counted sites set in `config`.
    pub fn count(&self, config: u64) -> usize {
        self.sites.iter().filter(|&&s| (config >> s) & 1 == 1).count()
    }
}

/// System amplitudes tensored with the ancilla register, index
/// `k * 2^N + a` where bit `j-1` of `a` is ancilla `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AncillaRegisterState<T> {
    configs: Vec<u64>,
    n_ancilla: u32,
    amps: Vec<Complex<T>>,
}

impl<T: Real> AncillaRegisterState<T> {
    /// Attaches a register in `|+>^N`.
    pub fn attach(configs: &[u64], system: &[Complex<T>], n_ancilla: u32) -> Self {
        let width = 1usize << n_ancilla;
        let scale = T::one() / T::lit(width as f64).sqrt();
        let amps = system.iter().flat_map(|&z| std::iter::repeat_n(z * scale, width)).collect();
        Self { configs: configs.to_vec(), n_ancilla, amps }
    }

    fn width(&self) -> usize {
        1 << self.n_ancilla
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Phase `angle` on every amplitude where the predicate holds.
    fn phase_where<F: Fn(u64, usize) -> bool>(&mut self, angle: T, pred: F) {
        let w = self.width();
        let ph = Complex::from_polar(T::one(), angle);
        for (idx, z) in self.amps.iter_mut().enumerate() {
            if pred(self.configs[idx / w], idx % w) {
                *z = *z * ph;
            }
        }
    }

    /// Hadamard on 1-based ancilla `j`.
    fn hadamard(&mut self, j: u32) {
        let w = self.width();
        let bitm = 1usize << (j - 1);
        let r = T::one() / T::lit(2.0).sqrt();
        for base in (0..self.amps.len()).step_by(w) {
            for a in (0..w).filter(|a| a & bitm == 0) {
                let (x, y) = (self.amps[base + a], self.amps[base + (a | bitm)]);
                self.amps[base + a] = (x + y) * r;
                self.amps[base + (a | bitm)] = (x - y) * r;
            }
        }
    }

    pub fn apply(&mut self, gate: MagGate) {
        let two_pi = T::lit(2.0) * T::PI();
        match gate {
            MagGate::ControlledPhase { m, system, ancilla } => {
                let angle = two_pi / T::lit((1u64 << m) as f64);
                let am = 1usize << (ancilla - 1);
                self.phase_where(angle, |c, a| (c >> system) & 1 == 1 && a & am != 0);
            }
            MagGate::Iqft => {
                for j in 1..=self.n_ancilla {
                    for k in 1..j {
                        let angle = -two_pi / T::lit((1u64 << (j - k + 1)) as f64);
                        let mask = (1usize << (j - 1)) | (1usize << (k - 1));
                        self.phase_where(angle, |_, a| a & mask == mask);
                    }
                    self.hadamard(j);
                }
            }
        }
    }

    /// Exact distribution of the binary register readout.
    pub fn readout_distribution(&self) -> Vec<T> {
        let w = self.width();
        let mut p = vec![T::zero(); w];
        for (idx, z) in self.amps.iter().enumerate() {
            p[idx % w] += z.norm_sqr();
        }
        p
    }

    /// Normalized system state conditioned on register value `a`.
    pub fn system_given(&self, a: usize) -> Option<Vec<Complex<T>>> {
        let w = self.width();
        let col: Vec<Complex<T>> = (0..self.configs.len()).map(|k| self.amps[k * w + a]).collect();
        let n: T = col.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        (n > T::zero()).then(|| col.into_iter().map(|z| z / n).collect())
    }

    /// Projective Z readout of 1-based ancilla `j`, with the same
    /// certain-outcome rule as the state-vector engine.
    fn measure_ancilla<R: Rng + ?Sized>(&mut self, j: u32, rng: &mut R) -> u8 {
        let w = self.width();
        let bitm = 1usize << (j - 1);
        let p1: T = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| (i % w) & bitm != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        let total = self.norm_sqr();
        let p1 = p1 / total;
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(10.0));
        let outcome = if p1 <= tol {
            0
        } else if p1 >= T::one() - tol {
            1
        } else {
            (T::lit(rng.random::<f64>()) < p1) as u8
        };
        let p = if outcome == 1 { p1 } else { T::one() - p1 };
        let scale = T::one() / (p * total).sqrt();
        for (i, z) in self.amps.iter_mut().enumerate() {
            let here = (((i % w) & bitm) != 0) as u8;
            *z = if here == outcome { *z * scale } else { Complex::new(T::zero(), T::zero()) };
        }
        outcome
    }
}

/// Runs the full circuit on `system` (amplitudes over `configs`) and returns
/// the count `n` together with the collapsed system state.
pub fn measure_via_ancilla<T: Real, R: Rng + ?Sized>(
    configs: &[u64],
    system: &[Complex<T>],
    circuit: &MagCircuit,
    rng: &mut R,
) -> (usize, Vec<Complex<T>>) {
    let mut reg = AncillaRegisterState::attach(configs, system, circuit.n_ancilla);
    for &g in &circuit.gates {
        reg.apply(g);
    }
    let mut n = 0usize;
    for j in (1..=circuit.n_ancilla).rev() {
        n |= (reg.measure_ancilla(j, rng) as usize) << (j - 1);
    }
    let post = reg.system_given(n).expect("realized outcome has weight");
    (n, post)
}

/// Collective measurement of `M_even`, then `M_odd`, through two ancilla
/// registers. Returns the magnetizations `m = 2n - L/2`.
pub fn measure_sublattices_via_ancilla<T: Real, R: Rng + ?Sized>(
    state: &mut PureState<T>,
    rng: &mut R,
) -> Result<(i64, i64), StateError> {
    assert!(!state.has_ancilla(), "ancilla-attached states use the direct backend");
    let l = state.l();
    let basis = state.basis().clone();
    let mut ms = [0i64; 2];
    for (slot, parity) in [(0usize, 1usize), (1, 0)] {
        let circuit = MagCircuit::for_sites((parity..l).step_by(2).collect());
        let (n, post) = measure_via_ancilla(basis.states(), state.block(0), &circuit, rng);
        *state = PureState::from_amplitudes(basis.clone(), post)?;
        ms[slot] = 2 * n as i64 - (l / 2) as i64;
    }
    Ok((ms[0], ms[1]))
}

/// Outcome of [`verify_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub l: usize,
    pub trials: usize,
    pub max_probability_deviation: f64,
    pub min_fidelity: f64,
    pub failures: Vec<String>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const PROBABILITY_TOLERANCE: f64 = 1e-10;
pub const FIDELITY_TOLERANCE: f64 = 1e-10;

/// Compares, without sampling, the register readout distribution and the
/// conditional post-measurement states against the direct projector
/// `P_n` on the full `2^L` qubit space.
pub fn check_state(configs: &[u64], psi: &[Complex<f64>], circuit: &MagCircuit) -> (f64, f64) {
    let mut reg = AncillaRegisterState::attach(configs, psi, circuit.n_ancilla);
    for &g in &circuit.gates {
        reg.apply(g);
    }
    let via = reg.readout_distribution();
    let mut direct = vec![0.0; via.len()];
    for (&c, z) in configs.iter().zip(psi) {
        direct[circuit.count(c)] += z.norm_sqr();
    }
    let max_dev = via.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut min_fid = 1.0f64;
    for (n, &p) in direct.iter().enumerate() {
        if p < 1e-12 {
            continue;
        }
        let proj: Vec<Complex<f64>> = configs
            .iter()
            .zip(psi)
            .map(|(&c, &z)| if circuit.count(c) == n { z / p.sqrt() } else { Complex::new(0.0, 0.0) })
            .collect();
        let fid = match reg.system_given(n) {
            Some(post) => proj.iter().zip(&post).map(|(a, b)| a.conj() * b).sum::<Complex<f64>>().norm_sqr(),
            None => 0.0,
        };
        min_fid = min_fid.min(fid);
    }
    (max_dev, min_fid)
}

/// Random-state sweep of [`check_state`] for an `l`-qubit register.
pub fn verify_equivalence(l: usize, n_trials: usize, seed: u64) -> EquivalenceReport {
    assert!((1..=10).contains(&l), "verification supports 1 <= L <= 10");
    let circuit = MagCircuit::new(l);
    let configs: Vec<u64> = (0..1u64 << l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        EquivalenceReport { l, trials: n_trials, max_probability_deviation: 0.0, min_fidelity: 1.0, failures: vec![] };
    for trial in 0..n_trials {
        let mut psi: Vec<Complex<f64>> = configs
            .iter()
            .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        let (dev, fid) = check_state(&configs, &psi, &circuit);
        report.max_probability_deviation = report.max_probability_deviation.max(dev);
        report.min_fidelity = report.min_fidelity.min(fid);
        if dev >= PROBABILITY_TOLERANCE || fid < 1.0 - FIDELITY_TOLERANCE {
            report.failures.push(format!("trial {trial}: deviation {dev:e}, fidelity {fid}, state {psi:?}"));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{m_even, m_odd};
    use crate::hilbert::FibBasis;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    type C = Complex<f64>;

    #[test]
    fn register_sizes() {
        assert_eq!(MagCircuit::new(7).n_ancilla(), 3);
        assert_eq!(MagCircuit::new(4).n_ancilla(), 3);
        assert_eq!(MagCircuit::new(1).n_ancilla(), 1);
        assert_eq!(MagCircuit::new(8).n_ancilla(), 4);
        let c = MagCircuit::new(7);
        assert_eq!(c.umag_gate_count(), 21);
        assert!(c.gates().iter().all(|g| match g {
            MagGate::ControlledPhase { m, .. } => (1..=3).contains(m),
            MagGate::Iqft => true,
        }));
    }

    #[test]
    fn export_format() {
        let text = MagCircuit::new(2).export();
        assert_eq!(text, "CP 1 1 1\nCP 2 1 2\nCP 1 2 1\nCP 2 2 2\nIQFT\n");
    }

    #[test]
    fn vacuum_reads_zero() {
        let configs: Vec<u64> = (0..128).collect();
        let mut psi = vec![C::new(0.0, 0.0); 128];
        psi[0] = C::new(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (n, post) = measure_via_ancilla(&configs, &psi, &MagCircuit::new(7), &mut rng);
        assert_eq!(n, 0);
        assert!((post[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_component_superposition() {
        let configs: Vec<u64> = (0..16).collect();
        let mut psi = vec![C::new(0.0, 0.0); 16];
        psi[0b0000] = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[0b1010] = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); // "0101"
        let circuit = MagCircuit::new(4);
        let mut counts = BTreeMap::new();
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, post) = measure_via_ancilla(&configs, &psi, &circuit, &mut rng);
            let expect = if n == 0 { 0b0000 } else { 0b1010 };
            assert!(n == 0 || n == 2);
            assert!((post[expect].norm() - 1.0).abs() < 1e-12);
            *counts.entry(n).or_insert(0) += 1;
        }
        assert!(counts[&0] > 150 && counts[&2] > 150, "{counts:?}");
    }

    #[test]
    fn small_registers_match_direct_projection() {
        for l in 1..=5 {
            let r = verify_equivalence(l, 20, l as u64);
            assert!(r.passed(), "{:?}", r.failures.first());
        }
    }

    #[test]
    fn basis_inputs_give_certain_readout() {
        let l = 6;
        let configs: Vec<u64> = (0..1 << l).collect();
        let circuit = MagCircuit::new(l);
        for k in 0..configs.len() {
            let mut psi = vec![C::new(0.0, 0.0); configs.len()];
            psi[k] = C::new(1.0, 0.0);
            let mut reg = AncillaRegisterState::attach(&configs, &psi, circuit.n_ancilla());
            for &g in circuit.gates() {
                reg.apply(g);
            }
            for (a, p) in reg.readout_distribution().into_iter().enumerate() {
                let expect = if a == (k as u64).count_ones() as usize { 1.0 } else { 0.0 };
                assert!((p - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sublattice_backend_matches_direct_distribution() {
        let l = 8;
        let basis = Arc::new(FibBasis::enumerate(l).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let psi = PureState::<f64>::random(basis.clone(), &mut rng);
        let exact = psi.outcome_probabilities(|c| m_even(c, l) * 100 + m_odd(c, l));
        let n = 6000;
        let mut seen: BTreeMap<i64, usize> = BTreeMap::new();
        for _ in 0..n {
            let mut s = psi.clone();
            let (me, mo) = measure_sublattices_via_ancilla(&mut s, &mut rng).unwrap();
            *seen.entry(me * 100 + mo).or_default() += 1;
            // The collapsed state lives in the measured sector, up to rounding.
            let post = s.outcome_probabilities(|c| m_even(c, l) * 100 + m_odd(c, l));
            assert!((post[&(me * 100 + mo)] - 1.0).abs() < 1e-12, "{post:?}");
        }
        for (k, p) in exact {
            let f = *seen.get(&k).unwrap_or(&0) as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-3, "{k}: {f} vs {p}");
        }
    }
}
