//! Pure states over a [`FibBasis`] and the primitive gates and measurements.
//!
//! Amplitudes are stored as consecutive blocks of length `dim`: one block for
//! a bare system, two (ancilla `|0>` then `|1>`) when an ancilla qubit is
//! attached. Every system operation acts blockwise; the ancilla is never
//! gated.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::hilbert::{bit, FibBasis, HilbertError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("total probability {0} drifted from 1 beyond tolerance")]
    NormDrift(f64),
    #[error("amplitude vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("zero vector cannot be normalized")]
    ZeroNorm,
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Outcome of one projective measurement of a diagonal observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord<T> {
    pub observable: &'static str,
    pub outcome: i64,
    pub born_probability: T,
}

/// `(cos θ, sin θ)` with values below machine epsilon flushed to zero, so
/// that θ = π/2 yields an exact conditional swap.
pub(crate) fn clean_sin_cos<T: Real>(theta: T) -> (T, T) {
    let (s, c) = theta.sin_cos();
    let flush = |x: T| if x.abs() < T::epsilon() { T::zero() } else { x };
    (flush(s), flush(c))
}

fn drift_tolerance<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(1e3))
}

fn certain_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(10.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState<T> {
    basis: Arc<FibBasis>,
    amps: Vec<Complex<T>>,
    ancilla: bool,
}

impl<T: Real> PureState<T> {
    /// Computational basis state `|config>`.
    pub fn basis_state(basis: Arc<FibBasis>, config: u64) -> Result<Self, StateError> {
        let k = basis.index_of(config)?;
        let mut amps = vec![Complex::new(T::zero(), T::zero()); basis.dim()];
        amps[k] = Complex::new(T::one(), T::zero());
        Ok(Self { basis, amps, ancilla: false })
    }

    /// Normalizes the given system amplitudes.
    pub fn from_amplitudes(basis: Arc<FibBasis>, amps: Vec<Complex<T>>) -> Result<Self, StateError> {
        if amps.len() != basis.dim() {
            return Err(StateError::LengthMismatch { got: amps.len(), expected: basis.dim() });
        }
        let mut s = Self { basis, amps, ancilla: false };
        s.normalize()?;
        Ok(s)
    }

    /// `(|0>_a |psi0> + |1>_a |psi1>)`, normalized as a whole.
    pub fn with_ancilla(psi0: &Self, psi1: &Self) -> Result<Self, StateError> {
        assert!(!psi0.ancilla && !psi1.ancilla, "ancilla already attached");
        let mut amps = psi0.amps.clone();
        amps.extend_from_slice(&psi1.amps);
        let mut s = Self { basis: psi0.basis.clone(), amps, ancilla: true };
        s.normalize()?;
        Ok(s)
    }

    /// Haar-random state on the constrained space: i.i.d. standard complex
    /// Gaussian amplitudes, normalized.
    pub fn random<R: Rng + ?Sized>(basis: Arc<FibBasis>, rng: &mut R) -> Self {
        loop {
            let amps: Vec<Complex<T>> = (0..basis.dim())
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex::new(T::lit(re), T::lit(im))
                })
                .collect();
            if let Ok(s) = Self::from_amplitudes(basis.clone(), amps) {
                return s;
            }
        }
    }

    pub fn basis(&self) -> &Arc<FibBasis> {
        &self.basis
    }

    pub fn l(&self) -> usize {
        self.basis.l()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn has_ancilla(&self) -> bool {
        self.ancilla
    }

    /// All amplitudes, ancilla-major.
    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    /// System amplitudes for ancilla value `a` (0 when no ancilla).
    pub fn block(&self, a: usize) -> &[Complex<T>] {
        let d = self.dim();
        &self.amps[a * d..(a + 1) * d]
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    fn normalize(&mut self) -> Result<(), StateError> {
        let n = self.norm_sqr().sqrt();
        if !n.is_finite() || n <= T::zero() {
            return Err(StateError::ZeroNorm);
        }
        let inv = T::one() / n;
        self.amps.iter_mut().for_each(|z| *z = *z * inv);
        Ok(())
    }

    /// Inner product `<self|other>` over the full (system + ancilla) space.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// The configuration carrying (essentially) all the weight, if any.
    pub fn as_basis_state(&self) -> Option<u64> {
        let d = self.dim();
        let tol = certain_tolerance::<T>();
        self.amps
            .iter()
            .position(|z| z.norm_sqr() >= T::one() - tol)
            .map(|i| self.basis.config(i % d))
    }

    /// `<psi| f(b) |psi>` for an observable diagonal in the computational basis.
    pub fn diagonal_expectation<F: Fn(u64) -> T>(&self, f: F) -> T {
        let d = self.dim();
        self.amps
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * f(self.basis.config(i % d)))
            .sum()
    }

    /// `e^{-i(π/2)(PXP)_s}` at 0-based site `s`: flips `s` with a factor `-i`
    /// when both neighbours are 0, identity otherwise.
    pub fn apply_pxp_gate(&mut self, s: usize) {
        let l = self.l();
        let d = self.dim();
        let (left, right) = ((s + l - 1) % l, (s + 1) % l);
        let free = (1u64 << left) | (1u64 << right) | (1u64 << s);
        let minus_i = Complex::new(T::zero(), -T::one());
        for k in 0..d {
            let c = self.basis.config(k);
            if c & free != 0 {
                continue;
            }
            let partner = self.basis.find(c | (1 << s)).expect("unblocked flip stays in basis");
            for blk in 0..self.amps.len() / d {
                let (i, j) = (blk * d + k, blk * d + partner);
                let (a, b) = (self.amps[i], self.amps[j]);
                self.amps[i] = minus_i * b;
                self.amps[j] = minus_i * a;
            }
        }
    }

    /// The integrability-breaking hop gate anchored at 0-based site `s`:
    /// `exp(-i θ/2 P_{s-1} (XX+YY)_{s,s+1} P_{s+2})`.
    pub fn apply_hop_gate(&mut self, s: usize, theta: T) {
        let l = self.l();
        let d = self.dim();
        let (s1, left, right) = ((s + 1) % l, (s + l - 1) % l, (s + 2) % l);
        let (sn, cs) = clean_sin_cos(theta);
        let mix = Complex::new(T::zero(), -sn);
        let watch = (1u64 << left) | (1u64 << right) | (1u64 << s) | (1u64 << s1);
        let pattern = 1u64 << s; // sites (s, s+1) = (1, 0), outer sites 0
        for k in 0..d {
            let c = self.basis.config(k);
            if c & watch != pattern {
                continue;
            }
            let partner = self
                .basis
                .find(c ^ (1 << s) ^ (1 << s1))
                .expect("flip-flop stays in basis");
            for blk in 0..self.amps.len() / d {
                let (i, j) = (blk * d + k, blk * d + partner);
                let (a, b) = (self.amps[i], self.amps[j]);
                self.amps[i] = a * cs + mix * b;
                self.amps[j] = b * cs + mix * a;
            }
        }
    }

    /// Born probability of each outcome of a diagonal observable, keyed by
    /// outcome label. Outcomes with exactly zero weight are omitted.
    pub fn outcome_probabilities<F: Fn(u64) -> i64>(&self, label: F) -> BTreeMap<i64, T> {
        let d = self.dim();
        let mut probs = BTreeMap::new();
        for (i, z) in self.amps.iter().enumerate() {
            let w = z.norm_sqr();
            if w == T::zero() {
                continue;
            }
            *probs.entry(label(self.basis.config(i % d))).or_insert_with(T::zero) += w;
        }
        probs
    }

    /// Projective measurement of the observable whose eigenvalue on `|b>` is
    /// `label(b)`.
    ///
    /// When one outcome carries all of the weight (to 1e-12) no random number
    /// is drawn.
    pub fn measure_diagonal<F, R>(
        &mut self,
        observable: &'static str,
        label: F,
        rng: &mut R,
    ) -> Result<MeasurementRecord<T>, StateError>
    where
        F: Fn(u64) -> i64,
        R: Rng + ?Sized,
    {
        let probs = self.outcome_probabilities(&label);
        let total: T = probs.values().copied().sum();
        if (total - T::one()).abs() > drift_tolerance::<T>() || !total.is_finite() {
            return Err(StateError::NormDrift(total.as_f64()));
        }
        let tol = certain_tolerance::<T>();
        let certain = probs.iter().find(|(_, &p)| p >= total * (T::one() - tol));
        let (outcome, p) = match certain {
            Some((&o, &p)) => (o, p),
            None => {
                let u = T::lit(rng.random::<f64>()) * total;
                let mut acc = T::zero();
                let mut chosen = None;
                for (&o, &p) in probs.iter().filter(|(_, &p)| p > T::zero()) {
                    acc += p;
                    chosen = Some((o, p));
                    if u < acc {
                        break;
                    }
                }
                chosen.expect("at least one outcome has weight")
            }
        };
        let d = self.dim();
        let scale = T::one() / p.sqrt();
        for (i, z) in self.amps.iter_mut().enumerate() {
            if label(self.basis.config(i % d)) == outcome {
                *z = *z * scale;
            } else {
                *z = Complex::new(T::zero(), T::zero());
            }
        }
        Ok(MeasurementRecord { observable, outcome, born_probability: p / total })
    }

    /// `<Z_s>` with `Z|b> = (-1)^{b+1}|b>`.
    pub fn z_expectation(&self, s: usize) -> T {
        self.diagonal_expectation(|c| if bit(c, s) == 1 { T::one() } else { -T::one() })
    }
}
