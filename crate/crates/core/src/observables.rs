//! Measured quantities: the control order parameter, `<Z_j>` profiles,
//! subsystem entanglement entropies, tripartite mutual information and the
//! ancilla purification entropy.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::hilbert::{rotate_up, FibBasis};
use crate::scalar::Real;
use crate::statevec::PureState;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObservableError {
    #[error("region {0:?} must be a nonempty proper subset of the sites")]
    BadRegion(Vec<usize>),
    #[error("tripartite information needs L divisible by 4, got L={0}")]
    NotDivisibleByFour(usize),
    #[error("state has no ancilla attached")]
    NoAncilla,
}

/// Schmidt weights below this are dropped before taking logs.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;

/// Fraction of sublattice domain walls in a configuration.
pub fn domain_wall_density(config: u64, l: usize) -> f64 {
    let shifted = rotate_up(rotate_up(config, l), l);
    (config ^ shifted).count_ones() as f64 / l as f64
}

/// `<H_ZZ> = <(1/L) Σ (1 - Z_i Z_{i+2}) / 2>`.
pub fn h_zz<T: Real>(state: &PureState<T>) -> T {
    let l = state.l();
    state.diagonal_expectation(|c| T::lit(domain_wall_density(c, l)))
}

pub fn z_profile<T: Real>(state: &PureState<T>) -> Vec<T> {
    (0..state.l()).map(|s| state.z_expectation(s)).collect()
}

/// A set of 0-based sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    sites: Vec<usize>,
    mask: u64,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, l: usize) -> Result<Self, ObservableError> {
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() || sites.len() >= l || sites.iter().any(|&s| s >= l) {
            return Err(ObservableError::BadRegion(sites));
        }
        let mask = sites.iter().fold(0u64, |m, &s| m | (1 << s));
        Ok(Self { sites, mask })
    }

    /// Contiguous arc of `len` sites starting at `start` (cyclic).
    pub fn arc(start: usize, len: usize, l: usize) -> Result<Self, ObservableError> {
        Self::new((start..start + len).map(|s| s % l).collect(), l)
    }

    /// Left half of the chain.
    pub fn half(l: usize) -> Result<Self, ObservableError> {
        Self::arc(0, l / 2, l)
    }

    pub fn union(&self, other: &Self, l: usize) -> Result<Self, ObservableError> {
        Self::new(self.sites.iter().chain(&other.sites).copied().collect(), l)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }
}

/// Amplitude matrix `M[region restriction][complement restriction]`. The
/// ancilla, if present, belongs to the complement.
fn bipartite_matrix<T: Real>(state: &PureState<T>, region: &Region) -> DMatrix<Complex<T>> {
    let d = state.dim();
    let basis = state.basis();
    let mut rows: HashMap<u64, usize> = HashMap::new();
    let mut cols: HashMap<u64, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(state.amplitudes().len());
    for (i, z) in state.amplitudes().iter().enumerate() {
        if z.norm_sqr() == T::zero() {
            continue;
        }
        let c = basis.config(i % d);
        let ancilla = (i / d) as u64;
        let r = c & region.mask;
        let k = ((c & !region.mask) << 1) | ancilla;
        let nr = rows.len();
        let nc = cols.len();
        let ri = *rows.entry(r).or_insert(nr);
        let ci = *cols.entry(k).or_insert(nc);
        entries.push((ri, ci, *z));
    }
    let mut m = DMatrix::zeros(rows.len().max(1), cols.len().max(1));
    for (r, c, z) in entries {
        m[(r, c)] = z;
    }
    m
}

fn entropy_of<T: Real>(weights: impl Iterator<Item = T>) -> T {
    let floor = T::lit(EIGENVALUE_FLOOR);
    let s: T = weights.filter(|&w| w > floor).map(|w| -w * w.ln()).sum();
    // Clamp rounding residue on pure states.
    s.max(T::zero()) + T::zero()
}

/// Von Neumann entropy (natural log) of `region`, from the eigenvalues of the
/// smaller Gram matrix `M M†` or `M† M`.
pub fn entanglement_entropy<T: Real>(state: &PureState<T>, region: &Region) -> T {
    let m = bipartite_matrix(state, region);
    entropy_of(T::gram_eigenvalues(m).into_iter())
}

/// Same quantity through a full singular value decomposition of `M`.
pub fn entanglement_entropy_svd<T: Real>(state: &PureState<T>, region: &Region) -> T {
    let m = bipartite_matrix(state, region);
    entropy_of(T::singular_values(m).into_iter().map(|s| s * s))
}

pub fn half_chain_entropy<T: Real>(state: &PureState<T>) -> T {
    let region = Region::half(state.l()).expect("L >= 4");
    entanglement_entropy(state, &region)
}

/// `I_3` over three consecutive arcs `A, B, C` of `L/4` sites from site 1.
pub fn tripartite_mutual_information<T: Real>(state: &PureState<T>) -> Result<T, ObservableError> {
    let l = state.l();
    if !l.is_multiple_of(4) {
        return Err(ObservableError::NotDivisibleByFour(l));
    }
    let q = l / 4;
    let a = Region::arc(0, q, l)?;
    let b = Region::arc(q, q, l)?;
    let c = Region::arc(2 * q, q, l)?;
    let s = |r: &Region| entanglement_entropy(state, r);
    let ab = a.union(&b, l)?;
    let ac = a.union(&c, l)?;
    let bc = b.union(&c, l)?;
    let abc = ab.union(&c, l)?;
    Ok(s(&a) + s(&b) + s(&c) - s(&ab) - s(&ac) - s(&bc) + s(&abc))
}

/// `(|0>_a|ψ1> + |1>_a|ψ2>)/√2` with Haar-random `ψ1` and `ψ2` Gram–Schmidt
/// orthogonalized against it. Degenerate draws are redrawn.
pub fn make_ancilla_joint<T: Real, R: Rng + ?Sized>(basis: Arc<FibBasis>, rng: &mut R) -> PureState<T> {
    let psi1 = PureState::<T>::random(basis.clone(), rng);
    loop {
        let psi2 = PureState::<T>::random(basis.clone(), rng);
        let overlap = psi1.inner(&psi2);
        let rest: Vec<Complex<T>> = psi2
            .block(0)
            .iter()
            .zip(psi1.block(0))
            .map(|(b, a)| *b - *a * overlap)
            .collect();
        let norm: T = rest.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if norm < T::lit(1e-10) {
            continue;
        }
        let psi2 = PureState::from_amplitudes(basis.clone(), rest).expect("nonzero complement");
        return PureState::with_ancilla(&psi1, &psi2).expect("orthogonal halves");
    }
}

/// Entropy of the reduced ancilla density matrix in units of `ln 2`.
pub fn ancilla_entropy<T: Real>(state: &PureState<T>) -> Result<T, ObservableError> {
    if !state.has_ancilla() {
        return Err(ObservableError::NoAncilla);
    }
    let (b0, b1) = (state.block(0), state.block(1));
    let r00: T = b0.iter().map(|z| z.norm_sqr()).sum();
    let r11: T = b1.iter().map(|z| z.norm_sqr()).sum();
    let r01: Complex<T> = b0.iter().zip(b1).map(|(x, y)| x * y.conj()).sum();
    let two = T::lit(2.0);
    let half_trace = (r00 + r11) / two;
    let disc = (((r00 - r11) / two).powi(2) + r01.norm_sqr()).sqrt();
    let s = entropy_of([half_trace + disc, half_trace - disc].into_iter());
    Ok(s / T::LN_2())
}
