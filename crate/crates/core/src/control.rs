//! The two-stage control protocol: collective sublattice magnetization
//! measurement and target selection, then a sweep of stochastic local
//! domain-wall corrections with adaptive feedback.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hilbert::bit;
use crate::scalar::Real;
use crate::statevec::{PureState, StateError};

/// The three vacuum-orbit configurations the control can steer towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetPattern {
    /// `|0000…>`
    AllZero,
    /// `|1010…>`: 1s on (1-based) odd sites.
    OneOnOdd,
    /// `|0101…>`: 1s on (1-based) even sites.
    OneOnEven,
}

impl TargetPattern {
    /// Target bit at 0-based site `s`.
    pub fn target_bit(self, s: usize) -> u8 {
        match self {
            Self::AllZero => 0,
            Self::OneOnOdd => s.is_multiple_of(2) as u8,
            Self::OneOnEven => !s.is_multiple_of(2) as u8,
        }
    }

    pub fn config(self, l: usize) -> u64 {
        (0..l).filter(|&s| self.target_bit(s) == 1).fold(0, |c, s| c | (1 << s))
    }
}

/// Result of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub m_even: i64,
    pub m_odd: i64,
    pub target: TargetPattern,
    /// Number of local corrections `U^c_k` applied (including blocked ones).
    pub corrections_applied: usize,
}

/// `Σ Z_s` over 0-based sites of the given parity, with `Z|1> = +|1>`.
pub fn sublattice_magnetization(config: u64, l: usize, parity: usize) -> i64 {
    (parity..l).step_by(2).map(|s| 2 * bit(config, s) as i64 - 1).sum()
}

/// `M_even` sums over 1-based even sites, i.e. 0-based odd ones.
pub fn m_even(config: u64, l: usize) -> i64 {
    sublattice_magnetization(config, l, 1)
}

pub fn m_odd(config: u64, l: usize) -> i64 {
    sublattice_magnetization(config, l, 0)
}

/// Patterns attaining `m_* = min(m_e+m_o, m_e-m_o, m_o-m_e)`.
pub fn candidate_targets(m_even: i64, m_odd: i64) -> Vec<TargetPattern> {
    let candidates = [
        (m_even + m_odd, TargetPattern::AllZero),
        (m_even - m_odd, TargetPattern::OneOnOdd),
        (m_odd - m_even, TargetPattern::OneOnEven),
    ];
    let m_star = candidates.iter().map(|c| c.0).min().unwrap();
    candidates.iter().filter(|c| c.0 == m_star).map(|c| c.1).collect()
}

/// One of [`candidate_targets`]. Ties are broken uniformly with one draw
/// from `rng`; unique minima draw nothing.
pub fn select_target<R: Rng + ?Sized>(m_even: i64, m_odd: i64, rng: &mut R) -> TargetPattern {
    let minimizers = candidate_targets(m_even, m_odd);
    match minimizers.len() {
        1 => minimizers[0],
        n => minimizers[rng.random_range(0..n)],
    }
}

/// Site to flip given the (differing) bits at `s` and `s+2`: the one that
/// disagrees with the target. Both sites share a sublattice, so exactly one
/// does.
pub fn correction_site(s: usize, l: usize, bit_s: u8, target: TargetPattern) -> usize {
    if bit_s != target.target_bit(s) {
        s
    } else {
        (s + 2) % l
    }
}

/// Collective measurement of `M_even`, then `M_odd`.
pub fn measure_sublattice_magnetizations<T: Real, R: Rng + ?Sized>(
    state: &mut PureState<T>,
    meas_rng: &mut R,
) -> Result<(i64, i64), StateError> {
    let l = state.l();
    let e = state.measure_diagonal("M_even", |c| m_even(c, l), meas_rng)?;
    let o = state.measure_diagonal("M_odd", |c| m_odd(c, l), meas_rng)?;
    Ok((e.outcome, o.outcome))
}

/// Local correction anchored at 0-based site `s`: measure `Z_s Z_{s+2}`; on a
/// domain wall measure `Z_s` and apply `U^c_k` at the mismatched site.
/// Returns whether a correction gate was applied.
pub fn local_correction_at<T: Real, R: Rng + ?Sized>(
    state: &mut PureState<T>,
    s: usize,
    target: TargetPattern,
    meas_rng: &mut R,
) -> Result<bool, StateError> {
    let l = state.l();
    let s2 = (s + 2) % l;
    let wall = state.measure_diagonal("ZZ", |c| if bit(c, s) == bit(c, s2) { 1 } else { -1 }, meas_rng)?;
    if wall.outcome == 1 {
        return Ok(false);
    }
    let z = state.measure_diagonal("Z", |c| 2 * bit(c, s) as i64 - 1, meas_rng)?;
    let bit_s = (z.outcome == 1) as u8;
    state.apply_pxp_gate(correction_site(s, l, bit_s, target));
    Ok(true)
}

/// Full control step. Site selection (Bernoulli(q), one draw per site in
/// ascending order) and tie-breaks use `site_rng`; Born sampling uses
/// `meas_rng`.
pub fn control_step<T: Real, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    state: &mut PureState<T>,
    q: f64,
    site_rng: &mut R1,
    meas_rng: &mut R2,
) -> Result<ControlOutcome, StateError> {
    let (m_even, m_odd) = measure_sublattice_magnetizations(state, meas_rng)?;
    let target = select_target(m_even, m_odd, site_rng);
    let mut corrections_applied = 0;
    for s in 0..state.l() {
        if site_rng.random::<f64>() < q && local_correction_at(state, s, target, meas_rng)? {
            corrections_applied += 1;
        }
    }
    Ok(ControlOutcome { m_even, m_odd, target, corrections_applied })
}
