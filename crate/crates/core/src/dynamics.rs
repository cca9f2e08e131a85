//! The chaotic time step: `U_PXP` followed by the permuted hop layer
//! `U_σ(θ)`, with the optional orbit-escape kick.

use rand::Rng;

use crate::scalar::Real;
use crate::statevec::PureState;

/// Parameters of one chaotic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaoticStepSpec<T> {
    pub theta: T,
    /// Apply one extra PXP flip at a random site after `U_σ`.
    pub perturb: bool,
}

/// Layer order of `U_PXP`: 1-based even sites (0-based odd) act first.
pub const LAYER_ORDER: [usize; 2] = [1, 0];

/// `U_PXP`: even-sublattice PXP layer, then the odd one. Gates within a layer
/// commute, since shared sites enter only through projectors.
pub fn apply_upxp<T: Real>(state: &mut PureState<T>) {
    let l = state.l();
    for parity in LAYER_ORDER {
        for s in (parity..l).step_by(2) {
            state.apply_pxp_gate(s);
        }
    }
}

/// Uniform permutation of `0..l` by Fisher–Yates.
pub fn sample_permutation<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<usize> {
    let mut sigma: Vec<usize> = (0..l).collect();
    for i in (1..l).rev() {
        let j = rng.random_range(0..=i);
        sigma.swap(i, j);
    }
    sigma
}

/// Site hit by the orbit-escape kick.
pub fn sample_perturb_site<R: Rng + ?Sized>(l: usize, rng: &mut R) -> usize {
    rng.random_range(0..l)
}

/// `U_σ(θ)`: hop gates at `σ(0), σ(1), …` applied in that order.
pub fn apply_usigma<T: Real>(state: &mut PureState<T>, sigma: &[usize], theta: T) {
    debug_assert_eq!(sigma.len(), state.l());
    for &s in sigma {
        state.apply_hop_gate(s, theta);
    }
}

/// One chaotic step, drawing σ (and the kick site) from `circuit_rng`.
pub fn chaotic_step<T: Real, R: Rng + ?Sized>(state: &mut PureState<T>, spec: &ChaoticStepSpec<T>, circuit_rng: &mut R) {
    apply_upxp(state);
    let sigma = sample_permutation(state.l(), circuit_rng);
    apply_usigma(state, &sigma, spec.theta);
    if spec.perturb {
        let s = sample_perturb_site(state.l(), circuit_rng);
        state.apply_pxp_gate(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{format_config, parse_config, FibBasis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};
    use std::sync::Arc;

    fn ket(l: usize, s: &str) -> PureState<f64> {
        let b = Arc::new(FibBasis::enumerate(l).unwrap());
        PureState::basis_state(b, parse_config(s).unwrap().0).unwrap()
    }

    fn cb(state: &PureState<f64>) -> String {
        format_config(state.as_basis_state().expect("basis state"), state.l())
    }

    #[test]
    fn vacuum_orbit_has_period_three() {
        let mut s = ket(6, "000000");
        apply_upxp(&mut s);
        assert_eq!(cb(&s), "010101");
        apply_upxp(&mut s);
        assert_eq!(cb(&s), "101010");
        apply_upxp(&mut s);
        assert_eq!(cb(&s), "000000");
    }

    #[test]
    fn upxp_on_a_particle_pair() {
        let mut s = ket(6, "010010");
        apply_upxp(&mut s);
        assert_eq!(cb(&s), "101000");
    }

    #[test]
    fn usigma_leaves_the_orbit_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for v in ["00000000", "01010101", "10101010"] {
            let mut s = ket(8, v);
            let before = s.clone();
            let sigma = sample_permutation(8, &mut rng);
            apply_usigma(&mut s, &sigma, 0.917);
            assert_eq!(s, before);
        }
    }

    #[test]
    fn quarter_turn_keeps_basis_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = ket(10, "0100100000");
        for _ in 0..20 {
            chaotic_step(&mut s, &ChaoticStepSpec { theta: FRAC_PI_2, perturb: false }, &mut rng);
            assert!(s.as_basis_state().is_some());
        }
    }

    #[test]
    fn generic_angle_creates_superpositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ket(6, "010000");
        chaotic_step(&mut s, &ChaoticStepSpec { theta: FRAC_PI_3, perturb: false }, &mut rng);
        let support = s.amplitudes().iter().filter(|z| z.norm_sqr() > 1e-12).count();
        assert!(support >= 2, "support {support}");
        assert!((s.norm_sqr() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn kick_leaves_the_orbit_when_unblocked() {
        // After U_PXP the state is 01010101; the kick empties an occupied
        // site (free neighbours) and is blocked on an empty one.
        let spec = ChaoticStepSpec { theta: FRAC_PI_2, perturb: true };
        let mut escaped = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = ket(8, "00000000");
            chaotic_step(&mut s, &spec, &mut rng);
            let mut replay = ChaCha8Rng::seed_from_u64(seed);
            sample_permutation(8, &mut replay);
            let site = sample_perturb_site(8, &mut replay);
            let n = s.as_basis_state().unwrap().count_ones();
            assert_eq!(n, if site % 2 == 1 { 3 } else { 4 });
            escaped += (n == 3) as usize;
        }
        assert!(escaped > 0 && escaped < 40);
    }

    #[test]
    fn permutations_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 48_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_permutation(4, &mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let e = n as f64 / 24.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 23 dof, 99.9th percentile ~49.7
        assert!(chi2 < 49.7, "chi2 {chi2}");
        assert_eq!(sample_permutation(1, &mut rng), vec![0]);
    }
}
