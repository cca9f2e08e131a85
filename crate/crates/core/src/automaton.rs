//! Bit-packed cellular-automaton engine: the exact θ = π/2 limit on
//! computational-basis states, for rings far beyond state-vector reach.
//!
//! Site `s` (0-based) lives at bit `s % 64` of word `s / 64`.

use rand::Rng;

use crate::control::{correction_site, select_target, ControlOutcome, TargetPattern};
use crate::hilbert::{sample_uniform_bits, HilbertError};

/// Word with every odd bit set; 64 is even so parity is word-aligned.
const ODD_BITS: u64 = 0xAAAA_AAAA_AAAA_AAAA;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitState {
    l: usize,
    words: Vec<u64>,
}

impl BitState {
    pub fn zeros(l: usize) -> Self {
        Self { l, words: vec![0; l.div_ceil(64)] }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    pub fn from_config(config: u64, l: usize) -> Self {
        assert!(l <= 64);
        let mut s = Self::zeros(l);
        s.words[0] = config;
        s
    }

    /// Uniform draw from the constrained space.
    pub fn random<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Result<Self, HilbertError> {
        Ok(Self::from_bits(&sample_uniform_bits(l, rng)?))
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Packed word, available when the ring fits in 64 sites.
    pub fn to_config(&self) -> Option<u64> {
        (self.l <= 64).then(|| self.words[0])
    }

    #[inline]
    pub fn get(&self, s: usize) -> bool {
        (self.words[s / 64] >> (s % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, s: usize, v: bool) {
        let m = 1u64 << (s % 64);
        if v {
            self.words[s / 64] |= m;
        } else {
            self.words[s / 64] &= !m;
        }
    }

    #[inline]
    fn at(&self, s: isize) -> bool {
        self.get(s.rem_euclid(self.l as isize) as usize)
    }

    fn tail_mask(&self) -> u64 {
        match self.l % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    /// Bit `s` of the result holds site `s - 1` (cyclic).
    fn shifted_from_left(&self) -> Vec<u64> {
        let n = self.words.len();
        let top = self.get(self.l - 1) as u64;
        let mut out = vec![0u64; n];
        for (i, o) in out.iter_mut().enumerate() {
            let carry = if i == 0 { top } else { self.words[i - 1] >> 63 };
            *o = (self.words[i] << 1) | carry;
        }
        out[n - 1] &= self.tail_mask();
        out
    }

    /// Bit `s` of the result holds site `s + 1` (cyclic).
    fn shifted_from_right(&self) -> Vec<u64> {
        let n = self.words.len();
        let mut out = vec![0u64; n];
        for (i, o) in out.iter_mut().enumerate() {
            let carry = if i + 1 < n { self.words[i + 1] << 63 } else { 0 };
            *o = (self.words[i] >> 1) | carry;
        }
        let last = self.l - 1;
        if self.get(0) {
            out[last / 64] |= 1 << (last % 64);
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Constraint check.
    pub fn is_valid(&self) -> bool {
        self.words.iter().zip(self.shifted_from_right()).all(|(w, r)| w & r == 0)
    }

    /// Per-site bits, site 1 first.
    pub fn to_bit_string(&self) -> String {
        (0..self.l).map(|s| if self.get(s) { '1' } else { '0' }).collect()
    }

    /// `Σ Z` over sites of the given 0-based parity.
    pub fn sublattice_magnetization(&self, parity: usize) -> i64 {
        let mask = if parity == 1 { ODD_BITS } else { !ODD_BITS };
        let ones: i64 = self.words.iter().map(|w| (w & mask).count_ones() as i64).sum();
        2 * ones - (self.l / 2) as i64
    }

    /// Domain-wall density `(1/L) Σ [b_s != b_{s+2}]`.
    pub fn h_zz(&self) -> f64 {
        let mut shifted = self.clone();
        shifted.words = self.shifted_from_right();
        let two = shifted.shifted_from_right();
        let walls: u32 = self.words.iter().zip(two).map(|(w, t)| (w ^ t).count_ones()).sum();
        walls as f64 / self.l as f64
    }

    pub fn z_profile(&self) -> Vec<f64> {
        (0..self.l).map(|s| if self.get(s) { 1.0 } else { -1.0 }).collect()
    }

    /// One PXP layer on sites of 0-based `parity`, evaluated bit-parallel:
    /// `b_s ^= !b_{s-1} & !b_{s+1}`.
    fn pxp_layer(&mut self, parity: usize) {
        let mask = if parity == 1 { ODD_BITS } else { !ODD_BITS };
        let (left, right) = (self.shifted_from_left(), self.shifted_from_right());
        let tail = self.tail_mask();
        let n = self.words.len();
        for i in 0..n {
            let mut flip = !left[i] & !right[i] & mask;
            if i == n - 1 {
                flip &= tail;
            }
            self.words[i] ^= flip;
        }
    }

    /// Conditional Toffoli flip of site `s`.
    pub fn pxp_flip(&mut self, s: usize) -> bool {
        let si = s as isize;
        if !self.at(si - 1) && !self.at(si + 1) {
            self.set(s, !self.get(s));
            true
        } else {
            false
        }
    }

    /// `U_PXP`: even-sublattice layer (0-based odd sites), then odd.
    pub fn ca_upxp(&mut self) {
        self.pxp_layer(1);
        self.pxp_layer(0);
    }

    /// Conditional flip-flop of sites `(s, s+1)` when `s-1` and `s+2` are empty.
    pub fn flip_flop(&mut self, s: usize) {
        let si = s as isize;
        let (a, b) = (self.get(s), self.at(si + 1));
        if a != b && !self.at(si - 1) && !self.at(si + 2) {
            self.set(s, b);
            self.set((s + 1) % self.l, a);
        }
    }

    /// `U_σ(π/2)`: flip-flops at `σ(0), σ(1), …` in order.
    pub fn ca_usigma(&mut self, sigma: &[usize]) {
        for &s in sigma {
            self.flip_flop(s);
        }
    }

    /// Classical control step. Magnetizations are read by popcount and use no
    /// randomness; site selection and tie-breaks draw from `site_rng` exactly
    /// as the state-vector engine does.
    pub fn ca_control_step<R: Rng + ?Sized>(&mut self, q: f64, site_rng: &mut R) -> ControlOutcome {
        let m_even = self.sublattice_magnetization(1);
        let m_odd = self.sublattice_magnetization(0);
        let target = select_target(m_even, m_odd, site_rng);
        let corrections_applied = self.ca_correction_sweep(target, q, site_rng);
        ControlOutcome { m_even, m_odd, target, corrections_applied }
    }

    /// Ascending Bernoulli(q) sweep of local corrections towards `target`.
    /// Returns the number of corrections applied.
    pub fn ca_correction_sweep<R: Rng + ?Sized>(&mut self, target: TargetPattern, q: f64, site_rng: &mut R) -> usize {
        let mut applied = 0;
        for s in 0..self.l {
            if site_rng.random::<f64>() < q {
                let s2 = (s + 2) % self.l;
                let b = self.get(s);
                if b != self.get(s2) {
                    self.pxp_flip(correction_site(s, self.l, b as u8, target));
                    applied += 1;
                }
            }
        }
        applied
    }
}
