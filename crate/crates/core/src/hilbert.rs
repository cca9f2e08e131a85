//! The constrained ("Fibonacci") Hilbert space of `L` qubits on a ring.
//!
//! A configuration is a bit-packed word where site 1 is the least significant
//! bit. Valid configurations have no two cyclically adjacent 1s.

use rand::Rng;
use thiserror::Error;

/// Largest ring the state-vector engine will enumerate (dimension ~ 3.3e7).
pub const MAX_QUANTUM_L: usize = 36;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HilbertError {
    #[error("system size L={0} must be even")]
    OddSize(usize),
    #[error("system size L={0} is below the minimum of 4")]
    TooSmall(usize),
    #[error("system size L={0} exceeds the enumeration cap of {MAX_QUANTUM_L}")]
    TooLarge(usize),
    #[error("configuration {0} is not a valid constrained bitstring")]
    InvalidConfig(String),
}

/// Mask with the low `l` bits set.
#[inline]
pub fn low_mask(l: usize) -> u64 {
    if l >= 64 {
        u64::MAX
    } else {
        (1u64 << l) - 1
    }
}

/// Cyclic left rotation by one site within an `l`-bit ring.
#[inline]
pub fn rotate_up(config: u64, l: usize) -> u64 {
    ((config << 1) | (config >> (l - 1))) & low_mask(l)
}

/// True iff `config` (low `l` bits) has no pair of cyclically adjacent 1s.
#[inline]
pub fn is_valid(config: u64, l: usize) -> bool {
    config & !low_mask(l) == 0 && config & rotate_up(config, l) == 0
}

/// Bit value at 0-based site `s`.
#[inline]
pub fn bit(config: u64, s: usize) -> u8 {
    ((config >> s) & 1) as u8
}

/// Parses a bitstring written site 1 first, e.g. `"010010"`.
pub fn parse_config(s: &str) -> Result<(u64, usize), HilbertError> {
    let l = s.len();
    if l == 0 || l > 64 {
        return Err(HilbertError::InvalidConfig(s.to_string()));
    }
    let mut c = 0u64;
    for (i, ch) in s.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => c |= 1 << i,
            _ => return Err(HilbertError::InvalidConfig(s.to_string())),
        }
    }
    Ok((c, l))
}

/// Inverse of [`parse_config`].
pub fn format_config(config: u64, l: usize) -> String {
    (0..l).map(|s| if bit(config, s) == 1 { '1' } else { '0' }).collect()
}

fn check_size(l: usize) -> Result<(), HilbertError> {
    if l < 4 {
        return Err(HilbertError::TooSmall(l));
    }
    if !l.is_multiple_of(2) {
        return Err(HilbertError::OddSize(l));
    }
    Ok(())
}

/// Exact dimension of the constrained space (the Lucas number `L_l`), without
/// enumerating it. `None` on `u128` overflow.
pub fn dimension(l: usize) -> Result<Option<u128>, HilbertError> {
    check_size(l)?;
    // Lucas: L0 = 2, L1 = 1.
    let (mut a, mut b) = (2u128, 1u128);
    for _ in 0..l {
        let next = match a.checked_add(b) {
            Some(n) => n,
            None => return Ok(None),
        };
        a = b;
        b = next;
    }
    Ok(Some(a))
}

/// Enumerated constrained basis with ordinal lookup.
///
/// `states` is sorted ascending, so ordinal lookup is a binary search and the
/// all-zero configuration is always ordinal 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibBasis {
    l: usize,
    states: Vec<u64>,
}

impl FibBasis {
    pub fn enumerate(l: usize) -> Result<Self, HilbertError> {
        check_size(l)?;
        if l > MAX_QUANTUM_L {
            return Err(HilbertError::TooLarge(l));
        }
        let mut states = Vec::new();
        // Depth-first from the most significant site, 0-branch first, which
        // emits open-chain strings in ascending order.
        fn walk(site: usize, prefix: u64, prev_one: bool, l: usize, out: &mut Vec<u64>) {
            if site == 0 {
                if is_valid(prefix, l) {
                    out.push(prefix);
                }
                return;
            }
            let s = site - 1;
            walk(s, prefix, false, l, out);
            if !prev_one {
                walk(s, prefix | (1 << s), true, l, out);
            }
        }
        walk(l, 0, false, l, &mut states);
        Ok(Self { l, states })
    }

    #[inline]
    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn states(&self) -> &[u64] {
        &self.states
    }

    #[inline]
    pub fn config(&self, ordinal: usize) -> u64 {
        self.states[ordinal]
    }

    /// Ordinal of a configuration, `None` if it is not in the basis.
    #[inline]
    pub fn find(&self, config: u64) -> Option<usize> {
        self.states.binary_search(&config).ok()
    }

    pub fn index_of(&self, config: u64) -> Result<usize, HilbertError> {
        self.find(config)
            .ok_or_else(|| HilbertError::InvalidConfig(format_config(config, self.l)))
    }
}

/// Draws a configuration uniformly from the constrained space of any even
/// `l >= 4`, one site at a time, returned as per-site bits.
///
/// Exactly `l` uniforms are consumed regardless of outcome, so the stream
/// position after sampling depends only on `l`.
pub fn sample_uniform_bits<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Result<Vec<bool>, HilbertError> {
    check_size(l)?;
    // open[n] = number of open-chain strings of n sites with no adjacent 1s.
    let mut open = vec![1.0f64; l + 1];
    open[1] = 2.0;
    for n in 2..=l {
        open[n] = open[n - 1] + open[n - 2];
    }
    if !open[l].is_finite() {
        return Err(HilbertError::TooLarge(l));
    }
    // Completions of `n` open sites where the last may be forced to 0.
    let count = |n: isize, last_zero: bool| -> f64 {
        match n {
            n if n <= 0 => 1.0,
            n if last_zero => open[n as usize - 1],
            n => open[n as usize],
        }
    };
    let mut bits = vec![false; l];
    let p_first = open[l - 3] / (open[l - 1] + open[l - 3]);
    bits[0] = rng.random::<f64>() < p_first;
    let last_zero = bits[0];
    for i in 1..l {
        let u = rng.random::<f64>();
        if bits[i - 1] {
            continue;
        }
        // Sites i..l-1 are still open.
        let n = (l - i) as isize;
        let with_one = if n == 1 {
            if last_zero { 0.0 } else { 1.0 }
        } else {
            count(n - 2, last_zero)
        };
        bits[i] = u < with_one / count(n, last_zero);
    }
    Ok(bits)
}
