//! Experiment configuration and the flat `key = value` sweep file format.
//!
//! ```text
//! # comments start with '#' or ';'
//! mode = classical          # classical | quantum
//! L = 100, 200, 300         # sites; a list makes a sweep axis
//! p = 0.3, 0.5
//! q = 0.2
//! theta = pi/2              # radians: float, pi, pi/n, k*pi/n
//! t_max = 3L                # steps: integer or <c>L (default 3L)
//! samples = 1000
//! seed = 7
//! perturb = false
//! observables = hzz, sa     # hzz, sa, tmi, sanc, zprofile
//! record_every = 1          # steps
//! init = random_cb          # random_cb | ancilla_joint | explicit:010010
//! output = runs/classical   # optional directory
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{is_valid, parse_config, HilbertError, MAX_QUANTUM_L};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Quantum,
    Classical,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Quantum => "quantum",
            Mode::Classical => "classical",
        })
    }
}

impl FromStr for Mode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quantum" => Ok(Mode::Quantum),
            "classical" => Ok(Mode::Classical),
            _ => Err(invalid("mode", format!("expected quantum or classical, got `{s}`"))),
        }
    }
}

/// Recorded scalar observables, plus the full `<Z_j>` profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Sublattice domain-wall density.
    Hzz,
    /// Half-chain entanglement entropy (natural log).
    Sa,
    /// Tripartite mutual information over `L/4` arcs.
    Tmi,
    /// Ancilla entropy in bits.
    Sanc,
    /// `<Z_j>` for every site.
    Zprofile,
}

impl Observable {
    pub const ALL: [Observable; 5] =
        [Observable::Hzz, Observable::Sa, Observable::Tmi, Observable::Sanc, Observable::Zprofile];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Hzz => "hzz",
            Observable::Sa => "sa",
            Observable::Tmi => "tmi",
            Observable::Sanc => "sanc",
            Observable::Zprofile => "zprofile",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| invalid("observables", format!("unknown observable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Uniform over the constrained computational basis, redrawn per sample.
    RandomCb,
    /// Ancilla maximally entangled with two orthogonal random states.
    AncillaJoint,
    /// A fixed bitstring, site 1 first.
    Explicit(String),
}

impl fmt::Display for InitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitPolicy::RandomCb => f.write_str("random_cb"),
            InitPolicy::AncillaJoint => f.write_str("ancilla_joint"),
            InitPolicy::Explicit(s) => write!(f, "explicit:{s}"),
        }
    }
}

impl FromStr for InitPolicy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_cb" => Ok(InitPolicy::RandomCb),
            "ancilla_joint" => Ok(InitPolicy::AncillaJoint),
            _ => match s.strip_prefix("explicit:") {
                Some(bits) => Ok(InitPolicy::Explicit(bits.to_string())),
                None => Err(invalid("init", format!("unknown policy `{s}`"))),
            },
        }
    }
}

/// Number of steps: absolute, or a multiple of `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Steps(usize),
    PerSite(f64),
}

impl Horizon {
    pub fn resolve(self, l: usize) -> usize {
        match self {
            Horizon::Steps(t) => t,
            Horizon::PerSite(c) => (c * l as f64).round() as usize,
        }
    }
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::PerSite(3.0)
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Steps(t) => write!(f, "{t}"),
            Horizon::PerSite(c) => write!(f, "{c}L"),
        }
    }
}

impl FromStr for Horizon {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || invalid("t_max", format!("expected an integer or <c>L, got `{s}`"));
        match s.strip_suffix('L') {
            Some(c) => {
                let c: f64 = if c.is_empty() { 1.0 } else { c.parse().map_err(|_| bad())? };
                (c.is_finite() && c > 0.0).then_some(Horizon::PerSite(c)).ok_or_else(bad)
            }
            None => s.parse().map(Horizon::Steps).map_err(|_| bad()),
        }
    }
}

/// Parses `1.2`, `pi`, `-pi/4`, `2pi/3`, `2*pi/3`.
pub fn parse_angle(s: &str) -> Result<f64, ConfigError> {
    let bad = || invalid("theta", format!("cannot parse angle `{s}`"));
    let t = s.trim();
    if let Ok(x) = t.parse::<f64>() {
        return x.is_finite().then_some(x).ok_or_else(bad);
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().map_err(|_| bad())?),
        None => (t, 1.0),
    };
    let coeff = num.strip_suffix("pi").ok_or_else(bad)?.trim_end_matches('*').trim();
    let k = match coeff {
        "" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    if den == 0.0 {
        return Err(bad());
    }
    Ok(k * PI / den)
}

/// Writes `θ` as `k*pi/n` when that spelling parses back to the same bits.
pub fn format_angle(theta: f64) -> String {
    for n in 1..=24i64 {
        for k in -4 * n..=4 * n {
            if k != 0 && (k as f64) * PI / (n as f64) == theta {
                let num = match k {
                    1 => "pi".to_string(),
                    -1 => "-pi".to_string(),
                    k => format!("{k}*pi"),
                };
                return if n == 1 { num } else { format!("{num}/{n}") };
            }
        }
    }
    format!("{theta:?}")
}

/// One point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub l: usize,
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub t_max: Horizon,
    pub n_samples: usize,
    pub master_seed: u64,
    pub perturb: bool,
    pub observables: Vec<Observable>,
    pub record_every: usize,
    pub init: InitPolicy,
}

impl ExperimentConfig {
    pub fn classical(l: usize, p: f64, q: f64) -> Self {
        Self {
            mode: Mode::Classical,
            l,
            p,
            q,
            theta: PI / 2.0,
            t_max: Horizon::default(),
            n_samples: 1,
            master_seed: 0,
            perturb: false,
            observables: vec![Observable::Hzz],
            record_every: 1,
            init: InitPolicy::RandomCb,
        }
    }

    pub fn quantum(l: usize, p: f64, q: f64, theta: f64) -> Self {
        Self { mode: Mode::Quantum, theta, ..Self::classical(l, p, q) }
    }

    pub fn steps(&self) -> usize {
        self.t_max.resolve(self.l)
    }

    /// Times at which observables are recorded: 0, every `record_every`
    /// steps, and the final step.
    pub fn record_times(&self) -> Vec<usize> {
        let t_max = self.steps();
        (0..=t_max).filter(|&t| t % self.record_every == 0 || t == t_max).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = self.l;
        if l < 4 || l % 2 == 1 {
            return Err(invalid("L", format!("need an even L >= 4, got {l}")));
        }
        if self.mode == Mode::Quantum && l > MAX_QUANTUM_L {
            return Err(invalid("L", format!("quantum mode supports L <= {MAX_QUANTUM_L}")));
        }
        for (field, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(if field == "p" { "p" } else { "q" }, format!("{v} is outside [0, 1]")));
            }
        }
        if !self.theta.is_finite() {
            return Err(invalid("theta", "must be finite"));
        }
        if self.mode == Mode::Classical && self.theta != PI / 2.0 {
            return Err(invalid("theta", "classical mode runs at theta = pi/2"));
        }
        if self.n_samples == 0 {
            return Err(invalid("samples", "need at least one sample"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be positive"));
        }
        if self.observables.is_empty() {
            return Err(invalid("observables", "nothing to record"));
        }
        let mut seen = self.observables.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.observables.len() {
            return Err(invalid("observables", "duplicate entry"));
        }
        match &self.init {
            InitPolicy::AncillaJoint if self.mode == Mode::Classical => {
                return Err(invalid("init", "ancilla_joint requires quantum mode"))
            }
            InitPolicy::Explicit(bits) => {
                let (cfg, n) = parse_config(bits).map_err(|e: HilbertError| invalid("init", e.to_string()))?;
                if n != l {
                    return Err(invalid("init", format!("configuration has {n} sites, L = {l}")));
                }
                if !is_valid(cfg, l) {
                    return Err(invalid("init", format!("`{bits}` has adjacent excitations")));
                }
            }
            _ => {}
        }
        let has_anc = self.init == InitPolicy::AncillaJoint;
        if self.observables.contains(&Observable::Sanc) && !has_anc {
            return Err(invalid("observables", "sanc needs init = ancilla_joint"));
        }
        if self.observables.contains(&Observable::Tmi) && !l.is_multiple_of(4) {
            return Err(invalid("observables", format!("tmi needs L divisible by 4, got {l}")));
        }
        Ok(())
    }
}

/// A grid of experiment points sharing one template.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub template: ExperimentConfig,
    pub ls: Vec<usize>,
    pub ps: Vec<f64>,
    pub qs: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    /// Grid points in `(L, p, q)` lexicographic order.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::with_capacity(self.ls.len() * self.ps.len() * self.qs.len());
        for &l in &self.ls {
            for &p in &self.ps {
                for &q in &self.qs {
                    out.push(ExperimentConfig { l, p, q, ..self.template.clone() });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.points().iter().try_for_each(ExperimentConfig::validate)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, got `{line}`") })?;
            let k = k.trim().to_string();
            if entries.iter().any(|(e, _)| *e == k) {
                return Err(ConfigError::DuplicateKey(k));
            }
            entries.push((k, v.trim().to_string()));
        }
        let get = |k: &str| entries.iter().find(|(e, _)| e == k).map(|(_, v)| v.as_str());
        for (k, _) in &entries {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        fn list<T: FromStr>(field: &'static str, v: &str) -> Result<Vec<T>, ConfigError> {
            v.split(',')
                .map(|x| x.trim().parse::<T>().map_err(|_| invalid(field, format!("cannot parse `{}`", x.trim()))))
                .collect()
        }
        fn one<T: FromStr>(field: &'static str, v: &str) -> Result<T, ConfigError> {
            v.parse::<T>().map_err(|_| invalid(field, format!("cannot parse `{v}`")))
        }

        let mode: Mode = get("mode").ok_or(ConfigError::Missing("mode"))?.parse()?;
        let ls: Vec<usize> = list("L", get("L").ok_or(ConfigError::Missing("L"))?)?;
        let ps: Vec<f64> = list("p", get("p").ok_or(ConfigError::Missing("p"))?)?;
        let qs: Vec<f64> = list("q", get("q").ok_or(ConfigError::Missing("q"))?)?;
        let theta = match get("theta") {
            Some(v) => parse_angle(v)?,
            None if mode == Mode::Classical => PI / 2.0,
            None => return Err(ConfigError::Missing("theta")),
        };
        let template = ExperimentConfig {
            mode,
            l: ls[0],
            p: ps[0],
            q: qs[0],
            theta,
            t_max: get("t_max").map(str::parse).transpose()?.unwrap_or_default(),
            n_samples: one("samples", get("samples").ok_or(ConfigError::Missing("samples"))?)?,
            master_seed: one("seed", get("seed").ok_or(ConfigError::Missing("seed"))?)?,
            perturb: get("perturb").map(|v| one("perturb", v)).transpose()?.unwrap_or(false),
            observables: match get("observables") {
                Some(v) => list("observables", v)?,
                None => vec![Observable::Hzz],
            },
            record_every: get("record_every").map(|v| one("record_every", v)).transpose()?.unwrap_or(1),
            init: get("init").map(str::parse).transpose()?.unwrap_or(InitPolicy::RandomCb),
        };
        let spec = SweepSpec { template, ls, ps, qs, output: get("output").map(PathBuf::from) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn serialize(&self) -> String {
        let t = &self.template;
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("mode", t.mode.to_string());
        put("L", join(self.ls.iter().map(|l| l.to_string()).collect()));
        put("p", join(self.ps.iter().map(|p| format!("{p:?}")).collect()));
        put("q", join(self.qs.iter().map(|q| format!("{q:?}")).collect()));
        put("theta", format_angle(t.theta));
        put("t_max", t.t_max.to_string());
        put("samples", t.n_samples.to_string());
        put("seed", t.master_seed.to_string());
        put("perturb", t.perturb.to_string());
        put("observables", join(t.observables.iter().map(|o| o.to_string()).collect()));
        put("record_every", t.record_every.to_string());
        put("init", t.init.to_string());
        if let Some(o) = &self.output {
            put("output", o.display().to_string());
        }
        out
    }
}

impl From<ExperimentConfig> for SweepSpec {
    fn from(c: ExperimentConfig) -> Self {
        SweepSpec { ls: vec![c.l], ps: vec![c.p], qs: vec![c.q], template: c, output: None }
    }
}

const KEYS: [&str; 13] = [
    "mode",
    "L",
    "p",
    "q",
    "theta",
    "t_max",
    "samples",
    "seed",
    "perturb",
    "observables",
    "record_every",
    "init",
    "output",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "
        # classical sweep
        mode = classical
        L = 100, 200
        p = 0.3, 0.5   ; two points
        q = 0.2
        t_max = 2L
        samples = 50
        seed = 11
        observables = hzz, zprofile
    ";

    #[test]
    fn parses_a_sweep() {
        let s = SweepSpec::parse(SAMPLE).unwrap();
        assert_eq!(s.ls, vec![100, 200]);
        assert_eq!(s.ps, vec![0.3, 0.5]);
        assert_eq!(s.template.theta, PI / 2.0);
        assert_eq!(s.template.t_max.resolve(100), 200);
        assert_eq!(s.points().len(), 4);
        assert_eq!(s.points()[1].p, 0.5);
        assert_eq!(s.points()[2].l, 200);
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/3").unwrap(), PI / 3.0);
        assert_eq!(parse_angle("2*pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("-pi").unwrap(), -PI);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert!(parse_angle("tau").is_err());
        assert_eq!(format_angle(PI / 2.0), "pi/2");
        assert_eq!(format_angle(0.25), "0.25");
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = ExperimentConfig::classical(12, 0.5, 0.2);
        assert!(c.validate().is_ok());
        c.theta = 1.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::classical(12, 0.5, 0.2);
        c.init = InitPolicy::AncillaJoint;
        assert!(c.validate().is_err());
        c.mode = Mode::Quantum;
        assert!(c.validate().is_ok());
        let mut c = ExperimentConfig::quantum(10, 0.5, 0.2, 1.0);
        c.observables = vec![Observable::Tmi];
        assert!(c.validate().is_err());
        c.observables = vec![Observable::Sanc];
        assert!(c.validate().is_err());
        c.observables = vec![Observable::Hzz];
        c.init = InitPolicy::Explicit("0101010101".into());
        assert!(c.validate().is_ok());
        c.init = InitPolicy::Explicit("0110010101".into());
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::classical(7, 0.5, 0.2).validate().is_err());
        assert!(ExperimentConfig::classical(8, 1.5, 0.2).validate().is_err());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = SweepSpec::parse("mode = classical\nL = 8\np = 0.5\nq = 2\nsamples = 1\nseed = 0").unwrap_err();
        assert!(e.to_string().contains("`q`"), "{e}");
        let e = SweepSpec::parse("mode = classical\nL = 8\nfoo = 1").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey("foo".into()));
        let e = SweepSpec::parse("mode = classical\nL 8").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn record_grid() {
        let mut c = ExperimentConfig::classical(4, 0.0, 0.0);
        c.t_max = Horizon::Steps(7);
        c.record_every = 3;
        assert_eq!(c.record_times(), vec![0, 3, 6, 7]);
    }

    proptest! {
        #[test]
        fn round_trip(
            quantum in any::<bool>(),
            ls in proptest::collection::vec(2usize..9, 1..4),
            ps in proptest::collection::vec(0.0f64..=1.0, 1..4),
            qs in proptest::collection::vec(0.0f64..=1.0, 1..3),
            theta in -4.0f64..4.0,
            steps in proptest::option::of(1usize..500),
            samples in 1usize..10_000,
            seed in any::<u64>(),
            perturb in any::<bool>(),
            every in 1usize..5,
        ) {
            let ls: Vec<usize> = ls.into_iter().map(|l| 4 * l).collect();
            let mut template = if quantum {
                ExperimentConfig::quantum(ls[0], ps[0], qs[0], theta)
            } else {
                ExperimentConfig::classical(ls[0], ps[0], qs[0])
            };
            if quantum {
                template.observables = vec![Observable::Sa, Observable::Hzz, Observable::Tmi];
            }
            template.t_max = steps.map(Horizon::Steps).unwrap_or(Horizon::PerSite(1.5));
            template.n_samples = samples;
            template.master_seed = seed;
            template.perturb = perturb;
            template.record_every = every;
            let spec = SweepSpec { template, ls, ps, qs, output: Some("out/dir".into()) };
            let text = spec.serialize();
            let back = SweepSpec::parse(&text).unwrap();
            prop_assert_eq!(&back, &spec);
            prop_assert_eq!(SweepSpec::parse(&back.serialize()).unwrap(), back);
        }
    }
}
