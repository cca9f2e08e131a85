//! Finite-size-scaling analysis.
//!
//! A [`ScalingDataset`] holds `(L, x, value, sem)` points where `x` is the
//! control rate (static collapses) or the time (dynamic collapses). A
//! [`CollapseAnsatz`] maps each point to scaled coordinates `(X, Y, σ_Y)`;
//! [`chi2_cost`] measures how well all sizes fall on one master curve, and
//! [`collapse`] minimizes it and attaches profile error bars: the range over
//! which the cost, re-minimized over the remaining parameters, stays below
//! `1.3 × χ²_min`.
//!
//! The master curve near each point is a weighted straight line through its
//! [`NEIGHBOURS`] nearest scaled neighbours from *other* system sizes. A
//! point enters the cost only if at least two such neighbours exist and its
//! `X` lies inside their span. The cost is the mean of
//! `(Y_i − Ŷ_i)² / (σ_i² + Var Ŷ_i)` over the points that enter.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Observable;
use crate::harness::{interpolate_at, AggregatedSeries};
use crate::io::CsvRow;

/// Foreign-size neighbours used by the local master-curve estimate.
pub const NEIGHBOURS: usize = 4;
/// Profile error bars end where the cost exceeds this multiple of the minimum.
pub const ERROR_RATIO: f64 = 1.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FssError {
    #[error("need at least {need} system sizes, got {got}")]
    TooFewSizes { need: usize, got: usize },
    #[error("point {index} is not usable: {msg}")]
    BadPoint { index: usize, msg: String },
    #[error("only {used} of {total} points overlap other sizes in scaled coordinates")]
    InsufficientOverlap { used: usize, total: usize },
    #[error("unknown parameter `{name}` for {form}")]
    UnknownParameter { name: String, form: AnsatzForm },
    #[error("no free parameters")]
    NothingToFit,
    #[error("parameter vector has {got} entries, expected {need}")]
    Arity { need: usize, got: usize },
    #[error("{0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub l: f64,
    pub x: f64,
    pub value: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDataset {
    points: Vec<ScalePoint>,
}

impl ScalingDataset {
    pub fn new(points: Vec<ScalePoint>) -> Result<Self, FssError> {
        for (index, p) in points.iter().enumerate() {
            if !(p.l > 0.0 && p.x.is_finite() && p.value.is_finite()) {
                return Err(FssError::BadPoint { index, msg: format!("{p:?}") });
            }
            if !(p.sem > 0.0 && p.sem.is_finite()) {
                return Err(FssError::BadPoint { index, msg: format!("sem must be positive, got {}", p.sem) });
            }
        }
        let d = Self { points };
        let sizes = d.sizes().len();
        if sizes < 3 {
            return Err(FssError::TooFewSizes { need: 3, got: sizes });
        }
        Ok(d)
    }

    pub fn points(&self) -> &[ScalePoint] {
        &self.points
    }

    pub fn sizes(&self) -> Vec<f64> {
        let mut ls: Vec<f64> = self.points.iter().map(|p| p.l).collect();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        ls
    }

    /// Copy with every `sem` multiplied by `factor`.
    pub fn with_scaled_errors(&self, factor: f64) -> Self {
        Self { points: self.points.iter().map(|p| ScalePoint { sem: p.sem * factor, ..*p }).collect() }
    }
}

/// How aggregated time series become scaling points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalRule {
    /// Static collapse: value at `t* = c·L^z` for every `(L, p)`.
    AtTime { c: f64, z: f64 },
    /// Dynamic collapse: the series at one control rate, restricted to
    /// `max(1, t_min) ≤ t ≤ t_max`.
    AtRate { p: f64, t_min: f64, t_max: f64 },
}

/// Builds a dataset from aggregated CSV rows. Rows may hold several `q`
/// values only when `q` selects one of them. Points with zero error are
/// dropped.
pub fn dataset_from_rows(
    rows: &[CsvRow],
    observable: Observable,
    rule: EvalRule,
    q: Option<f64>,
) -> Result<ScalingDataset, FssError> {
    let mut groups: BTreeMap<(usize, u64, u64), Vec<&CsvRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.observable == observable && q.is_none_or(|q| (r.q - q).abs() < 1e-12)) {
        groups.entry((r.l, r.p.to_bits(), r.q.to_bits())).or_default().push(r);
    }
    let qs: std::collections::BTreeSet<u64> = groups.keys().map(|k| k.2).collect();
    if qs.len() > 1 {
        return Err(FssError::Fit(format!("rows mix {} values of q; select one", qs.len())));
    }
    let mut points = Vec::new();
    for ((l, p_bits, _), mut rs) in groups {
        rs.sort_by_key(|r| r.t);
        let p = f64::from_bits(p_bits);
        match rule {
            EvalRule::AtTime { c, z } => {
                let series = AggregatedSeries {
                    observable,
                    times: rs.iter().map(|r| r.t).collect(),
                    mean: rs.iter().map(|r| r.mean).collect(),
                    sem: rs.iter().map(|r| r.sem).collect(),
                    n: rs[0].n,
                };
                let t_star = c * (l as f64).powf(z);
                let (value, sem) = interpolate_at(&series, t_star).map_err(|e| FssError::Fit(format!("L={l}, p={p}: {e}")))?;
                if sem > 0.0 {
                    points.push(ScalePoint { l: l as f64, x: p, value, sem });
                }
            }
            EvalRule::AtRate { p: p0, t_min, t_max } if (p - p0).abs() < 1e-12 => {
                points.extend(
                    rs.iter()
                        .filter(|r| r.t >= 1 && r.t as f64 >= t_min && r.t as f64 <= t_max && r.sem > 0.0)
                        .map(|r| ScalePoint { l: l as f64, x: r.t as f64, value: r.mean, sem: r.sem }),
                );
            }
            EvalRule::AtRate { .. } => {}
        }
    }
    ScalingDataset::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzForm {
    /// `O = L^{−β/ν} f[L^{1/ν}(p − p_c)]`.
    Static,
    /// `O = L^{−β/ν} f[L^{1/ν}(p − p_c) + A·L^{−α}]`.
    StaticCorrected,
    /// `O = f[L^{1/ν}(p − p_c) + A·L^{−α}]`.
    StaticNoBeta,
    /// `O = L^{−β/ν} f(t / L^z)`.
    Dynamic,
    /// `L^{β/ν}·O + B·L^{−γ} = f(t / L^z)`.
    DynamicShifted,
    /// `O = h(t / L^z)`.
    Purification,
}

impl AnsatzForm {
    pub const ALL: [AnsatzForm; 6] = [
        AnsatzForm::Static,
        AnsatzForm::StaticCorrected,
        AnsatzForm::StaticNoBeta,
        AnsatzForm::Dynamic,
        AnsatzForm::DynamicShifted,
        AnsatzForm::Purification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnsatzForm::Static => "static",
            AnsatzForm::StaticCorrected => "static_corrected",
            AnsatzForm::StaticNoBeta => "static_no_beta",
            AnsatzForm::Dynamic => "dynamic",
            AnsatzForm::DynamicShifted => "dynamic_shifted",
            AnsatzForm::Purification => "purification",
        }
    }

    /// Parameter names in vector order.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            AnsatzForm::Static => &["pc", "nu", "beta"],
            AnsatzForm::StaticCorrected => &["pc", "nu", "beta", "a", "alpha"],
            AnsatzForm::StaticNoBeta => &["pc", "nu", "a", "alpha"],
            AnsatzForm::Dynamic => &["z", "beta", "nu"],
            AnsatzForm::DynamicShifted => &["z", "beta_over_nu", "b", "gamma"],
            AnsatzForm::Purification => &["z"],
        }
    }

    /// Scaled `(X, Y, σ_Y)` of one point.
    pub fn transform(self, v: &[f64], p: &ScalePoint) -> (f64, f64, f64) {
        let l = p.l;
        let static_x = |pc: f64, nu: f64| l.powf(1.0 / nu) * (p.x - pc);
        let scaled = |k: f64| (l.powf(k) * p.value, l.powf(k) * p.sem);
        match self {
            AnsatzForm::Static => {
                let (y, s) = scaled(v[2] / v[1]);
                (static_x(v[0], v[1]), y, s)
            }
            AnsatzForm::StaticCorrected => {
                let (y, s) = scaled(v[2] / v[1]);
                (static_x(v[0], v[1]) + v[3] * l.powf(-v[4]), y, s)
            }
            AnsatzForm::StaticNoBeta => (static_x(v[0], v[1]) + v[2] * l.powf(-v[3]), p.value, p.sem),
            AnsatzForm::Dynamic => {
                let (y, s) = scaled(v[1] / v[2]);
                (p.x / l.powf(v[0]), y, s)
            }
            AnsatzForm::DynamicShifted => {
                let (y, s) = scaled(v[1]);
                (p.x / l.powf(v[0]), y + v[2] * l.powf(-v[3]), s)
            }
            AnsatzForm::Purification => (p.x / l.powf(v[0]), p.value, p.sem),
        }
    }

    fn default_parameter(name: &str) -> Parameter {
        let (value, lo, hi) = match name {
            "pc" => (0.5, 0.0, 1.0),
            "nu" => (2.0, 0.2, 10.0),
            "beta" => (0.2, -5.0, 5.0),
            "a" | "b" => (0.0, -100.0, 100.0),
            "alpha" | "gamma" => (1.0, 0.01, 5.0),
            "z" => (1.0, 0.05, 4.0),
            "beta_over_nu" => (0.1, -3.0, 3.0),
            _ => unreachable!("parameter tables are closed"),
        };
        Parameter { name: name.to_string(), value, free: true, lo, hi }
    }
}

impl fmt::Display for AnsatzForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AnsatzForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        AnsatzForm::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| format!("unknown ansatz `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub free: bool,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseAnsatz {
    pub form: AnsatzForm,
    pub params: Vec<Parameter>,
}

impl CollapseAnsatz {
    pub fn new(form: AnsatzForm) -> Self {
        Self { form, params: form.parameters().iter().map(|n| AnsatzForm::default_parameter(n)).collect() }
    }

    fn slot(&mut self, name: &str) -> Result<&mut Parameter, FssError> {
        let form = self.form;
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| FssError::UnknownParameter { name: name.to_string(), form })
    }

    /// Sets the starting value of a free parameter.
    pub fn guess(mut self, name: &str, value: f64) -> Result<Self, FssError> {
        self.slot(name)?.value = value;
        Ok(self)
    }

    pub fn fix(mut self, name: &str, value: f64) -> Result<Self, FssError> {
        let p = self.slot(name)?;
        p.value = value;
        p.free = false;
        Ok(self)
    }

    pub fn bounds(mut self, name: &str, lo: f64, hi: f64) -> Result<Self, FssError> {
        let p = self.slot(name)?;
        p.lo = lo;
        p.hi = hi;
        Ok(self)
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params[i].free).collect()
    }
}

/// One point of the collapsed data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPoint {
    pub l: f64,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

pub fn scaled_points(values: &[f64], dataset: &ScalingDataset, form: AnsatzForm) -> Vec<ScaledPoint> {
    dataset
        .points()
        .iter()
        .map(|p| {
            let (x, y, sigma) = form.transform(values, p);
            ScaledPoint { l: p.l, x, y, sigma }
        })
        .collect()
}

/// Weighted least-squares line through `pts`, evaluated at `x0`, with the
/// variance of that prediction.
fn local_line(pts: &[ScaledPoint], x0: f64) -> (f64, f64) {
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let w = 1.0 / (p.sigma * p.sigma);
        s += w;
        sx += w * p.x;
        sxx += w * p.x * p.x;
        sy += w * p.y;
        sxy += w * p.x * p.y;
    }
    let delta = s * sxx - sx * sx;
    if delta <= 1e-12 * s * sxx.max(f64::MIN_POSITIVE) {
        return (sy / s, 1.0 / s);
    }
    let b = (s * sxy - sx * sy) / delta;
    let a = (sxx * sy - sx * sxy) / delta;
    (a + b * x0, (sxx - 2.0 * x0 * sx + x0 * x0 * s) / delta)
}

/// Cost and number of contributing points.
pub fn chi2_detail(values: &[f64], dataset: &ScalingDataset, form: AnsatzForm) -> Result<(f64, usize), FssError> {
    let need = form.parameters().len();
    if values.len() != need {
        return Err(FssError::Arity { need, got: values.len() });
    }
    let mut pts = scaled_points(values, dataset, form);
    if pts.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.sigma > 0.0 && p.sigma.is_finite())) {
        return Err(FssError::InsufficientOverlap { used: 0, total: pts.len() });
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.l.total_cmp(&b.l)));
    let n = pts.len();
    let mut total = 0.0;
    let mut used = 0usize;
    let mut nb = Vec::with_capacity(NEIGHBOURS);
    for i in 0..n {
        let me = pts[i];
        nb.clear();
        // Merge outward from i, taking the closer side first.
        let (mut lo, mut hi) = (i, i + 1);
        while nb.len() < NEIGHBOURS && (lo > 0 || hi < n) {
            let left = (lo > 0).then(|| me.x - pts[lo - 1].x);
            let right = (hi < n).then(|| pts[hi].x - me.x);
            let take_left = match (left, right) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                _ => false,
            };
            let j = if take_left {
                lo -= 1;
                lo
            } else {
                hi += 1;
                hi - 1
            };
            if pts[j].l != me.l {
                nb.push(pts[j]);
            }
        }
        if nb.len() < 2 {
            continue;
        }
        let (xmin, xmax) = nb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
        if me.x < xmin || me.x > xmax {
            continue;
        }
        let (yhat, var) = local_line(&nb, me.x);
        let r = me.y - yhat;
        total += r * r / (me.sigma * me.sigma + var.max(0.0));
        used += 1;
    }
    if used < (n / 2).max(3) {
        return Err(FssError::InsufficientOverlap { used, total: n });
    }
    Ok((total / used as f64, used))
}

/// Mean collapse cost per contributing point.
pub fn chi2_cost(values: &[f64], dataset: &ScalingDataset, form: AnsatzForm) -> Result<f64, FssError> {
    chi2_detail(values, dataset, form).map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Box-constrained Nelder–Mead; trial points are clamped into the box.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
    xtol: f64,
    ftol: f64,
) -> Minimum {
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for k in 0..n {
            x[k] = x[k].clamp(lo[k], hi[k]);
        }
    };
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut start = x0.to_vec();
    clamp(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), eval(&start))];
    for k in 0..n {
        let span = hi[k] - lo[k];
        let mut v = start.clone();
        let step = 0.05 * span.min(10.0 * v[k].abs().max(0.1));
        v[k] = if v[k] + step <= hi[k] { v[k] + step } else { v[k] - step };
        clamp(&mut v);
        let fv = eval(&v);
        simplex.push((v, fv));
    }
    let mut converged = false;
    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fbest, fworst) = (simplex[0].1, simplex[n].1);
        let size = (1..=n)
            .flat_map(|i| (0..n).map(move |k| (i, k)))
            .map(|(i, k)| (simplex[i].0[k] - simplex[0].0[k]).abs() / (hi[k] - lo[k]))
            .fold(0.0, f64::max);
        if fbest.is_finite() && (fworst - fbest) <= ftol * (fbest.abs() + 1e-300) && size <= xtol
            || size <= 1e-3 * xtol
        {
            converged = fbest.is_finite();
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v.0[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| {
            let mut v: Vec<f64> = (0..n).map(|k| centroid[k] + t * (simplex[n].0[k] - centroid[k])).collect();
            clamp(&mut v);
            v
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = (0..n).map(|k| best[k] + 0.5 * (v.0[k] - best[k])).collect();
                    clamp(&mut x);
                    *v = (x.clone(), eval(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Minimum { x, fx, evaluations: evals.get(), converged }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseOptions {
    pub max_evals: usize,
    pub xtol: f64,
    pub ftol: f64,
    /// Offset of the restart grid, as a fraction of each parameter's range.
    pub restart_spread: f64,
    /// Skip the profile scan and report zero-width intervals.
    pub skip_errors: bool,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self { max_evals: 4000, xtol: 1e-7, ftol: 1e-9, restart_spread: 0.1, skip_errors: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameter {
    pub name: String,
    pub value: f64,
    pub free: bool,
    /// Profile interval `[lo, hi]`; equal to the value for fixed parameters.
    pub lo: f64,
    pub hi: f64,
    /// The interval reached a bound of the search box.
    pub at_bound: bool,
}

impl FittedParameter {
    /// Larger of the two one-sided distances to the interval ends.
    pub fn error(&self) -> f64 {
        (self.value - self.lo).max(self.hi - self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub form: AnsatzForm,
    pub params: Vec<FittedParameter>,
    pub chi2_min: f64,
    pub points_used: usize,
    pub points_total: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
    pub master_curve: Vec<ScaledPoint>,
}

impl CollapseResult {
    pub fn get(&self, name: &str) -> Option<&FittedParameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }
}

impl fmt::Display for CollapseResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ansatz = {}", self.form)?;
        for p in &self.params {
            if p.free {
                let flag = if p.at_bound { " at_bound" } else { "" };
                writeln!(f, "{} = {} [{}, {}]{}", p.name, p.value, p.lo, p.hi, flag)?;
            } else {
                writeln!(f, "{} = {} fixed", p.name, p.value)?;
            }
        }
        writeln!(f, "chi2_min = {}", self.chi2_min)?;
        writeln!(f, "points_used = {} of {}", self.points_used, self.points_total)?;
        writeln!(f, "evaluations = {}", self.evaluations)?;
        writeln!(f, "converged = {}", self.converged)?;
        for d in &self.diagnostics {
            writeln!(f, "note = {d}")?;
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Problem<'a> {
    dataset: &'a ScalingDataset,
    form: AnsatzForm,
    base: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    opts: CollapseOptions,
}

impl Problem<'_> {
    /// Cost with the parameters at `idx` replaced by `sub`.
    fn cost(&self, idx: &[usize], sub: &[f64]) -> f64 {
        let mut v = self.base.clone();
        for (&i, &x) in idx.iter().zip(sub) {
            v[i] = x;
        }
        chi2_cost(&v, self.dataset, self.form).unwrap_or(f64::INFINITY)
    }

    fn minimize(&self, idx: &[usize], start: &[f64]) -> Minimum {
        let lo: Vec<f64> = idx.iter().map(|&i| self.lo[i]).collect();
        let hi: Vec<f64> = idx.iter().map(|&i| self.hi[i]).collect();
        nelder_mead(|x| self.cost(idx, x), start, &lo, &hi, self.opts.max_evals, self.opts.xtol, self.opts.ftol)
    }
}

/// Minimizes [`chi2_cost`] from the ansatz starting values plus three
/// restarts on a coarse grid around them, then maps profile intervals.
pub fn collapse(dataset: &ScalingDataset, ansatz: &CollapseAnsatz, opts: CollapseOptions) -> Result<CollapseResult, FssError> {
    let free = ansatz.free_indices();
    if free.is_empty() {
        return Err(FssError::NothingToFit);
    }
    let mut prob = Problem {
        dataset,
        form: ansatz.form,
        base: ansatz.values(),
        lo: ansatz.params.iter().map(|p| p.lo).collect(),
        hi: ansatz.params.iter().map(|p| p.hi).collect(),
        opts,
    };
    let guess: Vec<f64> = free.iter().map(|&i| prob.base[i]).collect();
    let mut evaluations = 0;
    let mut diagnostics = Vec::new();

    let mut starts = vec![guess.clone()];
    for pattern in [-1.0, 1.0, 0.0] {
        starts.push(
            free.iter()
                .enumerate()
                .map(|(k, &i)| {
                    let sign = if pattern == 0.0 { if k % 2 == 0 { 1.0 } else { -1.0 } } else { pattern };
                    (guess[k] + sign * opts.restart_spread * (prob.hi[i] - prob.lo[i])).clamp(prob.lo[i], prob.hi[i])
                })
                .collect(),
        );
    }
    let mut best: Option<Minimum> = None;
    for s in &starts {
        let m = prob.minimize(&free, s);
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|b| m.fx < b.fx) {
            best = Some(m);
        }
    }
    // Polish from the best vertex.
    let mut best = best.expect("at least one start");
    let polish = prob.minimize(&free, &best.x.clone());
    evaluations += polish.evaluations;
    let converged = polish.converged;
    if polish.fx <= best.fx {
        best = polish;
    }
    if !converged {
        diagnostics.push(format!("simplex did not converge within {} evaluations", opts.max_evals));
    }
    if !best.fx.is_finite() {
        return Err(FssError::InsufficientOverlap { used: 0, total: dataset.points().len() });
    }
    for (&i, &x) in free.iter().zip(&best.x) {
        prob.base[i] = x;
    }
    let (chi2_min, used) = chi2_detail(&prob.base, dataset, ansatz.form)?;

    let mut params: Vec<FittedParameter> = ansatz
        .params
        .iter()
        .zip(&prob.base)
        .map(|(p, &v)| FittedParameter { name: p.name.clone(), value: v, free: p.free, lo: v, hi: v, at_bound: false })
        .collect();
    if !opts.skip_errors {
        let threshold = ERROR_RATIO * chi2_min;
        for &k in &free {
            for dir in [-1.0, 1.0] {
                let (edge, at_bound, n) = profile_edge(&prob, &free, k, dir, threshold);
                evaluations += n;
                if dir < 0.0 {
                    params[k].lo = edge;
                } else {
                    params[k].hi = edge;
                }
                params[k].at_bound |= at_bound;
            }
            if params[k].at_bound {
                diagnostics.push(format!("interval of {} reaches the search bound", params[k].name));
            }
        }
    }
    Ok(CollapseResult {
        form: ansatz.form,
        params,
        chi2_min,
        points_used: used,
        points_total: dataset.points().len(),
        evaluations,
        converged,
        diagnostics,
        master_curve: scaled_points(&prob.base, dataset, ansatz.form),
    })
}

/// Walks parameter `k` away from the optimum in direction `dir` until the
/// profile cost crosses `threshold`, then bisects the crossing.
fn profile_edge(prob: &Problem<'_>, free: &[usize], k: usize, dir: f64, threshold: f64) -> (f64, bool, usize) {
    let others: Vec<usize> = free.iter().copied().filter(|&i| i != k).collect();
    let evals = std::cell::Cell::new(0usize);
    let profile = |xk: f64, warm: &[f64]| -> (f64, Vec<f64>) {
        let mut sub = prob.clone();
        sub.base[k] = xk;
        if others.is_empty() {
            evals.set(evals.get() + 1);
            return (sub.cost(&[], &[]), vec![]);
        }
        let m = sub.minimize(&others, warm);
        evals.set(evals.get() + m.evaluations);
        (m.fx, m.x)
    };
    let (lo, hi) = (prob.lo[k], prob.hi[k]);
    let x0 = prob.base[k];
    let mut inside = x0;
    let mut warm: Vec<f64> = others.iter().map(|&i| prob.base[i]).collect();
    let mut step = 1e-4 * (hi - lo);
    let outside = loop {
        let trial = (inside + dir * step).clamp(lo, hi);
        if trial == inside {
            return (inside, true, evals.get());
        }
        let (c, w) = profile(trial, &warm);
        if c > threshold {
            break trial;
        }
        inside = trial;
        warm = w;
        step *= 2.0;
    };
    let (mut a, mut b) = (inside, outside);
    for _ in 0..20 {
        let mid = 0.5 * (a + b);
        let (c, w) = profile(mid, &warm);
        if c > threshold {
            b = mid;
        } else {
            a = mid;
            warm = w;
        }
    }
    (a, false, evals.get())
}

/// Least-squares line through `(ln t, ln y)`: returns `(exponent,
/// prefactor)` with `y ≈ prefactor · t^exponent`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(f64, f64), FssError> {
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(&t, _)| t >= window.0 && t <= window.1).map(|(&t, &y)| (t, y)).collect();
    if let Some((t, y)) = pts.iter().find(|(t, y)| *t <= 0.0 || *y <= 0.0) {
        return Err(FssError::Fit(format!("nonpositive point (t={t}, y={y}) in window")));
    }
    let (slope, icept) = line_fit(pts.iter().map(|&(t, y)| (t.ln(), y.ln())))?;
    Ok((slope, icept.exp()))
}

/// Fits `S(t) = S_∞ · exp(−Γ t / L)` over `t ≥ L/2`. Returns `(Γ, S_∞)`.
pub fn fit_entropy_decay(times: &[f64], values: &[f64], l: usize) -> Result<(f64, f64), FssError> {
    let l = l as f64;
    let pts: Vec<(f64, f64)> = times.iter().zip(values).filter(|(&t, _)| t >= l / 2.0).map(|(&t, &y)| (t, y)).collect();
    if pts.len() < 3 {
        return Err(FssError::Fit(format!("window t >= L/2 holds {} points, need 3", pts.len())));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| *y <= 0.0) {
        return Err(FssError::Fit(format!("nonpositive value {y} at t={t}")));
    }
    let (slope, icept) = line_fit(pts.iter().map(|&(t, y)| (t / l, y.ln())))?;
    Ok((-slope, icept.exp()))
}

fn line_fit(pts: impl Iterator<Item = (f64, f64)>) -> Result<(f64, f64), FssError> {
    let pts: Vec<(f64, f64)> = pts.collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(FssError::Fit("need at least two points".into()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(FssError::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
