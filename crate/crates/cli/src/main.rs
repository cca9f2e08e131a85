use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use pxpctl::config::{Observable, SweepSpec};
use pxpctl::fss::{collapse, dataset_from_rows, AnsatzForm, CollapseAnsatz, CollapseOptions, EvalRule};
use pxpctl::harness::{aggregate, worker_count, Experiment, WORKERS_ENV};
use pxpctl::io::{parse_csv, read_records, render_heatmap, rows_for, write_csv, write_records, Manifest, CSV_SCHEMA_VERSION};
use pxpctl::magmeter::{verify_equivalence, MagCircuit};

#[derive(Parser)]
#[command(name = "pxpctl", version, about = "Adaptive PXP circuit simulations and scaling analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of a sweep file and write aggregated CSV plus a manifest.
    Run(RunArgs),
    /// Finite-size-scaling collapse of aggregated CSV data.
    Collapse(CollapseArgs),
    /// Render a recorded <Z_j> trajectory as an SVG spacetime plot.
    Heatmap(HeatmapArgs),
    /// Check the ancilla-register magnetization circuit against direct projection.
    VerifyMagmeter(VerifyArgs),
    /// Quick internal consistency checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Sweep file (key = value lines).
    config: PathBuf,
    /// Output directory; overrides `output` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Also write every trajectory to records.jsonl.
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct CollapseArgs {
    /// Aggregated CSV files written by `run`.
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// static, static_corrected, static_no_beta, dynamic, dynamic_shifted, purification.
    #[arg(long, default_value = "static")]
    ansatz: AnsatzForm,
    #[arg(long, default_value = "hzz")]
    observable: Observable,
    /// Static collapse at t = C*L^Z, given as C,Z.
    #[arg(long, value_name = "C,Z", conflicts_with = "at_rate")]
    at_time: Option<String>,
    /// Dynamic collapse of the full series at this control rate.
    #[arg(long, value_name = "P")]
    at_rate: Option<f64>,
    /// Earliest time used by a dynamic collapse.
    #[arg(long, default_value_t = 1.0, requires = "at_rate")]
    t_min: f64,
    /// Latest time used by a dynamic collapse.
    #[arg(long, default_value_t = f64::INFINITY, requires = "at_rate")]
    t_max: f64,
    /// Select one correction density when the data holds several.
    #[arg(long)]
    q: Option<f64>,
    /// Starting value, NAME=VALUE.
    #[arg(long, value_name = "NAME=VALUE")]
    guess: Vec<String>,
    /// Frozen value, NAME=VALUE.
    #[arg(long, value_name = "NAME=VALUE")]
    fix: Vec<String>,
    /// Search box, NAME=LO:HI.
    #[arg(long, value_name = "NAME=LO:HI")]
    bounds: Vec<String>,
    /// Write PREFIX.txt and PREFIX_curve.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// records.jsonl written by `run --records`.
    records: PathBuf,
    /// Sample index to draw.
    #[arg(long, default_value_t = 0)]
    sample: u64,
    /// Cell edge in pixels.
    #[arg(long, default_value_t = 4)]
    cell: u32,
    /// Output SVG; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check every L from 1 up to this size.
    #[arg(long, default_value_t = 7)]
    max_l: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the gate list for this L and exit.
    #[arg(long)]
    export: Option<usize>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Collapse(a) => cmd_collapse(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::VerifyMagmeter(a) => cmd_verify(a),
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let spec = SweepSpec::parse(&text).with_context(|| format!("invalid config {}", a.config.display()))?;
    let out = a.out.or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("pxpctl-out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let workers = a.workers.filter(|&w| w > 0).unwrap_or_else(worker_count);

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let points = spec.points();
    let mut rows = Vec::new();
    let mut records_file = if a.records || spec.template.observables.contains(&Observable::Zprofile) {
        Some(std::io::BufWriter::new(fs::File::create(out.join("records.jsonl"))?))
    } else {
        None
    };
    for config in &points {
        let exp = Experiment::new(config.clone())?;
        let records = exp.run_ensemble(workers).with_context(|| format!("L={}, p={}, q={}", config.l, config.p, config.q))?;
        let scalars: Vec<Observable> =
            config.observables.iter().copied().filter(|&o| o != Observable::Zprofile).collect();
        if records.len() >= 2 && !scalars.is_empty() {
            let series = scalars.iter().map(|&o| aggregate(&records, o)).collect::<Result<Vec<_>, _>>()?;
            rows.extend(rows_for(config, &series));
        }
        if let Some(w) = records_file.as_mut() {
            write_records(w, &records)?;
        }
        eprintln!("done L={} p={} q={} ({} samples)", config.l, config.p, config.q, records.len());
    }
    fs::write(out.join("aggregated.csv"), write_csv(&rows))?;
    let manifest = Manifest {
        tool: "pxpctl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        csv_schema: CSV_SCHEMA_VERSION,
        master_seed: spec.template.master_seed,
        points: points.len(),
        samples_per_point: spec.template.n_samples,
        workers,
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        config: spec.serialize(),
    };
    fs::write(out.join("manifest.json"), manifest.to_json())?;
    println!("{}", manifest.to_json());
    Ok(())
}

fn split_kv<'a>(s: &'a str, what: &str) -> Result<(&'a str, &'a str)> {
    s.split_once('=').with_context(|| format!("expected NAME=VALUE for {what}, got `{s}`"))
}

fn cmd_collapse(a: CollapseArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.data {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        rows.extend(parse_csv(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let rule = match (&a.at_time, a.at_rate) {
        (Some(s), None) => {
            let (c, z) = s.split_once(',').context("--at-time expects C,Z")?;
            EvalRule::AtTime { c: c.trim().parse()?, z: z.trim().parse()? }
        }
        (None, Some(p)) => EvalRule::AtRate { p, t_min: a.t_min, t_max: a.t_max },
        (None, None) => bail!("give --at-time C,Z for a static collapse or --at-rate P for a dynamic one"),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let dataset = dataset_from_rows(&rows, a.observable, rule, a.q)?;
    let mut ansatz = CollapseAnsatz::new(a.ansatz);
    for g in &a.guess {
        let (k, v) = split_kv(g, "--guess")?;
        ansatz = ansatz.guess(k, v.parse()?)?;
    }
    for f in &a.fix {
        let (k, v) = split_kv(f, "--fix")?;
        ansatz = ansatz.fix(k, v.parse()?)?;
    }
    for b in &a.bounds {
        let (k, v) = split_kv(b, "--bounds")?;
        let (lo, hi) = v.split_once(':').context("--bounds expects NAME=LO:HI")?;
        ansatz = ansatz.bounds(k, lo.parse()?, hi.parse()?)?;
    }
    let result = collapse(&dataset, &ansatz, CollapseOptions::default())?;
    print!("{result}");
    if let Some(prefix) = a.out {
        fs::write(with_suffix(&prefix, ".txt"), result.to_string())?;
        let mut csv = String::from("L,x,y,sigma\n");
        for p in &result.master_curve {
            csv.push_str(&format!("{},{:?},{:?},{:?}\n", p.l, p.x, p.y, p.sigma));
        }
        fs::write(with_suffix(&prefix, "_curve.csv"), csv)?;
    }
    ensure!(result.converged, "collapse did not converge");
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<()> {
    let file = fs::File::open(&a.records).with_context(|| format!("opening {}", a.records.display()))?;
    let records = read_records(BufReader::new(file))?;
    let rec = records
        .iter()
        .find(|r| r.sample_index == a.sample)
        .with_context(|| format!("sample {} not in {}", a.sample, a.records.display()))?;
    let svg = render_heatmap(rec, a.cell)?;
    match a.out {
        Some(p) => fs::write(&p, svg).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{svg}"),
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    if let Some(l) = a.export {
        ensure!(l >= 1, "--export needs L >= 1");
        print!("{}", MagCircuit::new(l).export());
        return Ok(());
    }
    ensure!((1..=10).contains(&a.max_l), "--max-l must lie in 1..=10");
    let mut failed = 0;
    for l in 1..=a.max_l {
        let r = verify_equivalence(l, a.trials, a.seed.wrapping_add(l as u64));
        println!(
            "L={l} N={} trials={} max_prob_dev={:e} min_fidelity={} {}",
            MagCircuit::new(l).n_ancilla(),
            r.trials,
            r.max_probability_deviation,
            r.min_fidelity,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        for f in r.failures.iter().take(3) {
            println!("  {f}");
        }
        failed += usize::from(!r.passed());
    }
    ensure!(failed == 0, "{failed} sizes failed");
    Ok(())
}

type Check = fn() -> Result<()>;

fn cmd_selftest() -> Result<()> {
    let checks: [(&str, Check); 5] = [
        ("basis dimensions", selftest::dimensions),
        ("vacuum orbit", selftest::orbit),
        ("engine agreement", selftest::engines),
        ("magnetization meter", selftest::magmeter),
        ("full control absorbs", selftest::absorption),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e:#}");
            }
        }
    }
    ensure!(failed == 0, "{failed} self-test checks failed");
    Ok(())
}

mod selftest {
    use anyhow::{ensure, Result};
    use pxpctl::automaton::BitState;
    use pxpctl::config::{ExperimentConfig, Horizon, Observable};
    use pxpctl::harness::run_trajectory;
    use pxpctl::hilbert::{dimension, is_valid, FibBasis};
    use pxpctl::magmeter::verify_equivalence;

    pub fn dimensions() -> Result<()> {
        for l in (4..=16).step_by(2) {
            let brute = (0..1u64 << l).filter(|&c| is_valid(c, l)).count();
            ensure!(FibBasis::enumerate(l)?.dim() == brute, "L={l}");
            ensure!(dimension(l)? == Some(brute as u128), "L={l}");
        }
        Ok(())
    }

    pub fn orbit() -> Result<()> {
        let mut s = BitState::zeros(12);
        let start = s.clone();
        for _ in 0..3 {
            s.ca_upxp();
            ensure!(s.h_zz() == 0.0);
        }
        ensure!(s == start, "period is not 3");
        Ok(())
    }

    pub fn engines() -> Result<()> {
        let q = ExperimentConfig::quantum(10, 0.5, 0.5, std::f64::consts::FRAC_PI_2);
        let c = ExperimentConfig::classical(10, 0.5, 0.5);
        for i in 0..10 {
            let (a, b) = (run_trajectory(&q, i)?, run_trajectory(&c, i)?);
            ensure!(a.series == b.series && a.circuit == b.circuit, "sample {i} differs");
        }
        Ok(())
    }

    pub fn magmeter() -> Result<()> {
        for l in 1..=4 {
            let r = verify_equivalence(l, 10, l as u64);
            ensure!(r.passed(), "L={l}: {:?}", r.failures.first());
        }
        Ok(())
    }

    pub fn absorption() -> Result<()> {
        let mut c = ExperimentConfig::quantum(8, 1.0, 1.0, 1.0);
        c.t_max = Horizon::Steps(16);
        c.observables = vec![Observable::Hzz];
        for i in 0..5 {
            let r = run_trajectory(&c, i)?;
            ensure!(r.series(Observable::Hzz).and_then(|h| h.last()) == Some(&0.0), "sample {i}");
        }
        Ok(())
    }
}
