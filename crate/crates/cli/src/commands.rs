use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pinn_ns::config::{ConfigError, TrainRunConfig};
use pinn_ns::data::{
    assemble_split, load_snapshots, save_snapshots, taylor_green_dataset, taylor_green_point, write_samples, DataError,
    LabeledPoint, SpaceTimeBox,
};
use pinn_ns::eval::{evaluate, lift_series, time_shift, vorticity_field, EvalError, Grid, Model, VorticityReference};
use pinn_ns::network::{Interval, NetworkError};
use pinn_ns::oracle::run_suite;
use pinn_ns::physics::{cylinder_panels, PhysicsError};
use pinn_ns::rng;
use pinn_ns::sampling::{sample_boundary, sample_interior, BoundaryCounts, DomainSpec, SamplingError};
use pinn_ns::training::{train_with, write_metric_log, Checkpoint, Mode, TrainingError};

/// Name that selects the analytic Taylor-Green solution instead of a file.
pub const ANALYTIC_TAYLOR_GREEN: &str = "analytic:taylor-green";

pub const CHECKPOINT_FILE: &str = "checkpoint.pnns";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_GOOD_FILE: &str = "last-good.pnns";

/// Stream for evaluation residual points, clear of the sampling streams.
const EVAL_RESIDUAL_STREAM: u64 = 6;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    fn new(code: &'static str, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: 1,
        }
    }

    fn usage(code: &'static str, message: impl ToString) -> Self {
        Self {
            exit: 2,
            ..Self::new(code, message)
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::new("io-error", e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::NotFound(_) => Self::usage("config-not-found", e),
            ConfigError::Io(e) => e.into(),
            _ => Self::usage("config-invalid", e),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(e) => e.into(),
            DataError::OrphanNu(_) | DataError::OverlappingSplit(_) => Self::new("split-invalid", e),
            _ => Self::new("data-invalid", e),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::NonFiniteOutput(_) => Self::new("non-finite-output", e),
            _ => Self::new("network-invalid", e),
        }
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        Self::new("sampling-invalid", e)
    }
}

impl From<PhysicsError> for CliError {
    fn from(e: PhysicsError) -> Self {
        match e {
            PhysicsError::Network(e) => e.into(),
            PhysicsError::Sampling(e) => e.into(),
            PhysicsError::TooFewPanels(_) | PhysicsError::InvalidDiameter(_) => Self::usage("bad-argument", e),
            _ => Self::new("physics-error", e),
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Config(e) => e.into(),
            TrainingError::Data(e) => e.into(),
            TrainingError::Network(e) => e.into(),
            TrainingError::Physics(e) => e.into(),
            TrainingError::Sampling(e) => e.into(),
            TrainingError::Io(e) => e.into(),
            TrainingError::EmptyBatch(_) => Self::new("empty-batch", e),
            TrainingError::InvalidWeights => Self::usage("config-invalid", e),
            TrainingError::ResumeMismatch => Self::new("resume-mismatch", e),
            TrainingError::CorruptCheckpoint(_) | TrainingError::UnsupportedVersion(_) => {
                Self::new("checkpoint-invalid", e)
            }
            TrainingError::NonFiniteLoss { .. } => Self::new("non-finite-loss", e),
            TrainingError::ShapeMismatch { .. } => Self::new("internal-error", e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Physics(e) => e.into(),
            EvalError::Data(e) => e.into(),
            EvalError::Io(e) => e.into(),
            EvalError::ConfigMismatch { .. } => Self::new("config-mismatch", e),
            EvalError::DegenerateSeries => Self::new("degenerate-series", e),
            EvalError::NoGrid => Self::new("no-grid", e),
            EvalError::MissingResidualPoints(_) => Self::new("missing-residual-points", e),
            _ => Self::usage("bad-argument", e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("data-invalid", e)
    }
}

/// Writes through `f` to `path`, or to stdout without one.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let resume = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    let mut run = match (&args.config, &resume) {
        (Some(path), _) => TrainRunConfig::load(path)?,
        (None, Some(c)) => TrainRunConfig {
            epochs: 0,
            ..c.run.clone()
        },
        (None, None) => return Err(CliError::usage("config-not-found", "train needs --config or --resume")),
    };
    if let Some(m) = &args.mode {
        run.weights.mode =
            Mode::parse(m).ok_or_else(|| CliError::usage("bad-argument", format!("unknown mode {m}")))?;
    }
    if let Some(seed) = args.seed {
        run.seed = seed;
        run.sampling.seed = seed;
    }
    if let Some(e) = args.epochs {
        run.epochs = e;
    }
    if let Some(out) = &args.out {
        run.output_dir = Some(out.clone());
    }
    run.validate()?;
    let out_dir = run.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let every = run.checkpoint_every;
    let result = train_with(&run, resume, |entry, progress| {
        if every > 0 && entry.epoch % every == 0 {
            progress
                .checkpoint()?
                .save(&out_dir.join(format!("checkpoint-{:06}.pnns", progress.epoch())))?;
        }
        Ok(())
    });
    let outcome = match result {
        Ok(o) => o,
        Err(TrainingError::NonFiniteLoss { epoch, last_good }) => {
            let path = out_dir.join(LAST_GOOD_FILE);
            last_good.save(&path)?;
            return Err(CliError::new(
                "non-finite-loss",
                format!(
                    "non-finite loss in epoch {epoch}; last good state saved to {}",
                    path.display()
                ),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    outcome.checkpoint.save(&out_dir.join(CHECKPOINT_FILE))?;
    write_metric_log(BufWriter::new(File::create(out_dir.join(METRICS_FILE))?), &outcome.log)?;
    println!(
        "epochs {} final_loss {:e}",
        outcome.checkpoint.epoch(),
        outcome.checkpoint.final_loss
    );
    Ok(())
}

/// The model behind `name` and the domain it was trained on, if any.
fn load_model(name: &str) -> Result<(Model, Option<TrainRunConfig>), CliError> {
    if name == ANALYTIC_TAYLOR_GREEN {
        return Ok((Model::TaylorGreen, None));
    }
    if let Some(rest) = name.strip_prefix("analytic:") {
        return Err(CliError::usage(
            "bad-argument",
            format!("unknown analytic model `{rest}`"),
        ));
    }
    let c = Checkpoint::load(Path::new(name))?;
    let run = c.run.clone();
    Ok((Model::from_checkpoint(c), Some(run)))
}

fn distinct_nus(points: &[LabeledPoint]) -> Vec<f64> {
    let bits: BTreeSet<u64> = points.iter().map(|p| p.nu.to_bits()).collect();
    bits.into_iter().map(f64::from_bits).collect()
}

fn span(values: impl Iterator<Item = f64>) -> Interval {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Interval::new(lo, hi)
}

/// `n` points per ν, uniform over the space-time extent of that ν's labels,
/// outside the obstacle.
fn residual_points(
    points: &[LabeledPoint],
    nus: &[f64],
    n: usize,
    domain: Option<&DomainSpec>,
    seed: u64,
) -> Vec<[f64; 4]> {
    let mut g = rng::stream(seed, EVAL_RESIDUAL_STREAM);
    let mut out = Vec::with_capacity(nus.len() * n);
    for &nu in nus {
        let group: Vec<&LabeledPoint> = points
            .iter()
            .filter(|p| (p.nu - nu).abs() <= pinn_ns::data::NU_MATCH_TOL)
            .collect();
        if group.is_empty() {
            continue;
        }
        let (x, y, t) = (
            span(group.iter().map(|p| p.x)),
            span(group.iter().map(|p| p.y)),
            span(group.iter().map(|p| p.t)),
        );
        let mut accepted = 0;
        while accepted < n {
            let q = [
                rng::uniform(&mut g, x.lo, x.hi),
                rng::uniform(&mut g, y.lo, y.hi),
                rng::uniform(&mut g, t.lo, t.hi),
                nu,
            ];
            if domain.is_some_and(|d| d.in_obstacle(q[0], q[1])) {
                continue;
            }
            out.push(q);
            accepted += 1;
        }
    }
    out
}

pub struct EvalArgs {
    pub checkpoint: String,
    pub data: PathBuf,
    pub residual_n: usize,
    pub train_nus: Option<Vec<f64>>,
    pub test_nus: Option<Vec<f64>>,
    pub vorticity_reference: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    if args.residual_n == 0 {
        return Err(CliError::usage("bad-argument", "--residual-n must be positive"));
    }
    let (model, run) = load_model(&args.checkpoint)?;
    let points = load_snapshots(&args.data)?;
    let reference = VorticityReference::parse(&args.vorticity_reference)
        .ok_or_else(|| CliError::usage("bad-argument", "unknown vorticity reference"))?;

    // Without explicit lists: the checkpoint's split, or every ν in the file
    // as a test value for the analytic model.
    let (mut train_nus, mut test_nus) = match &run {
        Some(r) => (r.train_nus.clone(), r.test_nus.clone()),
        None => (Vec::new(), distinct_nus(&points)),
    };
    if let Some(v) = args.train_nus {
        train_nus = v;
    }
    if let Some(v) = args.test_nus {
        test_nus = v;
    }
    let split = assemble_split(&points, &train_nus, &test_nus)?;
    let all_nus: Vec<f64> = train_nus.iter().chain(&test_nus).copied().collect();
    let residual = residual_points(
        &points,
        &all_nus,
        args.residual_n,
        run.as_ref().map(|r| &r.domain),
        args.seed,
    );

    let mut report = evaluate(&model, &split, &residual, reference)?;
    report.seed = Some(args.seed);
    emit(args.out.as_deref(), |w| Ok(report.write_csv(w)?))?;
    if let Some(out) = &args.out {
        fs::write(meta_path(out), report.metadata())?;
    }
    Ok(())
}

/// Sidecar metadata file for a report at `path`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn model_domain(run: Option<&TrainRunConfig>) -> DomainSpec {
    match run {
        Some(r) => r.domain,
        None => DomainSpec::taylor_green(Interval::new(0.0, 1.0), Interval::new(1e-4, 1.0)),
    }
}

pub fn vorticity(
    checkpoint: &str,
    nu: f64,
    t: f64,
    nx: usize,
    ny: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (model, run) = load_model(checkpoint)?;
    let domain = model_domain(run.as_ref());
    let grid = Grid {
        nx,
        ny,
        x: domain.x,
        y: domain.y,
    };
    let field = vorticity_field(&model, &domain, nu, t, grid)?;
    emit(out.as_deref(), |w| Ok(field.write(w)?))
}

pub fn lift(
    checkpoint: &str,
    nu: f64,
    t_range: (f64, f64),
    steps: usize,
    panels: usize,
    diameter: f64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (model, run) = load_model(checkpoint)?;
    let cylinder = run.as_ref().and_then(|r| r.domain.cylinder);
    let (center, diameter) = match cylinder {
        Some(c) => (c.center, c.diameter),
        None => ([0.0, 0.0], diameter),
    };
    let mut surface = cylinder_panels(panels, diameter)?;
    for s in &mut surface {
        s.x += center[0];
        s.y += center[1];
    }
    let series = lift_series(&model, nu, Interval::new(t_range.0, t_range.1), steps, &surface)?;
    emit(out.as_deref(), |w| {
        writeln!(w, "t,lift")?;
        for (t, l) in &series {
            writeln!(w, "{t:?},{l:?}")?;
        }
        Ok(())
    })
}

/// A two-column `t,value` series with a header line.
fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(File::open(path)?));
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let bad = || CliError::new("data-invalid", format!("{}: malformed row {}", path.display(), i + 2));
        if record.len() != 2 {
            return Err(bad());
        }
        let parse = |k: usize| record[k].trim().parse::<f64>().ok().filter(|x| x.is_finite());
        t.push(parse(0).ok_or_else(bad)?);
        v.push(parse(1).ok_or_else(bad)?);
    }
    Ok((t, v))
}

pub fn timeshift(pred: &Path, reference: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let (tp, vp) = read_series(pred)?;
    let (tr, vr) = read_series(reference)?;
    if tp.len() < 2 || tp.len() != tr.len() {
        return Err(EvalError::BadSeriesLength(tp.len(), tr.len()).into());
    }
    let dt = tp[1] - tp[0];
    let tol = 1e-9 * dt.abs().max(1e-300);
    let uniform = tp.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e3 * tol);
    let aligned = tp.iter().zip(&tr).all(|(a, b)| (a - b).abs() <= 1e3 * tol);
    if !(uniform && aligned) {
        return Err(CliError::new("data-invalid", "series must share a uniform time grid"));
    }
    let lag = time_shift(&vp, &vr, dt)?;
    emit(out.as_deref(), |w| {
        writeln!(w, "dt,lag,lag_steps")?;
        writeln!(w, "{dt:?},{lag:?},{}", (lag / dt).round() as i64)?;
        Ok(())
    })
}

pub fn gen_taylor_green(
    nus: &[f64],
    n: usize,
    t_range: (f64, f64),
    grid_times: Option<Vec<f64>>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if nus.iter().any(|nu| !(*nu > 0.0 && nu.is_finite())) {
        return Err(CliError::usage("bad-argument", "ν values must be positive"));
    }
    let points = match grid_times {
        None => taylor_green_dataset(
            nus,
            n,
            SpaceTimeBox::periodic_cell(Interval::new(t_range.0, t_range.1)),
            seed,
        )?,
        Some(times) => {
            // Periodic grid: the node at 2π would repeat the one at 0.
            let h = std::f64::consts::TAU / n as f64;
            let mut pts = Vec::with_capacity(nus.len() * times.len() * n * n);
            for &nu in nus {
                for &t in &times {
                    for j in 0..n {
                        for i in 0..n {
                            pts.push(taylor_green_point(i as f64 * h, j as f64 * h, t, nu));
                        }
                    }
                }
            }
            pts
        }
    };
    save_snapshots(out, &points)?;
    Ok(())
}

pub fn sample(plan: &Path, kind: &str, boundary_n: usize, out: &Path) -> Result<(), CliError> {
    let run = TrainRunConfig::load(plan)?;
    let domain = run.domain;
    let mut points = Vec::new();
    if kind == "interior" || kind == "all" {
        points.extend(sample_interior(&domain, &run.sampling)?);
    }
    if kind == "boundary" || kind == "all" {
        let counts = BoundaryCounts {
            cylinder: if domain.cylinder.is_some() { boundary_n } else { 0 },
            ..BoundaryCounts::uniform(boundary_n)
        };
        points.extend(sample_boundary(&domain, counts, run.sampling.seed)?);
    }
    write_samples(BufWriter::new(File::create(out)?), &points)?;
    Ok(())
}

pub fn check(suite: &str) -> Result<(), CliError> {
    if suite != "oracle" {
        return Err(CliError::usage("bad-argument", format!("unknown suite {suite}")));
    }
    let results = run_suite();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new("oracle-failed", failed.join(",")))
    }
}
