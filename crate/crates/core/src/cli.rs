//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data or numeric
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasynth::{generate, normalize_pair, GeneratorKind, Normalization};
use crate::error::{Error, Result};
use crate::gradsuite::run_suite;
use crate::io::{
    load_checkpoint, read_dataset, read_points, save_checkpoint, write_dataset, write_points,
    write_svg, Overlay, RunConfig, Style,
};
use crate::metrics::{retrieve_closest, ExampleMetrics, MetricsReport};
use crate::scalar::Real;
use crate::spatial::PointSet;
use crate::trainer::{infer_multipass, train, Ablation, Checkpoint, Direction, PairedDataset};

#[derive(Parser, Debug)]
#[command(name = "p2pnet", version, about = "Point set transforms with bidirectional displacement networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a paired dataset directory.
    #[command(after_help = config_help())]
    Synth(SynthArgs),
    /// Train both branches on a dataset directory.
    #[command(after_help = config_help())]
    Train(TrainArgs),
    /// Apply one branch of a checkpoint to a point set.
    Infer(InferArgs),
    /// Compare predictions with ground truth.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render point sets to SVG.
    Plot(PlotArgs),
    /// Find the corpus set closest to a query.
    Retrieve(RetrieveArgs),
}

fn config_help() -> String {
    format!("Config file keys and their defaults:\n\n{}", RunConfig::default_text())
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Run config; only its [generator] section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `train.ablation`, written ns±rg±.
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also append the per-epoch loss log to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Working precision; checkpoints are stored as f32 either way.
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    ck: PathBuf,
    /// Source set (.xyz or .ply).
    #[arg(long = "in")]
    input: PathBuf,
    /// Where to write the union of all passes; stdout as .xyz text if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    passes: usize,
    #[arg(long, default_value = "xy")]
    direction: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map the input's bounding box to diagonal 1 first and undo it on output.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted sets; repeat to evaluate several examples.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground truth sets, matched with `--pred` by position.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Normalize each pair by its joint bounding box first.
    #[arg(long)]
    normalize: bool,
    /// Print `key=value` records instead of the table.
    #[arg(long)]
    records: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 16)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Sets to draw, in order; repeat for several.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Displacement line sources; pairs row by row with `--overlay-to`.
    #[arg(long, requires = "overlay_to")]
    overlay_from: Option<PathBuf>,
    #[arg(long, requires = "overlay_from")]
    overlay_to: Option<PathBuf>,
    /// Share of displacement lines drawn.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Axis dropped when projecting 3D sets.
    #[arg(long, default_value_t = 2)]
    axis: usize,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long)]
    query: PathBuf,
    /// Candidate sets; a directory stands for every .xyz/.ply file inside it.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Regular output goes to `out`, diagnostics to stderr.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = e.print();
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => match a.precision {
            Precision::F32 => train_cmd::<f32>(a, out),
            Precision::F64 => train_cmd::<f64>(a, out),
        },
        Command::Infer(a) => infer(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Plot(a) => plot(a),
        Command::Retrieve(a) => retrieve(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = load_config(a.config.as_deref())?.generator;
    if let Some(k) = &a.kind {
        spec.kind = k.parse::<GeneratorKind>()?;
    }
    if let Some(v) = a.count {
        spec.count = v;
    }
    if let Some(v) = a.points {
        spec.points_per_set = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    let ds = generate(&spec)?;
    write_dataset(&a.out, &ds)?;
    emit(
        out,
        &format!(
            "wrote {} {}→{} pairs to {}\n",
            ds.len(),
            ds.x_domain,
            ds.y_domain,
            a.out.display()
        ),
    )
}

fn train_cmd<T: Real>(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let rc = load_config(a.config.as_deref())?;
    let mut cfg = rc.train_config();
    if let Some(s) = &a.ablation {
        cfg.ablation = s.parse::<Ablation>()?;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let data: PairedDataset<T> = read_dataset(&a.data)?.cast();
    let dim = data
        .dim()
        .ok_or_else(|| Error::Precondition(format!("{} holds no pairs", a.data.display())))?;
    let net = rc.network.resolve(dim)?;
    let mut log = match &a.log {
        Some(p) => Some(fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut write_err = None;
    let ck: Checkpoint<T> = train(&data, &net, &net, &cfg, &mut |rec| {
        let line = format!("{rec}\n");
        let res = out
            .write_all(line.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
            .and_then(|()| match (&mut log, &a.log) {
                (Some(f), Some(p)) => f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e)),
                _ => Ok(()),
            });
        if let Err(e) = res {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    save_checkpoint(&a.out, &ck)
}

fn infer(a: InferArgs, out: &mut dyn Write) -> Result<()> {
    let direction: Direction = a.direction.parse()?;
    let ck: Checkpoint<f64> = load_checkpoint(&a.ck)?;
    let x = read_points(&a.input)?;
    let (x, norm) = if a.normalize {
        let (xn, _, norm) = normalize_pair(&x, &x)?;
        (xn, norm)
    } else {
        let dim = x.dim();
        (x, Normalization::identity(dim))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pred = infer_multipass(&x, ck.branch(direction), a.passes, &mut rng)?;
    let pred = norm.denormalize(&pred)?;
    match &a.out {
        Some(p) => write_points(p, &pred),
        None => {
            let mut text = String::new();
            for p in pred.iter() {
                let row: Vec<String> = p.iter().map(|v| format!("{v:.8e}")).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            emit(out, &text)
        }
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    if a.pred.len() != a.truth.len() {
        return Err(Error::Config(format!(
            "{} --pred files but {} --truth files",
            a.pred.len(),
            a.truth.len()
        )));
    }
    let examples = a
        .pred
        .iter()
        .zip(&a.truth)
        .map(|(p, t)| {
            let (mut pred, mut truth) = (read_points(p)?, read_points(t)?);
            if a.normalize {
                let (pn, tn, _) = normalize_pair(&pred, &truth)?;
                pred = pn;
                truth = tn;
            }
            ExampleMetrics::compute(&p.display().to_string(), &pred, &truth, true)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::from_examples(examples);
    emit(out, &if a.records { report.records() } else { report.table() })
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let report = run_suite(a.instances, a.points, a.seed)?;
    emit(out, &report.to_string())?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Numeric("gradient check failed".into()))
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn plot(a: PlotArgs) -> Result<()> {
    let sets = a
        .inputs
        .iter()
        .map(|p| read_points(p))
        .collect::<Result<Vec<_>>>()?;
    let styled: Vec<(&PointSet<f64>, Style)> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s, Style::new(PALETTE[i % PALETTE.len()], 1.5)))
        .collect();
    let ends = match (&a.overlay_from, &a.overlay_to) {
        (Some(f), Some(t)) => Some((read_points(f)?, read_points(t)?)),
        _ => None,
    };
    let overlay = ends.as_ref().map(|(from, to)| Overlay {
        from,
        to,
        fraction: a.fraction,
        seed: a.seed,
    });
    write_svg(&a.out, &styled, overlay.as_ref(), a.axis)
}

fn retrieve(a: RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let mut paths = Vec::new();
    for c in &a.corpus {
        if c.is_dir() {
            let mut inside: Vec<PathBuf> = fs::read_dir(c)
                .map_err(|e| Error::io(c, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("xyz" | "ply")
                    )
                })
                .collect();
            inside.sort();
            paths.extend(inside);
        } else {
            paths.push(c.clone());
        }
    }
    let query = read_points(&a.query)?;
    let corpus = paths
        .iter()
        .map(|p| read_points(p))
        .collect::<Result<Vec<_>>>()?;
    let (best, d) = retrieve_closest(&query, &corpus)?;
    emit(
        out,
        &format!("index={best} path={} chamfer={d}\n", paths[best].display()),
    )
}
