//! The `occusense` command line.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener as StdTcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::acoustics::RoomModel;
use crate::dataset::{
    generate_synthetic, ingest_file, label_samples, read_features_file, read_labels_file,
    simulate_corpus, windowize, write_features, write_labels, write_readings, Dataset, FeatureSet,
    GeneratorParams, Schedule,
};
use crate::detector::{
    batch_events, ingest_lines, replay, serve, Classifier, Detector, StatusBoard, ThresholdRule,
    DEFAULT_THETA,
};
use crate::eval::{
    ablation, cross_validate, render_ablation, render_folds, write_ablation_csv, write_folds_csv,
    CvMode, FoldPlan,
};
use crate::id3::{self, fit, LearnerConfig};

#[derive(Debug, Parser)]
#[command(
    name = "occusense",
    version,
    about = "Room occupancy detection from reverberation time, CO2 and temperature"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: readings, labels, room and features.
    Simulate(SimulateArgs),
    /// Window raw readings into one feature row per slot.
    Features(FeaturesArgs),
    /// Fit a decision tree and write the model document.
    Train(TrainArgs),
    /// Classify every slot of a dataset with a saved model.
    Predict(PredictArgs),
    /// Day-wise cross validation.
    Evaluate(EvaluateArgs),
    /// Cross validation for every feature subset.
    Ablate(EvaluateArgs),
    /// Replay a readings file through the streaming detector.
    Detect(DetectArgs),
    /// Run the live detector with an HTTP status endpoint.
    Serve(ServeArgs),
}

/// Where samples come from: a features CSV, raw readings, or the generator.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Features CSV (`day_index,slot_index,temperature,co2,reverberation_time,occupied`).
    #[arg(long, conflicts_with = "readings")]
    pub data: Option<PathBuf>,
    /// Raw readings CSV (`timestamp,sensor_id,kind,value`).
    #[arg(long)]
    pub readings: Option<PathBuf>,
    /// Labels CSV (`day_index,slot_index,occupied`) for raw readings.
    #[arg(long, requires = "readings")]
    pub labels: Option<PathBuf>,
    /// Room description JSON; defaults to the built-in lecture hall.
    #[arg(long)]
    pub room: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Args, Clone)]
pub struct SynthArgs {
    /// Generator seed, used when no data file is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub days: u32,
    #[arg(long, default_value_t = 8)]
    pub slots: u32,
    /// Label flip probability.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

impl SynthArgs {
    fn params(&self) -> GeneratorParams {
        GeneratorParams::with_seed(self.seed).with_noise(self.noise)
    }
}

#[derive(Debug, Args, Clone)]
pub struct LearnerArgs {
    /// Minimum samples per tree node (K).
    #[arg(long = "k", default_value_t = 4)]
    pub k_min_points: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Comma list of temperature, co2, reverberation_time.
    #[arg(long, default_value = "temperature,co2,reverberation_time")]
    pub features: FeatureSet,
}

impl LearnerArgs {
    fn config(&self) -> LearnerConfig {
        LearnerConfig {
            k_min_points: self.k_min_points,
            max_depth: self.max_depth,
            features: self.features,
            ..LearnerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub readings: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub room: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Where to write the model document.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// `std` holds out one day per fold; `paper` trains on one day per fold.
    #[arg(long, default_value = "std")]
    pub cv_mode: CvMode,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct DetectorArgs {
    #[arg(long)]
    pub room: Option<PathBuf>,
    /// Model document; the threshold rule is used when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reverberation threshold (seconds) for the fallback rule.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub readings: PathBuf,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Window the whole file first instead of streaming it.
    #[arg(long, conflicts_with = "hold_last")]
    pub batch: bool,
    /// Reuse a sensor kind's previous-slot value when it is missing.
    #[arg(long)]
    pub hold_last: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// HTTP listen address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Accept line-delimited readings over TCP on this address instead of
    /// reading standard input.
    #[arg(long)]
    pub tcp: Option<String>,
    /// Report a slot missing any kind as unknown instead of reusing that
    /// kind's value from the previous slot.
    #[arg(long)]
    pub no_hold_last: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Features(a) => features(&a),
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Evaluate(a) => evaluate(&a, false),
        Command::Ablate(a) => evaluate(&a, true),
        Command::Detect(a) => detect(&a),
        Command::Serve(a) => serve_cmd(&a),
    }
}

fn load_room(path: Option<&Path>) -> Result<RoomModel> {
    match path {
        Some(p) => RoomModel::load(p).with_context(|| format!("loading room {}", p.display())),
        None => Ok(RoomModel::default_hall()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Dataset plus the generator seed, if it was synthesized.
fn load_dataset(args: &DataArgs) -> Result<(Dataset, Option<u64>)> {
    if let Some(path) = &args.data {
        let ds = read_features_file(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((ds, None));
    }
    if let Some(path) = &args.readings {
        let room = load_room(args.room.as_deref())?;
        let labels = args
            .labels
            .as_deref()
            .map(|p| read_labels_file(p).with_context(|| format!("reading {}", p.display())))
            .transpose()?;
        return Ok((windowed(path, &room, labels.as_ref())?, None));
    }
    log::info!("no data given, generating with seed {}", args.synth.seed);
    let ds = generate_synthetic(&args.synth.params(), args.synth.days, args.synth.slots)?;
    Ok((ds, Some(args.synth.seed)))
}

fn windowed(
    path: &Path,
    room: &RoomModel,
    labels: Option<&crate::dataset::Labels>,
) -> Result<Dataset> {
    let report = ingest_file(path).with_context(|| format!("reading {}", path.display()))?;
    for r in &report.rejects {
        eprintln!("{}:{}: {}", path.display(), r.line, r.reason);
    }
    let out = windowize(&report.readings, &Schedule::default(), room)?;
    for inc in &out.incompletes {
        let missing: Vec<_> = inc.missing.iter().map(|k| k.name()).collect();
        eprintln!(
            "slot {} incomplete: missing {}",
            inc.slot,
            missing.join(", ")
        );
    }
    Ok(label_samples(out.samples, labels)?)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let corpus = simulate_corpus(
        &a.synth.params(),
        a.synth.days,
        a.synth.slots,
        &Schedule::default(),
    )?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    let mut w = create(&dir.join("readings.csv"))?;
    write_readings(&mut w, &corpus.readings)?;
    w.flush()?;
    let mut w = create(&dir.join("labels.csv"))?;
    write_labels(&mut w, &corpus.labels)?;
    w.flush()?;
    let mut w = create(&dir.join("features.csv"))?;
    write_features(&mut w, corpus.dataset.samples())?;
    w.flush()?;
    let room = serde_json::to_string_pretty(&corpus.room.to_config())?;
    fs::write(dir.join("room.json"), room + "\n")?;
    eprintln!(
        "wrote {} readings for {} slots to {}",
        corpus.readings.len(),
        corpus.dataset.len(),
        dir.display()
    );
    Ok(())
}

fn features(a: &FeaturesArgs) -> Result<()> {
    let room = load_room(a.room.as_deref())?;
    let labels = a
        .labels
        .as_deref()
        .map(|p| read_labels_file(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let ds = windowed(&a.readings, &room, labels.as_ref())?;
    let mut out = output(a.out.as_deref())?;
    write_features(&mut out, ds.samples())?;
    out.flush()?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let (ds, _) = load_dataset(&a.data)?;
    let tree = fit(&ds, &a.learner.config())?;
    fs::write(&a.model, id3::serialize(&tree) + "\n")
        .with_context(|| format!("writing {}", a.model.display()))?;
    eprintln!(
        "trained on {} samples: depth {}, {} leaves",
        ds.len(),
        tree.depth(),
        tree.leaf_count()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<id3::DecisionTree> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    id3::deserialize(&text).with_context(|| format!("loading model {}", path.display()))
}

fn predict(a: &PredictArgs) -> Result<()> {
    let tree = load_model(&a.model)?;
    let (ds, _) = load_dataset(&a.data)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "day_index,slot_index,predicted,occupied")?;
    let mut correct = 0;
    for s in ds.samples() {
        let p = tree.predict_sample(s)?;
        let actual = s.label.map(|l| l.as_u8().to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{actual}",
            s.day_index,
            s.slot_index,
            p.as_u8()
        )?;
        correct += usize::from(s.label == Some(p));
    }
    out.flush()?;
    if ds.is_labeled() && !ds.is_empty() {
        eprintln!("accuracy {:.3}%", 100.0 * correct as f64 / ds.len() as f64);
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, ablate: bool) -> Result<()> {
    let (ds, seed) = load_dataset(&a.data)?;
    if !ds.is_labeled() {
        bail!("cross validation needs labeled data");
    }
    let plan = FoldPlan::for_days(&ds.days(), a.cv_mode)?;
    let cfg = a.learner.config();
    let mut stdout = io::stdout().lock();
    if ablate {
        let rows = ablation(&ds, &cfg, &plan)?;
        write!(stdout, "{}", render_ablation(&rows))?;
        if let Some(p) = &a.csv {
            let mut w = create(p)?;
            write_ablation_csv(&mut w, &rows)?;
            w.flush()?;
        }
    } else {
        let mut report = cross_validate(&ds, &cfg, &plan)?;
        report.seed = seed;
        write!(stdout, "{}", render_folds(&report))?;
        if let Some(p) = &a.csv {
            let mut w = create(p)?;
            write_folds_csv(&mut w, &report)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn build_detector(a: &DetectorArgs, hold_last: bool) -> Result<(Detector, Classifier, RoomModel)> {
    let room = load_room(a.room.as_deref())?;
    let tree = a.model.as_deref().map(load_model).transpose()?;
    let classifier = Classifier::new(tree, ThresholdRule::new(a.theta)?);
    let detector = Detector::new(room.clone(), classifier.clone(), Schedule::default())?
        .with_hold_last(hold_last);
    Ok((detector, classifier, room))
}

fn detect(a: &DetectArgs) -> Result<()> {
    let (mut detector, classifier, room) = build_detector(&a.detector, a.hold_last)?;
    let report =
        ingest_file(&a.readings).with_context(|| format!("reading {}", a.readings.display()))?;
    for r in &report.rejects {
        eprintln!("{}:{}: {}", a.readings.display(), r.line, r.reason);
    }
    let events = if a.batch {
        batch_events(&report.readings, &Schedule::default(), &room, &classifier)?
    } else {
        replay(&mut detector, &report.readings)?
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for ev in &events {
        writeln!(out, "{}", ev.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

fn serve_cmd(a: &ServeArgs) -> Result<()> {
    let (mut detector, _, _) = build_detector(&a.detector, !a.no_hold_last)?;
    let board = Arc::new(StatusBoard::new());
    let http = StdTcpListener::bind(&a.bind).with_context(|| format!("binding {}", a.bind))?;
    let feed = a
        .tcp
        .as_deref()
        .map(|addr| StdTcpListener::bind(addr).with_context(|| format!("binding {addr}")))
        .transpose()?;
    eprintln!("serving status on http://{}", http.local_addr()?);

    let writer = Arc::clone(&board);
    std::thread::spawn(move || {
        let result = match feed {
            Some(listener) => feed_tcp(listener, &mut detector, &writer),
            None => feed_stdin(&mut detector, &writer),
        };
        if let Err(e) = result {
            log::error!("ingestion stopped: {e}");
        }
    });

    http.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(http)?;
        serve(listener, board).await
    })?;
    Ok(())
}

fn feed_stdin(detector: &mut Detector, board: &StatusBoard) -> Result<()> {
    let rejected = ingest_lines(io::stdin().lock(), detector, board)?;
    if let Some(ev) = detector.finish()? {
        board.publish(ev);
    }
    log::info!("standard input closed ({rejected} lines rejected)");
    Ok(())
}

fn feed_tcp(listener: StdTcpListener, detector: &mut Detector, board: &StatusBoard) -> Result<()> {
    log::info!("accepting readings on {}", listener.local_addr()?);
    for conn in listener.incoming() {
        let conn = conn?;
        let peer = conn.peer_addr().ok();
        let rejected = ingest_lines(BufReader::new(conn), detector, board)?;
        log::info!("feed {peer:?} closed ({rejected} lines rejected)");
    }
    Ok(())
}
