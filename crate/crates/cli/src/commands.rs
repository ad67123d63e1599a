use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sgmatch::datagen::{generate_corpus, Corpus, CorpusSpec, Sample, Split};
use sgmatch::eval::{format_table, time_harness, EvalReport, HarnessConfig, SampleStatus};
use sgmatch::graph::{AdjacencyTolerance, SceneGraph};
use sgmatch::matching::{MatchResult, Matcher, SinkhornConfig};
use sgmatch::nn::WeightsFile;
use sgmatch::training::{train_with_observer, training_stats, TrainConfig};

use crate::manifest::{write_atomic, RunManifest, RUN_MANIFEST_FILE};
use crate::{Cli, Command, EvalArgs, GenerateArgs, MatchArgs, MatcherKind, SplitArg, TrainArgs};

pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn bad_input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_BAD_INPUT,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::bad_input(format!("{}: {e}", path.display()))
    }
}

impl From<sgmatch::Error> for CliError {
    fn from(e: sgmatch::Error) -> Self {
        use sgmatch::Error as E;
        match e {
            E::NonFinite(_) | E::Diverged { .. } | E::Generation { .. } => Self::runtime(e.to_string()),
            _ => Self::bad_input(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult {
    if cli.jobs == 0 {
        return Err(CliError::bad_input("--jobs must be at least 1"));
    }
    // a second initialization (only possible in-process) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    match &cli.command {
        Command::Generate(args) => generate(cli, args),
        Command::Train(args) => train(cli, args),
        Command::Match(args) => match_graphs(cli, args),
        Command::Eval(args) => eval(cli, args),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Defaults, overlaid by the JSON config file when one is given.
fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::bad_input(format!("config {}: {e}", p.display()))),
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn note(cli: &Cli, msg: &str) {
    if !cli.quiet {
        eprintln!("{msg}");
    }
}

fn generate(cli: &Cli, args: &GenerateArgs) -> CliResult {
    let mut spec: CorpusSpec = load_config(args.config.as_ref())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(count) = args.count {
        spec.count = count;
    }
    let noise = &mut spec.noise;
    for (flag, field) in [
        (args.p_drop_room, &mut noise.p_drop_room),
        (args.p_drop_ws, &mut noise.p_drop_ws),
        (args.sigma_centroid, &mut noise.sigma_centroid),
        (args.sigma_angle_deg.map(f64::to_radians), &mut noise.sigma_normal_angle),
        (args.sigma_length, &mut noise.sigma_length),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    let mut manifest = RunManifest::new("generate", to_value(&spec), Some(spec.seed), cli.jobs);
    if spec.count == 0 {
        eprintln!("warning: count is 0; writing an empty corpus");
    }
    let corpus = generate_corpus(&spec)?;
    corpus.save(&args.out)?;
    manifest.output("corpus", &args.out);
    manifest.finish(&args.out.join(RUN_MANIFEST_FILE))?;
    let count = |s| corpus.indices(s).len();
    note(
        cli,
        &format!(
            "wrote {} samples to {} (train {}, val {}, test {})",
            corpus.samples.len(),
            args.out.display(),
            count(Split::Train),
            count(Split::Val),
            count(Split::Test)
        ),
    );
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFileConfig {
    #[serde(flatten)]
    train: TrainConfig,
    /// 0 disables checkpoints.
    checkpoint_every: usize,
}

fn load_corpus(dir: &Path) -> CliResult<Corpus> {
    Corpus::load(dir).map_err(|e| CliError::bad_input(format!("cannot load corpus {}: {e}", dir.display())))
}

fn train(cli: &Cli, args: &TrainArgs) -> CliResult {
    let mut file: TrainFileConfig = load_config(args.config.as_ref())?;
    let cfg = &mut file.train;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.checkpoint_every {
        file.checkpoint_every = v;
    }
    let config = file.train.clone();
    let mut manifest = RunManifest::new("train", to_value(&file), Some(config.seed), cli.jobs);

    let corpus = load_corpus(&args.corpus)?;
    manifest.input("corpus", &args.corpus);
    for split in [Split::Train, Split::Val] {
        if corpus.indices(split).is_empty() {
            return Err(CliError::bad_input(format!(
                "corpus {} has no {} samples",
                args.corpus.display(),
                split.name()
            )));
        }
    }
    let init = match &args.init_weights {
        Some(path) => {
            manifest.input("init_weights", path);
            let (params, _) = WeightsFile::load(path)?.to_params()?;
            if params.arch != config.architecture {
                return Err(CliError::bad_input(format!(
                    "{} was trained with a different architecture",
                    path.display()
                )));
            }
            Some(params)
        }
        None => None,
    };
    create_dir(&args.out)?;
    let stats = training_stats(corpus.split_samples(Split::Train))?;
    let ckpt_dir = args.out.join("checkpoints");
    let mut ckpt_error = None;
    let out = train_with_observer(&corpus, &config, init, |e| {
        let r = e.record;
        note(
            cli,
            &format!(
                "epoch {:>4}  train {:.6}  val {:.6}  {:.2}s{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                e.wall_s,
                if e.improved { "  *" } else { "" }
            ),
        );
        if file.checkpoint_every > 0 && (r.epoch + 1) % file.checkpoint_every == 0 && ckpt_error.is_none() {
            let path = ckpt_dir.join(format!("epoch_{}.json", r.epoch));
            let text = WeightsFile::new(e.params, &stats).to_json_string();
            if let Err(err) = create_dir(&ckpt_dir).and_then(|_| write_atomic(&path, &text)) {
                ckpt_error = Some(err);
            }
        }
    })?;
    if let Some(err) = ckpt_error {
        return Err(err);
    }

    let weights = args.out.join("weights.json");
    let history = args.out.join("history.json");
    let timings = args.out.join("timings.json");
    write_atomic(&weights, &WeightsFile::new(&out.params, &out.stats).to_json_string())?;
    write_atomic(&history, &serde_json::to_string_pretty(&out.history).expect("history serializes"))?;
    write_atomic(&timings, &serde_json::to_string_pretty(&out.timings).expect("timings serialize"))?;
    for (k, p) in [("weights", &weights), ("history", &history), ("timings", &timings)] {
        manifest.output(k, p);
    }
    if file.checkpoint_every > 0 {
        manifest.output("checkpoints", &ckpt_dir);
    }
    manifest.finish(&args.out.join(RUN_MANIFEST_FILE))?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&out.history).expect("history serializes"));
    } else {
        println!(
            "best validation loss {:.6} at epoch {} ({} epochs run)",
            out.history.best_val_loss,
            out.history.best_epoch,
            out.history.epochs.len()
        );
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct MatchFileConfig {
    adjacency: AdjacencyTolerance,
    sinkhorn: SinkhornConfig,
    timeout_s: Option<f64>,
}

fn load_matcher(path: &Path, config: &MatchFileConfig) -> CliResult<Matcher> {
    let (params, stats) = WeightsFile::load(path)?.to_params()?;
    let mut m = Matcher::new(params, stats);
    m.adjacency = config.adjacency;
    m.sinkhorn = config.sinkhorn;
    Ok(m)
}

fn read_graph(path: &Path) -> CliResult<SceneGraph> {
    SceneGraph::from_json_str(&read_text(path)?)
        .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))
}

fn match_graphs(cli: &Cli, args: &MatchArgs) -> CliResult {
    let config: MatchFileConfig = load_config(args.config.as_ref())?;
    let mut manifest = RunManifest::new("match", to_value(&config), None, cli.jobs);
    let matcher = load_matcher(&args.weights, &config)?;
    let a = read_graph(&args.a_graph)?;
    let s = read_graph(&args.s_graph)?;
    let result = matcher.match_graphs(&a, &s)?;
    let text = result.to_json_string();
    match &args.out {
        Some(out) => {
            write_atomic(out, &text)?;
            for (k, p) in [("a_graph", &args.a_graph), ("s_graph", &args.s_graph), ("weights", &args.weights)] {
                manifest.input(k, p);
            }
            manifest.output("result", out);
            manifest.finish(&out.with_extension("manifest.json"))?;
            note(cli, &format!("matched {} S-nodes in {:.4}s", result.pairs.len(), result.elapsed_s));
        }
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvalFileConfig {
    #[serde(flatten)]
    matching: MatchFileConfig,
    /// Run samples in parallel; disables timing.
    parallel: bool,
}

#[derive(Serialize)]
struct TimingFile {
    mean_time_s: Option<f64>,
    elapsed_s: Vec<Option<f64>>,
}

fn split_of(arg: SplitArg) -> Split {
    match arg {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn oracle(sample: &Sample) -> sgmatch::Result<MatchResult> {
    Ok(MatchResult {
        pairs: sample.ground_truth.pairs().map(|(s, a)| (s, a, 1.0)).collect(),
        elapsed_s: 0.0,
    })
}

fn eval(cli: &Cli, args: &EvalArgs) -> CliResult {
    let config: EvalFileConfig = load_config(args.config.as_ref())?;
    let timeout_s = args.timeout_s.or(config.matching.timeout_s).unwrap_or(60.0);
    if timeout_s.is_nan() || timeout_s <= 0.0 {
        return Err(CliError::bad_input("--timeout-s must be positive"));
    }
    let mut echo = to_value(&config);
    echo["timeout_s"] = timeout_s.into();
    let mut manifest = RunManifest::new("eval", echo, None, cli.jobs);
    let corpus = load_corpus(&args.corpus)?;
    manifest.input("corpus", &args.corpus);
    let split = split_of(args.split);
    let samples = corpus.split_samples(split);
    if samples.is_empty() {
        return Err(CliError::bad_input(format!("corpus has no {} samples", split.name())));
    }
    let harness = HarnessConfig {
        timeout_s,
        parallel: config.parallel,
    };
    let report: EvalReport = match args.matcher {
        MatcherKind::Oracle => time_harness(args.method.as_deref().unwrap_or("Oracle"), oracle, &samples, &harness)?,
        MatcherKind::Model => {
            let path = args
                .weights
                .as_ref()
                .ok_or_else(|| CliError::bad_input("--weights is required with --matcher model"))?;
            manifest.input("weights", path);
            let matcher = load_matcher(path, &config.matching)?;
            time_harness(
                args.method.as_deref().unwrap_or("Model"),
                |s: &Sample| matcher.match_graphs(&s.a_graph, &s.s_graph),
                &samples,
                &harness,
            )?
        }
    };
    for s in &report.samples {
        if let SampleStatus::Failed { error } = &s.status {
            eprintln!("warning: sample {} failed: {error}", s.index);
        }
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        let report_path = out.join("report.json");
        let timings_path = out.join("timings.json");
        write_atomic(&report_path, &report.without_timing().to_json_string())?;
        let timing = TimingFile {
            mean_time_s: report.metrics.as_ref().and_then(|m| m.mean_time_s),
            elapsed_s: report.samples.iter().map(|s| s.elapsed_s).collect(),
        };
        write_atomic(&timings_path, &serde_json::to_string_pretty(&timing).expect("timings serialize"))?;
        manifest.output("report", &report_path);
        manifest.output("timings", &timings_path);
        manifest.finish(&out.join(RUN_MANIFEST_FILE))?;
    }
    if cli.json {
        println!("{}", report.to_json_string());
    } else {
        print!("{}", format_table(&[&report]));
    }
    if report.n_completed == 0 {
        return Err(CliError::runtime("no sample completed within the timeout"));
    }
    Ok(())
}
