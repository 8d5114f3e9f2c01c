mod config;
mod theory;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lols::cslearn::{Csoaa, ModelFile};
use lols::experiment::{
    build_tasks, evaluate, load_split, read_dataset, read_model, run_bandit, run_grid, train_tasks, Dataset,
    ExperimentConfig, ModelMeta, Predictor, Schema, TaskKind,
};
use lols::lols::PolicyHistory;
use lols::tasks::{synth_multiclass, synth_parse, synth_sequences, write_csv, write_tsv};
use lols::Error;
use serde_json::{json, Value};

use config::ConfigArgs;

#[derive(Parser, Debug)]
#[command(name = "lols", version, about = "Learning to search: training, grids, bandits and theory checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one roll-in/roll-out strategy and write the model
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model file; the history archive and meta JSON go next to it
        #[arg(long, short = 'o')]
        out: PathBuf,
        /// JSON-lines diagnostics (default: <out>.jsonl)
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Score a trained model on a data file
    Eval {
        #[arg(long, short = 'm')]
        model: PathBuf,
        /// Data file (default: the model's held-out split)
        #[arg(long, short = 'd')]
        data: Option<PathBuf>,
        /// Predict with a uniformly drawn stored policy per instance
        #[arg(long)]
        averaged: bool,
        /// Seed for the averaged predictor's draws
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// All six roll-in × roll-out cells on held-out data
    Grid {
        #[command(flatten)]
        config: ConfigArgs,
        /// Machine-readable report
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
    },
    /// Epsilon-greedy bandit session against a gold-label loss oracle
    Bandit {
        #[command(flatten)]
        config: ConfigArgs,
        /// JSON-lines session log, one line per round
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Exact checks on small enumerable models
    Theory {
        #[command(subcommand)]
        suite: theory::Suite,
    },
    /// Write a seeded synthetic corpus
    GenData {
        #[arg(long, value_enum)]
        task: DataKind,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiclass label count
        #[arg(long, default_value_t = 5)]
        labels: usize,
        /// Multiclass feature dimension
        #[arg(long, default_value_t = 20)]
        dim: usize,
        /// Output file (default: stdout)
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataKind {
    Sequence,
    Parse,
    Multiclass,
}

enum Failure {
    Usage(String),
    Data(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BadConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn header(config: &ExperimentConfig) -> Value {
    json!({ "kind": "config", "config_hash": config.hash_hex(), "config": config })
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(v: &Value) {
    emit(&format!("{v}\n"));
}

fn train_cmd(args: &ConfigArgs, out: &Path, diagnostics: Option<&Path>) -> Outcome {
    let config = args.resolve()?;
    let (train, test) = load_split(&config)?;
    let schema = Schema::infer(&config, &train)?;
    let tasks = build_tasks(&schema, &train, config.reference, config.reference_seed(), config.rounds, true)?;

    let diag_path = diagnostics.map_or_else(|| sidecar(out, ".jsonl"), Path::to_path_buf);
    let mut diag = create(&diag_path)?;
    writeln!(diag, "{}", header(&config))?;
    let mut write_err = None;
    let mut instances = 0u64;
    let state = train_tasks(&config, &tasks, &config.plan(), config.seed, |r| {
        instances += 1;
        let mut line = serde_json::to_value(r).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut line {
            m.insert("kind".into(), "instance".into());
        }
        if let Err(e) = writeln!(diag, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    diag.flush()?;

    let mut model = create(out)?;
    state.learner.save(&mut model, config.hash())?;
    model.flush()?;
    let mut archive = create(&sidecar(out, ".history"))?;
    state.history.write_archive(&mut archive)?;
    archive.flush()?;
    let meta = ModelMeta {
        config: config.clone(),
        config_hash: config.hash_hex(),
        schema: schema.clone(),
        dim: state.learner.dim(),
        instances_seen: instances,
    };
    let mut meta_out = create(&sidecar(out, ".meta.json"))?;
    serde_json::to_writer_pretty(&mut meta_out, &meta)?;
    meta_out.flush()?;

    let held_out = if test.is_empty() {
        None
    } else {
        let eval = build_tasks(&schema, &test, config.reference, config.reference_seed(), 1, true)?;
        Some(evaluate(&eval, Predictor::Fixed(&state.current_policy()))?)
    };
    print_json(&json!({
        "model": out,
        "diagnostics": diag_path,
        "instances": instances,
        "metric": tasks.metric().name(),
        "held_out": held_out,
        "config_hash": config.hash_hex(),
    }));
    Ok(())
}

fn eval_cmd(model_path: &Path, data: Option<&Path>, averaged: bool, seed: u64) -> Outcome {
    let meta: ModelMeta = serde_json::from_reader(open(&sidecar(model_path, ".meta.json"))?)?;
    let file = ModelFile::read(open(model_path)?)?;
    if file.config_hash != meta.config.hash() {
        return Err(Failure::Data(format!(
            "{} was not written with the config in its meta file",
            model_path.display()
        )));
    }
    let learner = Csoaa::from_model(file);
    let config = &meta.config;
    let dataset = match (data, meta.schema.task) {
        (_, TaskKind::Model) => Dataset::Model(read_model(config)?),
        (Some(p), task) => read_dataset(task, p)?,
        (None, _) => load_split(config)?.1,
    };
    let tasks = build_tasks(&meta.schema, &dataset, config.reference, config.reference_seed(), 1, true)?;
    let value = if averaged {
        let history = PolicyHistory::read_archive(open(&sidecar(model_path, ".history"))?)?;
        evaluate(&tasks, Predictor::Averaged(&history, seed))?
    } else {
        evaluate(&tasks, Predictor::Fixed(&learner.policy()))?
    };
    print_json(&json!({
        "metric": tasks.metric().name(),
        "value": value,
        "instances": tasks.len(),
        "averaged": averaged,
        "config_hash": meta.config_hash,
    }));
    Ok(())
}

fn grid_cmd(args: &ConfigArgs, out: Option<&Path>) -> Outcome {
    let config = args.resolve()?;
    let (train, test) = load_split(&config)?;
    let report = run_grid(&config, &train, &test)?;
    emit(&report.render());
    if let Some(path) = out {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, &report)?;
        f.flush()?;
    }
    Ok(())
}

fn bandit_cmd(args: &ConfigArgs, log: Option<&Path>) -> Outcome {
    let config = args.resolve()?;
    let data = match config.task {
        TaskKind::Model => Dataset::Model(read_model(&config)?),
        task => {
            let path = config
                .train
                .as_ref()
                .ok_or_else(|| Failure::Usage("bandit needs a 'train' data path".into()))?;
            read_dataset(task, path)?
        }
    };
    let mut log = log.map(create).transpose()?;
    if let Some(w) = log.as_mut() {
        writeln!(w, "{}", header(&config))?;
    }
    let mut write_err = None;
    let (summary, _) = run_bandit(&config, &data, |entry| {
        if let Some(w) = log.as_mut() {
            match serde_json::to_string(entry) {
                Ok(line) => {
                    if let Err(e) = writeln!(w, "{line}") {
                        write_err.get_or_insert(e);
                    }
                }
                Err(e) => {
                    write_err.get_or_insert(e.into());
                }
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    print_json(&serde_json::to_value(&summary)?);
    Ok(())
}

fn theory_cmd(suite: &theory::Suite) -> Outcome {
    let (pass, report) = theory::run(suite)?;
    print_json(&report);
    if pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn gen_data_cmd(task: DataKind, count: usize, seed: u64, labels: usize, dim: usize, out: Option<&Path>) -> Outcome {
    if task == DataKind::Multiclass && (labels < 2 || dim == 0) {
        return Err(Failure::Usage("multiclass data needs at least 2 labels and 1 feature".into()));
    }
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    match task {
        DataKind::Sequence => write_tsv(&mut w, &synth_sequences(count, seed))?,
        DataKind::Parse => write_tsv(&mut w, &synth_parse(count, seed))?,
        DataKind::Multiclass => write_csv(&mut w, &synth_multiclass(count, labels, dim, seed))?,
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train {
            config,
            out,
            diagnostics,
        } => train_cmd(config, out, diagnostics.as_deref()),
        Command::Eval {
            model,
            data,
            averaged,
            seed,
        } => eval_cmd(model, data.as_deref(), *averaged, *seed),
        Command::Grid { config, out } => grid_cmd(config, out.as_deref()),
        Command::Bandit { config, log } => bandit_cmd(config, log.as_deref()),
        Command::Theory { suite } => theory_cmd(suite),
        Command::GenData {
            task,
            count,
            seed,
            labels,
            dim,
            out,
        } => gen_data_cmd(*task, *count, *seed, *labels, *dim, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => {
            eprintln!("check failed");
            ExitCode::from(3)
        }
    }
}
