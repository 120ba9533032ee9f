use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use enscal::harness::{
    read_case_column, run_experiment, sweep_training_length, write_argmin, write_cases,
    write_histogram, write_scores,
};
use enscal::model_io::write_models;
use enscal::synth::{generate, reference_calendar, Scenario, SynthConfig};
use enscal::verification::{pit_histogram, rank_histogram, Histogram, DEFAULT_PIT_BINS};
use enscal::{load_dataset, write_dataset, CsvSchema, Dataset, Error};

mod config;

use config::{Run, RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "enscal",
    version,
    about = "Calibrate and verify ensemble forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method with one training length.
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run one method over a range of training lengths.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Training lengths evaluated concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Histogram of the `rank` or `pit` column of a cases file.
    Hist {
        #[arg(long, value_enum)]
        kind: HistKind,
        /// Defaults to the largest rank for `rank` and 11 for `pit`.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        cases: PathBuf,
    },
    /// Write a synthetic dataset with a known generating law.
    Synth {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n_dates: usize,
        #[arg(long, default_value_t = 10)]
        stations: usize,
        #[arg(long, default_value_t = 11)]
        members: usize,
        /// Use the one-year calendar with six missing days instead of consecutive dates.
        #[arg(long)]
        reference_calendar: bool,
        /// Parameter override `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HistKind {
    Rank,
    Pit,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v = v
        .trim()
        .parse()
        .map_err(|_| format!("{k}: not a number: {v:?}"))?;
    Ok((k.trim().to_string(), v))
}

/// Failure with its exit status: 2 config or usage, 3 data, 4 numerical.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() || matches!(e, Error::Experiment(_)) {
            4
        } else {
            3
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_run(path: &Path, sweep: bool) -> Result<Run, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let env_output = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    RunConfig::parse(&text)
        .and_then(|c| c.validate(base, sweep, env_output))
        .map_err(|m| Failure::config(format!("{}: {m}", path.display())))
}

fn read_data(run: &Run) -> Result<Dataset, Failure> {
    let file = File::open(&run.data)?;
    load_dataset(BufReader::new(file), &CsvSchema::default(), run.kind)
        .map_err(|e| Failure::data(format!("{}: {e}", run.data.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn rank_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| k as f64 + 0.5).collect()
}

fn pit_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| k as f64 / bins as f64).collect()
}

fn calibrate(config: &Path) -> CmdResult {
    let run = load_run(config, false)?;
    let ds = read_data(&run)?;
    info!("{} cases, {} dates", ds.cases().len(), ds.dates().len());
    let out = run_experiment(&ds, &run.spec)?;
    let dir = &run.output_dir;
    fs::create_dir_all(dir)?;
    write_scores(create(dir, "scores.csv")?, &[out.score_row()])?;
    write_cases(create(dir, "cases.csv")?, &out.cases)?;
    write_models(create(dir, "models.txt")?, &out.models)?;
    let ranks = out.rank_histogram()?;
    write_histogram(
        create(dir, "hist_rank.csv")?,
        &ranks,
        &rank_edges(ranks.counts.len()),
    )?;
    if let Some(pit) = out.pit_histogram()? {
        write_histogram(
            create(dir, "hist_pit.csv")?,
            &pit,
            &pit_edges(pit.counts.len()),
        )?;
    }
    println!(
        "{}: {} cases over {} dates, mean CRPS {:.6}, coverage {:.2}%",
        out.method,
        out.report.n_cases,
        out.evaluation_dates(),
        out.report.mean_crps,
        100.0 * out.report.coverage
    );
    Ok(())
}

fn sweep(config: &Path, jobs: usize) -> CmdResult {
    if jobs == 0 {
        return Err(Failure::config("--jobs must be positive"));
    }
    let run = load_run(config, true)?;
    let (lo, hi) = run.lengths.expect("validated sweep config has lengths");
    let ds = read_data(&run)?;
    let result = sweep_training_length(&ds, &run.spec, lo..=hi, jobs)?;
    let dir = &run.output_dir;
    fs::create_dir_all(dir)?;
    write_scores(create(dir, "scores.csv")?, &result.rows)?;
    write_argmin(create(dir, "argmin.csv")?, &result)?;
    println!(
        "{} from {}: best CRPS at length {} ({:.6})",
        result.method, result.start, result.best_crps.length, result.best_crps.value
    );
    Ok(())
}

fn hist(kind: HistKind, bins: Option<usize>, out: Option<&Path>, cases: &Path) -> CmdResult {
    let file = File::open(cases).map_err(|e| Failure::data(format!("{}: {e}", cases.display())))?;
    let column = match kind {
        HistKind::Rank => "rank",
        HistKind::Pit => "pit",
    };
    let values: Vec<f64> = read_case_column(BufReader::new(file), column)?
        .into_iter()
        .flatten()
        .collect();
    if values.is_empty() {
        return Err(Failure::data(format!(
            "{}: no {column} values",
            cases.display()
        )));
    }
    let (h, edges): (Histogram, Vec<f64>) = match kind {
        HistKind::Rank => {
            let mut ranks = Vec::with_capacity(values.len());
            for v in values {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Failure::data(format!("rank {v} is not a positive integer")));
                }
                ranks.push(v as usize);
            }
            let bins = bins.unwrap_or_else(|| ranks.iter().copied().max().unwrap_or(1));
            if bins < 2 {
                return Err(Failure::config("--bins must be at least 2 for ranks"));
            }
            (rank_histogram(&ranks, bins - 1)?, rank_edges(bins))
        }
        HistKind::Pit => {
            let bins = bins.unwrap_or(DEFAULT_PIT_BINS);
            if bins == 0 {
                return Err(Failure::config("--bins must be positive"));
            }
            (pit_histogram(&values, bins)?, pit_edges(bins))
        }
    };
    match out {
        Some(p) => write_histogram(BufWriter::new(File::create(p)?), &h, &edges)?,
        None => write_histogram(io::stdout().lock(), &h, &edges)?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    scenario: Scenario,
    seed: u64,
    n_dates: usize,
    stations: usize,
    members: usize,
    calendar: bool,
    params: Vec<(String, f64)>,
    out: Option<&Path>,
) -> CmdResult {
    let mut cfg = SynthConfig::new(scenario, seed, n_dates, stations);
    cfg.members = members;
    if calendar {
        cfg.dates = reference_calendar();
    }
    cfg.params = params.into_iter().collect();
    let generated = generate(&cfg).map_err(|e| Failure::config(e.to_string()))?;
    let mut summary = format!(
        "scenario {scenario}: {} cases, M = {members}\n",
        generated.dataset.cases().len()
    );
    for (k, v) in &generated.params {
        summary.push_str(&format!("{k} = {v}\n"));
    }
    summary.push_str(&format!("generator mean CRPS = {}\n", generated.mean_crps));
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_dataset(&mut w, &generated.dataset)?;
            w.flush()?;
            print!("{summary}");
        }
        None => {
            write_dataset(io::stdout().lock(), &generated.dataset)?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Calibrate { config } => calibrate(&config),
        Command::Sweep { config, jobs } => sweep(&config, jobs),
        Command::Hist {
            kind,
            bins,
            out,
            cases,
        } => hist(kind, bins, out.as_deref(), &cases),
        Command::Synth {
            scenario,
            seed,
            n_dates,
            stations,
            members,
            reference_calendar,
            params,
            out,
        } => synth(
            scenario,
            seed,
            n_dates,
            stations,
            members,
            reference_calendar,
            params,
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
