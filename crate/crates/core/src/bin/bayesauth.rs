use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use bayesauth::access_log::{
    discretize, discretize_with_readers, generate_log, parse_log, write_log, DiscretizedDataset, LogSchema,
    PopulationSpec, ProfileKind,
};
use bayesauth::bootstrap::stream_rng;
use bayesauth::empirical::{fit_dirichlet, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use bayesauth::real::{aggregate_fp_fn, run_real, write_reports_csv, RealConfig};
use bayesauth::{lemma_sweep, run_synthetic, DecisionRule, DirichletBelief, Error, Result, SynthConfig};

/// Gap below this is treated as a violation by `verify-lemma`.
const LEMMA_TOLERANCE: f64 = -1e-12;

#[derive(Parser)]
#[command(name = "bayesauth", version, about = "Bayesian user authentication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `seed` and `[synth]`, `[real]`, `[population]`, `[fit]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Caps the worker threads used by parallel experiments.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat non-convergence and rejected log rows as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic prefix-length error curves.
    Synth(SynthArgs),
    /// Generate a synthetic access log.
    GenLog(GenLogArgs),
    /// Parse an access log and write the discretized dataset.
    Ingest(IngestArgs),
    /// Held-out-day study on a discretized dataset.
    Real(RealArgs),
    /// Randomized check that conditioning on x never lowers the marginal of x.
    VerifyLemma(LemmaArgs),
    /// Fit the population prior of a dataset.
    FitPrior(FitArgs),
    /// Pivot a synth curve CSV into one row per prefix length.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    runs: Option<usize>,
    /// Number of outcomes K.
    #[arg(long)]
    degree: Option<usize>,
    /// Test sequence length n.
    #[arg(long)]
    length: Option<usize>,
    /// Users drawn for the world-model fit.
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    shape: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    /// Enrollment sample length (defaults to the test length).
    #[arg(long)]
    enroll: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    partial_weight: Option<f64>,
    /// Fit one world model shared by all runs.
    #[arg(long)]
    share_prior: bool,
    /// Curve CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON with the configuration and every curve point.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Dirichlet,
    SharedEntrances,
    Identical,
    DisjointDoors,
}

#[derive(Args)]
struct GenLogArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    readers: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    /// Mean accesses per user per day.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Concentration of the Dirichlet profile kind.
    #[arg(long, default_value_t = 20.0)]
    concentration: f64,
    /// Log CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Log CSV with a header row.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "timestamp")]
    timestamp_col: String,
    #[arg(long, default_value = "reader_id")]
    reader_col: String,
    #[arg(long, default_value = "user_id")]
    user_col: String,
    /// Comma-separated reader ids fixing the reader order; rows naming other readers are rejected.
    #[arg(long, value_delimiter = ',')]
    readers: Option<Vec<String>>,
    /// Dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV listing rejected rows.
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args)]
struct RealArgs {
    /// Dataset file written by `ingest`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    runs: Option<usize>,
    /// Repetitions per run.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    world_fraction: Option<f64>,
    #[arg(long)]
    min_records: Option<usize>,
    /// Comma-separated rules: world, f-bias, p-bias, p-bias:<w>.
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<String>>,
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Per-run CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct LemmaArgs {
    /// Random Dirichlet trials.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Random discrete-mixture trials.
    #[arg(long, default_value_t = 1_000)]
    mixtures: usize,
    /// Optional JSON summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset file written by `ingest`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// JSON with the fitted parameters.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Curve CSV written by `synth`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    synth: Option<SynthConfig>,
    real: Option<RealConfig>,
    population: Option<PopulationSpec>,
    fit: Option<FitSettings>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitSettings {
    tolerance: f64,
    max_iterations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Serialize)]
struct FittedPrior<'a> {
    phi: &'a [f64],
    concentration: f64,
    iterations: usize,
    converged: bool,
    final_relative_change: f64,
    log_likelihood: f64,
    users: usize,
    degree: usize,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidValue(format!("cannot set thread count: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Synth(a) => synth(a, file.synth.unwrap_or_default(), seed),
        Command::GenLog(a) => gen_log(a, file.population.unwrap_or_default(), seed),
        Command::Ingest(a) => ingest(a, cli.strict),
        Command::Real(a) => real(a, file.real.unwrap_or_default(), seed, cli.strict),
        Command::VerifyLemma(a) => verify_lemma(a, seed),
        Command::FitPrior(a) => fit_prior(a, file.fit.unwrap_or_default(), cli.strict),
        Command::PlotData(a) => plot_data(a),
    }
}

fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn read_dataset(path: &Path) -> Result<DiscretizedDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DiscretizedDataset::from_text(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs, mut cfg: SynthConfig, seed: u64) -> Result<()> {
    cfg.seed = seed;
    set(&mut cfg.runs, a.runs);
    set(&mut cfg.degree, a.degree);
    set(&mut cfg.sequence_length, a.length);
    set(&mut cfg.population_size, a.population);
    set(&mut cfg.gamma_shape, a.shape);
    set(&mut cfg.gamma_scale, a.scale);
    set(&mut cfg.bootstrap_replicates, a.bootstrap);
    set(&mut cfg.partial_weight, a.partial_weight);
    if a.enroll.is_some() {
        cfg.enrollment_length = a.enroll;
    }
    cfg.share_prior_fit |= a.share_prior;

    let curve = run_synthetic(&cfg)?;
    let mut out = create(&a.out)?;
    curve.write_csv(&mut out)?;
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(path) = &a.json {
        write_json(path, &curve)?;
    }

    println!("{} runs, K={}, n={}", cfg.runs, cfg.degree, cfg.sequence_length);
    println!("{:>8} {:>10} {:>10}", "rule", "err(t=1)", format!("err(t={})", cfg.sequence_length));
    for rule in cfg.rules() {
        let first = curve.point(rule, 1).map_or(f64::NAN, |p| p.error_rate);
        let last = curve.point(rule, cfg.sequence_length).map_or(f64::NAN, |p| p.error_rate);
        println!("{:>8} {first:>10.4} {last:>10.4}", rule.label());
    }
    Ok(())
}

fn gen_log(a: GenLogArgs, mut spec: PopulationSpec, seed: u64) -> Result<()> {
    set(&mut spec.users, a.users);
    set(&mut spec.readers, a.readers);
    set(&mut spec.days, a.days);
    set(&mut spec.mean_daily_accesses, a.rate);
    if let Some(p) = a.profile {
        spec.profile = match p {
            ProfileArg::Dirichlet => ProfileKind::Dirichlet {
                concentration: a.concentration,
            },
            ProfileArg::SharedEntrances => ProfileKind::SharedEntrances {
                entrances: 3,
                personal_readers: 3,
                personal_share: 0.5,
            },
            ProfileArg::Identical => ProfileKind::Identical,
            ProfileArg::DisjointDoors => ProfileKind::DisjointDoors,
        };
    }
    let records = generate_log(&spec, &mut stream_rng(seed, 0))?;
    let mut out = create(&a.out)?;
    write_log(&records, &mut out)?;
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    println!(
        "{} records from {} users over {} days and {} readers",
        records.len(),
        spec.users,
        spec.days,
        spec.readers
    );
    Ok(())
}

fn ingest(a: IngestArgs, strict: bool) -> Result<()> {
    let schema = LogSchema {
        timestamp: a.timestamp_col,
        reader: a.reader_col,
        user: a.user_col,
        readers: a.readers.clone(),
    };
    let parsed = parse_log(open(&a.input)?, &schema)?;
    if let Some(path) = &a.rejects {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["line", "reason"]).map_err(|e| Error::Parse(e.to_string()))?;
        for r in &parsed.rejects {
            w.write_record([r.line.to_string(), r.reason.clone()])
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if strict && !parsed.rejects.is_empty() {
        let first = &parsed.rejects[0];
        return Err(Error::Parse(format!(
            "{}: {} rows rejected, first at line {}: {}",
            a.input.display(),
            parsed.rejects.len(),
            first.line,
            first.reason
        )));
    }
    let dataset = match &a.readers {
        Some(readers) => discretize_with_readers(&parsed.records, readers)?,
        None => discretize(&parsed.records)?,
    };
    let mut out = create(&a.out)?;
    out.write_all(dataset.to_text().as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&a.out, e))?;
    println!(
        "{} records kept, {} rejected; {} users, {} readers, {} day records, K={}",
        parsed.records.len(),
        parsed.rejects.len(),
        dataset.users().len(),
        dataset.n_readers(),
        dataset.days().len(),
        dataset.degree()
    );
    Ok(())
}

fn real(a: RealArgs, mut cfg: RealConfig, seed: u64, strict: bool) -> Result<()> {
    cfg.seed = seed;
    set(&mut cfg.runs, a.runs);
    set(&mut cfg.reps_per_run, a.reps);
    set(&mut cfg.world_fraction, a.world_fraction);
    set(&mut cfg.min_records_per_user, a.min_records);
    set(&mut cfg.bootstrap_replicates, a.bootstrap);
    if let Some(rules) = &a.rules {
        cfg.rules = rules.iter().map(|r| r.trim().parse()).collect::<Result<Vec<DecisionRule>>>()?;
    }
    let dataset = read_dataset(&a.input)?;
    let reports = run_real(&dataset, &cfg)?;
    if strict {
        if let Some(r) = reports.iter().find(|r| !r.fit_converged) {
            return Err(Error::NotConverged {
                iterations: r.fit_iterations,
                change: f64::NAN,
            });
        }
    }
    let mut out = create(&a.out)?;
    write_reports_csv(&reports, &mut out)?;
    out.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(path) = &a.json {
        write_json(path, &reports)?;
    }

    println!("{:>4} {}", "run", cfg.rules.iter().map(|r| format!("{:>9}", r.label())).collect::<String>());
    for r in &reports {
        let cells: String = r.rules.iter().map(|x| format!("{:>9.4}", x.error_rate)).collect();
        println!("{:>4} {cells}", r.run);
    }
    for &rule in &cfg.rules {
        let (fp, fn_, ratio) = aggregate_fp_fn(&reports, rule);
        let ratio = ratio.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
        println!("{}: false alarms {fp}, impostors accepted {fn_}, ratio {ratio}", rule.label());
    }
    Ok(())
}

fn verify_lemma(a: LemmaArgs, seed: u64) -> Result<()> {
    let sweep = lemma_sweep(a.trials, a.mixtures, seed)?;
    if let Some(path) = &a.out {
        write_json(path, &sweep)?;
    }
    println!(
        "min gap {:e} (dirichlet {:e} over {} trials, mixtures {:e} over {} trials)",
        sweep.min_gap(),
        sweep.min_dirichlet_gap,
        sweep.dirichlet_trials,
        sweep.min_mixture_gap,
        sweep.mixture_trials
    );
    if sweep.min_gap() < LEMMA_TOLERANCE {
        return Err(Error::Domain(format!("gap {:e} below {LEMMA_TOLERANCE:e}", sweep.min_gap())));
    }
    Ok(())
}

fn fit_prior(a: FitArgs, mut settings: FitSettings, strict: bool) -> Result<()> {
    set(&mut settings.tolerance, a.tolerance);
    set(&mut settings.max_iterations, a.max_iterations);
    let dataset = read_dataset(&a.input)?;
    let users = dataset.users();
    let data = dataset.pooled_user_counts(&users)?;
    let fit = fit_dirichlet(&data, settings.tolerance, settings.max_iterations)?;
    if strict && !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
            change: fit.final_relative_change,
        });
    }
    let belief: &DirichletBelief = &fit.belief;
    write_json(
        &a.out,
        &FittedPrior {
            phi: belief.phi(),
            concentration: belief.concentration(),
            iterations: fit.iterations,
            converged: fit.converged,
            final_relative_change: fit.final_relative_change,
            log_likelihood: fit.log_likelihood,
            users: data.len(),
            degree: data.degree(),
        },
    )?;
    println!(
        "{} users, K={}: concentration {:.4}, {} iterations, converged {}",
        data.len(),
        data.degree(),
        belief.concentration(),
        fit.iterations,
        fit.converged
    );
    Ok(())
}

fn plot_data(a: PlotArgs) -> Result<()> {
    let parse_err = |e: csv::Error| Error::Parse(format!("{}: {e}", a.input.display()));
    let mut reader = csv::Reader::from_reader(open(&a.input)?);
    let headers = reader.headers().map_err(parse_err)?.clone();
    let expected = ["prefix_len", "rule", "err", "lo5", "hi5"];
    if headers.iter().ne(expected) {
        return Err(Error::Parse(format!(
            "{}: expected header {}",
            a.input.display(),
            expected.join(",")
        )));
    }
    let mut rules: Vec<String> = Vec::new();
    let mut rows: std::collections::BTreeMap<usize, std::collections::HashMap<String, [String; 3]>> =
        Default::default();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let t: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("{}: bad prefix length {:?}", a.input.display(), &record[0])))?;
        let rule = record[1].to_string();
        if !rules.contains(&rule) {
            rules.push(rule.clone());
        }
        rows.entry(t)
            .or_default()
            .insert(rule, [record[2].to_string(), record[3].to_string(), record[4].to_string()]);
    }
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["prefix_len".to_string()];
    for r in &rules {
        header.extend([format!("{r}_err"), format!("{r}_lo5"), format!("{r}_hi5")]);
    }
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for (t, cells) in &rows {
        let mut line = vec![t.to_string()];
        for r in &rules {
            match cells.get(r) {
                Some(v) => line.extend(v.iter().cloned()),
                None => line.extend(["NA".to_string(), "NA".to_string(), "NA".to_string()]),
            }
        }
        w.write_record(&line).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    println!("{} prefix lengths, {} rules", rows.len(), rules.len());
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
