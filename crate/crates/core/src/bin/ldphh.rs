use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ldphh::analysis::{self, DistributionSpec, WeightScheme};
use ldphh::datagen::{generate, load, Dataset, GeneratorSpec, LoadMode, Sidecar};
use ldphh::harness::{
    analyze, exit_code, run_experiment, write_csv, write_json, AnalysisReport, ExperimentSpec, ProtocolChoice,
    DEFAULT_QUERY_LIMIT,
};
use ldphh::pem::PemConfig;
use ldphh::result::{Protocol, Variant};
use ldphh::{Error, PrivacyBudget, Result};

#[derive(Parser)]
#[command(name = "ldphh", version, about = "Locally private heavy-hitter identification")]
struct Cli {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value_t = DEFAULT_QUERY_LIMIT)]
    query_limit: u64,
    /// Output file; standard output when absent.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Fill the wall_ms column with measured run times.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset and its ground-truth sidecar.
    Gen(GenArgs),
    /// Run one protocol for several repetitions.
    Run(RunArgs),
    /// Sweep protocols, budgets, k and η.
    Compare(CompareArgs),
    /// Analytic identification probabilities of a PEM configuration.
    Analyze(AnalyzeArgs),
    /// Best PEM configuration under the analytic model.
    Optimize(OptimizeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistKind {
    Zipf,
    Exp,
}

#[derive(Args, Clone)]
struct DistArgs {
    #[arg(long, value_enum, default_value_t = DistKind::Zipf)]
    dist: DistKind,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.5)]
    s: f64,
    /// Most frequent zipf ranks to skip.
    #[arg(long, default_value_t = 0)]
    drop: usize,
    /// Exponential rate.
    #[arg(long, default_value_t = 0.05)]
    rate: f64,
    /// Number of distinct values modeled.
    #[arg(long, default_value_t = 1024)]
    support: usize,
}

impl DistArgs {
    fn spec(&self) -> DistributionSpec {
        match self.dist {
            DistKind::Zipf => DistributionSpec::zipf(self.s, self.support, self.drop),
            DistKind::Exp => DistributionSpec::exponential(self.rate, self.support),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: u32,
    /// Ground-truth entries written to the sidecar.
    #[arg(long, default_value_t = 64)]
    truth_depth: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Int,
    Text,
}

/// A dataset file, or a synthetic one generated in memory.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Int)]
    mode: ModeArg,
    #[arg(long)]
    m: u32,
    #[command(flatten)]
    dist: DistArgs,
    /// Users generated when no file is given.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Generator seed; defaults to --seed.
    #[arg(long)]
    data_seed: Option<u64>,
}

impl DataArgs {
    fn dataset(&self, seed: u64) -> Result<Dataset> {
        match &self.data {
            Some(path) => load(
                path,
                self.m,
                match self.mode {
                    ModeArg::Int => LoadMode::Int,
                    ModeArg::Text => LoadMode::Text,
                },
            ),
            None => Ok(generate(&GeneratorSpec {
                dist: self.dist.spec(),
                n: self.n,
                m: self.m,
                master_seed: self.data_seed.unwrap_or(seed),
            })?
            .dataset),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    Pem,
    Spm,
    Mcm,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Pem => Protocol::Pem,
            ProtocolArg::Spm => Protocol::Spm,
            ProtocolArg::Mcm => Protocol::Mcm,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Split,
    Partition,
}

/// Knobs shared by `run` and `compare`.
#[derive(Args)]
struct KnobArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Split)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0.1)]
    final_frac: f64,
    /// Per-round extensions of PEM, e.g. 6,6.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<u32>>,
    /// Group population fractions of PEM, e.g. 0.5,0.5.
    #[arg(long, value_delimiter = ',')]
    shares: Option<Vec<f64>>,
    /// MCM segment length.
    #[arg(long)]
    seg_len: Option<u32>,
    /// Threshold variant of PEM.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1)]
    reps: u32,
}

impl KnobArgs {
    fn choice(&self, protocol: Protocol, eta: Option<u32>) -> ProtocolChoice {
        let mut c = ProtocolChoice::new(protocol).variant(match self.variant {
            VariantArg::Split => Variant::Split,
            VariantArg::Partition => Variant::Partition,
        });
        c.final_fraction = self.final_frac;
        c.eta = eta;
        c.etas = self.etas.clone();
        c.shares = self.shares.clone();
        c.seg_len = self.seg_len;
        c
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Pem)]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long)]
    eta: Option<u32>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: KnobArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pem,spm,mcm")]
    protocols: Vec<ProtocolArg>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    k: Vec<usize>,
    /// PEM extension lengths to sweep.
    #[arg(long, value_delimiter = ',')]
    eta: Vec<u32>,
}

/// A PEM configuration to evaluate analytically.
#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    eta: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    shares: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightArg {
    F1,
    Ncr,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = WeightArg::F1)]
    weights: WeightArg,
}

fn output(cli: &Cli) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit_rows(cli: &Cli, rows: &[ldphh::harness::ResultRow]) -> Result<()> {
    let mut out = output(cli)?;
    match cli.format {
        Format::Csv => write_csv(&mut out, rows)?,
        Format::Json => write_json(&mut out, rows)?,
    }
    out.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

fn emit_report(cli: &Cli, report: &AnalysisReport, extra: Option<f64>) -> Result<()> {
    let mut out = output(cli)?;
    match cli.format {
        Format::Json => match extra {
            Some(score) => {
                let mut v = serde_json::to_value(report)?;
                v["score"] = score.into();
                write_json(&mut out, &v)?
            }
            None => write_json(&mut out, report)?,
        },
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let wrap = |e: csv::Error| io_err(Path::new("<output>"), io::Error::other(e));
            w.write_record(["rank", "f", "prob"]).map_err(wrap)?;
            for r in &report.per_value {
                w.write_record([r.rank.to_string(), r.f.to_string(), r.prob.to_string()])
                    .map_err(wrap)?;
            }
            w.flush().map_err(|e| io_err(Path::new("<output>"), e))?;
        }
    }
    out.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let Some(path) = &cli.out else {
        return Err(Error::InvalidParameter("gen needs --out".into()));
    };
    let spec = GeneratorSpec {
        dist: a.dist.spec(),
        n: a.n,
        m: a.m,
        master_seed: cli.seed,
    };
    let g = generate(&spec)?;
    g.dataset.save(path)?;
    let sidecar = Sidecar::new(&spec, &g.dataset, a.truth_depth);
    let side_path = path.with_extension("truth.json");
    let file = File::create(&side_path).map_err(|e| io_err(&side_path, e))?;
    let mut w = BufWriter::new(file);
    write_json(&mut w, &sidecar)?;
    w.flush().map_err(|e| io_err(&side_path, e))
}

fn cmd_run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let data = a.data.dataset(cli.seed)?;
    let spec = ExperimentSpec {
        protocols: vec![a.knobs.choice(a.protocol.into(), a.eta)],
        eps: vec![a.eps],
        k: a.k,
        theta: a.knobs.theta,
        reps: a.knobs.reps,
        master_seed: cli.seed,
        query_limit: cli.query_limit,
        timing: cli.timing,
    };
    emit_rows(cli, &run_experiment(&data.values, data.m, &spec)?)
}

fn cmd_compare(cli: &Cli, a: &CompareArgs) -> Result<()> {
    if a.protocols.is_empty() || a.k.is_empty() {
        return Err(Error::InvalidParameter("compare needs at least one protocol and one k".into()));
    }
    let data = a.data.dataset(cli.seed)?;
    let etas: Vec<Option<u32>> = if a.eta.is_empty() {
        vec![None]
    } else {
        a.eta.iter().copied().map(Some).collect()
    };
    let mut protocols = Vec::new();
    for &p in &a.protocols {
        let p: Protocol = p.into();
        if p == Protocol::Pem {
            protocols.extend(etas.iter().map(|&eta| a.knobs.choice(p, eta)));
        } else {
            protocols.push(a.knobs.choice(p, None));
        }
    }
    let mut rows = Vec::new();
    for &k in &a.k {
        let spec = ExperimentSpec {
            protocols: protocols.clone(),
            eps: a.eps.clone(),
            k,
            theta: a.knobs.theta,
            reps: a.knobs.reps,
            master_seed: cli.seed,
            query_limit: cli.query_limit,
            timing: cli.timing,
        };
        rows.extend(run_experiment(&data.values, data.m, &spec)?);
    }
    emit_rows(cli, &rows)
}

fn model_config(cli: &Cli, a: &AnalyzeArgs) -> Result<PemConfig> {
    let m = &a.model;
    let eps = PrivacyBudget::new(m.eps)?;
    let mut choice = ProtocolChoice::new(Protocol::Pem);
    choice.eta = a.eta;
    choice.etas = a.etas.clone();
    choice.shares = a.shares.clone();
    match choice.build(m.m, m.k, eps, cli.query_limit)? {
        ldphh::result::ProtocolConfig::Pem(c) => Ok(c),
        _ => unreachable!("a pem choice builds a pem configuration"),
    }
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<()> {
    let cfg = model_config(cli, a)?;
    let report = analyze(&a.model.dist.spec(), &cfg, a.model.n)?;
    emit_report(cli, &report, None)
}

fn cmd_optimize(cli: &Cli, a: &OptimizeArgs) -> Result<()> {
    let m = &a.model;
    let weights = match a.weights {
        WeightArg::F1 => WeightScheme::F1,
        WeightArg::Ncr => WeightScheme::Ncr,
    };
    let dist = m.dist.spec();
    let eps = PrivacyBudget::new(m.eps)?;
    let (cfg, score) = analysis::optimize(&dist, m.m, m.k, m.n, eps, cli.query_limit, weights)?;
    emit_report(cli, &analyze(&dist, &cfg, m.n)?, Some(score))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(&cli, a),
        Cmd::Run(a) => cmd_run(&cli, a),
        Cmd::Compare(a) => cmd_compare(&cli, a),
        Cmd::Analyze(a) => cmd_analyze(&cli, a),
        Cmd::Optimize(a) => cmd_optimize(&cli, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ldphh: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
