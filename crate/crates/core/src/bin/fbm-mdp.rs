use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbm_mdp::cli::{
    compare_outputs, error_json, exit_code, run, Builtin, Command, ExperimentConfig, InvertMode,
    PathSource, QRoute,
};
use fbm_mdp::models::ModelConfig;
use fbm_mdp::simulate::Statistic;
use fbm_mdp::{Error, Result, SamplingMethod};

#[derive(Parser)]
#[command(name = "fbm-mdp", version, about = "Moderate deviations for fBm-driven slow-fast SDEs")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to FBM_MDP_THREADS or all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    SampleFbm(Overrides),
    Simulate(Overrides),
    Average(Overrides),
    AssembleKdot(Overrides),
    AssembleQ(Overrides),
    InvertQ(Overrides),
    Action(Overrides),
    Discontinuity(Overrides),
    Verify {
        /// Compare two outputs produced from the same config.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        compare: Option<Vec<PathBuf>>,
        #[command(flatten)]
        o: Overrides,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// Experiment config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model config (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated epsilon ladder (simulate) or Hurst ladder (discontinuity).
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    #[arg(long)]
    paths: Option<usize>,
    /// sup-deviation, terminal-eta or exceedance:<level>.
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long)]
    method: Option<SamplingMethod>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_parser = ["direct", "explicit"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["composition", "kernel"])]
    route: Option<String>,
    /// Path CSV or builtin name (one, linear, square, sin-t).
    #[arg(long)]
    psi: Option<String>,
    /// Path CSV or builtin name (one, linear, square, sin-t).
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    half: bool,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn path_source(s: &str) -> PathSource {
    match s {
        "one" => PathSource::Builtin(Builtin::One),
        "linear" => PathSource::Builtin(Builtin::Linear),
        "square" => PathSource::Builtin(Builtin::Square),
        "sin-t" => PathSource::Builtin(Builtin::SinT),
        _ => PathSource::File(PathBuf::from(s)),
    }
}

fn parse_statistic(s: &str) -> Result<Statistic> {
    match s {
        "sup-deviation" => Ok(Statistic::SupDeviation),
        "terminal-eta" => Ok(Statistic::TerminalEta),
        _ => {
            let level = s
                .strip_prefix("exceedance:")
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| config_err(format!("unknown statistic {s:?}")))?;
            Ok(Statistic::Exceedance { level })
        }
    }
}

fn build_config(command: Command, o: Overrides, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if cfg.command.is_some_and(|c| c != command) {
        return Err(config_err(format!(
            "config is for `{}`, not `{}`",
            cfg.command.map_or("?", Command::name),
            command.name()
        )));
    }
    cfg.command = Some(command);
    if let Some(p) = &o.model {
        let text = std::fs::read_to_string(p)
            .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
        let model: ModelConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("model config: {e}")))?;
        cfg.model = Some(model);
    }
    cfg.hurst = o.hurst.or(cfg.hurst);
    cfg.steps = o.steps.or(cfg.steps);
    cfg.seed = seed.or(cfg.seed);
    if let Some(l) = o.ladder {
        match command {
            Command::Discontinuity => cfg.hurst_ladder = Some(l),
            Command::Simulate => cfg.epsilon_ladder = Some(l),
            _ => return Err(config_err("`--ladder` applies to simulate and discontinuity")),
        }
    }
    cfg.paths = o.paths.or(cfg.paths);
    if let Some(s) = &o.statistic {
        cfg.statistic = Some(parse_statistic(s)?);
    }
    cfg.method = o.method.or(cfg.method);
    cfg.dim = o.dim.or(cfg.dim);
    if let Some(m) = o.mode.as_deref() {
        cfg.mode = Some(if m == "explicit" { InvertMode::Explicit } else { InvertMode::Direct });
    }
    if let Some(r) = o.route.as_deref() {
        cfg.route = Some(if r == "kernel" { QRoute::Kernel } else { QRoute::Composition });
    }
    if let Some(p) = &o.psi {
        cfg.psi = Some(path_source(p));
    }
    if let Some(p) = &o.phi {
        cfg.phi = Some(path_source(p));
    }
    if o.half {
        cfg.half = Some(true);
    }
    Ok(cfg)
}

fn threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("FBM_MDP_THREADS") {
        Ok(v) => v
            .parse()
            .map_err(|_| config_err(format!("FBM_MDP_THREADS={v:?} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let (command, o) = match cli.cmd {
        Cmd::SampleFbm(o) => (Command::SampleFbm, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::Average(o) => (Command::Average, o),
        Cmd::AssembleKdot(o) => (Command::AssembleKdot, o),
        Cmd::AssembleQ(o) => (Command::AssembleQ, o),
        Cmd::InvertQ(o) => (Command::InvertQ, o),
        Cmd::Action(o) => (Command::Action, o),
        Cmd::Discontinuity(o) => (Command::Discontinuity, o),
        Cmd::Verify {
            compare: Some(files),
            ..
        } => {
            let c = compare_outputs(&files[0], &files[1])?;
            println!("{}", serde_json::to_string(&c)?);
            return if c.identical {
                Ok(())
            } else {
                Err(Error::Verification(format!("outputs differ on {} lines", c.differing_lines)))
            };
        }
        Cmd::Verify { compare: None, o } => (Command::Verify, o),
    };
    let cfg = build_config(command, o, cli.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(cli.threads)?)
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;
    let output = pool.install(|| run(&cfg))?;
    let mut stderr = std::io::stderr().lock();
    for w in &output.warnings {
        writeln!(stderr, "{}", serde_json::json!({ "warning": w }))?;
    }
    match &cli.out {
        Some(path) => {
            output.save(path)?;
            println!("{}", serde_json::json!({ "out": path, "summary": output.summary }));
        }
        None => output.write_csv(std::io::stdout().lock())?,
    }
    if output.failures > 0 {
        return Err(Error::Verification(format!("{} checks failed", output.failures)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
