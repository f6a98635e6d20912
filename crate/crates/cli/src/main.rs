use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volac_cli::{run, ConfigError, ExperimentConfig, Kind, RunError};

#[derive(Parser)]
#[command(name = "volac", version, about = "Volume-constrained Allen-Cahn experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run {
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    ValidatePotential(Overrides),
    Radial(Overrides),
    RadialSweep(Overrides),
    Solve(Overrides),
    Multiplicity(Overrides),
    Spectrum(Overrides),
    MorseCheck(Overrides),
}

#[derive(Args, Default)]
struct Overrides {
    /// Base configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long = "V")]
    volume: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed_pitch: Option<f64>,
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(short = 'k')]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated masses.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    /// Comma-separated Morse indices.
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn build(kind: Option<Kind>, file: Option<PathBuf>, o: Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match o.config.as_ref().or(file.as_ref()) {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let kind = kind.ok_or(ConfigError::Missing("kind"))?;
            let output = o.output.clone().ok_or(ConfigError::Missing("output"))?;
            let mut c = ExperimentConfig::new(kind, output);
            c.base_dir = std::env::current_dir().ok();
            c
        }
    };
    if let Some(k) = kind {
        if k != cfg.kind {
            return Err(ConfigError::Invalid {
                field: "kind",
                message: format!("subcommand {k:?} does not match the configuration's {:?}", cfg.kind),
            });
        }
    }
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src {
                $dst = Some(v);
            }
        };
    }
    if let Some(v) = o.output {
        cfg.output = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    set!(o.potential => cfg.potential);
    set!(o.domain => cfg.domain);
    set!(o.volume => cfg.volume);
    set!(o.eps => cfg.eps);
    set!(o.workers => cfg.workers);
    set!(o.init => cfg.solver.init);
    set!(o.seed_pitch => cfg.multiplicity.seed_pitch);
    set!(o.solution => cfg.spectrum.solution);
    set!(o.gamma => cfg.radial.gamma);
    set!(o.gammas => cfg.radial.gammas);
    set!(o.dim => cfg.radial.dim);
    set!(o.h => cfg.radial.h);
    set!(o.indices => cfg.morse.indices);
    if let Some(k) = o.k {
        match cfg.kind {
            Kind::Solve => cfg.solver.spectrum_k = Some(k),
            Kind::Multiplicity => cfg.multiplicity.spectrum_k = Some(k),
            _ => cfg.spectrum.k = Some(k),
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, file, o) = match cli.command {
        Command::Run { file, o } => (None, Some(file), o),
        Command::ValidatePotential(o) => (Some(Kind::ValidatePotential), None, o),
        Command::Radial(o) => (Some(Kind::Radial), None, o),
        Command::RadialSweep(o) => (Some(Kind::RadialSweep), None, o),
        Command::Solve(o) => (Some(Kind::Solve), None, o),
        Command::Multiplicity(o) => (Some(Kind::Multiplicity), None, o),
        Command::Spectrum(o) => (Some(Kind::Spectrum), None, o),
        Command::MorseCheck(o) => (Some(Kind::MorseCheck), None, o),
    };
    let result = build(kind, file, o).map_err(RunError::from).and_then(|cfg| run(&cfg));
    match result {
        Ok(r) => {
            println!("{}", r.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("volac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
