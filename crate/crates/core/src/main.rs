use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uwofdm::config::{default_80211_config, Scheme, SystemConfig};
use uwofdm::harness::{
    parse_snr_grid, run_ber_experiment, run_design_report, run_papr_experiment,
    run_psd_experiment, write_curves, write_matrix_csv, Experiment, ExperimentSpec, HpaMode,
    Sweep,
};
use uwofdm::Error;

#[derive(Parser)]
#[command(name = "uwofdm", version, about = "UW-OFDM PAPR reduction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the generator matrices and check their invariants
    Design {
        #[command(flatten)]
        common: Common,
        /// Also write Y and C next to G
        #[arg(long)]
        dump_matrices: bool,
    },
    /// PAPR CCDF per scheme
    Papr(Common),
    /// Bit error rate over an SNR grid
    Ber(Common),
    /// Welch PSD before and after the amplifier
    Psd(Common),
}

#[derive(Args)]
struct Common {
    /// TOML system config; the 802.11a-like default when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated schemes: none, prp, pts, slm, prp-pts, prp-slm
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Eb/N0 grid in dB as start:stop:step
    #[arg(long)]
    snr: Option<String>,
    /// e.g. nr=16,20,24,28
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "off")]
    hpa: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Bit errors after which an SNR point stops; 0 runs every symbol
    #[arg(long)]
    min_errors: Option<u64>,
}

enum Failure {
    Config(Error),
    Invariant,
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Dimension(_) => Failure::Config(e),
            e => Failure::Run(e),
        }
    }
}

fn load_config(common: &Common) -> Result<SystemConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => SystemConfig::from_file(path).map_err(Failure::Config)?,
        None => default_80211_config(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn build_spec(experiment: Experiment, common: &Common) -> Result<ExperimentSpec, Failure> {
    let cfg = load_config(common)?;
    let mut spec = ExperimentSpec::new(experiment, cfg);
    if !common.scheme.is_empty() {
        spec.schemes = common.scheme.clone();
    }
    if let Some(n) = common.symbols {
        spec.n_symbols = n;
    }
    if let Some(s) = &common.snr {
        spec.snr_db = parse_snr_grid(s).map_err(Failure::Config)?;
    }
    if let Some(s) = &common.sweep {
        spec.sweep = Some(s.parse::<Sweep>().map_err(Failure::Config)?);
    }
    if let Some(w) = common.workers {
        spec.workers = w;
    }
    if let Some(m) = common.min_errors {
        spec.min_errors = m;
    }
    spec.hpa = common.hpa.parse::<HpaMode>().map_err(Failure::Config)?;
    spec.output_dir = common.out.clone();
    // surface config errors before any work starts
    spec.configs().map_err(Failure::Config)?;
    Ok(spec)
}

fn design(common: &Common, dump: bool) -> Result<(), Failure> {
    let spec = build_spec(Experiment::Design, common)?;
    let configs: Vec<SystemConfig> = match &spec.sweep {
        None => vec![spec.config.clone()],
        Some(Sweep::Redundancy(values)) => values.iter().map(|&nr| spec.config.with_redundancy(nr)).collect(),
    };
    std::fs::create_dir_all(&spec.output_dir).map_err(|e| Failure::Run(e.into()))?;
    let mut ok = true;
    for cfg in configs {
        let report = run_design_report(&cfg)?;
        print!("{}", report.text);
        let hash = &report.config_hash;
        std::fs::write(spec.output_dir.join(format!("design_{hash}.txt")), &report.text)
            .map_err(|e| Failure::Run(e.into()))?;
        if let Some(g) = &report.prp {
            let meta = [("matrix", "G".to_string()), ("config_hash", hash.clone())];
            write_matrix_csv(&spec.output_dir.join(format!("g_prp_{hash}.csv")), &g.g, &meta)?;
            if dump {
                let sm = uwofdm::linops::StructuralMatrices::build(&cfg)?;
                let meta_y = [("matrix", "Y".to_string()), ("config_hash", hash.clone())];
                write_matrix_csv(&spec.output_dir.join(format!("y_{hash}.csv")), &sm.y, &meta_y)?;
                let meta_c = [("matrix", "C".to_string()), ("config_hash", hash.clone())];
                write_matrix_csv(&spec.output_dir.join(format!("c_prp_{hash}.csv")), &g.c, &meta_c)?;
            }
        }
        ok &= report.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Invariant)
    }
}

fn simulate(experiment: Experiment, common: &Common) -> Result<(), Failure> {
    let spec = build_spec(experiment, common)?;
    let curves = match experiment {
        Experiment::Papr => run_papr_experiment(&spec)?,
        Experiment::Ber => run_ber_experiment(&spec)?,
        Experiment::Psd => run_psd_experiment(&spec)?,
        Experiment::Design => unreachable!("handled by design()"),
    };
    for path in write_curves(&curves, &spec.output_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design { common, dump_matrices } => design(common, *dump_matrices),
        Command::Papr(c) => simulate(Experiment::Papr, c),
        Command::Ber(c) => simulate(Experiment::Ber, c),
        Command::Psd(c) => simulate(Experiment::Psd, c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant) => {
            eprintln!("invariant check failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
