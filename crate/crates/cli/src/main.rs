//! Life-cycle carbon reports for knowledge-distillation pipelines.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kdlca_cli::commands::{
    cmd_breakeven, cmd_footprint, cmd_pareto, cmd_recommend, cmd_sensitivity, cmd_simulate, emit,
    Against, OutputFormat,
};
use kdlca_cli::config::{builtin_ranges, load_config, load_plan, load_ranges, ProjectConfig};
use kdlca_cli::records::{read_records, read_scores, SystemRecord};
use kdlca_cli::CliError;

/// Environment variable holding the default output directory.
const OUT_DIR_ENV: &str = "KDLCA_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "kdlca",
    version,
    about = "Life-cycle carbon accounting and footprint/quality trade-offs for \
             knowledge-distillation pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Svg,
    All,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => OutputFormat::Table,
            Format::Json => OutputFormat::Json,
            Format::Svg => OutputFormat::Svg,
            Format::All => OutputFormat::All,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Project configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Measurement records (CSV).
    #[arg(long)]
    records: PathBuf,
    /// Output directory for JSON/SVG artifacts; defaults to $KDLCA_OUT_DIR
    /// or the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::All)]
    format: Format,
    /// Overrides the functional unit's served token volume.
    #[arg(long)]
    volume_tokens: Option<u64>,
    /// Overrides the config's bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn load(&self) -> Result<(ProjectConfig, Vec<SystemRecord>), CliError> {
        let config = load_config(&self.config)?;
        let (records, warnings) = read_records(&self.records)?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        Ok((config, records))
    }

    fn volume(&self, config: &ProjectConfig) -> u64 {
        self.volume_tokens
            .unwrap_or(config.functional_unit.volume_tokens)
    }

    fn seed(&self, config: &ProjectConfig) -> u64 {
        self.seed.unwrap_or(config.bootstrap.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-system footprint decomposition at the served volume.
    Footprint {
        #[command(flatten)]
        common: CommonArgs,
        /// Optional quality scores (CSV); orders systems and annotates bars.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Amortization curves and break-even volumes.
    Breakeven {
        #[command(flatten)]
        common: CommonArgs,
        /// Baseline the curves are compared against.
        #[arg(long, value_enum, default_value_t = AgainstArg::Teacher)]
        against: AgainstArg,
    },
    /// Footprint/quality Pareto frontier with bootstrap CIs.
    Pareto {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-document quality scores (CSV).
        #[arg(long)]
        scores: PathBuf,
    },
    /// Deployment recommendation from the decision procedure.
    Recommend {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-document quality scores (CSV).
        #[arg(long)]
        scores: PathBuf,
    },
    /// One-way sensitivity sweep over emission parameters.
    Sensitivity {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter ranges (JSON); built-in illustrative ranges when
        /// omitted.
        #[arg(long)]
        ranges: Option<PathBuf>,
    },
    /// Run a desk-scale pipeline simulation and emit records.csv.
    Simulate {
        /// Simulation plan (JSON).
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::All)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgainstArg {
    Teacher,
    Nokd,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Footprint { common, scores } => {
            let (config, records) = common.load()?;
            let scores = scores.as_deref().map(read_scores).transpose()?;
            let report = cmd_footprint(&records, &config, common.volume(&config), scores.as_ref())?;
            emit(&report, common.format.into(), &common.out_dir())?;
        }
        Command::Breakeven { common, against } => {
            let (config, records) = common.load()?;
            let against = match against {
                AgainstArg::Teacher => Against::Teacher,
                AgainstArg::Nokd => Against::Nokd,
            };
            let report = cmd_breakeven(&records, &config, common.volume(&config), against)?;
            emit(&report, common.format.into(), &common.out_dir())?;
        }
        Command::Pareto { common, scores } => {
            let (config, records) = common.load()?;
            let scores = read_scores(&scores)?;
            let report = cmd_pareto(&records, &config, &scores, common.seed(&config))?;
            emit(&report, common.format.into(), &common.out_dir())?;
        }
        Command::Recommend { common, scores } => {
            let (config, records) = common.load()?;
            let scores = read_scores(&scores)?;
            let report = cmd_recommend(
                &records,
                &config,
                &scores,
                common.volume(&config),
                common.seed(&config),
            )?;
            emit(&report, common.format.into(), &common.out_dir())?;
        }
        Command::Sensitivity { common, ranges } => {
            let (config, records) = common.load()?;
            let (ranges, from_file) = match ranges {
                Some(path) => (load_ranges(&path)?.ranges, true),
                None => (builtin_ranges(&config.params), false),
            };
            let report = cmd_sensitivity(&records, &config, &ranges, from_file)?;
            emit(&report, common.format.into(), &common.out_dir())?;
        }
        Command::Simulate {
            plan,
            out_dir,
            format,
        } => {
            let plan = load_plan(&plan)?;
            let (report, _records) = cmd_simulate(&plan)?;
            let out_dir = out_dir
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            emit(&report, format.into(), &out_dir)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
