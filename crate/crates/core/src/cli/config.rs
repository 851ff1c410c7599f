use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::kernel::Kernel;
use crate::selector::{default_grid, BandwidthGrid};
use crate::smoother::BandwidthKind;

use super::{CliError, CliResult};

pub const THREADS_ENV: &str = "ATE_BW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ate-bw", version, about = "Bandwidth selection for local linear average treatment effect estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandKind {
    Fit,
    Criteria,
    Simulate,
    Asymptotics,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select bandwidths and estimate the effect.
    Fit(Flags),
    /// Write one criterion's surface over the bandwidth grid.
    Criteria(Flags),
    /// Run a Monte Carlo campaign on a design.
    Simulate(Flags),
    /// Asymptotic constants and optimal constant bandwidths of a design.
    Asymptotics(Flags),
}

impl Command {
    fn parts(&self) -> (CommandKind, &Flags) {
        match self {
            Command::Fit(f) => (CommandKind::Fit, f),
            Command::Criteria(f) => (CommandKind::Criteria, f),
            Command::Simulate(f) => (CommandKind::Simulate, f),
            Command::Asymptotics(f) => (CommandKind::Asymptotics, f),
        }
    }
}

/// `lo:hi:count`, equally spaced and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "String")]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("grid `{s}` is not lo:hi:count"));
        };
        let lo = lo.trim().parse::<f64>().map_err(|e| format!("grid lower end: {e}"))?;
        let hi = hi.trim().parse::<f64>().map_err(|e| format!("grid upper end: {e}"))?;
        let count = count.trim().parse::<usize>().map_err(|e| format!("grid count: {e}"))?;
        Ok(GridSpec { lo, hi, count })
    }
}

impl TryFrom<String> for GridSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// CSV with header x,y,z.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Simulation design, 1 to 6.
    #[arg(long)]
    pub design: Option<u8>,
    /// Sample size for generated data.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated method names (m_y, m_beta, m_tau, cv, inr, ds_beta, ds_tau).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// tricube, epanechnikov or uniform.
    #[arg(long)]
    pub kernel: Option<String>,
    /// nn (nearest-neighbour fraction) or constant (radius).
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Bandwidth grid as lo:hi:count.
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// Map the design propensity p to 0.2 + 0.6p.
    #[arg(long)]
    pub damp_propensity: bool,
    /// Pool both groups' residuals when estimating the noise variance.
    #[arg(long)]
    pub pooled_variance: bool,
    /// Restrict per-group criteria to one group (0 or 1).
    #[arg(long)]
    pub group: Option<u8>,
    /// Worker threads for selection and replicates.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Output file, or directory for `simulate`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with any of the above as keys (dashes become underscores).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    design: Option<u8>,
    n: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    methods: Option<Vec<String>>,
    kernel: Option<String>,
    bandwidth: Option<String>,
    grid: Option<GridSpec>,
    damp_propensity: Option<bool>,
    pooled_variance: Option<bool>,
    group: Option<u8>,
    threads: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: Option<PathBuf>,
    pub design: Option<u8>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub kernel: Kernel,
    pub bandwidth: BandwidthKind,
    pub grid: Option<GridSpec>,
    pub damp_propensity: bool,
    pub pooled_variance: bool,
    pub group: Option<u8>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_N: usize = 500;
pub const DEFAULT_REPLICATES: usize = 200;
pub const DEFAULT_SEED: u64 = 20_240_601;

impl RunConfig {
    pub fn resolve(cli: &Cli) -> CliResult<Self> {
        let (command, flags) = cli.command.parts();
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let kernel = flags
            .kernel
            .as_ref()
            .or(file.kernel.as_ref())
            .map(|k| k.parse::<Kernel>())
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?
            .unwrap_or_default();
        let bandwidth = flags
            .bandwidth
            .as_ref()
            .or(file.bandwidth.as_ref())
            .map(|k| k.parse::<BandwidthKind>())
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?
            .unwrap_or(BandwidthKind::NearestNeighbor);
        let default_methods = match command {
            CommandKind::Simulate => ["m_beta", "m_tau", "m_y", "cv", "inr", "ds_beta", "ds_tau"].map(String::from).to_vec(),
            _ => vec!["cv".to_string()],
        };
        let cfg = RunConfig {
            command,
            input: flags.input.clone().or(file.input),
            design: flags.design.or(file.design),
            n: flags.n.or(file.n).unwrap_or(DEFAULT_N),
            replicates: flags.replicates.or(file.replicates).unwrap_or(DEFAULT_REPLICATES),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            methods: flags.methods.clone().or(file.methods).unwrap_or(default_methods),
            kernel,
            bandwidth,
            grid: flags.grid.or(file.grid),
            damp_propensity: flags.damp_propensity || file.damp_propensity.unwrap_or(false),
            pooled_variance: flags.pooled_variance || file.pooled_variance.unwrap_or(false),
            group: flags.group.or(file.group),
            threads: flags.threads.or(file.threads),
            out: flags.out.clone().or(file.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let needs_design = matches!(self.command, CommandKind::Simulate | CommandKind::Asymptotics);
        if needs_design && self.design.is_none() {
            return Err(CliError::Config("--design is required".into()));
        }
        if matches!(self.command, CommandKind::Fit | CommandKind::Criteria) {
            match (&self.input, self.design) {
                (None, None) => return Err(CliError::Config("either --input or --design is required".into())),
                (Some(_), Some(_)) => return Err(CliError::Config("--input and --design are mutually exclusive".into())),
                _ => {}
            }
        }
        if let Some(d) = self.design {
            if !(1..=6).contains(&d) {
                return Err(CliError::Config(format!("design {d} is not in 1..=6")));
            }
        }
        if let Some(g) = self.group {
            if g > 1 {
                return Err(CliError::Config(format!("group {g} is not 0 or 1")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("--replicates must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("--methods is empty".into()));
        }
        if self.command == CommandKind::Criteria && self.methods.len() != 1 {
            return Err(CliError::Config("criteria takes exactly one method".into()));
        }
        Ok(())
    }

    /// The explicit grid, else the default nearest-neighbour grid for `n`.
    pub fn grid_for(&self, n: usize) -> CliResult<BandwidthGrid> {
        match self.grid {
            Some(g) => BandwidthGrid::linspace(self.bandwidth, g.lo, g.hi, g.count).map_err(|e| CliError::Config(e.to_string())),
            None if self.bandwidth == BandwidthKind::NearestNeighbor => Ok(default_grid(n)),
            None => Err(CliError::Config("constant bandwidths need an explicit --grid".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> CliResult<RunConfig> {
        let cli = Cli::try_parse_from(std::iter::once("ate-bw").chain(args.iter().copied())).unwrap();
        RunConfig::resolve(&cli)
    }

    #[test]
    fn grid_spec() {
        assert_eq!("0.1:1:40".parse::<GridSpec>().unwrap(), GridSpec { lo: 0.1, hi: 1.0, count: 40 });
        assert!("0.1:1".parse::<GridSpec>().is_err());
        assert!("a:1:3".parse::<GridSpec>().is_err());
    }

    #[test]
    fn defaults_and_requirements() {
        let cfg = parse(&["simulate", "--design", "3"]).unwrap();
        assert_eq!(cfg.methods.len(), 7);
        assert_eq!(cfg.n, DEFAULT_N);
        assert!(parse(&["simulate"]).is_err());
        assert!(parse(&["fit"]).is_err());
        assert!(parse(&["asymptotics", "--design", "9"]).is_err());
        assert!(parse(&["criteria", "--design", "1", "--methods", "cv,inr"]).is_err());
        assert!(parse(&["fit", "--design", "1", "--bandwidth", "wide"]).is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "design = 2\nn = 120\nseed = 9\nmethods = [\"ds_tau\"]\ngrid = \"0.2:1:5\"\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["simulate", "--config", p, "--n", "150"]).unwrap();
        assert_eq!(cfg.design, Some(2));
        assert_eq!(cfg.n, 150);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.methods, vec!["ds_tau"]);
        assert_eq!(cfg.grid_for(150).unwrap().len(), 5);

        std::fs::write(&path, "colour = 1\n").unwrap();
        assert!(matches!(parse(&["simulate", "--config", p]), Err(CliError::Config(_))));
    }
}
