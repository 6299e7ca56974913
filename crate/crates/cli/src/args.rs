//! Command-line flags. Flags override the values of `--config`.

use std::path::PathBuf;

use capbench_core::channels::ChannelKind;
use capbench_core::estimators::EstimatorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "capbench", version, about = "Neural channel-capacity estimation benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train estimators and write results.csv, summary.json and hist.csv.
    Run(ExperimentArgs),
    /// Write bounds.csv for the configured operating points and print it.
    Bounds(ExperimentArgs),
    /// Estimate a two-user rate region and write region.csv and summary.json.
    Mac(ExperimentArgs),
}

#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    /// Configuration file with [channel], [estimator], [train] and [output] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// awgn, ppc, oi, poisson, awgn_mac or oi_mac.
    #[arg(long)]
    pub channel: Option<String>,
    /// Operating point in dB; repeat for several points or for the two MAC users.
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    pub snr_db: Vec<f64>,
    #[arg(long)]
    pub peak: Option<f64>,
    /// Average power (awgn, ppc) or mean budget (oi, poisson).
    #[arg(long)]
    pub avg: Option<f64>,
    #[arg(long)]
    pub dark_current: Option<f64>,
    /// mine, smile, nwj, tuba, infonce, dine or chi2.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Search over discrete input supports with an increasing number of atoms.
    #[arg(long)]
    pub discrete_search: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    /// Reads `--config` if given and applies the remaining flags on top.
    pub fn to_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let c = &mut cfg.channel;
        if let Some(name) = &self.channel {
            c.kind = ChannelKind::parse(&name.replace('-', "_"))
                .ok_or_else(|| CliError::Config(format!("unknown channel `{name}`")))?;
        }
        if !self.snr_db.is_empty() {
            c.snr_db.clone_from(&self.snr_db);
        }
        if self.peak.is_some() {
            c.peak = self.peak;
        }
        if self.avg.is_some() {
            c.avg = self.avg;
        }
        if let Some(d) = self.dark_current {
            c.dark_current = d;
        }
        let e = &mut cfg.estimator;
        if let Some(name) = &self.estimator {
            e.kind = EstimatorKind::parse(name).ok_or_else(|| CliError::Config(format!("unknown estimator `{name}`")))?;
        }
        if let Some(t) = self.tau {
            e.tau = t;
        }
        if let Some(a) = self.alpha {
            e.alpha = a;
        }
        let t = &mut cfg.train;
        if let Some(n) = self.trials {
            t.trials = n;
        }
        if let Some(s) = self.seed {
            t.seed_base = s;
        }
        if let Some(n) = self.eval_size {
            t.eval_size = n;
        }
        if self.discrete_search {
            cfg.discrete_search = true;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir.clone_from(d);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_and_repeated_snr() {
        let cli = Cli::try_parse_from(["capbench", "bounds", "--channel", "awgn-mac", "--snr-db", "-3", "--snr-db", "5"]).unwrap();
        let Command::Bounds(a) = cli.command else { panic!("wrong subcommand") };
        let cfg = a.to_config().unwrap();
        assert_eq!(cfg.channel.kind, ChannelKind::AwgnMac);
        assert_eq!(cfg.channel.snr_db, vec![-3.0, 5.0]);
    }

    #[test]
    fn unknown_names_are_config_errors() {
        let a = ExperimentArgs {
            estimator: Some("mien".into()),
            ..ExperimentArgs::default()
        };
        assert_eq!(a.to_config().unwrap_err().exit_code(), 1);
    }
}
