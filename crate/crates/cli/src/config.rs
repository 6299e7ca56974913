//! Experiment configuration: line-based `key=value` pairs under `[section]`
//! headers.
//!
//! ```text
//! [channel]
//! kind=awgn
//! snr_db=2,20
//!
//! [estimator]
//! kind=mine
//!
//! [train]
//! trials=10
//! ```
//!
//! Unknown sections and keys are rejected so that typos never silently fall
//! back to defaults.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use capbench_core::channels::ChannelKind;
use capbench_core::estimators::{Chi2Form, EstimatorConfig, EstimatorKind};
use capbench_core::ndt::SourceKind;
use capbench_core::numerics::Activation;
use capbench_core::reference::OI_MAC_RATIO;
use capbench_core::trainer::{FinalRule, TrainConfig};
use ini::{Ini, Properties};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Operating points in dB; their meaning depends on `kind`.
    pub snr_db: Vec<f64>,
    pub peak: Option<f64>,
    /// Average power (AWGN, PPC) or mean budget (OI, Poisson).
    pub avg: Option<f64>,
    pub dark_current: f64,
    pub sigma: f64,
    /// Mean-to-peak ratio of both users of the optical MAC.
    pub mean_ratio: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr_db: Vec::new(),
            peak: None,
            avg: None,
            dark_current: 0.0,
            sigma: 1.0,
            mean_ratio: OI_MAC_RATIO,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub discrete_search: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            estimator: EstimatorConfig::default(),
            train: TrainConfig::default(),
            discrete_search: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn bad(section: &str, key: &str, reason: impl Display) -> CliError {
    CliError::Config(format!("[{section}] {key}: {reason}"))
}

fn number<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    v.trim().parse().map_err(|e| bad(section, key, format!("`{v}`: {e}")))
}

fn list<T: FromStr>(section: &str, key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| number(section, key, s)).collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn source_name(s: SourceKind) -> String {
    match s {
        SourceKind::GaussianStd => "gaussian".into(),
        SourceKind::DiscreteUniform { m } => format!("discrete:{m}"),
    }
}

fn parse_source(v: &str) -> Option<SourceKind> {
    match v {
        "gaussian" => Some(SourceKind::GaussianStd),
        _ => {
            let m: usize = v.strip_prefix("discrete:")?.parse().ok()?;
            (m >= 2).then_some(SourceKind::DiscreteUniform { m })
        }
    }
}

fn parse_bool(section: &str, key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(bad(section, key, format!("expected true or false, got `{other}`"))),
    }
}

fn named<T>(section: &str, key: &str, v: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, CliError> {
    parse(v.trim()).ok_or_else(|| bad(section, key, format!("unknown value `{v}`")))
}

impl ExperimentConfig {
    /// Parses a configuration. Keys not present keep their defaults; a text
    /// without any key is an error.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = Self::default();
        let mut seen = 0usize;
        for (section, props) in ini.iter() {
            seen += props.len();
            match section {
                Some("channel") => cfg.apply_channel(props)?,
                Some("estimator") => cfg.apply_estimator(props)?,
                Some("train") => cfg.apply_train(props)?,
                Some("output") => cfg.apply_output(props)?,
                None if props.is_empty() => {}
                None => return Err(CliError::Config("keys must appear under a [section] header".into())),
                Some(other) => return Err(CliError::Config(format!("unknown section [{other}]"))),
            }
        }
        if seen == 0 {
            return Err(CliError::Config("configuration is empty".into()));
        }
        Ok(cfg)
    }

    fn apply_channel(&mut self, props: &Properties) -> Result<(), CliError> {
        const S: &str = "channel";
        let c = &mut self.channel;
        for (k, v) in props.iter() {
            match k {
                "kind" => c.kind = named(S, k, v, ChannelKind::parse)?,
                "snr_db" => c.snr_db = list(S, k, v)?,
                "peak" => c.peak = Some(number(S, k, v)?),
                "avg" => c.avg = Some(number(S, k, v)?),
                "dark_current" => c.dark_current = number(S, k, v)?,
                "sigma" => c.sigma = number(S, k, v)?,
                "mean_ratio" => c.mean_ratio = number(S, k, v)?,
                _ => return Err(bad(S, k, "unknown key")),
            }
        }
        Ok(())
    }

    fn apply_estimator(&mut self, props: &Properties) -> Result<(), CliError> {
        const S: &str = "estimator";
        let e = &mut self.estimator;
        for (k, v) in props.iter() {
            match k {
                "kind" => e.kind = named(S, k, v, EstimatorKind::parse)?,
                "tau" => e.tau = number(S, k, v)?,
                "alpha" => e.alpha = number(S, k, v)?,
                "ema_rate" => e.ema_rate = number(S, k, v)?,
                "chi2_form" => e.chi2_form = named(S, k, v, Chi2Form::parse)?,
                _ => return Err(bad(S, k, "unknown key")),
            }
        }
        Ok(())
    }

    fn apply_train(&mut self, props: &Properties) -> Result<(), CliError> {
        const S: &str = "train";
        let t = &mut self.train;
        for (k, v) in props.iter() {
            match k {
                "batch" => t.batch = number(S, k, v)?,
                "iters" => t.max_iters = number(S, k, v)?,
                "plateau_window" => t.plateau_window = number(S, k, v)?,
                "plateau_tol" => t.plateau_tol = number(S, k, v)?,
                "eval_size" => t.eval_size = number(S, k, v)?,
                "trials" => t.trials = number(S, k, v)?,
                "seed" => t.seed_base = number(S, k, v)?,
                "critic_lr" => t.critic_lr = number(S, k, v)?,
                "ndt_lr" => t.ndt_lr = number(S, k, v)?,
                "critic_hidden" => t.critic_hidden = list(S, k, v)?,
                "ndt_hidden" => t.ndt_hidden = list(S, k, v)?,
                "activation" => t.hidden_activation = named(S, k, v, Activation::parse)?,
                "checkpoint_every" => t.checkpoint_every = number(S, k, v)?,
                "checkpoint_keep" => t.checkpoint_keep = number(S, k, v)?,
                "checkpoint_size" => t.checkpoint_size = number(S, k, v)?,
                "final_rule" => t.final_rule = named(S, k, v, FinalRule::parse)?,
                "source" => t.source = named(S, k, v, parse_source)?,
                "hist_samples" => t.hist_samples = number(S, k, v)?,
                "hist_bins" => t.hist_bins = number(S, k, v)?,
                "max_atoms" => t.max_atoms = number(S, k, v)?,
                "discrete_search" => self.discrete_search = parse_bool(S, k, v)?,
                _ => return Err(bad(S, k, "unknown key")),
            }
        }
        Ok(())
    }

    fn apply_output(&mut self, props: &Properties) -> Result<(), CliError> {
        for (k, v) in props.iter() {
            match k {
                "out_dir" => self.out_dir = PathBuf::from(v.trim()),
                _ => return Err(bad("output", k, "unknown key")),
            }
        }
        Ok(())
    }

    /// Serializes every field; [`parse`](Self::parse) restores an equal value.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let c = &self.channel;
        {
            let mut s = ini.with_section(Some("channel"));
            s.set("kind", c.kind.name()).set("snr_db", join(&c.snr_db));
            if let Some(a) = c.peak {
                s.set("peak", a.to_string());
            }
            if let Some(p) = c.avg {
                s.set("avg", p.to_string());
            }
            s.set("dark_current", c.dark_current.to_string())
                .set("sigma", c.sigma.to_string())
                .set("mean_ratio", c.mean_ratio.to_string());
        }
        let e = &self.estimator;
        ini.with_section(Some("estimator"))
            .set("kind", e.kind.name())
            .set("tau", e.tau.to_string())
            .set("alpha", e.alpha.to_string())
            .set("ema_rate", e.ema_rate.to_string())
            .set("chi2_form", e.chi2_form.name());
        let t = &self.train;
        ini.with_section(Some("train"))
            .set("batch", t.batch.to_string())
            .set("iters", t.max_iters.to_string())
            .set("plateau_window", t.plateau_window.to_string())
            .set("plateau_tol", t.plateau_tol.to_string())
            .set("eval_size", t.eval_size.to_string())
            .set("trials", t.trials.to_string())
            .set("seed", t.seed_base.to_string())
            .set("critic_lr", t.critic_lr.to_string())
            .set("ndt_lr", t.ndt_lr.to_string())
            .set("critic_hidden", join(&t.critic_hidden))
            .set("ndt_hidden", join(&t.ndt_hidden))
            .set("activation", t.hidden_activation.name())
            .set("checkpoint_every", t.checkpoint_every.to_string())
            .set("checkpoint_keep", t.checkpoint_keep.to_string())
            .set("checkpoint_size", t.checkpoint_size.to_string())
            .set("final_rule", t.final_rule.name())
            .set("source", source_name(t.source))
            .set("hist_samples", t.hist_samples.to_string())
            .set("hist_bins", t.hist_bins.to_string())
            .set("max_atoms", t.max_atoms.to_string())
            .set("discrete_search", self.discrete_search.to_string());
        ini.with_section(Some("output"))
            .set("out_dir", self.out_dir.to_string_lossy().into_owned());
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_ini_string()).unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = ExperimentConfig::parse("[channel]\nkind=poisson\npeak=3\navg=3\n").unwrap();
        assert_eq!(cfg.channel.kind, ChannelKind::Poisson);
        assert_eq!(cfg.channel.peak, Some(3.0));
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn empty_and_unknown_are_rejected() {
        assert!(ExperimentConfig::parse("").is_err());
        assert!(ExperimentConfig::parse("# nothing here\n").is_err());
        assert!(ExperimentConfig::parse("[channel]\nkidn=awgn\n").is_err());
        assert!(ExperimentConfig::parse("[chanel]\nkind=awgn\n").is_err());
        assert!(ExperimentConfig::parse("kind=awgn\n").is_err());
        assert!(ExperimentConfig::parse("[estimator]\nkind=mien\n").is_err());
        assert!(ExperimentConfig::parse("[train]\nsource=discrete:1\n").is_err());
    }
}
