use std::path::PathBuf;

use capbench::config::{ChannelConfig, ExperimentConfig};
use capbench_core::channels::ChannelKind;
use capbench_core::estimators::{Chi2Form, EstimatorConfig, EstimatorKind};
use capbench_core::ndt::SourceKind;
use capbench_core::numerics::Activation;
use capbench_core::trainer::{FinalRule, TrainConfig};
use proptest::prelude::*;

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, 1e-12f64..1e-3, Just(0.0)]
}

fn channel() -> impl Strategy<Value = ChannelConfig> {
    let kinds = [
        ChannelKind::Awgn,
        ChannelKind::Oi,
        ChannelKind::PpcAwgn,
        ChannelKind::Poisson,
        ChannelKind::AwgnMac,
        ChannelKind::OiMac,
    ];
    (
        prop::sample::select(kinds.to_vec()),
        prop::collection::vec(real(), 0..4),
        prop::option::of(real()),
        prop::option::of(real()),
        (real(), real(), real()),
    )
        .prop_map(|(kind, snr_db, peak, avg, (dark_current, sigma, mean_ratio))| ChannelConfig {
            kind,
            snr_db,
            peak,
            avg,
            dark_current,
            sigma,
            mean_ratio,
        })
}

fn estimator() -> impl Strategy<Value = EstimatorConfig> {
    (
        prop::sample::select(EstimatorKind::ALL.to_vec()),
        real(),
        real(),
        real(),
        any::<bool>(),
    )
        .prop_map(|(kind, tau, alpha, ema_rate, paper)| EstimatorConfig {
            kind,
            tau,
            alpha,
            ema_rate,
            chi2_form: if paper { Chi2Form::Paper } else { Chi2Form::Standard },
        })
}

fn train() -> impl Strategy<Value = TrainConfig> {
    let acts = [
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softplus,
        Activation::Identity,
    ];
    (
        (0usize..100_000, 0usize..100_000, 0usize..1000, real(), 0usize..1_000_000, 0usize..100, any::<u64>()),
        (real(), real(), prop::collection::vec(1usize..512, 0..4), prop::collection::vec(1usize..512, 0..4)),
        (prop::sample::select(acts.to_vec()), 1usize..1000, 1usize..10, 2usize..100_000, any::<bool>()),
        (prop::option::of(2usize..50), 1usize..100_000, 1usize..500, 2usize..64),
    )
        .prop_map(
            |(
                (batch, max_iters, plateau_window, plateau_tol, eval_size, trials, seed_base),
                (critic_lr, ndt_lr, critic_hidden, ndt_hidden),
                (hidden_activation, checkpoint_every, checkpoint_keep, checkpoint_size, last),
                (atoms, hist_samples, hist_bins, max_atoms),
            )| TrainConfig {
                batch,
                max_iters,
                plateau_window,
                plateau_tol,
                eval_size,
                trials,
                seed_base,
                critic_lr,
                ndt_lr,
                critic_hidden,
                ndt_hidden,
                hidden_activation,
                checkpoint_every,
                checkpoint_keep,
                checkpoint_size,
                final_rule: if last { FinalRule::Last } else { FinalRule::MaxTrailing },
                source: atoms.map_or(SourceKind::GaussianStd, |m| SourceKind::DiscreteUniform { m }),
                hist_samples,
                hist_bins,
                max_atoms,
            },
        )
}

proptest! {
    #[test]
    fn config_round_trips(
        channel in channel(),
        estimator in estimator(),
        train in train(),
        discrete_search in any::<bool>(),
        dir in "[a-z][a-z0-9_/]{0,20}",
    ) {
        let cfg = ExperimentConfig { channel, estimator, train, discrete_search, out_dir: PathBuf::from(dir) };
        let text = cfg.to_ini_string();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
