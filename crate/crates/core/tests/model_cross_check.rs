//! The cycle simulator's per-bit delay outcomes fall inside the bounded
//! model's outcome set for the same secret bit.

use specwands::attack::{gen_inter_sca, run_channel};
use specwands::cli::secret_bits;
use specwands::pipeline::PipelineConfig;
use specwands::policy::PolicyKind;
use specwands::ssc::SpecMode;
use specwands::verify::{enumerate, Bounds, ModelConfig, PortModel, ReceiverOps};

/// Booleanized delay: slower than the probe with a silent sender.
fn delays(policy: PolicyKind, secret: &[bool]) -> Vec<bool> {
    let cfg = PipelineConfig::with_policy(policy);
    let quiet = vec![false; secret.len()];
    let base = run_channel(&gen_inter_sca(&quiet, 4, 20), &quiet, &cfg).unwrap();
    let run = run_channel(&gen_inter_sca(secret, 4, 20), secret, &cfg).unwrap();
    run.per_bit_receiver_latency
        .iter()
        .zip(&base.per_bit_receiver_latency)
        .map(|(a, b)| a > b)
        .collect()
}

fn check(policy: PolicyKind, model: PortModel) {
    let cfg = ModelConfig {
        receiver: ReceiverOps::NonSpeculative,
        ..ModelConfig::new(model)
    };
    let outcomes = [false, true].map(|bit| enumerate(&cfg, bit, Bounds::new(1, 1)).unwrap());
    let secret = secret_bits(5, 64);
    for (bit, d) in secret.iter().zip(delays(policy.clone(), &secret)) {
        assert!(
            outcomes[*bit as usize].contains(&vec![d]),
            "{policy}: bit {bit} delay {d} not in model outcomes"
        );
    }
}

#[test]
fn specwands_outcomes_are_modelled() {
    check(
        PolicyKind::SpecWands {
            mode: SpecMode::Spectre,
        },
        PortModel::SpecWands,
    );
    check(
        PolicyKind::SpecWands {
            mode: SpecMode::All,
        },
        PortModel::SpecWands,
    );
}

#[test]
fn fcfs_outcomes_are_modelled() {
    check(PolicyKind::Fcfs, PortModel::Fcfs);
}
