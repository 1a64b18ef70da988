//! Covert-channel workloads and their analysis.
//!
//! Each generated workload separates its bits with a `sync` barrier. The
//! receiver's measured op carries the label `rx<k>` for bit `k`, and its
//! latency is the label's completion cycle minus the cycle at which the
//! receiver passed barrier `k`.

use std::io::Write;

use thiserror::Error;

use crate::pipeline::{PipelineConfig, SimError, SimMetrics, Simulator};
use crate::policy::PolicyKind;
use crate::workload::{BranchMeta, OpKind, Workload};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("workload has no completion for label `{0}`")]
    MissingLabel(String),
    #[error("workload has no barrier for bit {0}")]
    MissingSync(usize),
    #[error("empty trial")]
    Empty,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub fn label(bit: usize) -> String {
    format!("rx{bit}")
}

/// Cross-thread channel: thread 0 transmits, thread 1 measures.
///
/// Thread 0, per bit: `sync`, a mispredicted branch whose wrong path is
/// `div_burst` divisions when the bit is 1 and as many nops when it is 0.
/// Thread 1, per bit: `sync`, an ALU op, then a division depending on it. The
/// ALU op delays the probe by two cycles so the transmitter reaches the
/// divider first.
pub fn gen_inter_sca(secret: &[bool], div_burst: u32, resolve_latency: u32) -> Workload {
    assert!(div_burst >= 1, "div_burst must be >= 1");
    let mut b = Workload::builder(format!("inter-sca-{}b-burst{div_burst}", secret.len()));
    for (k, &bit) in secret.iter().enumerate() {
        b.push(0, OpKind::Sync);
        b.push_with(0, OpKind::Branch, |i| {
            i.branch = Some(BranchMeta::mispredict(resolve_latency, div_burst))
        });
        for _ in 0..div_burst {
            b.push(0, if bit { OpKind::IntDiv } else { OpKind::Nop });
        }
        b.push(1, OpKind::Sync);
        let t = b.push(1, OpKind::IntAlu);
        b.push_with(1, OpKind::IntDiv, |i| {
            i.deps = vec![t];
            i.label = Some(label(k));
        });
    }
    b.build()
}

/// Same-thread channel: the probe is older than the transmitter.
///
/// Thread 0, per bit: `sync`, a load, a division depending on the load (the
/// probe), a mispredicted branch, and on its wrong path one division when the
/// bit is 1 or a nop when it is 0. Thread 1 only takes part in the barriers.
pub fn gen_intra_sca(secret: &[bool], resolve_latency: u32) -> Workload {
    let mut b = Workload::builder(format!("intra-sca-{}b", secret.len()));
    for (k, &bit) in secret.iter().enumerate() {
        b.push(0, OpKind::Sync);
        let ld = b.push(0, OpKind::Load);
        b.push_with(0, OpKind::IntDiv, |i| {
            i.deps = vec![ld];
            i.label = Some(label(k));
        });
        b.push_with(0, OpKind::Branch, |i| {
            i.branch = Some(BranchMeta::mispredict(resolve_latency, 1))
        });
        b.push(0, if bit { OpKind::IntDiv } else { OpKind::Nop });
        b.push(1, OpKind::Sync);
    }
    b.build()
}

/// A loop whose body is a correctly predicted branch guarding a division,
/// run by both threads. The next iteration's branch reads the quotient, so
/// iterations form a dependence chain through the divider.
pub fn gen_loop_div(iterations: u32, resolve_latency: u32) -> Workload {
    assert!(iterations >= 1, "iterations must be >= 1");
    let mut b = Workload::builder(format!("loop-div-{iterations}"));
    for tid in 0..2 {
        let mut prev_div: Option<u32> = None;
        for _ in 0..iterations {
            b.push_with(tid, OpKind::Branch, |i| {
                i.branch = Some(BranchMeta::correct(resolve_latency));
                i.deps = prev_div.into_iter().collect();
            });
            prev_div = Some(b.push(tid, OpKind::IntDiv));
        }
    }
    b.build()
}

/// Both threads issue `per_thread` independent divisions. With
/// `guard = Some(r)` each division sits behind a correctly predicted branch
/// resolving after `r` cycles, so it is issued speculatively.
pub fn gen_div_saturation(per_thread: u32, guard: Option<u32>) -> Workload {
    let name = match guard {
        Some(r) => format!("div-sat-{per_thread}-spec{r}"),
        None => format!("div-sat-{per_thread}"),
    };
    let mut b = Workload::builder(name);
    for tid in 0..2 {
        for _ in 0..per_thread {
            if let Some(r) = guard {
                b.push_with(tid, OpKind::Branch, |i| {
                    i.branch = Some(BranchMeta::correct(r))
                });
            }
            b.push(tid, OpKind::IntDiv);
        }
    }
    b.build()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrial {
    pub secret: Vec<bool>,
    pub per_bit_receiver_latency: Vec<u64>,
    pub policy: PolicyKind,
    pub metrics: SimMetrics,
}

/// Runs `w` and extracts the probe latency of every bit of `secret`.
pub fn run_channel(
    w: &Workload,
    secret: &[bool],
    cfg: &PipelineConfig,
) -> Result<ChannelTrial, AttackError> {
    let mut sim = Simulator::new(cfg.clone(), w.clone())?;
    let metrics = sim.run()?;
    extract_trial(w, secret, &cfg.policy, metrics)
}

/// Builds a trial from the metrics of a finished run of `w`.
pub fn extract_trial(
    w: &Workload,
    secret: &[bool],
    policy: &PolicyKind,
    metrics: SimMetrics,
) -> Result<ChannelTrial, AttackError> {
    let mut lat = Vec::with_capacity(secret.len());
    for k in 0..secret.len() {
        let name = label(k);
        let inst = w
            .find_label(&name)
            .ok_or_else(|| AttackError::MissingLabel(name.clone()))?;
        let done = *metrics
            .label_completion
            .get(&name)
            .ok_or_else(|| AttackError::MissingLabel(name.clone()))?;
        let start = *metrics.sync_cycles[inst.tid as usize]
            .get(k)
            .ok_or(AttackError::MissingSync(k))?;
        lat.push(done - start);
    }
    Ok(ChannelTrial {
        secret: secret.to_vec(),
        per_bit_receiver_latency: lat,
        policy: policy.clone(),
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    /// Decision boundary: a latency is read as `high_means_one` iff it exceeds this.
    pub threshold: f64,
    pub high_means_one: bool,
    /// Balanced error (mean of the two per-class error rates) at the best threshold.
    pub error_rate: f64,
    pub distributions_identical: bool,
    /// `min(latency | 1) - max(latency | 0)`; positive means perfectly separable.
    pub separation: Option<i64>,
}

/// Finds the single threshold that best decodes the secret from the latencies.
pub fn measure_error_rate(trial: &ChannelTrial) -> Result<ChannelReport, AttackError> {
    let n = trial.secret.len();
    if n == 0 || trial.per_bit_receiver_latency.len() != n {
        return Err(AttackError::Empty);
    }
    let mut ones: Vec<u64> = Vec::new();
    let mut zeros: Vec<u64> = Vec::new();
    for (&bit, &l) in trial.secret.iter().zip(&trial.per_bit_receiver_latency) {
        if bit {
            ones.push(l)
        } else {
            zeros.push(l)
        }
    }
    ones.sort_unstable();
    zeros.sort_unstable();
    let identical = same_distribution(&ones, &zeros);
    let separation = match (ones.first(), zeros.last()) {
        (Some(&lo1), Some(&hi0)) => Some(lo1 as i64 - hi0 as i64),
        _ => None,
    };

    let mut cuts: Vec<f64> = Vec::new();
    let mut all: Vec<u64> = ones.iter().chain(&zeros).copied().collect();
    all.sort_unstable();
    all.dedup();
    cuts.push(all[0] as f64 - 0.5);
    for w in all.windows(2) {
        cuts.push((w[0] + w[1]) as f64 / 2.0);
    }

    let rate = |class: &[u64], th: f64, above: bool| -> f64 {
        let hits = class.iter().filter(|&&l| (l as f64 > th) == above).count();
        1.0 - hits as f64 / class.len() as f64
    };
    let mut best = ChannelReport {
        threshold: cuts[0],
        high_means_one: true,
        error_rate: f64::INFINITY,
        distributions_identical: identical,
        separation,
    };
    if ones.is_empty() || zeros.is_empty() {
        // A one-class secret carries no decodable information.
        best.error_rate = 0.5;
        return Ok(best);
    }
    for &th in &cuts {
        for high_means_one in [true, false] {
            let e1 = rate(&ones, th, high_means_one);
            let e0 = rate(&zeros, th, !high_means_one);
            let err = (e1 + e0) / 2.0;
            if err < best.error_rate {
                best.error_rate = err;
                best.threshold = th;
                best.high_means_one = high_means_one;
            }
        }
    }
    Ok(best)
}

/// Equal value frequencies in both sorted samples: `c1(v) / n1 == c0(v) / n0` for every `v`.
fn same_distribution(a: &[u64], b: &[u64]) -> bool {
    if a.is_empty() || b.is_empty() {
        return a.is_empty() && b.is_empty();
    }
    let hist = |xs: &[u64]| {
        let mut h = std::collections::BTreeMap::new();
        for &x in xs {
            *h.entry(x).or_insert(0u64) += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    ha.keys().eq(hb.keys())
        && ha
            .iter()
            .all(|(v, &ca)| ca * b.len() as u64 == hb[v] * a.len() as u64)
}

/// Writes `bit,value,latency` rows for one trial.
pub fn write_trial_csv<W: Write>(trial: &ChannelTrial, out: W) -> Result<(), AttackError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["bit", "value", "latency"])?;
    for (k, (&bit, &lat)) in trial
        .secret
        .iter()
        .zip(&trial.per_bit_receiver_latency)
        .enumerate()
    {
        w.write_record([k.to_string(), (bit as u8).to_string(), lat.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
