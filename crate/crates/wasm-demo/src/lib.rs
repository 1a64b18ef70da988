//! Browser bindings. Every entry point returns a JSON string; failures come
//! back as `{"error": "..."}` so the page never has to catch exceptions.

use serde_json::{json, Value};
use specwands::attack::{gen_inter_sca, measure_error_rate, run_channel};
use specwands::cli::secret_bits;
use specwands::pipeline::{parse_policy, PipelineConfig, Simulator};
use specwands::ssc::SpecMode;
use specwands::timelines;
use specwands::verify::{
    check_invariants, check_sni, format_trace, Bounds, ModelConfig, PortModel, Property,
};
use wasm_bindgen::prelude::wasm_bindgen;

const MAX_BITS: u32 = 256;
const MAX_BOUND: u8 = 4;

fn policy_config(policy: &str) -> Result<PipelineConfig, String> {
    let p = parse_policy(policy, SpecMode::Spectre, None, None).map_err(|e| e.to_string())?;
    Ok(PipelineConfig::with_policy(p))
}

fn finish(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Names and one-line summaries of the contention scenarios.
#[wasm_bindgen]
pub fn scenarios() -> String {
    let list: Vec<Value> = timelines::all()
        .iter()
        .map(|s| json!({ "name": s.name, "summary": s.summary }))
        .collect();
    Value::Array(list).to_string()
}

fn timeline_value(scenario: &str, policy: &str) -> Result<Value, String> {
    let sc = timelines::find(scenario).ok_or_else(|| format!("unknown scenario `{scenario}`"))?;
    let mut cfg = policy_config(policy)?;
    cfg.record_events = true;
    cfg.initial_owner = sc.initial_owner;
    let mut sim = Simulator::new(cfg, sc.workload.clone()).map_err(|e| e.to_string())?;
    let m = sim.run().map_err(|e| e.to_string())?;
    let events: Vec<Value> = sim
        .events()
        .iter()
        .map(|e| {
            json!({
                "cycle": e.cycle,
                "tid": e.tid,
                "seq": e.seq,
                "kind": e.kind.name(),
                "port": e.port,
            })
        })
        .collect();
    let ops: Vec<Value> = sc
        .workload
        .threads
        .iter()
        .enumerate()
        .flat_map(|(tid, ops)| {
            ops.iter()
                .enumerate()
                .map(move |(seq, i)| json!({ "tid": tid, "seq": seq, "op": i.op.long_name() }))
        })
        .collect();
    Ok(json!({
        "scenario": sc.name,
        "summary": sc.summary,
        "policy": policy,
        "x": [sc.x.0, sc.x.1],
        "y": [sc.y.0, sc.y.1],
        "cycles": m.cycles,
        "ops": ops,
        "events": events,
    }))
}

/// Runs one contention scenario under `policy` and returns its event log.
#[wasm_bindgen]
pub fn timeline(scenario: &str, policy: &str) -> String {
    finish(timeline_value(scenario, policy))
}

fn channel_value(policy: &str, bits: u32, seed: u64) -> Result<Value, String> {
    if bits == 0 || bits > MAX_BITS {
        return Err(format!("bits must be in 1..={MAX_BITS}"));
    }
    let cfg = policy_config(policy)?;
    let secret = secret_bits(seed, bits as usize);
    let w = gen_inter_sca(&secret, 4, 10);
    let trial = run_channel(&w, &secret, &cfg).map_err(|e| e.to_string())?;
    let r = measure_error_rate(&trial).map_err(|e| e.to_string())?;
    Ok(json!({
        "policy": policy,
        "secret": secret,
        "latency": trial.per_bit_receiver_latency,
        "error_rate": r.error_rate,
        "separation": r.separation,
        "identical": r.distributions_identical,
        "threshold": r.threshold,
    }))
}

/// Runs the cross-thread port-contention channel for a random secret.
#[wasm_bindgen]
pub fn channel(policy: &str, bits: u32, seed: u64) -> String {
    finish(channel_value(policy, bits, seed))
}

fn verify_value(sender: u8, receiver: u8, model: &str) -> Result<Value, String> {
    if sender > MAX_BOUND || receiver > MAX_BOUND {
        return Err(format!("bounds must be at most {MAX_BOUND}"));
    }
    let model = match model {
        "specwands" => PortModel::SpecWands,
        "fcfs" => PortModel::Fcfs,
        other => return Err(format!("model must be specwands|fcfs, found `{other}`")),
    };
    let cfg = ModelConfig::new(model);
    let bounds = Bounds::new(sender, receiver);
    let inv = check_invariants(&cfg, bounds).map_err(|e| e.to_string())?;
    let sni = check_sni(&cfg, bounds).map_err(|e| e.to_string())?;
    let props: Vec<Value> = Property::ALL
        .iter()
        .map(|&p| {
            let witness = inv
                .violations
                .iter()
                .find(|v| v.property == p)
                .map(|v| v.witness.clone());
            json!({
                "property": format!("{p:?}"),
                "describe": p.describe(),
                "holds": inv.holds(p),
                "witness": witness,
            })
        })
        .collect();
    let traces =
        |k: usize| -> Vec<String> { sni.traces[k].iter().map(|t| format_trace(t)).collect() };
    Ok(json!({
        "model": model.name(),
        "bounds": bounds.to_string(),
        "states": inv.states,
        "properties": props,
        "sni": sni.holds,
        "witness": sni.witness.as_ref().map(|(s, t)| json!({ "secret": s, "trace": format_trace(t) })),
        "traces": [traces(0), traces(1)],
    }))
}

/// Model-checks the two-thread port model up to the given loop bounds.
#[wasm_bindgen]
pub fn verify(sender: u8, receiver: u8, model: &str) -> String {
    finish(verify_value(sender, receiver, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn scenario_list_matches_library() {
        let v = parse(&scenarios());
        assert_eq!(v.as_array().unwrap().len(), timelines::all().len());
    }

    #[test]
    fn timeline_reports_preemption_under_specwands_only() {
        let sw = parse(&timeline("nop-preempt", "specwands-spectre"));
        let fc = parse(&timeline("nop-preempt", "fcfs"));
        let has = |v: &Value| {
            v["events"]
                .as_array()
                .unwrap()
                .iter()
                .any(|e| e["kind"] == "preempt")
        };
        assert!(has(&sw));
        assert!(!has(&fc));
        assert!(sw["cycles"].as_u64().unwrap() > 0);
    }

    #[test]
    fn channel_leaks_under_fcfs_and_not_under_specwands() {
        let fc = parse(&channel("fcfs", 32, 7));
        assert_eq!(fc["error_rate"].as_f64().unwrap(), 0.0);
        let sw = parse(&channel("specwands-all", 32, 7));
        assert_eq!(sw["identical"], true);
        assert_eq!(sw["secret"].as_array().unwrap().len(), 32);
    }

    #[test]
    fn verify_distinguishes_models() {
        let sw = parse(&verify(1, 1, "specwands"));
        assert_eq!(sw["sni"], true);
        assert_eq!(
            sw["properties"].as_array().unwrap().len(),
            Property::ALL.len()
        );
        let fc = parse(&verify(1, 1, "fcfs"));
        assert_eq!(fc["sni"], false);
        assert!(fc["witness"]["trace"].is_string());
    }

    #[test]
    fn bad_input_is_reported_as_json() {
        assert!(parse(&timeline("nope", "fcfs"))["error"].is_string());
        assert!(parse(&channel("bogus", 8, 0))["error"].is_string());
        assert!(parse(&channel("fcfs", 0, 0))["error"].is_string());
        assert!(parse(&verify(9, 1, "specwands"))["error"].is_string());
        assert!(parse(&verify(1, 1, "tdm"))["error"].is_string());
    }
}
