//! Files inside a run directory.
//!
//! Trajectories are written as CSV with shortest round-trip float formatting,
//! so `eval` can rebuild the exact logs the run produced.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use cpnet_core::agent::PeriodRecord;
use cpnet_core::mac::{ScenarioSpec, Segment, SlotEntry, SlotOutcome, TrajectoryLog};
use cpnet_core::metrics::ReferenceSeries;
use cpnet_core::tcp::{RoundEntry, RoundFeedback};
use cpnet_core::NodeId;
use serde::Serialize;

use crate::error::CliError;

pub const CONFIG: &str = "config.json";
pub const SCENARIO: &str = "scenario.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const THROUGHPUT: &str = "throughput.csv";
pub const REFERENCE: &str = "reference.csv";
pub const PERIODS: &str = "periods.csv";
pub const METRICS: &str = "metrics.json";
pub const STRATEGIES: &str = "strategies.json";
pub const EPISODES: &str = "episodes.json";
pub const DEMOS: &str = "demos.json";
pub const OFFLINE: &str = "offline.json";
pub const TRACE: &str = "trace.json";
pub const TRACE_DOT: &str = "trace.dot";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const ORACLE: &str = "oracle.json";
pub const EVAL: &str = "eval.json";
pub const TREE_JSON: &str = "decision_tree.json";
pub const TREE_DOT: &str = "decision_tree.dot";

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::invalid(path, e)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write_text(path, &text)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish<W: Write>(path: &Path, mut w: csv::Writer<W>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn outcome_name(o: SlotOutcome) -> &'static str {
    match o {
        SlotOutcome::Success => "SUCCESS",
        SlotOutcome::Collided => "COLLIDED",
        SlotOutcome::Idle => "IDLE",
    }
}

fn parse_outcome(s: &str) -> Option<SlotOutcome> {
    match s {
        "SUCCESS" => Some(SlotOutcome::Success),
        "COLLIDED" => Some(SlotOutcome::Collided),
        "IDLE" => Some(SlotOutcome::Idle),
        _ => None,
    }
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

/// One row per slot: `slot,frame,position,segment,outcome,transmitters,winner`.
pub fn write_mac_trajectory(path: &Path, log: &TrajectoryLog) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let fl = log.frame_len as u64;
    w.write_record(["slot", "frame", "position", "segment", "outcome", "transmitters", "winner"])
        .map_err(|e| csv_err(path, e))?;
    for e in &log.slots {
        let winner = e.winner().map(|id| id.to_string()).unwrap_or_default();
        w.write_record([
            e.slot.to_string(),
            (e.slot / fl).to_string(),
            (e.slot % fl).to_string(),
            e.segment.to_string(),
            outcome_name(e.outcome).to_string(),
            join_ids(&e.transmitters),
            winner,
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Rebuilds the slot log of a run; segments come from the scenario.
pub fn read_mac_trajectory(path: &Path, spec: &ScenarioSpec) -> Result<TrajectoryLog, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut log = TrajectoryLog::new(spec.frame_len);
    log.segments = spec
        .segments()
        .into_iter()
        .map(|(start, _, live)| Segment { start_frame: start, start_slot: start * spec.frame_len as u64, live })
        .collect();
    let bad = |line: usize, what: &str| CliError::invalid(path, format!("row {line}: bad {what}"));
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let slot = rec[0].parse().map_err(|_| bad(i, "slot"))?;
        let segment: u32 = rec[3].parse().map_err(|_| bad(i, "segment"))?;
        if segment as usize >= log.segments.len() {
            return Err(bad(i, "segment"));
        }
        let outcome = parse_outcome(&rec[4]).ok_or_else(|| bad(i, "outcome"))?;
        let transmitters = if rec[5].is_empty() {
            Vec::new()
        } else {
            rec[5].split(';').map(str::parse).collect::<Result<Vec<NodeId>, _>>().map_err(|_| bad(i, "transmitters"))?
        };
        log.slots.push(SlotEntry { slot, outcome, transmitters, segment });
    }
    Ok(log)
}

/// One row per (round, flow): `round,queue,flow,cwnd,acks,drops,rtt,loss`.
pub fn write_tcp_trajectory(path: &Path, log: &[RoundEntry]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["round", "queue", "flow", "cwnd", "acks", "drops", "rtt", "loss"]).map_err(|e| csv_err(path, e))?;
    for e in log {
        for (id, fb) in &e.flows {
            w.write_record([
                e.round.to_string(),
                e.queue.to_string(),
                id.to_string(),
                fb.cwnd.to_string(),
                fb.acks.to_string(),
                fb.drops.to_string(),
                fb.rtt.to_string(),
                u8::from(fb.loss).to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn read_tcp_trajectory(path: &Path) -> Result<Vec<RoundEntry>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out: Vec<RoundEntry> = Vec::new();
    let bad = |line: usize| CliError::invalid(path, format!("row {line}: unparseable value"));
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(i));
        let round: u64 = rec[0].parse().map_err(|_| bad(i))?;
        let flow: NodeId = rec[2].parse().map_err(|_| bad(i))?;
        let fb = RoundFeedback { cwnd: num(3)?, acks: num(4)?, drops: num(5)?, rtt: num(6)?, loss: &rec[7] == "1" };
        match out.last_mut() {
            Some(e) if e.round == round => {
                e.flows.insert(flow, fb);
            }
            _ => out.push(RoundEntry { round, queue: num(1)?, flows: BTreeMap::from([(flow, fb)]) }),
        }
    }
    Ok(out)
}

/// `frame,node,throughput`, with an empty value where the node is absent.
pub fn write_reference(path: &Path, reference: &ReferenceSeries) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["frame", "node", "throughput"]).map_err(|e| csv_err(path, e))?;
    for f in 0..reference.n_frames() {
        for (n, node) in reference.nodes.iter().enumerate() {
            let v = reference.values[n][f].map(|x| x.to_string()).unwrap_or_default();
            w.write_record([f.to_string(), node.to_string(), v]).map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn read_reference(path: &Path) -> Result<ReferenceSeries, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut cols: BTreeMap<NodeId, Vec<Option<f64>>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = || CliError::invalid(path, format!("row {i}: unparseable value"));
        let frame: usize = rec[0].parse().map_err(|_| bad())?;
        let node: NodeId = rec[1].parse().map_err(|_| bad())?;
        let value = if rec[2].is_empty() { None } else { Some(rec[2].parse::<f64>().map_err(|_| bad())?) };
        let col = cols.entry(node).or_default();
        if col.len() != frame {
            return Err(CliError::invalid(path, format!("row {i}: frames of node {node} are not consecutive")));
        }
        col.push(value);
    }
    let nodes: Vec<NodeId> = cols.keys().copied().collect();
    Ok(ReferenceSeries { nodes, values: cols.into_values().collect() })
}

/// One row per agent and query period.
pub fn write_periods(path: &Path, periods: &[PeriodRecord]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "agent",
        "period",
        "start",
        "strategy",
        "action",
        "effects",
        "queried",
        "fallback",
        "env_changed",
        "converged",
        "findings",
    ])
    .map_err(|e| csv_err(path, e))?;
    for p in periods {
        let d = &p.decision;
        w.write_record([
            p.agent.to_string(),
            p.period.to_string(),
            p.start.to_string(),
            d.strategy_id.as_deref().map(|id| id.chars().take(12).collect()).unwrap_or_default(),
            d.action.render(),
            d.effects.join(" "),
            u8::from(d.queried).to_string(),
            u8::from(d.fallback).to_string(),
            u8::from(p.env_changed).to_string(),
            u8::from(p.converged).to_string(),
            p.findings.join("; "),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}
