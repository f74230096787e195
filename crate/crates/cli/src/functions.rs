// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Built-in operator functions and state transforms, addressed by name.
//!
//! A function name is `kind` or `kind:arg`, for example `inference:20` or
//! `versioned:3`, optionally followed by `/label` to tell two otherwise
//! identical configurations apart. The config id is `{operator}@{name}`.

use anyhow::{anyhow, bail, Context, Result};
use reconflow_core::engine::{ApplyContext, FunctionUpdate, OperatorFunction, Record, State};
use reconflow_core::OperatorId;
use serde_json::{json, Value};

/// Simulated cost of one queued value in `inference`.
pub const INFERENCE_UNIT_US: u64 = 2_500;

pub const FUNCTION_KINDS: &[&str] =
    &["passthrough", "inference", "versioned", "version_source", "unnest", "replicate", "self_join"];

pub const TRANSFORMS: &[&str] = &["identity", "reset"];

fn split(name: &str) -> (&str, Option<&str>) {
    let name = name.split_once('/').map_or(name, |(n, _)| n);
    match name.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (name, None),
    }
}

fn arg<T: std::str::FromStr>(name: &str, a: Option<&str>, default: T) -> Result<T> {
    match a {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| anyhow!("bad argument `{s}` in function `{name}`")),
    }
}

/// Builds the named function for `op`.
pub fn build(op: &OperatorId, name: &str) -> Result<OperatorFunction> {
    let config = format!("{op}@{name}");
    let (kind, a) = split(name);
    let f = match kind {
        "passthrough" => OperatorFunction::passthrough(config),
        "inference" => {
            let q: usize = arg(name, a, 10)?;
            inference(&config, q)
        }
        "versioned" => {
            let v: u64 = arg(name, a, 0)?;
            versioned(&config, v)
        }
        "version_source" => {
            let period: u64 = arg(name, a, 10_000_000)?;
            version_source(&config, period)
        }
        "unnest" => {
            let k: u64 = arg(name, a, 2)?;
            unnest(&config, k)
        }
        "replicate" => replicate(&config),
        "self_join" => {
            let n: u64 = arg(name, a, 2)?;
            self_join(&config, n)
        }
        other => bail!("unknown function `{other}` (known: {})", FUNCTION_KINDS.join(", ")),
    };
    Ok(f)
}

/// Initial state for a function built by [`build`].
pub fn initial_state(name: &str) -> State {
    match split(name).0 {
        "inference" | "self_join" => json!({}),
        _ => State::Null,
    }
}

/// Function update with the named state transform.
pub fn update(op: &OperatorId, new_function: &str, transform: &str) -> Result<FunctionUpdate> {
    let f = build(op, new_function).with_context(|| format!("update of `{op}`"))?;
    let u = FunctionUpdate::new(f);
    Ok(match transform {
        "identity" => u,
        "reset" => {
            let init = initial_state(new_function);
            u.with_transform(move |_| Ok(init.clone()))
        }
        other => bail!("unknown state transform `{other}` (known: {})", TRANSFORMS.join(", ")),
    })
}

fn route(input: Record, ctx: &mut ApplyContext<'_>) {
    match ctx.downstream.len() {
        0 | 1 => ctx.forward(input),
        n => {
            let key = input.get("key").and_then(Value::as_u64).unwrap_or(ctx.txn_id);
            let target = ctx.downstream[(key % n as u64) as usize].clone();
            ctx.emit(input, &target);
        }
    }
}

/// Keeps the last `q` amounts per key and scores the new one against their
/// mean. Cost grows with `q`.
fn inference(config: &str, q: usize) -> OperatorFunction {
    OperatorFunction::new(config, move |state: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        let key = input.get("key").and_then(Value::as_u64).unwrap_or(0);
        let amount = (key * 7919 + input.get("seq").and_then(Value::as_u64).unwrap_or(0)) % 1000;
        let map = state.as_object_mut().expect("inference state is an object");
        let hist = map.entry(key.to_string()).or_insert_with(|| json!([]));
        let arr = hist.as_array_mut().expect("history is an array");
        let mean = if arr.is_empty() {
            amount as f64
        } else {
            arr.iter().filter_map(Value::as_f64).sum::<f64>() / arr.len() as f64
        };
        arr.push(json!(amount));
        if arr.len() > q {
            arr.remove(0);
        }
        let mut out = input.clone();
        out.insert("score".into(), json!(((amount as f64 - mean).abs() / 1000.0 * 100.0).round() / 100.0));
        route(out, ctx);
    })
    .with_cost_us(q as u64 * INFERENCE_UNIT_US)
}

/// Marks each tuple valid when its `v1` matches this function's version.
fn versioned(config: &str, version: u64) -> OperatorFunction {
    OperatorFunction::new(config, move |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        let v1 = input.get("v1").and_then(Value::as_u64).unwrap_or(0);
        let mut out = input.clone();
        out.insert("valid".into(), json!(v1 == version));
        route(out, ctx);
    })
}

/// Stamps each source tuple with `v1 = source time / period`.
fn version_source(config: &str, period_us: u64) -> OperatorFunction {
    OperatorFunction::new(config, move |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        let mut out = input.clone();
        out.insert("v1".into(), json!(ctx.source_ts_us / period_us.max(1)));
        route(out, ctx);
    })
}

/// Splits each input into `k` parts sent to every downstream operator.
fn unnest(config: &str, k: u64) -> OperatorFunction {
    OperatorFunction::new(config, move |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        for part in 0..k {
            let mut out = input.clone();
            out.insert("part".into(), json!(part));
            if ctx.downstream.is_empty() {
                ctx.forward(out);
            } else {
                ctx.emit_all(out);
            }
        }
    })
}

/// One copy of each input on every output edge.
fn replicate(config: &str) -> OperatorFunction {
    OperatorFunction::new(config, |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        if ctx.downstream.is_empty() {
            ctx.forward(input.clone());
        } else {
            ctx.emit_all(input.clone());
        }
    })
}

/// Emits one tuple per transaction once `n` copies have arrived.
fn self_join(config: &str, n: u64) -> OperatorFunction {
    OperatorFunction::new(config, move |state: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        let map = state.as_object_mut().expect("self-join state is an object");
        let k = ctx.txn_id.to_string();
        let seen = map.get(&k).and_then(Value::as_u64).unwrap_or(0) + 1;
        if seen < n {
            map.insert(k, json!(seen));
            return;
        }
        map.remove(&k);
        route(input.clone(), ctx);
    })
}
