// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::sync::Arc;

use crate::graph::OperatorId;

/// Operator state. Kept as JSON so snapshots and transforms stay generic.
pub type State = serde_json::Value;

/// Tuple payload: named values.
pub type Record = serde_json::Map<String, serde_json::Value>;

/// Per-call view handed to an operator function.
pub struct ApplyContext<'a> {
    pub now_us: u64,
    pub txn_id: u64,
    pub version_tag: u32,
    pub source_ts_us: u64,
    /// Logical downstream operators, in edge order.
    pub downstream: &'a [OperatorId],
    outputs: Vec<(Record, OperatorId)>,
    cost_us: Option<u64>,
}

impl<'a> ApplyContext<'a> {
    pub(crate) fn new(now_us: u64, txn_id: u64, version_tag: u32, source_ts_us: u64, downstream: &'a [OperatorId]) -> Self {
        ApplyContext { now_us, txn_id, version_tag, source_ts_us, downstream, outputs: Vec::new(), cost_us: None }
    }

    pub fn emit(&mut self, record: Record, target: &OperatorId) {
        self.outputs.push((record, target.clone()));
    }

    /// Sends a copy of `record` to every downstream operator.
    pub fn emit_all(&mut self, record: Record) {
        for t in self.downstream {
            self.outputs.push((record.clone(), t.clone()));
        }
    }

    /// Sends `record` to the first downstream operator. No-op at sinks,
    /// where it records the output instead.
    pub fn forward(&mut self, record: Record) {
        match self.downstream.first() {
            Some(t) => self.outputs.push((record, t.clone())),
            None => self.outputs.push((record, OperatorId::new(""))),
        }
    }

    /// Overrides the simulated processing cost of this call.
    pub fn set_cost_us(&mut self, cost: u64) {
        self.cost_us = Some(cost);
    }

    pub(crate) fn finish(self) -> (Vec<(Record, OperatorId)>, Option<u64>) {
        (self.outputs, self.cost_us)
    }
}

/// User logic of an operator: `(state, tuple) -> (state', outputs)`.
pub trait OperatorLogic: Send + Sync {
    fn apply(&self, state: &mut State, input: &Record, ctx: &mut ApplyContext<'_>);
}

impl<F> OperatorLogic for F
where
    F: Fn(&mut State, &Record, &mut ApplyContext<'_>) + Send + Sync,
{
    fn apply(&self, state: &mut State, input: &Record, ctx: &mut ApplyContext<'_>) {
        self(state, input, ctx)
    }
}

/// A named operator function. The config id is what snapshots and audits
/// record.
#[derive(Clone)]
pub struct OperatorFunction {
    config_id: Arc<str>,
    logic: Arc<dyn OperatorLogic>,
    cost_us: Option<u64>,
}

impl OperatorFunction {
    pub fn new(config_id: impl AsRef<str>, logic: impl OperatorLogic + 'static) -> Self {
        OperatorFunction { config_id: Arc::from(config_id.as_ref()), logic: Arc::new(logic), cost_us: None }
    }

    /// Forwards every input unchanged to one downstream operator, picked by
    /// the record's `key` so the function stays one-to-one. At a sink this
    /// records the input as output.
    pub fn passthrough(config_id: impl AsRef<str>) -> Self {
        OperatorFunction::new(config_id, |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
            match ctx.downstream.len() {
                0 | 1 => ctx.forward(input.clone()),
                n => {
                    let key = input.get("key").and_then(|k| k.as_u64()).unwrap_or(ctx.txn_id);
                    let target = ctx.downstream[(key % n as u64) as usize].clone();
                    ctx.emit(input.clone(), &target);
                }
            }
        })
    }

    /// Per-tuple cost that overrides the operator's declared cost.
    pub fn with_cost_us(mut self, cost: u64) -> Self {
        self.cost_us = Some(cost);
        self
    }

    pub fn config_id(&self) -> &str {
        &self.config_id
    }

    pub fn cost_us(&self) -> Option<u64> {
        self.cost_us
    }

    pub(crate) fn apply(&self, state: &mut State, input: &Record, ctx: &mut ApplyContext<'_>) {
        self.logic.apply(state, input, ctx)
    }
}

impl fmt::Debug for OperatorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorFunction").field("config_id", &self.config_id).field("cost_us", &self.cost_us).finish()
    }
}

type TransformFn = dyn Fn(&State) -> Result<State, String> + Send + Sync;
type ValidatorFn = dyn Fn(&State) -> bool + Send + Sync;

/// Replacement function plus the transformation of the old state.
#[derive(Clone)]
pub struct FunctionUpdate {
    pub new_function: OperatorFunction,
    transform: Arc<TransformFn>,
    validator: Option<Arc<ValidatorFn>>,
}

impl FunctionUpdate {
    /// Update that keeps the state as is.
    pub fn new(new_function: OperatorFunction) -> Self {
        FunctionUpdate { new_function, transform: Arc::new(|s: &State| Ok(s.clone())), validator: None }
    }

    pub fn with_transform(
        mut self,
        transform: impl Fn(&State) -> Result<State, String> + Send + Sync + 'static,
    ) -> Self {
        self.transform = Arc::new(transform);
        self
    }

    /// Check run on the transformed state before it is installed.
    pub fn with_validator(mut self, validator: impl Fn(&State) -> bool + Send + Sync + 'static) -> Self {
        self.validator = Some(Arc::new(validator));
        self
    }

    pub(crate) fn transform(&self, old: &State) -> Result<State, String> {
        let new = (self.transform)(old)?;
        if let Some(v) = &self.validator {
            if !v(&new) {
                return Err(format!("transformed state rejected by validator for `{}`", self.new_function.config_id()));
            }
        }
        Ok(new)
    }
}

impl fmt::Debug for FunctionUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionUpdate").field("new_function", &self.new_function).finish_non_exhaustive()
    }
}

/// Initial function and state of one logical operator; every worker starts
/// from a copy.
#[derive(Debug, Clone)]
pub struct OperatorSetup {
    pub function: OperatorFunction,
    pub state: State,
}

impl OperatorSetup {
    pub fn new(function: OperatorFunction, state: State) -> Self {
        OperatorSetup { function, state }
    }

    pub fn stateless(function: OperatorFunction) -> Self {
        OperatorSetup { function, state: State::Null }
    }
}
