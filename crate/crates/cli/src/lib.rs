// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Workflow catalog, experiment runner and the pieces behind the
//! `reconflow` command.

pub mod bench;
pub mod catalog;
pub mod experiment;
pub mod functions;
pub mod fuzz;
pub mod plan;
pub mod request;
pub mod scenarios;
