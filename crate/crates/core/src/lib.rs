// SPDX-License-Identifier: Apache-2.0

pub mod difftest;
pub mod dutsim;
pub mod engine;
pub mod experiment;
pub mod fuzzmem;
pub mod isa;
pub mod policy;
pub mod refmodel;
pub mod scoring;
