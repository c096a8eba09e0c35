//! Configuration, orchestration and artifact writers behind the `pxflow` binary.

pub mod commands;
pub mod config;
pub mod svg;
