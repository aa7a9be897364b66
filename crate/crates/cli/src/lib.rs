//! Experiment runner: TOML run configuration, command orchestration and
//! deterministic CSV/JSON reports with a digest manifest.
//!
//! Boundary families are named in `problem.boundary` with their parameters
//! in `problem.params`:
//!
//! | tag | params |
//! |---|---|
//! | `constant` | `[value]` |
//! | `affine-xt` | `[c0, cx, ct]` |
//! | `sin-bump` | `[amplitude, offset, wavenumber]` |
//! | `separable-product` | `[amplitude, time_wavenumber, space_wavenumber]` |
//! | `polynomial` | `[c, i, j, c, i, j, ...]` for `Σ c x^i t^j` |

pub mod commands;
pub mod config;
pub mod emit;
pub mod manifest;

pub use commands::{execute, run, Command, RunSummary};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
