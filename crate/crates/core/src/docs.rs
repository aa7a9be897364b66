//! Coverage lint for the math-to-code table in `docs/math_to_code.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operations that implement a mathematical object and must appear in the
/// table, as `(module, function)`.
pub const PAPER_LINKED_OPERATIONS: &[(&str, &str)] = &[
    ("model", "power_map"),
    ("model", "half_power_map"),
    ("model", "monotonicity_gap"),
    ("model", "check_vector_inequalities"),
    ("model", "chain_rule_identity_residual"),
    ("discretization", "build_time_grid"),
    ("discretization", "average_boundary"),
    ("discretization", "backward_difference"),
    ("stepper", "functional_value"),
    ("stepper", "functional_gradient"),
    ("stepper", "solve_step"),
    ("stepper", "step_residual"),
    ("solver", "solve"),
    ("solver", "refine_study"),
    ("estimates", "energy_lhs"),
    ("estimates", "boundary_majorant"),
    ("estimates", "check_galerkin_estimate"),
    ("estimates", "gronwall_trace"),
    ("estimates", "check_average_contraction"),
    ("verification", "max_principle_check"),
    ("verification", "comparison_check"),
    ("verification", "gamma_squeeze"),
    ("verification", "weak_form_residual"),
];

pub const TABLE_PATH: &str = "docs/math_to_code.md";
pub const SOURCE_DIR: &str = "crates/core/src";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocLintReport {
    /// Linked operations with no table row.
    pub missing_rows: Vec<String>,
    /// Table rows naming a function that no longer exists in its module.
    pub stale_rows: Vec<String>,
    /// Linked operations whose function is gone from the source.
    pub missing_sources: Vec<String>,
}

impl DocLintReport {
    pub fn is_clean(&self) -> bool {
        self.missing_rows.is_empty() && self.stale_rows.is_empty() && self.missing_sources.is_empty()
    }
}

/// `module::function` references in backticks on table rows.
pub fn table_entries(table: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for line in table.lines().filter(|l| l.trim_start().starts_with('|')) {
        for (i, chunk) in line.split('`').enumerate() {
            if i % 2 == 1 && chunk.contains("::") {
                let path = chunk.trim_end_matches("()").trim();
                if path.split("::").all(|s| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')) {
                    out.insert(path.to_string());
                }
            }
        }
    }
    out
}

/// Names declared with `pub fn` in a source text.
pub fn public_functions(source: &str) -> BTreeSet<String> {
    source
        .lines()
        .filter_map(|l| {
            let rest = l.trim_start().strip_prefix("pub fn ")?;
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            (!name.is_empty()).then_some(name)
        })
        .collect()
}

/// Lint over in-memory table text and per-module source text.
pub fn lint(table: &str, sources: &BTreeMap<String, String>) -> DocLintReport {
    let rows = table_entries(table);
    let fns: BTreeMap<&str, BTreeSet<String>> = sources
        .iter()
        .map(|(m, s)| (m.as_str(), public_functions(s)))
        .collect();
    let exists = |path: &str| -> bool {
        let mut parts = path.rsplitn(2, "::");
        let name = parts.next().unwrap_or_default();
        let module = parts.next().unwrap_or_default();
        let module = module.rsplit("::").next().unwrap_or(module);
        fns.get(module).is_some_and(|set| set.contains(name))
    };
    let mut report = DocLintReport::default();
    for (m, f) in PAPER_LINKED_OPERATIONS {
        let path = format!("{m}::{f}");
        if !rows.contains(&path) {
            report.missing_rows.push(path.clone());
        }
        if !exists(&path) {
            report.missing_sources.push(path);
        }
    }
    for row in &rows {
        if !exists(row) {
            report.stale_rows.push(row.clone());
        }
    }
    report
}

/// Reads each module's sources (a `name.rs` file or every `.rs` file under
/// `name/`) from `dir`.
pub fn read_sources(dir: &Path) -> Result<BTreeMap<String, String>> {
    let io = |e: std::io::Error, p: &Path| Error::invalid_data(format!("{}: {e}", p.display()));
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| io(e, dir))? {
        let path = entry.map_err(|e| io(e, dir))?.path();
        if path.is_dir() {
            let module = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let mut files: Vec<_> = fs::read_dir(&path)
                .map_err(|e| io(e, &path))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "rs"))
                .collect();
            files.sort();
            for f in files {
                let text = fs::read_to_string(&f).map_err(|e| io(e, &f))?;
                out.entry(module.clone()).or_default().push_str(&text);
            }
        } else if path.extension().is_some_and(|x| x == "rs") {
            let module = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let text = fs::read_to_string(&path).map_err(|e| io(e, &path))?;
            out.entry(module).or_default().push_str(&text);
        }
    }
    Ok(out)
}

/// Lints `docs/math_to_code.md` against `crates/core/src` under `root`.
pub fn doc_coverage_lint(root: &Path) -> Result<DocLintReport> {
    let table_path = root.join(TABLE_PATH);
    let table = fs::read_to_string(&table_path)
        .map_err(|e| Error::invalid_data(format!("{}: {e}", table_path.display())))?;
    Ok(lint(&table, &read_sources(&root.join(SOURCE_DIR))?))
}
