//! Report commands. Every command renders its full output up front (table
//! text, JSON document, SVG charts) and only then touches the filesystem, so
//! a failing input never leaves a partial report behind.

mod breakeven;
mod footprint;
mod pareto;
mod recommend;
mod sensitivity;
mod simulate;

pub use breakeven::{cmd_breakeven, Against};
pub use footprint::cmd_footprint;
pub use pareto::cmd_pareto;
pub use recommend::cmd_recommend;
pub use sensitivity::cmd_sensitivity;
pub use simulate::cmd_simulate;

use std::path::{Path, PathBuf};

use crate::CliError;

/// Fully rendered outputs of one command.
#[derive(Debug)]
pub struct Report {
    /// Human-readable table, printed to stdout.
    pub table: String,
    /// File stem for the JSON/SVG artifacts, e.g. "footprint".
    pub stem: String,
    /// Pretty-printed JSON document.
    pub json: String,
    /// Chart files as (file name, content).
    pub svgs: Vec<(String, String)>,
    /// Extra artifacts written regardless of format (e.g. simulated
    /// records.csv), as (file name, content).
    pub extra_files: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Json,
    Svg,
    All,
}

impl OutputFormat {
    fn wants_table(self) -> bool {
        matches!(self, OutputFormat::Table | OutputFormat::All)
    }
    fn wants_json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::All)
    }
    fn wants_svg(self) -> bool {
        matches!(self, OutputFormat::Svg | OutputFormat::All)
    }
}

/// Prints the table and writes the selected artifacts. Returns the paths
/// written.
pub fn emit(
    report: &Report,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let needs_dir = (format.wants_json() || format.wants_svg() && !report.svgs.is_empty())
        || !report.extra_files.is_empty();
    if needs_dir {
        std::fs::create_dir_all(out_dir).map_err(|e| {
            CliError::Data(format!(
                "cannot create out-dir '{}': {e}",
                out_dir.display()
            ))
        })?;
    }
    let mut written = Vec::new();
    let mut write = |name: &str, content: &str| -> Result<(), CliError> {
        let path = out_dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| CliError::Data(format!("cannot write '{}': {e}", path.display())))?;
        written.push(path);
        Ok(())
    };

    if format.wants_json() {
        write(&format!("{}.json", report.stem), &report.json)?;
    }
    if format.wants_svg() {
        for (name, content) in &report.svgs {
            write(name, content)?;
        }
    }
    for (name, content) in &report.extra_files {
        write(name, content)?;
    }
    if format.wants_table() {
        print!("{}", report.table);
    }
    Ok(written)
}

pub(crate) fn pretty_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}
