//! Batch front-end: named scenarios from a TOML file, each writing CSV
//! tables, SVG plots and a manifest into its own directory.

pub mod config;
pub mod error;
pub mod plot;
pub mod runner;

pub use config::{Config, Job, Kind, Scenario};
pub use error::{ConfigError, RunError};
pub use runner::{run_all, run_scenario, Manifest, MANIFEST_FILE};

/// One line per scenario: name, kind and description.
pub fn catalogue(cfg: &Config) -> String {
    let width = cfg.scenarios.iter().map(|s| s.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for s in &cfg.scenarios {
        let line = format!("{:<width$}  {:<18}  {}", s.name, s.kind.name(), s.description);
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
