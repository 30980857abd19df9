use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::CliError;

pub const METRICS: &str = "metrics.tsv";
pub const RESOLVED: &str = "config.txt";

/// Line-oriented `metric<TAB>value` report headed by the seed and config
/// hash.
#[derive(Debug, Default)]
pub struct Report {
    rows: Vec<(String, f64)>,
}

impl Report {
    pub fn add(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.rows.push((name.into(), value));
        self
    }

    pub fn render(&self, config: &RunConfig) -> Result<String, CliError> {
        let mut s = format!("seed\t{}\nconfig_hash\t{}\n", config.seed()?, config.hash());
        for (k, v) in &self.rows {
            let _ = writeln!(s, "{k}\t{v:.6}");
        }
        Ok(s)
    }

    /// Writes the report and the resolved config into `dir`.
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<(), CliError> {
        write_file(&dir.join(METRICS), self.render(config)?.as_bytes())?;
        write_file(&dir.join(RESOLVED), config.to_text().as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Pipeline(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_decimals_after_header() {
        let c = RunConfig::default();
        let mut r = Report::default();
        r.add("t_sr", 1.0).add("abs_rel", 1.0 / 3.0);
        let text = r.render(&c).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "seed\t0");
        assert!(lines[1].starts_with("config_hash\t"));
        assert_eq!(&lines[2..], ["t_sr\t1.000000", "abs_rel\t0.333333"]);
    }
}
