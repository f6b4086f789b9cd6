use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flat view of a result for CSV output.
#[derive(Default)]
pub struct Table {
    /// Emitted as leading `# key=value` lines.
    pub meta: Vec<(String, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            ..Default::default()
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    seed: u64,
    result: &'a R,
    runtime_secs: f64,
}

pub struct Emitter {
    pub format: Format,
    pub output: Option<PathBuf>,
}

impl Emitter {
    pub fn emit<C: Serialize, R: Serialize>(
        &self,
        command: &str,
        config: &C,
        seed: u64,
        result: &R,
        table: Table,
        runtime_secs: f64,
    ) -> Result<()> {
        let mut sink: Box<dyn Write> = match &self.output {
            Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
            None => Box::new(io::stdout().lock()),
        };
        match self.format {
            Format::Json => {
                let env = Envelope {
                    tool: "polylearn",
                    version: env!("CARGO_PKG_VERSION"),
                    command,
                    config,
                    seed,
                    result,
                    runtime_secs,
                };
                serde_json::to_writer_pretty(&mut sink, &env)?;
                writeln!(sink)?;
            }
            Format::Csv => {
                writeln!(sink, "# tool=polylearn")?;
                writeln!(sink, "# version={}", env!("CARGO_PKG_VERSION"))?;
                writeln!(sink, "# command={command}")?;
                writeln!(sink, "# config={}", serde_json::to_string(config)?)?;
                writeln!(sink, "# seed={seed}")?;
                for (k, v) in &table.meta {
                    writeln!(sink, "# {k}={v}")?;
                }
                writeln!(sink, "# runtime_secs={runtime_secs}")?;
                let mut w = csv::Writer::from_writer(&mut sink);
                w.write_record(&table.header)?;
                for row in &table.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
            }
        }
        sink.flush()?;
        Ok(())
    }
}
