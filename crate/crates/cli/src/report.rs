//! Plain-text reports: one `key: value` per line, tables fenced by
//! `table:` / `end` lines.

use std::fmt::Display;
use std::path::Path;

use crate::config::RunConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    /// Starts a report with the subcommand and the resolved configuration.
    pub fn new(cfg: &RunConfig) -> Self {
        let mut r = Self::default();
        r.add("command", cfg.command.name());
        for (key, value) in cfg.entries() {
            r.add(&format!("config.{key}"), value);
        }
        r
    }

    pub fn add(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key}: {value}"));
    }

    /// Whitespace-aligned columns under a header row.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) {
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let render = |cells: &mut dyn Iterator<Item = &str>| {
            cells
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        self.lines.push(format!("table: {name}"));
        self.lines.push(render(&mut header.iter().copied()));
        for row in rows {
            self.lines.push(render(&mut row.iter().map(String::as_str)));
        }
        self.lines.push("end".into());
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> mesc::Result<()> {
        crate::commands::ensure_parent(path)?;
        std::fs::write(path, self.text()).map_err(|source| mesc::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
