use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use symlqr::Signal;

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SYMLQR_OUT_DIR";

pub struct OutputDir {
    path: PathBuf,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(path: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&path).map_err(|e| io_error(&path, e))?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn open(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.path.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }

    pub fn signal(&self, name: &str, signal: &Signal, prefix: &str) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        signal.write_csv(&mut w, prefix).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))
    }

    /// Several signals on one grid, side by side.
    pub fn signals(&self, name: &str, columns: &[(String, &Signal)]) -> Result<(), CliError> {
        let Some((_, first)) = columns.first() else {
            return Ok(());
        };
        let grid = *first.grid();
        let mut header = vec!["t".to_string()];
        for (prefix, s) in columns {
            header.extend((1..=s.channels()).map(|j| format!("{prefix}_{j}")));
        }
        let rows = (0..grid.len()).map(|i| {
            let mut row = vec![grid.time(i)];
            for (_, s) in columns {
                row.extend_from_slice(s.at(i));
            }
            row
        });
        self.table(name, &header, rows)
    }

    pub fn table<S: AsRef<str>>(
        &self,
        name: &str,
        header: &[S],
        rows: impl IntoIterator<Item = Vec<f64>>,
    ) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        let write = || -> std::io::Result<()> {
            let names: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
            writeln!(w, "{}", names.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()
        };
        write().map_err(|e| io_error(&path, e))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| io_error(&path, e))
    }
}
