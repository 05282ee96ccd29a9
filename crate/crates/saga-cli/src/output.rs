//! CSV emission: comma-separated, one header row, LF line endings, plain
//! `Display` number formatting (decimal point, no grouping, no locale).

use std::fs;
use std::path::Path;

use crate::CliError;

pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Csv { buf: String::new() };
        csv.push_row(header.iter().map(|s| s.to_string()));
        csv
    }

    pub fn push_row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut first = true;
        for field in fields {
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(&field);
            first = false;
        }
        self.buf.push('\n');
    }

    /// Writes to the path, or to stdout when no path is given.
    pub fn emit(self, path: Option<&Path>) -> Result<(), CliError> {
        match path {
            Some(p) => fs::write(p, self.buf)
                .map_err(|e| CliError::Io(format!("{}: {}", p.display(), e))),
            None => {
                print!("{}", self.buf);
                Ok(())
            }
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))
}
