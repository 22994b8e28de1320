//! CSV emission with lossless number formatting.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

/// 17 significant digits; parses back to the identical `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Maxima as a single semicolon-joined field.
pub fn joined(values: &[f64]) -> String {
    values.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

pub fn lambda_headers(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("lambda_{i}")).collect()
}

/// Exponent fields padded with empty cells up to `k`.
pub fn lambda_fields(exponents: &[f64], k: usize) -> Vec<String> {
    (0..k).map(|i| exponents.get(i).map(|&x| num(x)).unwrap_or_default()).collect()
}

pub struct Table {
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> Result<Table> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Table { writer, width: header.len() })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.width);
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}
