use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// A number for CSV output: 12 significant digits, '.' decimal point,
/// scientific notation outside [1e-4, 1e12).
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    let a = r.abs();
    if r == 0.0 || (1e-4..1e12).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// Rounds every float in a JSON tree to 12 significant digits; non-finite
/// values become null.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Output sink. A file target is written to a temporary sibling and renamed
/// into place by `finish`; dropping an unfinished sink removes the temporary.
pub struct Sink {
    target: Option<PathBuf>,
    tmp: Option<PathBuf>,
    writer: Box<dyn Write>,
}

impl Sink {
    pub fn open(target: Option<&Path>) -> Result<Self, CliError> {
        match target {
            None => Ok(Self {
                target: None,
                tmp: None,
                writer: Box::new(BufWriter::new(io::stdout())),
            }),
            Some(path) => {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
                let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
                let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
                Ok(Self {
                    target: Some(path.to_path_buf()),
                    tmp: Some(tmp),
                    writer: Box::new(BufWriter::new(file)),
                })
            }
        }
    }

    /// Writes a line and flushes it, so long sweeps show progress.
    pub fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.writer, "{s}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| self.err(e))
    }

    pub fn json(&mut self, v: Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&round_json(v)).map_err(|e| CliError::Internal(e.to_string()))?;
        self.line(&text)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| self.err(e))?;
        if let (Some(tmp), Some(target)) = (self.tmp.take(), self.target.as_ref()) {
            // Close the file before renaming.
            self.writer = Box::new(io::sink());
            fs::rename(&tmp, target).map_err(|e| CliError::io(target, e))?;
        }
        Ok(())
    }

    fn err(&self, e: io::Error) -> CliError {
        match &self.target {
            Some(p) => CliError::io(p, e),
            None => CliError::io(Path::new("<stdout>"), e),
        }
    }
}

impl Drop for Sink {
    fn drop(&mut self) {
        if let Some(tmp) = self.tmp.take() {
            let _ = fs::remove_file(tmp);
        }
    }
}

/// Writes a JSON document atomically.
pub fn write_json_file(path: &Path, v: Value) -> Result<(), CliError> {
    let mut sink = Sink::open(Some(path))?;
    sink.json(v)?;
    sink.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(2.5e-7), "2.5e-7");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(12.0), "12");
    }

    #[test]
    fn json_rounding() {
        let v = round_json(serde_json::json!({"a": [0.1 + 0.2, 1]}));
        assert_eq!(v["a"][0], serde_json::json!(0.3));
        assert_eq!(v["a"][1], serde_json::json!(1));
    }

    #[test]
    fn dropped_sink_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        {
            let mut s = Sink::open(Some(&path)).unwrap();
            s.line("partial").unwrap();
        }
        assert!(!path.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        let mut s = Sink::open(Some(&path)).unwrap();
        s.line("done").unwrap();
        s.finish().unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "done\n");
    }
}
