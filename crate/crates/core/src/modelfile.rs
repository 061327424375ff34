//! Versioned text encoding of a [`GaussianModel`].
//!
//! ```text
//! indde-model 1
//! dim 7
//! window_duration_s 3e2
//! window_freq_hz 1e2
//! fit_rows 216
//! validation_rows 72
//! ridge_lambda 1.2e-14
//! epsilon_log -1.5e1
//! omega <dim values>
//! sigma <dim*dim values, row-major>
//! checksum crc32:89abcdef
//! ```
//!
//! Floats use Rust's shortest round-trip exponent form, so finite values
//! survive a save/load cycle bit-exactly. The checksum is CRC-32 (IEEE) over
//! every byte before the `checksum` line. `none` marks an absent threshold or
//! window. The Cholesky factor is recomputed on load.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::gauss::{GaussError, GaussianModel};
use crate::signal::WindowSpec;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "indde-model";
const CHECKSUM_KEY: &str = "checksum crc32:";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelFileError {
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model parameters rejected: {0}")]
    InvalidModel(#[from] GaussError),
}

fn corrupt(msg: impl Into<String>) -> ModelFileError {
    ModelFileError::CorruptModel(msg.into())
}

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

fn opt_float(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:e}"),
        None => String::from("none"),
    }
}

pub fn save_model(model: &GaussianModel) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "dim {}", model.dim());
    let window = model.window();
    let _ = writeln!(
        out,
        "window_duration_s {}",
        opt_float(window.map(WindowSpec::duration_s))
    );
    let _ = writeln!(
        out,
        "window_freq_hz {}",
        opt_float(window.map(WindowSpec::freq))
    );
    let _ = writeln!(out, "fit_rows {}", model.fit_rows());
    let _ = writeln!(out, "validation_rows {}", model.validation_rows());
    let _ = writeln!(out, "ridge_lambda {:e}", model.ridge_lambda());
    let _ = writeln!(out, "epsilon_log {}", opt_float(model.epsilon_log()));
    push_floats(&mut out, "omega", model.omega());
    push_floats(&mut out, "sigma", model.sigma());
    let crc = crc32fast::hash(out.as_bytes());
    let _ = writeln!(out, "{CHECKSUM_KEY}{crc:08x}");
    out.into_bytes()
}

fn parse_f64(s: &str, key: &str) -> Result<f64, ModelFileError> {
    s.parse::<f64>()
        .map_err(|_| corrupt(format!("{key}: bad number {s:?}")))
}

fn parse_opt_f64(s: &str, key: &str) -> Result<Option<f64>, ModelFileError> {
    if s == "none" {
        Ok(None)
    } else {
        parse_f64(s, key).map(Some)
    }
}

fn parse_usize(s: &str, key: &str) -> Result<usize, ModelFileError> {
    s.parse::<usize>()
        .map_err(|_| corrupt(format!("{key}: bad integer {s:?}")))
}

#[derive(Default)]
struct Fields {
    dim: Option<usize>,
    duration: Option<Option<f64>>,
    freq: Option<Option<f64>>,
    fit_rows: Option<usize>,
    validation_rows: Option<usize>,
    ridge: Option<f64>,
    epsilon: Option<Option<f64>>,
    omega: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
}

fn set<T>(slot: &mut Option<T>, value: T, key: &str) -> Result<(), ModelFileError> {
    if slot.replace(value).is_some() {
        Err(corrupt(format!("duplicate key {key}")))
    } else {
        Ok(())
    }
}

fn require<T>(slot: Option<T>, key: &str) -> Result<T, ModelFileError> {
    slot.ok_or_else(|| corrupt(format!("missing key {key}")))
}

pub fn load_model(bytes: &[u8]) -> Result<GaussianModel, ModelFileError> {
    let text = core::str::from_utf8(bytes).map_err(|_| corrupt("not UTF-8"))?;
    let header = text.lines().next().unwrap_or("");
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| corrupt("missing header"))?;
    let version: u32 = version.trim().parse().map_err(|_| corrupt("bad version"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelFileError::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }

    let checksum_at = text
        .rfind(CHECKSUM_KEY)
        .filter(|&i| i == 0 || text.as_bytes()[i - 1] == b'\n')
        .ok_or_else(|| corrupt("missing checksum"))?;
    let (body, trailer) = text.split_at(checksum_at);
    let stored = trailer[CHECKSUM_KEY.len()..].trim_end_matches('\n');
    let stored = u32::from_str_radix(stored, 16).map_err(|_| corrupt("unreadable checksum"))?;
    if stored != crc32fast::hash(body.as_bytes()) {
        return Err(corrupt("checksum mismatch"));
    }

    let mut f = Fields::default();
    for line in body.lines().skip(1) {
        let mut parts = line.split_ascii_whitespace();
        let Some(key) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        let single = || -> Result<&str, ModelFileError> {
            match rest.as_slice() {
                [v] => Ok(v),
                _ => Err(corrupt(format!("{key}: expected one value"))),
            }
        };
        match key {
            "dim" => set(&mut f.dim, parse_usize(single()?, key)?, key)?,
            "window_duration_s" => set(&mut f.duration, parse_opt_f64(single()?, key)?, key)?,
            "window_freq_hz" => set(&mut f.freq, parse_opt_f64(single()?, key)?, key)?,
            "fit_rows" => set(&mut f.fit_rows, parse_usize(single()?, key)?, key)?,
            "validation_rows" => set(&mut f.validation_rows, parse_usize(single()?, key)?, key)?,
            "ridge_lambda" => set(&mut f.ridge, parse_f64(single()?, key)?, key)?,
            "epsilon_log" => set(&mut f.epsilon, parse_opt_f64(single()?, key)?, key)?,
            "omega" | "sigma" => {
                let values = rest
                    .iter()
                    .map(|s| parse_f64(s, key))
                    .collect::<Result<Vec<_>, _>>()?;
                let slot = if key == "omega" {
                    &mut f.omega
                } else {
                    &mut f.sigma
                };
                set(slot, values, key)?;
            }
            other => return Err(corrupt(format!("unknown key {other}"))),
        }
    }

    let dim = require(f.dim, "dim")?;
    let model = GaussianModel::from_parts(
        dim,
        require(f.omega, "omega")?,
        require(f.sigma, "sigma")?,
        require(f.ridge, "ridge_lambda")?,
    )?
    .with_row_counts(
        require(f.fit_rows, "fit_rows")?,
        require(f.validation_rows, "validation_rows")?,
    );
    let model = match (
        require(f.duration, "window_duration_s")?,
        require(f.freq, "window_freq_hz")?,
    ) {
        (Some(d), Some(hz)) => {
            model.with_window(WindowSpec::new(d, hz).map_err(|e| corrupt(format!("window: {e}")))?)
        }
        (None, None) => model,
        _ => return Err(corrupt("window needs both duration and frequency")),
    };
    match require(f.epsilon, "epsilon_log")? {
        Some(eps) => Ok(model.with_epsilon_log(eps)?),
        None => Ok(model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample_model() -> GaussianModel {
        let sigma = vec![2.0, 0.3, 0.3, 0.1 + 1.0 / 3.0];
        GaussianModel::from_parts(2, vec![0.1, -7.25e-9], sigma, 1.0e-12)
            .unwrap()
            .with_window(WindowSpec::new(300.0, 100.0).unwrap())
            .with_row_counts(216, 72)
            .with_epsilon_log(-12.345_678_901_234_5)
            .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_model();
        let back = load_model(&save_model(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.window(), m.window());
    }

    #[test]
    fn uncalibrated_round_trip() {
        let m = GaussianModel::from_parts(1, vec![1.0], vec![4.0], 0.0).unwrap();
        let back = load_model(&save_model(&m)).unwrap();
        assert_eq!(back, m);
        assert!(back.epsilon_log().is_none());
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = save_model(&sample_model());
        for cut in [1, 12, bytes.len() / 2, bytes.len() - 3] {
            assert!(
                matches!(
                    load_model(&bytes[..cut]),
                    Err(ModelFileError::CorruptModel(_))
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn tampering_fails_checksum() {
        let text = String::from_utf8(save_model(&sample_model())).unwrap();
        let tampered = text.replacen("fit_rows 216", "fit_rows 217", 1);
        assert_eq!(
            load_model(tampered.as_bytes()),
            Err(ModelFileError::CorruptModel("checksum mismatch".into()))
        );
    }

    #[test]
    fn future_version_is_rejected() {
        let text = String::from_utf8(save_model(&sample_model())).unwrap();
        let v99 = text.replacen("indde-model 1", "indde-model 99", 1);
        assert_eq!(
            load_model(v99.as_bytes()),
            Err(ModelFileError::VersionMismatch {
                found: 99,
                expected: 1
            })
        );
    }

    #[test]
    fn unknown_keys_are_corrupt() {
        let mut body = String::from("indde-model 1\ndim 1\nbogus 3\n");
        let crc = crc32fast::hash(body.as_bytes());
        let _ = writeln!(body, "{CHECKSUM_KEY}{crc:08x}");
        assert!(matches!(
            load_model(body.as_bytes()),
            Err(ModelFileError::CorruptModel(msg)) if msg.contains("bogus")
        ));
    }
}
