use std::fs;
use std::path::Path;
use std::time::Instant;

use pact_core::{read_tensor, write_tensor, PositionIds, TokenTensor};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn load(path: &Path) -> CliResult<TokenTensor> {
    read_tensor(path).map_err(CliError::at(path))
}

pub fn load_positions(path: &Path) -> CliResult<PositionIds> {
    let t = load(path)?;
    PositionIds::from_tensor(&t).map_err(CliError::at(path))
}

pub fn save(t: &TokenTensor, dir: &Path, file: &str) -> CliResult<String> {
    write_tensor(t, dir.join(file)).map_err(CliError::at(&dir.join(file)))?;
    Ok(file.to_string())
}

pub fn save_json<T: Serialize>(value: &T, dir: &Path, file: &str) -> CliResult<String> {
    let path = dir.join(file);
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(file.to_string())
}

pub fn save_text(text: &str, dir: &Path, file: &str) -> CliResult<String> {
    let path = dir.join(file);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(file.to_string())
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Wall-clock stopwatch that can be silenced for byte-stable reports.
#[derive(Clone, Copy)]
pub struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    pub fn start(enabled: bool) -> Self {
        Self {
            start: Instant::now(),
            enabled,
        }
    }

    pub fn elapsed_ms(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }
}
