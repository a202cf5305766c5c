use super::PipelineError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// `<out>/runs/<config-hash>/<seed>/`
pub fn run_dir(out: &Path, config_hash: &str, seed: u64) -> PathBuf {
    out.join("runs").join(config_hash).join(seed.to_string())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(path.display().to_string(), e)
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| PipelineError::Format(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io(path))
}
