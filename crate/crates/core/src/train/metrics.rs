use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{EpochMetrics, TrainHistory};

/// One JSON object per line. Wall-clock time is dropped unless `wall_clock`
/// is set, so that repeated runs produce identical files.
pub fn metrics_line(m: &EpochMetrics, wall_clock: bool) -> String {
    let mut m = m.clone();
    if !wall_clock {
        m.seconds = None;
    }
    serde_json::to_string(&m).expect("metrics serialise")
}

pub fn write_metrics(path: &Path, history: &TrainHistory, wall_clock: bool) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for m in &history.epochs {
        writeln!(f, "{}", metrics_line(m, wall_clock)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}
