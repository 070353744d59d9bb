//! Results table and figures.

use std::path::{Path, PathBuf};

use super::plot::{bar_chart, line_chart, Series};
use super::ScenarioResult;
use crate::channel::EpisodeSchedule;
use crate::{Error, Result};

pub const TABLE_FILE: &str = "results.csv";
pub const PER_IMAGE_FILE: &str = "per_image.json";
pub const BAR_PLOT_FILE: &str = "psnr_by_scenario.png";
pub const LINE_PLOT_FILE: &str = "psnr_vs_snr.png";
pub const TABLE_HEADER: [&str; 7] =
    ["scenario", "variant", "checkpoint_id", "n_images", "mean_psnr_db", "std_psnr_db", "seed"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes the summary table, one row per scenario and variant.
pub fn write_table(results: &[ScenarioResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TABLE_HEADER).map_err(|e| csv_error(path, e))?;
    for r in results {
        w.write_record([
            r.scenario.clone(),
            r.variant.clone(),
            r.checkpoint_id.clone(),
            r.n_images().to_string(),
            format!("{:.6}", r.mean_psnr_db),
            format!("{:.6}", r.std_psnr_db),
            r.seed.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn series_key(r: &ScenarioResult) -> String {
    format!("{} {}", r.variant, r.checkpoint_id)
}

/// Scenario names in first-seen order and one series per variant/checkpoint.
fn tabulate(results: &[ScenarioResult]) -> (Vec<String>, Vec<Series>) {
    let mut groups: Vec<String> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    for r in results {
        if !groups.contains(&r.scenario) {
            groups.push(r.scenario.clone());
        }
        if !keys.contains(&series_key(r)) {
            keys.push(series_key(r));
        }
    }
    let series = keys
        .into_iter()
        .map(|key| Series {
            values: groups
                .iter()
                .map(|g| {
                    results
                        .iter()
                        .find(|r| &r.scenario == g && series_key(r) == key)
                        .map_or(f64::NAN, |r| r.mean_psnr_db)
                })
                .collect(),
            label: key,
        })
        .collect();
    (groups, series)
}

/// Constant-SNR scenarios as `(snr_db, name)`, or `None` if any scenario varies.
fn constant_snr_axis(groups: &[String]) -> Option<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            let s = EpisodeSchedule::parse_legend(g).ok()?;
            (s.segments().len() == 1).then(|| (s.segments()[0].state.effective_snr_db(1.0) * 1e6).round() / 1e6)
        })
        .collect()
}

/// Writes the table, per-image PSNRs and plots under `dir`; returns the
/// written paths.
pub fn export_results(results: &[ScenarioResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::Config("no results to export".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = dir.join(TABLE_FILE);
    write_table(results, &table)?;
    let per_image = dir.join(PER_IMAGE_FILE);
    std::fs::write(&per_image, serde_json::to_string_pretty(results)?).map_err(|e| Error::io(&per_image, e))?;
    let mut written = vec![table, per_image];
    let (groups, series) = tabulate(results);
    let bars = dir.join(BAR_PLOT_FILE);
    bar_chart(&bars, "mean PSNR per scenario", "PSNR dB", &groups, &series)?;
    written.push(bars);
    if let Some(x) = constant_snr_axis(&groups).filter(|x| x.len() > 1) {
        let lines = dir.join(LINE_PLOT_FILE);
        line_chart(&lines, "PSNR under constant SNR", "SNR dB", "PSNR dB", &x, &series)?;
        written.push(lines);
    }
    Ok(written)
}
