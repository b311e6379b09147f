//! Run-directory file formats. Column sets are fixed; any change bumps
//! [`OUTPUT_SCHEMA_VERSION`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::curves::LearningCurve;
use super::eval::DecisionMap;
use super::grid::GridRow;
use super::train::EpisodeRecord;
use crate::error::Result;

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub const CURVE_CSV_HEADER: &str = "episode,mean_return,ci95_half_width,seeds";
pub const EPISODES_CSV_HEADER: &str =
    "seed,episode,return,reliability,vlc_utilization,headlight_rate,no_redundancy,taillight_rate,switch_count";
pub const GRID_CSV_HEADER: &str = "rank,cell,label,score,seed_scores,failures";
pub const DECISION_MAP_CSV_HEADER: &str = "distance_bin,bearing_bin,distance_m,bearing_rad,action_id";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Mean curve over seeds. With a single seed the interval column is empty.
pub fn write_curve_csv<W: Write>(runs: &[Vec<f64>], curve: Option<&LearningCurve>, mut w: W) -> Result<()> {
    writeln!(w, "{CURVE_CSV_HEADER}")?;
    let len = runs.first().map_or(0, Vec::len);
    for e in 0..len {
        let (mean, hw) = match curve {
            Some(c) => (c.mean[e], Some(c.half_width[e])),
            None => (runs[0][e], None),
        };
        writeln!(w, "{e},{mean},{},{}", opt(hw), runs.len())?;
    }
    Ok(())
}

pub fn write_episodes_csv<W: Write>(runs: &[(u64, Vec<EpisodeRecord>)], mut w: W) -> Result<()> {
    writeln!(w, "{EPISODES_CSV_HEADER}")?;
    for (seed, records) in runs {
        for r in records {
            let m = &r.metrics;
            writeln!(
                w,
                "{seed},{},{},{},{},{},{},{},{}",
                r.episode,
                r.episode_return,
                m.reliability,
                m.vlc_utilization,
                m.headlight_rate,
                m.no_redundancy,
                m.taillight_rate,
                m.switch_count
            )?;
        }
    }
    Ok(())
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut w: W) -> Result<()> {
    writeln!(w, "{GRID_CSV_HEADER}")?;
    for r in rows {
        let seeds: Vec<String> = r.seed_scores.iter().map(|s| opt(*s)).collect();
        writeln!(w, "{},{},{},{},{},{}", r.rank, r.cell, r.label, opt(r.score), seeds.join(";"), r.failures.len())?;
    }
    Ok(())
}

pub fn write_decision_map_csv<W: Write>(map: &DecisionMap, mut w: W) -> Result<()> {
    writeln!(w, "{DECISION_MAP_CSV_HEADER}")?;
    for (i, row) in map.actions.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            writeln!(w, "{i},{j},{},{},{a}", map.spec.distance(i), map.spec.bearing(j))?;
        }
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Creates `path` and writes through a buffered writer.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<()>,
{
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
