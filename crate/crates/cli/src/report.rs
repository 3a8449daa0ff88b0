//! Summary of result tables: spectrum-mobility gain over the best
//! single-band agent, utilization, oracle gap, and perfect-information
//! band ratios.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use cruise_core::sim::Environment;
use cruise_core::ExperimentConfig;

use crate::records::{read_rows, ResultRow, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub p: f64,
    pub speed_kmh: Option<f64>,
    pub sm_rate: f64,
    pub best_single: String,
    pub best_single_rate: f64,
    /// `(SM − best single) / best single`.
    pub gain: f64,
    pub oracle_rate: Option<f64>,
    /// `(oracle − SM) / oracle`.
    pub oracle_gap: Option<f64>,
    pub sm_utilization: Vec<(u64, f64)>,
}

/// Perfect-information ratio between the two highest bands, from the
/// band-restricted oracle rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRatio {
    pub p: f64,
    pub speed_kmh: Option<f64>,
    pub high_ghz: u64,
    pub low_ghz: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub source: PathBuf,
    pub lines: Vec<SummaryLine>,
    pub band_ratios: Vec<BandRatio>,
    /// SM end-to-end relative drop per `p` (speed tables only).
    pub speed_drops: Vec<(f64, f64)>,
}

fn groups(rows: &[ResultRow]) -> Vec<(f64, Option<f64>, Vec<&ResultRow>)> {
    let mut out: Vec<(f64, Option<f64>, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(p, s, _)| *p == r.p && *s == r.speed_kmh) {
            Some(g) => g.2.push(r),
            None => out.push((r.p, r.speed_kmh, vec![r])),
        }
    }
    out
}

pub fn summarize(source: &Path, table: &Table) -> Block {
    let mut lines = Vec::new();
    let mut band_ratios = Vec::new();
    for (p, speed, rows) in groups(&table.rows) {
        let find = |name: &str| rows.iter().find(|r| r.agent == name).copied();
        let singles: Vec<&ResultRow> = table.bands_ghz.iter().filter_map(|g| find(&format!("f{g}"))).collect();
        if let (Some(sm), Some(best)) = (find("sm"), singles.iter().max_by(|a, b| a.mean_rate_bps.total_cmp(&b.mean_rate_bps))) {
            let oracle = find("oracle").map(|o| o.mean_rate_bps);
            lines.push(SummaryLine {
                p,
                speed_kmh: speed,
                sm_rate: sm.mean_rate_bps,
                best_single: best.agent.clone(),
                best_single_rate: best.mean_rate_bps,
                gain: (sm.mean_rate_bps - best.mean_rate_bps) / best.mean_rate_bps,
                oracle_rate: oracle,
                oracle_gap: oracle.map(|o| (o - sm.mean_rate_bps) / o),
                sm_utilization: sm.utilization.clone(),
            });
        }
        let mut sorted = table.bands_ghz.clone();
        sorted.sort_unstable();
        if sorted.len() >= 2 {
            let (hi, lo) = (sorted[sorted.len() - 1], sorted[sorted.len() - 2]);
            if let (Some(h), Some(l)) = (find(&format!("oracle_f{hi}")), find(&format!("oracle_f{lo}"))) {
                band_ratios.push(BandRatio {
                    p,
                    speed_kmh: speed,
                    high_ghz: hi,
                    low_ghz: lo,
                    ratio: h.mean_rate_bps / l.mean_rate_bps,
                });
            }
        }
    }
    let mut speed_drops = Vec::new();
    if table.with_speed {
        let mut ps: Vec<f64> = lines.iter().map(|l| l.p).collect();
        ps.dedup();
        for p in ps {
            let mut series: Vec<&SummaryLine> = lines.iter().filter(|l| l.p == p).collect();
            series.sort_by(|a, b| a.speed_kmh.unwrap_or(0.0).total_cmp(&b.speed_kmh.unwrap_or(0.0)));
            if let (Some(first), Some(last)) = (series.first(), series.last()) {
                speed_drops.push((p, (first.sm_rate - last.sm_rate) / first.sm_rate));
            }
        }
    }
    Block {
        source: source.to_path_buf(),
        lines,
        band_ratios,
        speed_drops,
    }
}

/// `(high GHz, low GHz, ratio)` of cell-averaged perfect-information rates.
pub fn standalone_ratio(cfg: &ExperimentConfig) -> Result<Option<(u64, u64, f64)>> {
    let env = Environment::from_config(cfg, cfg.mobility.p)?;
    let mut idx: Vec<usize> = (0..env.bands.len()).collect();
    idx.sort_by(|&a, &b| env.bands[a].frequency_hz.total_cmp(&env.bands[b].frequency_hz));
    if idx.len() < 2 {
        return Ok(None);
    }
    let (hi, lo) = (idx[idx.len() - 1], idx[idx.len() - 2]);
    let r = env.perfect_information_rate(hi)? / env.perfect_information_rate(lo)?;
    Ok(Some((env.bands[hi].label_ghz(), env.bands[lo].label_ghz(), r)))
}

fn pct(x: f64) -> String {
    format!("{:+.2}%", 100.0 * x)
}

pub fn render(blocks: &[Block], standalone: Option<(u64, u64, f64)>) -> String {
    let mut s = String::new();
    for b in blocks {
        let _ = writeln!(s, "## {}\n", b.source.display());
        let with_speed = b.lines.iter().any(|l| l.speed_kmh.is_some());
        let bands: Vec<u64> = b.lines.first().map(|l| l.sm_utilization.iter().map(|u| u.0).collect()).unwrap_or_default();
        let mut head = String::from("| p |");
        if with_speed {
            head += " speed (km/h) |";
        }
        head += " SM (Mbps) | best single | best single (Mbps) | SM gain | oracle (Mbps) | oracle gap |";
        for g in &bands {
            let _ = write!(head, " SM util {g} GHz |");
        }
        let _ = writeln!(s, "{head}");
        let _ = writeln!(s, "|{}", "---|".repeat(head.matches('|').count() - 1));
        for l in &b.lines {
            let mut row = format!("| {} |", l.p);
            if with_speed {
                let _ = write!(row, " {} |", l.speed_kmh.unwrap_or(f64::NAN));
            }
            let _ = write!(
                row,
                " {:.2} | {} | {:.2} | {} | {} | {} |",
                l.sm_rate / 1e6,
                l.best_single,
                l.best_single_rate / 1e6,
                pct(l.gain),
                l.oracle_rate.map_or("-".into(), |o| format!("{:.2}", o / 1e6)),
                l.oracle_gap.map_or("-".into(), pct),
            );
            for (_, u) in &l.sm_utilization {
                let _ = write!(row, " {:.1}% |", 100.0 * u);
            }
            let _ = writeln!(s, "{row}");
        }
        if !b.speed_drops.is_empty() {
            let _ = writeln!(s, "\nSM rate drop from slowest to fastest speed:");
            for (p, d) in &b.speed_drops {
                let _ = writeln!(s, "- p = {p}: {:.2}%", 100.0 * d);
            }
        }
        if !b.band_ratios.is_empty() {
            let _ = writeln!(s, "\nPerfect-information band ratio from oracle rows:");
            for r in &b.band_ratios {
                let at = r.speed_kmh.map_or(String::new(), |v| format!(", {v} km/h"));
                let _ = writeln!(s, "- p = {}{at}: {} GHz vs {} GHz {}", r.p, r.high_ghz, r.low_ghz, pct(r.ratio - 1.0));
            }
        }
        s.push('\n');
    }
    if let Some((hi, lo, r)) = standalone {
        let _ = writeln!(s, "Cell-averaged perfect-information rate, {hi} GHz vs {lo} GHz: {}", pct(r - 1.0));
    }
    s
}

pub fn report(inputs: &[PathBuf], cfg: Option<&ExperimentConfig>, out: &Path) -> Result<Vec<Block>> {
    let mut blocks = Vec::with_capacity(inputs.len());
    for path in inputs {
        let table = read_rows(path)?;
        blocks.push(summarize(path, &table));
    }
    let standalone = match cfg {
        Some(c) => standalone_ratio(c)?,
        None => None,
    };
    std::fs::write(out, render(&blocks, standalone))?;
    Ok(blocks)
}
