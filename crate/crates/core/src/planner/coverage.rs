use std::f64::consts::TAU;

use crate::scene::CaptureSchedule;
use crate::{Error, Result};

/// Histogram of a schedule over (object-frame view azimuth, light rotation).
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageStats {
    pub view_bins: usize,
    pub theta_bins: usize,
    /// `counts[t * view_bins + v]`, weighted by entry multiplicity.
    pub counts: Vec<usize>,
    pub total: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub occupied: usize,
    /// Smallest circular arc containing every light rotation, radians.
    pub theta_span: f64,
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Angles within 1e-9 of a bin edge snap to the upper bin, so samples laid
/// out exactly on edges are not scattered by rounding.
fn bin(a: f64, bins: usize) -> usize {
    ((wrap(a) / TAU * bins as f64 + 1e-9).floor() as usize) % bins
}

/// Smallest circular arc covering all angles.
pub(crate) fn circular_span(angles: &[f64]) -> f64 {
    let mut w: Vec<f64> = angles.iter().map(|&a| wrap(a)).collect();
    if w.is_empty() {
        return 0.0;
    }
    w.sort_by(|a, b| a.total_cmp(b));
    w.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if w.len() == 1 {
        return 0.0;
    }
    let mut gap = w[0] + TAU - w[w.len() - 1];
    for pair in w.windows(2) {
        gap = gap.max(pair[1] - pair[0]);
    }
    TAU - gap
}

pub fn coverage_stats(
    schedule: &CaptureSchedule,
    view_bins: usize,
    theta_bins: usize,
) -> Result<CoverageStats> {
    if schedule.is_empty() {
        return Err(Error::invalid("coverage of an empty schedule"));
    }
    if view_bins == 0 || theta_bins == 0 {
        return Err(Error::invalid("bin counts must be positive"));
    }
    let pivot = schedule.pivot;
    let mut counts = vec![0usize; view_bins * theta_bins];
    for e in &schedule.entries {
        let c = e.object_frame_pose.center();
        let az = (c.y - pivot[1]).atan2(c.x - pivot[0]);
        counts[bin(e.light_rotation, theta_bins) * view_bins + bin(az, view_bins)] += e.multiplicity;
    }
    let total: usize = counts.iter().sum();
    let thetas: Vec<f64> = schedule.entries.iter().map(|e| e.light_rotation).collect();
    Ok(CoverageStats {
        view_bins,
        theta_bins,
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
        mean: total as f64 / counts.len() as f64,
        occupied: counts.iter().filter(|&&c| c > 0).count(),
        total,
        counts,
        theta_span: circular_span(&thetas),
    })
}

impl CoverageStats {
    pub fn count(&self, view_bin: usize, theta_bin: usize) -> usize {
        self.counts[theta_bin * self.view_bins + view_bin]
    }

    /// CSV with one row per occupied-or-not bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("view_bin,theta_bin,view_center,theta_center,count\n");
        for t in 0..self.theta_bins {
            for v in 0..self.view_bins {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    v,
                    t,
                    (v as f64 + 0.5) * TAU / self.view_bins as f64,
                    (t as f64 + 0.5) * TAU / self.theta_bins as f64,
                    self.count(v, t)
                ));
            }
        }
        out
    }
}
