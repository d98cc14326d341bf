use alloc::vec::Vec;

use super::TrajectoryRecord;

/// First step at which the self-consistent risk starts rising while the
/// Madry risk keeps falling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverfitOnset {
    pub step: usize,
    /// Index into the record slice.
    pub index: usize,
    /// Raw (unsmoothed) Madry risk at the onset record.
    pub r_madry: f64,
}

/// Centred moving average of odd width `2 * half + 1`; `None` near the ends.
fn centred_average(values: &[f64], half: usize) -> Vec<Option<f64>> {
    let n = values.len();
    let width = (2 * half + 1) as f64;
    (0..n)
        .map(|i| {
            if i < half || i + half >= n {
                None
            } else {
                Some(values[i - half..=i + half].iter().sum::<f64>() / width)
            }
        })
        .collect()
}

/// Smooth `r_score` and `r_madry` with a centred window of width
/// `2 * (window / 2) + 1` and return the first record `i` after which the
/// smoothed `r_score` strictly increases and the smoothed `r_madry` strictly
/// decreases for `window` consecutive records.
pub fn detect_overfit_onset(records: &[TrajectoryRecord], window: usize) -> Option<OverfitOnset> {
    assert!(window >= 2, "window must be at least 2");
    let half = window / 2;
    let score: Vec<f64> = records.iter().map(|r| r.r_score).collect();
    let madry: Vec<f64> = records.iter().map(|r| r.r_madry).collect();
    let s = centred_average(&score, half);
    let m = centred_average(&madry, half);
    let n = records.len();
    (0..n.saturating_sub(window)).find_map(|i| {
        let rising = (i..i + window).all(|j| match (s[j], s[j + 1], m[j], m[j + 1]) {
            (Some(s0), Some(s1), Some(m0), Some(m1)) => s1 > s0 && m1 < m0,
            _ => false,
        });
        rising.then(|| OverfitOnset {
            step: records[i].step,
            index: i,
            r_madry: records[i].r_madry,
        })
    })
}
