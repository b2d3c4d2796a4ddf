//! Two-level clustering of interval-resolved frequency estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphTrack {
    /// Cluster centres, lower first.
    pub levels: [f64; 2],
    pub separation: f64,
    /// Pooled within-cluster standard deviation.
    pub spread: f64,
    /// Mean residence time in each level, from completed runs. NaN when a
    /// level has no completed run.
    pub dwell: [f64; 2],
    /// Level index per interval.
    pub assignment: Vec<u8>,
    /// Separation below three times the spread: no resolvable switching.
    pub single_level: bool,
}

/// 1-D k-means with k = 2, seeded at the extremes.
pub fn telegraph_frequency_tracker(intervals: &[(f64, f64)]) -> Result<TelegraphTrack> {
    if intervals.len() < 10 {
        return Err(Error::Degenerate(format!(
            "need at least 10 intervals, got {}",
            intervals.len()
        )));
    }
    if intervals
        .iter()
        .any(|(t, f)| !t.is_finite() || !f.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite interval data".into()));
    }
    if intervals.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument(
            "interval times must increase".into(),
        ));
    }
    let f: Vec<f64> = intervals.iter().map(|x| x.1).collect();
    let mut c = [
        f.iter().copied().fold(f64::INFINITY, f64::min),
        f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ];
    let mut assignment = vec![0u8; f.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (a, &v) in assignment.iter_mut().zip(&f) {
            let k = u8::from((v - c[1]).abs() < (v - c[0]).abs());
            changed |= *a != k;
            *a = k;
        }
        let mut sum = [0.0; 2];
        let mut cnt = [0usize; 2];
        for (&a, &v) in assignment.iter().zip(&f) {
            sum[a as usize] += v;
            cnt[a as usize] += 1;
        }
        for k in 0..2 {
            if cnt[k] > 0 {
                c[k] = sum[k] / cnt[k] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let ss: f64 = assignment
        .iter()
        .zip(&f)
        .map(|(&a, &v)| (v - c[a as usize]).powi(2))
        .sum();
    let spread = (ss / (f.len() - 2) as f64).sqrt();
    let separation = c[1] - c[0];
    let single_level = !(separation > 3.0 * spread);

    // Completed runs: bounded by a switch on both sides.
    let mut dur = [0.0; 2];
    let mut runs = [0usize; 2];
    let mut start: Option<usize> = None;
    for k in 1..f.len() {
        if assignment[k] != assignment[k - 1] {
            if let Some(s) = start {
                let lvl = assignment[s] as usize;
                dur[lvl] += intervals[k].0 - intervals[s].0;
                runs[lvl] += 1;
            }
            start = Some(k);
        }
    }
    let dwell = [0, 1].map(|k| {
        if runs[k] > 0 {
            dur[k] / runs[k] as f64
        } else {
            f64::NAN
        }
    });
    Ok(TelegraphTrack {
        levels: c,
        separation,
        spread,
        dwell,
        assignment,
        single_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_telegraph;
    use crate::units::khz;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn resolves_two_levels() {
        // Telegraph ±30 kHz sampled once per 20 µs with 3 kHz estimation noise.
        let dt = 20e-6;
        let rate = 1.0 / 400e-6;
        let tr = sample_telegraph(khz(60.0), rate, 1000.0 * dt, dt, 8).unwrap();
        let noise = Normal::new(0.0, khz(3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<(f64, f64)> = tr
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 * dt, v + noise.sample(&mut rng)))
            .collect();
        let out = telegraph_frequency_tracker(&data).unwrap();
        assert!(!out.single_level);
        assert!((out.separation / khz(60.0) - 1.0).abs() < 0.05);
        let truth: Vec<u8> = tr.values.iter().map(|&v| u8::from(v > 0.0)).collect();
        let acc = truth
            .iter()
            .zip(&out.assignment)
            .filter(|(a, b)| a == b)
            .count() as f64
            / truth.len() as f64;
        assert!(acc > 0.95, "accuracy {acc}");
        for d in out.dwell {
            assert!((d * rate - 1.0).abs() < 0.2, "dwell {d}");
        }
    }

    #[test]
    fn constant_series_is_single_level() {
        let noise = Normal::new(0.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<(f64, f64)> = (0..50)
            .map(|k| (k as f64, 1e5 + noise.sample(&mut rng)))
            .collect();
        assert!(telegraph_frequency_tracker(&data).unwrap().single_level);
        assert!(telegraph_frequency_tracker(&data[..5]).is_err());
    }
}
