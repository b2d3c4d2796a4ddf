//! Pulse segments and schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Xy1,
    Xy2,
    Xy3,
    Flux2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope {
    Square,
    /// Gaussian centred in the segment, shifted and rescaled so it starts and
    /// ends at zero with unit peak.
    Gaussian {
        sigma: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub channel: Channel,
    pub envelope: Envelope,
    pub t_start: f64,
    pub duration: f64,
    /// Drive strength (XY) or peak frequency deviation (flux), rad/s.
    pub amplitude: f64,
    /// Carrier frequency in the simulation frame, rad/s.
    pub carrier: f64,
    pub phase: f64,
}

impl PulseSegment {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(
                "segment duration must be positive".into(),
            ));
        }
        if !(self.t_start >= 0.0 && self.t_start.is_finite()) {
            return Err(Error::InvalidArgument(
                "segment start must be non-negative".into(),
            ));
        }
        if let Envelope::Gaussian { sigma } = self.envelope {
            if !(sigma > 0.0) {
                return Err(Error::InvalidArgument(
                    "gaussian sigma must be positive".into(),
                ));
            }
        }
        if !(self.amplitude.is_finite() && self.carrier.is_finite() && self.phase.is_finite()) {
            return Err(Error::InvalidArgument(
                "segment parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end()
    }

    /// Envelope value at absolute time t (zero outside the segment).
    pub fn envelope_at(&self, t: f64) -> f64 {
        if t < self.t_start || t > self.t_end() {
            return 0.0;
        }
        match self.envelope {
            Envelope::Square => 1.0,
            Envelope::Gaussian { sigma } => {
                let s = t - self.t_start - 0.5 * self.duration;
                let edge = (-(self.duration * self.duration) / (8.0 * sigma * sigma)).exp();
                ((-(s * s) / (2.0 * sigma * sigma)).exp() - edge) / (1.0 - edge)
            }
        }
    }

    /// ∫ envelope dt over the segment.
    pub fn envelope_area(&self) -> f64 {
        match self.envelope {
            Envelope::Square => self.duration,
            Envelope::Gaussian { sigma } => {
                let half = 0.5 * self.duration;
                let edge = (-(half * half) / (2.0 * sigma * sigma)).exp();
                let gauss = sigma
                    * (2.0 * std::f64::consts::PI).sqrt()
                    * erf(half / (sigma * std::f64::consts::SQRT_2));
                (gauss - self.duration * edge) / (1.0 - edge)
            }
        }
    }
}

/// Error function (Abramowitz–Stegun 7.1.26 refined with a series for small
/// arguments); accurate to ~1e-12 which is ample for envelope areas.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.5 {
        // Maclaurin series.
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return 2.0 / std::f64::consts::PI.sqrt() * sum;
    }
    // Continued fraction for erfc.
    let mut f = 0.0;
    for k in (1..60).rev() {
        f = (k as f64 / 2.0) / (x + f);
    }
    1.0 - (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<PulseSegment>,
    pub check_times: Vec<f64>,
    pub total_duration: f64,
}

/// One piece of the tiling of [0, total_duration].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tile {
    pub start: f64,
    pub end: f64,
    /// Index of the segment occupying this tile, or None for idle.
    pub segment: Option<usize>,
}

impl Schedule {
    pub fn new(
        mut segments: Vec<PulseSegment>,
        mut check_times: Vec<f64>,
        total_duration: f64,
    ) -> Result<Self> {
        for s in &segments {
            s.validate()?;
        }
        segments.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        check_times.sort_by(f64::total_cmp);
        let sched = Schedule {
            segments,
            check_times,
            total_duration,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_duration >= 0.0 && self.total_duration.is_finite()) {
            return Err(Error::InvalidArgument(
                "total duration must be non-negative".into(),
            ));
        }
        let slack = 1e-15 * self.total_duration.max(1e-9);
        for w in self.segments.windows(2) {
            if w[1].t_start < w[0].t_start {
                return Err(Error::InvalidArgument(
                    "segments must be sorted by start time".into(),
                ));
            }
        }
        for s in &self.segments {
            s.validate()?;
            if s.t_end() > self.total_duration + slack {
                return Err(Error::InvalidArgument(
                    "segment extends past total duration".into(),
                ));
            }
        }
        for &t in &self.check_times {
            if !(t >= 0.0 && t <= self.total_duration + slack) {
                return Err(Error::InvalidArgument(format!(
                    "check time {t} outside schedule"
                )));
            }
        }
        Ok(())
    }

    /// Splits [0, total_duration] into busy and idle tiles. Overlapping
    /// segments (different channels) share a tile attributed to the first.
    pub fn tiling(&self) -> Vec<Tile> {
        let mut tiles = Vec::new();
        let mut t = 0.0;
        for (k, s) in self.segments.iter().enumerate() {
            let end = s.t_end();
            if end <= t {
                continue;
            }
            if s.t_start > t {
                tiles.push(Tile {
                    start: t,
                    end: s.t_start,
                    segment: None,
                });
                t = s.t_start;
            }
            tiles.push(Tile {
                start: t,
                end,
                segment: Some(k),
            });
            t = end;
        }
        if self.total_duration > t {
            tiles.push(Tile {
                start: t,
                end: self.total_duration,
                segment: None,
            });
        }
        tiles
    }

    /// Segment whose interior contains t, if any.
    pub fn segment_at(&self, t: f64) -> Option<usize> {
        self.segments
            .iter()
            .position(|s| t > s.t_start && t < s.t_end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn seg(t: f64, d: f64) -> PulseSegment {
        PulseSegment {
            channel: Channel::Flux2,
            envelope: Envelope::Gaussian { sigma: d / 4.0 },
            t_start: t,
            duration: d,
            amplitude: 1.0,
            carrier: 0.0,
            phase: 0.0,
        }
    }

    #[test]
    fn erf_reference_values() {
        assert_relative_eq!(erf(0.5), 0.520_499_877_813_046_5, max_relative = 1e-13);
        assert_relative_eq!(
            erf(std::f64::consts::SQRT_2),
            0.954_499_736_103_641_6,
            max_relative = 1e-13
        );
        assert_relative_eq!(erf(3.0), 0.999_977_909_503_001_4, max_relative = 1e-13);
        assert_relative_eq!(erf(-1.0), -0.842_700_792_949_714_9, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_envelope_shape_and_area() {
        let s = seg(10e-9, 48e-9);
        assert!(s.envelope_at(10e-9).abs() < 1e-15);
        assert!(s.envelope_at(58e-9).abs() < 1e-12);
        assert_relative_eq!(s.envelope_at(34e-9), 1.0, max_relative = 1e-14);
        let n = 100_000;
        let h = s.duration / n as f64;
        let num: f64 = (0..n)
            .map(|k| s.envelope_at(s.t_start + (k as f64 + 0.5) * h) * h)
            .sum();
        assert_relative_eq!(num, s.envelope_area(), max_relative = 1e-8);
    }

    #[test]
    fn tiling_covers_duration() {
        let sched = Schedule::new(vec![seg(5.0, 2.0), seg(1.0, 1.0)], vec![3.0], 10.0).unwrap();
        let tiles = sched.tiling();
        assert_eq!(tiles.first().unwrap().start, 0.0);
        assert_eq!(tiles.last().unwrap().end, 10.0);
        for w in tiles.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let busy: f64 = tiles
            .iter()
            .filter(|t| t.segment.is_some())
            .map(|t| t.end - t.start)
            .sum();
        assert_relative_eq!(busy, 3.0);
        assert!(Schedule::new(vec![seg(9.5, 1.0)], vec![], 10.0).is_err());
        assert!(Schedule::new(vec![], vec![11.0], 10.0).is_err());
    }
}
