use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TraceErrorKind};
use crate::fleet::CarbonTrace;
use crate::rng::{stream, Purpose};

pub const TRACE_HEADER: &str = "slot,center,intensity_kg_per_kwh";

/// Slots per day for the diurnal profile.
pub const DIURNAL_PERIOD: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceProfile {
    Constant,
    Diurnal,
    RandomWalk,
}

impl TraceProfile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(Self::Constant),
            "diurnal" => Some(Self::Diurnal),
            "random_walk" => Some(Self::RandomWalk),
            _ => None,
        }
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<CarbonTrace> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_trace(&text)
}

/// Parses the long-format trace CSV. Row numbers in errors are 1-based
/// file lines (the header is line 1). Missing pairs are reported at the
/// line just past the end of the file.
pub fn parse_trace(text: &str) -> Result<CarbonTrace> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Trace {
        row: 1,
        kind: TraceErrorKind::BadHeader(String::new()),
    })?;
    if header.trim() != TRACE_HEADER {
        return Err(Error::Trace {
            row: 1,
            kind: TraceErrorKind::BadHeader(header.to_string()),
        });
    }
    let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
    let (mut n_slots, mut n_centers, mut last_row) = (0, 0, 1);
    for (i, line) in lines {
        let row = i + 1;
        last_row = row;
        if line.trim().is_empty() {
            continue;
        }
        let err = |kind| Error::Trace { row, kind };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(TraceErrorKind::Malformed(format!(
                "expected 3 fields, got {}",
                fields.len()
            ))));
        }
        let slot: usize = fields[0]
            .parse()
            .map_err(|_| err(TraceErrorKind::Malformed(format!("bad slot {:?}", fields[0]))))?;
        let center: usize = fields[1]
            .parse()
            .map_err(|_| err(TraceErrorKind::Malformed(format!("bad center {:?}", fields[1]))))?;
        let value: f64 = fields[2].parse().map_err(|_| {
            err(TraceErrorKind::Malformed(format!(
                "bad intensity {:?}",
                fields[2]
            )))
        })?;
        if !value.is_finite() {
            return Err(err(TraceErrorKind::NonFinite));
        }
        if value < 0.0 {
            return Err(err(TraceErrorKind::Negative(value)));
        }
        if seen.insert((slot, center), value).is_some() {
            return Err(err(TraceErrorKind::Duplicate { slot, center }));
        }
        n_slots = n_slots.max(slot + 1);
        n_centers = n_centers.max(center + 1);
    }
    if seen.is_empty() {
        return Err(Error::EmptyInput("trace has no rows"));
    }
    let mut rows = vec![vec![0.0; n_centers]; n_slots];
    for (t, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *seen.get(&(t, c)).ok_or(Error::Trace {
                row: last_row + 1,
                kind: TraceErrorKind::Missing { slot: t, center: c },
            })?;
        }
    }
    CarbonTrace::new(rows)
}

pub fn format_trace(trace: &CarbonTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (t, row) in trace.rows().iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{t},{c},{v}");
        }
    }
    out
}

/// Synthetic intensities in kg/kWh, deterministic in `seed`.
///
/// - constant: one level per center, drawn from [0.05, 0.6].
/// - diurnal: level in [0.15, 0.5] plus a sinusoid of relative amplitude
///   [0.2, 0.6] with a 24-slot period and per-center phase.
/// - random_walk: starts in [0.15, 0.5], Gaussian steps of 0.03, clipped at 0.
pub fn synth_trace(
    n_centers: usize,
    horizon: usize,
    profile: TraceProfile,
    seed: u64,
) -> Result<CarbonTrace> {
    if n_centers == 0 || horizon == 0 {
        return Err(Error::InvalidParameter(
            "synthetic trace needs N >= 1 and T >= 1".into(),
        ));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n_centers);
    for c in 0..n_centers {
        let mut rng = stream(seed, Purpose::Trace, &[profile as u64, c as u64]);
        let col = match profile {
            TraceProfile::Constant => vec![rng.random_range(0.05..0.6); horizon],
            TraceProfile::Diurnal => {
                let level = rng.random_range(0.15..0.5);
                let amp = level * rng.random_range(0.2..0.6);
                let phase = rng.random_range(0.0..DIURNAL_PERIOD as f64);
                let day: Vec<f64> = (0..DIURNAL_PERIOD)
                    .map(|h| {
                        let x = std::f64::consts::TAU * (h as f64 + phase) / DIURNAL_PERIOD as f64;
                        level + amp * x.sin()
                    })
                    .collect();
                (0..horizon).map(|t| day[t % DIURNAL_PERIOD]).collect()
            }
            TraceProfile::RandomWalk => {
                let step = Normal::new(0.0, 0.03).expect("valid normal");
                let mut x: f64 = rng.random_range(0.15..0.5);
                (0..horizon)
                    .map(|_| {
                        let v = x;
                        x = (x + step.sample(&mut rng)).max(0.0);
                        v
                    })
                    .collect()
            }
        };
        cols.push(col);
    }
    CarbonTrace::new(
        (0..horizon)
            .map(|t| cols.iter().map(|c| c[t]).collect())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_err(text: &str) -> (usize, TraceErrorKind) {
        match parse_trace(text) {
            Err(Error::Trace { row, kind }) => (row, kind),
            other => panic!("expected trace error, got {other:?}"),
        }
    }

    #[test]
    fn parses_two_by_two() {
        let t =
            parse_trace("slot,center,intensity_kg_per_kwh\n0,0,0.1\n0,1,0.2\n1,1,0.4\n1,0,0.3\n").unwrap();
        assert_eq!(t.rows(), &[vec![0.1, 0.2], vec![0.3, 0.4]]);
    }

    #[test]
    fn distinct_errors_with_rows() {
        let h = "slot,center,intensity_kg_per_kwh\n";
        assert_eq!(
            trace_err(&format!("{h}0,0,0.1\n0,0,0.2\n")),
            (3, TraceErrorKind::Duplicate { slot: 0, center: 0 })
        );
        assert_eq!(
            trace_err(&format!("{h}0,0,-1\n")),
            (2, TraceErrorKind::Negative(-1.0))
        );
        assert_eq!(
            trace_err(&format!("{h}0,0,NaN\n")),
            (2, TraceErrorKind::NonFinite)
        );
        assert!(matches!(
            trace_err(&format!("{h}0,0\n")),
            (2, TraceErrorKind::Malformed(_))
        ));
        assert!(matches!(
            trace_err(&format!("{h}0,x,0.1\n")),
            (2, TraceErrorKind::Malformed(_))
        ));
        assert_eq!(
            trace_err(&format!("{h}0,0,0.1\n0,1,0.1\n1,1,0.1\n")),
            (5, TraceErrorKind::Missing { slot: 1, center: 0 })
        );
        assert!(matches!(
            trace_err("a,b,c\n0,0,1\n"),
            (1, TraceErrorKind::BadHeader(_))
        ));
    }

    #[test]
    fn format_round_trip() {
        let t = synth_trace(3, 30, TraceProfile::RandomWalk, 4).unwrap();
        assert_eq!(parse_trace(&format_trace(&t)).unwrap(), t);
    }

    #[test]
    fn profiles() {
        let c = synth_trace(4, 10, TraceProfile::Constant, 1).unwrap();
        for i in 0..4 {
            assert!(c.rows().iter().all(|r| r[i] == c.rows()[0][i]));
        }
        let d = synth_trace(5, 72, TraceProfile::Diurnal, 2).unwrap();
        for t in 0..48 {
            assert_eq!(d.rows()[t], d.rows()[t + 24]);
        }
        assert!(d.rows().iter().flatten().all(|v| *v > 0.0));
        let a = synth_trace(3, 50, TraceProfile::RandomWalk, 7).unwrap();
        assert_eq!(a, synth_trace(3, 50, TraceProfile::RandomWalk, 7).unwrap());
        assert_ne!(a, synth_trace(3, 50, TraceProfile::RandomWalk, 8).unwrap());
        assert!(a.rows().iter().flatten().all(|v| *v >= 0.0));
    }
}
