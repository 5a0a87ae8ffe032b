//! Telemetry log schema, CSV parsing/writing, cleaning, and regression
//! dataset assembly.
//!
//! A log row carries a timestamp, a flight-regime tag, an optional tracker
//! reading (pixel position plus freshness fields), and the 60 onboard
//! channels in canonical order (see [`CHANNEL_NAMES`]).

use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

use crate::mat::Mat;

/// Number of onboard channels in every record.
pub const CHANNELS: usize = 60;

/// Canonical onboard channel names, in file order.
pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "altitude",
    "roll",
    "pitch",
    "yaw",
    "vx",
    "vy",
    "vz",
    "acc_x",
    "acc_y",
    "acc_z",
    "controlState",
    "vbat",
    "vphi_trim",
    "vtheta_trim",
    "vstate",
    "vmisc",
    "vdelta_phi",
    "vdelta_theta",
    "vdelta_psi",
    "vbat_raw",
    "ref_theta",
    "ref_phi",
    "ref_theta_I",
    "ref_phi_I",
    "ref_pitch",
    "ref_roll",
    "ref_yaw",
    "ref_psi",
    "rc_ref_pitch",
    "rc_ref_roll",
    "rc_ref_yaw",
    "rc_ref_gaz",
    "rc_ref_ag",
    "euler_theta",
    "euler_phi",
    "pwm_motor1",
    "pwm_motor2",
    "pwm_motor3",
    "pwm_motor4",
    "pwm_sat_motor1",
    "pwm_sat_motor2",
    "pwm_sat_motor3",
    "pwm_sat_motor4",
    "pwm_u_pitch",
    "pwm_u_roll",
    "pwm_u_yaw",
    "pwm_yaw_u_I",
    "pwm_u_pitch_planif",
    "pwm_u_roll_planif",
    "pwm_u_yaw_planif",
    "pwm_current_motor1",
    "pwm_current_motor2",
    "pwm_current_motor3",
    "pwm_current_motor4",
    "gyros_offsetx",
    "gyros_offsety",
    "gyros_offsetz",
    "trim_angular_rates",
    "trim_theta",
    "trim_phi",
];

/// Columns preceding the onboard block: time, regime, and the six tracker fields.
const PREFIX_COLS: usize = 8;
const TOTAL_COLS: usize = PREFIX_COLS + CHANNELS;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("row {row}: expected {expected} columns, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: value is not finite")]
    NonFiniteValue { row: usize, column: String },
    #[error("header column {position}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("row {row}: time {time} is earlier than the previous record")]
    NonMonotoneTime { row: usize, time: f64 },
    #[error("need at least {needed} usable records, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("invalid stale threshold: must be positive")]
    InvalidThreshold,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Flight regime a record was captured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Hover,
    DirectionalCommand,
    Gust,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Hover => "hover",
            Regime::DirectionalCommand => "directional",
            Regime::Gust => "gust",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "hover" => Some(Regime::Hover),
            "directional" => Some(Regime::DirectionalCommand),
            "gust" => Some(Regime::Gust),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tracker reading attached to a record when the external system saw the drone.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracking {
    /// Position, pixels.
    pub wii_x: f64,
    pub wii_y: f64,
    /// Tracker's own velocity estimate, pixels/second.
    pub wii_xd: f64,
    pub wii_yd: f64,
    /// Age of the reading, seconds.
    pub wii_age: f64,
    /// How many times this reading has been re-served.
    pub wii_staleness: u32,
}

/// One timestamped telemetry frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    /// Seconds since the start of the log.
    pub time: f64,
    pub regime: Regime,
    pub tracking: Option<Tracking>,
    /// The 60 onboard channels, canonical order.
    pub onboard: Vec<f64>,
}

impl TelemetryRecord {
    /// Duplicate key per the cleaning rule: identical (time, tracking).
    fn dup_key(&self) -> (u64, Option<[u64; 5]>, Option<u32>) {
        let t = self.time.to_bits();
        match &self.tracking {
            None => (t, None, None),
            Some(tr) => (
                t,
                Some([
                    tr.wii_x.to_bits(),
                    tr.wii_y.to_bits(),
                    tr.wii_xd.to_bits(),
                    tr.wii_yd.to_bits(),
                    tr.wii_age.to_bits(),
                ]),
                Some(tr.wii_staleness),
            ),
        }
    }
}

/// An ordered, regime-tagged sequence of telemetry records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlightLog {
    pub records: Vec<TelemetryRecord>,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn regime_counts(&self) -> (usize, usize, usize) {
        let mut h = 0;
        let mut d = 0;
        let mut g = 0;
        for r in &self.records {
            match r.regime {
                Regime::Hover => h += 1,
                Regime::DirectionalCommand => d += 1,
                Regime::Gust => g += 1,
            }
        }
        (h, d, g)
    }
}

/// Cleaned per-axis velocity regression data.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    /// N x 60 onboard feature matrix.
    pub features: Mat,
    /// Tracker-derived x velocity, pixels/second.
    pub target_x: Vec<f64>,
    /// Tracker-derived y velocity, pixels/second.
    pub target_y: Vec<f64>,
    /// Record timestamps, seconds.
    pub times: Vec<f64>,
    /// Normalization statistics, populated once a model is fit.
    pub norm: Option<crate::normdiag::NormStats>,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenates several datasets row-wise. Norm stats are dropped.
    pub fn concat(parts: &[RegressionDataset]) -> RegressionDataset {
        let cols = parts.first().map_or(CHANNELS, |p| p.features.cols());
        let mut features = Mat::zeros(0, cols);
        let mut target_x = Vec::new();
        let mut target_y = Vec::new();
        let mut times = Vec::new();
        for p in parts {
            for i in 0..p.len() {
                features.push_row(p.features.row(i));
            }
            target_x.extend_from_slice(&p.target_x);
            target_y.extend_from_slice(&p.target_y);
            times.extend_from_slice(&p.times);
        }
        RegressionDataset {
            features,
            target_x,
            target_y,
            times,
            norm: None,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // `{}` is the shortest representation that round-trips exactly.
    format!("{v}")
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, TelemetryError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        // unparseable cells and NaN/inf both land here: no finite value
        _ => Err(TelemetryError::NonFiniteValue {
            row,
            column: column.to_string(),
        }),
    }
}

/// Parses a telemetry CSV log.
///
/// The header must match the canonical column list exactly. Data rows are
/// validated for column count, finiteness, and non-decreasing timestamps.
pub fn parse_log<R: Read>(reader: R) -> Result<FlightLog, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let expected_header = header_fields();
    let header = rdr.headers()?.clone();
    if header.len() != TOTAL_COLS {
        return Err(TelemetryError::HeaderMismatch {
            position: header.len().min(TOTAL_COLS),
            expected: expected_header
                .get(header.len().min(TOTAL_COLS - 1))
                .unwrap_or(&"")
                .to_string(),
            found: "<missing>".to_string(),
        });
    }
    for (i, (got, want)) in header.iter().zip(expected_header.iter()).enumerate() {
        if got != *want {
            return Err(TelemetryError::HeaderMismatch {
                position: i,
                expected: want.to_string(),
                found: got.to_string(),
            });
        }
    }

    let mut records = Vec::new();
    let mut prev_time = f64::NEG_INFINITY;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 1; // 1-based data row for diagnostics
        if rec.len() != TOTAL_COLS {
            return Err(TelemetryError::MalformedRow {
                row,
                expected: TOTAL_COLS,
                found: rec.len(),
            });
        }

        let time = parse_cell(&rec[0], row, "time")?;
        if time < prev_time {
            return Err(TelemetryError::NonMonotoneTime { row, time });
        }
        prev_time = time;

        let regime = Regime::parse(&rec[1]).ok_or_else(|| TelemetryError::HeaderMismatch {
            position: 1,
            expected: "hover|directional|gust".to_string(),
            found: rec[1].to_string(),
        })?;

        let track_cells: Vec<&str> = (2..PREFIX_COLS).map(|i| &rec[i]).collect();
        let empties = track_cells.iter().filter(|c| c.is_empty()).count();
        let tracking = match empties {
            6 => None,
            0 => {
                let wii_x = parse_cell(track_cells[0], row, "wii_x")?;
                let wii_y = parse_cell(track_cells[1], row, "wii_y")?;
                let wii_xd = parse_cell(track_cells[2], row, "wii_xd")?;
                let wii_yd = parse_cell(track_cells[3], row, "wii_yd")?;
                let wii_age = parse_cell(track_cells[4], row, "wii_age")?;
                let wii_staleness: u32 =
                    track_cells[5]
                        .parse()
                        .map_err(|_| TelemetryError::NonFiniteValue {
                            row,
                            column: "wii_staleness".to_string(),
                        })?;
                if wii_age < 0.0 {
                    return Err(TelemetryError::NonFiniteValue {
                        row,
                        column: "wii_age".to_string(),
                    });
                }
                Some(Tracking {
                    wii_x,
                    wii_y,
                    wii_xd,
                    wii_yd,
                    wii_age,
                    wii_staleness,
                })
            }
            _ => {
                return Err(TelemetryError::MalformedRow {
                    row,
                    expected: TOTAL_COLS,
                    found: TOTAL_COLS - empties,
                })
            }
        };

        let mut onboard = Vec::with_capacity(CHANNELS);
        for (j, name) in CHANNEL_NAMES.iter().enumerate() {
            onboard.push(parse_cell(&rec[PREFIX_COLS + j], row, name)?);
        }

        records.push(TelemetryRecord {
            time,
            regime,
            tracking,
            onboard,
        });
    }

    Ok(FlightLog { records })
}

fn header_fields() -> Vec<&'static str> {
    let mut h = vec![
        "time",
        "regime",
        "wii_x",
        "wii_y",
        "wii_xd",
        "wii_yd",
        "wii_age",
        "wii_staleness",
    ];
    h.extend_from_slice(&CHANNEL_NAMES);
    h
}

/// Writes a log in the canonical CSV format. `parse_log` inverts this losslessly.
pub fn write_log<W: Write>(log: &FlightLog, writer: W) -> Result<(), TelemetryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header_fields())?;
    for r in &log.records {
        let mut fields: Vec<String> = Vec::with_capacity(TOTAL_COLS);
        fields.push(fmt_f64(r.time));
        fields.push(r.regime.as_str().to_string());
        match &r.tracking {
            Some(t) => {
                fields.push(fmt_f64(t.wii_x));
                fields.push(fmt_f64(t.wii_y));
                fields.push(fmt_f64(t.wii_xd));
                fields.push(fmt_f64(t.wii_yd));
                fields.push(fmt_f64(t.wii_age));
                fields.push(t.wii_staleness.to_string());
            }
            None => {
                for _ in 0..6 {
                    fields.push(String::new());
                }
            }
        }
        for v in &r.onboard {
            fields.push(fmt_f64(*v));
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Serializes a log to bytes. Convenience over [`write_log`].
pub fn log_to_bytes(log: &FlightLog) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(log, &mut buf).expect("in-memory write cannot fail");
    buf
}

/// Removes stale records, then collapses consecutive duplicates.
///
/// A record is stale when its tracker reading has `wii_age > stale_threshold`
/// or `wii_staleness > staleness_max`. Two consecutive records are duplicates
/// when their (time, tracking) pairs are identical, regardless of onboard
/// values (duplicates come from tracker frame retransmission). The operation
/// is idempotent and order-preserving.
pub fn clean(
    log: &FlightLog,
    stale_threshold: f64,
    staleness_max: u32,
) -> Result<FlightLog, TelemetryError> {
    if !(stale_threshold > 0.0) {
        return Err(TelemetryError::InvalidThreshold);
    }
    let fresh = log.records.iter().filter(|r| match &r.tracking {
        Some(t) => t.wii_age <= stale_threshold && t.wii_staleness <= staleness_max,
        None => true,
    });

    let mut records: Vec<TelemetryRecord> = Vec::new();
    for r in fresh {
        if let Some(last) = records.last() {
            if last.dup_key() == r.dup_key() {
                continue;
            }
        }
        records.push(r.clone());
    }
    Ok(FlightLog { records })
}

/// Assembles a regression dataset from tracked records.
///
/// Velocity targets are central differences of tracker positions on the
/// (possibly non-uniform) time grid, with one-sided differences at the
/// endpoints; this is exact for linear motion. Features are the onboard
/// channel vectors of the same records.
pub fn derive_velocities(log: &FlightLog) -> Result<RegressionDataset, TelemetryError> {
    let tracked: Vec<&TelemetryRecord> = log
        .records
        .iter()
        .filter(|r| r.tracking.is_some())
        .collect();
    if tracked.len() < 3 {
        return Err(TelemetryError::InsufficientData {
            needed: 3,
            found: tracked.len(),
        });
    }
    for w in tracked.windows(2) {
        if w[1].time <= w[0].time {
            return Err(TelemetryError::NonMonotoneTime {
                row: 0,
                time: w[1].time,
            });
        }
    }

    let n = tracked.len();
    let t: Vec<f64> = tracked.iter().map(|r| r.time).collect();
    let px: Vec<f64> = tracked
        .iter()
        .map(|r| r.tracking.as_ref().unwrap().wii_x)
        .collect();
    let py: Vec<f64> = tracked
        .iter()
        .map(|r| r.tracking.as_ref().unwrap().wii_y)
        .collect();

    let diff = |p: &[f64], i: usize| -> f64 {
        if i == 0 {
            (p[1] - p[0]) / (t[1] - t[0])
        } else if i == n - 1 {
            (p[n - 1] - p[n - 2]) / (t[n - 1] - t[n - 2])
        } else {
            (p[i + 1] - p[i - 1]) / (t[i + 1] - t[i - 1])
        }
    };

    let mut features = Mat::zeros(0, CHANNELS);
    let mut target_x = Vec::with_capacity(n);
    let mut target_y = Vec::with_capacity(n);
    for (i, rec) in tracked.iter().enumerate() {
        features.push_row(&rec.onboard);
        target_x.push(diff(&px, i));
        target_y.push(diff(&py, i));
    }

    Ok(RegressionDataset {
        features,
        target_x,
        target_y,
        times: t,
        norm: None,
    })
}
