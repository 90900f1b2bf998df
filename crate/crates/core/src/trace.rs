//! Time-indexed channel traces: the standardized data that scoring rules
//! consume, parsed from and serialized to a fixed CSV contract.
//!
//! The CSV contract, bit-exact:
//!   * line 1 is exactly `# trace v1`;
//!   * line 2 is the header `t,<channel>[,<channel>...]` where a channel
//!     column is `name:actor` or `name:actorA:actorB`;
//!   * subsequent lines are decimal numbers with `.` separator, LF line
//!     endings, no trailing comma;
//!   * the literal token `inf` is allowed only in `ttc` columns.
//!
//! Traces are fixed-step: the nominal step is inferred from the first two
//! rows and every step must match it to within 1e-6 s. Channel units are
//! m/s for `speed` and `closing_speed`, m for `pos` (1-D station
//! coordinate) and `gap`, seconds for `ttc`, and `collision` is 0 or 1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const TRACE_MAGIC: &str = "# trace v1";

/// Nominal step used when a trace is too short to infer one.
pub const DEFAULT_DT: f64 = 0.05;

/// Tolerance on per-row deviation from the nominal step, seconds.
pub const DT_TOLERANCE: f64 = 1e-6;

/// Closing speeds at or below this (m/s) count as "not closing" for TTC.
pub const TTC_EPSILON: f64 = 1e-6;

/// A named channel over one actor (`speed:ego`) or an ordered actor pair
/// (`gap:ego:lead`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub name: String,
    pub actors: Vec<String>,
}

impl ChannelId {
    pub fn single(name: &str, actor: &str) -> ChannelId {
        ChannelId { name: name.into(), actors: vec![actor.into()] }
    }

    pub fn pair(name: &str, a: &str, b: &str) -> ChannelId {
        ChannelId { name: name.into(), actors: vec![a.into(), b.into()] }
    }

    /// Declared arity of the built-in channel kinds, if this is one.
    fn builtin_arity(name: &str) -> Option<usize> {
        match name {
            "speed" | "pos" => Some(1),
            "gap" | "closing_speed" | "ttc" | "collision" => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for a in &self.actors {
            write!(f, ":{a}")?;
        }
        Ok(())
    }
}

impl FromStr for ChannelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or("").to_string();
        let actors: Vec<String> = parts.map(str::to_string).collect();
        if name.is_empty() {
            return Err(format!("empty channel name in `{s}`"));
        }
        if actors.is_empty() || actors.len() > 2 || actors.iter().any(String::is_empty) {
            return Err(format!(
                "channel column `{s}` must be name:actor or name:actorA:actorB"
            ));
        }
        if let Some(arity) = ChannelId::builtin_arity(&name) {
            if actors.len() != arity {
                return Err(format!(
                    "channel `{name}` takes {arity} actor(s), `{s}` names {}",
                    actors.len()
                ));
            }
        }
        Ok(ChannelId { name, actors })
    }
}

/// A fixed-step, column-major trace. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    dt_nominal: f64,
    time: Vec<f64>,
    columns: Vec<(ChannelId, Vec<f64>)>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad magic line: expected `{TRACE_MAGIC}`")]
    BadMagic,
    #[error("row {row}, column {column}: {message}")]
    Cell { row: usize, column: usize, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("time not strictly increasing at row {row}")]
    TimeNotIncreasing { row: usize },
    #[error("row {row}: time step {step:.9} deviates from nominal {nominal:.9}")]
    IrregularStep { row: usize, step: f64, nominal: f64 },
    #[error("collision channel must be non-decreasing ({channel} at row {row})")]
    CollisionNotMonotone { channel: String, row: usize },
    #[error("collision channel {channel} has value {value} at row {row}; must be 0 or 1")]
    CollisionNotBinary { channel: String, row: usize, value: f64 },
    #[error("missing source channel {0}")]
    MissingChannel(String),
    #[error("negative gap {0}")]
    NegativeGap(f64),
    #[error("cannot serialize non-finite value {value} in column {column}")]
    NonFiniteValue { column: String, value: f64 },
}

impl Trace {
    /// Build and validate a trace from parallel columns.
    pub fn new(
        dt_nominal: f64,
        time: Vec<f64>,
        columns: Vec<(ChannelId, Vec<f64>)>,
    ) -> Result<Trace, TraceError> {
        let tr = Trace { dt_nominal, time, columns };
        tr.validate()?;
        Ok(tr)
    }

    fn validate(&self) -> Result<(), TraceError> {
        if !(self.dt_nominal > 0.0) {
            return Err(TraceError::Header("nominal time step must be positive".into()));
        }
        for (id, values) in &self.columns {
            if values.len() != self.time.len() {
                return Err(TraceError::Header(format!(
                    "channel {id} has {} values for {} rows",
                    values.len(),
                    self.time.len()
                )));
            }
        }
        for i in 1..self.time.len() {
            let step = self.time[i] - self.time[i - 1];
            if step <= 0.0 {
                // Rows are 1-based in diagnostics, plus the two header lines
                // would make CSV locations confusing; report the data row.
                return Err(TraceError::TimeNotIncreasing { row: i + 1 });
            }
            if (step - self.dt_nominal).abs() > DT_TOLERANCE {
                return Err(TraceError::IrregularStep {
                    row: i + 1,
                    step,
                    nominal: self.dt_nominal,
                });
            }
        }
        for (id, values) in &self.columns {
            if id.name == "collision" {
                let mut prev = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    if v != 0.0 && v != 1.0 {
                        return Err(TraceError::CollisionNotBinary {
                            channel: id.to_string(),
                            row: i + 1,
                            value: v,
                        });
                    }
                    if v < prev {
                        return Err(TraceError::CollisionNotMonotone {
                            channel: id.to_string(),
                            row: i + 1,
                        });
                    }
                    prev = v;
                }
            }
        }
        Ok(())
    }

    pub fn dt_nominal(&self) -> f64 {
        self.dt_nominal
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelId> {
        self.columns.iter().map(|(id, _)| id)
    }

    pub fn channel(&self, id: &ChannelId) -> Option<&[f64]> {
        self.columns.iter().find(|(cid, _)| cid == id).map(|(_, v)| v.as_slice())
    }

    pub fn has_channel(&self, id: &ChannelId) -> bool {
        self.channel(id).is_some()
    }

    /// Duration of row `i`: the step to the next row, or the nominal step
    /// for the last row.
    pub fn row_duration(&self, i: usize) -> f64 {
        if i + 1 < self.time.len() {
            self.time[i + 1] - self.time[i]
        } else {
            self.dt_nominal
        }
    }

    /// Total logged duration: the sum of all row durations.
    pub fn total_duration(&self) -> f64 {
        if self.time.is_empty() {
            0.0
        } else {
            (self.time[self.time.len() - 1] - self.time[0]) + self.dt_nominal
        }
    }
}

/// Time to collision: `gap / closing_speed` when closing faster than
/// [`TTC_EPSILON`], infinite when holding or opening.
pub fn ttc(gap_m: f64, closing_speed_mps: f64) -> Result<f64, TraceError> {
    if gap_m < 0.0 {
        return Err(TraceError::NegativeGap(gap_m));
    }
    if closing_speed_mps > TTC_EPSILON {
        Ok(gap_m / closing_speed_mps)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Parse a trace CSV document.
pub fn parse_trace(input: &str) -> Result<Trace, TraceError> {
    let mut lines = input.lines();
    if lines.next() != Some(TRACE_MAGIC) {
        return Err(TraceError::BadMagic);
    }
    let header = lines.next().ok_or_else(|| TraceError::Header("missing header line".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("t") {
        return Err(TraceError::Header("first column must be `t`".into()));
    }
    let mut ids: Vec<ChannelId> = Vec::new();
    for col in cols {
        let id: ChannelId = col.parse().map_err(TraceError::Header)?;
        if ids.contains(&id) {
            return Err(TraceError::Header(format!("duplicate channel column `{id}`")));
        }
        ids.push(id);
    }

    let mut time = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1; // 1-based data row for diagnostics
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ids.len() + 1 {
            return Err(TraceError::Cell {
                row,
                column: cells.len().min(ids.len() + 1),
                message: format!("expected {} cells, found {}", ids.len() + 1, cells.len()),
            });
        }
        for (col_idx, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(TraceError::Cell {
                    row,
                    column: col_idx + 1,
                    message: "missing cell".into(),
                });
            }
            let value = if *cell == "inf" {
                if col_idx == 0 || ids[col_idx - 1].name != "ttc" {
                    return Err(TraceError::Cell {
                        row,
                        column: col_idx + 1,
                        message: "`inf` is only allowed in ttc columns".into(),
                    });
                }
                f64::INFINITY
            } else {
                let v: f64 = cell.parse().map_err(|_| TraceError::Cell {
                    row,
                    column: col_idx + 1,
                    message: format!("non-numeric cell `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(TraceError::Cell {
                        row,
                        column: col_idx + 1,
                        message: format!("non-finite cell `{cell}`"),
                    });
                }
                v
            };
            if col_idx == 0 {
                time.push(value);
            } else {
                columns[col_idx - 1].push(value);
            }
        }
    }

    let dt_nominal = if time.len() >= 2 { time[1] - time[0] } else { DEFAULT_DT };
    Trace::new(dt_nominal, time, ids.into_iter().zip(columns).collect())
}

/// Serialize a trace to the CSV contract. Inverse of [`parse_trace`] for
/// traces of at least two rows.
pub fn write_trace(tr: &Trace) -> Result<String, TraceError> {
    let mut out = String::new();
    out.push_str(TRACE_MAGIC);
    out.push('\n');
    out.push('t');
    for (id, _) in &tr.columns {
        out.push(',');
        out.push_str(&id.to_string());
    }
    out.push('\n');
    for i in 0..tr.time.len() {
        out.push_str(&format!("{}", tr.time[i]));
        for (id, values) in &tr.columns {
            let v = values[i];
            out.push(',');
            if v.is_finite() {
                out.push_str(&format!("{v}"));
            } else if v == f64::INFINITY && id.name == "ttc" {
                out.push_str("inf");
            } else {
                return Err(TraceError::NonFiniteValue { column: id.to_string(), value: v });
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Which pairwise channels to derive and the vehicle lengths to subtract
/// from centre-to-centre distances.
#[derive(Debug, Clone, Default)]
pub struct DeriveSpec {
    /// Ordered actor pairs, e.g. `("ego", "lead")`.
    pub pairs: Vec<(String, String)>,
    /// Vehicle length per actor, metres; absent means 0.
    pub vehicle_lengths: BTreeMap<String, f64>,
}

impl DeriveSpec {
    pub fn pair(a: &str, b: &str) -> DeriveSpec {
        DeriveSpec { pairs: vec![(a.into(), b.into())], vehicle_lengths: BTreeMap::new() }
    }

    pub fn with_length(mut self, actor: &str, length_m: f64) -> DeriveSpec {
        self.vehicle_lengths.insert(actor.into(), length_m);
        self
    }
}

/// Derive `gap`, `closing_speed`, `ttc` and `collision` for each requested
/// actor pair from their `pos` and `speed` channels.
///
/// Channels already present are left untouched, which makes the operation
/// idempotent. The gap is the centre distance minus both half-lengths,
/// clamped at zero; collision latches at 1 from the first zero-gap row.
pub fn derive_channels(tr: &Trace, spec: &DeriveSpec) -> Result<Trace, TraceError> {
    let mut columns = tr.columns.clone();
    for (a, b) in &spec.pairs {
        let pos_a = tr
            .channel(&ChannelId::single("pos", a))
            .ok_or_else(|| TraceError::MissingChannel(format!("pos:{a}")))?;
        let pos_b = tr
            .channel(&ChannelId::single("pos", b))
            .ok_or_else(|| TraceError::MissingChannel(format!("pos:{b}")))?;
        let speed_a = tr
            .channel(&ChannelId::single("speed", a))
            .ok_or_else(|| TraceError::MissingChannel(format!("speed:{a}")))?;
        let speed_b = tr
            .channel(&ChannelId::single("speed", b))
            .ok_or_else(|| TraceError::MissingChannel(format!("speed:{b}")))?;

        let half_lengths = 0.5 * spec.vehicle_lengths.get(a).copied().unwrap_or(0.0)
            + 0.5 * spec.vehicle_lengths.get(b).copied().unwrap_or(0.0);

        let n = tr.len();
        let mut gap = Vec::with_capacity(n);
        let mut closing = Vec::with_capacity(n);
        let mut ttc_col = Vec::with_capacity(n);
        let mut collision = Vec::with_capacity(n);
        let mut collided = 0.0f64;
        for i in 0..n {
            let centre_dist = (pos_b[i] - pos_a[i]).abs();
            let g = (centre_dist - half_lengths).max(0.0);
            // Rate at which the gap shrinks: positive when closing. The
            // sign follows the station ordering of the pair.
            let c = if pos_b[i] >= pos_a[i] {
                speed_a[i] - speed_b[i]
            } else {
                speed_b[i] - speed_a[i]
            };
            if g == 0.0 {
                collided = 1.0;
            }
            gap.push(g);
            closing.push(c);
            ttc_col.push(ttc(g, c)?);
            collision.push(collided);
        }

        for (id, values) in [
            (ChannelId::pair("gap", a, b), gap),
            (ChannelId::pair("closing_speed", a, b), closing),
            (ChannelId::pair("ttc", a, b), ttc_col),
            (ChannelId::pair("collision", a, b), collision),
        ] {
            if !columns.iter().any(|(cid, _)| *cid == id) {
                columns.push((id, values));
            }
        }
    }
    Trace::new(tr.dt_nominal, tr.time.clone(), columns)
}
