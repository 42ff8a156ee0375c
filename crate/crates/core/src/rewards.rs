//! Oblivious adversaries: reward paths `t ↦ r(t) ∈ [0,1]ᵈ` fixed before a run.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::legendre::DualVector;
use crate::numerics::TimeGrid;

/// Piecewise-constant rewards on right-open intervals `[b_i, b_{i+1})`.
/// The last interval extends to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSchedule {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl RewardSchedule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(Error::Schedule("schedule must cover t = 0".into()));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::Schedule(format!(
                "{} breakpoints but {} value rows",
                breakpoints.len(),
                values.len()
            )));
        }
        if let Some(w) = breakpoints
            .windows(2)
            .find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Schedule(format!(
                "breakpoints must be strictly ascending: {} then {}",
                w[0], w[1]
            )));
        }
        let d = values[0].len();
        if d == 0 {
            return Err(Error::Schedule("reward vectors must be non-empty".into()));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Schedule(format!(
                    "interval {i} has {} rewards, expected {d}",
                    row.len()
                )));
            }
            check_unit_box(row)
                .map_err(|v| Error::Schedule(format!("interval {i}: reward {v} outside [0, 1]")))?;
        }
        Ok(RewardSchedule {
            breakpoints,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn lookup(&self, t: f64) -> &[f64] {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        &self.values[idx.saturating_sub(1)]
    }

    /// CSV form with header `t,r_1,...,r_d`, readable by [`load_schedule`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for a in 1..=self.dim() {
            let _ = write!(out, ",r_{a}");
        }
        out.push('\n');
        for (b, row) in self.breakpoints.iter().zip(&self.values) {
            let _ = write!(out, "{b:?}");
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_unit_box(r: &[f64]) -> std::result::Result<(), f64> {
    match r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&v) => Err(v),
        None => Ok(()),
    }
}

/// Parses a schedule from CSV text. Row numbers in errors count the header as row 1.
pub fn load_schedule(text: &str) -> Result<RewardSchedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let d = header.len().saturating_sub(1);
    if d == 0 || &header[0] != "t" {
        return Err(Error::Parse {
            row: 1,
            message: "header must be `t,r_1,...,r_d`".into(),
        });
    }
    for (a, name) in header.iter().skip(1).enumerate() {
        if name != format!("r_{}", a + 1) {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected column `r_{}`, found `{name}`", a + 1),
            });
        }
    }

    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let fallback_row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row: fallback_row,
            message: e.to_string(),
        })?;
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(fallback_row);
        if record.len() != d + 1 {
            return Err(Error::Parse {
                row,
                message: format!("expected {} cells, found {}", d + 1, record.len()),
            });
        }
        let mut cells = Vec::with_capacity(d + 1);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric cell `{cell}` in column `{}`", &header[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("non-finite cell `{cell}` in column `{}`", &header[col]),
                });
            }
            cells.push(v);
        }
        let t = cells[0];
        if let Some(&prev) = breakpoints.last() {
            if t <= prev {
                return Err(Error::Parse {
                    row,
                    message: format!("times must be strictly ascending: {t} after {prev}"),
                });
            }
        } else if t != 0.0 {
            return Err(Error::Parse {
                row,
                message: "schedule must cover t = 0".into(),
            });
        }
        let r = cells[1..].to_vec();
        check_unit_box(&r).map_err(|v| Error::Parse {
            row,
            message: format!("reward {v} outside [0, 1]"),
        })?;
        breakpoints.push(t);
        values.push(r);
    }
    if breakpoints.is_empty() {
        return Err(Error::Schedule("schedule must cover t = 0".into()));
    }
    RewardSchedule::new(breakpoints, values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardKind {
    Constant(Vec<f64>),
    PiecewiseConstant(RewardSchedule),
    /// `r_a(t) = ½(1 + sin(ω_a t + φ_a))`
    Sinusoid {
        omega: Vec<f64>,
        phase: Vec<f64>,
    },
}

/// An adversary's reward path on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardPath {
    kind: RewardKind,
    horizon: f64,
}

impl RewardPath {
    pub fn constant(values: Vec<f64>, horizon: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("reward vector must be non-empty".into()));
        }
        check_unit_box(&values).map_err(|v| Error::Domain(format!("reward {v} outside [0, 1]")))?;
        Self::with_kind(RewardKind::Constant(values), horizon)
    }

    pub fn piecewise(schedule: RewardSchedule, horizon: f64) -> Result<Self> {
        if let Some(&last) = schedule.breakpoints().last() {
            if last >= horizon {
                return Err(Error::Schedule(format!(
                    "breakpoint {last} is not before the horizon {horizon}"
                )));
            }
        }
        Self::with_kind(RewardKind::PiecewiseConstant(schedule), horizon)
    }

    pub fn sinusoidal(omega: Vec<f64>, phase: Vec<f64>, horizon: f64) -> Result<Self> {
        if omega.is_empty() || omega.len() != phase.len() {
            return Err(Error::Domain(format!(
                "sinusoid needs matching non-empty omega/phase, got {} and {}",
                omega.len(),
                phase.len()
            )));
        }
        if omega.iter().chain(&phase).any(|v| !v.is_finite()) {
            return Err(Error::Domain("sinusoid parameters must be finite".into()));
        }
        Self::with_kind(RewardKind::Sinusoid { omega, phase }, horizon)
    }

    /// Sinusoid with frequencies `1 + a/d` and phases spread evenly over a period.
    pub fn staggered_sinusoid(d: usize, horizon: f64) -> Result<Self> {
        let omega = (0..d).map(|a| 1.0 + a as f64 / d as f64).collect();
        let phase = (0..d).map(|a| 2.0 * PI * a as f64 / d as f64).collect();
        Self::sinusoidal(omega, phase, horizon)
    }

    pub fn from_file(path: &std::path::Path, horizon: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::piecewise(load_schedule(&text)?, horizon)
    }

    fn with_kind(kind: RewardKind, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(RewardPath { kind, horizon })
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            RewardKind::Constant(v) => v.len(),
            RewardKind::PiecewiseConstant(s) => s.dim(),
            RewardKind::Sinusoid { omega, .. } => omega.len(),
        }
    }

    /// Same path over a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        match &self.kind {
            RewardKind::PiecewiseConstant(s) => Self::piecewise(s.clone(), horizon),
            kind => Self::with_kind(kind.clone(), horizon),
        }
    }

    /// `r(t)` for `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_into(&self, t: f64, out: &mut [f64]) {
        match &self.kind {
            RewardKind::Constant(v) => out.copy_from_slice(v),
            RewardKind::PiecewiseConstant(s) => out.copy_from_slice(s.lookup(t)),
            RewardKind::Sinusoid { omega, phase } => {
                for ((o, w), p) in out.iter_mut().zip(omega).zip(phase) {
                    *o = (0.5 * (1.0 + (w * t + p).sin())).clamp(0.0, 1.0);
                }
            }
        }
    }

    /// Rewards at every left endpoint of `grid`, row-major `steps × d`.
    pub fn tabulate(&self, grid: &TimeGrid) -> Result<RewardTable> {
        self.check_grid(grid)?;
        let d = self.dim();
        let mut data = vec![0.0; grid.steps() * d];
        for (i, row) in data.chunks_exact_mut(d).enumerate() {
            self.eval_into(grid.t(i), row);
        }
        Ok(RewardTable { d, data })
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.horizon() != self.horizon {
            return Err(Error::Domain(format!(
                "grid horizon {} differs from path horizon {}",
                grid.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// `s(t) = ∫₀ᵗ r`, as the left Riemann sum on `grid`. `t` must be a grid point.
    pub fn cumulative(&self, t: f64, grid: &TimeGrid) -> Result<DualVector> {
        self.check_grid(grid)?;
        let n = grid.index_of(t)?;
        let d = self.dim();
        let mut sum = vec![0.0; d];
        let mut r = vec![0.0; d];
        for i in 0..n {
            self.eval_into(grid.t(i), &mut r);
            for (s, v) in sum.iter_mut().zip(&r) {
                *s += v;
            }
        }
        let h = grid.h();
        DualVector::new(sum.into_iter().map(|s| s * h).collect())
    }

    /// A deterministic set of adversaries of dimension `d`: one constant, one
    /// piecewise-constant with a rotating leader, one sinusoid.
    pub fn builtin_suite(d: usize, horizon: f64) -> Result<Vec<(&'static str, RewardPath)>> {
        if d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let constant: Vec<f64> = (0..d)
            .map(|a| {
                if d == 1 {
                    1.0
                } else {
                    1.0 - a as f64 / (d - 1) as f64
                }
            })
            .collect();
        let intervals = 4;
        let breakpoints = (0..intervals)
            .map(|i| horizon * i as f64 / intervals as f64)
            .collect();
        let values = (0..intervals)
            .map(|i| {
                (0..d)
                    .map(|a| {
                        if a == (i * 7 + 1) % d {
                            1.0
                        } else {
                            0.25 * ((a + i) % 3) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(vec![
            ("constant", Self::constant(constant, horizon)?),
            (
                "piecewise",
                Self::piecewise(RewardSchedule::new(breakpoints, values)?, horizon)?,
            ),
            ("sinusoid", Self::staggered_sinusoid(d, horizon)?),
        ])
    }
}

/// Precomputed rewards `r(t_i)` for each grid step, shared across Monte Carlo paths.
#[derive(Debug, Clone)]
pub struct RewardTable {
    d: usize,
    data: Vec<f64>,
}

impl RewardTable {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::Domain("reward table must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: row.len(),
                });
            }
            check_unit_box(row).map_err(|v| Error::Domain(format!("reward {v} outside [0, 1]")))?;
            data.extend_from_slice(row);
        }
        Ok(RewardTable { d, data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Per-coordinate sums of the first `n` rows.
    pub fn column_sums(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for row in self.rows().take(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}
