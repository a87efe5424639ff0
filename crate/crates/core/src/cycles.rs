//! Timestamp encoders.
//!
//! Two encoders are supported:
//!
//! * **Simple** (STE): one learnable row per timestamp index.
//! * **Cyclic** (CTE): a calendar date is decomposed into its position
//!   inside fourteen nested recurrent cycles (week, month, season, year and
//!   the four decimal digits of the year). Each component indexes its own
//!   embedding table and the time embedding is the sum of the fourteen rows.
//!
//! All component indices are zero-based. Seasons are calendar quarters, so
//! month 0..=2 is season 0 and the longest season (Jul-Sep) has 92 days.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, DenseVector};

/// One of the fourteen recurrent-cycle components, grouped by cycle family:
/// weekly, monthly, seasonal, yearly and global (year digits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleComponent {
    DayOfWeek,
    DayOfMonth,
    WeekOfMonth,
    DayOfSeason,
    WeekOfSeason,
    MonthOfSeason,
    DayOfYear,
    WeekOfYear,
    MonthOfYear,
    SeasonOfYear,
    YearUnits,
    YearDecades,
    YearCenturies,
    YearMillennia,
}

pub const NUM_COMPONENTS: usize = 14;

impl CycleComponent {
    pub const ALL: [CycleComponent; NUM_COMPONENTS] = [
        CycleComponent::DayOfWeek,
        CycleComponent::DayOfMonth,
        CycleComponent::WeekOfMonth,
        CycleComponent::DayOfSeason,
        CycleComponent::WeekOfSeason,
        CycleComponent::MonthOfSeason,
        CycleComponent::DayOfYear,
        CycleComponent::WeekOfYear,
        CycleComponent::MonthOfYear,
        CycleComponent::SeasonOfYear,
        CycleComponent::YearUnits,
        CycleComponent::YearDecades,
        CycleComponent::YearCenturies,
        CycleComponent::YearMillennia,
    ];

    pub fn cardinality(self) -> usize {
        use CycleComponent::*;
        match self {
            DayOfWeek => 7,
            DayOfMonth => 31,
            WeekOfMonth => 5,
            DayOfSeason => 92,
            WeekOfSeason => 14,
            MonthOfSeason => 3,
            DayOfYear => 366,
            WeekOfYear => 53,
            MonthOfYear => 12,
            SeasonOfYear => 4,
            YearUnits | YearDecades | YearCenturies | YearMillennia => 10,
        }
    }

    pub fn name(self) -> &'static str {
        use CycleComponent::*;
        match self {
            DayOfWeek => "day_of_week",
            DayOfMonth => "day_of_month",
            WeekOfMonth => "week_of_month",
            DayOfSeason => "day_of_season",
            WeekOfSeason => "week_of_season",
            MonthOfSeason => "month_of_season",
            DayOfYear => "day_of_year",
            WeekOfYear => "week_of_year",
            MonthOfYear => "month_of_year",
            SeasonOfYear => "season_of_year",
            YearUnits => "year_units",
            YearDecades => "year_decades",
            YearCenturies => "year_centuries",
            YearMillennia => "year_millennia",
        }
    }

    /// Short column label used in the decomposition CSV.
    pub fn column(self) -> &'static str {
        use CycleComponent::*;
        match self {
            DayOfWeek => "dow",
            DayOfMonth => "dom",
            WeekOfMonth => "wom",
            DayOfSeason => "dos",
            WeekOfSeason => "wos",
            MonthOfSeason => "mos",
            DayOfYear => "doy",
            WeekOfYear => "woy",
            MonthOfYear => "moy",
            SeasonOfYear => "soy",
            YearUnits => "g1",
            YearDecades => "g10",
            YearCenturies => "g100",
            YearMillennia => "g1000",
        }
    }

    #[inline]
    pub fn position(self) -> usize {
        self as usize
    }
}

/// `(component, cardinality)` for all fourteen components, in canonical order.
pub fn cycle_cardinalities() -> Vec<(CycleComponent, usize)> {
    CycleComponent::ALL.iter().map(|c| (*c, c.cardinality())).collect()
}

/// The fourteen component indices of one date, in [`CycleComponent::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleIndices(pub [usize; NUM_COMPONENTS]);

impl CycleIndices {
    #[inline]
    pub fn get(&self, component: CycleComponent) -> usize {
        self.0[component.position()]
    }

    pub fn day_of_week(&self) -> usize {
        self.get(CycleComponent::DayOfWeek)
    }
    pub fn day_of_month(&self) -> usize {
        self.get(CycleComponent::DayOfMonth)
    }
    pub fn week_of_month(&self) -> usize {
        self.get(CycleComponent::WeekOfMonth)
    }
    pub fn day_of_season(&self) -> usize {
        self.get(CycleComponent::DayOfSeason)
    }
    pub fn week_of_season(&self) -> usize {
        self.get(CycleComponent::WeekOfSeason)
    }
    pub fn month_of_season(&self) -> usize {
        self.get(CycleComponent::MonthOfSeason)
    }
    pub fn day_of_year(&self) -> usize {
        self.get(CycleComponent::DayOfYear)
    }
    pub fn week_of_year(&self) -> usize {
        self.get(CycleComponent::WeekOfYear)
    }
    pub fn month_of_year(&self) -> usize {
        self.get(CycleComponent::MonthOfYear)
    }
    pub fn season_of_year(&self) -> usize {
        self.get(CycleComponent::SeasonOfYear)
    }
    /// `(units, decades, centuries, millennia)` digits of the year.
    pub fn year_digits(&self) -> (usize, usize, usize, usize) {
        (
            self.get(CycleComponent::YearUnits),
            self.get(CycleComponent::YearDecades),
            self.get(CycleComponent::YearCenturies),
            self.get(CycleComponent::YearMillennia),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (CycleComponent, usize)> + '_ {
        CycleComponent::ALL.iter().map(move |c| (*c, self.get(*c)))
    }
}

/// Decomposes a Gregorian date into its fourteen cycle positions.
///
/// Years outside `0..=9999` have no four-digit decomposition and are rejected.
pub fn decompose_date(date: NaiveDate) -> Result<CycleIndices> {
    let year = date.year();
    if !(0..=9999).contains(&year) {
        return Err(Error::InvalidDate(format!(
            "{date}: year must lie in 0..=9999 for digit decomposition"
        )));
    }
    let year = year as usize;
    let month = date.month0() as usize;
    let day_of_month = date.day0() as usize;
    let day_of_year = date.ordinal0() as usize;

    let season = month / 3;
    let season_start = NaiveDate::from_ymd_opt(date.year(), (season * 3 + 1) as u32, 1)
        .expect("first day of a quarter always exists");
    let day_of_season = (date - season_start).num_days() as usize;

    let mut idx = [0usize; NUM_COMPONENTS];
    let mut put = |c: CycleComponent, v: usize| idx[c.position()] = v;
    put(CycleComponent::DayOfWeek, date.weekday().num_days_from_monday() as usize);
    put(CycleComponent::DayOfMonth, day_of_month);
    put(CycleComponent::WeekOfMonth, day_of_month / 7);
    put(CycleComponent::DayOfSeason, day_of_season);
    put(CycleComponent::WeekOfSeason, day_of_season / 7);
    put(CycleComponent::MonthOfSeason, month % 3);
    put(CycleComponent::DayOfYear, day_of_year);
    put(CycleComponent::WeekOfYear, day_of_year / 7);
    put(CycleComponent::MonthOfYear, month);
    put(CycleComponent::SeasonOfYear, season);
    put(CycleComponent::YearUnits, year % 10);
    put(CycleComponent::YearDecades, (year / 10) % 10);
    put(CycleComponent::YearCenturies, (year / 100) % 10);
    put(CycleComponent::YearMillennia, (year / 1000) % 10);
    Ok(CycleIndices(idx))
}

/// One CSV row: `date,dow,dom,...,g1000`.
pub fn decomposition_csv_header() -> String {
    let mut cols = vec!["date"];
    cols.extend(CycleComponent::ALL.iter().map(|c| c.column()));
    cols.join(",")
}

pub fn decomposition_csv_row(date: NaiveDate, c: &CycleIndices) -> String {
    let mut row = date.format(crate::data::DATE_FORMAT).to_string();
    for v in c.0 {
        row.push(',');
        row.push_str(&v.to_string());
    }
    row
}

/// Learnable time parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeTables {
    /// `|T| x d_t`.
    Simple(DenseMatrix),
    /// Fourteen `cardinality x d_t` tables in [`CycleComponent::ALL`] order.
    Cyclic(Vec<DenseMatrix>),
}

impl TimeTables {
    pub fn zeros_simple(num_timestamps: usize, dim: usize) -> Self {
        TimeTables::Simple(DenseMatrix::zeros(num_timestamps, dim))
    }

    pub fn zeros_cyclic(dim: usize) -> Self {
        TimeTables::Cyclic(
            CycleComponent::ALL
                .iter()
                .map(|c| DenseMatrix::zeros(c.cardinality(), dim))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeTables::Simple(m) => m.cols(),
            TimeTables::Cyclic(tables) => tables.first().map_or(0, DenseMatrix::cols),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        match self {
            TimeTables::Simple(m) => vec![("time".to_string(), m)],
            TimeTables::Cyclic(tables) => CycleComponent::ALL
                .iter()
                .zip(tables)
                .map(|(c, m)| (format!("time.{}", c.name()), m))
                .collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut DenseMatrix)> {
        match self {
            TimeTables::Simple(m) => vec![("time".to_string(), m)],
            TimeTables::Cyclic(tables) => CycleComponent::ALL
                .iter()
                .zip(tables.iter_mut())
                .map(|(c, m)| (format!("time.{}", c.name()), m))
                .collect(),
        }
    }
}

/// Row `t` of a simple time table.
pub fn encode_simple(t: usize, table: &DenseMatrix) -> Result<DenseVector> {
    Ok(DenseVector::new(table.checked_row(t, "simple time table")?.to_vec()))
}

/// Sum of the fourteen component rows selected by `c`.
pub fn encode_cyclic(c: &CycleIndices, tables: &[DenseMatrix]) -> Result<DenseVector> {
    if tables.len() != NUM_COMPONENTS {
        return Err(Error::DimensionMismatch {
            op: "encode_cyclic (table count)",
            expected: NUM_COMPONENTS,
            actual: tables.len(),
        });
    }
    let dim = tables[0].cols();
    let mut out = vec![0.0; dim];
    for ((component, index), table) in c.iter().zip(tables) {
        let row = table.checked_row(index, component.name())?;
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                op: "encode_cyclic (table width)",
                expected: dim,
                actual: row.len(),
            });
        }
        for (o, r) in out.iter_mut().zip(row) {
            *o += r;
        }
    }
    Ok(DenseVector::new(out))
}

/// Timestamp encoder bound to a timestamp vocabulary. Cyclic decompositions
/// are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeEncoder {
    Simple { num_timestamps: usize },
    Cyclic { cycles: Vec<CycleIndices> },
}

impl TimeEncoder {
    pub fn simple(num_timestamps: usize) -> Self {
        TimeEncoder::Simple { num_timestamps }
    }

    /// `dates[t]` is the calendar date represented by timestamp index `t`.
    pub fn cyclic(dates: &[NaiveDate]) -> Result<Self> {
        Ok(TimeEncoder::Cyclic {
            cycles: dates.iter().map(|d| decompose_date(*d)).collect::<Result<_>>()?,
        })
    }

    pub fn num_timestamps(&self) -> usize {
        match self {
            TimeEncoder::Simple { num_timestamps } => *num_timestamps,
            TimeEncoder::Cyclic { cycles } => cycles.len(),
        }
    }

    pub fn zero_tables(&self, dim: usize) -> TimeTables {
        match self {
            TimeEncoder::Simple { num_timestamps } => TimeTables::zeros_simple(*num_timestamps, dim),
            TimeEncoder::Cyclic { .. } => TimeTables::zeros_cyclic(dim),
        }
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t >= self.num_timestamps() {
            return Err(Error::IndexOutOfRange {
                what: "timestamp".into(),
                index: t,
                size: self.num_timestamps(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, t: usize, tables: &TimeTables) -> Result<DenseVector> {
        self.check_index(t)?;
        match (self, tables) {
            (TimeEncoder::Simple { .. }, TimeTables::Simple(table)) => encode_simple(t, table),
            (TimeEncoder::Cyclic { cycles }, TimeTables::Cyclic(tables)) => encode_cyclic(&cycles[t], tables),
            _ => Err(Error::Config("time encoder does not match its parameter tables".into())),
        }
    }

    /// Row `i` of the result encodes `timestamps[i]`.
    pub fn encode_batch(&self, timestamps: &[usize], tables: &TimeTables) -> Result<DenseMatrix> {
        let dim = tables.dim();
        let mut data = Vec::with_capacity(timestamps.len() * dim);
        for &t in timestamps {
            data.extend_from_slice(self.encode(t, tables)?.as_slice());
        }
        DenseMatrix::from_vec(timestamps.len(), dim, data)
    }

    /// Adds `grad` (the gradient of the loss w.r.t. `e_t`) to every row that
    /// contributed to `e_t`.
    pub fn accumulate_grad(&self, t: usize, grad: &[f64], grads: &mut TimeTables) -> Result<()> {
        self.check_index(t)?;
        match (self, grads) {
            (TimeEncoder::Simple { .. }, TimeTables::Simple(table)) => table.add_to_row(t, grad),
            (TimeEncoder::Cyclic { cycles }, TimeTables::Cyclic(tables)) => {
                for ((_, index), table) in cycles[t].iter().zip(tables.iter_mut()) {
                    table.add_to_row(index, grad)?;
                }
                Ok(())
            }
            _ => Err(Error::Config("time encoder does not match its gradient tables".into())),
        }
    }
}
