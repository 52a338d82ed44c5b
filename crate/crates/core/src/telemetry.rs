//! Append-only telemetry log with CSV and JSON exports.
//!
//! Every table has a fixed header beginning with `date,time`. Rows carry the
//! virtual time they were recorded at; the calendar columns are derived from
//! the run epoch so two replays of one scenario export identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{SimConfig, VirtualTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Streetlight,
    HomeAlarm,
    HomeAppliance,
    Door,
    Traffic,
    Plate,
    PrivateParking,
    SmartParking,
    InfoEnv,
    InfoNotice,
    Accident,
}

impl Table {
    pub const ALL: [Table; 11] = [
        Table::Streetlight,
        Table::HomeAlarm,
        Table::HomeAppliance,
        Table::Door,
        Table::Traffic,
        Table::Plate,
        Table::PrivateParking,
        Table::SmartParking,
        Table::InfoEnv,
        Table::InfoNotice,
        Table::Accident,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Streetlight => "streetlight",
            Table::HomeAlarm => "home_alarm",
            Table::HomeAppliance => "home_appliance",
            Table::Door => "door",
            Table::Traffic => "traffic",
            Table::Plate => "plate",
            Table::PrivateParking => "private_parking",
            Table::SmartParking => "smart_parking",
            Table::InfoEnv => "info_env",
            Table::InfoNotice => "info_notice",
            Table::Accident => "accident",
        }
    }

    /// Full header, including the leading `date,time`.
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Table::Streetlight => &[
                "date", "time", "light1", "light2", "light3", "light4", "light5", "light6", "light7", "light8",
            ],
            Table::HomeAlarm => &["date", "time", "thief_alarm", "fire_alarm"],
            Table::HomeAppliance => &["date", "time", "appliance", "new_state"],
            Table::Door => &["date", "time", "result"],
            Table::Traffic => &["date", "time", "road", "signal"],
            Table::Plate => &["date", "time", "road", "plate", "verdict"],
            Table::PrivateParking => &["date", "time", "card_result"],
            Table::SmartParking => &["date", "time", "slot", "occupied"],
            Table::InfoEnv => &["date", "time", "temp_c", "rh_pct"],
            Table::InfoNotice => &["date", "time", "text"],
            Table::Accident => &["date", "time", "kind", "lat", "lon"],
        }
    }

    /// Number of columns after `date,time`.
    pub fn value_arity(self) -> usize {
        self.header().len() - 2
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown table `{0}`")]
pub struct UnknownTable(pub String);

impl FromStr for Table {
    type Err = UnknownTable;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Table::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownTable(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("{table} expects {expected} values after date,time, got {got}")]
    SchemaMismatch { table: Table, expected: usize, got: usize },
    #[error("{table} row at {at} ms is earlier than the previous row")]
    OutOfOrder { table: Table, at: VirtualTime },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TelemetryRow {
    pub table: Table,
    pub at: VirtualTime,
    pub date: String,
    pub time: String,
    pub values: Vec<String>,
}

impl TelemetryRow {
    /// Cells in header order.
    pub fn cells(&self) -> impl Iterator<Item = &str> {
        [self.date.as_str(), self.time.as_str()]
            .into_iter()
            .chain(self.values.iter().map(String::as_str))
    }
}

pub fn format_date(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d").to_string()
}

pub fn format_time(t: NaiveDateTime) -> String {
    t.format("%H:%M:%S%.3f").to_string()
}

#[derive(Debug)]
pub struct Telemetry {
    config: SimConfig,
    tables: BTreeMap<Table, Vec<TelemetryRow>>,
}

impl Telemetry {
    pub fn new(config: SimConfig) -> Self {
        Telemetry {
            config,
            tables: Table::ALL.into_iter().map(|t| (t, Vec::new())).collect(),
        }
    }

    pub fn record(
        &mut self,
        table: Table,
        at: VirtualTime,
        values: Vec<String>,
    ) -> Result<&TelemetryRow, TelemetryError> {
        if values.len() != table.value_arity() {
            return Err(TelemetryError::SchemaMismatch {
                table,
                expected: table.value_arity(),
                got: values.len(),
            });
        }
        let rows = self.tables.get_mut(&table).expect("all tables present");
        if rows.last().is_some_and(|last| last.at > at) {
            return Err(TelemetryError::OutOfOrder { table, at });
        }
        let wall = self.config.wall_clock(at);
        rows.push(TelemetryRow {
            table,
            at,
            date: format_date(wall),
            time: format_time(wall),
            values,
        });
        Ok(rows.last().expect("just pushed"))
    }

    pub fn rows(&self, table: Table) -> &[TelemetryRow] {
        &self.tables[&table]
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One table as RFC 4180 CSV with LF line endings.
    pub fn table_csv(&self, table: Table) -> Result<Vec<u8>, TelemetryError> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(table.header())?;
        for row in self.rows(table) {
            writer.write_record(row.cells())?;
        }
        writer
            .into_inner()
            .map_err(|e| TelemetryError::Csv(e.into_error().into()))
    }

    /// Writes `<table>.csv` for every table into `dir`.
    pub fn export_csv(&self, dir: &Path) -> Result<Vec<PathBuf>, TelemetryError> {
        fs::create_dir_all(dir).map_err(|source| TelemetryError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for table in Table::ALL {
            let path = dir.join(format!("{}.csv", table.name()));
            fs::write(&path, self.table_csv(table)?).map_err(|source| TelemetryError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }

    /// Rows of one table as JSON objects keyed by column name.
    pub fn table_json(&self, table: Table) -> serde_json::Value {
        let rows = self
            .rows(table)
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, serde_json::Value> = table
                    .header()
                    .iter()
                    .zip(row.cells())
                    .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    /// `{table: [rows...]}` for every table, empty tables included.
    pub fn export_json(&self) -> serde_json::Value {
        let obj = Table::ALL
            .into_iter()
            .map(|t| (t.name().to_string(), self.table_json(t)))
            .collect();
        serde_json::Value::Object(obj)
    }
}
