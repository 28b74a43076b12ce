//! Station catalog files: one `name,lat_deg,lon_deg,alt_km` record per line.
//!
//! Blank lines and everything after a `#` are ignored. Names may contain
//! spaces but not commas.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{GeometryError, GroundStation};

const DEFAULT_CATALOG: &str = include_str!("../data/stations.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("line {line}: expected 4 comma-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty station name")]
    EmptyName { line: usize },
    #[error("line {line}: cannot parse {field} from {text:?}")]
    Number { line: usize, field: &'static str, text: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: GeometryError },
    #[error("line {line}: duplicate station {name:?}")]
    Duplicate { line: usize, name: String },
    #[error("unknown station {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StationCatalog {
    stations: Vec<GroundStation>,
}

impl StationCatalog {
    /// Tenerife OGS, Calar Alto, Matera and Sierra Nevada.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut stations: Vec<GroundStation> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(CatalogError::FieldCount { line, found: fields.len() });
            }
            if fields[0].is_empty() {
                return Err(CatalogError::EmptyName { line });
            }
            let num = |i: usize, field: &'static str| {
                fields[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| CatalogError::Number {
                    line,
                    field,
                    text: fields[i].to_string(),
                })
            };
            let station = GroundStation::new(fields[0], num(1, "latitude")?, num(2, "longitude")?, num(3, "altitude")?)
                .map_err(|source| CatalogError::Invalid { line, source })?;
            if stations.iter().any(|s| s.name == station.name) {
                return Err(CatalogError::Duplicate { line, name: station.name });
            }
            stations.push(station);
        }
        Ok(Self { stations })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# name,lat_deg,lon_deg,alt_km\n");
        for s in &self.stations {
            let _ = writeln!(out, "{},{},{},{}", s.name, s.latitude_deg, s.longitude_deg, s.altitude_km);
        }
        out
    }

    /// Case-insensitive lookup by exact name.
    pub fn get(&self, name: &str) -> Result<&GroundStation, CatalogError> {
        self.stations
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| CatalogError::Unknown(name.to_string()))
    }

    pub fn stations(&self) -> &[GroundStation] {
        &self.stations
    }
}
