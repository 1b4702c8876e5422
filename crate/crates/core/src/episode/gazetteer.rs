use std::io;

use thiserror::Error;

use crate::geo::{haversine_m, LatLon, Position};

pub const DEFAULT_MATCH_RADIUS_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    pub location: LatLon,
    pub address: String,
    pub label: Option<String>,
}

/// Offline address lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    pub match_radius_m: f64,
}

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("gazetteer row {row}: {reason}")]
    Row { row: usize, reason: String },
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>, match_radius_m: f64) -> Self {
        Gazetteer {
            entries,
            match_radius_m,
        }
    }

    pub fn empty() -> Self {
        Gazetteer::new(Vec::new(), DEFAULT_MATCH_RADIUS_M)
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    /// Reads `lat,lon,address,label`; an empty label means none.
    pub fn read<R: io::Read>(reader: R, match_radius_m: f64) -> Result<Self, GazetteerError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let bad = |reason: String| GazetteerError::Row { row, reason };
            let num = |k: usize| {
                rec.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("column {} is not a number", k + 1)))
            };
            let location = LatLon::new(num(0)?, num(1)?).map_err(|e| bad(e.to_string()))?;
            let address = rec.get(2).unwrap_or("").to_string();
            if address.is_empty() {
                return Err(bad("empty address".into()));
            }
            let label = rec.get(3).filter(|s| !s.is_empty()).map(str::to_string);
            entries.push(GazetteerEntry {
                location,
                address,
                label,
            });
        }
        Ok(Gazetteer::new(entries, match_radius_m))
    }

    pub fn write<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["lat", "lon", "address", "label"])?;
        for e in &self.entries {
            wtr.write_record([
                format!("{:.7}", e.location.lat()),
                format!("{:.7}", e.location.lon()),
                e.address.clone(),
                e.label.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Nearest entry within the match radius; the earlier entry wins a tie.
pub fn reverse_geocode<P: Position>(pos: P, g: &Gazetteer) -> Option<&GazetteerEntry> {
    let pos = pos.lat_lon();
    let mut best: Option<(f64, &GazetteerEntry)> = None;
    for e in &g.entries {
        let d = haversine_m(pos, e.location);
        if d <= g.match_radius_m && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, e));
        }
    }
    best.map(|(_, e)| e)
}
