//! Dataset files.
//!
//! The canonical form is a single text document holding three comma-separated
//! tables, each introduced by a bracketed section header:
//!
//! ```text
//! [meta]
//! key,value
//! cycle,1
//! [units]
//! id,kind,vulnerability,status,cost,time,priority,direct_benefit,x,y
//! h1,Hospitals,0,0,50000,12,10,2000,,
//! [roads]
//! from,to,status,length,cost,time,priority,direct_benefit
//! h1,s1,0,1.5,8000,2,8,0
//! [dependencies]
//! blocked,blocker
//! h1,h1-s1
//! ```
//!
//! Optional columns (`status`, `priority` on units; `cost`, `time`,
//! `priority`, `direct_benefit` on roads; `x`, `y`) may be left empty or
//! omitted. A missing unit status is derived from the vulnerability and a
//! missing priority from the kind. The same content is accepted as a JSON
//! document with `cycle`, `units`, `roads` and `dependencies` members, or as
//! a directory holding `units.csv`, `roads.csv` and `dependencies.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    derive_status, priority_for_kind, Dataset, DatasetError, DependencyEdge, ItemId, Location,
    RoadEdge, RowLines, Status, Unit, UnitKind, ROAD_DEFAULT_PRIORITY,
};

#[derive(Debug, Deserialize, Serialize)]
struct UnitRow {
    id: String,
    kind: String,
    vulnerability: i64,
    #[serde(default)]
    status: Option<u8>,
    cost: f64,
    time: f64,
    #[serde(default)]
    priority: Option<u8>,
    direct_benefit: u64,
    #[serde(default)]
    x: Option<f64>,
    #[serde(default)]
    y: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RoadRow {
    from: String,
    to: String,
    status: u8,
    length: f64,
    #[serde(default)]
    cost: Option<f64>,
    #[serde(default)]
    time: Option<f64>,
    #[serde(default)]
    priority: Option<u8>,
    #[serde(default)]
    direct_benefit: Option<u64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct DependencyRow {
    blocked: String,
    blocker: String,
}

#[derive(Debug, Deserialize)]
struct JsonDocument {
    #[serde(default = "one")]
    cycle: u32,
    units: Vec<UnitRow>,
    #[serde(default)]
    roads: Vec<RoadRow>,
    #[serde(default)]
    dependencies: Vec<DependencyRow>,
}

fn one() -> u32 {
    1
}

/// File name of the snapshot taken at the start of `cycle`.
pub fn snapshot_file_name(cycle: u32) -> String {
    format!("cycle-{cycle}.dataset")
}

/// Loads a dataset file (sectioned CSV or JSON) or a directory of CSV tables.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    if path.is_dir() {
        let read = |name: &str, required: bool| -> Result<Option<String>, DatasetError> {
            let p = path.join(name);
            match fs::read_to_string(&p) {
                Ok(s) => Ok(Some(s)),
                Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(source) => Err(DatasetError::Io {
                    path: p.display().to_string(),
                    source,
                }),
            }
        };
        let mut doc = String::new();
        if let Some(meta) = read("meta.csv", false)? {
            doc.push_str("[meta]\n");
            doc.push_str(&meta);
            doc.push('\n');
        }
        for (table, required) in [("units", true), ("roads", false), ("dependencies", false)] {
            if let Some(body) = read(&format!("{table}.csv"), required)? {
                let _ = writeln!(doc, "[{table}]");
                doc.push_str(&body);
                doc.push('\n');
            }
        }
        return parse_dataset(&doc);
    }
    let text = fs::read_to_string(path).map_err(io)?;
    parse_dataset(&text)
}

/// Parses dataset text in either accepted document form.
pub fn parse_dataset(text: &str) -> Result<Dataset, DatasetError> {
    if text.trim_start().starts_with('{') {
        return parse_json(text);
    }
    parse_sections(text)
}

fn parse_json(text: &str) -> Result<Dataset, DatasetError> {
    let doc: JsonDocument = serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        at: Location::new("document", Some(e.line()), None),
        message: e.to_string(),
    })?;
    let units = doc
        .units
        .into_iter()
        .enumerate()
        .map(|(i, r)| unit_from_row(r, i + 1))
        .collect::<Result<_, _>>()?;
    let roads = doc
        .roads
        .into_iter()
        .enumerate()
        .map(|(i, r)| road_from_row(r, i + 1))
        .collect::<Result<_, _>>()?;
    let deps = doc
        .dependencies
        .into_iter()
        .map(|d| DependencyEdge::new(d.blocked, d.blocker))
        .collect();
    Dataset::new(units, roads, deps, doc.cycle)
}

struct Section<'a> {
    name: String,
    header_line: usize,
    lines: Vec<(usize, &'a str)>,
}

fn parse_sections(text: &str) -> Result<Dataset, DatasetError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].trim().to_ascii_lowercase();
            if sections.iter().any(|s| s.name == name) {
                return Err(DatasetError::Schema {
                    at: Location::new(&name, Some(line_no), None),
                    message: "section appears twice".into(),
                });
            }
            sections.push(Section {
                name,
                header_line: line_no,
                lines: Vec::new(),
            });
            continue;
        }
        match sections.last_mut() {
            Some(s) => s.lines.push((line_no, raw)),
            None => {
                return Err(DatasetError::Schema {
                    at: Location::new("document", Some(line_no), None),
                    message: "content before the first [section] header".into(),
                })
            }
        }
    }

    let mut cycle = 1;
    let mut units = Vec::new();
    let mut roads = Vec::new();
    let mut deps = Vec::new();
    let mut lines = RowLines::default();
    let mut saw_units = false;
    for section in &sections {
        match section.name.as_str() {
            "meta" => {
                let rows: Vec<(usize, MetaRow)> = read_table(section)?;
                for (line, row) in rows {
                    if row.key.trim() == "cycle" {
                        cycle = row.value.trim().parse().map_err(|_| DatasetError::Schema {
                            at: Location::new("meta", Some(line), Some("value")),
                            message: format!("cycle must be a positive integer, got `{}`", row.value),
                        })?;
                    }
                }
            }
            "units" => {
                saw_units = true;
                for (line, row) in read_table::<UnitRow>(section)? {
                    units.push(unit_from_row(row, line)?);
                    lines.units.push(line);
                }
            }
            "roads" => {
                for (line, row) in read_table::<RoadRow>(section)? {
                    roads.push(road_from_row(row, line)?);
                    lines.roads.push(line);
                }
            }
            "dependencies" => {
                for (line, row) in read_table::<DependencyRow>(section)? {
                    deps.push(DependencyEdge::new(row.blocked, row.blocker));
                    lines.dependencies.push(line);
                }
            }
            other => {
                return Err(DatasetError::Schema {
                    at: Location::new(other, Some(section.header_line), None),
                    message: format!("unknown section `{other}`"),
                })
            }
        }
    }
    if !saw_units {
        return Err(DatasetError::Schema {
            at: Location::new("units", None, None),
            message: "missing [units] section".into(),
        });
    }
    Dataset::assemble(units, roads, deps, cycle, &lines)
}

#[derive(Debug, Deserialize)]
struct MetaRow {
    key: String,
    value: String,
}

fn read_table<T: serde::de::DeserializeOwned>(
    section: &Section,
) -> Result<Vec<(usize, T)>, DatasetError> {
    let Some(&(first_line, _)) = section.lines.first() else {
        return Ok(Vec::new());
    };
    let body: String = section
        .lines
        .iter()
        .map(|(_, l)| *l)
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Schema {
            at: Location::new(&section.name, Some(first_line), None),
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // data rows start one line after the header
        let line = section.lines.get(i + 1).map(|(l, _)| *l).unwrap_or(first_line);
        let record = record.map_err(|e| DatasetError::Schema {
            at: Location::new(&section.name, Some(line), None),
            message: e.to_string(),
        })?;
        let row = record.deserialize(Some(&headers)).map_err(|e| {
            let (field, message) = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => (
                    err.field()
                        .and_then(|f| headers.get(f as usize))
                        .map(str::to_owned),
                    err.kind().to_string(),
                ),
                _ => (None, e.to_string()),
            };
            DatasetError::Schema {
                at: Location {
                    table: section.name.clone(),
                    row: Some(line),
                    field,
                },
                message,
            }
        })?;
        out.push((line, row));
    }
    Ok(out)
}

fn unit_from_row(row: UnitRow, line: usize) -> Result<Unit, DatasetError> {
    let at = |field: &str| Location::new("units", Some(line), Some(field));
    let kind: UnitKind = row.kind.parse().map_err(|e: super::UnknownKind| DatasetError::Schema {
        at: at("kind"),
        message: e.to_string(),
    })?;
    let derived = derive_status(row.vulnerability).map_err(|e| DatasetError::Schema {
        at: at("vulnerability"),
        message: e.to_string(),
    })?;
    let status = match row.status {
        Some(s) => Status::try_from(s).map_err(|message| DatasetError::Schema {
            at: at("status"),
            message,
        })?,
        None => derived,
    };
    Ok(Unit {
        id: ItemId::new(row.id),
        kind,
        status,
        vulnerability: row.vulnerability as u8,
        cost: row.cost,
        time: row.time,
        priority: row.priority.unwrap_or_else(|| priority_for_kind(kind)),
        direct_benefit: row.direct_benefit,
        x: row.x,
        y: row.y,
    })
}

fn road_from_row(row: RoadRow, line: usize) -> Result<RoadEdge, DatasetError> {
    let status = Status::try_from(row.status).map_err(|message| DatasetError::Schema {
        at: Location::new("roads", Some(line), Some("status")),
        message,
    })?;
    Ok(RoadEdge {
        from: ItemId::new(row.from),
        to: ItemId::new(row.to),
        status,
        length: row.length,
        cost: row.cost.unwrap_or(0.0),
        time: row.time.unwrap_or(0.0),
        priority: row.priority.unwrap_or(ROAD_DEFAULT_PRIORITY),
        direct_benefit: row.direct_benefit.unwrap_or(0),
    })
}

/// Canonical sectioned-CSV text of a dataset.
pub fn to_canonical_string(dataset: &Dataset) -> String {
    fn table<T: Serialize>(name: &str, rows: impl IntoIterator<Item = T>, header: &[&str]) -> String {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.serialize(row).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv");
        format!("[{name}]\n{body}")
    }

    let mut out = format!("[meta]\nkey,value\ncycle,{}\n", dataset.cycle());
    out.push_str(&table(
        "units",
        dataset.units().map(|u| UnitRow {
            id: u.id.to_string(),
            kind: u.kind.label().to_owned(),
            vulnerability: u.vulnerability as i64,
            status: Some(u.status.into()),
            cost: u.cost,
            time: u.time,
            priority: Some(u.priority),
            direct_benefit: u.direct_benefit,
            x: u.x,
            y: u.y,
        }),
        &[
            "id", "kind", "vulnerability", "status", "cost", "time", "priority", "direct_benefit",
            "x", "y",
        ],
    ));
    out.push_str(&table(
        "roads",
        dataset.roads().iter().map(|r| RoadRow {
            from: r.from.to_string(),
            to: r.to.to_string(),
            status: r.status.into(),
            length: r.length,
            cost: Some(r.cost),
            time: Some(r.time),
            priority: Some(r.priority),
            direct_benefit: Some(r.direct_benefit),
        }),
        &["from", "to", "status", "length", "cost", "time", "priority", "direct_benefit"],
    ));
    out.push_str(&table(
        "dependencies",
        dataset.dependencies().iter().map(|d| DependencyRow {
            blocked: d.blocked.to_string(),
            blocker: d.blocker.to_string(),
        }),
        &["blocked", "blocker"],
    ));
    out
}

/// Writes the canonical form of `dataset` to `path`.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, to_canonical_string(dataset)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
