use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Label, PointCloud};
use crate::error::{Error, Result};

/// On-disk point formats. Only CSV (`x1,...,xn,label,weight`) is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    #[default]
    Csv,
}

impl FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PointFormat::Csv),
            other => Err(Error::Config(format!("unknown point format '{other}'"))),
        }
    }
}

pub fn load_points(path: &Path, format: PointFormat) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        PointFormat::Csv => read_csv(BufReader::new(file)),
    }
}

pub fn write_points(cloud: &PointCloud, path: &Path, format: PointFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        PointFormat::Csv => write_csv(cloud, BufWriter::new(file)).map_err(|e| Error::io(path, e)),
    }
}

/// Parses CSV rows; row numbers in errors are 1-based data rows (header excluded).
pub fn read_csv<R: Read>(reader: R) -> Result<PointCloud> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { row: 0, reason: e.to_string() })?.clone();
    let cols = header.len();
    if cols < 5 || &header[cols - 2] != "label" || &header[cols - 1] != "weight" {
        return Err(Error::Parse {
            row: 0,
            reason: format!("header must be x1,...,xn,label,weight, got '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let dim = cols - 2;
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, reason: e.to_string() })?;
        if rec.len() != cols {
            return Err(Error::Parse {
                row,
                reason: format!("expected {cols} fields, found {}", rec.len()),
            });
        }
        for field in rec.iter().take(dim) {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                reason: format!("bad coordinate '{field}'"),
            })?;
            coords.push(x);
        }
        let label = Label::parse(&rec[dim]).ok_or_else(|| Error::UnknownLabel {
            row,
            label: rec[dim].to_string(),
        })?;
        labels.push(label);
        let w: f64 = rec[dim + 1].parse().map_err(|_| Error::Parse {
            row,
            reason: format!("bad weight '{}'", &rec[dim + 1]),
        })?;
        weights.push(w);
    }
    PointCloud::new(dim, coords, labels, weights)
}

pub fn write_csv<W: Write>(cloud: &PointCloud, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=cloud.dim()).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    header.push("weight".into());
    w.write_record(&header)?;
    for i in 0..cloud.len() {
        let mut rec: Vec<String> = cloud.point(i).iter().map(|x| format!("{x:e}")).collect();
        rec.push(cloud.label(i).to_string());
        rec.push(format!("{:e}", cloud.quad_weight(i)));
        w.write_record(&rec)?;
    }
    w.flush()
}
