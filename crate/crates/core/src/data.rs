//! Labeled snapshots: CSV reading and writing, analytic Taylor-Green labels,
//! and train/test partitioning by ν.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::network::Interval;
use crate::physics::analytic::TaylorGreen;
use crate::rng::{self, SeededRng};
use crate::sampling::SamplePoint;

/// Header of the snapshot CSV format.
pub const SNAPSHOT_HEADER: [&str; 7] = ["x", "y", "t", "re", "u", "v", "p"];

/// Tolerance used to match a point's ν against a split's values.
pub const NU_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("non-finite value at line {0}")]
    NonFiniteValue(u64),
    #[error("missing or unexpected header, expected `x,y,t,re,u,v,p`")]
    MissingHeader,
    #[error("ν = {0} belongs to neither split")]
    OrphanNu(f64),
    #[error("ν = {0} appears in both train and test sets")]
    OverlappingSplit(f64),
    #[error("space-time box must lie within [0, 2π]² with positive extent")]
    InvalidBox,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub nu: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl LabeledPoint {
    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.y, self.t, self.nu]
    }

    pub fn labels(&self) -> [f64; 3] {
        [self.u, self.v, self.p]
    }
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(w)
}

/// Writes labeled points with 17 significant digits, so every value reads
/// back exactly.
pub fn write_snapshots<W: Write>(w: W, points: &[LabeledPoint]) -> Result<(), DataError> {
    let mut out = writer(w);
    out.write_record(SNAPSHOT_HEADER)?;
    for p in points {
        out.write_record([p.x, p.y, p.t, 1.0 / p.nu, p.u, p.v, p.p].map(format_value))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_snapshots(path: &Path, points: &[LabeledPoint]) -> Result<(), DataError> {
    write_snapshots(File::create(path)?, points)
}

/// Writes sampled points in the snapshot layout with empty label columns.
pub fn write_samples<W: Write>(w: W, points: &[SamplePoint]) -> Result<(), DataError> {
    let mut out = writer(w);
    out.write_record(SNAPSHOT_HEADER)?;
    for p in points {
        let [x, y, t, re] = [p.x, p.y, p.t, 1.0 / p.nu].map(format_value);
        out.write_record([x, y, t, re, String::new(), String::new(), String::new()])?;
    }
    out.flush()?;
    Ok(())
}

/// One parsed row; label columns may be empty.
struct Row {
    coords: [f64; 4],
    labels: [Option<f64>; 3],
}

fn read_rows<R: Read>(r: R) -> Result<Vec<Row>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = reader.headers().map_err(|_| DataError::MissingHeader)?;
    if header.iter().ne(SNAPSHOT_HEADER) {
        return Err(DataError::MissingHeader);
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => DataError::MalformedRow(pos.line()),
            None => DataError::from(e),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != SNAPSHOT_HEADER.len() {
            return Err(DataError::MalformedRow(line));
        }
        let mut fields = [None; 7];
        for (slot, text) in fields.iter_mut().zip(record.iter()) {
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            let v: f64 = text.parse().map_err(|_| DataError::MalformedRow(line))?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue(line));
            }
            *slot = Some(v);
        }
        let coord = |i: usize| fields[i].ok_or(DataError::MalformedRow(line));
        let re = coord(3)?;
        if re <= 0.0 {
            return Err(DataError::MalformedRow(line));
        }
        rows.push(Row {
            coords: [coord(0)?, coord(1)?, coord(2)?, 1.0 / re],
            labels: [fields[4], fields[5], fields[6]],
        });
    }
    Ok(rows)
}

/// Reads labeled points in file order; every label column must be present.
pub fn read_snapshots<R: Read>(r: R) -> Result<Vec<LabeledPoint>, DataError> {
    read_rows(r)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row.labels {
            [Some(u), Some(v), Some(p)] => {
                let [x, y, t, nu] = row.coords;
                Ok(LabeledPoint { x, y, t, nu, u, v, p })
            }
            // header is line 1
            _ => Err(DataError::MalformedRow(i as u64 + 2)),
        })
        .collect()
}

pub fn load_snapshots(path: &Path) -> Result<Vec<LabeledPoint>, DataError> {
    read_snapshots(File::open(path)?)
}

/// Reads the `(x, y, t, ν)` columns of a snapshot or sample file, ignoring
/// labels.
pub fn load_points(path: &Path) -> Result<Vec<[f64; 4]>, DataError> {
    Ok(read_rows(File::open(path)?)?.into_iter().map(|r| r.coords).collect())
}

/// Spatial and temporal extent of generated data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeBox {
    pub x: Interval,
    pub y: Interval,
    pub t: Interval,
}

impl SpaceTimeBox {
    pub fn periodic_cell(t: Interval) -> Self {
        let cell = Interval::new(0.0, std::f64::consts::TAU);
        Self { x: cell, y: cell, t }
    }

    fn validate(&self) -> Result<(), DataError> {
        let tau = std::f64::consts::TAU;
        let within = |i: Interval| i.lo >= 0.0 && i.hi <= tau && i.lo < i.hi;
        if within(self.x) && within(self.y) && self.t.lo <= self.t.hi && self.t.lo.is_finite() && self.t.hi.is_finite()
        {
            Ok(())
        } else {
            Err(DataError::InvalidBox)
        }
    }
}

const TAYLOR_GREEN_STREAM: u64 = 4;

/// `n_per_nu` Taylor-Green labels per ν at seeded-uniform points of `bbox`,
/// grouped by ν in the order given.
pub fn taylor_green_dataset(
    nu_values: &[f64],
    n_per_nu: usize,
    bbox: SpaceTimeBox,
    seed: u64,
) -> Result<Vec<LabeledPoint>, DataError> {
    let mut g = rng::stream(seed, TAYLOR_GREEN_STREAM);
    let mut out = Vec::with_capacity(nu_values.len() * n_per_nu);
    for &nu in nu_values {
        out.extend(taylor_green_sample(&mut g, nu, n_per_nu, bbox)?);
    }
    Ok(out)
}

/// `n` Taylor-Green labels at one ν, drawn from `g`.
pub fn taylor_green_sample(
    g: &mut SeededRng,
    nu: f64,
    n: usize,
    bbox: SpaceTimeBox,
) -> Result<Vec<LabeledPoint>, DataError> {
    bbox.validate()?;
    Ok((0..n)
        .map(|_| {
            let x = rng::uniform(g, bbox.x.lo, bbox.x.hi);
            let y = rng::uniform(g, bbox.y.lo, bbox.y.hi);
            let t = rng::uniform(g, bbox.t.lo, bbox.t.hi);
            taylor_green_point(x, y, t, nu)
        })
        .collect())
}

pub fn taylor_green_point(x: f64, y: f64, t: f64, nu: f64) -> LabeledPoint {
    let [u, v, p] = TaylorGreen::exact(x, y, t, nu);
    LabeledPoint { x, y, t, nu, u, v, p }
}

/// Training ν values of the cylinder-flow study (Re = 100, 200, 333.3, 400, 500).
pub const CYLINDER_TRAIN_NUS: [f64; 5] = [0.002, 0.0025, 0.003, 0.005, 0.010];

/// Held-out ν values of the cylinder-flow study
/// (Re = 666.6, 142.8, 250, 444.4, 66.6).
pub const CYLINDER_TEST_NUS: [f64; 5] = [0.0015, 0.007, 0.004, 0.00225, 0.015];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train_nus: Vec<f64>,
    pub test_nus: Vec<f64>,
    pub train_points: Vec<LabeledPoint>,
    pub test_points: Vec<LabeledPoint>,
}

fn matches(set: &[f64], nu: f64) -> bool {
    set.iter().any(|&s| (s - nu).abs() <= NU_MATCH_TOL)
}

/// Partitions `points` by ν, keeping file order within each split.
pub fn assemble_split(points: &[LabeledPoint], train_nus: &[f64], test_nus: &[f64]) -> Result<DatasetSplit, DataError> {
    if let Some(&nu) = train_nus.iter().find(|&&nu| matches(test_nus, nu)) {
        return Err(DataError::OverlappingSplit(nu));
    }
    let mut split = DatasetSplit {
        train_nus: train_nus.to_vec(),
        test_nus: test_nus.to_vec(),
        ..DatasetSplit::default()
    };
    for p in points {
        if matches(train_nus, p.nu) {
            split.train_points.push(*p);
        } else if matches(test_nus, p.nu) {
            split.test_points.push(*p);
        } else {
            return Err(DataError::OrphanNu(p.nu));
        }
    }
    Ok(split)
}
