//! Evaluation of trained or analytic models: per-ν error reports, gridded
//! vorticity, lift time series and the time-shift diagnostic.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::data::{DataError, DatasetSplit, LabeledPoint, NU_MATCH_TOL};
use crate::network::{Interval, Network};
use crate::physics::analytic::TaylorGreen;
use crate::physics::{lift_force, residuals_from_jets, FieldJets, FlowField, PhysicsError, SurfacePoint};
use crate::sampling::DomainSpec;
use crate::training::Checkpoint;

/// Value written for grid nodes inside the cylinder.
pub const MASK_SENTINEL: f64 = -9999.0;

/// Slack allowed when checking points against a model's bounds.
const BOUNDS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("point ({x}, {y}, {t}) lies outside the model's normalization bounds")]
    ConfigMismatch { x: f64, y: f64, t: f64 },
    #[error("no residual points at ν = {0}")]
    MissingResidualPoints(f64),
    #[error("labeled points do not form a regular grid for finite-difference vorticity")]
    NoGrid,
    #[error("series is constant")]
    DegenerateSeries,
    #[error("series need equal lengths of at least 16, got {0} and {1}")]
    BadSeriesLength(usize, usize),
    #[error("time step must be positive")]
    BadTimeStep,
    #[error("at least 2 time steps are required, got {0}")]
    TooFewSteps(usize),
    #[error("grid needs at least 1×1 nodes and a positive extent")]
    BadGrid,
    #[error("malformed grid file: {0}")]
    MalformedGrid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Something that can be evaluated: a trained network or the analytic
/// Taylor-Green solution.
#[derive(Debug, Clone)]
pub enum Model {
    Network(Box<Network>),
    TaylorGreen,
}

impl Model {
    pub fn from_checkpoint(c: Checkpoint) -> Self {
        Model::Network(Box::new(c.network))
    }

    /// Rejects points outside the spatial and temporal range the network was
    /// normalized for. ν may extrapolate.
    fn check_bounds(&self, q: [f64; 4]) -> Result<(), EvalError> {
        if let Model::Network(net) = self {
            let n = &net.normalizer;
            if !(n.x.contains(q[0], BOUNDS_TOL) && n.y.contains(q[1], BOUNDS_TOL) && n.t.contains(q[2], BOUNDS_TOL)) {
                return Err(EvalError::ConfigMismatch {
                    x: q[0],
                    y: q[1],
                    t: q[2],
                });
            }
        }
        Ok(())
    }
}

impl FlowField for Model {
    fn values(&self, point: [f64; 4]) -> Result<[f64; 3], PhysicsError> {
        match self {
            Model::Network(n) => n.values(point),
            Model::TaylorGreen => TaylorGreen.values(point),
        }
    }

    fn jets(&self, point: [f64; 4]) -> Result<FieldJets, PhysicsError> {
        match self {
            Model::Network(n) => n.jets(point),
            Model::TaylorGreen => TaylorGreen.jets(point),
        }
    }

    fn values_many(&self, points: &[[f64; 4]]) -> Result<Vec<[f64; 3]>, PhysicsError> {
        match self {
            Model::Network(n) => n.values_many(points),
            Model::TaylorGreen => TaylorGreen.values_many(points),
        }
    }

    fn jets_many(&self, points: &[[f64; 4]]) -> Result<Vec<FieldJets>, PhysicsError> {
        match self {
            Model::Network(n) => n.jets_many(points),
            Model::TaylorGreen => TaylorGreen.jets_many(points),
        }
    }
}

/// What predicted vorticity is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VorticityReference {
    /// `2 cos x cos y e^{−2νt}`.
    Analytic,
    /// Central differences of the labels on a regular (x, y) grid per
    /// (ν, t) slice; only interior grid nodes are scored.
    Grid,
}

impl VorticityReference {
    pub fn name(self) -> &'static str {
        match self {
            VorticityReference::Analytic => "analytic",
            VorticityReference::Grid => "grid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "analytic" => Some(Self::Analytic),
            "grid" => Some(Self::Grid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub nu: f64,
    pub split: Split,
    pub mse_u: f64,
    pub mse_v: f64,
    pub mse_p: f64,
    pub mse_residual: f64,
    pub mse_vorticity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub vorticity_reference: VorticityReference,
    pub seed: Option<u64>,
}

impl MetricReport {
    pub fn row(&self, nu: f64, split: Split) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.split == split && (r.nu - nu).abs() <= NU_MATCH_TOL)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let wrap = |e: csv::Error| EvalError::Data(e.into());
        out.write_record([
            "nu",
            "split",
            "mse_u",
            "mse_v",
            "mse_p",
            "mse_residual",
            "mse_vorticity",
        ])
        .map_err(wrap)?;
        for r in &self.rows {
            let mut record = vec![format!("{:?}", r.nu), r.split.name().to_string()];
            record.extend([r.mse_u, r.mse_v, r.mse_p, r.mse_residual, r.mse_vorticity].map(|v| format!("{v:e}")));
            out.write_record(&record).map_err(wrap)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Report metadata as `key = value` lines.
    pub fn metadata(&self) -> String {
        let mut s = format!("vorticity_reference = {}\n", self.vorticity_reference.name());
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s
    }
}

/// Finite-difference vorticity of labels lying on regular grids. Returns the
/// vorticity for every point that has all four grid neighbours.
pub fn grid_vorticity(points: &[LabeledPoint]) -> Result<Vec<Option<f64>>, EvalError> {
    let key = |v: f64| v.to_bits();
    let mut slices: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        slices.entry((key(p.nu), key(p.t))).or_default().push(i);
    }
    let mut out = vec![None; points.len()];
    let mut any = false;
    for members in slices.values() {
        let axis = |f: fn(&LabeledPoint) -> f64| -> Option<(Vec<f64>, f64)> {
            let mut vals: Vec<f64> = members.iter().map(|&i| f(&points[i])).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            if vals.len() < 3 {
                return None;
            }
            let h = (vals[vals.len() - 1] - vals[0]) / (vals.len() - 1) as f64;
            let regular = vals
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
            regular.then_some((vals, h))
        };
        let (Some((xs, hx)), Some((ys, hy))) = (axis(|p| p.x), axis(|p| p.y)) else {
            continue;
        };
        let index = |v: f64, lo: f64, h: f64| ((v - lo) / h).round() as i64;
        let mut grid: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        for &i in members {
            grid.insert((index(points[i].x, xs[0], hx), index(points[i].y, ys[0], hy)), i);
        }
        for (&(ix, iy), &i) in &grid {
            let neighbours = (
                grid.get(&(ix + 1, iy)),
                grid.get(&(ix - 1, iy)),
                grid.get(&(ix, iy + 1)),
                grid.get(&(ix, iy - 1)),
            );
            if let (Some(&e), Some(&w), Some(&n), Some(&s)) = neighbours {
                let dv_dx = (points[e].v - points[w].v) / (2.0 * hx);
                let du_dy = (points[n].u - points[s].u) / (2.0 * hy);
                out[i] = Some(dv_dx - du_dy);
                any = true;
            }
        }
    }
    if any {
        Ok(out)
    } else {
        Err(EvalError::NoGrid)
    }
}

fn matches_nu(a: f64, b: f64) -> bool {
    (a - b).abs() <= NU_MATCH_TOL
}

/// Per-(ν, split) errors of `model` on the labeled points of `split`, with
/// the residual error taken over the `residual_points` at the same ν.
pub fn evaluate(
    model: &Model,
    split: &DatasetSplit,
    residual_points: &[[f64; 4]],
    reference: VorticityReference,
) -> Result<MetricReport, EvalError> {
    let mut rows = Vec::new();
    let groups = [
        (Split::Train, &split.train_nus, &split.train_points),
        (Split::Test, &split.test_nus, &split.test_points),
    ];
    for (tag, nus, points) in groups {
        for &nu in nus.iter() {
            let labeled: Vec<LabeledPoint> = points.iter().filter(|p| matches_nu(p.nu, nu)).copied().collect();
            if labeled.is_empty() {
                continue;
            }
            rows.push(score(model, nu, tag, &labeled, residual_points, reference)?);
        }
    }
    Ok(MetricReport {
        rows,
        vorticity_reference: reference,
        seed: None,
    })
}

fn score(
    model: &Model,
    nu: f64,
    split: Split,
    labeled: &[LabeledPoint],
    residual_points: &[[f64; 4]],
    reference: VorticityReference,
) -> Result<MetricRow, EvalError> {
    let coords: Vec<[f64; 4]> = labeled.iter().map(|p| p.coords()).collect();
    for &q in &coords {
        model.check_bounds(q)?;
    }
    let jets = model.jets_many(&coords)?;
    let n = labeled.len() as f64;
    let mut mse = [0.0; 3];
    for (j, p) in jets.iter().zip(labeled) {
        mse[0] += (j.u.value - p.u).powi(2);
        mse[1] += (j.v.value - p.v).powi(2);
        mse[2] += (j.p.value - p.p).powi(2);
    }

    let reference_values: Vec<Option<f64>> = match reference {
        VorticityReference::Analytic => labeled
            .iter()
            .map(|p| Some(TaylorGreen::exact_vorticity(p.x, p.y, p.t, p.nu)))
            .collect(),
        VorticityReference::Grid => grid_vorticity(labeled)?,
    };
    let (mut vort_sum, mut vort_n) = (0.0, 0usize);
    for (j, r) in jets.iter().zip(&reference_values) {
        if let Some(w) = r {
            vort_sum += (j.v.dx - j.u.dy - w).powi(2);
            vort_n += 1;
        }
    }

    let residual: Vec<[f64; 4]> = residual_points
        .iter()
        .filter(|q| matches_nu(q[3], nu))
        .copied()
        .collect();
    if residual.is_empty() {
        return Err(EvalError::MissingResidualPoints(nu));
    }
    for &q in &residual {
        model.check_bounds(q)?;
    }
    let residual_sum: f64 = model
        .jets_many(&residual)?
        .iter()
        .zip(&residual)
        .map(|(j, q)| residuals_from_jets(j, q[3]).squared_norm())
        .sum();

    Ok(MetricRow {
        nu,
        split,
        mse_u: mse[0] / n,
        mse_v: mse[1] / n,
        mse_p: mse[2] / n,
        mse_residual: residual_sum / residual.len() as f64,
        mse_vorticity: if vort_n == 0 { 0.0 } else { vort_sum / vort_n as f64 },
    })
}

/// Node layout of a gridded field: `nx` columns spanning `x`, `ny` rows
/// spanning `y`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x: Interval,
    pub y: Interval,
}

impl Grid {
    fn coordinate(n: usize, iv: Interval, i: usize) -> f64 {
        if n == 1 {
            0.5 * (iv.lo + iv.hi)
        } else {
            iv.lo + iv.width() * i as f64 / (n - 1) as f64
        }
    }

    pub fn x_at(&self, i: usize) -> f64 {
        Self::coordinate(self.nx, self.x, i)
    }

    pub fn y_at(&self, j: usize) -> f64 {
        Self::coordinate(self.ny, self.y, j)
    }
}

/// Row-major values (row `j` is `y_at(j)`), masked nodes hold `sentinel`.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    pub grid: Grid,
    pub sentinel: f64,
    pub values: Vec<f64>,
}

impl GriddedField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx + i]
    }

    /// Header `nx ny x_min x_max y_min y_max sentinel`, then one line per row.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), EvalError> {
        let g = &self.grid;
        writeln!(
            w,
            "{} {} {:?} {:?} {:?} {:?} {:?}",
            g.nx, g.ny, g.x.lo, g.x.hi, g.y.lo, g.y.hi, self.sentinel
        )?;
        for row in self.values.chunks(g.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let bad = |m: &str| EvalError::MalformedGrid(m.to_string());
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 7 {
            return Err(bad("header needs 7 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad grid size"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let grid = Grid {
            nx: int(h[0])?,
            ny: int(h[1])?,
            x: Interval::new(real(h[2])?, real(h[3])?),
            y: Interval::new(real(h[4])?, real(h[5])?),
        };
        let sentinel = real(h[6])?;
        let mut values = Vec::with_capacity(grid.nx * grid.ny);
        for line in lines {
            for tok in line?.split_whitespace() {
                values.push(real(tok)?);
            }
        }
        if values.len() != grid.nx * grid.ny {
            return Err(bad("value count does not match nx × ny"));
        }
        Ok(Self { grid, sentinel, values })
    }
}

/// `ω` at every node of `grid` at `(t, ν)`; nodes inside the cylinder of
/// `domain`, if any, are masked.
pub fn vorticity_field<F: FlowField + ?Sized>(
    field: &F,
    domain: &DomainSpec,
    nu: f64,
    t: f64,
    grid: Grid,
) -> Result<GriddedField, EvalError> {
    if grid.nx == 0 || grid.ny == 0 || !(grid.x.lo <= grid.x.hi && grid.y.lo <= grid.y.hi) {
        return Err(EvalError::BadGrid);
    }
    let mut points = Vec::new();
    let mut slots = Vec::new();
    let mut values = vec![MASK_SENTINEL; grid.nx * grid.ny];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = (grid.x_at(i), grid.y_at(j));
            let masked = domain.cylinder.is_some_and(|c| c.distance(x, y) <= c.radius());
            if !masked {
                points.push([x, y, t, nu]);
                slots.push(j * grid.nx + i);
            }
        }
    }
    for (slot, jet) in slots.iter().zip(field.jets_many(&points)?) {
        values[*slot] = jet.v.dx - jet.u.dy;
    }
    Ok(GriddedField {
        grid,
        sentinel: MASK_SENTINEL,
        values,
    })
}

/// Lift at `n_steps` uniformly spaced times spanning `t_range`.
pub fn lift_series<F: FlowField + ?Sized>(
    field: &F,
    nu: f64,
    t_range: Interval,
    n_steps: usize,
    panels: &[SurfacePoint],
) -> Result<Vec<(f64, f64)>, EvalError> {
    if n_steps < 2 {
        return Err(EvalError::TooFewSteps(n_steps));
    }
    (0..n_steps)
        .map(|k| {
            let t = t_range.lo + t_range.width() * k as f64 / (n_steps - 1) as f64;
            Ok((t, lift_force(field, t, nu, panels)?))
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Lag maximizing the correlation of `pred` against `reference`, in units of
/// `dt`. Lags up to half the series length are tried; each lag is scored by
/// the Pearson correlation over the overlapping samples, and near-ties go to
/// the smaller |lag|. A positive lag means the prediction trails the
/// reference: `pred(t) ≈ reference(t − lag)`.
pub fn time_shift(pred: &[f64], reference: &[f64], dt: f64) -> Result<f64, EvalError> {
    let n = pred.len();
    if n != reference.len() || n < 16 {
        return Err(EvalError::BadSeriesLength(pred.len(), reference.len()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EvalError::BadTimeStep);
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(pred) || constant(reference) {
        return Err(EvalError::DegenerateSeries);
    }
    let max_lag = (n / 2) as i64;
    let mut scored: Vec<(i64, f64)> = Vec::new();
    for lag in -max_lag..=max_lag {
        // pred[i] pairs with reference[i - lag]
        let (p, r) = if lag >= 0 {
            let l = lag as usize;
            (&pred[l..], &reference[..n - l])
        } else {
            let l = (-lag) as usize;
            (&pred[..n - l], &reference[l..])
        };
        if let Some(c) = pearson(p, r) {
            scored.push((lag, c));
        }
    }
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(EvalError::DegenerateSeries);
    }
    let lag = scored
        .iter()
        .filter(|s| s.1 >= best - 1e-9)
        .min_by_key(|s| s.0.abs())
        .map(|s| s.0)
        .expect("best lag is among the scored lags");
    Ok(lag as f64 * dt)
}
