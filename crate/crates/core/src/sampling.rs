//! Seeded generators for collocation, boundary and initial-condition points.

use thiserror::Error;

use crate::network::{InputNormalizer, Interval};
use crate::rng::{self, SeededRng};

/// Tolerance used when checking that a coordinate lies on a boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("ν = {nu} outside the configured range [{lo}, {hi}]")]
    NuOutOfRange { nu: f64, lo: f64, hi: f64 },
    #[error("{0} requires a cylinder in the domain")]
    NoCylinder(&'static str),
}

/// Circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub diameter: f64,
}

impl Cylinder {
    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        (x - self.center[0]).hypot(y - self.center[1])
    }
}

/// Space-time-parameter box, optionally with a cylinder cut out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub x: Interval,
    pub y: Interval,
    pub t: Interval,
    pub nu: Interval,
    pub cylinder: Option<Cylinder>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self::cylinder_flow(1.0)
    }
}

impl DomainSpec {
    /// `[-2.5D, 7.5D] × [-2.5D, 2.5D]` around a cylinder of diameter `D` at
    /// the origin, `t ∈ [0, 60]`, `ν ∈ [0.002, 0.010]`.
    pub fn cylinder_flow(diameter: f64) -> Self {
        Self {
            x: Interval::new(-2.5 * diameter, 7.5 * diameter),
            y: Interval::new(-2.5 * diameter, 2.5 * diameter),
            t: Interval::new(0.0, 60.0),
            nu: Interval::new(0.002, 0.010),
            cylinder: Some(Cylinder {
                center: [0.0, 0.0],
                diameter,
            }),
        }
    }

    /// Obstacle-free periodic box `[0, 2π]²` for Taylor-Green runs.
    pub fn taylor_green(t: Interval, nu: Interval) -> Self {
        let tau = std::f64::consts::TAU;
        Self {
            x: Interval::new(0.0, tau),
            y: Interval::new(0.0, tau),
            t,
            nu,
            cylinder: None,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        for (name, iv) in [("x", self.x), ("y", self.y), ("t", self.t), ("nu", self.nu)] {
            if !iv.lo.is_finite() || !iv.hi.is_finite() || iv.lo >= iv.hi {
                return Err(SamplingError::InvalidDomain(format!(
                    "{name} range [{}, {}] is empty",
                    iv.lo, iv.hi
                )));
            }
        }
        if self.nu.lo.is_nan() || self.nu.lo <= 0.0 {
            return Err(SamplingError::InvalidDomain("ν range must be positive".into()));
        }
        if let Some(c) = self.cylinder {
            let r = c.radius();
            if c.diameter.is_nan()
                || c.diameter <= 0.0
                || c.center[0] - r <= self.x.lo
                || c.center[0] + r >= self.x.hi
                || c.center[1] - r <= self.y.lo
                || c.center[1] + r >= self.y.hi
            {
                return Err(SamplingError::InvalidDomain(
                    "cylinder must lie strictly inside the rectangle".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn normalizer(&self) -> InputNormalizer {
        InputNormalizer {
            x: self.x,
            y: self.y,
            t: self.t,
            nu: self.nu,
        }
    }

    /// True when `(x, y)` is inside or on the cylinder.
    pub fn in_obstacle(&self, x: f64, y: f64) -> bool {
        self.cylinder.is_some_and(|c| c.distance(x, y) <= c.radius())
    }

    pub fn check_nu(&self, nu: f64) -> Result<(), SamplingError> {
        if self.nu.contains(nu, 1e-12) {
            Ok(())
        } else {
            Err(SamplingError::NuOutOfRange {
                nu,
                lo: self.nu.lo,
                hi: self.nu.hi,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointKind {
    Interior,
    Inlet,
    Outlet,
    Cylinder,
    PeriodicPair,
    Initial,
}

impl PointKind {
    pub fn name(self) -> &'static str {
        match self {
            PointKind::Interior => "interior",
            PointKind::Inlet => "inlet",
            PointKind::Outlet => "outlet",
            PointKind::Cylinder => "cylinder",
            PointKind::PeriodicPair => "periodic_pair",
            PointKind::Initial => "initial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub nu: f64,
    pub kind: PointKind,
}

impl SamplePoint {
    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.y, self.t, self.nu]
    }

    /// Distance from the boundary this point's kind claims to lie on
    /// (zero for interior points that are in the open domain).
    pub fn boundary_distance(&self, spec: &DomainSpec) -> Result<f64, SamplingError> {
        Ok(match self.kind {
            PointKind::Interior => {
                let inside =
                    spec.x.contains(self.x, 0.0) && spec.y.contains(self.y, 0.0) && !spec.in_obstacle(self.x, self.y);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PointKind::Inlet => (self.x - spec.x.lo).abs(),
            PointKind::Outlet => (self.x - spec.x.hi).abs(),
            PointKind::Cylinder => {
                let c = spec.cylinder.ok_or(SamplingError::NoCylinder("cylinder boundary"))?;
                (c.distance(self.x, self.y) - c.radius()).abs()
            }
            PointKind::PeriodicPair => (self.y - spec.y.lo).abs().min((self.y - spec.y.hi).abs()),
            PointKind::Initial => (self.t - spec.t.lo).abs(),
        })
    }

    /// The matching point on the opposite periodic wall.
    pub fn periodic_partner(&self, spec: &DomainSpec) -> SamplePoint {
        let on_bottom = (self.y - spec.y.lo).abs() <= (self.y - spec.y.hi).abs();
        SamplePoint {
            y: if on_bottom { spec.y.hi } else { spec.y.lo },
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refinement {
    #[default]
    Uniform,
    CylinderRefined,
}

impl Refinement {
    pub fn name(self) -> &'static str {
        match self {
            Refinement::Uniform => "uniform",
            Refinement::CylinderRefined => "cylinder_refined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Refinement::Uniform),
            "cylinder_refined" => Some(Refinement::CylinderRefined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub n_labeled: usize,
    pub n_residual: usize,
    pub refinement: Refinement,
    pub refinement_fraction: f64,
    pub refinement_radius: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            n_labeled: 500_000,
            n_residual: 800_000,
            refinement: Refinement::Uniform,
            refinement_fraction: 0.5,
            refinement_radius: 2.0,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self, spec: &DomainSpec) -> Result<(), SamplingError> {
        if self.n_labeled == 0 || self.n_residual == 0 {
            return Err(SamplingError::InvalidPlan("point counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.refinement_fraction) {
            return Err(SamplingError::InvalidPlan(format!(
                "refinement_fraction {} outside [0, 1]",
                self.refinement_fraction
            )));
        }
        if self.refinement == Refinement::CylinderRefined {
            let c = spec.cylinder.ok_or(SamplingError::NoCylinder("cylinder refinement"))?;
            if self.refinement_radius.is_nan() || self.refinement_radius <= c.radius() {
                return Err(SamplingError::InvalidPlan(
                    "refinement_radius must exceed the cylinder radius".into(),
                ));
            }
        }
        Ok(())
    }
}

// Independent generator streams per point family.
const INTERIOR_STREAM: u64 = 1;
const BOUNDARY_STREAM: u64 = 2;
const GRID_STREAM: u64 = 3;

struct InteriorSampler<'a> {
    spec: &'a DomainSpec,
    plan: &'a SamplingPlan,
}

impl InteriorSampler<'_> {
    fn xy_uniform(&self, rng: &mut SeededRng, outside: f64) -> (f64, f64) {
        let s = self.spec;
        loop {
            let x = rng::uniform(rng, s.x.lo, s.x.hi);
            let y = rng::uniform(rng, s.y.lo, s.y.hi);
            let clear = match s.cylinder {
                Some(c) => c.distance(x, y) > outside.max(c.radius()),
                None => true,
            };
            if clear {
                return (x, y);
            }
        }
    }

    /// Area-uniform draw from the annulus between the cylinder and the
    /// refinement radius, clipped to the rectangle.
    fn xy_refined(&self, rng: &mut SeededRng, c: Cylinder) -> (f64, f64) {
        let s = self.spec;
        let r = self.plan.refinement_radius;
        let (x_lo, x_hi) = ((c.center[0] - r).max(s.x.lo), (c.center[0] + r).min(s.x.hi));
        let (y_lo, y_hi) = ((c.center[1] - r).max(s.y.lo), (c.center[1] + r).min(s.y.hi));
        loop {
            let x = rng::uniform(rng, x_lo, x_hi);
            let y = rng::uniform(rng, y_lo, y_hi);
            let d = c.distance(x, y);
            if d > c.radius() && d <= r {
                return (x, y);
            }
        }
    }

    fn draw(&self, rng: &mut SeededRng, nu: Option<f64>) -> SamplePoint {
        let s = self.spec;
        let (x, y) = match (self.plan.refinement, s.cylinder) {
            (Refinement::CylinderRefined, Some(c)) => {
                if rng::uniform(rng, 0.0, 1.0) < self.plan.refinement_fraction {
                    self.xy_refined(rng, c)
                } else {
                    self.xy_uniform(rng, self.plan.refinement_radius)
                }
            }
            _ => self.xy_uniform(rng, 0.0),
        };
        let t = rng::uniform(rng, s.t.lo, s.t.hi);
        let nu = nu.unwrap_or_else(|| rng::uniform(rng, s.nu.lo, s.nu.hi));
        SamplePoint {
            x,
            y,
            t,
            nu,
            kind: PointKind::Interior,
        }
    }
}

/// `plan.n_residual` interior collocation points.
///
/// Uniform mode draws i.i.d. over the rectangle × time × ν with the cylinder
/// rejected. Refined mode sends each point, with probability
/// `refinement_fraction`, to the annulus within `refinement_radius` of the
/// cylinder center, and otherwise to the rest of the domain.
pub fn sample_interior(spec: &DomainSpec, plan: &SamplingPlan) -> Result<Vec<SamplePoint>, SamplingError> {
    spec.validate()?;
    plan.validate(spec)?;
    let sampler = InteriorSampler { spec, plan };
    let mut rng = rng::stream(plan.seed, INTERIOR_STREAM);
    Ok((0..plan.n_residual).map(|_| sampler.draw(&mut rng, None)).collect())
}

/// Points per boundary family. `periodic` counts pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundaryCounts {
    pub inlet: usize,
    pub outlet: usize,
    pub cylinder: usize,
    pub periodic: usize,
    pub initial: usize,
}

impl BoundaryCounts {
    pub fn uniform(n: usize) -> Self {
        Self {
            inlet: n,
            outlet: n,
            cylinder: n,
            periodic: n,
            initial: n,
        }
    }

    pub fn total_points(&self) -> usize {
        self.inlet + self.outlet + self.cylinder + 2 * self.periodic + self.initial
    }
}

/// Boundary and initial-condition points, grouped by kind in the order
/// inlet, outlet, cylinder, periodic pairs (bottom then top), initial.
pub fn sample_boundary(
    spec: &DomainSpec,
    counts: BoundaryCounts,
    seed: u64,
) -> Result<Vec<SamplePoint>, SamplingError> {
    spec.validate()?;
    if counts.cylinder > 0 && spec.cylinder.is_none() {
        return Err(SamplingError::NoCylinder("cylinder boundary points"));
    }
    let s = spec;
    let mut rng = rng::stream(seed, BOUNDARY_STREAM);
    let mut out = Vec::with_capacity(counts.total_points());
    let point = |x, y, t, nu, kind| SamplePoint { x, y, t, nu, kind };
    for (n, x, kind) in [
        (counts.inlet, s.x.lo, PointKind::Inlet),
        (counts.outlet, s.x.hi, PointKind::Outlet),
    ] {
        for _ in 0..n {
            let y = rng::uniform(&mut rng, s.y.lo, s.y.hi);
            let t = rng::uniform(&mut rng, s.t.lo, s.t.hi);
            let nu = rng::uniform(&mut rng, s.nu.lo, s.nu.hi);
            out.push(point(x, y, t, nu, kind));
        }
    }
    if let Some(c) = s.cylinder {
        for _ in 0..counts.cylinder {
            let theta = rng::uniform(&mut rng, 0.0, std::f64::consts::TAU);
            let t = rng::uniform(&mut rng, s.t.lo, s.t.hi);
            let nu = rng::uniform(&mut rng, s.nu.lo, s.nu.hi);
            let (sn, cs) = theta.sin_cos();
            out.push(point(
                c.center[0] + c.radius() * cs,
                c.center[1] + c.radius() * sn,
                t,
                nu,
                PointKind::Cylinder,
            ));
        }
    }
    for _ in 0..counts.periodic {
        let x = rng::uniform(&mut rng, s.x.lo, s.x.hi);
        let t = rng::uniform(&mut rng, s.t.lo, s.t.hi);
        let nu = rng::uniform(&mut rng, s.nu.lo, s.nu.hi);
        out.push(point(x, s.y.lo, t, nu, PointKind::PeriodicPair));
        out.push(point(x, s.y.hi, t, nu, PointKind::PeriodicPair));
    }
    for _ in 0..counts.initial {
        let (x, y) = loop {
            let x = rng::uniform(&mut rng, s.x.lo, s.x.hi);
            let y = rng::uniform(&mut rng, s.y.lo, s.y.hi);
            if !s.in_obstacle(x, y) {
                break (x, y);
            }
        };
        let nu = rng::uniform(&mut rng, s.nu.lo, s.nu.hi);
        out.push(point(x, y, s.t.lo, nu, PointKind::Initial));
    }
    Ok(out)
}

/// Interior points with ν restricted to `nu_values`, `points_per_value` each,
/// in the order the values are given.
pub fn sample_parameter_grid(
    spec: &DomainSpec,
    nu_values: &[f64],
    points_per_value: usize,
    plan: &SamplingPlan,
) -> Result<Vec<SamplePoint>, SamplingError> {
    spec.validate()?;
    for &nu in nu_values {
        spec.check_nu(nu)?;
    }
    let plan = SamplingPlan {
        n_residual: points_per_value.max(1),
        ..*plan
    };
    plan.validate(spec)?;
    let sampler = InteriorSampler { spec, plan: &plan };
    let mut rng = rng::stream(plan.seed, GRID_STREAM);
    let mut out = Vec::with_capacity(nu_values.len() * points_per_value);
    for &nu in nu_values {
        out.extend((0..points_per_value).map(|_| sampler.draw(&mut rng, Some(nu))));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(n: usize, seed: u64) -> SamplingPlan {
        SamplingPlan {
            n_residual: n,
            seed,
            ..SamplingPlan::default()
        }
    }

    #[test]
    fn uniform_interior_avoids_cylinder() {
        let spec = DomainSpec::default();
        let pts = sample_interior(&spec, &plan(1000, 3)).unwrap();
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| p.x * p.x + p.y * p.y > 0.25));
        assert!(pts.iter().all(|p| p.boundary_distance(&spec).unwrap() == 0.0));
        assert!(pts
            .iter()
            .all(|p| spec.t.contains(p.t, 0.0) && spec.nu.contains(p.nu, 0.0)));
    }

    #[test]
    fn interior_is_reproducible() {
        let spec = DomainSpec::default();
        let a = sample_interior(&spec, &plan(500, 9)).unwrap();
        let b = sample_interior(&spec, &plan(500, 9)).unwrap();
        assert_eq!(a, b);
        let c = sample_interior(&spec, &plan(500, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn refined_fraction_lands_near_cylinder() {
        let spec = DomainSpec::default();
        let plan = SamplingPlan {
            refinement: Refinement::CylinderRefined,
            ..plan(100_000, 4)
        };
        let pts = sample_interior(&spec, &plan).unwrap();
        let near = pts.iter().filter(|p| p.x.hypot(p.y) <= 2.0).count();
        assert!((49_000..=51_000).contains(&near), "{near}");
        assert!(pts.iter().all(|p| p.x.hypot(p.y) > 0.5));
    }

    #[test]
    fn refinement_needs_cylinder() {
        let spec = DomainSpec::taylor_green(Interval::new(0.0, 1.0), Interval::new(0.005, 0.02));
        let plan = SamplingPlan {
            refinement: Refinement::CylinderRefined,
            ..plan(10, 1)
        };
        assert!(matches!(
            sample_interior(&spec, &plan),
            Err(SamplingError::NoCylinder(_))
        ));
    }

    #[test]
    fn boundary_points_lie_on_their_boundaries() {
        let spec = DomainSpec::default();
        let pts = sample_boundary(&spec, BoundaryCounts::uniform(200), 5).unwrap();
        assert_eq!(pts.len(), 200 * 6);
        for p in &pts {
            assert!(p.boundary_distance(&spec).unwrap() < BOUNDARY_TOL, "{p:?}");
            match p.kind {
                PointKind::Inlet => assert_eq!(p.x, spec.x.lo),
                PointKind::Outlet => assert_eq!(p.x, spec.x.hi),
                PointKind::Cylinder => assert!((p.x * p.x + p.y * p.y - 0.25).abs() < 1e-12),
                PointKind::Initial => {
                    assert_eq!(p.t, spec.t.lo);
                    assert!(!spec.in_obstacle(p.x, p.y));
                }
                _ => {}
            }
        }
        let pairs: Vec<_> = pts.iter().filter(|p| p.kind == PointKind::PeriodicPair).collect();
        for pair in pairs.chunks(2) {
            assert_eq!((pair[0].x, pair[0].t, pair[0].nu), (pair[1].x, pair[1].t, pair[1].nu));
            assert_eq!((pair[0].y, pair[1].y), (spec.y.lo, spec.y.hi));
            assert_eq!(pair[0].periodic_partner(&spec), *pair[1]);
        }
    }

    #[test]
    fn parameter_grid() {
        let spec = DomainSpec::default();
        let base = plan(1, 2);
        let pts = sample_parameter_grid(&spec, &[0.002], 100, &base).unwrap();
        assert!(pts.iter().all(|p| p.nu == 0.002));

        let grid = [0.002, 0.0025, 0.003, 0.005, 0.010];
        let pts = sample_parameter_grid(&spec, &grid, 1000, &base).unwrap();
        assert_eq!(pts.len(), 5000);
        let mut distinct: Vec<f64> = pts.iter().map(|p| p.nu).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct, grid);

        assert!(matches!(
            sample_parameter_grid(&spec, &[0.02], 10, &base),
            Err(SamplingError::NuOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_plan() {
        let spec = DomainSpec::default();
        let bad = SamplingPlan {
            refinement_fraction: 1.5,
            ..plan(10, 0)
        };
        assert!(matches!(
            sample_interior(&spec, &bad),
            Err(SamplingError::InvalidPlan(_))
        ));
        assert!(matches!(
            sample_interior(&spec, &plan(0, 0)),
            Err(SamplingError::InvalidPlan(_))
        ));
    }
}
