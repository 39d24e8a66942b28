//! Navier-Stokes residuals, vorticity, boundary-condition residuals and the
//! cylinder lift integral, defined over any [`FlowField`].

pub mod analytic;

use thiserror::Error;

use crate::autodiff::{AutodiffError, Direction, Dual2, Forward, VectorField};
use crate::network::{Channels, Network, NetworkError};
use crate::sampling::{DomainSpec, PointKind, SamplePoint, SamplingError};

/// Distance from a boundary beyond which a point is rejected.
pub const ON_BOUNDARY_TOL: f64 = 1e-9;

/// Panel count used for lift unless stated otherwise.
pub const DEFAULT_PANELS: usize = 360;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("field does not provide the derivatives required")]
    DerivativeUnavailable,
    #[error("{kind} point is {distance:e} away from its boundary")]
    PointOffBoundary { kind: &'static str, distance: f64 },
    #[error("at least 8 panels are required, got {0}")]
    TooFewPanels(usize),
    #[error("invalid cylinder diameter {0}")]
    InvalidDiameter(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// A scalar and the derivatives the momentum equations need.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub dxx: f64,
    pub dyy: f64,
}

impl Derivatives {
    /// Channels in the order `[value, ∂x, ∂y, ∂t, ∂xx, ∂yy]`.
    pub fn from_channels(c: [f64; 6]) -> Self {
        Self {
            value: c[0],
            dx: c[1],
            dy: c[2],
            dt: c[3],
            dxx: c[4],
            dyy: c[5],
        }
    }
}

/// `(u, v, p)` with their derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldJets {
    pub u: Derivatives,
    pub v: Derivatives,
    pub p: Derivatives,
}

/// A velocity/pressure field that can be evaluated, and usually
/// differentiated, at `(x, y, t, ν)`.
pub trait FlowField {
    fn values(&self, point: [f64; 4]) -> Result<[f64; 3], PhysicsError>;

    fn jets(&self, point: [f64; 4]) -> Result<FieldJets, PhysicsError> {
        let _ = point;
        Err(PhysicsError::DerivativeUnavailable)
    }

    fn values_many(&self, points: &[[f64; 4]]) -> Result<Vec<[f64; 3]>, PhysicsError> {
        points.iter().map(|&p| self.values(p)).collect()
    }

    fn jets_many(&self, points: &[[f64; 4]]) -> Result<Vec<FieldJets>, PhysicsError> {
        points.iter().map(|&p| self.jets(p)).collect()
    }
}

impl<F: VectorField> FlowField for F {
    fn values(&self, point: [f64; 4]) -> Result<[f64; 3], PhysicsError> {
        Ok(self.eval(&mut crate::autodiff::Plain, &point)?)
    }

    /// One forward-mode pass per direction.
    fn jets(&self, point: [f64; 4]) -> Result<FieldJets, PhysicsError> {
        let mut out = [[0.0f64; 6]; 3];
        for dir in Direction::ALL {
            let q = Dual2::seeded(point, dir);
            let r: [Dual2; 3] = self.eval(&mut Forward, &q)?;
            for (comp, d) in r.iter().enumerate() {
                out[comp][0] = d.v;
                match dir {
                    Direction::X => {
                        out[comp][1] = d.d1;
                        out[comp][4] = d.d2;
                    }
                    Direction::Y => {
                        out[comp][2] = d.d1;
                        out[comp][5] = d.d2;
                    }
                    Direction::T => out[comp][3] = d.d1,
                }
            }
        }
        Ok(FieldJets {
            u: Derivatives::from_channels(out[0]),
            v: Derivatives::from_channels(out[1]),
            p: Derivatives::from_channels(out[2]),
        })
    }
}

impl FlowField for Network {
    fn values(&self, point: [f64; 4]) -> Result<[f64; 3], PhysicsError> {
        let pred = self.forward(point)?;
        Ok([pred.u, pred.v, pred.p])
    }

    fn jets(&self, point: [f64; 4]) -> Result<FieldJets, PhysicsError> {
        Ok(self.jets_many(&[point])?[0])
    }

    fn values_many(&self, points: &[[f64; 4]]) -> Result<Vec<[f64; 3]>, PhysicsError> {
        Ok(self
            .forward_batch(points)?
            .into_iter()
            .map(|p| [p.u, p.v, p.p])
            .collect())
    }

    fn jets_many(&self, points: &[[f64; 4]]) -> Result<Vec<FieldJets>, PhysicsError> {
        const CHUNK: usize = 2048;
        let mut result = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK) {
            let out = self.batch_forward(chunk, Channels::Jets);
            for (i, point) in chunk.iter().enumerate() {
                let comp = |k: usize| Derivatives::from_channels(std::array::from_fn(|c| out.get(i, c, k)));
                let jets = FieldJets {
                    u: comp(0),
                    v: comp(1),
                    p: comp(2),
                };
                let finite = [jets.u, jets.v, jets.p]
                    .iter()
                    .all(|d| [d.value, d.dx, d.dy, d.dt, d.dxx, d.dyy].iter().all(|v| v.is_finite()));
                if !finite {
                    return Err(NetworkError::NonFiniteOutput(*point).into());
                }
                result.push(jets);
            }
        }
        Ok(result)
    }
}

/// Continuity (`f`) and momentum (`g`, `h`) residuals at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualTriple {
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

impl ResidualTriple {
    pub fn squared_norm(&self) -> f64 {
        self.f * self.f + self.g * self.g + self.h * self.h
    }
}

/// Residuals from precomputed derivatives, with `ν = 1/Re` as the viscous
/// coefficient.
pub fn residuals_from_jets(j: &FieldJets, nu: f64) -> ResidualTriple {
    let (u, v, p) = (&j.u, &j.v, &j.p);
    ResidualTriple {
        f: u.dx + v.dy,
        g: u.dt + u.value * u.dx + v.value * u.dy + p.dx - nu * (u.dxx + u.dyy),
        h: v.dt + u.value * v.dx + v.value * v.dy + p.dy - nu * (v.dxx + v.dyy),
    }
}

/// `f² + g² + h²` and its partial derivatives with respect to every entry of
/// the jets, in the layout `[component][value, ∂x, ∂y, ∂t, ∂xx, ∂yy]`.
pub fn squared_residual_gradient(j: &FieldJets, nu: f64) -> (f64, [[f64; 6]; 3]) {
    let r = residuals_from_jets(j, nu);
    let (u, v) = (&j.u, &j.v);
    let (f2, g2, h2) = (2.0 * r.f, 2.0 * r.g, 2.0 * r.h);
    let mut d = [[0.0; 6]; 3];
    // u
    d[0][0] = g2 * u.dx + h2 * v.dx;
    d[0][1] = f2 + g2 * u.value;
    d[0][2] = g2 * v.value;
    d[0][3] = g2;
    d[0][4] = -g2 * nu;
    d[0][5] = -g2 * nu;
    // v
    d[1][0] = g2 * u.dy + h2 * v.dy;
    d[1][1] = h2 * u.value;
    d[1][2] = f2 + h2 * v.value;
    d[1][3] = h2;
    d[1][4] = -h2 * nu;
    d[1][5] = -h2 * nu;
    // p
    d[2][1] = g2;
    d[2][2] = h2;
    (r.squared_norm(), d)
}

pub fn residuals<F: FlowField + ?Sized>(field: &F, point: [f64; 4]) -> Result<ResidualTriple, PhysicsError> {
    Ok(residuals_from_jets(&field.jets(point)?, point[3]))
}

/// `ω = ∂v/∂x − ∂u/∂y`.
pub fn vorticity<F: FlowField + ?Sized>(field: &F, point: [f64; 4]) -> Result<f64, PhysicsError> {
    let j = field.jets(point)?;
    Ok(j.v.dx - j.u.dy)
}

/// Boundary conditions of the cylinder-flow problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub domain: DomainSpec,
    /// Velocity imposed at the inlet.
    pub inlet_velocity: [f64; 2],
    /// Pressure imposed at the outlet.
    pub outlet_pressure: f64,
    /// Velocity imposed at `t = t_min`.
    pub initial_velocity: [f64; 2],
}

impl BoundarySpec {
    pub fn new(domain: DomainSpec) -> Self {
        Self {
            domain,
            inlet_velocity: [1.0, 0.0],
            outlet_pressure: 0.0,
            initial_velocity: [1.0, 0.0],
        }
    }
}

/// What a boundary point constrains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// `out[k] − target[k]` for each listed component.
    Dirichlet {
        components: &'static [usize],
        target: [f64; 3],
    },
    /// All of `(u, v, p)` at the top edge minus the bottom edge.
    Periodic { on_top: bool },
}

impl BoundarySpec {
    /// The condition imposed at `point`; interior points are treated as
    /// lying on no boundary and get an empty condition.
    pub fn condition(&self, point: &SamplePoint) -> Condition {
        const VELOCITY: &[usize] = &[0, 1];
        let velocity = |[u, v]: [f64; 2]| Condition::Dirichlet {
            components: VELOCITY,
            target: [u, v, 0.0],
        };
        match point.kind {
            PointKind::Inlet => velocity(self.inlet_velocity),
            PointKind::Cylinder => velocity([0.0, 0.0]),
            PointKind::Initial => velocity(self.initial_velocity),
            PointKind::Outlet => Condition::Dirichlet {
                components: &[2],
                target: [0.0, 0.0, self.outlet_pressure],
            },
            PointKind::PeriodicPair => Condition::Periodic {
                on_top: (point.y - self.domain.y.hi).abs() < (point.y - self.domain.y.lo).abs(),
            },
            PointKind::Interior => Condition::Dirichlet {
                components: &[],
                target: [0.0; 3],
            },
        }
    }
}

/// Mismatch of `field` against the condition of `point.kind`:
/// inlet `(u − 1, v)`, cylinder `(u, v)`, outlet `(p)`, periodic
/// `(u_top − u_bottom, v_top − v_bottom, p_top − p_bottom)`, initial
/// `(u − u₀, v − v₀)`.
pub fn boundary_residuals<F: FlowField + ?Sized>(
    field: &F,
    spec: &BoundarySpec,
    point: &SamplePoint,
) -> Result<Vec<f64>, PhysicsError> {
    let distance = point.boundary_distance(&spec.domain)?;
    if distance > ON_BOUNDARY_TOL || point.kind == PointKind::Interior {
        return Err(PhysicsError::PointOffBoundary {
            kind: point.kind.name(),
            distance,
        });
    }
    let own = field.values(point.coords())?;
    Ok(match spec.condition(point) {
        Condition::Dirichlet { components, target } => components.iter().map(|&k| own[k] - target[k]).collect(),
        Condition::Periodic { on_top } => {
            let partner = field.values(point.periodic_partner(&spec.domain).coords())?;
            let (top, bottom) = if on_top { (own, partner) } else { (partner, own) };
            (0..3).map(|k| top[k] - bottom[k]).collect()
        }
    })
}

/// A quadrature node on the cylinder surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub n_x: f64,
    pub n_y: f64,
    pub ds: f64,
}

/// `n` equally spaced nodes on the circle of diameter `diameter` at the
/// origin with outward normals and equal closed-trapezoid weights.
pub fn cylinder_panels(n: usize, diameter: f64) -> Result<Vec<SurfacePoint>, PhysicsError> {
    if n < 8 {
        return Err(PhysicsError::TooFewPanels(n));
    }
    panels_unchecked(n, diameter)
}

fn panels_unchecked(n: usize, diameter: f64) -> Result<Vec<SurfacePoint>, PhysicsError> {
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(PhysicsError::InvalidDiameter(diameter));
    }
    let r = 0.5 * diameter;
    let ds = std::f64::consts::TAU * r / n as f64;
    Ok((0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            let (sn, cs) = theta.sin_cos();
            SurfacePoint {
                theta,
                x: r * cs,
                y: r * sn,
                n_x: cs,
                n_y: sn,
                ds,
            }
        })
        .collect())
}

/// `∮ [−p n_y + 2ν ∂v/∂y n_y + ν (∂u/∂y + ∂v/∂x) n_x] ds` over `panels`.
pub fn lift_force<F: FlowField + ?Sized>(
    field: &F,
    t: f64,
    nu: f64,
    panels: &[SurfacePoint],
) -> Result<f64, PhysicsError> {
    let points: Vec<[f64; 4]> = panels.iter().map(|s| [s.x, s.y, t, nu]).collect();
    let jets = field.jets_many(&points)?;
    Ok(panels
        .iter()
        .zip(&jets)
        .map(|(s, j)| {
            let traction = -j.p.value * s.n_y + 2.0 * nu * j.v.dy * s.n_y + nu * (j.u.dy + j.v.dx) * s.n_x;
            traction * s.ds
        })
        .sum())
}
