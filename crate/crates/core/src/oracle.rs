//! Self-checks against closed-form answers, run by `pinn-ns check`.

use std::f64::consts::{PI, TAU};

use crate::autodiff::{Algebra, AutodiffError, ComputationRecord, VectorField};
use crate::data::{read_snapshots, taylor_green_dataset, write_snapshots, SpaceTimeBox};
use crate::eval::time_shift;
use crate::network::{Interval, Network, NetworkConfig};
use crate::physics::analytic::TaylorGreen;
use crate::physics::{cylinder_panels, lift_force, residuals, FlowField};
use crate::rng;
use crate::sampling::DomainSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, error: f64, bound: f64) -> OracleCheck {
    OracleCheck {
        name,
        passed: error <= bound,
        detail: format!("max error {error:.3e} (bound {bound:.0e})"),
    }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> OracleCheck {
    OracleCheck {
        name,
        passed: false,
        detail: err.to_string(),
    }
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Zero velocity with pressure `a·x + b·y + c`.
struct LinearPressure(f64, f64, f64);

impl VectorField for LinearPressure {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        let ax = alg.scale(&q[0], self.0)?;
        let by = alg.scale(&q[1], self.1)?;
        let sum = alg.add(&ax, &by)?;
        let p = alg.offset(&sum, self.2)?;
        Ok([alg.constant(0.0), alg.constant(0.0), p])
    }
}

fn random_points(n: usize, domain: &DomainSpec, seed: u64) -> Vec<[f64; 4]> {
    let mut g = rng::generator(seed);
    (0..n)
        .map(|_| {
            [
                rng::uniform(&mut g, domain.x.lo, domain.x.hi),
                rng::uniform(&mut g, domain.y.lo, domain.y.hi),
                rng::uniform(&mut g, domain.t.lo, domain.t.hi),
                rng::uniform(&mut g, domain.nu.lo, domain.nu.hi),
            ]
        })
        .collect()
}

fn residual_nullity() -> OracleCheck {
    let domain = DomainSpec::taylor_green(Interval::new(0.0, 10.0), Interval::new(0.002, 0.010));
    let mut worst: f64 = 0.0;
    for q in random_points(1000, &domain, 1) {
        match residuals(&TaylorGreen, q) {
            Ok(r) => worst = worst.max(r.f.abs()).max(r.g.abs()).max(r.h.abs()),
            Err(e) => return failed("residual-nullity", e),
        }
    }
    check("residual-nullity", worst, 1e-9)
}

fn lift_closed_forms() -> Vec<OracleCheck> {
    let panels = match cylinder_panels(1024, 1.0) {
        Ok(p) => p,
        Err(e) => return vec![failed("lift-linear-pressure", e)],
    };
    let lift = |f: &LinearPressure| lift_force(f, 0.0, 0.01, &panels);
    let mut out = Vec::new();
    match lift(&LinearPressure(0.0, 1.0, 0.0)) {
        Ok(l) => out.push(check("lift-linear-pressure", (l + PI * 0.25).abs(), 1e-6)),
        Err(e) => out.push(failed("lift-linear-pressure", e)),
    }
    match lift(&LinearPressure(0.7, 0.0, 3.0)) {
        Ok(l) => out.push(check("lift-constant-pressure", l.abs(), 1e-12)),
        Err(e) => out.push(failed("lift-constant-pressure", e)),
    }
    out
}

/// Derivatives of a freshly initialized network against central
/// differences: first derivatives with step 1e-5, pure second derivatives
/// with step 1e-3.
fn network_derivatives() -> Vec<OracleCheck> {
    let domain = DomainSpec::taylor_green(Interval::new(0.0, 1.0), Interval::new(0.005, 0.02));
    let config = NetworkConfig {
        fourier_bins: 16,
        hidden_layers: 3,
        hidden_width: 32,
        ..NetworkConfig::default()
    };
    let net = match Network::initialized(config, domain.normalizer(), 11) {
        Ok(n) => n,
        Err(e) => return vec![failed("network-first-derivatives", e)],
    };
    let points = random_points(20, &domain, 12);
    let jets = match net.jets_many(&points) {
        Ok(j) => j,
        Err(e) => return vec![failed("network-first-derivatives", e)],
    };
    let value = |q: [f64; 4]| net.values(q).unwrap_or([f64::NAN; 3]);
    let (mut first, mut second): (f64, f64) = (0.0, 0.0);
    for (q, j) in points.iter().zip(&jets) {
        let comps = [j.u, j.v, j.p];
        for axis in 0..3 {
            let shifted = |h: f64| {
                let mut p = *q;
                p[axis] += h;
                value(p)
            };
            let (h1, h2) = (1e-5, 1e-3);
            let (up1, down1) = (shifted(h1), shifted(-h1));
            let (up2, down2, mid) = (shifted(h2), shifted(-h2), value(*q));
            for (k, d) in comps.iter().enumerate() {
                let exact1 = [d.dx, d.dy, d.dt][axis];
                let fd1 = (up1[k] - down1[k]) / (2.0 * h1);
                first = first.max(relative_error(exact1, fd1, 1e-2));
                if axis < 2 {
                    let exact2 = [d.dxx, d.dyy][axis];
                    let fd2 = (up2[k] - 2.0 * mid[k] + down2[k]) / (h2 * h2);
                    second = second.max(relative_error(exact2, fd2, 1e-2));
                }
            }
        }
    }
    vec![
        check("network-first-derivatives", first, 1e-6),
        check("network-second-derivatives", second, 1e-5),
    ]
}

/// Reverse-mode gradient of a small network output with respect to its
/// parameters, against central differences.
fn tape_gradient() -> OracleCheck {
    let domain = DomainSpec::taylor_green(Interval::new(0.0, 1.0), Interval::new(0.005, 0.02));
    let config = NetworkConfig {
        fourier_bins: 3,
        hidden_layers: 2,
        hidden_width: 5,
        ..NetworkConfig::default()
    };
    let mut net = match Network::initialized(config, domain.normalizer(), 5) {
        Ok(n) => n,
        Err(e) => return failed("tape-gradient", e),
    };
    let q = [1.3, 4.2, 0.6, 0.011];
    let n = net.params.trainable().len();
    let grad = {
        let mut rec = ComputationRecord::new(n);
        let inputs = q.map(|v| rec.constant(v));
        let out = net.as_field().eval(&mut rec, &inputs);
        match out.and_then(|o| rec.backward(o[0].node_id())) {
            Ok(g) => g.into_vec(),
            Err(e) => return failed("tape-gradient", e),
        }
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in (0..n).step_by(7) {
        let orig = net.params.trainable()[i];
        let mut u = |v: f64| {
            net.params.trainable_mut()[i] = v;
            net.values(q).map(|o| o[0]).unwrap_or(f64::NAN)
        };
        let fd = (u(orig + h) - u(orig - h)) / (2.0 * h);
        net.params.trainable_mut()[i] = orig;
        worst = worst.max(relative_error(grad[i], fd, 1e-3));
    }
    check("tape-gradient", worst, 1e-6)
}

fn shifted_sinusoid() -> OracleCheck {
    let dt = 0.01;
    let n = (4.0 * TAU / dt) as usize;
    let reference: Vec<f64> = (0..n).map(|i| (i as f64 * dt).sin()).collect();
    let pred: Vec<f64> = (0..n).map(|i| (i as f64 * dt - 0.5).sin()).collect();
    match time_shift(&pred, &reference, dt) {
        Ok(lag) => check("time-shift", (lag - 0.5).abs(), dt),
        Err(e) => failed("time-shift", e),
    }
}

fn snapshot_round_trip() -> OracleCheck {
    let bbox = SpaceTimeBox::periodic_cell(Interval::new(0.0, 1.0));
    let result = taylor_green_dataset(&[0.002, 0.0075], 500, bbox, 3).and_then(|pts| {
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &pts)?;
        Ok((pts, read_snapshots(buf.as_slice())?))
    });
    match result {
        Ok((a, b)) => {
            let worst = a
                .iter()
                .zip(&b)
                .flat_map(|(p, q)| {
                    [p.x, p.y, p.t, p.nu, p.u, p.v, p.p]
                        .into_iter()
                        .zip([q.x, q.y, q.t, q.nu, q.u, q.v, q.p])
                        .map(|(x, y)| relative_error(x, y, f64::MIN_POSITIVE))
                })
                .fold(0.0, f64::max);
            let same_len = a.len() == b.len();
            OracleCheck {
                passed: same_len && worst <= 1e-15,
                ..check("snapshot-round-trip", worst, 1e-15)
            }
        }
        Err(e) => failed("snapshot-round-trip", e),
    }
}

/// Every check, in a fixed order.
pub fn run_suite() -> Vec<OracleCheck> {
    let mut out = vec![residual_nullity()];
    out.extend(lift_closed_forms());
    out.extend(network_derivatives());
    out.push(tape_gradient());
    out.push(shifted_sinusoid());
    out.push(snapshot_round_trip());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let results = run_suite();
        assert_eq!(results.len(), 8);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
