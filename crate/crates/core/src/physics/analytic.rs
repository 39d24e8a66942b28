//! Closed-form flows used as references and in tests.

use crate::autodiff::{Algebra, AutodiffError, VectorField};

/// Decaying Taylor-Green vortex on the `2π`-periodic box:
/// `u = −cos x sin y e^{−2νt}`, `v = sin x cos y e^{−2νt}`,
/// `p = −¼ (cos 2x + cos 2y) e^{−4νt}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TaylorGreen;

impl TaylorGreen {
    /// Same operation order as the [`VectorField`] evaluation, so both
    /// agree bit for bit.
    pub fn exact(x: f64, y: f64, t: f64, nu: f64) -> [f64; 3] {
        let decay = ((nu * t) * -2.0).exp();
        [
            -(x.cos() * y.sin()) * decay,
            (x.sin() * y.cos()) * decay,
            (((x * 2.0).cos() + (y * 2.0).cos()) * -0.25) * (decay * decay),
        ]
    }

    pub fn exact_vorticity(x: f64, y: f64, t: f64, nu: f64) -> f64 {
        2.0 * x.cos() * y.cos() * (-2.0 * nu * t).exp()
    }
}

impl VectorField for TaylorGreen {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        let [x, y, t, nu] = q;
        let nu_t = alg.mul(nu, t)?;
        let arg = alg.scale(&nu_t, -2.0)?;
        let decay = alg.exp(&arg)?;
        let (cx, sx) = (alg.cos(x)?, alg.sin(x)?);
        let (cy, sy) = (alg.cos(y)?, alg.sin(y)?);

        let cs = alg.mul(&cx, &sy)?;
        let neg = alg.neg(&cs)?;
        let u = alg.mul(&neg, &decay)?;

        let sc = alg.mul(&sx, &cy)?;
        let v = alg.mul(&sc, &decay)?;

        let x2 = alg.scale(x, 2.0)?;
        let y2 = alg.scale(y, 2.0)?;
        let c2x = alg.cos(&x2)?;
        let c2y = alg.cos(&y2)?;
        let sum = alg.add(&c2x, &c2y)?;
        let quarter = alg.scale(&sum, -0.25)?;
        let decay2 = alg.mul(&decay, &decay)?;
        let p = alg.mul(&quarter, &decay2)?;
        Ok([u, v, p])
    }
}

/// `u = 1, v = 0, p = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformFlow;

impl VectorField for UniformFlow {
    fn eval<A: Algebra>(&self, alg: &mut A, _q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        Ok([alg.constant(1.0), alg.constant(0.0), alg.constant(0.0)])
    }
}

/// Solid-body rotation `u = −y, v = x, p = ½(x² + y²)`; vorticity 2.
#[derive(Debug, Clone, Copy, Default)]
pub struct RigidRotation;

impl VectorField for RigidRotation {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        let u = alg.neg(&q[1])?;
        let x2 = alg.powi(&q[0], 2)?;
        let y2 = alg.powi(&q[1], 2)?;
        let r2 = alg.add(&x2, &y2)?;
        let p = alg.scale(&r2, 0.5)?;
        Ok([u, q[0].clone(), p])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Plain;

    #[test]
    fn generic_path_matches_closed_form() {
        for &(x, y, t, nu) in &[(0.3, 1.7, 0.0, 0.01), (4.0, 2.2, 3.5, 0.005), (6.1, 0.1, 9.0, 0.002)] {
            let a = TaylorGreen.eval(&mut Plain, &[x, y, t, nu]).unwrap();
            let b = TaylorGreen::exact(x, y, t, nu);
            for k in 0..3 {
                assert_eq!(a[k], b[k]);
            }
        }
    }
}
