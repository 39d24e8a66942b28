//! Differentiation core.
//!
//! Two cooperating pieces live here:
//!
//! * [`ComputationRecord`], a reverse-mode tape whose nodes carry a value and
//!   up to two forward-mode tangents. Residuals assembled from input
//!   derivatives stay differentiable with respect to the model parameters.
//! * [`Dual2`], a lightweight `(value, d1, d2)` triple for fast
//!   evaluation of first and pure second directional derivatives when no
//!   parameter gradient is needed.
//!
//! Both implement [`Algebra`], so a field is written once (see
//! [`ScalarField`]) and evaluated with plain floats, forward jets or on a tape.

mod jet;
mod record;

pub use jet::{Dual2, Forward};
pub use record::{ComputationRecord, DiffValue, GradientVector, NodeId};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("operand belongs to record {found}, expected record {expected}")]
    MixedRecords { expected: u64, found: u64 },
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("operation {op} expects {expected} operands, got {found}")]
    Arity {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),
    #[error("parameter index {index} out of range for {count} parameters")]
    ParameterIndex { index: usize, count: usize },
}

/// The closed set of primitives a differentiable computation may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Sin,
    Cos,
    Exp,
    PowInt(i32),
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::Tanh => "tanh",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::Exp => "exp",
            OpKind::PowInt(_) => "pow_int",
        }
    }

    /// Parses a primitive by name. `pow_int` takes its exponent from
    /// `exponent`, which is ignored for every other kind.
    pub fn from_name(name: &str, exponent: i32) -> Result<Self, AutodiffError> {
        Ok(match name {
            "add" => OpKind::Add,
            "sub" => OpKind::Sub,
            "mul" => OpKind::Mul,
            "div" => OpKind::Div,
            "neg" => OpKind::Neg,
            "tanh" => OpKind::Tanh,
            "sin" => OpKind::Sin,
            "cos" => OpKind::Cos,
            "exp" => OpKind::Exp,
            "pow_int" => OpKind::PowInt(exponent),
            other => return Err(AutodiffError::UnsupportedPrimitive(other.to_string())),
        })
    }

    pub(crate) fn check_arity(self, found: usize) -> Result<(), AutodiffError> {
        if found == self.arity() {
            Ok(())
        } else {
            Err(AutodiffError::Arity {
                op: self.name(),
                expected: self.arity(),
                found,
            })
        }
    }
}

/// `[φ(a), φ'(a), φ''(a), φ'''(a)]` for a unary primitive.
///
/// The third derivative is what the tape needs to differentiate a second
/// tangent with respect to its operand.
pub(crate) fn unary_derivatives(op: OpKind, a: f64) -> Result<[f64; 4], AutodiffError> {
    Ok(match op {
        OpKind::Neg => [-a, -1.0, 0.0, 0.0],
        OpKind::Tanh => {
            let s = a.tanh();
            let d1 = 1.0 - s * s;
            let d2 = -2.0 * s * d1;
            let d3 = -2.0 * d1 * d1 - 2.0 * s * d2;
            [s, d1, d2, d3]
        }
        OpKind::Sin => {
            let (s, c) = a.sin_cos();
            [s, c, -s, -c]
        }
        OpKind::Cos => {
            let (s, c) = a.sin_cos();
            [c, -s, -c, s]
        }
        OpKind::Exp => {
            let e = a.exp();
            [e, e, e, e]
        }
        OpKind::PowInt(n) => {
            if n < 0 && a == 0.0 {
                return Err(AutodiffError::DivisionByZero);
            }
            let nf = n as f64;
            let pow = |k: i32| if n - k == 0 { 1.0 } else { a.powi(n - k) };
            [
                a.powi(n),
                nf * pow(1),
                nf * (nf - 1.0) * pow(2),
                nf * (nf - 1.0) * (nf - 2.0) * pow(3),
            ]
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            return Err(AutodiffError::Arity {
                op: op.name(),
                expected: 2,
                found: 1,
            })
        }
    })
}

/// A number system in which fields are evaluated.
///
/// `apply` is the single entry point for primitives; the named helpers are
/// shorthands over it.
pub trait Algebra {
    type Value: Clone;

    fn constant(&mut self, c: f64) -> Self::Value;

    /// A trainable parameter. Only the tape distinguishes these from constants.
    fn parameter(&mut self, index: usize, value: f64) -> Result<Self::Value, AutodiffError> {
        let _ = index;
        Ok(self.constant(value))
    }

    fn apply(&mut self, op: OpKind, args: &[&Self::Value]) -> Result<Self::Value, AutodiffError>;

    fn value_of(&self, v: &Self::Value) -> f64;

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Add, &[a, b])
    }
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Sub, &[a, b])
    }
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Mul, &[a, b])
    }
    fn div(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Div, &[a, b])
    }
    fn neg(&mut self, a: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Neg, &[a])
    }
    fn tanh(&mut self, a: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Tanh, &[a])
    }
    fn sin(&mut self, a: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Sin, &[a])
    }
    fn cos(&mut self, a: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Cos, &[a])
    }
    fn exp(&mut self, a: &Self::Value) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::Exp, &[a])
    }
    fn powi(&mut self, a: &Self::Value, n: i32) -> Result<Self::Value, AutodiffError> {
        self.apply(OpKind::PowInt(n), &[a])
    }

    /// `c * a`, with `c` entering as a constant.
    fn scale(&mut self, a: &Self::Value, c: f64) -> Result<Self::Value, AutodiffError> {
        let c = self.constant(c);
        self.mul(&c, a)
    }

    /// `a + c`, with `c` entering as a constant.
    fn offset(&mut self, a: &Self::Value, c: f64) -> Result<Self::Value, AutodiffError> {
        let c = self.constant(c);
        self.add(a, &c)
    }
}

/// Ordinary double-precision arithmetic.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Algebra for Plain {
    type Value = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }

    fn apply(&mut self, op: OpKind, args: &[&f64]) -> Result<f64, AutodiffError> {
        op.check_arity(args.len())?;
        Ok(match op {
            OpKind::Add => args[0] + args[1],
            OpKind::Sub => args[0] - args[1],
            OpKind::Mul => args[0] * args[1],
            OpKind::Div => {
                if *args[1] == 0.0 {
                    return Err(AutodiffError::DivisionByZero);
                }
                args[0] / args[1]
            }
            unary => unary_derivatives(unary, *args[0])?[0],
        })
    }

    fn value_of(&self, v: &f64) -> f64 {
        *v
    }
}

/// Input coordinate along which a directional derivative is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X,
    Y,
    T,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::X, Direction::Y, Direction::T];

    pub fn index(self) -> usize {
        match self {
            Direction::X => 0,
            Direction::Y => 1,
            Direction::T => 2,
        }
    }
}

/// A scalar function of `(x, y, t, ν)` expressed through [`Algebra`].
pub trait ScalarField {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<A::Value, AutodiffError>;
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<A::Value, AutodiffError> {
        (**self).eval(alg, q)
    }
}

/// A map `(x, y, t, ν) → (u, v, p)` expressed through [`Algebra`].
pub trait VectorField {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError>;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<[A::Value; 3], AutodiffError> {
        (**self).eval(alg, q)
    }
}

/// One output component of a [`VectorField`] as a [`ScalarField`].
#[derive(Debug, Clone, Copy)]
pub struct Component<F>(pub F, pub usize);

impl<F: VectorField> ScalarField for Component<F> {
    fn eval<A: Algebra>(&self, alg: &mut A, q: &[A::Value; 4]) -> Result<A::Value, AutodiffError> {
        let [u, v, p] = self.0.eval(alg, q)?;
        Ok(match self.1 {
            0 => u,
            1 => v,
            _ => p,
        })
    }
}

/// Value, first and pure second derivative of `func` along `direction`,
/// obtained by seeding tangent 1 and second tangent 0 on that coordinate.
pub fn directional_derivatives<F: ScalarField>(
    func: &F,
    point: [f64; 4],
    direction: Direction,
) -> Result<(f64, f64, f64), AutodiffError> {
    let q = Dual2::seeded(point, direction);
    let out = func.eval(&mut Forward, &q)?;
    Ok((out.v, out.d1, out.d2))
}
