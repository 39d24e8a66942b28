use super::{unary_derivatives, Algebra, AutodiffError, Direction, OpKind};

/// Second-order forward-mode number: value, first and second derivative
/// along one fixed direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Dual2 {
    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    pub const fn variable(v: f64) -> Self {
        Self { v, d1: 1.0, d2: 0.0 }
    }

    /// Lifts a point, seeding the coordinate selected by `direction`.
    pub fn seeded(point: [f64; 4], direction: Direction) -> [Dual2; 4] {
        let mut q = point.map(Dual2::constant);
        q[direction.index()].d1 = 1.0;
        q
    }

    fn unary(self, d: [f64; 4]) -> Self {
        Self {
            v: d[0],
            d1: d[1] * self.d1,
            d2: d[2] * self.d1 * self.d1 + d[1] * self.d2,
        }
    }
}

/// [`Algebra`] over [`Dual2`].
#[derive(Debug, Default, Clone, Copy)]
pub struct Forward;

impl Algebra for Forward {
    type Value = Dual2;

    fn constant(&mut self, c: f64) -> Dual2 {
        Dual2::constant(c)
    }

    fn apply(&mut self, op: OpKind, args: &[&Dual2]) -> Result<Dual2, AutodiffError> {
        op.check_arity(args.len())?;
        let a = *args[0];
        Ok(match op {
            OpKind::Add => {
                let b = *args[1];
                Dual2 {
                    v: a.v + b.v,
                    d1: a.d1 + b.d1,
                    d2: a.d2 + b.d2,
                }
            }
            OpKind::Sub => {
                let b = *args[1];
                Dual2 {
                    v: a.v - b.v,
                    d1: a.d1 - b.d1,
                    d2: a.d2 - b.d2,
                }
            }
            OpKind::Mul => {
                let b = *args[1];
                Dual2 {
                    v: a.v * b.v,
                    d1: a.d1 * b.v + a.v * b.d1,
                    d2: a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2,
                }
            }
            OpKind::Div => {
                let b = *args[1];
                if b.v == 0.0 {
                    return Err(AutodiffError::DivisionByZero);
                }
                let r = b.unary(unary_derivatives(OpKind::PowInt(-1), b.v)?);
                Dual2 {
                    v: a.v / b.v,
                    d1: a.d1 * r.v + a.v * r.d1,
                    d2: a.d2 * r.v + 2.0 * a.d1 * r.d1 + a.v * r.d2,
                }
            }
            OpKind::Neg => Dual2 {
                v: -a.v,
                d1: -a.d1,
                d2: -a.d2,
            },
            unary => a.unary(unary_derivatives(unary, a.v)?),
        })
    }

    fn value_of(&self, v: &Dual2) -> f64 {
        v.v
    }
}
