//! Second-order jets over the four space-time inputs `(x, y, z, τ)`.
//!
//! A [`Jet2`] carries a value together with its gradient and Hessian. The
//! Hessian is stored as its 10 upper-triangular entries, so mixed partials
//! are symmetric by construction.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Number of network inputs: three spatial coordinates and scaled time.
pub const NUM_INPUTS: usize = 4;

/// Unique entries of a symmetric 4×4 matrix.
pub const HESS_LEN: usize = 10;

/// Index pairs `(i, j)`, `i <= j`, in storage order.
pub const HESS_PAIRS: [(usize, usize); HESS_LEN] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Storage slot of the Hessian entry `(i, j)` (either order).
pub const fn hess_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    // rows start at 0, 4, 7, 9
    let row_start = match a {
        0 => 0,
        1 => 4,
        2 => 7,
        _ => 9,
    };
    row_start + (b - a)
}

/// Highest derivative order carried through a computation.
///
/// Lower orders skip work: value-only evaluation needs 1 component per unit,
/// gradients 5, full Hessians 15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    /// Number of stored components per unit.
    pub const fn components(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 1 + NUM_INPUTS,
            JetOrder::Hessian => 1 + NUM_INPUTS + HESS_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; NUM_INPUTS],
    pub hess: [f64; HESS_LEN],
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        value: 0.0,
        grad: [0.0; NUM_INPUTS],
        hess: [0.0; HESS_LEN],
    };

    pub fn constant(value: f64) -> Self {
        Jet2 {
            value,
            ..Jet2::ZERO
        }
    }

    /// The coordinate function for input `axis`, evaluated at `value`.
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut jet = Jet2::constant(value);
        jet.grad[axis] = 1.0;
        jet
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[hess_index(i, j)]
    }

    /// Full 4×4 Hessian.
    pub fn hess_matrix(&self) -> [[f64; NUM_INPUTS]; NUM_INPUTS] {
        let mut m = [[0.0; NUM_INPUTS]; NUM_INPUTS];
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            m[i][j] = self.hess[k];
            m[j][i] = self.hess[k];
        }
        m
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Jet2 {
            value: alpha * self.value,
            grad: self.grad.map(|g| alpha * g),
            hess: self.hess.map(|h| alpha * h),
        }
    }

    /// Drops components above `order`.
    pub fn truncate(&self, order: JetOrder) -> Self {
        match order {
            JetOrder::Hessian => *self,
            JetOrder::Gradient => Jet2 {
                hess: [0.0; HESS_LEN],
                ..*self
            },
            JetOrder::Value => Jet2::constant(self.value),
        }
    }

    /// `sin(omega * a)` with exact chain rule through second order.
    pub fn sin_scaled(&self, omega: f64) -> Self {
        let (s, c) = (omega * self.value).sin_cos();
        let d1 = omega * c;
        let d2 = -omega * omega * s;
        self.compose(s, d1, d2)
    }

    pub fn sin(&self) -> Self {
        self.sin_scaled(1.0)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    /// Applies a scalar function with value `f`, derivative `d1` and second
    /// derivative `d2` at `self.value`.
    pub fn compose(&self, f: f64, d1: f64, d2: f64) -> Self {
        let mut out = Jet2 {
            value: f,
            grad: self.grad.map(|g| d1 * g),
            hess: [0.0; HESS_LEN],
        };
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            out.hess[k] = d1 * self.hess[k] + d2 * self.grad[i] * self.grad[j];
        }
        out
    }

    pub fn max_abs_grad(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        self += rhs;
        self
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, rhs: Jet2) {
        self.value += rhs.value;
        for (a, b) in self.grad.iter_mut().zip(rhs.grad) {
            *a += b;
        }
        for (a, b) in self.hess.iter_mut().zip(rhs.hess) {
            *a += b;
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}

/// Product rule through second order.
impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, b: Jet2) -> Jet2 {
        let a = self;
        let mut out = Jet2 {
            value: a.value * b.value,
            grad: [0.0; NUM_INPUTS],
            hess: [0.0; HESS_LEN],
        };
        for i in 0..NUM_INPUTS {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        }
        for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
            out.hess[k] = a.hess[k] * b.value
                + a.grad[i] * b.grad[j]
                + a.grad[j] * b.grad[i]
                + a.value * b.hess[k];
        }
        out
    }
}

/// Adjoint of [`Jet2::sin_scaled`]: given the pre-activation `a` and the
/// adjoint of the output, returns the adjoint of `a`.
pub(crate) fn sin_scaled_adjoint(a: &Jet2, omega: f64, out_bar: &Jet2) -> Jet2 {
    let (s, c) = (omega * a.value).sin_cos();
    let d1 = omega * c;
    let d2 = -omega * omega * s;
    let d3 = -omega * omega * omega * c;

    let mut bar = Jet2::ZERO;
    // value: s
    bar.value += out_bar.value * d1;
    // grad_i: d1 * a_i
    for i in 0..NUM_INPUTS {
        bar.value += out_bar.grad[i] * d2 * a.grad[i];
        bar.grad[i] += out_bar.grad[i] * d1;
    }
    // hess_ij: d1 * a_ij + d2 * a_i * a_j
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        let ob = out_bar.hess[k];
        if ob == 0.0 {
            continue;
        }
        bar.value += ob * (d2 * a.hess[k] + d3 * a.grad[i] * a.grad[j]);
        bar.hess[k] += ob * d1;
        bar.grad[i] += ob * d2 * a.grad[j];
        bar.grad[j] += ob * d2 * a.grad[i];
    }
    bar
}

/// Adjoint of the product `a * b`: returns `(a_bar, b_bar)`.
pub(crate) fn product_adjoint(a: &Jet2, b: &Jet2, out_bar: &Jet2) -> (Jet2, Jet2) {
    let mut abar = Jet2::ZERO;
    let mut bbar = Jet2::ZERO;
    abar.value += out_bar.value * b.value;
    bbar.value += out_bar.value * a.value;
    for i in 0..NUM_INPUTS {
        let ob = out_bar.grad[i];
        abar.grad[i] += ob * b.value;
        abar.value += ob * b.grad[i];
        bbar.grad[i] += ob * a.value;
        bbar.value += ob * a.grad[i];
    }
    for (k, &(i, j)) in HESS_PAIRS.iter().enumerate() {
        let ob = out_bar.hess[k];
        if ob == 0.0 {
            continue;
        }
        abar.hess[k] += ob * b.value;
        abar.value += ob * b.hess[k];
        bbar.hess[k] += ob * a.value;
        bbar.value += ob * a.hess[k];
        abar.grad[i] += ob * b.grad[j];
        abar.grad[j] += ob * b.grad[i];
        bbar.grad[j] += ob * a.grad[i];
        bbar.grad[i] += ob * a.grad[j];
    }
    (abar, bbar)
}
