//! Two-dimensional vectors and symmetric 2×2 matrices.
//!
//! Everything here is closed form; the only matrices the crate needs are
//! covariances and their inverses, so a symmetric type keeps `Σ₀₁ = Σ₁₀`
//! structurally rather than by convention.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in the board plane, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `angle` radians from the x axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Outer product `self · selfᵀ`.
    pub fn outer(self) -> SymMat2 {
        SymMat2::new(self.x * self.x, self.x * self.y, self.y * self.y)
    }

    /// Arithmetic mean, `None` for an empty slice.
    pub fn mean(points: &[Vec2]) -> Option<Vec2> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
        Some(sum / points.len() as f64)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub const IDENTITY: SymMat2 = SymMat2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        SymMat2 { xx, xy, yy }
    }

    pub const fn diagonal(xx: f64, yy: f64) -> Self {
        SymMat2 { xx, xy: 0.0, yy }
    }

    pub fn scaled_identity(s: f64) -> Self {
        SymMat2::diagonal(s, s)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    /// Inverse, or `None` when the determinant is not strictly positive.
    ///
    /// Only positive-definite inputs are meaningful in this crate, so a
    /// non-positive determinant is treated as singular.
    pub fn inverse(&self) -> Option<SymMat2> {
        let det = self.det();
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        Some(SymMat2::new(self.yy / det, -self.xy / det, self.xx / det))
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// Quadratic form `vᵀ·self·v`.
    pub fn quad_form(&self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    /// Lower Cholesky factor `(l11, l21, l22)` with `self = L·Lᵀ`.
    pub fn cholesky(&self) -> Option<(f64, f64, f64)> {
        if !(self.xx > 0.0) {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let rem = self.yy - l21 * l21;
        if !(rem > 0.0) {
            return None;
        }
        Some((l11, l21, rem.sqrt()))
    }

    /// Closed-form eigenvalues, descending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        (mean + radius, mean - radius)
    }

    /// Closed-form eigendecomposition `self = T·diag(Λ)·Tᵀ`.
    pub fn eigen(&self) -> EigenPair {
        let (l1, l2) = self.eigenvalues();
        // Eigenvector for l1. Of the two equivalent row-based forms pick the
        // longer one; both vanish only when the matrix is a multiple of I.
        let a = Vec2::new(l1 - self.yy, self.xy);
        let b = Vec2::new(self.xy, l1 - self.xx);
        let v = if a.norm_squared() >= b.norm_squared() {
            a
        } else {
            b
        };
        let n = v.norm();
        let v1 = if n > 0.0 && n.is_finite() {
            v / n
        } else {
            Vec2::new(1.0, 0.0)
        };
        let v2 = Vec2::new(-v1.y, v1.x);
        EigenPair {
            vectors: [v1, v2],
            values: [l1, l2],
        }
    }
}

impl Add for SymMat2 {
    type Output = SymMat2;
    fn add(self, rhs: SymMat2) -> SymMat2 {
        SymMat2::new(self.xx + rhs.xx, self.xy + rhs.xy, self.yy + rhs.yy)
    }
}

impl Sub for SymMat2 {
    type Output = SymMat2;
    fn sub(self, rhs: SymMat2) -> SymMat2 {
        SymMat2::new(self.xx - rhs.xx, self.xy - rhs.xy, self.yy - rhs.yy)
    }
}

impl Mul<f64> for SymMat2 {
    type Output = SymMat2;
    fn mul(self, rhs: f64) -> SymMat2 {
        SymMat2::new(self.xx * rhs, self.xy * rhs, self.yy * rhs)
    }
}

impl Serialize for SymMat2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [[self.xx, self.xy], [self.xy, self.yy]].serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMat2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = <[[f64; 2]; 2]>::deserialize(d)?;
        if m[0][1] != m[1][0] {
            return Err(serde::de::Error::custom(format!(
                "covariance must be symmetric, got off-diagonals {} and {}",
                m[0][1], m[1][0]
            )));
        }
        Ok(SymMat2::new(m[0][0], m[0][1], m[1][1]))
    }
}

/// Orthogonal eigenbasis of a symmetric 2×2 matrix.
///
/// `vectors[k]` is the k-th column of T; `values` are descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub vectors: [Vec2; 2],
    pub values: [f64; 2],
}

impl EigenPair {
    /// `T·diag(Λ)·Tᵀ`.
    pub fn reconstruct(&self) -> SymMat2 {
        let [v1, v2] = self.vectors;
        let [l1, l2] = self.values;
        v1.outer() * l1 + v2.outer() * l2
    }

    /// Entries of `TᵀT`, i.e. `[[v1·v1, v1·v2], [v2·v1, v2·v2]]`.
    pub fn gram(&self) -> SymMat2 {
        let [v1, v2] = self.vectors;
        SymMat2::new(v1.dot(v1), v1.dot(v2), v2.dot(v2))
    }
}
