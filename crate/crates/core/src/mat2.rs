//! Symmetric positive-definite 2x2 linear algebra in closed form: spectral
//! frames, Loewner order, A2 pair characteristics and the terminal-interval
//! completion that closes a martingale with a two-valued weight.
//!
//! Everything here is exact 2x2 algebra (characteristic polynomials, the
//! closed-form matrix square root); no iterative eigensolvers.

use crate::scaled::Scaled;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Mat2Error {
    #[error("matrix is not positive definite ({context}): a11={a11}, det={det}")]
    NotPositiveDefinite { context: &'static str, a11: f64, det: f64 },
    #[error("terminal completion precondition v^-1 <= w fails: eigenvalue {eig} of Delta^2 is negative")]
    TerminalPrecondition { eig: f64 },
}

/// Vector in R^2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn zero() -> Self {
        Vec2 { x: 0.0, y: 0.0 }
    }

    /// Unit vector at the given angle (the `a`-axis of a frame).
    pub fn unit(angle: f64) -> Self {
        Vec2 { x: angle.cos(), y: angle.sin() }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, c: f64) -> Vec2 {
        Vec2 { x: c * self.x, y: c * self.y }
    }

    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2 { x: self.x + other.x, y: self.y + other.y }
    }

    pub fn sub(self, other: Vec2) -> Vec2 {
        Vec2 { x: self.x - other.x, y: self.y - other.y }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// Symmetric 2x2 matrix; only the three independent entries are stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat2 {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        SymMat2 { a11, a12, a22 }
    }

    pub fn identity() -> Self {
        SymMat2 { a11: 1.0, a12: 0.0, a22: 1.0 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        SymMat2 { a11: a, a12: 0.0, a22: b }
    }

    pub fn zero() -> Self {
        SymMat2 { a11: 0.0, a12: 0.0, a22: 0.0 }
    }

    /// Rank-one a a^T + b b^T decomposition with weights, frame at `phi`.
    pub fn from_frame(phi: f64, lam_a: f64, lam_b: f64) -> Self {
        let (s, c) = phi.sin_cos();
        SymMat2 {
            a11: lam_a * c * c + lam_b * s * s,
            a12: (lam_a - lam_b) * c * s,
            a22: lam_a * s * s + lam_b * c * c,
        }
    }

    pub fn trace(self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn is_positive_definite(self) -> bool {
        self.a11 > 0.0 && self.det() > 0.0
    }

    /// (lambda_min, lambda_max) from the characteristic polynomial.
    pub fn eigenvalues(self) -> (f64, f64) {
        let m = self.trace() / 2.0;
        let d = ((self.a11 - self.a22) / 2.0).hypot(self.a12);
        (m - d, m + d)
    }

    pub fn spectral_norm(self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        lo.abs().max(hi.abs())
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2 { x: self.a11 * v.x + self.a12 * v.y, y: self.a12 * v.x + self.a22 * v.y }
    }

    pub fn add(self, other: SymMat2) -> SymMat2 {
        SymMat2 { a11: self.a11 + other.a11, a12: self.a12 + other.a12, a22: self.a22 + other.a22 }
    }

    pub fn sub(self, other: SymMat2) -> SymMat2 {
        SymMat2 { a11: self.a11 - other.a11, a12: self.a12 - other.a12, a22: self.a22 - other.a22 }
    }

    pub fn scale(self, c: f64) -> SymMat2 {
        SymMat2 { a11: c * self.a11, a12: c * self.a12, a22: c * self.a22 }
    }

    pub fn inverse(self) -> Result<SymMat2, Mat2Error> {
        let det = self.det();
        if det == 0.0 {
            return Err(Mat2Error::NotPositiveDefinite { context: "inverse", a11: self.a11, det });
        }
        Ok(SymMat2 { a11: self.a22 / det, a12: -self.a12 / det, a22: self.a11 / det })
    }

    /// Closed-form PSD square root: sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
    pub fn sqrt_psd(self) -> Result<SymMat2, Mat2Error> {
        let det = self.det();
        if self.a11 < 0.0 || det < -1e-300 {
            return Err(Mat2Error::NotPositiveDefinite { context: "sqrt", a11: self.a11, det });
        }
        let sd = det.max(0.0).sqrt();
        let den = (self.trace() + 2.0 * sd).sqrt();
        if den == 0.0 {
            return Ok(SymMat2::zero());
        }
        Ok(SymMat2 { a11: (self.a11 + sd) / den, a12: self.a12 / den, a22: (self.a22 + sd) / den })
    }

    /// Symmetrized triple product A * M * A for symmetric A, M.
    pub fn conjugate(self, m: SymMat2) -> SymMat2 {
        // (A M A) stays symmetric; expand entries directly.
        let b11 = self.a11 * m.a11 + self.a12 * m.a12;
        let b12 = self.a11 * m.a12 + self.a12 * m.a22;
        let b21 = self.a12 * m.a11 + self.a22 * m.a12;
        let b22 = self.a12 * m.a12 + self.a22 * m.a22;
        SymMat2 {
            a11: b11 * self.a11 + b12 * self.a12,
            a12: b11 * self.a12 + b12 * self.a22,
            a22: b21 * self.a12 + b22 * self.a22,
        }
    }

    pub fn max_abs_entry(self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }
}

/// `||v^{1/2} w^{1/2}||^2`, the A2 characteristic of the pair: the largest
/// eigenvalue of `w^{1/2} v w^{1/2}`, whose trace is tr(v w) and whose
/// determinant is det(v) det(w).
pub fn a2_pair_char(v: SymMat2, w: SymMat2) -> Result<f64, Mat2Error> {
    for (m, ctx) in [(v, "a2_pair_char v"), (w, "a2_pair_char w")] {
        if !m.is_positive_definite() {
            return Err(Mat2Error::NotPositiveDefinite { context: ctx, a11: m.a11, det: m.det() });
        }
    }
    let t = v.a11 * w.a11 + 2.0 * v.a12 * w.a12 + v.a22 * w.a22;
    let d = v.det() * w.det();
    let disc = (t * t / 4.0 - d).max(0.0);
    Ok(t / 2.0 + disc.sqrt())
}

/// Loewner order check: `A <= B` iff `B - A` is PSD, up to a relative
/// eigenvalue tolerance of `-tol * scale`.
pub fn loewner_leq(a: SymMat2, b: SymMat2, tol: f64) -> bool {
    let d = b.sub(a);
    let scale = a.spectral_norm().max(b.spectral_norm()).max(f64::MIN_POSITIVE);
    let (lo, _) = d.eigenvalues();
    lo >= -tol * scale
}

/// Lemma-style completion of a martingale: given node averages `w` for the
/// weight and `v` for its inverse with `v^{-1} <= w`, produce child values
/// `(W_plus, W_minus)` constant on the two halves with
/// `(W_+ + W_-)/2 = w` and `(W_+^{-1} + W_-^{-1})/2 = v`.
///
/// `W_pm = w^{1/2} (I +/- Delta) w^{1/2}`, `Delta^2 = I - (w^{1/2} v w^{1/2})^{-1}`.
pub fn terminal_children(w: SymMat2, v: SymMat2, tol: f64) -> Result<(SymMat2, SymMat2), Mat2Error> {
    for (m, ctx) in [(w, "terminal w"), (v, "terminal v")] {
        if !m.is_positive_definite() {
            return Err(Mat2Error::NotPositiveDefinite { context: ctx, a11: m.a11, det: m.det() });
        }
    }
    let ws = w.sqrt_psd()?;
    let inner = ws.conjugate(v);
    let inner_inv = inner.inverse()?;
    let delta2 = SymMat2::identity().sub(inner_inv);
    let (lo, _) = delta2.eigenvalues();
    if lo < -tol * inner_inv.spectral_norm().max(1.0) {
        return Err(Mat2Error::TerminalPrecondition { eig: lo });
    }
    // Clamp tiny negative eigenvalues introduced by rounding before the root.
    let delta2 = if lo < 0.0 {
        let shift = -lo;
        SymMat2 { a11: delta2.a11 + shift, a12: delta2.a12, a22: delta2.a22 + shift }
    } else {
        delta2
    };
    let delta = delta2.sqrt_psd()?;
    let plus = ws.conjugate(SymMat2::identity().add(delta));
    let minus = ws.conjugate(SymMat2::identity().sub(delta));
    Ok((plus, minus))
}

/// Positive 2x2 matrix stored as an eigenframe angle and two scaled-exponent
/// eigenvalues: `lam_a * a a^T + lam_b * b b^T` with `a = (cos phi, sin phi)`,
/// `b = (-sin phi, cos phi)`.
#[derive(Clone, Copy, Debug)]
pub struct Spectral2 {
    pub phi: f64,
    pub lam_a: Scaled,
    pub lam_b: Scaled,
}

impl Spectral2 {
    pub fn new(phi: f64, lam_a: Scaled, lam_b: Scaled) -> Self {
        assert!(lam_a.is_sign_positive() && lam_b.is_sign_positive(), "Spectral2 eigenvalues must be positive");
        Spectral2 { phi, lam_a, lam_b }
    }

    pub fn from_sym(m: SymMat2) -> Result<Self, Mat2Error> {
        if !m.is_positive_definite() {
            return Err(Mat2Error::NotPositiveDefinite { context: "Spectral2::from_sym", a11: m.a11, det: m.det() });
        }
        let phi = 0.5 * (2.0 * m.a12).atan2(m.a11 - m.a22);
        let a = Vec2::unit(phi);
        let b = Vec2::new(-a.y, a.x);
        let lam_a = a.dot(m.apply(a));
        let lam_b = b.dot(m.apply(b));
        Ok(Spectral2 { phi, lam_a: Scaled::from_f64(lam_a), lam_b: Scaled::from_f64(lam_b) })
    }

    /// Materialize as plain f64 entries; only valid while the eigenvalues fit.
    pub fn to_sym(self) -> SymMat2 {
        SymMat2::from_frame(self.phi, self.lam_a.to_f64(), self.lam_b.to_f64())
    }

    pub fn inverse(self) -> Spectral2 {
        Spectral2 { phi: self.phi, lam_a: self.lam_a.recip(), lam_b: self.lam_b.recip() }
    }

    /// Pair characteristic for two matrices sharing one eigenframe: the
    /// largest of the per-axis eigenvalue products. Exact for the aligned
    /// pairs the construction produces, and safe at any exponent scale.
    pub fn a2_pair_char_aligned(v: &Spectral2, w: &Spectral2) -> Scaled {
        debug_assert!(aligned(v.phi, w.phi), "frames differ: {} vs {}", v.phi, w.phi);
        let pa = v.lam_a * w.lam_a;
        let pb = v.lam_b * w.lam_b;
        if pa >= pb {
            pa
        } else {
            pb
        }
    }
}

fn aligned(p1: f64, p2: f64) -> bool {
    (p1 - p2).abs() < 1e-9
}
