//! Dyadic interval addressing, piecewise-constant functions on dyadic grids,
//! Haar analysis/synthesis and martingale difference operators.
//!
//! Intervals are pure integer pairs (level, index) for `[index 2^-level,
//! (index+1) 2^-level)`; no floating-point geometry anywhere. Functions are
//! stored by leaf values; Haar coefficient tables are derived views.

use crate::mat2::{SymMat2, Vec2};
use std::collections::BTreeMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DyadicError {
    #[error("depth cap exceeded: need {needed}, cap {cap}")]
    DepthCap { needed: u32, cap: u32 },
    #[error("interval {0:?} not inside the support of the function")]
    NotInside(DyadicInterval),
    #[error("grid mismatch: origins {0:?} vs {1:?}")]
    GridMismatch(DyadicInterval, DyadicInterval),
}

/// Default materialization cap; deeper objects exist only symbolically.
pub const DEPTH_CAP: u32 = 24;

/// A dyadic interval `[index 2^-level, (index+1) 2^-level)`. Negative indices
/// address intervals left of the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: i64,
}

impl DyadicInterval {
    pub fn new(level: u32, index: i64) -> Self {
        DyadicInterval { level, index }
    }

    /// The unit interval [0,1).
    pub fn root() -> Self {
        DyadicInterval { level: 0, index: 0 }
    }

    pub fn len(self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn lo(self) -> f64 {
        self.index as f64 * self.len()
    }

    pub fn hi(self) -> f64 {
        (self.index + 1) as f64 * self.len()
    }

    /// Left child (the `I_-` convention: right child is `I_+`).
    pub fn left(self) -> Self {
        DyadicInterval { level: self.level + 1, index: 2 * self.index }
    }

    pub fn right(self) -> Self {
        DyadicInterval { level: self.level + 1, index: 2 * self.index + 1 }
    }

    pub fn parent(self) -> Option<Self> {
        if self.level == 0 {
            None
        } else {
            Some(DyadicInterval { level: self.level - 1, index: self.index.div_euclid(2) })
        }
    }

    pub fn sibling(self) -> Option<Self> {
        if self.level == 0 {
            None
        } else {
            Some(DyadicInterval { level: self.level, index: self.index ^ 1 })
        }
    }

    pub fn is_right_child(self) -> bool {
        self.index & 1 == 1
    }

    pub fn contains(self, other: DyadicInterval) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    /// True for intervals inside [0,1).
    pub fn within_root(self) -> bool {
        self.index >= 0 && (self.index as u64) < (1u64 << self.level.min(63))
    }

    /// Exact decimal representation of the left endpoint (dyadic rationals
    /// terminate in decimal).
    pub fn lo_decimal(self) -> String {
        dyadic_decimal(self.index, self.level)
    }

    pub fn hi_decimal(self) -> String {
        dyadic_decimal(self.index + 1, self.level)
    }
}

/// Exact decimal string for `index / 2^level`.
fn dyadic_decimal(index: i64, level: u32) -> String {
    if level == 0 {
        return format!("{index}");
    }
    let neg = index < 0;
    let mag = index.unsigned_abs() as u128;
    // index/2^level = index * 5^level / 10^level; build the numerator in
    // decimal digits (little-endian) by multiplying by 5 `level` times.
    let mut digits: Vec<u8> = Vec::new();
    let mut m = mag;
    while m > 0 {
        digits.push((m % 10) as u8);
        m /= 10;
    }
    if digits.is_empty() {
        digits.push(0);
    }
    for _ in 0..level {
        let mut carry = 0u32;
        for d in digits.iter_mut() {
            let v = *d as u32 * 5 + carry;
            *d = (v % 10) as u8;
            carry = v / 10;
        }
        while carry > 0 {
            digits.push((carry % 10) as u8);
            carry /= 10;
        }
    }
    let frac_len = level as usize;
    while digits.len() <= frac_len {
        digits.push(0);
    }
    let mut s = String::new();
    if neg {
        s.push('-');
    }
    for i in (frac_len..digits.len()).rev() {
        s.push((b'0' + digits[i]) as char);
    }
    s.push('.');
    let mut frac: Vec<u8> = digits[..frac_len].iter().rev().copied().collect();
    while frac.len() > 1 && *frac.last().unwrap() == 0 {
        frac.pop();
    }
    for d in frac {
        s.push((b'0' + d) as char);
    }
    s
}

/// Cell payloads a piecewise function can carry.
pub trait CellValue: Copy + PartialEq + std::fmt::Debug {
    const WIDTH: usize;
    fn zero() -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn scale(self, c: f64) -> Self;
    fn components(&self) -> Vec<f64>;
    fn max_abs(&self) -> f64;
}

impl CellValue for f64 {
    const WIDTH: usize = 1;
    fn zero() -> Self {
        0.0
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn scale(self, c: f64) -> Self {
        c * self
    }
    fn components(&self) -> Vec<f64> {
        vec![*self]
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl CellValue for Vec2 {
    const WIDTH: usize = 2;
    fn zero() -> Self {
        Vec2::zero()
    }
    fn add(self, o: Self) -> Self {
        Vec2::add(self, o)
    }
    fn sub(self, o: Self) -> Self {
        Vec2::sub(self, o)
    }
    fn scale(self, c: f64) -> Self {
        Vec2::scale(self, c)
    }
    fn components(&self) -> Vec<f64> {
        vec![self.x, self.y]
    }
    fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs())
    }
}

impl CellValue for SymMat2 {
    const WIDTH: usize = 3;
    fn zero() -> Self {
        SymMat2::zero()
    }
    fn add(self, o: Self) -> Self {
        SymMat2::add(self, o)
    }
    fn sub(self, o: Self) -> Self {
        SymMat2::sub(self, o)
    }
    fn scale(self, c: f64) -> Self {
        SymMat2::scale(self, c)
    }
    fn components(&self) -> Vec<f64> {
        vec![self.a11, self.a12, self.a22]
    }
    fn max_abs(&self) -> f64 {
        self.max_abs_entry()
    }
}

/// Depth-D piecewise-constant function on the dyadic grid of `origin`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseFn<T: CellValue> {
    pub origin: DyadicInterval,
    pub depth: u32,
    values: Vec<T>,
}

impl<T: CellValue> PiecewiseFn<T> {
    pub fn from_values(origin: DyadicInterval, depth: u32, values: Vec<T>) -> Self {
        assert_eq!(values.len(), 1usize << depth, "need exactly 2^depth cell values");
        PiecewiseFn { origin, depth, values }
    }

    pub fn constant(origin: DyadicInterval, depth: u32, v: T) -> Self {
        PiecewiseFn { origin, depth, values: vec![v; 1usize << depth] }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.origin.len() * (-(self.depth as f64)).exp2()
    }

    /// The dyadic cell at leaf position `i`.
    pub fn cell(&self, i: usize) -> DyadicInterval {
        DyadicInterval {
            level: self.origin.level + self.depth,
            index: (self.origin.index << self.depth) + i as i64,
        }
    }

    /// Leaf range covered by a dyadic subinterval, or an error if it is not
    /// inside the support (or finer than the grid).
    pub fn leaf_range(&self, i: DyadicInterval) -> Result<std::ops::Range<usize>, DyadicError> {
        let leaf_level = self.origin.level + self.depth;
        if !self.origin.contains(i) || i.level > leaf_level {
            return Err(DyadicError::NotInside(i));
        }
        let span = 1usize << (leaf_level - i.level);
        let base = ((i.index - (self.origin.index << (i.level - self.origin.level))) as usize) * span;
        Ok(base..base + span)
    }

    pub fn average_over(&self, i: DyadicInterval) -> Result<T, DyadicError> {
        let r = self.leaf_range(i)?;
        let n = r.len();
        let mut acc = T::zero();
        for v in &self.values[r] {
            acc = acc.add(*v);
        }
        Ok(acc.scale(1.0 / n as f64))
    }

    pub fn mean(&self) -> T {
        self.average_over(self.origin).expect("origin is inside itself")
    }

    /// Conditional expectation onto level `origin.level + rel_level`
    /// (constant on blocks), kept on the same grid.
    pub fn project(&self, rel_level: u32) -> PiecewiseFn<T> {
        assert!(rel_level <= self.depth);
        let block = 1usize << (self.depth - rel_level);
        let mut out = self.values.clone();
        for b in 0..(1usize << rel_level) {
            let lo = b * block;
            let mut acc = T::zero();
            for v in &self.values[lo..lo + block] {
                acc = acc.add(*v);
            }
            let m = acc.scale(1.0 / block as f64);
            for v in &mut out[lo..lo + block] {
                *v = m;
            }
        }
        PiecewiseFn { origin: self.origin, depth: self.depth, values: out }
    }

    /// Re-represent on a finer grid of the same interval (values repeat).
    pub fn refine_to(&self, depth: u32) -> PiecewiseFn<T> {
        assert!(depth >= self.depth);
        let rep = 1usize << (depth - self.depth);
        let mut values = Vec::with_capacity(self.values.len() * rep);
        for v in &self.values {
            for _ in 0..rep {
                values.push(*v);
            }
        }
        PiecewiseFn { origin: self.origin, depth, values }
    }

    /// Restriction to a dyadic subinterval (keeps the leaf grid).
    pub fn restrict(&self, i: DyadicInterval) -> Result<PiecewiseFn<T>, DyadicError> {
        let r = self.leaf_range(i)?;
        let depth = self.origin.level + self.depth - i.level;
        Ok(PiecewiseFn { origin: i, depth, values: self.values[r].to_vec() })
    }

    /// `f \circ psi_{J,I}`: the copy of `f` (living on `J = f.origin`)
    /// rescaled onto `target`.
    pub fn affine_pullback(&self, target: DyadicInterval) -> PiecewiseFn<T> {
        PiecewiseFn { origin: target, depth: self.depth, values: self.values.clone() }
    }

    /// Haar analysis: the mean over the origin and the L2-normalized
    /// coefficient `(f, h_I)` for every dyadic `I` of relative level < depth.
    /// Keys are relative (level, index) within the origin.
    pub fn haar_analyze(&self) -> (T, BTreeMap<(u32, u64), T>) {
        let mut coeffs = BTreeMap::new();
        let mut cur = self.values.clone();
        for rel in (0..self.depth).rev() {
            let n = 1usize << rel;
            let mut next = Vec::with_capacity(n);
            // |I| at absolute level origin.level + rel
            let abs_len = (-((self.origin.level + rel) as f64)).exp2();
            for i in 0..n {
                let left = cur[2 * i];
                let right = cur[2 * i + 1];
                next.push(left.add(right).scale(0.5));
                let c = right.sub(left).scale(0.5 * abs_len.sqrt());
                coeffs.insert((rel, i as u64), c);
            }
            cur = next;
        }
        (cur[0], coeffs)
    }

    /// Inverse of `haar_analyze`.
    pub fn haar_synthesize(
        origin: DyadicInterval,
        depth: u32,
        mean: T,
        coeffs: &BTreeMap<(u32, u64), T>,
    ) -> PiecewiseFn<T> {
        let mut f = PiecewiseFn::constant(origin, depth, mean);
        for (&(rel, idx), c) in coeffs {
            assert!(rel < depth, "coefficient below the leaf grid");
            let abs_len = (-((origin.level + rel) as f64)).exp2();
            let w = c.scale(1.0 / abs_len.sqrt());
            let span = 1usize << (depth - rel);
            let lo = idx as usize * span;
            let mid = lo + span / 2;
            for v in &mut f.values[lo..mid] {
                *v = v.sub(w);
            }
            for v in &mut f.values[mid..lo + span] {
                *v = v.add(w);
            }
        }
        f
    }

    /// Second-order martingale difference `Delta^2_I f = -E_I f + sum over
    /// ch^2(I) of E_J f`, supported on `I`.
    pub fn martingale_diff2(&self, i: DyadicInterval) -> Result<PiecewiseFn<T>, DyadicError> {
        let leaf_level = self.origin.level + self.depth;
        if i.level + 2 > leaf_level {
            return Err(DyadicError::DepthCap { needed: i.level + 2, cap: leaf_level });
        }
        let on_i = self.restrict(i)?;
        let e0 = on_i.project(0);
        let e2 = on_i.project(2);
        let mut values = Vec::with_capacity(on_i.values.len());
        for (a, b) in e2.values.iter().zip(e0.values.iter()) {
            values.push(a.sub(*b));
        }
        Ok(PiecewiseFn { origin: i, depth: on_i.depth, values })
    }

    /// Integral against Lebesgue measure, componentwise through `scale`.
    pub fn integral(&self) -> T {
        self.mean().scale(self.origin.len())
    }

    /// Max absolute difference over the common refinement.
    pub fn max_abs_diff(&self, other: &PiecewiseFn<T>) -> Result<f64, DyadicError> {
        if self.origin != other.origin {
            return Err(DyadicError::GridMismatch(self.origin, other.origin));
        }
        let d = self.depth.max(other.depth);
        let a = self.refine_to(d);
        let b = other.refine_to(d);
        Ok(a.values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| x.sub(*y).max_abs())
            .fold(0.0, f64::max))
    }

    /// Debug dump: one CSV row per cell with exact decimal endpoints.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# piecewise v1 origin_level={} origin_index={} depth={}", self.origin.level, self.origin.index, self.depth)?;
        for (i, v) in self.values.iter().enumerate() {
            let cell = self.cell(i);
            let fields: Vec<String> = v.components().iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{},{},{},{}", i, cell.lo_decimal(), cell.hi_decimal(), fields.join(","))?;
        }
        Ok(())
    }

    /// Flat binary dump: header then little-endian f64 components.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(b"PWF1")?;
        w.write_all(&(self.origin.level as u32).to_le_bytes())?;
        w.write_all(&self.origin.index.to_le_bytes())?;
        w.write_all(&self.depth.to_le_bytes())?;
        w.write_all(&(T::WIDTH as u32).to_le_bytes())?;
        for v in &self.values {
            for c in v.components() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

impl PiecewiseFn<Vec2> {
    /// Unweighted L2 inner product over the support.
    pub fn l2_inner(&self, other: &PiecewiseFn<Vec2>) -> Result<f64, DyadicError> {
        if self.origin != other.origin {
            return Err(DyadicError::GridMismatch(self.origin, other.origin));
        }
        let d = self.depth.max(other.depth);
        let a = self.refine_to(d);
        let b = other.refine_to(d);
        let w = a.cell_width();
        Ok(a.values.iter().zip(b.values.iter()).map(|(x, y)| x.dot(*y)).sum::<f64>() * w)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).expect("same grid").max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_tree_relations() {
        let i = DyadicInterval::new(3, 5);
        assert_eq!(i.left().parent(), Some(i));
        assert_eq!(i.right().parent(), Some(i));
        assert_eq!(i.left().index, 10);
        assert_eq!(i.right().index, 11);
        assert!(i.contains(i.left().right()));
        assert!(!DyadicInterval::new(3, 4).contains(i));
        assert!(DyadicInterval::new(2, -1).parent() == Some(DyadicInterval::new(1, -1)));
    }

    #[test]
    fn exact_decimal_endpoints() {
        assert_eq!(DyadicInterval::new(3, 5).lo_decimal(), "0.625");
        assert_eq!(DyadicInterval::new(3, 5).hi_decimal(), "0.75");
        assert_eq!(DyadicInterval::new(1, -1).lo_decimal(), "-0.5");
        assert_eq!(DyadicInterval::new(0, 2).lo_decimal(), "2");
        assert_eq!(DyadicInterval::new(40, 1).lo_decimal(), "0.0000000000009094947017729282379150390625");
    }

    #[test]
    fn haar_constant_function() {
        let f = PiecewiseFn::constant(DyadicInterval::root(), 3, 1.0f64);
        let (mean, coeffs) = f.haar_analyze();
        assert_eq!(mean, 1.0);
        assert!(coeffs.values().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn haar_single_hhat() {
        // f = hhat_{I0}: mean 0 and (f, h_{I0}) = 1 (|I0| = 1), nothing else.
        let f = PiecewiseFn::from_values(DyadicInterval::root(), 2, vec![-1.0, -1.0, 1.0, 1.0]);
        let (mean, coeffs) = f.haar_analyze();
        assert!(mean.abs() < 1e-15);
        for (&(lev, idx), c) in &coeffs {
            if (lev, idx) == (0, 0) {
                assert!((c - 1.0).abs() < 1e-15);
            } else {
                assert!(c.abs() < 1e-15, "unexpected coefficient at {lev},{idx}");
            }
        }
    }

    #[test]
    fn martingale_diff2_cases() {
        let f = PiecewiseFn::constant(DyadicInterval::root(), 3, 2.5f64);
        let d = f.martingale_diff2(DyadicInterval::root()).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-15));

        // f = hhat_{I0} is already a depth-1 fluctuation: Delta^2 returns it.
        let f = PiecewiseFn::from_values(DyadicInterval::root(), 2, vec![-1.0, -1.0, 1.0, 1.0]);
        let d = f.martingale_diff2(DyadicInterval::root()).unwrap();
        assert_eq!(d.values(), f.values());

        // depth exceeded
        let f = PiecewiseFn::constant(DyadicInterval::root(), 1, 0.0f64);
        assert!(f.martingale_diff2(DyadicInterval::root()).is_err());
    }

    #[test]
    fn pullback_preserves_mean_and_l2() {
        let f = PiecewiseFn::from_values(
            DyadicInterval::root(),
            2,
            vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 2.0), Vec2::new(-1.0, 1.0), Vec2::new(3.0, -1.0)],
        );
        let g = f.affine_pullback(DyadicInterval::new(1, 0));
        assert_eq!(g.mean(), f.mean());
        // L2 with normalized measure |I|^{-1} dx is preserved:
        let nf = f.l2_norm() / f.origin.len().sqrt();
        let ng = g.l2_norm() / g.origin.len().sqrt();
        assert!((nf - ng).abs() < 1e-14);
    }

    #[test]
    fn projection_lattice() {
        let vals: Vec<f64> = (0..16).map(|i| (i * i % 7) as f64).collect();
        let f = PiecewiseFn::from_values(DyadicInterval::root(), 4, vals);
        for k in 0..4u32 {
            for m in 0..4u32 {
                let a = f.project(k).project(m);
                let b = f.project(k.min(m));
                assert_eq!(a.values(), b.values(), "E_k E_m = E_min(k,m)");
            }
        }
        // sum of Delta_I over D_k equals E_{k+1} - E_k
        for k in 0..3u32 {
            let diff_direct: Vec<f64> = f
                .project(k + 1)
                .values()
                .iter()
                .zip(f.project(k).values())
                .map(|(a, b)| a - b)
                .collect();
            // reconstruct from Haar coefficients at relative level k
            let (_, coeffs) = f.haar_analyze();
            let mut acc = PiecewiseFn::constant(DyadicInterval::root(), 4, 0.0f64);
            let just_k: BTreeMap<(u32, u64), f64> =
                coeffs.iter().filter(|((lev, _), _)| *lev == k).map(|(k2, v)| (*k2, *v)).collect();
            acc = PiecewiseFn::haar_synthesize(DyadicInterval::root(), 4, 0.0, &just_k);
            for (a, b) in acc.values().iter().zip(diff_direct.iter()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    proptest! {
        #[test]
        fn haar_roundtrip(vals in proptest::collection::vec(-100.0f64..100.0, 16)) {
            let f = PiecewiseFn::from_values(DyadicInterval::root(), 4, vals);
            let (mean, coeffs) = f.haar_analyze();
            let g = PiecewiseFn::haar_synthesize(DyadicInterval::root(), 4, mean, &coeffs);
            let err = f.max_abs_diff(&g).unwrap();
            prop_assert!(err <= 1e-14 * (1.0 + f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        }

        #[test]
        fn diff2_has_zero_mean(vals in proptest::collection::vec(-10.0f64..10.0, 8)) {
            let f = PiecewiseFn::from_values(DyadicInterval::root(), 3, vals);
            let d = f.martingale_diff2(DyadicInterval::root()).unwrap();
            prop_assert!(d.mean().abs() < 1e-13);
        }
    }
}
