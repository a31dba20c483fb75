//! Periodization and quasi-periodization of functions on the unit interval,
//! the iterated remodeling of weight pairs with its start/stop/exceptional
//! bookkeeping, strong-dyadic-A2 verification, and the transference
//! experiment connecting the line Hilbert transform to the dyadic model.

use crate::dyadic::{CellValue, DyadicInterval, PiecewiseFn, DEPTH_CAP};
use crate::forge::WeightModel;
use crate::hilbert::{hdy_pairing_rhs, leakage_norm, pairing_line, KernelConstants};
use crate::mat2::{a2_pair_char, SymMat2, Vec2};
use crate::operators::hdy;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RemodelError {
    #[error("frequency {0} below 2")]
    FrequencyTooSmall(u32),
    #[error("quasi-periodization would need depth {needed} beyond cap {cap}")]
    TooDeep { needed: u32, cap: u32 },
    #[error("Lemma hypothesis violated before repair: pair characteristic {got} > Q = {q}")]
    RepairHypothesis { got: f64, q: f64 },
    #[error(transparent)]
    Dyadic(#[from] crate::dyadic::DyadicError),
    #[error(transparent)]
    Forge(#[from] crate::forge::ForgeError),
    #[error(transparent)]
    Mat2(#[from] crate::mat2::Mat2Error),
}

/// The frequency sequence N_1, N_2, ...; finite, with the last entry
/// repeating for deeper orders.
#[derive(Clone, Debug)]
pub struct FrequencyVector(Vec<u32>);

impl FrequencyVector {
    pub fn new(ns: Vec<u32>) -> Result<Self, RemodelError> {
        if let Some(&bad) = ns.iter().find(|&&n| n < 2) {
            return Err(RemodelError::FrequencyTooSmall(bad));
        }
        assert!(!ns.is_empty(), "frequency vector must be nonempty");
        Ok(FrequencyVector(ns))
    }

    pub fn constant(n: u32) -> Self {
        Self::new(vec![n]).expect("validated by caller")
    }

    /// Frequency of order k (1-based).
    pub fn at(&self, order: usize) -> u32 {
        let i = (order - 1).min(self.0.len() - 1);
        self.0[i]
    }
}

/// `P_I^N f`: 2^N shrunken copies of `f` tiled over its own interval.
pub fn periodize<T: CellValue>(f: &PiecewiseFn<T>, n: u32) -> Result<PiecewiseFn<T>, RemodelError> {
    let depth = f.depth + n;
    if f.origin.level + depth > DEPTH_CAP + 8 {
        return Err(RemodelError::TooDeep { needed: f.origin.level + depth, cap: DEPTH_CAP + 8 });
    }
    let copies = 1usize << n;
    let mut values = Vec::with_capacity(f.n_cells() * copies);
    for _ in 0..copies {
        values.extend_from_slice(f.values());
    }
    Ok(PiecewiseFn::from_values(f.origin, depth, values))
}

/// Quasi-periodization: like `periodize`, but the two boundary stopping
/// cells carry the constant `<f>_I` instead of a copy.
pub fn quasi_periodize<T: CellValue>(f: &PiecewiseFn<T>, n: u32) -> Result<PiecewiseFn<T>, RemodelError> {
    if n < 2 {
        return Err(RemodelError::FrequencyTooSmall(n));
    }
    let mut out = periodize(f, n)?;
    let m = f.mean();
    let cell = f.n_cells();
    let total = out.n_cells();
    for v in &mut out.values_mut()[..cell] {
        *v = m;
    }
    for v in &mut out.values_mut()[total - cell..] {
        *v = m;
    }
    Ok(out)
}

/// One start or stopping record of the iterated quasi-periodization: the
/// target interval and its source `F(I)` in the original function's tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpRecord {
    pub order: usize,
    pub target: DyadicInterval,
    pub source: DyadicInterval,
}

/// Start/stop/exceptional bookkeeping of one iterated quasi-periodization.
#[derive(Clone, Debug, Default)]
pub struct RemodelBookkeeping {
    pub starts: Vec<QpRecord>,
    pub exceptional: Vec<QpRecord>,
}

impl RemodelBookkeeping {
    /// Total length of the currently exceptional intervals.
    pub fn exceptional_measure(&self) -> f64 {
        self.exceptional.iter().map(|r| r.target.len()).sum()
    }

    /// Measure-preservation of the source map: the starts mapped to one
    /// source interval J tile exactly |J|. Returns the worst deviation.
    pub fn source_measure_deviation(&self) -> f64 {
        use std::collections::BTreeMap;
        let mut per_source: BTreeMap<DyadicInterval, f64> = BTreeMap::new();
        for r in &self.starts {
            *per_source.entry(r.source).or_insert(0.0) += r.target.len();
        }
        // exceptional cells remove (constant) mass from deeper starts, so
        // only order-1 sources tile exactly; report those.
        per_source
            .iter()
            .filter(|(s, _)| s.level == 1)
            .map(|(s, m)| (m - s.len()).abs())
            .fold(0.0, f64::max)
    }
}

struct QpBuilder<'a, T: CellValue> {
    src: &'a PiecewiseFn<T>,
    freqs: &'a FrequencyVector,
    pieces: Vec<(DyadicInterval, T)>,
    book: RemodelBookkeeping,
    max_level: u32,
    depth_cap: u32,
}

impl<'a, T: CellValue> QpBuilder<'a, T> {
    fn constant_on(&self, j: DyadicInterval) -> Option<T> {
        let r = self.src.leaf_range(j).ok()?;
        let vals = &self.src.values()[r];
        let first = vals[0];
        vals.iter().all(|v| *v == first).then_some(first)
    }

    fn rec(&mut self, j: DyadicInterval, target: DyadicInterval, order: usize) -> Result<(), RemodelError> {
        if let Some(v) = self.constant_on(j) {
            self.pieces.push((target, v));
            self.max_level = self.max_level.max(target.level);
            return Ok(());
        }
        self.book.starts.push(QpRecord { order, target, source: j });
        let n = self.freqs.at(order);
        let stop_level = target.level + n;
        if stop_level + 2 > self.depth_cap {
            return Err(RemodelError::TooDeep { needed: stop_level + 2, cap: self.depth_cap });
        }
        let m = self.src.average_over(j)?;
        let cells = 1i64 << n;
        for c in 0..cells {
            let cell = DyadicInterval::new(stop_level, (target.index << n) + c);
            if c == 0 || c == cells - 1 {
                self.pieces.push((cell, m));
                self.max_level = self.max_level.max(cell.level);
                self.book.exceptional.push(QpRecord { order, target: cell, source: j });
            } else {
                for g in 0..4i64 {
                    let src_g = DyadicInterval::new(j.level + 2, (j.index << 2) + g);
                    let tgt_g = DyadicInterval::new(cell.level + 2, (cell.index << 2) + g);
                    self.rec(src_g, tgt_g, order + 1)?;
                }
            }
        }
        Ok(())
    }
}

/// Iterated quasi-periodization of a function with finite Haar expansion on
/// the unit interval. Returns the result and the full bookkeeping,
/// including the source map on start and exceptional intervals.
pub fn iterated_qp<T: CellValue>(
    f: &PiecewiseFn<T>,
    freqs: &FrequencyVector,
    depth_cap: u32,
) -> Result<(PiecewiseFn<T>, RemodelBookkeeping), RemodelError> {
    assert_eq!(f.origin, DyadicInterval::root(), "remodeling operates on the unit interval");
    let mut b = QpBuilder {
        src: f,
        freqs,
        pieces: Vec::new(),
        book: RemodelBookkeeping::default(),
        max_level: 1,
        depth_cap,
    };
    b.rec(DyadicInterval::new(1, 0), DyadicInterval::new(1, 0), 1)?;
    b.rec(DyadicInterval::new(1, 1), DyadicInterval::new(1, 1), 1)?;
    let depth = b.max_level;
    let mut out = PiecewiseFn::constant(DyadicInterval::root(), depth, T::zero());
    for (cell, v) in &b.pieces {
        for idx in out.leaf_range(*cell)? {
            out.values_mut()[idx] = *v;
        }
    }
    Ok((out, b.book))
}

impl CellValue for (SymMat2, SymMat2) {
    const WIDTH: usize = 6;
    fn zero() -> Self {
        (SymMat2::zero(), SymMat2::zero())
    }
    fn add(self, o: Self) -> Self {
        (self.0.add(o.0), self.1.add(o.1))
    }
    fn sub(self, o: Self) -> Self {
        (self.0.sub(o.0), self.1.sub(o.1))
    }
    fn scale(self, c: f64) -> Self {
        (self.0.scale(c), self.1.scale(c))
    }
    fn components(&self) -> Vec<f64> {
        let mut v = self.0.components();
        v.extend(self.1.components());
        v
    }
    fn max_abs(&self) -> f64 {
        self.0.max_abs_entry().max(self.1.max_abs_entry())
    }
}

/// Statistics of one repair round.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Total length of exceptional intervals after the round (bookkeeping
    /// runs at full precision even past the materialization depth).
    pub defect_measure: f64,
    pub strong_dyadic_a2: f64,
    /// Max over materialized leaves of ||W V - I||.
    pub max_leaf_defect: f64,
}

pub struct RemodelOutcome {
    pub w: PiecewiseFn<SymMat2>,
    pub v: PiecewiseFn<SymMat2>,
    pub bookkeeping: RemodelBookkeeping,
    pub initial_measure: f64,
    pub rounds: Vec<RoundStats>,
}

fn leaf_defect(w: &PiecewiseFn<SymMat2>, v: &PiecewiseFn<SymMat2>) -> f64 {
    w.values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| {
            let p11 = a.a11 * b.a11 + a.a12 * b.a12 - 1.0;
            let p12 = a.a11 * b.a12 + a.a12 * b.a22;
            let p21 = a.a12 * b.a11 + a.a22 * b.a12;
            let p22 = a.a12 * b.a12 + a.a22 * b.a22 - 1.0;
            p11.abs().max(p12.abs()).max(p21.abs()).max(p22.abs())
        })
        .fold(0.0, f64::max)
}

/// Write a source-restricted copy into a target interval at whatever
/// resolution the materialized grid affords; cell averages of the true
/// (infinitely deep) weight are exact at every represented scale.
fn write_copy(
    out: &mut PiecewiseFn<SymMat2>,
    src: &PiecewiseFn<SymMat2>,
    source: DyadicInterval,
    target: DyadicInterval,
) -> Result<(), RemodelError> {
    let range = out.leaf_range(target)?;
    let n_target = range.len();
    let src_range = src.leaf_range(source)?;
    let n_src = src_range.len();
    let start = range.start;
    if n_target >= n_src {
        let rep = n_target / n_src;
        for (i, s) in src_range.clone().enumerate() {
            let v = src.values()[s];
            for r in 0..rep {
                out.values_mut()[start + i * rep + r] = v;
            }
        }
    } else {
        let block = n_src / n_target;
        for t in 0..n_target {
            let lo = src_range.start + t * block;
            let mut acc = SymMat2::zero();
            for s in lo..lo + block {
                acc = acc.add(src.values()[s]);
            }
            out.values_mut()[start + t] = acc.scale(1.0 / block as f64);
        }
    }
    Ok(())
}

/// Full remodeling run: iterated quasi-periodization of the weight pair,
/// then `iterations` rounds of the exceptional-interval repair with
/// frequency-2 copies. Repairs past the working depth update the
/// bookkeeping only (their cell averages are already exact on the grid).
pub fn remodel_weights(
    model: &WeightModel,
    freqs: &FrequencyVector,
    iterations: usize,
    working_depth: u32,
) -> Result<RemodelOutcome, RemodelError> {
    let (w_src, v_src) = model.materialize()?;
    let pair = PiecewiseFn::from_values(
        w_src.origin,
        w_src.depth,
        w_src.values().iter().zip(v_src.values()).map(|(a, b)| (*a, *b)).collect(),
    );
    let (qp, book) = iterated_qp(&pair, freqs, working_depth)?;
    let depth = qp.depth.max(1);
    let mut w = PiecewiseFn::constant(DyadicInterval::root(), depth, SymMat2::zero());
    let mut v = PiecewiseFn::constant(DyadicInterval::root(), depth, SymMat2::zero());
    for (i, (a, b)) in qp.values().iter().enumerate() {
        w.values_mut()[i] = *a;
        v.values_mut()[i] = *b;
    }
    let q = model.q_target();
    let initial_measure = book.exceptional_measure();
    let mut exceptional: Vec<QpRecord> = book.exceptional.clone();
    let mut rounds = Vec::with_capacity(iterations);
    for round in 1..=iterations {
        let mut next = Vec::with_capacity(exceptional.len() * 2);
        for rec in &exceptional {
            // Lemma hypothesis on the source interval, checked before repair.
            let wj = w_src.average_over(rec.source)?;
            let vj = v_src.average_over(rec.source)?;
            let pc = a2_pair_char(vj, wj)?;
            if pc > q * (1.0 + 1e-9) {
                return Err(RemodelError::RepairHypothesis { got: pc, q });
            }
            // split the exceptional cell into 4; outer quarters stay
            // constant (still exceptional), inner quarters receive copies.
            let lvl = rec.target.level + 2;
            let base = rec.target.index << 2;
            for c in 0..4i64 {
                let cell = DyadicInterval::new(lvl, base + c);
                if c == 0 || c == 3 {
                    next.push(QpRecord { order: rec.order, target: cell, source: rec.source });
                } else if lvl <= w.origin.level + w.depth {
                    write_copy(&mut w, &w_src, rec.source, cell)?;
                    write_copy(&mut v, &v_src, rec.source, cell)?;
                }
            }
        }
        exceptional = next;
        rounds.push(RoundStats {
            round,
            defect_measure: exceptional.iter().map(|r| r.target.len()).sum(),
            strong_dyadic_a2: strong_dyadic_a2(&v, &w)?,
            max_leaf_defect: leaf_defect(&w, &v),
        });
    }
    Ok(RemodelOutcome { w, v, bookkeeping: book, initial_measure, rounds })
}

/// Strong dyadic A2 characteristic of a weight pair on the unit interval
/// with periodic extension: the sup of the pair characteristic over unions
/// of two adjacent equal-length dyadic intervals, down to leaf level.
pub fn strong_dyadic_a2(v: &PiecewiseFn<SymMat2>, w: &PiecewiseFn<SymMat2>) -> Result<f64, RemodelError> {
    let depth = v.depth.max(w.depth);
    let v = v.refine_to(depth);
    let w = w.refine_to(depth);
    let mut va = v.values().to_vec();
    let mut wa = w.values().to_vec();
    let mut best: f64 = 0.0;
    for _lev in (0..=depth).rev() {
        let n = va.len();
        for i in 0..n {
            let j = (i + 1) % n; // periodic wrap across the unit cell
            let vv = va[i].add(va[j]).scale(0.5);
            let ww = wa[i].add(wa[j]).scale(0.5);
            best = best.max(a2_pair_char(vv, ww)?);
        }
        if n == 1 {
            break;
        }
        va = (0..n / 2).map(|i| va[2 * i].add(va[2 * i + 1]).scale(0.5)).collect();
        wa = (0..n / 2).map(|i| wa[2 * i].add(wa[2 * i + 1]).scale(0.5)).collect();
    }
    Ok(best)
}

/// Classical A2 over sampled arbitrary subintervals (exact averages against
/// the piecewise-constant weight, fractional end cells included).
pub fn sampled_classical_a2(
    v: &PiecewiseFn<SymMat2>,
    w: &PiecewiseFn<SymMat2>,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64, RemodelError> {
    let depth = v.depth.max(w.depth);
    let v = v.refine_to(depth);
    let w = w.refine_to(depth);
    let avg = |f: &PiecewiseFn<SymMat2>, a: f64, b: f64| -> SymMat2 {
        let n = f.n_cells();
        let mut acc = SymMat2::zero();
        let lo_cell = ((a * n as f64).floor() as usize).min(n - 1);
        let hi_cell = ((b * n as f64).ceil() as usize).min(n);
        for i in lo_cell..hi_cell {
            let clo = i as f64 / n as f64;
            let chi = (i + 1) as f64 / n as f64;
            let ov = (b.min(chi) - a.max(clo)).max(0.0);
            if ov > 0.0 {
                acc = acc.add(f.values()[i].scale(ov));
            }
        }
        acc.scale(1.0 / (b - a))
    };
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let a = rng.gen_range(0.0..0.95);
        let b = a + rng.gen_range(1e-3..(1.0 - a));
        best = best.max(a2_pair_char(avg(&v, a, b), avg(&w, a, b))?);
    }
    Ok(best)
}

/// One row of the transference trend: the line pairing of the
/// quasi-periodized witnesses against the dyadic prediction.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TransferenceRow {
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    /// `|| 1_{R \ I0} H^R P^N (f - <f>) ||_{L2}` (mean-zero part, as in the
    /// localization lemma).
    pub leakage: f64,
}

/// Run the transference comparison for a family of constant frequency
/// vectors. The right-hand side `(H^dy f, g) + c0 [...]` does not depend on
/// the frequency.
pub fn transference_experiment(
    f: &PiecewiseFn<Vec2>,
    g: &PiecewiseFn<Vec2>,
    n_values: &[u32],
    constants: &KernelConstants,
) -> Result<Vec<TransferenceRow>, RemodelError> {
    let rhs = {
        let hf = hdy(f, constants.c1, constants.c2);
        let pair = hf.l2_inner(&g.refine_to(hf.depth))?;
        pair + hdy_pairing_rhs(f, g, constants.c0)?
    };
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let freqs = FrequencyVector::constant(n);
        let (qf, _) = iterated_qp(f, &freqs, DEPTH_CAP)?;
        let (qg, _) = iterated_qp(g, &freqs, DEPTH_CAP)?;
        let lhs = pairing_line(&qf, &qg);
        // mean-zero part for the leakage trend
        let mean = f.mean();
        let mut f0 = f.clone();
        for v in f0.values_mut() {
            *v = v.sub(mean);
        }
        let pf = periodize(&f0, n)?;
        rows.push(TransferenceRow { n, lhs, rhs, abs_err: (lhs - rhs).abs(), leakage: leakage_norm(&pf) });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rand_fn(depth: u32, seed: u64) -> PiecewiseFn<Vec2> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..(1usize << depth))
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        PiecewiseFn::from_values(DyadicInterval::root(), depth, vals)
    }

    #[test]
    fn periodize_basics() {
        let f = rand_fn(3, 1);
        let p = periodize(&f, 2).unwrap();
        // constants unchanged
        let c = PiecewiseFn::constant(DyadicInterval::root(), 2, Vec2::new(3.0, -1.0));
        let pc = periodize(&c, 3).unwrap();
        assert!(pc.values().iter().all(|v| *v == Vec2::new(3.0, -1.0)));
        // isometry and product preservation
        assert!((p.l2_norm() - f.l2_norm()).abs() < 1e-13);
        let g = rand_fn(3, 2);
        let pg = periodize(&g, 2).unwrap();
        assert!((p.l2_inner(&pg).unwrap() - f.l2_inner(&g).unwrap()).abs() < 1e-13);
        // copy averages
        for j in 0..4i64 {
            let cell = DyadicInterval::new(2, j);
            let a = p.average_over(cell).unwrap();
            let m = f.mean();
            assert!(a.sub(m).norm() < 1e-13);
        }
    }

    #[test]
    fn quasi_periodize_boundary_means() {
        let f = rand_fn(3, 3);
        let qp = quasi_periodize(&f, 3).unwrap();
        let m = f.mean();
        // any dyadic interval touching the boundary has the global mean
        for lev in 3..=qp.depth {
            let left = DyadicInterval::new(lev, 0);
            let right = DyadicInterval::new(lev, (1i64 << lev) - 1);
            assert!(qp.average_over(left).unwrap().sub(m).norm() < 1e-12, "level {lev}");
            assert!(qp.average_over(right).unwrap().sub(m).norm() < 1e-12);
        }
        // global mean preserved
        assert!(qp.mean().sub(m).norm() < 1e-13);
        // interior equals the periodization
        let p = periodize(&f, 3).unwrap();
        let interior = DyadicInterval::new(3, 4);
        assert_eq!(
            qp.restrict(interior).unwrap().values(),
            p.restrict(interior).unwrap().values()
        );
        assert!(quasi_periodize(&f, 1).is_err());
        // L2 deviation bound: ||P - QP|| <= ||f||_inf sqrt(2 * 2^-N)
        let diff2: f64 = p
            .values()
            .iter()
            .zip(qp.values())
            .map(|(a, b)| {
                let d = a.sub(*b);
                d.dot(d)
            })
            .sum::<f64>()
            * p.cell_width();
        let sup = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff2.sqrt() <= sup * (2.0 * (0.5f64).powi(3)).sqrt() + 1e-12);
    }

    #[test]
    fn iterated_qp_fixes_coarse_functions() {
        // f constant on I0_pm is untouched
        let mut f = PiecewiseFn::constant(DyadicInterval::root(), 1, Vec2::zero());
        f.values_mut()[0] = Vec2::new(1.0, 2.0);
        f.values_mut()[1] = Vec2::new(-1.0, 0.5);
        let (qf, book) = iterated_qp(&f, &FrequencyVector::constant(3), 20).unwrap();
        assert!(qf.max_abs_diff(&f.refine_to(qf.depth)).unwrap() < 1e-15);
        assert!(book.starts.is_empty() && book.exceptional.is_empty());
    }

    #[test]
    fn iterated_qp_matches_decomposition_oracle() {
        // reconstruct via E_1 f + sum over Start' of QP_I^{N_k}((Delta^2_{F(I)} f) o psi)
        let f = rand_fn(3, 7);
        let freqs = FrequencyVector::constant(2);
        let (qf, book) = iterated_qp(&f, &freqs, 24).unwrap();
        let mut acc = f.project(1).refine_to(qf.depth);
        for rec in &book.starts {
            assert_eq!(rec.source.level as usize, 2 * rec.order - 1, "F maps order k to D_(2k-1)");
            let d2 = f.martingale_diff2(rec.source).unwrap();
            let pulled = d2.affine_pullback(rec.target);
            let piece = quasi_periodize(&pulled, freqs.at(rec.order)).unwrap();
            let r = acc.leaf_range(rec.target).unwrap();
            let pr = piece.refine_to(qf.depth - rec.target.level);
            for (offset, idx) in r.enumerate() {
                let cur = acc.values()[idx];
                acc.values_mut()[idx] = cur.add(pr.values()[offset]);
            }
        }
        assert!(qf.max_abs_diff(&acc).unwrap() < 1e-12);
        assert!(book.source_measure_deviation() < 1e-15);
    }

    #[test]
    fn iterated_qp_l2_converges_with_frequency() {
        let f = rand_fn(3, 9);
        let norm = f.l2_norm();
        let mut errs = Vec::new();
        for n in [2u32, 4, 6] {
            let (qf, _) = iterated_qp(&f, &FrequencyVector::constant(n), 24).unwrap();
            errs.push((qf.l2_norm() - norm).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
    }

    #[test]
    fn strong_dyadic_identity_weight() {
        let one = PiecewiseFn::constant(DyadicInterval::root(), 4, SymMat2::identity());
        assert!((strong_dyadic_a2(&one, &one).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn lemma_8_4_exact_for_all_boundary_intervals() {
        let f = rand_fn(4, 11);
        for n in [2u32, 3, 4] {
            let qp = quasi_periodize(&f, n).unwrap();
            let m = f.mean();
            for lev in 1..=qp.depth {
                let left = DyadicInterval::new(lev, 0);
                let right = DyadicInterval::new(lev, (1i64 << lev) - 1);
                assert!(qp.average_over(left).unwrap().sub(m).norm() <= 1e-12);
                assert!(qp.average_over(right).unwrap().sub(m).norm() <= 1e-12);
            }
        }
    }
}
