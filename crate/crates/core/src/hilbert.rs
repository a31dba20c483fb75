//! Exact Hilbert-transform bilinear forms for piecewise-constant functions:
//! the line kernel in closed form, the circle kernel through its Fourier
//! multiplier, the three structural constants c0, c1, c2 and the identity
//! tying the periodic transform to the dyadic shift model on second-order
//! martingale differences.

use crate::dyadic::{DyadicInterval, PiecewiseFn};
use crate::mat2::Vec2;
use crate::operators::hdy;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("truncation K = {given} too small for tolerance {tol}; need K >= {required}")]
    TruncationTooSmall { given: u64, required: u64, tol: f64 },
    #[error("function is not in the range of the second-order difference on {0:?}")]
    NotSecondOrder(DyadicInterval),
    #[error("the shift identity holds on odd generations; {0:?} has even level")]
    EvenGeneration(DyadicInterval),
}

/// Antiderivative kernel for the line pairing: F(x) = x - x ln|x|, F(0) = 0.
fn f_kernel(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x - x * x.abs().ln()
    }
}

/// `(H^R f, g)` for compactly supported piecewise-constant functions, in
/// closed form: for indicator cells [a,b), [c,d) the pairing is
/// `(1/pi)[F(d-b) - F(d-a) - F(c-b) + F(c-a)]`, extended bilinearly. The
/// principal value is integrable through the antiderivative, so no
/// singularity handling is needed.
pub fn pairing_line(f: &PiecewiseFn<Vec2>, g: &PiecewiseFn<Vec2>) -> f64 {
    let mut total = 0.0;
    for i in 0..f.n_cells() {
        let vf = f.values()[i];
        if vf.x == 0.0 && vf.y == 0.0 {
            continue;
        }
        let ci = f.cell(i);
        let (a, b) = (ci.lo(), ci.hi());
        for j in 0..g.n_cells() {
            let vg = g.values()[j];
            if vg.x == 0.0 && vg.y == 0.0 {
                continue;
            }
            let cj = g.cell(j);
            let (c, d) = (cj.lo(), cj.hi());
            let w = f_kernel(d - b) - f_kernel(d - a) - f_kernel(c - b) + f_kernel(c - a);
            total += vf.dot(vg) * w;
        }
    }
    total / std::f64::consts::PI
}

/// Difference kernel of the periodic Hilbert transform on a 2^depth grid:
/// `(H^T f, g) = sum_{j,j'} f_j g_{j'} kappa[(j'-j) mod n]` for functions on
/// a common interval identified with the torus (normalized measure). The
/// value is scale invariant, so the kernel depends only on the depth.
#[derive(Clone)]
pub struct CircleKernel {
    pub depth: u32,
    pub k_terms: u64,
    kappa: Vec<f64>,
}

fn cached_kernel(depth: u32, k_terms: u64) -> std::sync::Arc<CircleKernel> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<(u32, u64), Arc<CircleKernel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(k) = cache.lock().expect("kernel cache").get(&(depth, k_terms)) {
        return k.clone();
    }
    let built = Arc::new(CircleKernel::build(depth, k_terms));
    cache.lock().expect("kernel cache").insert((depth, k_terms), built.clone());
    built
}

impl CircleKernel {
    pub fn build(depth: u32, k_terms: u64) -> CircleKernel {
        let n = 1usize << depth;
        let h = 1.0 / n as f64;
        // sin table over one period of the lattice phase
        let sin_tab: Vec<f64> = (0..n).map(|d| (2.0 * std::f64::consts::PI * d as f64 * h).sin()).collect();
        let mut kappa = vec![0.0f64; n];
        for k in 1..=k_terms {
            let ck = (std::f64::consts::PI * k as f64 * h).sin() / (std::f64::consts::PI * k as f64);
            let c2 = 2.0 * ck * ck;
            if c2 == 0.0 {
                continue;
            }
            let kr = (k as usize) % n;
            let mut idx = 0usize;
            for d in 0..n {
                kappa[d] += c2 * sin_tab[idx];
                idx += kr;
                if idx >= n {
                    idx -= n;
                }
            }
        }
        CircleKernel { depth, k_terms, kappa }
    }

    /// Pairing of two cell-value arrays on the common grid.
    pub fn pair(&self, f: &[Vec2], g: &[Vec2]) -> f64 {
        let n = self.kappa.len();
        assert_eq!(f.len(), n);
        assert_eq!(g.len(), n);
        let mut acc = 0.0;
        for (j, vf) in f.iter().enumerate() {
            if vf.x == 0.0 && vf.y == 0.0 {
                continue;
            }
            for (jp, vg) in g.iter().enumerate() {
                let d = (jp + n - j) % n;
                acc += vf.dot(*vg) * self.kappa[d];
            }
        }
        acc
    }
}

/// Cyclic total variation of the cell values, entering the truncation bound
/// `|tail| <= Var(f) Var(g) / (pi^2 K)`.
fn cyclic_variation(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|j| v[j].sub(v[(j + n - 1) % n]).norm()).sum()
}

/// `(H^T f, g)` on a common interval, truncated at `k_terms` Fourier modes.
/// Returns the value and a rigorous bound on the truncation error.
pub fn pairing_circle(f: &PiecewiseFn<Vec2>, g: &PiecewiseFn<Vec2>, k_terms: u64) -> (f64, f64) {
    assert_eq!(f.origin, g.origin, "circle pairing needs a common interval");
    let depth = f.depth.max(g.depth);
    let fr = f.refine_to(depth);
    let gr = g.refine_to(depth);
    let kernel = cached_kernel(depth, k_terms);
    let value = kernel.pair(fr.values(), gr.values());
    let bound = cyclic_variation(fr.values()) * cyclic_variation(gr.values())
        / (std::f64::consts::PI.powi(2) * k_terms as f64);
    (value, bound)
}

/// Circle pairing guaranteed to meet `tol`, or an error naming the required
/// truncation.
pub fn pairing_circle_with_tol(
    f: &PiecewiseFn<Vec2>,
    g: &PiecewiseFn<Vec2>,
    k_terms: u64,
    tol: f64,
) -> Result<f64, HilbertError> {
    let depth = f.depth.max(g.depth);
    let fr = f.refine_to(depth);
    let gr = g.refine_to(depth);
    let var = cyclic_variation(fr.values()) * cyclic_variation(gr.values());
    let required = (var / (std::f64::consts::PI.powi(2) * tol)).ceil() as u64;
    if required > k_terms {
        return Err(HilbertError::TruncationTooSmall { given: k_terms, required, tol });
    }
    Ok(pairing_circle(f, g, k_terms).0)
}

/// The three structural constants with their evaluation methods and error
/// bounds.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct KernelConstants {
    /// `(H^R 1_{I0+}, 1_{I0-})`, closed form: -ln 2 / pi.
    pub c0: f64,
    /// `(H^T h_{I0}, h_{I0+})`, Fourier truncation.
    pub c1: f64,
    /// `(H^T h_{I0+}, h_{I0-})`, Fourier truncation.
    pub c2: f64,
    pub c1_err: f64,
    pub c2_err: f64,
    pub k_terms: u64,
}

fn scalar_fn(origin: DyadicInterval, vals: &[f64]) -> PiecewiseFn<Vec2> {
    let v = vals.iter().map(|&x| Vec2::new(x, 0.0)).collect();
    PiecewiseFn::from_values(origin, vals.len().trailing_zeros(), v)
}

/// Normalized Haar basis of Ran Delta^2_{I0} as depth-2 grids (unit L2(I0)
/// norms): `(h_I, h_{I-}, h_{I+})`.
fn delta2_basis() -> [PiecewiseFn<Vec2>; 3] {
    let root = DyadicInterval::root();
    let s = std::f64::consts::SQRT_2;
    [
        scalar_fn(root, &[-1.0, -1.0, 1.0, 1.0]),
        scalar_fn(root, &[-s, s, 0.0, 0.0]),
        scalar_fn(root, &[0.0, 0.0, -s, s]),
    ]
}

/// Compute c0 (closed form), c1 and c2 (truncated circle pairings with a
/// Richardson self-check at K and 4K).
pub fn compute_constants(tol: f64) -> Result<KernelConstants, HilbertError> {
    assert!(tol >= 1e-8, "tolerances below 1e-8 would need more than 2^27 modes");
    let root = DyadicInterval::root();
    let plus = scalar_fn(root, &[0.0, 1.0]).restrict(DyadicInterval::new(1, 1)).expect("half");
    let minus = scalar_fn(root, &[1.0, 0.0]).restrict(DyadicInterval::new(1, 0)).expect("half");
    let c0 = pairing_line(&plus, &minus);

    let [h0, hm, hp] = delta2_basis();
    // required truncation from the variation bound
    let var = 16.0 * 2.0; // conservative: Var(h) <= 4, Var(h_pm) <= 4 sqrt2
    let k1 = ((var / (std::f64::consts::PI.powi(2) * tol)).ceil() as u64).max(1 << 20);
    if k1 > 1 << 26 {
        return Err(HilbertError::TruncationTooSmall { given: 1 << 26, required: k1, tol });
    }
    let (c1_a, b1a) = pairing_circle(&h0, &hp, k1);
    let (c1_b, b1b) = pairing_circle(&h0, &hp, 4 * k1);
    let (c2_a, b2a) = pairing_circle(&hp, &hm, k1);
    let (c2_b, b2b) = pairing_circle(&hp, &hm, 4 * k1);
    debug_assert!((c1_a - c1_b).abs() <= b1a + b1b);
    debug_assert!((c2_a - c2_b).abs() <= b2a + b2b);
    // rotation of the torus through half a period maps h_{I0} to -h_{I0} and
    // h_{I0+} to h_{I0-}: c1 = -(H^T h_{I0}, h_{I0-}).
    let (c1_rot, _) = pairing_circle(&h0, &hm, k1);
    assert!(
        (c1_b + c1_rot).abs() <= tol.max(b1b + b1a),
        "rotation identity violated: {c1_b} vs {}",
        -c1_rot
    );
    assert!(c1_b.abs() > 1e-3, "c1 must be nonzero");
    Ok(KernelConstants { c0, c1: c1_b, c2: c2_b, c1_err: (c1_a - c1_b).abs() + b1b, c2_err: (c2_a - c2_b).abs() + b2b, k_terms: k1 })
}

/// Outcome of checking the periodic-vs-dyadic identity on one interval.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ShiftIdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
    /// Worst entrywise deviation of the 3x3 pairing matrix from
    /// [[0, c1, -c1], [-c1, 0, c2], [c1, -c2, 0]].
    pub matrix_deviation: f64,
}

/// Verify `(H^T_I f, g)_{L2(I)} = (H^dy f, g)_{L2(I)}` for `f, g` in the
/// range of the second-order difference on `I`. The identity is a statement
/// about odd generations (the shift moves odd-level coefficients), so `I`
/// must sit at an odd level.
pub fn htvsdyadic_check(
    i: DyadicInterval,
    f: &PiecewiseFn<Vec2>,
    g: &PiecewiseFn<Vec2>,
    tol: f64,
    constants: &KernelConstants,
    k_terms: u64,
) -> Result<ShiftIdentityReport, HilbertError> {
    if i.level % 2 == 0 {
        return Err(HilbertError::EvenGeneration(i));
    }
    // membership in Ran Delta^2_I: f equals its own second difference there
    for h in [f, g] {
        let d2 = h.martingale_diff2(i).map_err(|_| HilbertError::NotSecondOrder(i))?;
        let on_i = h.restrict(i).map_err(|_| HilbertError::NotSecondOrder(i))?;
        let scale = on_i.values().iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-30);
        if d2.max_abs_diff(&on_i).unwrap_or(f64::INFINITY) > 1e-10 * scale {
            return Err(HilbertError::NotSecondOrder(i));
        }
    }
    let fi = f.restrict(i).map_err(|_| HilbertError::NotSecondOrder(i))?;
    let gi = g.restrict(i).map_err(|_| HilbertError::NotSecondOrder(i))?;
    let (lhs, _) = pairing_circle(&fi, &gi, k_terms);
    // (H^dy f, g)_{L2(I)} with the normalized measure |I|^{-1} dx
    let hf = hdy(f, constants.c1, constants.c2);
    let hf_i = hf.restrict(i).map_err(|_| HilbertError::NotSecondOrder(i))?;
    let gi_r = gi.refine_to(hf_i.depth);
    let cw = 1.0 / gi_r.n_cells() as f64;
    let rhs: f64 = hf_i
        .values()
        .iter()
        .zip(gi_r.values())
        .map(|(a, b)| a.dot(*b))
        .sum::<f64>()
        * cw;

    // 3x3 antisymmetric pairing matrix in the unit basis (h_I, h_{I-}, h_{I+})
    let basis = delta2_basis();
    let expect = [
        [0.0, constants.c1, -constants.c1],
        [-constants.c1, 0.0, constants.c2],
        [constants.c1, -constants.c2, 0.0],
    ];
    let mut matrix_deviation: f64 = 0.0;
    for (r, br) in basis.iter().enumerate() {
        for (c, bc) in basis.iter().enumerate() {
            let (v, _) = pairing_circle(bc, br, k_terms);
            matrix_deviation = matrix_deviation.max((v - expect[r][c]).abs());
        }
    }
    let deviation = (lhs - rhs).abs();
    let _ = tol;
    Ok(ShiftIdentityReport { lhs, rhs, deviation, matrix_deviation })
}

/// The boundary correction `c0 [(<f>_{I0+}, <g>_{I0-}) - (<f>_{I0-}, <g>_{I0+})]`
/// entering the periodization limit of the line pairing.
pub fn hdy_pairing_rhs(
    f: &PiecewiseFn<Vec2>,
    g: &PiecewiseFn<Vec2>,
    c0: f64,
) -> Result<f64, crate::dyadic::DyadicError> {
    let plus = DyadicInterval::new(1, 1);
    let minus = DyadicInterval::new(1, 0);
    let fp = f.average_over(plus)?;
    let fm = f.average_over(minus)?;
    let gp = g.average_over(plus)?;
    let gm = g.average_over(minus)?;
    Ok(c0 * (fp.dot(gm) - fm.dot(gp)))
}

/// `|| 1_{R \ I0} H^R f ||_{L2}` by graded quadrature outside the unit
/// interval (the transform is smooth there except for log singularities at
/// the two boundary points, which the geometric layers resolve).
pub fn leakage_norm(f: &PiecewiseFn<Vec2>) -> f64 {
    let cells: Vec<(f64, f64, Vec2)> = (0..f.n_cells())
        .filter_map(|i| {
            let v = f.values()[i];
            if v.x == 0.0 && v.y == 0.0 {
                None
            } else {
                let c = f.cell(i);
                Some((c.lo(), c.hi(), v))
            }
        })
        .collect();
    let hval = |x: f64| -> Vec2 {
        let mut s = Vec2::zero();
        for &(a, b, v) in &cells {
            let da = (x - a).abs().max(1e-300);
            let db = (x - b).abs().max(1e-300);
            s = s.add(v.scale(da.ln() - db.ln()));
        }
        s.scale(1.0 / std::f64::consts::PI)
    };
    // segments on the right of 1: graded toward the endpoint, geometric to R
    let layers = 50;
    let r_max = 64.0;
    let mut segs: Vec<(f64, f64)> = Vec::new();
    let mut bounds: Vec<f64> = (0..=layers).rev().map(|k| 1.0 + (2.0f64).powi(-k)).collect();
    bounds.dedup();
    for w in bounds.windows(2) {
        segs.push((w[0], w[1]));
    }
    let mut x = 2.0;
    while x < r_max {
        segs.push((x, (2.0 * x).min(r_max)));
        x *= 2.0;
    }
    let left: Vec<(f64, f64)> = segs.iter().map(|&(a, b)| (-(b - 1.0), -(a - 1.0))).collect();
    let g1 = 0.5 - 0.5 / 3.0f64.sqrt();
    let g2 = 0.5 + 0.5 / 3.0f64.sqrt();
    let mut acc = 0.0;
    for &(a, b) in segs.iter().chain(left.iter()) {
        let w = b - a;
        for p in 0..8 {
            let pa = a + w * p as f64 / 8.0;
            let pw = w / 8.0;
            for gg in [g1, g2] {
                let v = hval(pa + pw * gg);
                acc += 0.5 * pw * v.dot(v);
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn c0_closed_form() {
        let root = DyadicInterval::root();
        let plus = scalar_fn(root, &[0.0, 0.0, 1.0, 1.0]).restrict(DyadicInterval::new(1, 1)).unwrap();
        let minus = scalar_fn(root, &[1.0, 1.0, 0.0, 0.0]).restrict(DyadicInterval::new(1, 0)).unwrap();
        let c0 = pairing_line(&plus, &minus);
        assert!(close(c0, -(2.0f64.ln()) / std::f64::consts::PI, 1e-14), "c0 = {c0}");
    }

    #[test]
    fn line_pairing_antisymmetric() {
        let root = DyadicInterval::root();
        let f = scalar_fn(root, &[1.0, -2.0, 0.5, 3.0]);
        let g = scalar_fn(root, &[0.0, 1.0, -1.0, 2.0]);
        let fg = pairing_line(&f, &g);
        let gf = pairing_line(&g, &f);
        assert!(close(fg, -gf, 1e-13));
        assert!(pairing_line(&f, &f).abs() < 1e-13, "(Hf, f) = 0");
    }

    #[test]
    fn line_pairing_translation_dilation_invariant() {
        let root = DyadicInterval::root();
        let f = scalar_fn(root, &[1.0, -1.0, 2.0, 0.0]);
        let g = scalar_fn(root, &[0.5, 0.0, -1.0, 1.0]);
        let base = pairing_line(&f, &g);
        for target in [DyadicInterval::new(1, 0), DyadicInterval::new(2, 5), DyadicInterval::new(0, 3)] {
            let ft = f.affine_pullback(target);
            let gt = g.affine_pullback(target);
            // the pairing scales like |I| under dilation
            let scaled = pairing_line(&ft, &gt) / target.len();
            assert!(close(scaled, base, 1e-12), "target {target:?}");
        }
    }

    #[test]
    fn line_matches_quadrature_oracle() {
        // p.v. quadrature oracle: Gauss panels graded geometrically toward
        // every cell boundary, where H f has its (integrable) log
        // singularities.
        let root = DyadicInterval::root();
        let f = scalar_fn(root, &[2.0, -1.0, 0.0, 1.0]);
        let g = scalar_fn(root, &[1.0, 1.0, -2.0, 0.5]);
        let exact = pairing_line(&f, &g);
        let hf = |x: f64| -> f64 {
            let mut s = 0.0;
            for i in 0..4 {
                let (a, b) = (i as f64 / 4.0, (i + 1) as f64 / 4.0);
                s += f.values()[i].x * ((x - a).abs().max(1e-300).ln() - (x - b).abs().max(1e-300).ln());
            }
            s / std::f64::consts::PI
        };
        let g1 = 0.5 - 0.5 / 3.0f64.sqrt();
        let g2 = 0.5 + 0.5 / 3.0f64.sqrt();
        let mut acc = 0.0;
        for cell in 0..4 {
            let (lo, hi) = (cell as f64 / 4.0, (cell + 1) as f64 / 4.0);
            let mid = 0.5 * (lo + hi);
            // geometric layers from each endpoint toward the middle
            let mut bounds = vec![mid];
            for k in 1..48 {
                bounds.push(lo + (mid - lo) * (0.5f64).powi(k));
            }
            bounds.push(lo);
            let mut segs: Vec<(f64, f64)> = bounds.windows(2).map(|w| (w[1], w[0])).collect();
            let right: Vec<(f64, f64)> = segs.iter().map(|&(a, b)| (lo + hi - b, lo + hi - a)).collect();
            segs.extend(right);
            for (a, b) in segs {
                let w = b - a;
                for p in 0..4 {
                    let pa = a + w * p as f64 / 4.0;
                    let pw = w / 4.0;
                    for gg in [g1, g2] {
                        let x = pa + pw * gg;
                        acc += 0.5 * pw * hf(x) * g.values()[cell].x;
                    }
                }
            }
        }
        assert!(close(acc, exact, 1e-6), "quadrature {acc} vs exact {exact}");
    }

    #[test]
    fn circle_constant_annihilated() {
        let root = DyadicInterval::root();
        let c = scalar_fn(root, &[3.0, 3.0, 3.0, 3.0]);
        let g = scalar_fn(root, &[1.0, -1.0, 2.0, 0.0]);
        let (v, _) = pairing_circle(&c, &g, 1 << 14);
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn circle_richardson_and_constants() {
        let k = compute_constants(1e-6).unwrap();
        assert!(close(k.c0, -(2.0f64.ln()) / std::f64::consts::PI, 1e-12));
        assert!(k.c1.abs() > 0.05, "c1 = {}", k.c1);
        // c2 vanishes: the half-period rotation swaps h_{I0+} and h_{I0-}
        // while commuting with H^T, and the pairing is antisymmetric.
        assert!(k.c2.abs() < 1e-9, "c2 = {}", k.c2);
        assert!(k.c1_err < 1e-5);
    }

    #[test]
    fn circle_scale_invariance() {
        let [h0, hp, _] = delta2_basis();
        let (base, _) = pairing_circle(&h0, &hp, 1 << 16);
        let target = DyadicInterval::new(1, 0);
        let (moved, _) = pairing_circle(&h0.affine_pullback(target), &hp.affine_pullback(target), 1 << 16);
        assert!(close(base, moved, 1e-14));
    }

    #[test]
    fn truncation_error_reporting() {
        let [h0, hp, _] = delta2_basis();
        let err = pairing_circle_with_tol(&h0, &hp, 1 << 8, 1e-9);
        assert!(matches!(err, Err(HilbertError::TruncationTooSmall { .. })));
    }

    #[test]
    fn shift_identity_on_basis() {
        let consts = compute_constants(1e-6).unwrap();
        // f = |I|^{1/2} h_I, g = |I|^{1/2} h_{I+} on I = [1/2, 1): the
        // L2(I)-unit basis, for which both sides equal c1 exactly.
        let i = DyadicInterval::new(1, 1);
        let root = DyadicInterval::root();
        let unit = (0.5f64).sqrt();
        let mut coeffs = std::collections::BTreeMap::new();
        coeffs.insert((1u32, 1u64), Vec2::new(unit, 0.0));
        let f = PiecewiseFn::haar_synthesize(root, 3, Vec2::zero(), &coeffs);
        let mut cg = std::collections::BTreeMap::new();
        cg.insert((2u32, 3u64), Vec2::new(unit, 0.0));
        let g = PiecewiseFn::haar_synthesize(root, 3, Vec2::zero(), &cg);
        let rep = htvsdyadic_check(i, &f, &g, 1e-6, &consts, 1 << 20).unwrap();
        assert!(close(rep.lhs, rep.rhs, 1e-6), "lhs {} rhs {}", rep.lhs, rep.rhs);
        assert!(close(rep.lhs, consts.c1, 1e-5), "pairing {} vs c1 {}", rep.lhs, consts.c1);
        assert!(rep.matrix_deviation < 1e-6);
        // f = g gives zero by antisymmetry
        let rep2 = htvsdyadic_check(i, &f, &f, 1e-6, &consts, 1 << 20).unwrap();
        assert!(rep2.lhs.abs() < 1e-9 && rep2.rhs.abs() < 1e-12);
        // even-generation intervals are rejected
        assert!(matches!(
            htvsdyadic_check(DyadicInterval::new(2, 1), &f, &g, 1e-6, &consts, 1 << 20),
            Err(HilbertError::EvenGeneration(_))
        ));
    }

    #[test]
    fn leakage_decreases_for_mean_zero_periodizations() {
        // crude periodization of hhat_{I0+} at increasing frequency
        let mk = |n: u32| -> PiecewiseFn<Vec2> {
            let depth = n + 3;
            let cells = 1usize << depth;
            let mut vals = vec![Vec2::zero(); cells];
            let half = cells / 2;
            let cellw = half >> n;
            for c in 0..(1usize << n) {
                let lo = half + c * cellw;
                for (t, chunk) in [(0, -1.0), (1, -1.0), (2, 1.0), (3, 1.0)] {
                    for j in 0..cellw / 4 {
                        vals[lo + t * (cellw / 4) + j] = Vec2::new(chunk, 0.0);
                    }
                }
            }
            PiecewiseFn::from_values(DyadicInterval::root(), depth, vals)
        };
        let l3 = leakage_norm(&mk(3));
        let l5 = leakage_norm(&mk(5));
        let l7 = leakage_norm(&mk(7));
        assert!(l3 > l5 && l5 > l7, "leakage {l3}, {l5}, {l7} not decreasing");
    }
}
