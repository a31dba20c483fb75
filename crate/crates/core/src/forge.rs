//! Construction of the two-parameter counterexample weight family: rotation
//! and stretching steps, the stopping/terminal tree, per-generation
//! eigenvalue tables and the dyadic-A2 measurement.
//!
//! The model is symbolic. Eigenvalues depend only on the generation, frames
//! only on the sign path, so the whole tree is described by one table plus a
//! path-to-angle walk; leaves are materialized on demand and only at small
//! depth. Everything global the evaluators need is reconstructed from the
//! table by the frame recursions in `operators`.

use crate::dyadic::{DyadicInterval, PiecewiseFn, DEPTH_CAP};
use crate::mat2::{terminal_children, Mat2Error, Spectral2, SymMat2, Vec2};
use crate::scaled::Scaled;
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid construction parameters: {0}")]
    InvalidParams(String),
    #[error("construction failed at generation {generation}: {what}")]
    Construction { generation: usize, what: String },
    #[error("rotation would produce nonpositive eigenvalue (delta^2 >= beta/alpha)")]
    RotationDegenerate,
    #[error("stretching parameter s={0} outside [0.9, 1]")]
    StretchParameter(f64),
    #[error("materialization needs depth {needed} > cap {cap}")]
    TooDeep { needed: u32, cap: u32 },
    #[error(transparent)]
    Mat2(#[from] Mat2Error),
}

/// How the initial eigenvalues are seeded given (Q, delta0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeedConvention {
    /// alpha0 = alpha0# = q delta0^-1 sqrt(Q), beta0 = beta0# = q^-1 delta0 sqrt(Q).
    Symmetric,
    /// alpha0 fixed to the given value; the rest follows from delta0 and Q.
    Alpha0Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct ConstructionParams {
    /// Target dyadic A2 characteristic.
    pub q_target: f64,
    /// Initial rotation parameter delta_0; must be small and positive.
    pub delta0: f64,
    /// The fixed small parameter q (0.1 in the construction; 0 disables
    /// rotations entirely, the degenerate control variant).
    pub q_small: f64,
    /// Number of stopping generations.
    pub n_max: usize,
    pub convention: SeedConvention,
}

impl ConstructionParams {
    pub fn new(q_target: f64, delta0: f64, n_max: usize) -> Self {
        ConstructionParams { q_target, delta0, q_small: 0.1, n_max, convention: SeedConvention::Symmetric }
    }

    /// Default delta0 rule: small enough that remainder terms stay below
    /// roughly 10% of main terms across the supported Q range.
    pub fn default_delta0(q_target: f64) -> f64 {
        (1e-3f64).min(0.05 / q_target.sqrt())
    }

    /// Default generation count for exponent runs: the geometric series with
    /// ratio 1 - 1/(2Q) is within 1 - e^-8 of its sum after 16Q terms.
    pub fn default_n_max(q_target: f64) -> usize {
        (16.0 * q_target).ceil() as usize
    }

    pub fn stretching_ratio(&self) -> f64 {
        2.0 - 1.0 / self.q_target
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        let degenerate_identity = self.q_small == 0.0 && self.q_target == 1.0;
        if !(self.q_target > 2.0 || degenerate_identity) {
            return Err(ForgeError::InvalidParams(format!("Q = {} must exceed 2", self.q_target)));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= 0.1) {
            return Err(ForgeError::InvalidParams(format!("delta0 = {} outside (0, 0.1]", self.delta0)));
        }
        if !(0.0..1.0).contains(&self.q_small) {
            return Err(ForgeError::InvalidParams(format!("q = {} outside [0, 1)", self.q_small)));
        }
        if let SeedConvention::Alpha0Fixed(a) = self.convention {
            if a <= 0.0 {
                return Err(ForgeError::InvalidParams("alpha0 must be positive".into()));
            }
        }
        Ok(())
    }

    /// Initial eccentricity E0 = alpha0/beta0. For q = 0 the relation
    /// delta0 = q E0^{-1/2} degenerates, so the reference q = 0.1 seeds the
    /// same eccentricity a small-q run would have had.
    fn initial_eccentricity(&self) -> f64 {
        let qref = if self.q_small > 0.0 { self.q_small } else { 0.1 };
        (qref / self.delta0).powi(2)
    }
}

/// One generation of the eigenvalue table. `alpha/beta` are the eigenvalues
/// of the inverse-weight average, the sharp pair belongs to the weight
/// average; tilde values are the post-rotation intermediates.
#[derive(Clone, Debug)]
pub struct GenRow {
    pub alpha: Scaled,
    pub beta: Scaled,
    pub alpha_sharp: Scaled,
    pub beta_sharp: Scaled,
    pub t_alpha: Scaled,
    pub t_beta: Scaled,
    pub t_alpha_sharp: Scaled,
    pub t_beta_sharp: Scaled,
    /// Rotation parameter delta_n = q sqrt(beta_n/alpha_n).
    pub delta: Scaled,
    /// Rotation angle theta_n = arctan(delta_n); underflows to 0 far below
    /// any depth at which frames are materialized.
    pub theta: f64,
    /// cos(2 theta_n) and sin(2 theta_n); the sine is kept in scaled form
    /// because it decays like r^-n.
    pub cos2theta: f64,
    pub sin2theta: Scaled,
    /// s_n = talpha_n tbeta_sharp_n / Q.
    pub s: f64,
    /// t_n = delta_n (talpha#_n - tbeta#_n)/(1+delta_n^2) alpha_n and its
    /// asymptotic form ttilde_n = q sqrt(Q alpha#_n alpha_n).
    pub t: Scaled,
    pub t_tilde: Scaled,
    /// Coefficient of (a b* + b a*) in <W hhat_J>_J (rotation nodes): -m_n.
    pub m_w: Scaled,
    /// Coefficient of (a b* + b a*) in <W^-1 hhat_J>_J: +m_v.
    pub m_v: Scaled,
}

/// Eigenvalues on a terminal interval hanging below a generation-n stopping
/// interval: `v` has (va, vb) on the (a, b) axes, `w` has (wa, wb).
#[derive(Clone, Debug)]
pub struct TermRow {
    pub va: Scaled,
    pub vb: Scaled,
    pub wa: Scaled,
    pub wb: Scaled,
}

#[derive(Clone, Debug)]
pub struct EigenTable {
    pub rows: Vec<GenRow>,
    pub term: Vec<TermRow>,
}

/// Node kinds along the stopping tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Stopping,
    /// Rotation child I_pm of a stopping interval.
    Mid,
    Terminal,
    /// Child of a terminal interval (or of a final-cut stopping interval).
    Leaf,
}

/// A resolved tree node: interval, frame angle and both cached averages.
#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub generation: usize,
    pub interval: DyadicInterval,
    pub phi: f64,
    pub v_avg: Spectral2,
    pub w_avg: Spectral2,
}

/// The constructed weight pair (W, W^-1), symbolically.
#[derive(Debug)]
pub struct WeightModel {
    pub params: ConstructionParams,
    pub table: EigenTable,
    /// Eagerly cached stopping nodes for shallow generations.
    nodes: HashMap<Vec<bool>, Node>,
    cached_generations: usize,
}

/// Spectral rotation step: split both averages into children whose frames
/// are rotated by +/- arctan(delta), delta = q sqrt(beta/alpha), keeping the
/// martingale identities exact.
pub fn rotation_step(
    v: &Spectral2,
    w: &Spectral2,
    q_small: f64,
) -> Result<(Spectral2, Spectral2, Spectral2, Spectral2), ForgeError> {
    if (v.phi - w.phi).abs() > 1e-12 {
        return Err(ForgeError::InvalidParams("rotation requires a shared frame".into()));
    }
    if !(v.lam_a > v.lam_b) {
        return Err(ForgeError::InvalidParams("rotation requires alpha > beta".into()));
    }
    let q = Scaled::from_f64(q_small);
    let delta = q * (v.lam_b / v.lam_a).sqrt();
    let d2 = delta * delta;
    if !(d2 < v.lam_b / v.lam_a) {
        return Err(ForgeError::RotationDegenerate);
    }
    let one = Scaled::one();
    let rot = |a: Scaled, b: Scaled| -> Result<(Scaled, Scaled), ForgeError> {
        let ta = (a - d2 * b) / (one - d2);
        let tb = (b - d2 * a) / (one - d2);
        if !tb.is_sign_positive() || !ta.is_sign_positive() {
            return Err(ForgeError::RotationDegenerate);
        }
        Ok((ta, tb))
    };
    let (tva, tvb) = rot(v.lam_a, v.lam_b)?;
    // w is diagonal in the same frame with the roles of the axes exchanged:
    // lam_a(w) = beta#, lam_b(w) = alpha#; rotate the (alpha#, beta#) pair.
    let (twa, twb) = rot(w.lam_b, w.lam_a)?;
    let theta = delta.to_f64().atan();
    let mk = |phi: f64, la: Scaled, lb: Scaled| Spectral2::new(phi, la, lb);
    Ok((
        mk(v.phi + theta, tva, tvb),
        mk(v.phi - theta, tva, tvb),
        mk(w.phi + theta, twb, twa),
        mk(w.phi - theta, twb, twa),
    ))
}

/// Scalar stretching step with ratio r = 2 - 1/Q: the right child returns
/// the product to Q, the left child drops it into [1, 2].
pub fn stretch_step(
    x: f64,
    y: f64,
    s: f64,
    q_target: f64,
) -> Result<((f64, f64), (f64, f64)), ForgeError> {
    if !(0.9..=1.0).contains(&s) {
        return Err(ForgeError::StretchParameter(s));
    }
    if !(x > 0.0 && y > 0.0) {
        return Err(ForgeError::InvalidParams("stretch needs positive coordinates".into()));
    }
    let r = 2.0 - 1.0 / q_target;
    let xp = r * x;
    let yp = y / (s * r);
    let xm = (2.0 - r) * x;
    let ym = (2.0 - 1.0 / (s * r)) * y;
    Ok(((xp, yp), (xm, ym)))
}

fn build_table(p: &ConstructionParams) -> Result<EigenTable, ForgeError> {
    let q_target = Scaled::from_f64(p.q_target);
    let one = Scaled::one();
    let two = Scaled::from_f64(2.0);
    let r = Scaled::from_f64(p.stretching_ratio());
    let qs = Scaled::from_f64(p.q_small);

    let e0 = p.initial_eccentricity();
    let (alpha0, beta0, alpha0_sharp, beta0_sharp) = match p.convention {
        SeedConvention::Symmetric => {
            let a = (Scaled::from_f64(e0) * q_target).sqrt();
            let b = (q_target / Scaled::from_f64(e0)).sqrt();
            (a, b, a, b)
        }
        SeedConvention::Alpha0Fixed(a0) => {
            let a = Scaled::from_f64(a0);
            let b = a / Scaled::from_f64(e0);
            (a, b, q_target / b, q_target / a)
        }
    };

    let mut rows = Vec::with_capacity(p.n_max + 1);
    let mut term = Vec::with_capacity(p.n_max);
    let (mut a, mut b, mut ash, mut bsh) = (alpha0, beta0, alpha0_sharp, beta0_sharp);
    for n in 0..=p.n_max {
        if !(a.is_sign_positive() && b.is_sign_positive()) {
            return Err(ForgeError::Construction { generation: n, what: "eigenvalue sign loss".into() });
        }
        let delta = qs * (b / a).sqrt();
        let d2 = delta * delta;
        if !(d2 < b / a) && p.q_small > 0.0 {
            return Err(ForgeError::Construction { generation: n, what: "rotation precondition".into() });
        }
        let ta = (a - d2 * b) / (one - d2);
        let tb = (b - d2 * a) / (one - d2);
        let tash = (ash - d2 * bsh) / (one - d2);
        let tbsh = (bsh - d2 * ash) / (one - d2);
        if !tb.is_sign_positive() || !tbsh.is_sign_positive() {
            return Err(ForgeError::Construction { generation: n, what: "rotation produced nonpositive eigenvalue".into() });
        }
        let s_scaled = ta * tbsh / q_target;
        let s = s_scaled.to_f64();
        let df = delta.to_f64();
        let theta = df.atan();
        let cos2theta = (1.0 - df * df) / (1.0 + df * df);
        let sin2theta = two * delta / (one + d2);
        let m_w = delta * (tash - tbsh) / (one + d2);
        let m_v = delta * (ta - tb) / (one + d2);
        let t = m_w * a;
        let t_tilde = qs * (q_target * ash * a).sqrt();
        rows.push(GenRow {
            alpha: a,
            beta: b,
            alpha_sharp: ash,
            beta_sharp: bsh,
            t_alpha: ta,
            t_beta: tb,
            t_alpha_sharp: tash,
            t_beta_sharp: tbsh,
            delta,
            theta,
            cos2theta,
            sin2theta,
            s,
            t,
            t_tilde,
            m_w,
            m_v,
        });
        if n < p.n_max {
            if !(0.9..=1.0 + 1e-12).contains(&s) {
                return Err(ForgeError::Construction { generation: n, what: format!("s_n = {s} outside [0.9, 1]") });
            }
            // Stretch in each eigenaxis; the right children carry the
            // restored-product pair, the left children become terminal.
            let sr = s_scaled * r;
            let a_next = r * ta;
            let bsh_next = tbsh / sr;
            let ash_next = r * tash;
            let b_next = tb / sr;
            let fac = two - (sr).recip();
            term.push(TermRow { va: ta / q_target, vb: fac * tb, wa: fac * tbsh, wb: tash / q_target });
            a = a_next;
            b = b_next;
            ash = ash_next;
            bsh = bsh_next;
        }
    }
    Ok(EigenTable { rows, term })
}

impl WeightModel {
    /// Run the full construction.
    pub fn build(params: ConstructionParams) -> Result<WeightModel, ForgeError> {
        params.validate()?;
        let table = build_table(&params)?;
        let mut model = WeightModel { params, table, nodes: HashMap::new(), cached_generations: 0 };
        let cache_gens = model.params.n_max.min(10);
        let mut paths: Vec<Vec<bool>> = vec![vec![]];
        for _ in 0..=cache_gens {
            let mut next = Vec::with_capacity(paths.len() * 2);
            for p in &paths {
                let node = model.stopping_node_walk(p);
                model.nodes.insert(p.clone(), node);
                let mut l = p.clone();
                l.push(false);
                let mut r = p.clone();
                r.push(true);
                next.push(l);
                next.push(r);
            }
            paths = next;
        }
        model.cached_generations = cache_gens;
        Ok(model)
    }

    pub fn n_max(&self) -> usize {
        self.params.n_max
    }

    pub fn q_target(&self) -> f64 {
        self.params.q_target
    }

    fn row(&self, n: usize) -> &GenRow {
        &self.table.rows[n]
    }

    /// Frame angle accumulated along a sign path (true = the `+` rotation).
    pub fn phi_of_path(&self, path: &[bool]) -> f64 {
        path.iter().enumerate().map(|(j, &s)| if s { self.row(j).theta } else { -self.row(j).theta }).sum()
    }

    /// Interval of the stopping node reached by a sign path: each step goes
    /// to the chosen rotation child, then to its right (stopping) child.
    pub fn interval_of_path(&self, path: &[bool]) -> DyadicInterval {
        let mut i = DyadicInterval::root();
        for &s in path {
            let mid = if s { i.right() } else { i.left() };
            i = mid.right();
        }
        i
    }

    fn stopping_node_walk(&self, path: &[bool]) -> Node {
        let n = path.len();
        let row = self.row(n);
        let phi = self.phi_of_path(path);
        Node {
            kind: NodeKind::Stopping,
            generation: n,
            interval: self.interval_of_path(path),
            phi,
            v_avg: Spectral2::new(phi, row.alpha, row.beta),
            w_avg: Spectral2::new(phi, row.beta_sharp, row.alpha_sharp),
        }
    }

    /// Stopping node for a sign path (cached for shallow generations).
    pub fn stopping_node(&self, path: &[bool]) -> Node {
        if path.len() <= self.cached_generations {
            if let Some(n) = self.nodes.get(path) {
                return n.clone();
            }
        }
        self.stopping_node_walk(path)
    }

    /// Rotation child of a stopping node: `sign` selects the +/- frame.
    pub fn mid_node(&self, path: &[bool], sign: bool) -> Node {
        let n = path.len();
        let row = self.row(n);
        let parent = self.stopping_node(path);
        let phi = parent.phi + if sign { row.theta } else { -row.theta };
        let interval = if sign { parent.interval.right() } else { parent.interval.left() };
        Node {
            kind: NodeKind::Mid,
            generation: n,
            interval,
            phi,
            v_avg: Spectral2::new(phi, row.t_alpha, row.t_beta),
            w_avg: Spectral2::new(phi, row.t_beta_sharp, row.t_alpha_sharp),
        }
    }

    /// Terminal node below a mid node (its left child).
    pub fn terminal_node(&self, path: &[bool], sign: bool) -> Node {
        let n = path.len();
        let mid = self.mid_node(path, sign);
        let t = &self.table.term[n];
        Node {
            kind: NodeKind::Terminal,
            generation: n,
            interval: mid.interval.left(),
            phi: mid.phi,
            v_avg: Spectral2::new(mid.phi, t.va, t.vb),
            w_avg: Spectral2::new(mid.phi, t.wa, t.wb),
        }
    }

    /// Witness vectors: `a0` is the initial frame axis (angle 0), the
    /// alternative is `a0 + b0`.
    pub fn witness(&self, diagonal_mix: bool) -> Vec2 {
        if diagonal_mix {
            Vec2::new(1.0, 1.0)
        } else {
            Vec2::new(1.0, 0.0)
        }
    }

    /// `||f||^2_{L2(W)}` for `f = 1_{I0} W^{-1} b`: equals `(<W^-1>_{I0} b, b)`.
    pub fn f_norm2(&self, b: Vec2) -> f64 {
        let r0 = self.row(0);
        let u1 = b.x; // frame at generation 0 has angle 0
        let u2 = b.y;
        (r0.alpha * (u1 * u1) + r0.beta * (u2 * u2)).to_f64()
    }

    /// Dyadic A2 characteristic: the max of the pair characteristic over all
    /// tree nodes. Every node's averages share a frame, so per-axis products
    /// suffice; values depend only on the node kind and generation.
    pub fn dyadic_a2(&self) -> f64 {
        let mut best = Scaled::from_f64(1.0); // leaves realize exactly 1
        for n in 0..=self.params.n_max {
            let row = self.row(n);
            let stop = max_scaled(row.alpha * row.beta_sharp, row.beta * row.alpha_sharp);
            let mid = max_scaled(row.t_alpha * row.t_beta_sharp, row.t_beta * row.t_alpha_sharp);
            best = max_scaled(best, max_scaled(stop, mid));
            if n < self.params.n_max {
                let t = &self.table.term[n];
                best = max_scaled(best, max_scaled(t.va * t.wa, t.vb * t.wb));
            }
        }
        best.to_f64()
    }

    /// Materialize the weight and its inverse as leaf arrays at depth
    /// `2 n_max + 1` (terminal and final-cut completions included).
    pub fn materialize(&self) -> Result<(PiecewiseFn<SymMat2>, PiecewiseFn<SymMat2>), ForgeError> {
        let depth = 2 * self.params.n_max as u32 + 1;
        if depth > DEPTH_CAP {
            return Err(ForgeError::TooDeep { needed: depth, cap: DEPTH_CAP });
        }
        let n_cells = 1usize << depth;
        let mut w = vec![SymMat2::zero(); n_cells];
        let mut v = vec![SymMat2::zero(); n_cells];
        self.fill_rec(&mut w, &mut v, &mut Vec::new(), 0, n_cells, depth)?;
        let root = DyadicInterval::root();
        Ok((PiecewiseFn::from_values(root, depth, w), PiecewiseFn::from_values(root, depth, v)))
    }

    fn fill_terminal(
        &self,
        w: &mut [SymMat2],
        v: &mut [SymMat2],
        node: &Node,
        lo: usize,
        hi: usize,
    ) -> Result<(), ForgeError> {
        let wm = node.w_avg.to_sym();
        let vm = node.v_avg.to_sym();
        let (wp, wmn) = terminal_children(wm, vm, 1e-9)?;
        let mid = (lo + hi) / 2;
        let wp_inv = wp.inverse()?;
        let wm_inv = wmn.inverse()?;
        for i in lo..mid {
            w[i] = wmn;
            v[i] = wm_inv;
        }
        for i in mid..hi {
            w[i] = wp;
            v[i] = wp_inv;
        }
        Ok(())
    }

    fn fill_rec(
        &self,
        w: &mut [SymMat2],
        v: &mut [SymMat2],
        path: &mut Vec<bool>,
        lo: usize,
        hi: usize,
        _depth: u32,
    ) -> Result<(), ForgeError> {
        let n = path.len();
        if n == self.params.n_max {
            let node = self.stopping_node(path);
            return self.fill_terminal(w, v, &node, lo, hi);
        }
        let mid = (lo + hi) / 2;
        for (sign, clo, chi) in [(false, lo, mid), (true, mid, hi)] {
            let term = self.terminal_node(path, sign);
            let cmid = (clo + chi) / 2;
            self.fill_terminal(w, v, &term, clo, cmid)?;
            path.push(sign);
            self.fill_rec(w, v, path, cmid, chi, _depth)?;
            path.pop();
        }
        Ok(())
    }

    /// Per-generation table export, deterministic order.
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# eigentable v1 Q={} delta0={} q={} n_max={}", self.params.q_target, self.params.delta0, self.params.q_small, self.params.n_max)?;
        writeln!(out, "n,alpha,beta,alpha_sharp,beta_sharp,talpha,tbeta,talpha_sharp,tbeta_sharp,delta,theta,s,t,t_tilde")?;
        for (n, r) in self.table.rows.iter().enumerate() {
            writeln!(
                out,
                "{n},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.alpha, r.beta, r.alpha_sharp, r.beta_sharp, r.t_alpha, r.t_beta, r.t_alpha_sharp, r.t_beta_sharp, r.delta, r.theta, r.s, r.t, r.t_tilde
            )?;
        }
        Ok(())
    }

    /// Relative-error check of every per-generation identity the table must
    /// satisfy: martingale identities of the rotation and stretching steps,
    /// the product and cross-ratio identities, and the growth/decay
    /// orderings (whose strict form degrades to equality once delta_n^2
    /// drops below machine epsilon, hence the relative reading). Returns
    /// (description, worst relative violation) pairs.
    pub fn table_invariants(&self) -> Vec<(String, f64)> {
        let q = Scaled::from_f64(self.params.q_target);
        let one = Scaled::one();
        let r = self.params.stretching_ratio();
        let c = self.row(0).alpha_sharp / self.row(0).alpha;
        let mut e_prod: f64 = 0.0;
        let mut e_cross: f64 = 0.0;
        let mut e_mart: f64 = 0.0;
        let mut e_order: f64 = 0.0;
        let mut e_ratio: f64 = 0.0;
        let mut s_min = f64::INFINITY;
        let mut s_max = f64::NEG_INFINITY;
        // relative excess of a quantity that should be <= 1
        let excess = |x: Scaled| (x.to_f64() - 1.0).max(0.0);
        for n in 0..=self.params.n_max {
            let row = self.row(n);
            e_prod = e_prod.max(Scaled::rel_diff(row.alpha * row.beta_sharp, q));
            e_prod = e_prod.max(Scaled::rel_diff(row.beta * row.alpha_sharp, q));
            e_cross = e_cross.max(Scaled::rel_diff(row.alpha_sharp, c * row.alpha));
            e_cross = e_cross.max(Scaled::rel_diff(row.beta, c * row.beta_sharp));
            s_min = s_min.min(row.s);
            s_max = s_max.max(row.s);
            // rotation martingale: alpha = (talpha + d^2 tbeta)/(1+d^2), etc.
            let d2 = row.delta * row.delta;
            let back_a = (row.t_alpha + d2 * row.t_beta) / (one + d2);
            let back_b = (row.t_beta + d2 * row.t_alpha) / (one + d2);
            let back_ash = (row.t_alpha_sharp + d2 * row.t_beta_sharp) / (one + d2);
            e_mart = e_mart.max(Scaled::rel_diff(back_a, row.alpha));
            e_mart = e_mart.max(Scaled::rel_diff(back_b, row.beta));
            e_mart = e_mart.max(Scaled::rel_diff(back_ash, row.alpha_sharp));
            if n + 1 <= self.params.n_max {
                let next = self.row(n + 1);
                let term = &self.table.term[n];
                // stretching martingale: midpoints reproduce the tilde values
                let half = Scaled::from_f64(0.5);
                e_mart = e_mart.max(Scaled::rel_diff(half * (next.alpha + term.va), row.t_alpha));
                e_mart = e_mart.max(Scaled::rel_diff(half * (next.beta_sharp + term.wa), row.t_beta_sharp));
                e_mart = e_mart.max(Scaled::rel_diff(half * (next.alpha_sharp + term.wb), row.t_alpha_sharp));
                e_mart = e_mart.max(Scaled::rel_diff(half * (next.beta + term.vb), row.t_beta));
                if self.params.q_small > 0.0 {
                    // alpha_{n+1} >= r alpha_n, beta_{n+1} <= beta_n / r,
                    // delta_{n+1} <= delta_n / r (relative reading)
                    e_order = e_order.max(excess(row.alpha * Scaled::from_f64(r) / next.alpha));
                    e_order = e_order.max(excess(next.beta * Scaled::from_f64(r) / row.beta));
                    e_order = e_order.max(excess(next.delta * Scaled::from_f64(r) / row.delta));
                } else {
                    e_ratio = e_ratio.max(Scaled::rel_diff(next.alpha, row.alpha * r));
                }
            }
        }
        let mut out = vec![
            ("martingale identities".to_string(), e_mart),
            ("alpha_n*beta_sharp_n = Q".to_string(), e_prod),
            ("alpha_sharp_n = c*alpha_n".to_string(), e_cross),
            (
                "s_n in (0.985, 1]".to_string(),
                if s_min > 0.985 && s_max <= 1.0 + 1e-12 { 0.0 } else { 1.0 },
            ),
            ("growth/decay ordering (rel)".to_string(), e_order),
        ];
        if self.params.q_small == 0.0 {
            out.push(("q=0: alpha_{n+1} = r alpha_n".to_string(), e_ratio));
        }
        out
    }
}

fn max_scaled(a: Scaled, b: Scaled) -> Scaled {
    if a >= b {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::a2_pair_char;

    #[test]
    fn rotation_step_example() {
        // alpha=2, beta=1, q=0.1: delta^2 = 0.005, talpha = 1.995/0.995, tbeta = 0.99/0.995.
        let v = Spectral2::new(0.0, Scaled::from_f64(2.0), Scaled::from_f64(1.0));
        let w = Spectral2::new(0.0, Scaled::from_f64(1.0), Scaled::from_f64(2.0)); // arbitrary sharp pair
        let (vp, vm, _, _) = rotation_step(&v, &w, 0.1).unwrap();
        assert!((vp.lam_a.to_f64() - 1.995 / 0.995).abs() < 1e-12);
        assert!((vp.lam_b.to_f64() - 0.99 / 0.995).abs() < 1e-12);
        let delta = 0.1 * (0.5f64).sqrt();
        assert!((vp.phi - delta.atan()).abs() < 1e-15);
        assert!((vm.phi + delta.atan()).abs() < 1e-15);
        // martingale: (v+ + v-)/2 = v
        let avg = vp.to_sym().add(vm.to_sym()).scale(0.5);
        let orig = v.to_sym();
        assert!(avg.sub(orig).max_abs_entry() < 1e-14 * orig.max_abs_entry());
    }

    #[test]
    fn stretch_step_example() {
        let ((xp, yp), (xm, ym)) = stretch_step(1.0, 2.0, 1.0, 2.0).unwrap();
        assert!((xp - 1.5).abs() < 1e-15 && (yp - 4.0 / 3.0).abs() < 1e-15);
        assert!((xp * yp - 2.0).abs() < 1e-15);
        assert!((xm - 0.5).abs() < 1e-15 && (ym - 8.0 / 3.0).abs() < 1e-15);
        let pm = xm * ym;
        assert!((1.0..=2.0).contains(&pm));
        // midpoint identity
        assert!((0.5 * (xp + xm) - 1.0).abs() < 1e-15 && (0.5 * (yp + ym) - 2.0).abs() < 1e-15);
        assert!(stretch_step(1.0, 2.0, 0.5, 4.0).is_err());
    }

    #[test]
    fn table_identities_small() {
        let model = WeightModel::build(ConstructionParams::new(4.0, 0.01, 2)).unwrap();
        for (label, err) in model.table_invariants() {
            assert!(err < 1e-12, "{label}: {err}");
        }
        // s_n close to 1 - q^2 from above
        for row in &model.table.rows {
            assert!(row.s > 0.99 && row.s <= 1.0);
        }
    }

    #[test]
    fn dyadic_a2_equals_q_and_node_lmi() {
        let model = WeightModel::build(ConstructionParams::new(16.0, 1e-3, 3)).unwrap();
        let a2 = model.dyadic_a2();
        assert!((a2 - 16.0).abs() < 16.0 * 1e-10, "dyadic A2 = {a2}");
        // spot-check the Loewner form <W^-1>_I <= Q <W>_I^{-1} on cached nodes
        for path in [vec![], vec![true], vec![false, true], vec![true, true, false]] {
            let node = model.stopping_node(&path);
            let v = node.v_avg.to_sym();
            let w = node.w_avg.to_sym();
            let pc = a2_pair_char(v, w).unwrap();
            assert!(pc <= 16.0 * (1.0 + 1e-10));
        }
    }

    #[test]
    fn degenerate_identity_weight() {
        // delta0 = 0.1 together with the reference q = 0.1 gives unit
        // eccentricity, so the whole construction collapses to W = I.
        let mut p = ConstructionParams::new(1.0, 0.1, 3);
        p.q_small = 0.0;
        p.convention = SeedConvention::Alpha0Fixed(1.0);
        let model = WeightModel::build(p).unwrap();
        assert!((model.dyadic_a2() - 1.0).abs() < 1e-12);
        let (w, _v) = model.materialize().unwrap();
        for c in w.values() {
            assert!(c.sub(SymMat2::identity()).max_abs_entry() < 1e-12);
        }
    }

    #[test]
    fn materialized_leaves_invert_exactly() {
        let model = WeightModel::build(ConstructionParams::new(4.0, 0.01, 3)).unwrap();
        let (w, v) = model.materialize().unwrap();
        for (wm, vm) in w.values().iter().zip(v.values()) {
            // leafwise W * V = I to 1e-10
            let prod11 = wm.a11 * vm.a11 + wm.a12 * vm.a12;
            let prod12 = wm.a11 * vm.a12 + wm.a12 * vm.a22;
            let prod22 = wm.a12 * vm.a12 + wm.a22 * vm.a22;
            assert!((prod11 - 1.0).abs() < 1e-10 && prod12.abs() < 1e-10 && (prod22 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn materialized_averages_match_symbolic_nodes() {
        let model = WeightModel::build(ConstructionParams::new(8.0, 1e-3, 3)).unwrap();
        let (w, v) = model.materialize().unwrap();
        for path in [vec![], vec![false], vec![true, false], vec![false, true, true]] {
            let node = model.stopping_node(&path);
            let wa = w.average_over(node.interval).unwrap();
            let va = v.average_over(node.interval).unwrap();
            let ws = node.w_avg.to_sym();
            let vs = node.v_avg.to_sym();
            assert!(wa.sub(ws).max_abs_entry() <= 1e-11 * ws.max_abs_entry());
            assert!(va.sub(vs).max_abs_entry() <= 1e-11 * vs.max_abs_entry());
        }
        // martingale identity at a mid node
        let mid = model.mid_node(&[true], false);
        let avg = w.average_over(mid.interval).unwrap();
        assert!(avg.sub(mid.w_avg.to_sym()).max_abs_entry() <= 1e-11 * avg.max_abs_entry());
    }

    #[test]
    fn angle_bound_on_descendants() {
        // |phi_J - phi_I| <= 3 theta_n for J a stopping descendant of I in S_n.
        let model = WeightModel::build(ConstructionParams::new(8.0, 1e-3, 8)).unwrap();
        let base: Vec<bool> = vec![true, false];
        let phi_i = model.phi_of_path(&base);
        let theta2 = model.table.rows[2].theta;
        for bits in 0..64u32 {
            let mut path = base.clone();
            for j in 0..6 {
                path.push(bits >> j & 1 == 1);
            }
            let phi_j = model.phi_of_path(&path);
            assert!((phi_j - phi_i).abs() <= 3.0 * theta2 + 1e-15);
        }
    }

    #[test]
    fn stopping_interval_counting() {
        let model = WeightModel::build(ConstructionParams::new(4.0, 0.01, 4)).unwrap();
        // |S_n| = 2^n each of length 4^{-n}
        for n in 0..=4usize {
            let mut total = 0.0;
            for bits in 0..(1u32 << n) {
                let path: Vec<bool> = (0..n).map(|j| bits >> j & 1 == 1).collect();
                let iv = model.interval_of_path(&path);
                assert_eq!(iv.level, 2 * n as u32);
                total += iv.len();
            }
            assert!((total - (0.5f64).powi(n as i32)).abs() < 1e-15);
        }
    }
}
