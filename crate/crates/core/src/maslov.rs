//! Maslov index of paths of Lagrangian planes.
//!
//! For a path `Υ(s)` and a reference plane `Z` the relative unitary
//! `V(s) = W_Z W_{Υ(s)}*` has eigenvalue 1 exactly on `Υ(s) ∩ Z`. The index
//! is the signed count of eigenphases of `V` passing through 0, computed
//! with the partition formula
//!
//! ```text
//! Mas = Σ_j k(s_j, ε_j) − k(s_{j−1}, ε_j),   k(s, ε) = #{ϰ ∈ [0, ε] : e^{iϰ} ∈ spec V(s)}
//! ```
//!
//! on an adaptively refined grid. With this orientation a crossing whose
//! crossing form is positive definite adds `+dim` and the rotating line
//! `θ ↦ (cos θ, sin θ)` through the horizontal line adds `−1`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{hermitian_eigen, orthonormal_columns, svd_ascending, unitary_eigen, wrap_phase};
use crate::symplectic::{
    intersection_dim, is_lagrangian, omega, projector_distance, souriau_of_orthonormal, LagrangianFrame,
    DEFAULT_TOL_PHASE,
};
use crate::{CMatrix, CVector, Error, Result, C64};

type Sampler = Arc<dyn Fn(f64) -> Result<LagrangianFrame> + Send + Sync>;

/// A path `s ↦ Υ(s)` on `[a, b]`.
///
/// Samplers may be queried slightly outside `[a, b]` when crossing forms are
/// differentiated at an endpoint.
#[derive(Clone)]
pub struct LagrangianPath {
    sampler: Sampler,
    interval: (f64, f64),
    half_dim: usize,
    smooth: bool,
}

impl fmt::Debug for LagrangianPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianPath")
            .field("interval", &self.interval)
            .field("half_dim", &self.half_dim)
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl LagrangianPath {
    pub fn new(
        half_dim: usize,
        interval: (f64, f64),
        smooth: bool,
        sampler: impl Fn(f64) -> Result<LagrangianFrame> + Send + Sync + 'static,
    ) -> Result<Self> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("path interval [{a}, {b}] is empty")));
        }
        Ok(Self { sampler: Arc::new(sampler), interval, half_dim, smooth })
    }

    pub fn constant(frame: LagrangianFrame, interval: (f64, f64)) -> Result<Self> {
        let m = frame.half_dim();
        Self::new(m, interval, true, move |_| Ok(frame.clone()))
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn half_dim(&self) -> usize {
        self.half_dim
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn at(&self, s: f64) -> Result<LagrangianFrame> {
        let f = (self.sampler)(s)?;
        if f.half_dim() != self.half_dim || f.matrix().nrows() != 2 * self.half_dim {
            return Err(Error::DimensionMismatch { expected: self.half_dim, got: f.half_dim() });
        }
        Ok(f)
    }

    /// The same planes traversed from `b` to `a`, parametrized on `[a, b]`.
    pub fn reversed(&self) -> Self {
        let (a, b) = self.interval;
        let inner = self.sampler.clone();
        Self { sampler: Arc::new(move |s| inner(a + b - s)), ..self.clone() }
    }

    /// Restriction to `[c, d] ⊂ [a, b]`.
    pub fn restricted(&self, c: f64, d: f64) -> Result<Self> {
        let (a, b) = self.interval;
        if !(a <= c && c < d && d <= b) {
            return Err(Error::InvalidArgument(format!("[{c}, {d}] is not a subinterval of [{a}, {b}]")));
        }
        Ok(Self { interval: (c, d), ..self.clone() })
    }
}

/// Resolution control for [`maslov_index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridControl {
    /// Uniform intervals of the initial grid.
    pub initial_intervals: usize,
    /// Maximum number of bisections of an initial interval.
    pub max_depth: u32,
    /// Largest eigenphase motion allowed between neighbouring samples.
    pub max_phase_step: f64,
    /// Largest plane distance allowed between neighbouring samples.
    pub max_distance: f64,
    /// Eigenphases with `|ϰ| ≤ tol_phase` count as eigenvalue 1.
    pub tol_phase: f64,
    /// Width to which interior crossings are bisected.
    pub locate_tol: f64,
}

impl Default for GridControl {
    fn default() -> Self {
        Self {
            initial_intervals: 64,
            max_depth: 24,
            max_phase_step: PI / 4.0,
            max_distance: 0.5,
            tol_phase: DEFAULT_TOL_PHASE,
            locate_tol: 1e-9,
        }
    }
}

impl GridControl {
    pub fn with_intervals(intervals: usize) -> Self {
        Self { initial_intervals: intervals, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingKind {
    Start,
    Interior,
    End,
}

/// A parameter where `Υ(s) ∩ Z ≠ {0}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub s: f64,
    pub kind: CrossingKind,
    /// Number of eigenphases at 0 (1 for bisected crossings).
    pub dim: usize,
    /// Contribution of this crossing to the index.
    pub contribution: i32,
}

/// One subinterval of the partition with its barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionCell {
    pub left: f64,
    pub right: f64,
    pub epsilon: f64,
    pub k_left: usize,
    pub k_right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaslovReport {
    pub index: i32,
    pub crossings: Vec<CrossingEvent>,
    pub cells: Vec<PartitionCell>,
    pub samples: usize,
}

struct Sample {
    s: f64,
    projector: CMatrix,
    phases: Vec<f64>,
    vectors: CMatrix,
}

struct Context<'a> {
    path: &'a LagrangianPath,
    w_ref: CMatrix,
    grid: GridControl,
}

impl Context<'_> {
    fn sample(&self, s: f64) -> Result<Sample> {
        let frame = self.path.at(s)?;
        let diag = is_lagrangian(frame.matrix(), 1e-8);
        if !diag.is_lagrangian {
            return Err(Error::NotLagrangian(format!(
                "path sample at s = {s}: rank {}, isotropy residual {:.3e}",
                diag.rank, diag.isotropy_residual
            )));
        }
        let q = orthonormal_columns(frame.matrix());
        let v = &self.w_ref * souriau_of_orthonormal(&q).adjoint();
        let (phases, vectors) = unitary_eigen(&v);
        Ok(Sample { s, projector: &q * q.adjoint(), phases, vectors })
    }

    fn k(&self, sample: &Sample, eps: f64) -> usize {
        sample.phases.iter().filter(|&&p| p >= -self.grid.tol_phase && p <= eps).count()
    }

    fn sign(&self, x: f64) -> i32 {
        if x.abs() <= self.grid.tol_phase {
            0
        } else if x > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Pairs every eigenphase at `l` with one at `r`; returns `(i, j, δ)` with the
/// wrapped phase motion `δ`, or `None` if some phase would move too far.
fn match_phases(l: &Sample, r: &Sample, max_step: f64) -> Option<Vec<(usize, usize, f64)>> {
    let n = l.phases.len();
    let overlap = l.vectors.adjoint() * &r.vectors;
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|&(a, b), &(c, d)| overlap[(c, d)].norm_sqr().total_cmp(&overlap[(a, b)].norm_sqr()));
    let (mut used_l, mut used_r) = (vec![false; n], vec![false; n]);
    let mut greedy = Vec::with_capacity(n);
    for (i, j) in pairs {
        if !used_l[i] && !used_r[j] {
            used_l[i] = true;
            used_r[j] = true;
            greedy.push((i, j, wrap_phase(r.phases[j] - l.phases[i])));
        }
    }
    if greedy.iter().all(|&(_, _, d)| d.abs() <= max_step) {
        return Some(greedy);
    }
    // Eigenvectors of (nearly) repeated eigenphases are arbitrary; fall back
    // to the cyclic matching of sorted phases with the least motion.
    let mut li: Vec<usize> = (0..n).collect();
    let mut ri: Vec<usize> = (0..n).collect();
    li.sort_by(|&a, &b| l.phases[a].total_cmp(&l.phases[b]));
    ri.sort_by(|&a, &b| r.phases[a].total_cmp(&r.phases[b]));
    (0..n)
        .map(|shift| {
            (0..n)
                .map(|k| {
                    let (i, j) = (li[k], ri[(k + shift) % n]);
                    (i, j, wrap_phase(r.phases[j] - l.phases[i]))
                })
                .collect::<Vec<_>>()
        })
        .min_by(|a, b| {
            let worst = |v: &Vec<(usize, usize, f64)>| v.iter().map(|t| t.2.abs()).fold(0.0, f64::max);
            worst(a).total_cmp(&worst(b))
        })
        .filter(|m| m.iter().all(|&(_, _, d)| d.abs() <= max_step))
}

/// Barrier `ε ∈ (0, π)` such that no matched arc meets `e^{±iε}`: the midpoint
/// of the widest free gap after folding all arcs onto `[0, π]`.
fn barrier(l: &Sample, matching: &[(usize, usize, f64)]) -> Option<f64> {
    const LO: f64 = 1e-6;
    const HI: f64 = PI - 1e-6;
    const MARGIN: f64 = 1e-9;
    let mut blocked: Vec<(f64, f64)> = matching
        .iter()
        .map(|&(i, _, d)| {
            let a = l.phases[i];
            let b = a + d;
            if a * b <= 0.0 {
                (0.0, a.abs().max(b.abs()))
            } else if b.abs() > PI {
                (a.abs().min(wrap_phase(b).abs()), PI)
            } else {
                (a.abs().min(b.abs()), a.abs().max(b.abs()))
            }
        })
        .map(|(x, y)| (x - MARGIN, y + MARGIN))
        .collect();
    blocked.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best: Option<(f64, f64)> = None;
    let mut cursor = LO;
    let mut consider = |from: f64, to: f64| {
        if to - from > 1e-8 && best.is_none_or(|(x, y)| to - from > y - x) {
            best = Some((from, to));
        }
    };
    for (x, y) in blocked {
        consider(cursor, x.min(HI));
        cursor = cursor.max(y);
    }
    consider(cursor, HI);
    best.map(|(x, y)| 0.5 * (x + y))
}

struct CellOutcome {
    cell: PartitionCell,
    events: Vec<CrossingEvent>,
}

fn process_cell(ctx: &Context, l: &Sample, r: &Sample, depth: u32, out: &mut Vec<CellOutcome>) -> Result<usize> {
    let admissible = if projector_distance(&l.projector, &r.projector) < ctx.grid.max_distance {
        match_phases(l, r, ctx.grid.max_phase_step).and_then(|m| barrier(l, &m).map(|eps| (m, eps)))
    } else {
        None
    };
    let Some((matching, eps)) = admissible else {
        let mid = 0.5 * (l.s + r.s);
        if depth >= ctx.grid.max_depth {
            return Err(Error::GridTooCoarse { at: mid });
        }
        let m = ctx.sample(mid)?;
        let n1 = process_cell(ctx, l, &m, depth + 1, out)?;
        let n2 = process_cell(ctx, &m, r, depth + 1, out)?;
        return Ok(n1 + n2 + 1);
    };
    let (a, b) = ctx.path.interval();
    let mut events = Vec::new();
    for &(i, j, d) in &matching {
        let (pl, pr) = (l.phases[i], r.phases[j]);
        let (sl, sr) = (ctx.sign(pl), ctx.sign(pl + d));
        let inside = |p: f64| (p >= -ctx.grid.tol_phase && p <= eps) as i32;
        let contribution = inside(pr) - inside(pl);
        if sl * sr < 0 {
            let s = locate(ctx, l, i, r.s)?;
            events.push(CrossingEvent { s, kind: CrossingKind::Interior, dim: 1, contribution });
        } else {
            // zero at a sample point: split the contribution so merging the
            // two cells around an interior sample gives the right total
            if sl == 0 {
                let kind = if l.s == a { CrossingKind::Start } else { CrossingKind::Interior };
                let share = if sr == 0 { 0 } else { contribution };
                events.push(CrossingEvent { s: l.s, kind, dim: 0, contribution: share });
            }
            if sr == 0 {
                let kind = if r.s == b { CrossingKind::End } else { CrossingKind::Interior };
                let share = if sl == 0 { 0 } else { contribution };
                events.push(CrossingEvent { s: r.s, kind, dim: 0, contribution: share });
            }
        }
    }
    let cell = PartitionCell { left: l.s, right: r.s, epsilon: eps, k_left: ctx.k(l, eps), k_right: ctx.k(r, eps) };
    out.push(CellOutcome { cell, events });
    Ok(0)
}

/// Bisects the branch starting at eigenpair `i` of `l` down to
/// `grid.locate_tol`, following it by eigenvector overlap.
fn locate(ctx: &Context, l: &Sample, i: usize, right: f64) -> Result<f64> {
    let mut lo = l.s;
    let mut hi = right;
    let mut vec: CVector = l.vectors.column(i).into_owned();
    let side = l.phases[i].signum();
    while hi - lo > ctx.grid.locate_tol {
        let mid = 0.5 * (lo + hi);
        let m = ctx.sample(mid)?;
        let overlaps = m.vectors.adjoint() * &vec;
        let j = (0..overlaps.len()).max_by(|&x, &y| overlaps[x].norm().total_cmp(&overlaps[y].norm())).unwrap_or(0);
        if m.phases[j].signum() == side {
            lo = mid;
            vec = m.vectors.column(j).into_owned();
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn merge_events(mut events: Vec<CrossingEvent>, samples: &[(f64, usize)]) -> Vec<CrossingEvent> {
    events.sort_by(|x, y| x.s.total_cmp(&y.s));
    let mut merged: Vec<CrossingEvent> = Vec::new();
    for e in events {
        let at_sample = e.dim == 0;
        match merged.last_mut() {
            Some(last) if at_sample && last.dim == 0 && last.s == e.s => last.contribution += e.contribution,
            _ => merged.push(e),
        }
    }
    for e in merged.iter_mut().filter(|e| e.dim == 0) {
        e.dim = samples.iter().find(|(s, _)| *s == e.s).map_or(1, |&(_, d)| d.max(1));
    }
    merged
}

/// Maslov index of `path` relative to the fixed plane `reference`.
pub fn maslov_index(path: &LagrangianPath, reference: &LagrangianFrame, grid: &GridControl) -> Result<MaslovReport> {
    let diag = is_lagrangian(reference.matrix(), 1e-8);
    if !diag.is_lagrangian {
        return Err(Error::NotLagrangian(format!(
            "reference plane: rank {}, isotropy residual {:.3e}",
            diag.rank, diag.isotropy_residual
        )));
    }
    if reference.half_dim() != path.half_dim() {
        return Err(Error::DimensionMismatch { expected: path.half_dim(), got: reference.half_dim() });
    }
    if grid.initial_intervals == 0 {
        return Err(Error::InvalidArgument("grid needs at least one interval".into()));
    }
    let ctx = Context { path, w_ref: souriau_of_orthonormal(&orthonormal_columns(reference.matrix())), grid: *grid };
    let (a, b) = path.interval();
    let n = grid.initial_intervals;
    let samples: Vec<Sample> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let s = if i == n { b } else { a + (b - a) * i as f64 / n as f64 };
            ctx.sample(s)
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<(Vec<CellOutcome>, usize)> = samples
        .par_windows(2)
        .map(|w| {
            let mut out = Vec::new();
            let extra = process_cell(&ctx, &w[0], &w[1], 0, &mut out)?;
            Ok((out, extra))
        })
        .collect::<Result<_>>()?;
    let zero_counts: Vec<(f64, usize)> =
        samples.iter().map(|s| (s.s, s.phases.iter().filter(|p| p.abs() <= grid.tol_phase).count())).collect();
    let mut cells = Vec::new();
    let mut events = Vec::new();
    let mut total_samples = samples.len();
    for (outs, extra) in outcomes {
        total_samples += extra;
        for o in outs {
            cells.push(o.cell);
            events.extend(o.events);
        }
    }
    let index = cells.iter().map(|c| c.k_right as i32 - c.k_left as i32).sum();
    // sample counts at refined points are not in `zero_counts`; fall back to 1
    let crossings = merge_events(events, &zero_counts);
    Ok(MaslovReport { index, crossings, cells, samples: total_samples })
}

/// Frame of `Υ₁ ⊕ Υ₂` in the doubled space, after mapping the second factor
/// by `(x, y) ↦ (x, −y)` so that `ω ⊕ (−ω)` becomes the standard form.
/// Coordinates are ordered `(x₁, x₂, y₁, y₂)`.
fn product_frame(f1: &LagrangianFrame, f2: &LagrangianFrame) -> LagrangianFrame {
    let m = f1.half_dim();
    let q1 = orthonormal_columns(f1.matrix());
    let q2 = orthonormal_columns(f2.matrix());
    let mut f = CMatrix::zeros(4 * m, 2 * m);
    f.view_mut((0, 0), (m, m)).copy_from(&q1.rows(0, m));
    f.view_mut((m, m), (m, m)).copy_from(&q2.rows(0, m));
    f.view_mut((2 * m, 0), (m, m)).copy_from(&q1.rows(m, m));
    f.view_mut((3 * m, m), (m, m)).copy_from(&(-q2.rows(m, m)));
    LagrangianFrame::new_unchecked(f)
}

/// The diagonal `{(p, p)}` in the coordinates of the doubled space.
pub fn diagonal_frame(half_dim: usize) -> LagrangianFrame {
    let m = half_dim;
    let one = C64::new(1.0, 0.0);
    let mut f = CMatrix::zeros(4 * m, 2 * m);
    for i in 0..m {
        f[(i, i)] = one;
        f[(m + i, i)] = one;
        f[(2 * m + i, m + i)] = one;
        f[(3 * m + i, m + i)] = -one;
    }
    LagrangianFrame::new_unchecked(f)
}

/// The product path `Υ₁ ⊕ Υ₂` in the doubled space.
pub fn doubled_path(path1: &LagrangianPath, path2: &LagrangianPath) -> Result<LagrangianPath> {
    if path1.half_dim() != path2.half_dim() {
        return Err(Error::DimensionMismatch { expected: path1.half_dim(), got: path2.half_dim() });
    }
    let (i1, i2) = (path1.interval(), path2.interval());
    if (i1.0 - i2.0).abs() > 1e-12 || (i1.1 - i2.1).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("paths live on different intervals {i1:?} and {i2:?}")));
    }
    let (p1, p2) = (path1.clone(), path2.clone());
    LagrangianPath::new(2 * path1.half_dim(), i1, path1.is_smooth() && path2.is_smooth(), move |s| {
        Ok(product_frame(&p1.at(s)?, &p2.at(s)?))
    })
}

/// `Mas(Υ₁, Υ₂)`: the index of `Υ₁ ⊕ Υ₂` relative to the diagonal.
pub fn maslov_two_paths(path1: &LagrangianPath, path2: &LagrangianPath, grid: &GridControl) -> Result<MaslovReport> {
    let doubled = doubled_path(path1, path2)?;
    maslov_index(&doubled, &diagonal_frame(path1.half_dim()), grid)
}

/// Crossing form at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub location: f64,
    pub intersection_dim: usize,
    /// Orthonormal basis of `Υ(s*) ∩ Z` (columns).
    pub basis: CMatrix,
    /// `𝔪(u_j, u_k) = d/ds ω(u_j, R_s u_k)` on that basis.
    pub form: CMatrix,
    pub eigenvalues: Vec<f64>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub signature: i32,
    pub regular: bool,
    /// Relative change of the form when the step is halved.
    pub richardson_change: f64,
    pub richardson_ok: bool,
}

/// Eigenvalues with `|μ| ≤ FORM_TOL·max(1, ‖𝔪‖)` make a crossing irregular.
pub const FORM_TOL: f64 = 1e-6;

/// `ω(u_j, R_s u_k)` for all `j, k`, where `R_s u` lifts `u ∈ Υ(s*)` into
/// `Υ(s)` along `Υ(s*)^⊥`.
fn lifted_omega(q0: &CMatrix, coeffs: &CMatrix, basis: &CMatrix, frame: &LagrangianFrame) -> Result<CMatrix> {
    let qs = orthonormal_columns(frame.matrix());
    let g = q0.adjoint() * &qs;
    let a = g
        .lu()
        .solve(coeffs)
        .ok_or_else(|| Error::InvalidArgument("step too large: path leaves the graph chart".into()))?;
    let r = &qs * a - basis;
    let d = basis.ncols();
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            out[(j, k)] = omega(&basis.column(j).into_owned(), &r.column(k).into_owned())?;
        }
    }
    Ok(out)
}

/// Crossing form of `path` against `reference` at `s_star`, by central
/// differences with step `h` (default `1e-5·(b − a)`) and a Richardson check
/// at `h/2`. The returned form is the extrapolation `(4𝔪_{h/2} − 𝔪_h)/3`.
pub fn crossing_form(
    path: &LagrangianPath,
    s_star: f64,
    reference: &LagrangianFrame,
    h: Option<f64>,
) -> Result<CrossingReport> {
    let (a, b) = path.interval();
    let h = h.unwrap_or(1e-5 * (b - a));
    let f0 = path.at(s_star)?;
    let d = intersection_dim(&f0, reference, DEFAULT_TOL_PHASE)?;
    if d == 0 {
        return Err(Error::NoCrossing { at: s_star });
    }
    let m = path.half_dim();
    let q0 = orthonormal_columns(f0.matrix());
    let off = CMatrix::identity(2 * m, 2 * m) - reference.projector();
    let (_, right) = svd_ascending(&(off * &q0));
    let coeffs = right.columns(0, d).into_owned();
    let basis = &q0 * &coeffs;
    let derivative = |step: f64| -> Result<CMatrix> {
        let plus = lifted_omega(&q0, &coeffs, &basis, &path.at(s_star + step)?)?;
        let minus = lifted_omega(&q0, &coeffs, &basis, &path.at(s_star - step)?)?;
        Ok((plus - minus) / C64::new(2.0 * step, 0.0))
    };
    let coarse = derivative(h)?;
    let fine = derivative(0.5 * h)?;
    let richardson_change = (&fine - &coarse).norm() / fine.norm().max(1e-300);
    let extrapolated = (fine * C64::new(4.0, 0.0) - coarse) / C64::new(3.0, 0.0);
    let form = (&extrapolated + extrapolated.adjoint()) * C64::new(0.5, 0.0);
    Ok(summarize(s_star, basis, form, richardson_change))
}

fn summarize(location: f64, basis: CMatrix, form: CMatrix, richardson_change: f64) -> CrossingReport {
    let (eigenvalues, _) = hermitian_eigen(&form);
    let cut = FORM_TOL * eigenvalues.iter().map(|x| x.abs()).fold(1.0, f64::max);
    let n_plus = eigenvalues.iter().filter(|&&x| x > cut).count();
    let n_minus = eigenvalues.iter().filter(|&&x| x < -cut).count();
    CrossingReport {
        location,
        intersection_dim: basis.ncols(),
        basis,
        regular: n_plus + n_minus == eigenvalues.len(),
        form,
        eigenvalues,
        n_plus,
        n_minus,
        signature: n_plus as i32 - n_minus as i32,
        richardson_change,
        richardson_ok: richardson_change < 1e-4,
    }
}

/// `L⁻¹ 𝔪 L⁻*` for the Cholesky factor `G = LL*`: the form expressed in a
/// basis that is orthonormal for the inner product with Gram matrix `G`.
pub fn normalized_form(form: &CMatrix, gram: &CMatrix) -> Result<CMatrix> {
    if form.shape() != gram.shape() {
        return Err(Error::DimensionMismatch { expected: form.nrows(), got: gram.nrows() });
    }
    let chol =
        gram.clone().cholesky().ok_or_else(|| Error::InvalidArgument("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let left =
        l.solve_lower_triangular(form).ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let both = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    Ok(both.adjoint())
}

/// Index predicted by the crossing forms:
/// `−n₋(𝔪_a) + Σ_{a<s<b} sign 𝔪_s + n₊(𝔪_b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureSum {
    /// `None` when some crossing is irregular.
    pub total: Option<i32>,
    pub forms: Vec<CrossingReport>,
}

pub fn signature_sum(
    path: &LagrangianPath,
    reference: &LagrangianFrame,
    crossings: &[CrossingEvent],
    h: Option<f64>,
) -> Result<SignatureSum> {
    let forms: Vec<CrossingReport> =
        crossings.par_iter().map(|e| crossing_form(path, e.s, reference, h)).collect::<Result<_>>()?;
    let mut total = Some(0);
    for (e, f) in crossings.iter().zip(&forms) {
        let part = match e.kind {
            CrossingKind::Start => -(f.n_minus as i32),
            CrossingKind::Interior => f.signature,
            CrossingKind::End => f.n_plus as i32,
        };
        total = total.filter(|_| f.regular).map(|t| t + part);
    }
    Ok(SignatureSum { total, forms })
}
