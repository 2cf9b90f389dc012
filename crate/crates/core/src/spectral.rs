//! Eigenvalues of `H = −d²/dx² + q` with vertex conditions `(A, B)`.
//!
//! `λ` is an eigenvalue exactly when `K_λ ∩ L ≠ {0}`, detected as a zero of
//! the smallest singular value of `[Q_K | Q_L]` for orthonormal frames of the
//! two planes.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::edge::k_lambda_plane;
use crate::graph::{MetricGraph, TraceVector};
use crate::linalg::{orthonormal_columns, singular_values_ascending, svd_ascending, unitary_eigen};
use crate::symplectic::souriau_unitary;
use crate::vertex::{l_frame, BoundaryFamily, BoundaryPair};
use crate::{CMatrix, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralOptions {
    pub grid_step: f64,
    pub tol_eig: f64,
    /// Golden-section stopping width.
    pub refine_tol: f64,
    /// Upper bound on step halvings while waiting for a stable count.
    pub max_halvings: u32,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { grid_step: 0.05, tol_eig: 1e-8, refine_tol: 1e-10, max_halvings: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Smallest singular value at `lambda`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
    pub window: (f64, f64),
    /// Step of the finest scan.
    pub grid_step: f64,
    pub scans: usize,
    /// Whether the count agreed on the last three scans.
    pub stable: bool,
}

impl Spectrum {
    /// Number of eigenvalues counted with multiplicity.
    pub fn count(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues.iter().flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity)).collect()
    }
}

/// `K_λ` against a fixed `L`, with the `L` frame orthonormalized once.
#[derive(Debug, Clone)]
pub struct SecularSystem {
    graph: MetricGraph,
    q_l: CMatrix,
}

impl SecularSystem {
    pub fn new(g: &MetricGraph, p: &BoundaryPair) -> Result<Self> {
        if p.dim() != g.boundary_dim() {
            return Err(Error::DimensionMismatch { expected: g.boundary_dim(), got: p.dim() });
        }
        let l = l_frame(p)?;
        Ok(Self { graph: g.clone(), q_l: orthonormal_columns(l.matrix()) })
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    fn stacked(&self, lambda: f64) -> (CMatrix, CMatrix) {
        let q_k = k_lambda_plane(&self.graph, lambda).into_matrix();
        let m = q_k.ncols();
        let mut both = CMatrix::zeros(2 * m, 2 * m);
        both.view_mut((0, 0), (2 * m, m)).copy_from(&q_k);
        both.view_mut((0, m), (2 * m, m)).copy_from(&self.q_l);
        (both, q_k)
    }

    /// Singular values of `[Q_K | Q_L]`, ascending.
    pub fn singular_values(&self, lambda: f64) -> Vec<f64> {
        singular_values_ascending(&self.stacked(lambda).0)
    }

    pub fn gap(&self, lambda: f64) -> f64 {
        self.singular_values(lambda)[0]
    }

    /// Orthonormal basis of `K_λ ∩ L` of the given dimension, from the right
    /// null vectors of `[Q_K | Q_L]`.
    pub fn null_traces(&self, lambda: f64, dim: usize) -> Vec<TraceVector> {
        let (both, q_k) = self.stacked(lambda);
        let m = q_k.ncols();
        let (_, right) = svd_ascending(&both);
        let traces = &q_k * right.view((0, 0), (m, dim));
        let q = orthonormal_columns(&traces);
        (0..dim).map(|k| TraceVector::from_stacked(&q.column(k).into_owned()).expect("even length")).collect()
    }
}

pub fn secular_gap(g: &MetricGraph, p: &BoundaryPair, lambda: f64) -> Result<f64> {
    Ok(SecularSystem::new(g, p)?.gap(lambda))
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

fn scan(sys: &SecularSystem, window: (f64, f64), step: f64, opts: &SpectralOptions) -> Vec<Eigenvalue> {
    let (lo, hi) = window;
    let n = ((hi - lo) / step).ceil().max(2.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 }).collect();
    let gaps: Vec<f64> = grid.par_iter().map(|&l| sys.gap(l)).collect();
    let brackets: Vec<(f64, f64)> = (0..=n)
        .filter(|&i| (i == 0 || gaps[i] <= gaps[i - 1]) && (i == n || gaps[i] <= gaps[i + 1]))
        .map(|i| (grid[i.saturating_sub(1)], grid[(i + 1).min(n)]))
        .collect();
    let mut roots: Vec<Eigenvalue> = brackets
        .par_iter()
        .filter_map(|&(a, b)| {
            let x = golden_section(|l| sys.gap(l), a, b, opts.refine_tol);
            let sv = sys.singular_values(x);
            (sv[0] <= opts.tol_eig).then(|| Eigenvalue {
                lambda: x,
                multiplicity: sv.iter().filter(|&&s| s <= opts.tol_eig).count(),
                residual: sv[0],
            })
        })
        .collect();
    roots.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut merged: Vec<Eigenvalue> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last_mut() {
            Some(last) if r.lambda - last.lambda < 10.0 * opts.refine_tol => {
                let mid = 0.5 * (r.lambda + last.lambda);
                let sv = sys.singular_values(mid);
                *last = Eigenvalue {
                    lambda: mid,
                    multiplicity: sv.iter().filter(|&&s| s <= opts.tol_eig).count().max(1),
                    residual: sv[0],
                };
            }
            _ => merged.push(r),
        }
    }
    merged
}

fn check_window_endpoints(sys: &SecularSystem, window: (f64, f64), tol: f64) -> Result<()> {
    for at in [window.0, window.1] {
        let gap = sys.gap(at);
        if gap <= tol {
            return Err(Error::EndpointEigenvalue { at, gap });
        }
    }
    Ok(())
}

/// All eigenvalues in `window`, by scanning the secular gap and halving the
/// step until the count agrees on three consecutive scans.
pub fn eigenvalues_in_system(sys: &SecularSystem, window: (f64, f64), opts: &SpectralOptions) -> Result<Spectrum> {
    let (lo, hi) = window;
    if !(lo < hi) || !(opts.grid_step > 0.0) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}] or step {}", opts.grid_step)));
    }
    check_window_endpoints(sys, window, opts.tol_eig)?;
    let mut step = opts.grid_step;
    let mut counts = Vec::new();
    let mut last;
    loop {
        last = scan(sys, window, step, opts);
        counts.push(last.iter().map(|e| e.multiplicity).sum::<usize>());
        let k = counts.len();
        let stable = k >= 3 && counts[k - 1] == counts[k - 2] && counts[k - 2] == counts[k - 3];
        if stable || k > opts.max_halvings as usize {
            return Ok(Spectrum { eigenvalues: last, window, grid_step: step, scans: k, stable });
        }
        step *= 0.5;
    }
}

pub fn eigenvalues_in(
    g: &MetricGraph,
    p: &BoundaryPair,
    window: (f64, f64),
    opts: &SpectralOptions,
) -> Result<Spectrum> {
    eigenvalues_in_system(&SecularSystem::new(g, p)?, window, opts)
}

/// Lower bound for the spectrum from the quadratic form.
///
/// On the non-Dirichlet part of `L` the condition reads `γ_N f = Λ γ_D f`
/// with `Λ` Hermitian, whose eigenvalues are `tan(θ/2)` for the eigenphases
/// `θ` of the unitary of `L`. With `κ = max(0, −min tan(θ/2))` and the trace
/// inequality `|f(v)|² ≤ δ‖f′‖² + (2/δ)‖f‖²` on disjoint end pieces of length
/// `δ ≤ ℓ_min/2`, choosing `κδ ≤ 1/2` gives `H ≥ q_min − 2κ/δ`.
pub fn form_lower_bound(g: &MetricGraph, p: &BoundaryPair) -> Result<f64> {
    let w = souriau_unitary(&l_frame(p)?)?;
    let (phases, _) = unitary_eigen(&w);
    let kappa = phases.iter().filter(|t| t.abs() < PI - 1e-9).map(|t| -(0.5 * t).tan()).fold(0.0, f64::max);
    let q_min = g.min_potential();
    if kappa == 0.0 {
        return Ok(q_min);
    }
    let delta = (0.5 * g.min_length()).min(0.5 / kappa);
    Ok(q_min - 2.0 * kappa / delta)
}

/// `λ_∞` with its evidence: the form bound and a root-free strip below it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorCertificate {
    pub lambda_inf: f64,
    pub form_bound: f64,
    /// Smallest secular gap seen on `[2λ_∞, λ_∞]` over all sampled `t`.
    pub strip_min_gap: f64,
    pub t_samples: Vec<f64>,
}

fn initial_floor(g: &MetricGraph, bound: f64) -> f64 {
    (-(1.0 + g.max_abs_potential())).min(bound - 1.0 - 0.1 * bound.abs())
}

fn strip_certificate(sys: &SecularSystem, lambda_inf: f64, opts: &SpectralOptions) -> Result<f64> {
    let width = lambda_inf.abs();
    let strip_opts = SpectralOptions { grid_step: opts.grid_step.max(width / 400.0), max_halvings: 2, ..*opts };
    let spec = eigenvalues_in_system(sys, (2.0 * lambda_inf, lambda_inf), &strip_opts)?;
    if spec.count() > 0 {
        return Err(Error::FloorCertificate(format!(
            "eigenvalue {} found below λ_∞ = {lambda_inf}",
            spec.eigenvalues[0].lambda
        )));
    }
    let n = 200;
    Ok((0..=n)
        .into_par_iter()
        .map(|i| sys.gap(2.0 * lambda_inf + lambda_inf.abs() * i as f64 / n as f64))
        .reduce(|| f64::INFINITY, f64::min))
}

pub fn floor_for_pair(g: &MetricGraph, p: &BoundaryPair, opts: &SpectralOptions) -> Result<FloorCertificate> {
    let sys = SecularSystem::new(g, p)?;
    let bound = form_lower_bound(g, p)?;
    let lambda_inf = initial_floor(g, bound);
    let strip_min_gap = strip_certificate(&sys, lambda_inf, opts)?;
    Ok(FloorCertificate { lambda_inf, form_bound: bound, strip_min_gap, t_samples: vec![] })
}

/// Uniform floor for `t ∈ [α, β]`, from the form bound at `samples` evenly
/// spaced parameters and a strip certificate at each of them.
pub fn find_floor(
    g: &MetricGraph,
    family: &BoundaryFamily,
    (alpha, beta): (f64, f64),
    samples: usize,
    opts: &SpectralOptions,
) -> Result<FloorCertificate> {
    let n = samples.max(2) - 1;
    let ts: Vec<f64> = (0..=n).map(|i| alpha + (beta - alpha) * i as f64 / n as f64).collect();
    let bound = ts
        .iter()
        .map(|&t| form_lower_bound(g, &family.at(t)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let lambda_inf = initial_floor(g, bound);
    let gaps = ts
        .par_iter()
        .map(|&t| strip_certificate(&SecularSystem::new(g, &family.at(t))?, lambda_inf, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FloorCertificate {
        lambda_inf,
        form_bound: bound,
        strip_min_gap: gaps.into_iter().fold(f64::INFINITY, f64::min),
        t_samples: ts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseReport {
    pub count: usize,
    pub level: f64,
    pub floor: FloorCertificate,
    pub spectrum: Spectrum,
}

/// Number of eigenvalues below `level`, counted with multiplicity.
pub fn count_below(
    g: &MetricGraph,
    p: &BoundaryPair,
    level: f64,
    floor_hint: Option<f64>,
    opts: &SpectralOptions,
) -> Result<MorseReport> {
    let sys = SecularSystem::new(g, p)?;
    let gap = sys.gap(level);
    if gap <= opts.tol_eig {
        return Err(if level == 0.0 {
            Error::ZeroEigenvalue { gap }
        } else {
            Error::EndpointEigenvalue { at: level, gap }
        });
    }
    let mut floor = floor_for_pair(g, p, opts)?;
    if let Some(h) = floor_hint {
        floor.lambda_inf = floor.lambda_inf.min(h);
    }
    if floor.lambda_inf >= level {
        let spectrum = Spectrum { eigenvalues: vec![], window: (level, level), grid_step: 0.0, scans: 0, stable: true };
        return Ok(MorseReport { count: 0, level, floor, spectrum });
    }
    let spectrum = eigenvalues_in_system(&sys, (floor.lambda_inf, level), opts)?;
    Ok(MorseReport { count: spectrum.count(), level, floor, spectrum })
}

/// Morse index: the number of negative eigenvalues.
pub fn morse_index(
    g: &MetricGraph,
    p: &BoundaryPair,
    floor_hint: Option<f64>,
    opts: &SpectralOptions,
) -> Result<usize> {
    Ok(count_below(g, p, 0.0, floor_hint, opts)?.count)
}

/// The `n` lowest eigenvalues with multiplicity.
pub fn lowest_eigenvalues(g: &MetricGraph, p: &BoundaryPair, n: usize, opts: &SpectralOptions) -> Result<Vec<f64>> {
    let sys = SecularSystem::new(g, p)?;
    let floor = floor_for_pair(g, p, opts)?.lambda_inf;
    let mut width = 10.0_f64.max(floor.abs());
    loop {
        let mut hi = floor + width;
        while sys.gap(hi) <= opts.tol_eig {
            hi += 1e-3;
        }
        let spec = eigenvalues_in_system(&sys, (floor, hi), opts)?;
        if spec.count() >= n {
            return Ok(spec.expanded().into_iter().take(n).collect());
        }
        width *= 2.0;
        if width > 1e7 {
            return Err(Error::InvalidArgument(format!("fewer than {n} eigenvalues below {hi}")));
        }
    }
}

/// Eigenvalue of `H_t` closest to `guess` within `radius`.
pub fn eigenvalue_near(sys: &SecularSystem, guess: f64, radius: f64, opts: &SpectralOptions) -> Result<Eigenvalue> {
    let mut window = (guess - radius, guess + radius);
    for end in [&mut window.0, &mut window.1] {
        while sys.gap(*end) <= opts.tol_eig {
            *end += 1e-3 * radius;
        }
    }
    let spec = eigenvalues_in_system(sys, window, opts)?;
    spec.eigenvalues
        .into_iter()
        .min_by(|a, b| (a.lambda - guess).abs().total_cmp(&(b.lambda - guess).abs()))
        .ok_or_else(|| Error::NoBranch(format!("no eigenvalue within {radius} of {guess}")))
}

/// Per-edge Cauchy data `(f(a), f′(a))` of the eigenfunction with the given
/// trace, interleaved as expected by the eigenfunction assembler.
pub fn cauchy_coefficients(trace: &TraceVector) -> Vec<C64> {
    trace.cauchy_data_at_a().into_iter().flat_map(|(v, d)| [v, d]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    /// Eigenvalues are counted below this level (0 for the Morse index).
    pub level: f64,
    /// Half-width of the tracking window around the level.
    pub window: f64,
    pub initial_intervals: usize,
    pub max_depth: u32,
    pub spectral: SpectralOptions,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { level: 0.0, window: 1.0, initial_intervals: 32, max_depth: 12, spectral: SpectralOptions::default() }
    }
}

/// A branch passing through the level between two tracking samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowCrossing {
    pub t_left: f64,
    pub t_right: f64,
    /// `+1` for an eigenvalue moving up through the level.
    pub direction: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    /// `Mor(H_α) − Mor(H_β)`, counting eigenvalues below the level.
    pub flow: i32,
    pub level: f64,
    pub morse_alpha: usize,
    pub morse_beta: usize,
    /// Signed count of level crossings from branch tracking.
    pub tracked: i32,
    pub crossings: Vec<FlowCrossing>,
    pub samples: usize,
    pub refinement_trace: Vec<String>,
}

struct FlowSample {
    t: f64,
    eigs: Vec<f64>,
}

fn flow_sample(g: &MetricGraph, family: &BoundaryFamily, t: f64, opts: &FlowOptions) -> Result<FlowSample> {
    let sys = SecularSystem::new(g, &family.at(t))?;
    let c = opts.level;
    let mut w = opts.window;
    while sys.gap(c - w) <= opts.spectral.tol_eig || sys.gap(c + w) <= opts.spectral.tol_eig {
        w *= 1.01;
    }
    let spec = eigenvalues_in_system(&sys, (c - w, c + w), &opts.spectral)?;
    Ok(FlowSample { t, eigs: spec.expanded().into_iter().map(|x| x - c).collect() })
}

/// Matches two sorted eigenvalue lists by an index shift; returns the
/// signed zero crossings, or `None` when the motion is too large to trust.
fn match_branches(l: &[f64], r: &[f64], window: f64) -> Option<Vec<i32>> {
    let (nl, nr) = (l.len() as isize, r.len() as isize);
    let mut best: Option<(f64, isize)> = None;
    for shift in -nl..=nr {
        let pairs: Vec<(f64, f64)> = (0..nl)
            .filter_map(|i| {
                let j = i + shift;
                (0..nr).contains(&j).then(|| (l[i as usize], r[j as usize]))
            })
            .collect();
        // every unmatched eigenvalue must sit near the window edge
        let matched_l: Vec<bool> = (0..nl).map(|i| (0..nr).contains(&(i + shift))).collect();
        let matched_r: Vec<bool> = (0..nr).map(|j| (0..nl).contains(&(j - shift))).collect();
        let loose =
            l.iter().zip(&matched_l).chain(r.iter().zip(&matched_r)).any(|(x, &m)| !m && x.abs() < 0.5 * window);
        if loose {
            continue;
        }
        let cost = pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, shift));
        }
    }
    let (cost, shift) = best?;
    if cost > 0.25 * window {
        return None;
    }
    Some(
        (0..nl)
            .filter_map(|i| {
                let j = i + shift;
                (0..nr).contains(&j).then(|| {
                    let (x, y) = (l[i as usize], r[j as usize]);
                    match (x < 0.0, y < 0.0) {
                        (true, false) => 1,
                        (false, true) => -1,
                        _ => 0,
                    }
                })
            })
            .filter(|&d| d != 0)
            .collect(),
    )
}

fn track_cell(
    g: &MetricGraph,
    family: &BoundaryFamily,
    l: &FlowSample,
    r: &FlowSample,
    depth: u32,
    opts: &FlowOptions,
    out: &mut (Vec<FlowCrossing>, Vec<String>, usize),
) -> Result<()> {
    if let Some(dirs) = match_branches(&l.eigs, &r.eigs, opts.window) {
        for direction in dirs {
            out.0.push(FlowCrossing { t_left: l.t, t_right: r.t, direction });
        }
        return Ok(());
    }
    let mid = 0.5 * (l.t + r.t);
    if depth >= opts.max_depth {
        return Err(Error::GridTooCoarse { at: mid });
    }
    out.1.push(format!("refine [{:.6}, {:.6}] at depth {depth}", l.t, r.t));
    let m = flow_sample(g, family, mid, opts)?;
    out.2 += 1;
    track_cell(g, family, l, &m, depth + 1, opts, out)?;
    track_cell(g, family, &m, r, depth + 1, opts, out)
}

/// Spectral flow `Mor(H_α) − Mor(H_β)` through `opts.level`, cross-checked
/// by tracking the eigenvalue branches near the level along `t`.
pub fn spectral_flow(
    g: &MetricGraph,
    family: &BoundaryFamily,
    (alpha, beta): (f64, f64),
    opts: &FlowOptions,
) -> Result<FlowReport> {
    if !(alpha < beta) {
        return Err(Error::InvalidArgument(format!("empty parameter interval [{alpha}, {beta}]")));
    }
    let (pa, pb) = (family.at(alpha), family.at(beta));
    for (t, p) in [(alpha, &pa), (beta, &pb)] {
        let gap = secular_gap(g, p, opts.level)?;
        if gap <= opts.spectral.tol_eig {
            return Err(Error::EndpointEigenvalue { at: t, gap });
        }
    }
    let floor = find_floor(g, family, (alpha, beta), 5, &opts.spectral)?.lambda_inf;
    let morse_alpha = count_below(g, &pa, opts.level, Some(floor), &opts.spectral)?.count;
    let morse_beta = count_below(g, &pb, opts.level, Some(floor), &opts.spectral)?.count;
    let flow = morse_alpha as i32 - morse_beta as i32;

    let n = opts.initial_intervals.max(1);
    let samples: Vec<FlowSample> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let t = if i == n { beta } else { alpha + (beta - alpha) * i as f64 / n as f64 };
            flow_sample(g, family, t, opts)
        })
        .collect::<Result<_>>()?;
    let parts: Vec<(Vec<FlowCrossing>, Vec<String>, usize)> = samples
        .par_windows(2)
        .map(|w| {
            let mut out = (Vec::new(), Vec::new(), 0);
            track_cell(g, family, &w[0], &w[1], 0, opts, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut crossings = Vec::new();
    let mut refinement_trace = Vec::new();
    let mut total = samples.len();
    for (c, r, k) in parts {
        crossings.extend(c);
        refinement_trace.extend(r);
        total += k;
    }
    let tracked = crossings.iter().map(|c| c.direction).sum();
    if tracked != flow {
        return Err(Error::FlowMismatch { morse: flow, tracked, trace: refinement_trace.join("; ") });
    }
    Ok(FlowReport {
        flow,
        level: opts.level,
        morse_alpha,
        morse_beta,
        tracked,
        crossings,
        samples: total,
        refinement_trace,
    })
}
