use rayon::prelude::*;
use serde::Serialize;

use super::hadamard_formula;
use crate::edge::{gram_matrix, k_lambda_plane};
use crate::graph::MetricGraph;
use crate::maslov::{
    crossing_form, maslov_index, maslov_two_paths, normalized_form, CrossingEvent, GridControl, LagrangianPath,
};
use crate::spectral::{
    cauchy_coefficients, count_below, eigenvalues_in_system, find_floor, spectral_flow, FloorCertificate, FlowOptions,
    FlowReport, SecularSystem, SpectralOptions,
};
use crate::symplectic::DEFAULT_TOL;
use crate::vertex::{check_hypothesis, l_frame, BoundaryFamily};
use crate::{Error, Result};

use super::QUADRATURE_PANELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxOptions {
    pub grid: GridControl,
    pub spectral: SpectralOptions,
    pub flow: FlowOptions,
    /// Parameters at which the vertex conditions are checked.
    pub hypothesis_samples: usize,
    /// Parameters at which the spectral floor is certified.
    pub floor_samples: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            grid: GridControl::default(),
            spectral: SpectralOptions::default(),
            flow: FlowOptions::default(),
            hypothesis_samples: 9,
            floor_samples: 5,
        }
    }
}

/// One side of the box. Crossing locations are in the side's own parameter
/// (`λ` or `t`), whichever direction the side runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideReport {
    pub name: String,
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub index: i32,
    pub expected: i32,
    pub crossings: Vec<CrossingEvent>,
}

/// Crossing form of the `K_λ` path at an eigenvalue, in a basis of
/// L²-orthonormal eigenfunctions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedCrossing {
    pub side: String,
    pub lambda: f64,
    pub dim: usize,
    pub diagonal: Vec<f64>,
    /// `max |M′ + I|` over all entries.
    pub deviation: f64,
    pub negative_definite: bool,
}

/// Sign of `dλ/dt` against the sign of the crossing form on the `t` side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCheck {
    pub t: f64,
    pub form_eigenvalues: Vec<f64>,
    pub derivative: Option<f64>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxReport {
    pub alpha: f64,
    pub beta: f64,
    /// `λ` of the top side: 0, or `−δ_shift` when a corner is an eigenvalue.
    pub level: f64,
    pub corner_shift: Option<f64>,
    pub floor: FloorCertificate,
    pub morse_alpha: usize,
    pub morse_beta: usize,
    pub sides: Vec<SideReport>,
    pub spectral_flow: FlowReport,
    /// Index of `t ↦ L_t` relative to `K_level`, two-path convention.
    pub mas_upsilon: i32,
    pub k_crossings: Vec<NormalizedCrossing>,
    pub sign_checks: Vec<SignCheck>,
    pub pass_sides: bool,
    pub pass_sum: bool,
    pub pass_flow: bool,
    pub pass_index_theorem: bool,
    pub pass_signs: bool,
    pub pass: bool,
}

fn check_family(family: &BoundaryFamily, (alpha, beta): (f64, f64), samples: usize) -> Result<()> {
    let n = samples.max(2) - 1;
    for i in 0..=n {
        let t = alpha + (beta - alpha) * i as f64 / n as f64;
        let r = check_hypothesis(&family.at(t), DEFAULT_TOL)?;
        if let Some(msg) = r.failure {
            return Err(Error::Hypothesis(format!("at t = {t}: {msg}")));
        }
    }
    Ok(())
}

/// Level for the top side: 0 if both corners are regular, otherwise half
/// the distance to the nearest nonzero eigenvalue at the corners, below 0.
fn choose_level(
    g: &MetricGraph,
    family: &BoundaryFamily,
    ends: [f64; 2],
    opts: &SpectralOptions,
) -> Result<(f64, Option<f64>)> {
    let systems = ends.iter().map(|&t| SecularSystem::new(g, &family.at(t))).collect::<Result<Vec<_>>>()?;
    if systems.iter().all(|s| s.gap(0.0) > opts.tol_eig) {
        return Ok((0.0, None));
    }
    let mut nearest = 1.0_f64;
    for sys in &systems {
        let mut window = (-1.0, 1.0);
        for end in [&mut window.0, &mut window.1] {
            while sys.gap(*end) <= opts.tol_eig {
                *end *= 1.01;
            }
        }
        for e in eigenvalues_in_system(sys, window, opts)?.eigenvalues {
            if e.lambda.abs() > 1e-6 {
                nearest = nearest.min(e.lambda.abs());
            }
        }
    }
    let shift = 0.5 * nearest;
    Ok((-shift, Some(shift)))
}

fn normalized_k_crossings(
    g: &MetricGraph,
    k_path: &LagrangianPath,
    reference: &crate::symplectic::LagrangianFrame,
    side: &str,
    crossings: &[CrossingEvent],
) -> Result<Vec<NormalizedCrossing>> {
    crossings
        .iter()
        .map(|c| {
            let form = crossing_form(k_path, c.s, reference, None)?;
            let coeffs: Vec<_> = (0..form.intersection_dim)
                .map(|k| {
                    let tr = crate::graph::TraceVector::from_stacked(&form.basis.column(k).into_owned())?;
                    Ok(cauchy_coefficients(&tr))
                })
                .collect::<Result<_>>()?;
            let gram = gram_matrix(g, c.s, &coeffs, QUADRATURE_PANELS)?;
            let m = normalized_form(&form.form, &gram)?;
            let d = m.nrows();
            let deviation = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| (m[(i, j)] + if i == j { 1.0 } else { 0.0 }).norm())
                .fold(0.0, f64::max);
            Ok(NormalizedCrossing {
                side: side.to_string(),
                lambda: c.s,
                dim: d,
                diagonal: (0..d).map(|i| m[(i, i)].re).collect(),
                deviation,
                negative_definite: form.n_minus == d,
            })
        })
        .collect()
}

/// Computes the Maslov index of `(K_λ, L_t)` around the boundary of
/// `[λ_∞, level] × [α, β]` side by side and checks the box identities.
pub fn maslov_box(
    g: &MetricGraph,
    family: &BoundaryFamily,
    (alpha, beta): (f64, f64),
    opts: &BoxOptions,
) -> Result<BoxReport> {
    if !(alpha < beta) {
        return Err(Error::InvalidArgument(format!("empty parameter interval [{alpha}, {beta}]")));
    }
    if family.at(alpha).dim() != g.boundary_dim() {
        return Err(Error::DimensionMismatch { expected: g.boundary_dim(), got: family.at(alpha).dim() });
    }
    check_family(family, (alpha, beta), opts.hypothesis_samples)?;
    let (level, corner_shift) = choose_level(g, family, [alpha, beta], &opts.spectral)?;
    let floor = find_floor(g, family, (alpha, beta), opts.floor_samples, &opts.spectral)?;
    let lambda_inf = floor.lambda_inf;
    let morse_alpha = count_below(g, &family.at(alpha), level, Some(lambda_inf), &opts.spectral)?.count;
    let morse_beta = count_below(g, &family.at(beta), level, Some(lambda_inf), &opts.spectral)?.count;

    let m = g.boundary_dim();
    let graph = g.clone();
    let k_path = LagrangianPath::new(m, (lambda_inf, level), true, move |l| Ok(k_lambda_plane(&graph, l)))?;
    let fam = family.clone();
    let l_path = LagrangianPath::new(m, (alpha, beta), true, move |t| l_frame(&fam.at(t)))?;
    let l_alpha = l_frame(&family.at(alpha))?;
    let l_beta = l_frame(&family.at(beta))?;
    let k_top = k_lambda_plane(g, level);
    let k_bottom = k_lambda_plane(g, lambda_inf);

    let lam = (lambda_inf, level);
    let ts = (alpha, beta);
    let jobs: Vec<(LagrangianPath, LagrangianPath)> = vec![
        (k_path.clone(), LagrangianPath::constant(l_alpha.clone(), lam)?),
        (LagrangianPath::constant(k_top.clone(), ts)?, l_path.clone()),
        (k_path.reversed(), LagrangianPath::constant(l_beta.clone(), lam)?),
        (LagrangianPath::constant(k_bottom, ts)?, l_path.reversed()),
    ];
    let reports = jobs.par_iter().map(|(p1, p2)| maslov_two_paths(p1, p2, &opts.grid)).collect::<Result<Vec<_>>>()?;
    let flow_opts = FlowOptions { level, spectral: opts.spectral, ..opts.flow };
    let flow = spectral_flow(g, family, (alpha, beta), &flow_opts)?;

    let flip = |c: &CrossingEvent, (a, b): (f64, f64)| CrossingEvent { s: a + b - c.s, ..c.clone() };
    let meta = [
        ("sigma1", "lambda", lambda_inf, level, -(morse_alpha as i32)),
        ("sigma2", "t", alpha, beta, flow.flow),
        ("sigma3", "lambda", level, lambda_inf, morse_beta as i32),
        ("sigma4", "t", beta, alpha, 0),
    ];
    let sides: Vec<SideReport> = reports
        .into_iter()
        .zip(meta)
        .enumerate()
        .map(|(i, (r, (name, parameter, from, to, expected)))| {
            let crossings = if i >= 2 {
                let range = if i == 2 { lam } else { ts };
                r.crossings.iter().map(|c| flip(c, range)).collect()
            } else {
                r.crossings
            };
            SideReport { name: name.into(), parameter: parameter.into(), from, to, index: r.index, expected, crossings }
        })
        .collect();
    if !sides[3].crossings.is_empty() {
        return Err(Error::FloorCertificate(format!(
            "the bottom side λ = {lambda_inf} meets L_t at t = {}",
            sides[3].crossings[0].s
        )));
    }

    let single = maslov_index(&l_path, &k_top, &opts.grid)?;
    let mas_upsilon = -single.index;

    let mut k_crossings = normalized_k_crossings(g, &k_path, &l_alpha, "sigma1", &sides[0].crossings)?;
    k_crossings.extend(normalized_k_crossings(g, &k_path, &l_beta, "sigma3", &sides[2].crossings)?);

    let sign_checks = single
        .crossings
        .iter()
        .map(|c| {
            let form = crossing_form(&l_path, c.s, &k_top, None)?;
            let form_eigenvalues: Vec<f64> = form.eigenvalues.iter().map(|x| -x).collect();
            let derivative =
                if form.intersection_dim == 1 { Some(hadamard_formula(g, family, c.s, level)?) } else { None };
            let consistent = match derivative {
                Some(d) => d.signum() == form_eigenvalues[0].signum() && d != 0.0,
                None => true,
            };
            Ok(SignCheck { t: c.s, form_eigenvalues, derivative, consistent })
        })
        .collect::<Result<Vec<_>>>()?;

    let pass_sides = sides.iter().all(|s| s.index == s.expected);
    let pass_sum = sides.iter().map(|s| s.index).sum::<i32>() == 0;
    let pass_flow = flow.flow == sides[1].index;
    let pass_index_theorem = flow.flow == mas_upsilon;
    let pass_signs = sign_checks.iter().all(|s| s.consistent);
    let pass = pass_sides && pass_sum && pass_flow && pass_index_theorem && pass_signs;
    Ok(BoxReport {
        alpha,
        beta,
        level,
        corner_shift,
        floor,
        morse_alpha,
        morse_beta,
        sides,
        spectral_flow: flow,
        mas_upsilon,
        k_crossings,
        sign_checks,
        pass_sides,
        pass_sum,
        pass_flow,
        pass_index_theorem,
        pass_signs,
        pass,
    })
}
