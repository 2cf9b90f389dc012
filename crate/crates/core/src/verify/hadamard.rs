use serde::{Deserialize, Serialize};

use super::normalized_eigentrace;
use crate::edge::k_lambda_plane;
use crate::graph::MetricGraph;
use crate::maslov::{crossing_form, LagrangianPath};
use crate::spectral::{eigenvalue_near, eigenvalues_in_system, lowest_eigenvalues, SecularSystem, SpectralOptions};
use crate::vertex::{l_frame, recover_f, BoundaryFamily};
use crate::{Error, Result};

/// Which eigenvalue branch to follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchSelector {
    /// The `n`-th eigenvalue from below, counted with multiplicity from 1.
    Index(usize),
    /// The eigenvalue closest to a value.
    Near(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HadamardReport {
    pub t0: f64,
    pub lambda: f64,
    /// Richardson-extrapolated central difference of the branch.
    pub m1: f64,
    /// Plain central difference at the base step.
    pub m1_coarse: f64,
    pub step: f64,
    /// `⟨(AḂ* − BȦ*)φ, φ⟩` for the normalized eigenfunction.
    pub m2: f64,
    /// Crossing form of `t ↦ L_t` against `K_λ`, two-path sign.
    pub m3: f64,
    /// `|u(v)|` and `|u(v)|²` at the family's probe point, if it has one.
    pub vertex_value: Option<f64>,
    pub vertex_value_squared: Option<f64>,
    /// Which of `|u(v)|`, `|u(v)|²` agrees with `m1` to the tolerance.
    pub vertex_power_match: Option<String>,
    pub max_difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn fine(opts: &SpectralOptions, radius: f64) -> SpectralOptions {
    SpectralOptions { refine_tol: 1e-13, grid_step: (radius / 4.0).min(opts.grid_step), ..*opts }
}

/// `⟨(A_t Ḃ_t* − B_t Ȧ_t*)φ, φ⟩` with `φ` recovered from the normalized
/// eigenfunction at the simple eigenvalue `lambda` of `H_t`.
pub fn hadamard_formula(g: &MetricGraph, family: &BoundaryFamily, t: f64, lambda: f64) -> Result<f64> {
    let p = family.at(t);
    let sys = SecularSystem::new(g, &p)?;
    let (u, _) = normalized_eigentrace(g, &sys, lambda)?;
    let phi = recover_f(&p, &u)?;
    let (da, db) = family.derivative(t);
    let m = &p.a * db.adjoint() - &p.b * da.adjoint();
    Ok((phi.adjoint() * m * &phi)[(0, 0)].re)
}

/// Checks `dλ/dt` at a simple eigenvalue three ways: by finite differences,
/// by the boundary formula, and by the crossing form.
pub fn hadamard_check(
    g: &MetricGraph,
    family: &BoundaryFamily,
    t0: f64,
    branch: BranchSelector,
    opts: &SpectralOptions,
) -> Result<HadamardReport> {
    let p0 = family.at(t0);
    let sys0 = SecularSystem::new(g, &p0)?;
    let rough = match branch {
        BranchSelector::Index(0) => return Err(Error::InvalidArgument("branch index counts from 1".into())),
        BranchSelector::Index(n) => lowest_eigenvalues(g, &p0, n, opts)?[n - 1],
        BranchSelector::Near(x) => eigenvalue_near(&sys0, x, 1.0, opts)?.lambda,
    };
    let eig = eigenvalue_near(&sys0, rough, 1e-3, &fine(opts, 1e-3))?;
    if eig.multiplicity != 1 {
        return Err(Error::NotSimple { multiplicity: eig.multiplicity });
    }
    let lambda = eig.lambda;

    // distance to the neighbouring eigenvalues bounds the tracking radius
    let mut window = (lambda - 1.0, lambda + 1.0);
    for end in [&mut window.0, &mut window.1] {
        while sys0.gap(*end) <= opts.tol_eig {
            *end += 1e-3;
        }
    }
    let separation = eigenvalues_in_system(&sys0, window, opts)?
        .eigenvalues
        .iter()
        .map(|e| (e.lambda - lambda).abs())
        .filter(|&d| d > 1e-6)
        .fold(1.0, f64::min);

    let (u, _) = normalized_eigentrace(g, &sys0, lambda)?;
    let phi = recover_f(&p0, &u)?;
    let (da, db) = family.derivative(t0);
    let m2 = (phi.adjoint() * (&p0.a * db.adjoint() - &p0.b * da.adjoint()) * &phi)[(0, 0)].re;

    let fam = family.clone();
    let path = LagrangianPath::new(g.boundary_dim(), (t0 - 1.0, t0 + 1.0), true, move |t| l_frame(&fam.at(t)))?;
    let form = crossing_form(&path, t0, &k_lambda_plane(g, lambda), None)?;
    if form.intersection_dim != 1 {
        return Err(Error::NotSimple { multiplicity: form.intersection_dim });
    }
    let m3 = -form.form[(0, 0)].re * u.stacked().norm_squared();

    let branch_at = |t: f64, guess: f64| -> Result<f64> {
        let sys = SecularSystem::new(g, &family.at(t))?;
        let radius = separation / 3.0;
        Ok(eigenvalue_near(&sys, guess, radius, &fine(opts, radius))?.lambda)
    };
    let mut h = 1e-3 * (1.0 + t0.abs());
    let (d_h, d_half) = loop {
        let plus = branch_at(t0 + h, lambda + m2 * h)?;
        let minus = branch_at(t0 - h, lambda - m2 * h)?;
        if 3.0 * (plus - lambda).abs().max((minus - lambda).abs()) > separation {
            h *= 0.5;
            if h < 1e-8 {
                return Err(Error::NoBranch(format!("branch at t = {t0} moves too fast to track")));
            }
            continue;
        }
        let plus2 = branch_at(t0 + 0.5 * h, lambda + 0.5 * m2 * h)?;
        let minus2 = branch_at(t0 - 0.5 * h, lambda - 0.5 * m2 * h)?;
        break ((plus - minus) / (2.0 * h), (plus2 - minus2) / h);
    };
    let m1 = (4.0 * d_half - d_h) / 3.0;

    let tolerance = 1e-5 * (1.0 + m2.abs());
    let vertex_value = family.probe_point().map(|i| u.dirichlet[i].norm());
    let vertex_value_squared = vertex_value.map(|v| v * v);
    let vertex_power_match = vertex_value.map(|v| {
        let linear = (v - m1).abs() <= tolerance;
        let squared = (v * v - m1).abs() <= tolerance;
        match (linear, squared) {
            (true, true) => "both",
            (true, false) => "linear",
            (false, true) => "squared",
            (false, false) => "neither",
        }
        .to_string()
    });
    let max_difference = [(m1 - m2).abs(), (m1 - m3).abs(), (m2 - m3).abs()].into_iter().fold(0.0, f64::max);
    Ok(HadamardReport {
        t0,
        lambda,
        m1,
        m1_coarse: d_h,
        step: h,
        m2,
        m3,
        vertex_value,
        vertex_value_squared,
        vertex_power_match,
        max_difference,
        tolerance,
        pass: max_difference <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_star;
    use crate::vertex::{delta_star_family, robin_interval_family, BoundaryPair, OuterCondition};
    use std::f64::consts::PI;

    #[test]
    fn robin_zero_mode_derivative() {
        let g = MetricGraph::interval(PI, 0.0);
        let r = hadamard_check(
            &g,
            &robin_interval_family(),
            -1.0 / PI,
            BranchSelector::Index(1),
            &SpectralOptions::default(),
        )
        .unwrap();
        assert!(r.lambda.abs() < 1e-10);
        let exact = 3.0 / PI;
        assert!((r.m2 - exact).abs() < 1e-9, "m2 = {}", r.m2);
        assert!((r.m1 - exact).abs() < 1e-6, "m1 = {}", r.m1);
        assert!((r.m3 - exact).abs() < 1e-6, "m3 = {}", r.m3);
        assert!(r.pass);
        assert_eq!(r.vertex_power_match.as_deref(), Some("squared"));
    }

    #[test]
    fn robin_phi_is_minus_c() {
        // φ = (−c, c/π) with c = √(3/π)
        let g = MetricGraph::interval(PI, 0.0);
        let fam = robin_interval_family();
        let p = fam.at(-1.0 / PI);
        let sys = SecularSystem::new(&g, &p).unwrap();
        let (u, _) = normalized_eigentrace(&g, &sys, 0.0).unwrap();
        let phi = recover_f(&p, &u).unwrap();
        let c = (3.0 / PI).sqrt();
        assert!((phi[0].norm() - c).abs() < 1e-9);
        assert!((phi[1].norm() - c / PI).abs() < 1e-9);
        assert!((phi[0] / phi[1] + PI).norm() < 1e-8);
    }

    #[test]
    fn constant_family_has_zero_derivative() {
        let g = MetricGraph::interval(PI, 0.0);
        let fam = BoundaryFamily::constant(BoundaryPair::dirichlet(2));
        let r = hadamard_check(&g, &fam, 0.3, BranchSelector::Index(1), &SpectralOptions::default()).unwrap();
        assert!((r.lambda - 1.0).abs() < 1e-10);
        assert_eq!(r.m2, 0.0);
        assert!(r.m1.abs() < 1e-8);
        assert!(r.pass);
    }

    #[test]
    fn delta_star_derivative_is_squared_vertex_value() {
        let g = make_star(3, &[1.0, 2f64.sqrt(), PI / 2.0], &[0.0; 3]).unwrap();
        let fam = delta_star_family(3, OuterCondition::Dirichlet).unwrap();
        for (t0, n) in [(0.0, 1), (1.3, 2), (-2.0, 1)] {
            let r = hadamard_check(&g, &fam, t0, BranchSelector::Index(n), &SpectralOptions::default()).unwrap();
            assert!(r.pass, "{r:?}");
            assert!((r.m2 - r.vertex_value_squared.unwrap()).abs() < 1e-10);
            assert_eq!(r.vertex_power_match.as_deref(), Some("squared"));
        }
    }

    #[test]
    fn degenerate_level_is_rejected() {
        let g = make_star(3, &[1.0; 3], &[0.0; 3]).unwrap();
        let fam = delta_star_family(3, OuterCondition::Dirichlet).unwrap();
        let r = hadamard_check(&g, &fam, 0.0, BranchSelector::Index(2), &SpectralOptions::default());
        assert!(matches!(r, Err(Error::NotSimple { multiplicity: 2 })));
    }
}
