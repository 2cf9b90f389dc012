use rayon::prelude::*;
use serde::Serialize;

use super::normalized_eigentrace;
use crate::graph::MetricGraph;
use crate::spectral::{eigenvalue_near, lowest_eigenvalues, SecularSystem, SpectralOptions};
use crate::vertex::BoundaryFamily;
use crate::{Error, Result};

/// Spectrum of `H_t` around the reference level `λ_n(ν)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub t: f64,
    /// `λ_{n−1}(t)`, absent for `n = 1`.
    pub lower: Option<f64>,
    /// `λ_{n+1}(t)`.
    pub upper: f64,
    /// Secular gap of `H_t` at `λ_n(ν)`.
    pub gap_at_level: f64,
    /// Eigenvalues of `H_t` strictly below `λ_n(ν)`.
    pub count_below: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterlaceReport {
    pub nu: f64,
    pub n: usize,
    /// `λ_n(ν)`.
    pub level: f64,
    pub vertex_value: f64,
    /// One-sided slopes of the branch through `λ_n(ν)`.
    pub slope_left: f64,
    pub slope_right: f64,
    pub max_lower: Option<f64>,
    pub min_upper: f64,
    /// `λ_n(ν) − max λ_{n−1}(μ)` and `min λ_{n+1}(θ) − λ_n(ν)` over the probes.
    pub lower_margin: Option<f64>,
    pub upper_margin: f64,
    pub probes: Vec<ProbeResult>,
    pub monotone: bool,
    pub pass: bool,
}

const SEPARATION: f64 = 1e-9;
const UNIQUENESS_GAP: f64 = 1e-6;

/// Checks `λ_{n−1}(t) < λ_n(ν) < λ_{n+1}(t)` for every probe `t`, that
/// `λ_n(ν)` is an eigenvalue of `H_t` only for `t = ν`, and that the branch
/// through it is increasing.
///
/// Needs a family with a probe point (the vertex value) and a simple
/// `λ_n(ν)` whose eigenfunction does not vanish there.
pub fn interlacing_check(
    g: &MetricGraph,
    family: &BoundaryFamily,
    nu: f64,
    n: usize,
    probes: &[f64],
    opts: &SpectralOptions,
) -> Result<InterlaceReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("eigenvalue index counts from 1".into()));
    }
    let vertex = family
        .probe_point()
        .ok_or_else(|| Error::HypothesisNotMet(format!("family '{}' has no vertex probe point", family.name())))?;
    let p_nu = family.at(nu);
    let sys_nu = SecularSystem::new(g, &p_nu)?;
    let low = lowest_eigenvalues(g, &p_nu, n + 1, opts)?;
    let level = low[n - 1];
    let refined = eigenvalue_near(&sys_nu, level, 1e-3, opts)?;
    if refined.multiplicity != 1 || low[n] - level < UNIQUENESS_GAP || (n > 1 && level - low[n - 2] < UNIQUENESS_GAP) {
        return Err(Error::HypothesisNotMet(format!("λ_{n}({nu}) = {level} is not simple")));
    }
    let level = refined.lambda;
    let (u, _) = normalized_eigentrace(g, &sys_nu, level)?;
    let vertex_value = u.dirichlet[vertex].norm();
    if vertex_value <= 1e-6 {
        return Err(Error::HypothesisNotMet(format!(
            "eigenfunction of λ_{n}({nu}) vanishes at the vertex (|u(v)| = {vertex_value:.3e})"
        )));
    }

    let dt = 1e-3 * (1.0 + nu.abs());
    let radius = 0.5 * (low[n] - level).min(if n > 1 { level - low[n - 2] } else { f64::INFINITY });
    let branch = |t: f64| -> Result<f64> {
        let sys = SecularSystem::new(g, &family.at(t))?;
        Ok(eigenvalue_near(&sys, level, radius, opts)?.lambda)
    };
    let slope_left = (level - branch(nu - dt)?) / dt;
    let slope_right = (branch(nu + dt)? - level) / dt;
    let monotone = slope_left > 0.0 && slope_right > 0.0;

    let probes = probes
        .par_iter()
        .map(|&t| -> Result<ProbeResult> {
            let p = family.at(t);
            let eigs = lowest_eigenvalues(g, &p, n + 1, opts)?;
            let lower = (n > 1).then(|| eigs[n - 2]);
            let upper = eigs[n];
            let gap_at_level = SecularSystem::new(g, &p)?.gap(level);
            let count_below = eigs.iter().filter(|&&e| e < level - SEPARATION).count();
            let at_nu = (t - nu).abs() <= 1e-12;
            let pass = lower.is_none_or(|l| l < level - SEPARATION)
                && upper > level + SEPARATION
                && (at_nu || gap_at_level > UNIQUENESS_GAP)
                && (count_below == n - 1 || count_below == n);
            Ok(ProbeResult { t, lower, upper, gap_at_level, count_below, pass })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_lower = probes.iter().filter_map(|p| p.lower).reduce(f64::max);
    let min_upper = probes.iter().map(|p| p.upper).fold(f64::INFINITY, f64::min);
    let pass = monotone && probes.iter().all(|p| p.pass);
    Ok(InterlaceReport {
        nu,
        n,
        level,
        vertex_value,
        slope_left,
        slope_right,
        max_lower,
        min_upper,
        lower_margin: max_lower.map(|l| level - l),
        upper_margin: min_upper - level,
        probes,
        monotone,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_star;
    use crate::vertex::{delta_star_family, BoundaryPair, OuterCondition};
    use std::f64::consts::PI;

    fn star() -> MetricGraph {
        make_star(3, &[1.0, 2f64.sqrt(), PI / 2.0], &[0.0; 3]).unwrap()
    }

    #[test]
    fn delta_star_interlaces() {
        let fam = delta_star_family(3, OuterCondition::Dirichlet).unwrap();
        let probes: Vec<f64> = (0..=10).map(|i| -5.0 + i as f64).collect();
        for n in 1..=3 {
            let r = interlacing_check(&star(), &fam, 0.0, n, &probes, &SpectralOptions::default()).unwrap();
            assert!(r.pass, "{r:#?}");
            assert!(r.slope_left > 0.0 && r.slope_right > 0.0);
            for p in &r.probes {
                let expected = if p.t > 0.0 {
                    n - 1
                } else if p.t < 0.0 {
                    n
                } else {
                    n - 1
                };
                assert_eq!(p.count_below, expected, "t = {}", p.t);
            }
        }
    }

    #[test]
    fn slope_matches_vertex_value() {
        let fam = delta_star_family(3, OuterCondition::Dirichlet).unwrap();
        let r = interlacing_check(&star(), &fam, 0.0, 1, &[0.0], &SpectralOptions::default()).unwrap();
        let v2 = r.vertex_value * r.vertex_value;
        assert!((r.slope_left - v2).abs() < 1e-2 * v2);
        assert!((r.slope_right - v2).abs() < 1e-2 * v2);
    }

    #[test]
    fn missing_probe_point_is_rejected() {
        let fam = BoundaryFamily::constant(BoundaryPair::dirichlet(6));
        let r = interlacing_check(&star(), &fam, 0.0, 1, &[0.0], &SpectralOptions::default());
        assert!(matches!(r, Err(Error::HypothesisNotMet(_))));
    }

    #[test]
    fn vanishing_vertex_value_is_rejected() {
        // equal legs carry eigenfunctions that vanish at the centre
        let g = make_star(3, &[1.0; 3], &[0.0; 3]).unwrap();
        let fam = delta_star_family(3, OuterCondition::Dirichlet).unwrap();
        let r = interlacing_check(&g, &fam, 0.0, 2, &[0.0], &SpectralOptions::default());
        assert!(matches!(r, Err(Error::HypothesisNotMet(_))));
    }
}
