//! Command dispatch and report assembly.

use std::fmt::Display;

use anyhow::anyhow;
use serde::Serialize;
use serde_json::{json, Value};

use qgraph_core::edge::{k_lambda_frame, k_lambda_plane};
use qgraph_core::maslov::{maslov_index, LagrangianPath, MaslovReport};
use qgraph_core::spectral::{eigenvalues_in, floor_for_pair, secular_gap, spectral_flow, FlowReport, SpectralOptions};
use qgraph_core::symplectic::{is_lagrangian, DEFAULT_TOL};
use qgraph_core::verify::{hadamard_check, interlacing_check, maslov_box, BranchSelector};
use qgraph_core::vertex::{check_hypothesis, l_frame, BoundaryPair};
use qgraph_core::{Error, MetricGraph};

use crate::config::{Command, MaslovPathKind, RunConfig};

/// Machine-readable result of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub command: Command,
    pub result: Value,
    pub pass: bool,
    pub crossings: Value,
    pub certificates: Value,
}

/// Plot data with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn cell(x: impl Display) -> String {
    x.to_string()
}

fn opt_cell<T: Display>(x: Option<T>) -> String {
    x.map(cell).unwrap_or_default()
}

#[derive(Debug)]
pub enum RunError {
    /// Bad configuration or inadmissible input (exit status 2).
    Config(anyhow::Error),
    /// The computation ran into a failed certificate (exit status 1).
    Verification(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Verification(_) => 1,
        }
    }
}

impl Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e:#}"),
            RunError::Verification(e) => write!(f, "verification failed: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::FlowMismatch { .. } | Error::FloorCertificate(_) | Error::NoBranch(_) => {
                RunError::Verification(anyhow!(e))
            }
            _ => RunError::Config(anyhow!(e)),
        }
    }
}

/// Outcome of a run that produced a report.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub table: Table,
    /// Names the failing invariant when the run does not pass.
    pub failure: Option<RunError>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        self.failure.as_ref().map_or(0, RunError::exit_code)
    }
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

struct Parts {
    result: Value,
    pass: bool,
    crossings: Value,
    certificates: Value,
    table: Table,
    failure: Option<RunError>,
}

pub fn run(config: RunConfig) -> Result<Outcome, RunError> {
    let parts = match config.command() {
        Command::Spectrum => spectrum(&config)?,
        Command::Flow => flow(&config)?,
        Command::Maslov => maslov(&config)?,
        Command::Box => morse_box(&config)?,
        Command::Hadamard => hadamard(&config)?,
        Command::Interlace => interlace(&config)?,
        Command::Check => check(&config)?,
    };
    let report = Report {
        command: config.command(),
        config,
        result: parts.result,
        pass: parts.pass,
        crossings: parts.crossings,
        certificates: parts.certificates,
    };
    Ok(Outcome { report, table: parts.table, failure: parts.failure })
}

fn nudged_window(
    g: &MetricGraph,
    p: &BoundaryPair,
    (lo, hi): (f64, f64),
    opts: &SpectralOptions,
) -> Result<(f64, f64), RunError> {
    let mut w = (lo, hi);
    let step = 1e-3 * (hi - lo);
    while secular_gap(g, p, w.0)? <= opts.tol_eig {
        w.0 -= step;
    }
    while secular_gap(g, p, w.1)? <= opts.tol_eig {
        w.1 += step;
    }
    Ok(w)
}

fn spectrum(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let p = config.pair()?;
    let opts = config.spectral();
    let spec = eigenvalues_in(&g, &p, config.window()?, &opts)?;
    let mut table = Table::new(&["lambda", "multiplicity", "residual"]);
    for e in &spec.eigenvalues {
        table.push(vec![cell(e.lambda), cell(e.multiplicity), cell(e.residual)]);
    }
    let failure = (!spec.stable)
        .then(|| RunError::Verification(anyhow!("eigenvalue count did not stabilize after {} scans", spec.scans)));
    Ok(Parts {
        pass: spec.stable,
        crossings: json!([]),
        certificates: json!({ "stable": spec.stable, "scans": spec.scans, "grid_step": spec.grid_step }),
        result: to_value(&spec),
        table,
        failure,
    })
}

fn flow(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let family = config.family()?;
    let range = config.range()?;
    let opts = config.flow();
    let report: FlowReport = spectral_flow(&g, &family, range, &opts)?;

    let mut table = Table::new(&["t", "lambda"]);
    let samples = opts.initial_intervals;
    for i in 0..=samples {
        let t = range.0 + (range.1 - range.0) * i as f64 / samples as f64;
        let p = family.at(t);
        let window = nudged_window(&g, &p, (opts.level - opts.window, opts.level + opts.window), &opts.spectral)?;
        for lambda in eigenvalues_in(&g, &p, window, &opts.spectral)?.expanded() {
            table.push(vec![cell(t), cell(lambda)]);
        }
    }
    Ok(Parts {
        pass: true,
        crossings: to_value(&report.crossings),
        certificates: json!({
            "morse_alpha": report.morse_alpha,
            "morse_beta": report.morse_beta,
            "tracked": report.tracked,
            "level": report.level,
        }),
        result: to_value(&report),
        table,
        failure: None,
    })
}

fn maslov_table(report: &MaslovReport) -> Table {
    let mut table = Table::new(&["s", "kind", "dim", "contribution"]);
    for c in &report.crossings {
        table.push(vec![
            cell(c.s),
            to_value(&c.kind).as_str().unwrap_or_default().to_string(),
            cell(c.dim),
            cell(c.contribution),
        ]);
    }
    table
}

fn maslov(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let family = config.family()?;
    let grid = config.grid();
    let m = g.boundary_dim();
    let level = config.parameters.level.unwrap_or(0.0);
    let kind = config.parameters.path.unwrap_or(MaslovPathKind::Boundary);
    let report = match kind {
        MaslovPathKind::Boundary => {
            let fam = family.clone();
            let path = LagrangianPath::new(m, config.range()?, true, move |t| l_frame(&fam.at(t)))?;
            maslov_index(&path, &k_lambda_plane(&g, level), &grid)?
        }
        MaslovPathKind::Cauchy => {
            let graph = g.clone();
            let path = LagrangianPath::new(m, config.window()?, true, move |l| Ok(k_lambda_plane(&graph, l)))?;
            maslov_index(&path, &l_frame(&config.pair()?)?, &grid)?
        }
    };
    Ok(Parts {
        pass: true,
        crossings: to_value(&report.crossings),
        certificates: json!({ "cells": report.cells, "samples": report.samples }),
        table: maslov_table(&report),
        result: json!({ "path": kind, "level": level, "index": report.index, "report": report }),
        failure: None,
    })
}

fn morse_box(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let family = config.family()?;
    let report = maslov_box(&g, &family, config.range()?, &config.box_options())?;
    let mut table = Table::new(&["side", "parameter", "s", "kind", "dim", "contribution"]);
    let mut crossings = vec![];
    for side in &report.sides {
        for c in &side.crossings {
            let kind = to_value(&c.kind);
            table.push(vec![
                side.name.clone(),
                side.parameter.clone(),
                cell(c.s),
                kind.as_str().unwrap_or_default().to_string(),
                cell(c.dim),
                cell(c.contribution),
            ]);
            crossings.push(json!({ "side": side.name, "crossing": c }));
        }
    }
    let flags = [
        ("side indices", report.pass_sides),
        ("sides sum to zero", report.pass_sum),
        ("spectral flow equals the top side", report.pass_flow),
        ("SpFlow = Mas(Υ, K₀)", report.pass_index_theorem),
        ("crossing-form signs", report.pass_signs),
    ];
    let failed: Vec<_> = flags.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    let failure = (!failed.is_empty()).then(|| {
        let idx: Vec<i32> = report.sides.iter().map(|s| s.index).collect();
        RunError::Verification(anyhow!(
            "{} (sides {idx:?}, SpFlow {}, Mas {})",
            failed.join(", "),
            report.spectral_flow.flow,
            report.mas_upsilon
        ))
    });
    Ok(Parts {
        pass: report.pass,
        crossings: Value::Array(crossings),
        certificates: json!({
            "floor": report.floor,
            "level": report.level,
            "corner_shift": report.corner_shift,
            "k_crossings": report.k_crossings,
            "sign_checks": report.sign_checks,
        }),
        result: to_value(&report),
        table,
        failure,
    })
}

fn hadamard(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let family = config.family()?;
    let t0 = config.parameters.t0.ok_or_else(|| anyhow!("parameters.t0 is required for 'hadamard'"))?;
    let branch = config.parameters.branch.unwrap_or(BranchSelector::Index(1));
    let r = hadamard_check(&g, &family, t0, branch, &config.spectral())?;
    let mut table = Table::new(&["quantity", "value"]);
    for (name, v) in [
        ("lambda", Some(r.lambda)),
        ("finite_difference", Some(r.m1)),
        ("finite_difference_coarse", Some(r.m1_coarse)),
        ("boundary_formula", Some(r.m2)),
        ("crossing_form", Some(r.m3)),
        ("vertex_value", r.vertex_value),
        ("vertex_value_squared", r.vertex_value_squared),
    ] {
        table.push(vec![name.to_string(), opt_cell(v)]);
    }
    let failure = (!r.pass).then(|| {
        RunError::Verification(anyhow!(
            "derivative estimates disagree: finite difference {}, formula {}, crossing form {} (max difference {:.3e} > {:.3e})",
            r.m1,
            r.m2,
            r.m3,
            r.max_difference,
            r.tolerance
        ))
    });
    Ok(Parts {
        pass: r.pass,
        crossings: json!([{ "t": r.t0, "lambda": r.lambda, "crossing_form": r.m3 }]),
        certificates: json!({ "step": r.step, "tolerance": r.tolerance, "vertex_power_match": r.vertex_power_match }),
        result: to_value(&r),
        table,
        failure,
    })
}

fn interlace(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let family = config.family()?;
    let nu = config.parameters.nu.unwrap_or(0.0);
    let n = config.parameters.n.ok_or_else(|| anyhow!("parameters.n is required for 'interlace'"))?;
    let probes = config.probes()?;
    let r = interlacing_check(&g, &family, nu, n, &probes, &config.spectral()).map_err(|e| match e {
        Error::HypothesisNotMet(msg) => RunError::Config(anyhow!("hypothesis not met: {msg}")),
        e => e.into(),
    })?;
    let mut table = Table::new(&["t", "lower", "upper", "gap_at_level", "count_below", "pass"]);
    for p in &r.probes {
        table.push(vec![
            cell(p.t),
            opt_cell(p.lower),
            cell(p.upper),
            cell(p.gap_at_level),
            cell(p.count_below),
            cell(p.pass),
        ]);
    }
    let failure = (!r.pass).then(|| {
        let bad: Vec<String> = r.probes.iter().filter(|p| !p.pass).map(|p| cell(p.t)).collect();
        let what = if r.monotone { "interlacing" } else { "monotonicity of λ_n near ν" };
        RunError::Verification(anyhow!("{what} fails (probes failing: [{}])", bad.join(", ")))
    });
    Ok(Parts {
        pass: r.pass,
        crossings: json!([{ "t": r.nu, "lambda": r.level }]),
        certificates: json!({
            "lower_margin": r.lower_margin,
            "upper_margin": r.upper_margin,
            "vertex_value": r.vertex_value,
            "slopes": [r.slope_left, r.slope_right],
        }),
        result: to_value(&r),
        table,
        failure,
    })
}

fn check(config: &RunConfig) -> Result<Parts, RunError> {
    let g = config.graph()?;
    let p = config.pair()?;
    let hypothesis = check_hypothesis(&p, DEFAULT_TOL)?;
    let level = config.parameters.level.unwrap_or(0.0);
    let k_diag = is_lagrangian(k_lambda_frame(&g, level).matrix(), DEFAULT_TOL);
    let l_diag = hypothesis.passed.then(|| l_frame(&p).map(|f| is_lagrangian(f.matrix(), DEFAULT_TOL))).transpose()?;
    let floor = hypothesis.passed.then(|| floor_for_pair(&g, &p, &config.spectral())).transpose()?;

    let mut table = Table::new(&["quantity", "value"]);
    table.push(vec!["rank".into(), cell(hypothesis.rank)]);
    table.push(vec!["dim".into(), cell(hypothesis.dim)]);
    table.push(vec!["symmetry_residual".into(), cell(hypothesis.symmetry_residual)]);
    table.push(vec!["det_aa_minus_bb".into(), cell(hypothesis.det_aa_minus_bb)]);
    table.push(vec!["det_aa_plus_bb".into(), cell(hypothesis.det_aa_plus_bb)]);
    table.push(vec!["k_isotropy_residual".into(), cell(k_diag.isotropy_residual)]);
    table.push(vec!["l_isotropy_residual".into(), opt_cell(l_diag.map(|d| d.isotropy_residual))]);
    for (i, s) in hypothesis.singular_values.iter().enumerate() {
        table.push(vec![format!("singular_value_{i}"), cell(s)]);
    }

    let lagrangian = k_diag.is_lagrangian && l_diag.is_some_and(|d| d.is_lagrangian);
    let pass = hypothesis.passed && lagrangian;
    let failure = match &hypothesis.failure {
        Some(msg) => Some(RunError::Config(anyhow!("vertex conditions are not admissible: {msg}"))),
        None if !lagrangian => Some(RunError::Verification(anyhow!(
            "Lagrangian check fails: K isotropy residual {:.3e}, L {:?}",
            k_diag.isotropy_residual,
            l_diag
        ))),
        None => None,
    };
    Ok(Parts {
        pass,
        crossings: json!([]),
        certificates: json!({ "k_frame": k_diag, "l_frame": l_diag, "floor": floor }),
        result: json!({ "hypothesis": hypothesis, "k_frame": k_diag, "l_frame": l_diag }),
        table,
        failure,
    })
}
