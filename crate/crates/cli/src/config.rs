//! Run configuration: one JSON document naming the graph, the vertex
//! conditions, the command parameters and numeric overrides.

use std::fmt;

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use qgraph_core::graph::make_star;
use qgraph_core::maslov::GridControl;
use qgraph_core::spectral::{FlowOptions, SpectralOptions};
use qgraph_core::verify::{BoxOptions, BranchSelector};
use qgraph_core::vertex::{delta_star_family, robin_interval_family, BoundaryFamily, BoundaryPair, OuterCondition};
use qgraph_core::{CMatrix, Edge, MetricGraph, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Flow,
    Maslov,
    Box,
    Hadamard,
    Interlace,
    Check,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Interval {
        length: f64,
        #[serde(default)]
        potential: f64,
    },
    Star {
        lengths: Vec<f64>,
        #[serde(default)]
        potentials: Option<Vec<f64>>,
    },
    Edges {
        edges: Vec<Edge>,
    },
}

/// A matrix entry: a real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// Row-major matrix.
pub type MatrixSpec = Vec<Vec<Entry>>;

fn to_matrix(name: &str, rows: &MatrixSpec) -> Result<CMatrix> {
    let n = rows.len();
    ensure!(n > 0, "matrix {name} is empty");
    ensure!(rows.iter().all(|r| r.len() == n), "matrix {name} is not square");
    let entries: Vec<C64> = rows.iter().flatten().map(|&e| e.into()).collect();
    ensure!(entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()), "matrix {name} has non-finite entries");
    Ok(CMatrix::from_row_slice(n, n, &entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    /// A fixed pair `(A, B)`.
    Pair {
        a: MatrixSpec,
        b: MatrixSpec,
    },
    Dirichlet,
    Neumann,
    /// `∂_n f(a) = t·f(a)` at the left end of a segment, Dirichlet at the right.
    RobinInterval,
    /// δ-coupling of strength `t` at the centre of a star.
    DeltaStar {
        #[serde(default = "dirichlet")]
        outer: OuterCondition,
    },
    /// `(A₀ + tA₁, B₀ + tB₁)`.
    Affine {
        a0: MatrixSpec,
        a1: MatrixSpec,
        b0: MatrixSpec,
        b1: MatrixSpec,
    },
}

fn dirichlet() -> OuterCondition {
    OuterCondition::Dirichlet
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaslovPathKind {
    /// `t ↦ L_t` over `range` against `K_level`.
    Boundary,
    /// `λ ↦ K_λ` over `window` against `L_t`.
    Cauchy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRange {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Family parameter for single-operator commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Parameter interval `[α, β]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Spectral window or `λ` interval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<MaslovPathKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<BranchSelector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_range: Option<ProbeRange>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub tol_eig: Option<f64>,
    pub grid_step: Option<f64>,
    pub refine_tol: Option<f64>,
    pub max_halvings: Option<u32>,
    pub tol_phase: Option<f64>,
    pub maslov_intervals: Option<usize>,
    pub flow_intervals: Option<usize>,
    pub flow_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the command given on the command line when present.
    #[serde(default)]
    pub command: Option<Command>,
    pub graph: GraphSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub numerics: Numerics,
}

fn tolerance(name: &str, x: Option<f64>) -> Result<()> {
    if let Some(x) = x {
        ensure!((1e-14..=1e-2).contains(&x), "{name} = {x} is outside [1e-14, 1e-2]");
    }
    Ok(())
}

fn positive(name: &str, x: Option<f64>) -> Result<()> {
    if let Some(x) = x {
        ensure!(x.is_finite() && x > 0.0, "{name} = {x} must be positive");
    }
    Ok(())
}

fn interval(name: &str, r: Option<[f64; 2]>) -> Result<Option<(f64, f64)>> {
    r.map(|[a, b]| {
        ensure!(a.is_finite() && b.is_finite() && a < b, "{name} [{a}, {b}] is not an interval");
        Ok((a, b))
    })
    .transpose()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("config does not parse")
    }

    /// Fills in the command and the command-line overrides, validates, and
    /// records every numeric setting in effect.
    pub fn resolve(mut self, command: Command, tol_eig: Option<f64>, grid: Option<f64>) -> Result<Self> {
        if let Some(c) = self.command {
            ensure!(c == command, "config is for '{c}' but '{command}' was requested");
        }
        self.command = Some(command);
        if tol_eig.is_some() {
            self.numerics.tol_eig = tol_eig;
        }
        if grid.is_some() {
            self.numerics.grid_step = grid;
        }
        self.validate()?;
        let (spectral, grid, flow) = (self.spectral(), self.grid(), self.flow());
        self.numerics = Numerics {
            tol_eig: Some(spectral.tol_eig),
            grid_step: Some(spectral.grid_step),
            refine_tol: Some(spectral.refine_tol),
            max_halvings: Some(spectral.max_halvings),
            tol_phase: Some(grid.tol_phase),
            maslov_intervals: Some(grid.initial_intervals),
            flow_intervals: Some(flow.initial_intervals),
            flow_window: Some(flow.window),
        };
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        tolerance("tol_eig", n.tol_eig)?;
        tolerance("refine_tol", n.refine_tol)?;
        tolerance("tol_phase", n.tol_phase)?;
        positive("grid_step", n.grid_step)?;
        positive("flow_window", n.flow_window)?;
        ensure!(n.maslov_intervals.is_none_or(|k| k > 0), "maslov_intervals must be positive");
        ensure!(n.flow_intervals.is_none_or(|k| k > 0), "flow_intervals must be positive");
        interval("range", self.parameters.range)?;
        interval("window", self.parameters.window)?;
        if let Some(p) = &self.parameters.probe_range {
            ensure!(p.count >= 1 && p.from <= p.to, "probe_range must have from ≤ to and count ≥ 1");
        }
        let g = self.graph()?;
        let dim = self.boundary_dim()?;
        if let Some(d) = dim {
            ensure!(
                d == g.boundary_dim(),
                "vertex conditions act on {d} endpoints, the graph has {}",
                g.boundary_dim()
            );
        }
        if let (BoundarySpec::DeltaStar { .. }, GraphSpec::Interval { .. }) = (&self.boundary, &self.graph) {
            bail!("delta_star conditions need a star graph");
        }
        Ok(())
    }

    pub fn command(&self) -> Command {
        self.command.expect("resolved config")
    }

    pub fn graph(&self) -> Result<MetricGraph> {
        let g = match &self.graph {
            GraphSpec::Interval { length, potential } => MetricGraph::interval(*length, *potential),
            GraphSpec::Star { lengths, potentials } => {
                let q = potentials.clone().unwrap_or_else(|| vec![0.0; lengths.len()]);
                return make_star(lengths.len(), lengths, &q).map_err(|e| anyhow!("graph: {e}"));
            }
            GraphSpec::Edges { edges } => MetricGraph::new(edges.clone()),
        };
        g.validate().map_err(|e| anyhow!("graph: {e}"))
    }

    fn boundary_dim(&self) -> Result<Option<usize>> {
        Ok(match &self.boundary {
            BoundarySpec::Pair { a, .. } => Some(a.len()),
            BoundarySpec::Affine { a0, .. } => Some(a0.len()),
            BoundarySpec::RobinInterval => Some(2),
            _ => None,
        })
    }

    /// The vertex conditions as a family (constant for fixed pairs).
    pub fn family(&self) -> Result<BoundaryFamily> {
        let dim = self.graph()?.boundary_dim();
        Ok(match &self.boundary {
            BoundarySpec::Pair { a, b } => {
                let pair =
                    BoundaryPair::new(to_matrix("a", a)?, to_matrix("b", b)?).map_err(|e| anyhow!("boundary: {e}"))?;
                BoundaryFamily::constant(pair)
            }
            BoundarySpec::Dirichlet => BoundaryFamily::constant(BoundaryPair::dirichlet(dim)),
            BoundarySpec::Neumann => BoundaryFamily::constant(BoundaryPair::neumann(dim)),
            BoundarySpec::RobinInterval => robin_interval_family(),
            BoundarySpec::DeltaStar { outer } => {
                delta_star_family(self.graph()?.edge_count(), *outer).map_err(|e| anyhow!("boundary: {e}"))?
            }
            BoundarySpec::Affine { a0, a1, b0, b1 } => BoundaryFamily::affine(
                to_matrix("a0", a0)?,
                to_matrix("a1", a1)?,
                to_matrix("b0", b0)?,
                to_matrix("b1", b1)?,
            )
            .map_err(|e| anyhow!("boundary: {e}"))?,
        })
    }

    /// Pair at the configured `t` (0 when absent).
    pub fn pair(&self) -> Result<BoundaryPair> {
        Ok(self.family()?.at(self.parameters.t.unwrap_or(0.0)))
    }

    pub fn spectral(&self) -> SpectralOptions {
        let d = SpectralOptions::default();
        let n = &self.numerics;
        SpectralOptions {
            grid_step: n.grid_step.unwrap_or(d.grid_step),
            tol_eig: n.tol_eig.unwrap_or(d.tol_eig),
            refine_tol: n.refine_tol.unwrap_or(d.refine_tol),
            max_halvings: n.max_halvings.unwrap_or(d.max_halvings),
        }
    }

    pub fn grid(&self) -> GridControl {
        let d = GridControl::default();
        GridControl {
            initial_intervals: self.numerics.maslov_intervals.unwrap_or(d.initial_intervals),
            tol_phase: self.numerics.tol_phase.unwrap_or(d.tol_phase),
            ..d
        }
    }

    pub fn flow(&self) -> FlowOptions {
        let d = FlowOptions::default();
        FlowOptions {
            level: self.parameters.level.unwrap_or(d.level),
            window: self.numerics.flow_window.unwrap_or(d.window),
            initial_intervals: self.numerics.flow_intervals.unwrap_or(d.initial_intervals),
            spectral: self.spectral(),
            ..d
        }
    }

    pub fn box_options(&self) -> BoxOptions {
        BoxOptions { grid: self.grid(), spectral: self.spectral(), flow: self.flow(), ..BoxOptions::default() }
    }

    pub fn range(&self) -> Result<(f64, f64)> {
        interval("range", self.parameters.range)?
            .ok_or_else(|| anyhow!("parameters.range is required for '{}'", self.command()))
    }

    pub fn window(&self) -> Result<(f64, f64)> {
        interval("window", self.parameters.window)?
            .ok_or_else(|| anyhow!("parameters.window is required for '{}'", self.command()))
    }

    pub fn probes(&self) -> Result<Vec<f64>> {
        let p = &self.parameters;
        match (&p.probes, &p.probe_range) {
            (Some(v), None) => Ok(v.clone()),
            (None, Some(r)) if r.count == 1 => Ok(vec![r.from]),
            (None, Some(r)) => {
                Ok((0..r.count).map(|i| r.from + (r.to - r.from) * i as f64 / (r.count - 1) as f64).collect())
            }
            (Some(_), Some(_)) => bail!("give either parameters.probes or parameters.probe_range, not both"),
            (None, None) => bail!("parameters.probes or parameters.probe_range is required for 'interlace'"),
        }
    }
}
