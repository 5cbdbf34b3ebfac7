//! JSON system definitions and their validation into library objects.

use std::path::Path;

use metricflow::dynamics::{IntegratorOptions, VectorFieldSpec};
use metricflow::evolution::{SeriesMode, SeriesOptions, DEFAULT_ORDER};
use metricflow::friction::{
    analytic_metric, applicability_check, ApplicabilityPolicy, FrictionMatrix, FrictionSystem,
};
use metricflow::phasespace::ExprMatrix;
use metricflow::sampling::SampleSpec;
use metricflow::{parse, CoordinateChart, Expr, MetricField, PhasePoint};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    #[serde(default)]
    pub names: Option<Vec<String>>,
    #[serde(default)]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub friction: Option<FrictionSpec>,
    #[serde(default)]
    pub components: Option<Vec<String>>,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default)]
    pub splitting: SplittingSection,
    #[serde(default)]
    pub samples: SamplesConfig,
    #[serde(default)]
    pub queries: Vec<Query>,
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
}

/// A scalar, the diagonal of `K`, or the full `n × n` matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FrictionSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Named(String),
    Matrix(Vec<Vec<Entry>>),
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::Named("canonical".into())
    }
}

/// Metric entries may be written as expressions or plain numbers.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let d = IntegratorOptions::default();
        Self {
            abs_tol: d.abs_tol,
            rel_tol: d.rel_tol,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Auto,
    Linear,
    Generic,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    pub order: usize,
    pub mode: ModeName,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            mode: ModeName::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingSection {
    pub steps: usize,
}

impl Default for SplittingSection {
    fn default() -> Self {
        Self { steps: 1000 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesConfig {
    pub count: usize,
    pub seed: u64,
    /// Half-width of the coordinate box.
    #[serde(rename = "box")]
    pub half_width: f64,
    /// Upper end of the sampled time range used by `audit`.
    pub t_max: f64,
}

impl Default for SamplesConfig {
    fn default() -> Self {
        let d = SampleSpec::default();
        Self {
            count: d.count,
            seed: d.seed,
            half_width: d.half_width,
            t_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub point: Vec<f64>,
    #[serde(default)]
    pub time: f64,
}

/// Which metric the config asked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Canonical,
    Explicit,
    FrictionAnalytic,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct System {
    pub chart: CoordinateChart,
    pub field: VectorFieldSpec,
    pub friction: Option<FrictionSystem>,
    pub metric: MetricField,
    pub metric_kind: MetricKind,
    /// Applicability warnings for the friction metric, when one was built.
    pub metric_warnings: Vec<String>,
    pub integrator: IntegratorOptions,
    pub series: SeriesOptions,
    pub steps: usize,
    pub samples: SampleSpec,
    pub t_max: f64,
    pub queries: Vec<PhasePoint>,
    pub t_grid: Vec<f64>,
}

impl System {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// The query points, or the origin at `t = 0` when none were given.
    pub fn query_points(&self) -> Vec<PhasePoint> {
        if self.queries.is_empty() {
            vec![PhasePoint::new(vec![0.0; self.dim()], 0.0)]
        } else {
            self.queries.clone()
        }
    }
}

pub fn load(path: &Path) -> Result<SystemConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<SystemConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        message: e.to_string(),
        field: None,
        line: Some(e.line()),
        column: Some(e.column()),
        offset: None,
    })
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        message: message.into(),
        field: Some(field.to_string()),
        line: None,
        column: None,
        offset: None,
    }
}

/// Parses an expression, attributing errors to the config field `field`.
pub fn expression(text: &str, chart: &CoordinateChart, field: &str) -> Result<Expr, CliError> {
    parse(text, chart).map_err(|e| CliError::Config {
        message: e.to_string(),
        field: Some(field.to_string()),
        line: None,
        column: None,
        offset: Some(e.offset()),
    })
}

impl SystemConfig {
    pub fn build(&self) -> Result<System, CliError> {
        let n = self.n;
        if n == 0 {
            return Err(invalid("n", "n must be at least 1"));
        }
        let chart = match &self.names {
            Some(names) => CoordinateChart::with_names(n, names),
            None => CoordinateChart::canonical(n),
        }
        .map_err(|e| invalid("names", e.to_string()))?;
        let dim = chart.dim();

        let (field, friction) = match (&self.hamiltonian, &self.components) {
            (Some(h), None) => {
                let h = expression(h, &chart, "hamiltonian")?;
                let k = self.friction_matrix()?;
                let field = VectorFieldSpec::from_hamiltonian(chart.clone(), &h, &k)
                    .map_err(|e| invalid("hamiltonian", e.to_string()))?;
                // the closed-form friction metric additionally needs separable H
                let sys = FrictionSystem::new(chart.clone(), h, FrictionMatrix::Constant(k));
                (field, Some(sys))
            }
            (None, Some(components)) => {
                if self.friction.is_some() {
                    return Err(invalid("friction", "friction needs the hamiltonian form"));
                }
                if components.len() != dim {
                    return Err(invalid(
                        "components",
                        format!("expected {dim} components, got {}", components.len()),
                    ));
                }
                let exprs = components
                    .iter()
                    .enumerate()
                    .map(|(k, c)| expression(c, &chart, &format!("components[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let field = VectorFieldSpec::new(chart.clone(), exprs)
                    .map_err(|e| invalid("components", e.to_string()))?;
                (field, None)
            }
            _ => {
                return Err(invalid(
                    "hamiltonian",
                    "give exactly one of `hamiltonian` and `components`",
                ))
            }
        };

        let mut metric_warnings = Vec::new();
        let (metric, metric_kind) = match &self.metric {
            MetricSpec::Named(name) if name == "canonical" => {
                (MetricField::canonical(n), MetricKind::Canonical)
            }
            MetricSpec::Named(name) if name == "friction-analytic" => {
                let sys = match &friction {
                    Some(Ok(sys)) => sys,
                    Some(Err(e)) => return Err(invalid("metric", e.to_string())),
                    None => {
                        return Err(invalid(
                            "metric",
                            "friction-analytic needs the hamiltonian form",
                        ))
                    }
                };
                metric_warnings = applicability_check(sys).messages();
                let m = analytic_metric(sys, 0.0, ApplicabilityPolicy::Acknowledge)
                    .map_err(|e| invalid("metric", e.to_string()))?;
                (m, MetricKind::FrictionAnalytic)
            }
            MetricSpec::Named(name) => {
                return Err(invalid("metric", format!("unknown metric {name:?}")))
            }
            MetricSpec::Matrix(rows) => (self.explicit_metric(rows, &chart)?, MetricKind::Explicit),
        };

        let integrator = IntegratorOptions {
            abs_tol: self.integrator.abs_tol,
            rel_tol: self.integrator.rel_tol,
            max_steps: self.integrator.max_steps,
        };
        if !(integrator.abs_tol > 0.0 && integrator.rel_tol > 0.0) {
            return Err(invalid("integrator", "tolerances must be positive"));
        }
        if self.series.order == 0 {
            return Err(invalid("series.order", "order must be at least 1"));
        }
        if self.splitting.steps == 0 {
            return Err(invalid("splitting.steps", "steps must be at least 1"));
        }
        let series = SeriesOptions {
            order: self.series.order,
            mode: match self.series.mode {
                ModeName::Auto => SeriesMode::Auto,
                ModeName::Linear => SeriesMode::Linear,
                ModeName::Generic => SeriesMode::Generic,
            },
            ..SeriesOptions::default()
        };
        if !(self.samples.half_width > 0.0) || !(self.samples.t_max >= 0.0) {
            return Err(invalid(
                "samples",
                "box must be positive and t_max non-negative",
            ));
        }
        let samples = SampleSpec {
            count: self.samples.count,
            seed: self.samples.seed,
            half_width: self.samples.half_width,
            include_origin: true,
        };

        let queries = self
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                if q.point.len() != dim {
                    Err(invalid(
                        &format!("queries[{i}].point"),
                        format!("expected {dim} coordinates, got {}", q.point.len()),
                    ))
                } else {
                    Ok(PhasePoint::new(q.point.clone(), q.time))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let t_grid = self
            .t_grid
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 1.0]);
        if t_grid.iter().any(|t| !t.is_finite()) {
            return Err(invalid("t_grid", "times must be finite"));
        }

        Ok(System {
            chart,
            field,
            friction: friction.and_then(|f| f.ok()),
            metric,
            metric_kind,
            metric_warnings,
            integrator,
            series,
            steps: self.splitting.steps,
            samples,
            t_max: self.samples.t_max,
            queries,
            t_grid,
        })
    }

    fn friction_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        let n = self.n;
        let k = match &self.friction {
            None => DMatrix::zeros(n, n),
            Some(FrictionSpec::Scalar(k)) => DMatrix::identity(n, n) * *k,
            Some(FrictionSpec::Diagonal(d)) => {
                if d.len() != n {
                    return Err(invalid(
                        "friction",
                        format!("expected {n} entries, got {}", d.len()),
                    ));
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
            }
            Some(FrictionSpec::Matrix(rows)) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid("friction", format!("expected a {n}x{n} matrix")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        if k.iter().any(|v| !v.is_finite()) {
            return Err(invalid("friction", "entries must be finite"));
        }
        Ok(k)
    }

    fn explicit_metric(
        &self,
        rows: &[Vec<Entry>],
        chart: &CoordinateChart,
    ) -> Result<MetricField, CliError> {
        let dim = chart.dim();
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("metric", format!("expected a {dim}x{dim} matrix")));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for (k, row) in rows.iter().enumerate() {
            for (l, entry) in row.iter().enumerate() {
                entries.push(match entry {
                    Entry::Number(v) => Expr::constant(*v),
                    Entry::Text(s) => expression(s, chart, &format!("metric[{k}][{l}]"))?,
                });
            }
        }
        let m = ExprMatrix::new(dim, entries);
        let metric = if m.is_constant() {
            MetricField::constant(
                m.eval(&vec![0.0; dim], 0.0)
                    .map_err(|e| invalid("metric", e.to_string()))?,
            )
        } else {
            MetricField::from_exprs(m)
        };
        metric.map_err(|e| invalid("metric", e.to_string()))
    }
}
