//! Run configuration files.
//!
//! The format is TOML: `key = value` lines under `[section]` headers. Every
//! key is optional; the defaults are listed on the raw structs below and in
//! the README.

use std::path::{Path, PathBuf};

use fpsi_core::assembly::{ConvectionForm, PhysicalParams, ProblemData, QuadOptions};
use fpsi_core::expr::{self, Expr};
use fpsi_core::fem::DofOptions;
use fpsi_core::monitor::TimeQuadrature;
use fpsi_core::timestepper::{Scheme, SchemeConfig};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMesh {
    nx: usize,
    ny: usize,
    split: f64,
    file: Option<String>,
    pore_degree: usize,
    volume_order: usize,
    edge_points: usize,
}

impl Default for RawMesh {
    fn default() -> Self {
        let q = QuadOptions::default();
        RawMesh {
            nx: 16,
            ny: 16,
            split: 0.5,
            file: None,
            pore_degree: 1,
            volume_order: q.volume_order,
            edge_points: q.edge_points,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawParams {
    rho_f: f64,
    mu_f: f64,
    rho_s: f64,
    mu_s: f64,
    lambda_s: f64,
    s0: f64,
    alpha_bw: f64,
    k: [[f64; 2]; 2],
    beta_slip: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        let p = PhysicalParams::default();
        RawParams {
            rho_f: p.rho_f,
            mu_f: p.mu_f,
            rho_s: p.rho_s,
            mu_s: p.mu_s,
            lambda_s: p.lambda_s,
            s0: p.s0,
            alpha_bw: p.alpha_bw,
            k: p.k,
            beta_slip: p.beta_slip,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawData {
    f_f: [String; 2],
    f_s: [String; 2],
    f_p: String,
    p_in: String,
    scale: f64,
    critical_fraction: Option<f64>,
}

impl Default for RawData {
    fn default() -> Self {
        RawData {
            f_f: ["0".into(), "0".into()],
            f_s: ["0".into(), "0".into()],
            f_p: "0".into(),
            p_in: "0".into(),
            scale: 1.0,
            critical_fraction: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScheme {
    method: String,
    dt: f64,
    t_final: f64,
    newton_tol: f64,
    newton_max_iters: usize,
    convection: bool,
}

impl Default for RawScheme {
    fn default() -> Self {
        let s = SchemeConfig::default();
        RawScheme {
            method: s.scheme.as_str().into(),
            dt: s.dt,
            t_final: s.t_final,
            newton_tol: s.newton_tol,
            newton_max_iters: s.newton_max_iters,
            convection: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConstants {
    table: Option<String>,
    levels: Vec<usize>,
    file_refinements: usize,
}

impl Default for RawConstants {
    fn default() -> Self {
        RawConstants {
            table: None,
            levels: vec![8, 16, 32],
            file_refinements: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMonitor {
    time_panels: usize,
    time_points: usize,
    identity_rtol: f64,
}

impl Default for RawMonitor {
    fn default() -> Self {
        let tq = TimeQuadrature::default();
        RawMonitor {
            time_panels: tq.panels,
            time_points: tq.points,
            identity_rtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
    vtk_stride: usize,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: "out".into(),
            vtk_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawToggles {
    skew_symmetric_convection: bool,
    emit_vtk: bool,
    emit_certificate: bool,
}

impl Default for RawToggles {
    fn default() -> Self {
        RawToggles {
            skew_symmetric_convection: false,
            emit_vtk: true,
            emit_certificate: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    mesh: RawMesh,
    params: RawParams,
    data: RawData,
    scheme: RawScheme,
    constants: RawConstants,
    monitor: RawMonitor,
    output: RawOutput,
    toggles: RawToggles,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated { nx: usize, ny: usize, split: f64 },
    File(PathBuf),
}

/// Data expressions as written in the file, kept for the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub f_f: [String; 2],
    pub f_s: [String; 2],
    pub f_p: String,
    pub p_in: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstantSource {
    Table(PathBuf),
    /// Generator resolutions `n` of `(n, n, split)` meshes.
    Levels(Vec<usize>),
    /// The file mesh and this many uniform refinements of it.
    Refinements(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub skew_symmetric_convection: bool,
    pub emit_vtk: bool,
    pub emit_certificate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub dofs: DofOptions,
    pub quad: QuadOptions,
    pub params: PhysicalParams,
    /// Unscaled data.
    pub data: ProblemData,
    pub data_source: DataSource,
    pub data_scale: f64,
    /// When set, data are rescaled to this fraction of the critical scale.
    pub critical_fraction: Option<f64>,
    pub scheme: SchemeConfig,
    pub constants: ConstantSource,
    pub time_quad: TimeQuadrature,
    pub identity_rtol: f64,
    pub output_dir: PathBuf,
    /// Write VTK every this many steps (0: initial and final state only).
    pub vtk_stride: usize,
    pub toggles: Toggles,
}

impl RunConfig {
    /// Data multiplied by `data_scale`.
    pub fn problem_data(&self) -> ProblemData {
        if self.data_scale == 1.0 {
            self.data.clone()
        } else {
            self.data.scaled(self.data_scale)
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        from_str("", Path::new(".")).expect("defaults are valid")
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    from_str(&text, base)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parse and validate configuration text. Relative paths are resolved
/// against `base`.
pub fn from_str(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut v = Checker::default();
    let cfg = v.build(raw, base);
    if v.out.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v.out))
    }
}

#[derive(Default)]
struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation {
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(key, format!("must be positive and finite (got {v})"));
        }
    }

    fn expr(&mut self, key: &str, src: &str) -> Expr {
        match expr::parse(src) {
            Ok(e) => e,
            Err(e) => {
                self.push(key, format!("expression '{src}': {e}"));
                Expr::zero()
            }
        }
    }

    fn file(&mut self, key: &str, base: &Path, p: &str) -> PathBuf {
        let path = base.join(p);
        if !path.is_file() {
            self.push(key, format!("file '{}' does not exist", path.display()));
        }
        path
    }

    fn build(&mut self, raw: RawConfig, base: &Path) -> RunConfig {
        let m = &raw.mesh;
        let mesh = match &m.file {
            Some(f) => MeshSource::File(self.file("mesh.file", base, f)),
            None => {
                if m.nx == 0 {
                    self.push("mesh.nx", "must be at least 1");
                }
                if m.ny == 0 {
                    self.push("mesh.ny", "must be at least 1");
                }
                if !(m.split > 0.0 && m.split < 1.0) {
                    self.push("mesh.split", format!("must lie strictly between 0 and 1 (got {})", m.split));
                } else if !aligned(m.split, m.ny) {
                    self.push(
                        "mesh.split",
                        format!("split*ny = {} is not an integer", m.split * m.ny as f64),
                    );
                }
                MeshSource::Generated {
                    nx: m.nx,
                    ny: m.ny,
                    split: m.split,
                }
            }
        };
        if !(1..=2).contains(&m.pore_degree) {
            self.push("mesh.pore_degree", format!("must be 1 or 2 (got {})", m.pore_degree));
        }
        if !(1..=fpsi_core::fem::quadrature::MAX_ORDER).contains(&m.volume_order) {
            self.push("mesh.volume_order", format!("must be in 1..={}", fpsi_core::fem::quadrature::MAX_ORDER));
        }
        if m.edge_points == 0 {
            self.push("mesh.edge_points", "must be at least 1");
        }

        let r = &raw.params;
        let params = PhysicalParams {
            rho_f: r.rho_f,
            mu_f: r.mu_f,
            rho_s: r.rho_s,
            mu_s: r.mu_s,
            lambda_s: r.lambda_s,
            s0: r.s0,
            alpha_bw: r.alpha_bw,
            k: r.k,
            beta_slip: r.beta_slip,
        };
        if let Err(e) = params.validate() {
            self.push(format!("params.{}", e.field), e.message);
        }

        let d = &raw.data;
        let data = ProblemData {
            f_f: [self.expr("data.f_f[0]", &d.f_f[0]), self.expr("data.f_f[1]", &d.f_f[1])],
            f_s: [self.expr("data.f_s[0]", &d.f_s[0]), self.expr("data.f_s[1]", &d.f_s[1])],
            f_p: self.expr("data.f_p", &d.f_p),
            p_in: self.expr("data.p_in", &d.p_in),
            extra: Vec::new(),
        };
        if !(d.scale >= 0.0 && d.scale.is_finite()) {
            self.push("data.scale", format!("must be non-negative and finite (got {})", d.scale));
        }
        if let Some(c) = d.critical_fraction {
            self.positive("data.critical_fraction", c);
        }

        let s = &raw.scheme;
        let method = Scheme::parse(&s.method).unwrap_or_else(|| {
            self.push(
                "scheme.method",
                format!("unknown method '{}' (expected implicit-euler or implicit-midpoint)", s.method),
            );
            Scheme::ImplicitEuler
        });
        self.positive("scheme.dt", s.dt);
        self.positive("scheme.t_final", s.t_final);
        if s.dt > 0.0 && s.t_final > 0.0 && s.t_final < s.dt * (1.0 - 1e-12) {
            self.push("scheme.t_final", "must be at least scheme.dt");
        }
        self.positive("scheme.newton_tol", s.newton_tol);
        if s.newton_max_iters == 0 {
            self.push("scheme.newton_max_iters", "must be at least 1");
        }
        let convection = match (s.convection, raw.toggles.skew_symmetric_convection) {
            (false, _) => ConvectionForm::Off,
            (true, false) => ConvectionForm::Standard,
            (true, true) => ConvectionForm::SkewSymmetric,
        };
        let scheme = SchemeConfig {
            scheme: method,
            dt: s.dt,
            t_final: s.t_final,
            newton_tol: s.newton_tol,
            newton_max_iters: s.newton_max_iters,
            convection,
            ..SchemeConfig::default()
        };

        let c = &raw.constants;
        let constants = if let Some(t) = &c.table {
            ConstantSource::Table(self.file("constants.table", base, t))
        } else if matches!(mesh, MeshSource::File(_)) {
            if c.file_refinements == 0 {
                self.push("constants.file_refinements", "must be at least 1");
            }
            ConstantSource::Refinements(c.file_refinements)
        } else {
            if c.levels.len() < 2 {
                self.push("constants.levels", "needs at least 2 levels");
            }
            if c.levels.windows(2).any(|w| w[1] <= w[0]) {
                self.push("constants.levels", "must be strictly increasing");
            }
            if let MeshSource::Generated { split, .. } = mesh {
                for (i, &n) in c.levels.iter().enumerate() {
                    if n == 0 || (split > 0.0 && split < 1.0 && !aligned(split, n)) {
                        self.push(
                            format!("constants.levels[{i}]"),
                            format!("level {n} is not aligned with mesh.split"),
                        );
                    }
                }
            }
            ConstantSource::Levels(c.levels.clone())
        };

        let mo = &raw.monitor;
        if mo.time_panels == 0 {
            self.push("monitor.time_panels", "must be at least 1");
        }
        if mo.time_points == 0 {
            self.push("monitor.time_points", "must be at least 1");
        }
        self.positive("monitor.identity_rtol", mo.identity_rtol);

        RunConfig {
            mesh,
            dofs: DofOptions {
                pore_degree: m.pore_degree,
            },
            quad: QuadOptions {
                volume_order: m.volume_order,
                edge_points: m.edge_points,
            },
            params,
            data,
            data_source: DataSource {
                f_f: d.f_f.clone(),
                f_s: d.f_s.clone(),
                f_p: d.f_p.clone(),
                p_in: d.p_in.clone(),
            },
            data_scale: d.scale,
            critical_fraction: d.critical_fraction,
            scheme,
            constants,
            time_quad: TimeQuadrature {
                panels: mo.time_panels,
                points: mo.time_points,
            },
            identity_rtol: mo.identity_rtol,
            output_dir: base.join(&raw.output.dir),
            vtk_stride: raw.output.vtk_stride,
            toggles: Toggles {
                skew_symmetric_convection: raw.toggles.skew_symmetric_convection,
                emit_vtk: raw.toggles.emit_vtk,
                emit_certificate: raw.toggles.emit_certificate,
            },
        }
    }
}

fn aligned(split: f64, n: usize) -> bool {
    let p = split * n as f64;
    let k = p.round();
    (p - k).abs() <= 1e-9 * p.max(1.0) && k >= 1.0 && k < n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = from_str("", Path::new("/tmp")).unwrap();
        assert_eq!(c.mesh, MeshSource::Generated { nx: 16, ny: 16, split: 0.5 });
        assert_eq!(c.params, PhysicalParams::default());
        assert_eq!(c.scheme.scheme, Scheme::ImplicitEuler);
        assert_eq!(c.scheme.convection, ConvectionForm::Standard);
        assert_eq!(c.constants, ConstantSource::Levels(vec![8, 16, 32]));
        assert_eq!(c.output_dir, Path::new("/tmp/out"));
        assert!(c.toggles.emit_vtk && c.toggles.emit_certificate && !c.toggles.skew_symmetric_convection);
        assert_eq!(c.data_scale, 1.0);
    }

    #[test]
    fn semantic_errors_carry_key_paths() {
        let e = from_str("[params]\nmu_f = -1\n", Path::new(".")).unwrap_err();
        assert_eq!(e.violations().len(), 1);
        assert_eq!(e.violations()[0].key, "params.mu_f");

        let text = "[data]\nf_p = \"x +\"\n[scheme]\nmethod = \"rk4\"\n[mesh]\nsplit = 0.3\n";
        let keys: Vec<String> = from_str(text, Path::new("."))
            .unwrap_err()
            .violations()
            .iter()
            .map(|v| v.key.clone())
            .collect();
        assert!(keys.contains(&"data.f_p".to_string()));
        assert!(keys.contains(&"scheme.method".to_string()));
        assert!(keys.contains(&"mesh.split".to_string()));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match from_str("[mesh]\nnx = = 3\n", Path::new(".")) {
            Err(ConfigError::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            from_str("[mesh]\nnz = 3\n", Path::new(".")),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn expressions_use_predefined_pi() {
        let c = from_str("[data]\nf_p = \"sin(pi*x)*t\"\n", Path::new(".")).unwrap();
        let v = c.data.f_p.eval(&expr::env(0.5, 0.0, 1.0));
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_files_are_reported() {
        let e = from_str("[mesh]\nfile = \"nope.msh\"\n", Path::new("/nonexistent")).unwrap_err();
        assert_eq!(e.violations()[0].key, "mesh.file");
    }
}
