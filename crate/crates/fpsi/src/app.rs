//! Subcommand implementations. Each returns the process exit code and
//! writes its report to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use fpsi_core::assembly::{Discretization, ProblemData};
use fpsi_core::constants::{self, ConstantTable, Constants};
use fpsi_core::mesh::{build_rect_two_domain, validate, Mesh};
use fpsi_core::monitor::{
    bisect_scale, check_small_data, critical_scale, energy_report, scaled_small_data, DataFunctionals,
    ReportOptions, SmallData,
};
use fpsi_core::timestepper::{run as integrate, Scheme};
use fpsi_core::verify::{convergence_study, expected_rates, CaseId, StudyConfig};
use serde_json::{json, Value};

use crate::config::{parse_config, ConstantSource, MeshSource, RunConfig};
use crate::output::{self, sha256_hex, OutputError};
use crate::{mesh_io, vtk};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;

/// Shortfall allowed on observed convergence rates under `--strict`.
pub const RATE_SLACK: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad arguments, configuration or input files.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => EXIT_USAGE,
            _ => EXIT_SOLVER,
        }
    }
}

fn input(e: impl std::fmt::Display) -> AppError {
    AppError::Input(e.to_string())
}

fn solver(e: impl std::fmt::Display) -> AppError {
    AppError::Solver(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        AppError::Output(OutputError::Io {
            path: dir.display().to_string(),
            source,
        })
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, AppError> {
    parse_config(path).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

pub fn build_mesh(src: &MeshSource) -> Result<Mesh, AppError> {
    match src {
        MeshSource::Generated { nx, ny, split } => build_rect_two_domain(*nx, *ny, *split).map_err(input),
        MeshSource::File(p) => mesh_io::read_mesh(p).map_err(input),
    }
}

pub fn discretize(cfg: &RunConfig, mesh: Mesh) -> Result<Discretization, AppError> {
    Discretization::new(mesh, cfg.params.clone(), cfg.dofs, cfg.quad).map_err(input)
}

/// Meshes and labels of the constant refinement sequence.
pub fn constant_levels(cfg: &RunConfig, mesh: &Mesh) -> Result<(Vec<Discretization>, Vec<String>), AppError> {
    let (meshes, labels): (Vec<Mesh>, Vec<String>) = match (&cfg.constants, &cfg.mesh) {
        (ConstantSource::Refinements(r), _) => {
            let mut ms = vec![mesh.clone()];
            for _ in 0..*r {
                let next = ms.last().unwrap().refine_uniform();
                ms.push(next);
            }
            let labels = (0..=*r)
                .map(|k| if k == 0 { "file".into() } else { format!("file+{k}r") })
                .collect();
            (ms, labels)
        }
        (ConstantSource::Levels(levels), MeshSource::Generated { split, .. }) => {
            let ms = levels
                .iter()
                .map(|&n| build_rect_two_domain(n, n, *split).map_err(input))
                .collect::<Result<Vec<_>, _>>()?;
            (ms, levels.iter().map(|n| n.to_string()).collect())
        }
        (ConstantSource::Levels(_), MeshSource::File(_)) => {
            return Err(AppError::Input("constants.levels needs a generated mesh".into()))
        }
        (ConstantSource::Table(_), _) => {
            let ms = vec![mesh.clone(), mesh.refine_uniform()];
            (ms, vec!["config".into(), "config+1r".into()])
        }
    };
    let discs = meshes
        .into_iter()
        .map(|m| discretize(cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((discs, labels))
}

pub struct ConstantInfo {
    pub constants: Constants,
    pub mesh_level: String,
    pub provenance: Value,
    /// Present when the constants were computed in this run.
    pub table: Option<(ConstantTable, Vec<String>)>,
}

pub fn compute_constants(cfg: &RunConfig, mesh: &Mesh) -> Result<ConstantInfo, AppError> {
    let (levels, labels) = constant_levels(cfg, mesh)?;
    let table = constants::report(&levels).map_err(solver)?;
    let constants = Constants::from_table(&table).ok_or_else(|| solver("constant table is incomplete"))?;
    Ok(ConstantInfo {
        constants,
        mesh_level: labels.last().cloned().unwrap_or_default(),
        provenance: json!({ "source": "computed", "levels": labels }),
        table: Some((table, labels)),
    })
}

pub fn obtain_constants(cfg: &RunConfig, mesh: &Mesh) -> Result<ConstantInfo, AppError> {
    match &cfg.constants {
        ConstantSource::Table(p) => {
            let (constants, mesh_level) = output::read_constant_table(p).map_err(input)?;
            let bytes = std::fs::read(p)?;
            Ok(ConstantInfo {
                constants,
                mesh_level,
                provenance: json!({
                    "source": "file",
                    "path": p.display().to_string(),
                    "sha256": sha256_hex(&bytes),
                }),
                table: None,
            })
        }
        _ => compute_constants(cfg, mesh),
    }
}

fn print_table(out: &mut dyn Write, table: &ConstantTable, labels: &[String]) -> std::io::Result<()> {
    writeln!(out, "{:<6} {:>14} {:>10} {:>8} {:>11}", "kind", "value", "mesh", "dofs", "rel_change")?;
    for e in &table.rows {
        let f = e.finest();
        let rel = e.previous().map(|p| (f.value - p.value) / p.value);
        writeln!(
            out,
            "{:<6} {:>14.8e} {:>10} {:>8} {:>11}",
            e.kind.as_str(),
            f.value,
            labels.get(f.level).map(String::as_str).unwrap_or(""),
            f.dofs,
            rel.map(|r| format!("{r:+.3e}")).unwrap_or_default()
        )?;
    }
    for w in table.warnings() {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

struct Manifest {
    entries: Vec<(String, Value)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(command: &str) -> Manifest {
        Manifest {
            entries: vec![
                ("command".into(), json!(command)),
                (
                    "versions".into(),
                    json!({ "fpsi": env!("CARGO_PKG_VERSION"), "fpsi_core": fpsi_core::VERSION }),
                ),
            ],
            outputs: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, v: Value) {
        self.entries.push((key.into(), v));
    }

    fn write(mut self, dir: &Path) -> Result<PathBuf, AppError> {
        self.outputs.sort();
        let mut files = Vec::new();
        for p in &self.outputs {
            let bytes = std::fs::read(p)?;
            let name = p.strip_prefix(dir).unwrap_or(p).display().to_string();
            files.push(json!({ "file": name, "sha256": sha256_hex(&bytes) }));
        }
        let mut map = serde_json::Map::new();
        for (k, v) in self.entries {
            map.insert(k, v);
        }
        map.insert("outputs".into(), Value::Array(files));
        let path = dir.join("manifest.json");
        output::write_text(&path, &output::to_pretty(&Value::Object(map)))?;
        Ok(path)
    }
}

fn mesh_entry(src: &MeshSource, mesh: &Mesh) -> Value {
    let text = mesh_io::to_string(mesh);
    let source = match src {
        MeshSource::Generated { nx, ny, split } => json!({ "generator": { "nx": nx, "ny": ny, "split": split } }),
        MeshSource::File(p) => json!({ "file": p.display().to_string() }),
    };
    json!({
        "source": source,
        "sha256": sha256_hex(text.as_bytes()),
        "vertices": mesh.vertices.len(),
        "triangles": mesh.triangles.len(),
    })
}

fn config_entry(path: &Path) -> Result<Value, AppError> {
    let bytes = std::fs::read(path)?;
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }))
}

/// Data scaled by the configured factor and, if requested, to a fraction
/// of the critical scale. Returns the data and the total factor applied to
/// the configured expressions.
pub fn effective_data(
    cfg: &RunConfig,
    disc: &Discretization,
    k: &Constants,
) -> Result<(ProblemData, f64), AppError> {
    let base = cfg.problem_data();
    let Some(frac) = cfg.critical_fraction else {
        return Ok((base, cfg.data_scale));
    };
    let f = DataFunctionals::new(disc, &base, k, cfg.scheme.t_final, cfg.time_quad).map_err(solver)?;
    match critical_scale(&check_small_data(&f, &cfg.params, k)) {
        Some(s) => Ok((base.scaled(frac * s), cfg.data_scale * frac * s)),
        None => Ok((base, cfg.data_scale)),
    }
}

pub fn cmd_run(config: &Path, strict: bool, out: &mut dyn Write) -> Result<i32, AppError> {
    let cfg = load_config(config)?;
    let mesh = build_mesh(&cfg.mesh)?;
    let disc = discretize(&cfg, mesh.clone())?;
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let mut manifest = Manifest::new("run");
    manifest.set("config", config_entry(config)?);
    manifest.set("mesh", mesh_entry(&cfg.mesh, &mesh));

    let need_constants = cfg.toggles.emit_certificate || cfg.critical_fraction.is_some();
    let info = if need_constants {
        let info = obtain_constants(&cfg, &mesh)?;
        let mut prov = info.provenance.clone();
        if let Some((table, labels)) = &info.table {
            let p = dir.join("constants.csv");
            output::write_constant_table(table, labels, &p)?;
            prov["table_sha256"] = json!(sha256_hex(&std::fs::read(&p)?));
            manifest.outputs.push(p);
        }
        manifest.set("constants", prov);
        Some(info)
    } else {
        manifest.set("constants", json!({ "source": "not used" }));
        None
    };

    let (data, scale) = match &info {
        Some(i) => effective_data(&cfg, &disc, &i.constants)?,
        None => (cfg.problem_data(), cfg.data_scale),
    };
    manifest.set("data_scale", json!(scale));
    let mesh_path = dir.join("mesh.fsimesh");
    mesh_io::write_mesh(&mesh, &mesh_path).map_err(solver)?;
    manifest.outputs.push(mesh_path);

    let traj = match integrate(&disc, &data, cfg.scheme, None) {
        Ok(t) => t,
        Err(f) => {
            writeln!(out, "solver failure at step {}: {}", f.step, f.error)?;
            manifest.set("failure", json!({ "step": f.step, "error": f.error.to_string() }));
            manifest.write(&dir)?;
            return Ok(EXIT_SOLVER);
        }
    };
    let iters: usize = traj.steps.iter().map(|s| s.iterations).sum();
    writeln!(
        out,
        "integrated {} steps of {} to t = {} ({} Newton iterations)",
        traj.steps.len(),
        cfg.scheme.scheme.as_str(),
        traj.states.last().unwrap().t,
        iters
    )?;
    manifest.set("steps", json!(traj.steps.len()));

    if cfg.toggles.emit_vtk {
        let last = traj.states.len() - 1;
        for (n, s) in traj.states.iter().enumerate() {
            let keep = n == 0 || n == last || (cfg.vtk_stride > 0 && n % cfg.vtk_stride == 0);
            if keep {
                let p = dir.join(format!("state_{n:05}.vtk"));
                vtk::emit_vtk(&disc, s, &p).map_err(solver)?;
                manifest.outputs.push(p);
            }
        }
    }

    let mut code = EXIT_OK;
    if let (true, Some(info)) = (cfg.toggles.emit_certificate, &info) {
        let t_final = traj.states.last().unwrap().t;
        let f = DataFunctionals::new(&disc, &data, &info.constants, t_final, cfg.time_quad).map_err(solver)?;
        let opts = ReportOptions {
            convection: cfg.scheme.convection,
            identity_rtol: cfg.identity_rtol,
        };
        let report = energy_report(&disc, &traj, &f, &info.constants, &info.mesh_level, opts).map_err(solver)?;
        let p = dir.join("certificate.csv");
        output::write_certificate_csv(&report, &p)?;
        manifest.outputs.push(p);
        let summary = output::summary_json(&report, scale);
        let p = dir.join("summary.json");
        output::write_text(&p, &output::to_pretty(&summary))?;
        manifest.outputs.push(p);
        writeln!(out, "{} ({}, {})", report.label, report.status(), report.regime())?;
        out.write_all(output::to_pretty(&summary).as_bytes())?;
        if strict && !output::all_flags_ok(&report) {
            code = EXIT_CERTIFICATE;
        }
    }
    let m = manifest.write(&dir)?;
    writeln!(out, "wrote {}", m.display())?;
    Ok(code)
}

pub fn cmd_constants(config: &Path, out: &mut dyn Write) -> Result<i32, AppError> {
    let cfg = load_config(config)?;
    let mesh = build_mesh(&cfg.mesh)?;
    let info = compute_constants(&cfg, &mesh)?;
    let (table, labels) = info.table.as_ref().expect("computed constants carry a table");
    print_table(out, table, labels)?;
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let p = dir.join("constants.csv");
    output::write_constant_table(table, labels, &p)?;
    let mut manifest = Manifest::new("constants");
    manifest.set("config", config_entry(config)?);
    manifest.set("mesh", mesh_entry(&cfg.mesh, &mesh));
    manifest.set("constants", info.provenance.clone());
    manifest.outputs.push(p.clone());
    manifest.write(&dir)?;
    writeln!(out, "wrote {}", p.display())?;
    Ok(EXIT_OK)
}

/// Small-data check of the configured data at `scheme.t_final`.
pub fn small_data_for(cfg: &RunConfig, mesh: &Mesh) -> Result<(SmallData, Option<f64>, ConstantInfo), AppError> {
    let disc = discretize(cfg, mesh.clone())?;
    let info = obtain_constants(cfg, mesh)?;
    let f = DataFunctionals::new(&disc, &cfg.problem_data(), &info.constants, cfg.scheme.t_final, cfg.time_quad)
        .map_err(solver)?;
    let sd = check_small_data(&f, &cfg.params, &info.constants);
    Ok((sd, critical_scale(&sd), info))
}

pub fn cmd_check_small_data(config: &Path, strict: bool, out: &mut dyn Write) -> Result<i32, AppError> {
    let cfg = load_config(config)?;
    let mesh = build_mesh(&cfg.mesh)?;
    let (sd, s_star, info) = small_data_for(&cfg, &mesh)?;
    let k = &info.constants;
    writeln!(out, "small_data_ok = {}", sd.ok)?;
    writeln!(out, "lhs = {:?}", sd.lhs)?;
    writeln!(out, "rhs = {:?}", sd.rhs)?;
    writeln!(out, "margin = {:?}", sd.margin)?;
    writeln!(
        out,
        "constants: Sf = {:?}, Kf = {:?} (mesh level {})",
        k.sf, k.kf, info.mesh_level
    )?;
    match s_star {
        Some(s) => {
            let bis = bisect_scale(|x| scaled_small_data(&sd, x).lhs, sd.rhs);
            writeln!(out, "s_star = {s:?}")?;
            if let Some(b) = bis {
                writeln!(out, "s_star_bisection = {b:?}")?;
            }
        }
        None => writeln!(out, "s_star = none (zero data)")?,
    }
    Ok(if strict && !sd.ok { EXIT_CERTIFICATE } else { EXIT_OK })
}

pub fn cmd_validate_mesh(path: &Path, out: &mut dyn Write) -> Result<i32, AppError> {
    let mesh = mesh_io::read_mesh(path).map_err(input)?;
    let v = validate(&mesh);
    writeln!(
        out,
        "{}: {} vertices, {} triangles, {} facets",
        path.display(),
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.facets.len()
    )?;
    if v.is_empty() {
        writeln!(out, "valid")?;
        return Ok(EXIT_OK);
    }
    for x in &v {
        writeln!(out, "{x}")?;
    }
    writeln!(out, "{} violation(s)", v.len())?;
    Ok(EXIT_USAGE)
}

#[derive(Debug, Clone)]
pub struct MmsOptions {
    pub out_dir: PathBuf,
    pub coarsest: usize,
    pub scheme: Scheme,
    pub pore_degree: usize,
    pub strict: bool,
}

pub fn mms_levels(coarsest: usize, count: usize) -> Vec<usize> {
    (0..count).map(|k| coarsest << k).collect()
}

pub fn cmd_mms(case: &str, levels: usize, opts: &MmsOptions, out: &mut dyn Write) -> Result<i32, AppError> {
    let id = CaseId::parse(case).map_err(input)?;
    if levels < 3 {
        return Err(AppError::Input("mms needs at least 3 levels".into()));
    }
    if opts.coarsest < 2 || opts.coarsest % 2 != 0 {
        return Err(AppError::Input("--coarsest must be an even number of cells".into()));
    }
    if !(1..=2).contains(&opts.pore_degree) {
        return Err(AppError::Input("--pore-degree must be 1 or 2".into()));
    }
    let cfg = StudyConfig {
        scheme: opts.scheme,
        pore_degree: opts.pore_degree,
        ..StudyConfig::default()
    };
    let lv = mms_levels(opts.coarsest, levels);
    let table = convergence_study(id, &lv, &cfg).map_err(solver)?;
    let expected = expected_rates(cfg.pore_degree);
    let summary = output::convergence_summary(&table, expected);
    out.write_all(summary.as_bytes())?;

    create_dir(&opts.out_dir)?;
    let csv = opts.out_dir.join("convergence.csv");
    output::write_convergence_csv(&table, &csv)?;
    let txt = opts.out_dir.join("summary.txt");
    output::write_text(&txt, &summary)?;
    let mut manifest = Manifest::new("mms");
    manifest.set(
        "study",
        json!({
            "case": id.as_str(),
            "levels": lv,
            "scheme": cfg.scheme.as_str(),
            "dt_coeff": cfg.dt_coeff,
            "t_final": cfg.t_final,
            "pore_degree": cfg.pore_degree,
            "newton_tol": cfg.newton_tol,
        }),
    );
    manifest.outputs.push(csv.clone());
    manifest.outputs.push(txt);
    manifest.write(&opts.out_dir)?;
    writeln!(out, "wrote {}", csv.display())?;

    if table.failure.is_some() {
        return Ok(EXIT_SOLVER);
    }
    let short = table.shortfalls(expected, RATE_SLACK);
    for s in &short {
        writeln!(out, "shortfall: {s}")?;
    }
    Ok(if opts.strict && !short.is_empty() {
        EXIT_CERTIFICATE
    } else {
        EXIT_OK
    })
}
