use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use wtot::density::DensityMesh;
use wtot::measure::{
    extract_source_density, extract_target_measure, normalize_into_domain, read_density_csv, read_domain_csv,
    DiscreteMeasure, ParameterizedMesh,
};
use wtot::oracle::{atomize, lp_transport, AtomizedSource, Objective};
use wtot::solver::{solve as solve_transport, Mode, SolverConfig};
use wtot::stats::{
    disk_template, permutation_test, synthesize_cohort_with, CohortResult, CohortSpec, ALTERNATIVE, STATISTIC,
    TEMPLATE_RINGS,
};
use wtot::{par, Error, Result};

use crate::output::{json_err, path_value, sibling, Run, SolutionFile};
use crate::{svg, SolverArgs, SourceArgs};

/// Reads the source density, normalized to mass 1, checking it against an
/// optional domain file.
fn load_source(args: &SourceArgs) -> Result<DensityMesh> {
    let is_poff = args
        .density
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("poff"));
    let mesh = if is_poff {
        extract_source_density(&ParameterizedMesh::read_poff(&args.density)?)?
    } else {
        read_density_csv(&args.density)?.normalized()
    };
    if let Some(path) = &args.domain {
        let domain = read_domain_csv(path)?;
        let (a, b) = (domain.area(), mesh.domain().area());
        let bb = (domain.bbox(), mesh.domain().bbox());
        let tol = 1e-9 * domain.diameter();
        let same_box = (bb.0.min - bb.1.min).norm() <= tol && (bb.0.max - bb.1.max).norm() <= tol;
        if (a - b).abs() > 1e-9 * a || !same_box {
            return Err(Error::InvalidInput(format!(
                "density support (area {b}) does not match domain {} (area {a})",
                path.display()
            )));
        }
    }
    Ok(mesh)
}

fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    Ok(DiscreteMeasure::read_csv(path)?.normalized())
}

fn source_inputs(args: &SourceArgs) -> Value {
    json!({
        "density": path_value(&args.density),
        "domain": args.domain.as_deref().map(path_value),
        "measure": path_value(&args.measure),
    })
}

fn solver_config(args: &SolverArgs) -> SolverConfig {
    SolverConfig {
        epsilon: args.epsilon,
        max_iterations: args.max_iter,
        ..SolverConfig::new(args.mode)
    }
}

pub fn solve(
    source: &SourceArgs,
    solver: &SolverArgs,
    out: Option<PathBuf>,
    svg_path: Option<PathBuf>,
    px: u32,
    manifest: Option<PathBuf>,
) -> Result<()> {
    let mut run = Run::start("solve", manifest);
    let mesh = load_source(source)?;
    let nu = load_measure(&source.measure)?;
    let config = solver_config(solver);
    let sol = solve_transport(&mesh, &nu, &config)?;
    let file = SolutionFile::new(sol, mesh.domain().boundary().clone(), config.epsilon);
    if file.transform.scale != 1.0 || file.transform.offset.norm() != 0.0 {
        run.note("target points were rescaled into the domain; costs are in normalized coordinates");
    }
    run.emit_json(&file, out.as_deref())?;
    if let Some(p) = &svg_path {
        std::fs::write(p, svg::render(&file, px))?;
        run.record_output(p);
    }
    let summary = json!({
        "mode": file.mode,
        "n_sites": file.n_sites,
        "cost": file.cost,
        "residual": file.residual,
        "iterations": file.iterations,
    });
    run.finish(out.as_deref(), source_inputs(source), serde_json::to_value(config).map_err(json_err)?, summary)
}

#[derive(Debug, Serialize)]
struct OracleReport {
    grid: usize,
    atoms: usize,
    targets: usize,
    min: f64,
    max: f64,
    min_pivots: usize,
    max_pivots: usize,
}

pub fn oracle(source: &SourceArgs, grid: usize, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::start("oracle", manifest);
    let mesh = load_source(source)?;
    let nu = load_measure(&source.measure)?;
    // same preprocessing as solve, so the two costs are comparable
    let (merged, _) = nu.merge_duplicates();
    let (points, _) = normalize_into_domain(merged.points(), mesh.domain())?;
    let nu = DiscreteMeasure::new(points, merged.weights().to_vec())?;
    let src: AtomizedSource = atomize(&mesh, grid)?;
    let min = lp_transport(&src, &nu, Objective::Min)?;
    let max = lp_transport(&src, &nu, Objective::Max)?;
    let report = OracleReport {
        grid,
        atoms: src.len(),
        targets: nu.len(),
        min: min.cost,
        max: max.cost,
        min_pivots: min.pivots,
        max_pivots: max.pivots,
    };
    run.emit_json(&report, out.as_deref())?;
    let summary = json!({ "min": report.min, "max": report.max });
    run.finish(out.as_deref(), source_inputs(source), json!({ "grid": grid }), summary)
}

pub fn render(solution: &Path, px: u32, out: Option<PathBuf>, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::start("render", manifest);
    if px < 16 {
        return Err(Error::InvalidInput("--px must be at least 16".into()));
    }
    let text = std::fs::read_to_string(solution)?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: solution.display().to_string(),
        message: e.to_string(),
    })?;
    if file.cells.len() != file.sites.len() {
        return Err(Error::Parse {
            context: solution.display().to_string(),
            message: "cells and sites differ in length".into(),
        });
    }
    run.emit_text(&svg::render(&file, px), out.as_deref())?;
    let cells = file.cells.iter().filter(|c| !c.is_empty()).count();
    run.finish(
        out.as_deref(),
        json!({ "solution": path_value(solution) }),
        json!({ "px": px }),
        json!({ "cells": cells }),
    )
}

pub struct SynthArgs {
    pub n_subjects: usize,
    pub amplitude: f64,
    pub nuisance: f64,
    pub seed: u64,
    pub prefix: String,
    pub template: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn synth(args: SynthArgs, manifest: Option<PathBuf>) -> Result<()> {
    let mut run = Run::start("synth", manifest);
    let spec = CohortSpec {
        n_subjects: args.n_subjects,
        amplitude: args.amplitude,
        nuisance: args.nuisance,
        seed: args.seed,
    };
    let subjects = synthesize_cohort_with(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    if let Some(t) = &args.template {
        disk_template(TEMPLATE_RINGS).save_poff(t)?;
        run.record_output(t);
    }
    for (k, s) in subjects.iter().enumerate() {
        let p = args.out.join(format!("{}_{k:03}.poff", args.prefix));
        s.save_poff(&p)?;
        run.record_output(&p);
    }
    run.finish(
        Some(&args.out),
        json!({}),
        serde_json::to_value(spec).map_err(json_err)?,
        json!({ "subjects": args.n_subjects, "template_vertices": disk_template(TEMPLATE_RINGS).vertices2d.len() }),
    )
}

pub struct CohortArgs {
    pub template: PathBuf,
    pub group_a: PathBuf,
    pub group_b: PathBuf,
    pub n_perm: u64,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub out: Option<PathBuf>,
    pub costs: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct SubjectRow {
    group: &'static str,
    file: String,
    boundary_vertices: usize,
    area: Option<f64>,
    volume: Option<f64>,
    ot: Option<f64>,
    wt: Option<f64>,
    errors: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FeatureResult {
    #[serde(flatten)]
    result: Option<CohortResult>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Features {
    area: FeatureResult,
    volume: FeatureResult,
    ot: FeatureResult,
    wt: FeatureResult,
}

#[derive(Debug, Serialize)]
struct CohortReport {
    statistic: &'static str,
    alternative: &'static str,
    n_permutations: u64,
    seed: u64,
    features: Features,
    subjects: Vec<SubjectRow>,
    substitutions: Vec<&'static str>,
}

const VOLUME_NOTE: &str =
    "volume: cortical volume is not computable from surface input; the feature is the total target measure mass before normalization";

/// `*.poff` files in `dir`, sorted, leaving out the template itself.
fn list_meshes(dir: &Path, template: &Path) -> Result<Vec<PathBuf>> {
    let template = template.canonicalize()?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("poff")))
        .filter(|p| p.canonicalize().map_or(true, |c| c != template))
        .collect();
    files.sort();
    Ok(files)
}

fn subject_row(group: &'static str, path: &Path, template: &DensityMesh, eps: f64, max_iter: usize) -> SubjectRow {
    let mut row = SubjectRow {
        group,
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        boundary_vertices: 0,
        area: None,
        volume: None,
        ot: None,
        wt: None,
        errors: Vec::new(),
    };
    let mesh = match ParameterizedMesh::read_poff(path) {
        Ok(m) => m,
        Err(e) => {
            row.errors.push(format!("{}: {e}", e.kind()));
            return row;
        }
    };
    row.boundary_vertices = mesh.boundary_vertices().iter().filter(|&&b| b).count();
    row.area = Some(mesh.area3d());
    // sum of the one-third face areas over vertices
    row.volume = Some((0..mesh.faces.len()).map(|f| mesh.face_area3d(f)).sum());
    let nu = match extract_target_measure(&mesh) {
        Ok(nu) => nu,
        Err(e) => {
            row.errors.push(format!("{}: {e}", e.kind()));
            return row;
        }
    };
    for mode in [Mode::Ot, Mode::Wt] {
        let config = SolverConfig {
            epsilon: eps,
            max_iterations: max_iter,
            ..SolverConfig::new(mode)
        };
        match solve_transport(template, &nu, &config) {
            Ok(s) => match mode {
                Mode::Ot => row.ot = Some(s.cost),
                Mode::Wt => row.wt = Some(s.cost),
            },
            Err(e) => row.errors.push(format!("{} {}: {e}", mode.as_str(), e.kind())),
        }
    }
    row
}

pub fn cohort(args: CohortArgs) -> Result<()> {
    let mut run = Run::start("cohort", args.manifest.clone());
    let template = extract_source_density(&ParameterizedMesh::read_poff(&args.template)?)?;
    let files_a = list_meshes(&args.group_a, &args.template)?;
    let files_b = list_meshes(&args.group_b, &args.template)?;
    for (name, files) in [("A", &files_a), ("B", &files_b)] {
        if files.is_empty() {
            return Err(Error::InvalidInput(format!("group {name} has no .poff meshes")));
        }
    }
    let jobs: Vec<(&'static str, &PathBuf)> = files_a
        .iter()
        .map(|p| ("a", p))
        .chain(files_b.iter().map(|p| ("b", p)))
        .collect();
    let rows = par::map_slice(&jobs, |&(g, p)| subject_row(g, p, &template, args.epsilon, args.max_iter));
    let failed = rows.iter().filter(|r| !r.errors.is_empty()).count();
    if failed > 0 {
        log::warn!("{failed} subjects had errors; see the report");
        run.note(format!("{failed} subjects had errors and are left out of the affected features"));
    }

    type Getter = fn(&SubjectRow) -> Option<f64>;
    let getters: [(&str, Getter); 4] = [
        ("area", |r| r.area),
        ("volume", |r| r.volume),
        ("ot", |r| r.ot),
        ("wt", |r| r.wt),
    ];
    let mut features = Vec::new();
    for (name, get) in getters {
        let pick = |g: &str| -> Vec<f64> { rows.iter().filter(|r| r.group == g).filter_map(get).collect() };
        let (a, b) = (pick("a"), pick("b"));
        let fr = match permutation_test(&a, &b, args.n_perm, args.seed) {
            Ok(r) => FeatureResult {
                result: Some(r),
                error: None,
            },
            Err(e) => FeatureResult {
                result: None,
                error: Some(e.to_string()),
            },
        };
        features.push((name, fr));
    }

    let costs_path = args
        .costs
        .clone()
        .or_else(|| args.out.as_deref().map(|o| sibling(o, "costs.csv")));
    if let Some(p) = &costs_path {
        write_costs(p, &rows)?;
        run.record_output(p);
    }
    let summary: Value = features
        .iter()
        .map(|(k, f)| (k.to_string(), json!(f.result.as_ref().map(|r| r.p_value))))
        .collect::<serde_json::Map<_, _>>()
        .into();
    let mut it = features.into_iter().map(|(_, f)| f);
    let mut next = || it.next().expect("four features");
    let features = Features {
        area: next(),
        volume: next(),
        ot: next(),
        wt: next(),
    };
    let report = CohortReport {
        statistic: STATISTIC,
        alternative: ALTERNATIVE,
        n_permutations: args.n_perm,
        seed: args.seed,
        features,
        subjects: rows,
        substitutions: vec![VOLUME_NOTE],
    };
    run.note(VOLUME_NOTE);
    run.note("boundary vertices receive measure by the same one-third area rule; counts are in the report");
    run.emit_json(&report, args.out.as_deref())?;
    run.finish(
        args.out.as_deref(),
        json!({
            "template": path_value(&args.template),
            "group_a": path_value(&args.group_a),
            "group_b": path_value(&args.group_b),
        }),
        json!({
            "n_perm": args.n_perm,
            "seed": args.seed,
            "epsilon": args.epsilon,
            "max_iter": args.max_iter,
            "statistic": STATISTIC,
            "alternative": ALTERNATIVE,
        }),
        summary,
    )
}

fn write_costs(path: &Path, rows: &[SubjectRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "file", "area", "volume", "ot", "wt"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.group.to_string(),
            r.file.clone(),
            cell(r.area),
            cell(r.volume),
            cell(r.ot),
            cell(r.wt),
        ])?;
    }
    w.flush()?;
    Ok(())
}
