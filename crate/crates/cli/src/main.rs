//! `rdao`: phantom generation, model sizes, the CPG heuristic, MIP solves and
//! plan evaluation from the command line.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdao::cpg::build_surrogate;
use rdao::dataset::{spec_entries, ADVERSARIAL_SEED};
use rdao::evaluate::{minimum_target_dose, vertex_underdoses};
use rdao::lp_format::write_lp;
use rdao::plan::{check_deliverability, fluence_csv, fluence_pgm};
use rdao::robust::{build_fmo, build_rfmo, fluence_from_assignment};
use rdao::solver::{solve, SolveOptions, SolveStatus};
use rdao::{
    assemble, decode, dvh, evaluate_plan, generate_phantom, generate_warm_start, load_dataset, normalize_plan, run_cpg, save_dataset,
    size_only, Allocation, BeamGeometry, Dataset, Error, FluencePlan, NormalizationReference, PhantomSpec, PlanningConfig,
    SymmetryMode, UncertaintySet, Variant,
};

use manifest::{RunManifest, RUN_MANIFEST_FILE};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_LIMIT: u8 = 5;

#[derive(Parser)]
#[command(name = "rdao", version, about = "Robust direct aperture optimization for breathing-motion IMRT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic phantom dataset.
    Phantom(PhantomArgs),
    /// Report constraint, variable and binary counts of model variants.
    Size(SizeArgs),
    /// Run the candidate plan generation heuristic.
    Cpg(CpgArgs),
    /// Solve a model variant with the built-in solver.
    Solve(SolveArgs),
    /// Score a plan: dose statistics, DVH curves, optional normalization.
    Evaluate(EvaluateArgs),
    /// Replay a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the shipped adversarial phantom (fixes every other setting).
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value_t = 2)]
    angles: usize,
    #[arg(long, required_unless_present = "adversarial")]
    rows: Option<usize>,
    #[arg(long, required_unless_present = "adversarial")]
    cols: Option<usize>,
    #[arg(long, default_value_t = 6)]
    apertures: usize,
    #[arg(long, required_unless_present = "adversarial")]
    targets: Option<usize>,
    #[arg(long, default_value_t = 0)]
    healthy: usize,
    #[arg(long, default_value_t = 5)]
    phases: usize,
    #[arg(long, default_value_t = 0.5)]
    motion_amplitude: f64,
    #[arg(long, default_value_t = 42.4)]
    prescription: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AllocationArg {
    Decision,
    EqualBlocks,
}

/// Model settings shared by every planning command.
#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "DAO", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, default_value_t = 0.7)]
    c_target: f64,
    #[arg(long, default_value_t = 0.3)]
    c_healthy: f64,
    /// Aperture budget; defaults to the dataset's.
    #[arg(long)]
    apertures: Option<usize>,
    /// Symmetric deviation around the nominal breathing proportions.
    #[arg(long, default_value_t = 0.1)]
    deviation: f64,
    /// Nominal proportions, comma separated; defaults to the breathing pattern.
    #[arg(long, value_delimiter = ',')]
    nominal: Option<Vec<f64>>,
    #[arg(long)]
    big_m: Option<f64>,
    /// none, global_sort, per_angle_sort or two_angle_sort; defaults by angle count.
    #[arg(long, value_parser = parse_symmetry)]
    symmetry: Option<SymmetryMode>,
    #[arg(long, value_enum, default_value_t = AllocationArg::Decision)]
    allocation: AllocationArg,
}

#[derive(Args)]
struct SizeArgs {
    /// Read dimensions from a dataset instead of the flags below.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// A variant name or `all`.
    #[arg(long, default_value = "all")]
    variant: String,
    #[arg(long, default_value_t = 2)]
    angles: usize,
    #[arg(long, required_unless_present = "dataset")]
    rows: Option<usize>,
    #[arg(long, required_unless_present = "dataset")]
    cols: Option<usize>,
    #[arg(long, default_value_t = 6)]
    apertures: usize,
    #[arg(long, required_unless_present = "dataset")]
    targets: Option<usize>,
    #[arg(long, default_value_t = 5)]
    phases: usize,
    /// Also write the report and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Build the full model from the dataset and write it in LP format.
    #[arg(long, requires = "dataset")]
    export_lp: Option<PathBuf>,
}

#[derive(Args)]
struct CpgArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[command(flatten)]
    model: ModelArgs,
    /// Write the surrogate LP here.
    #[arg(long)]
    export_lp: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Warm {
    None,
    Cpg,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Warm::None)]
    warm: Warm,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Stop at this relative gap (a fraction).
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[command(flatten)]
    model: ModelArgs,
    /// Write the built model here in LP format.
    #[arg(long)]
    export_lp: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Reference {
    Prescription,
    /// The plan's minimum target dose at the nominal proportions.
    Minimum,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Realized proportions, comma separated; defaults to the nominal ones.
    #[arg(long, value_delimiter = ',')]
    p_real: Option<Vec<f64>>,
    /// Scale the plan so 95% of the target gets 95% of the reference dose.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value_t = Reference::Prescription)]
    reference: Reference,
    /// Deliverability rules to check the plan against.
    #[arg(long, default_value = "DAO", value_parser = parse_variant)]
    variant: Variant,
    /// Deviation of the set whose vertices are checked for underdosing.
    #[arg(long, default_value_t = 0.1)]
    deviation: f64,
}

#[derive(Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Replace the recorded output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_symmetry(s: &str) -> Result<SymmetryMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Spec(_) | Error::Range { .. } | Error::InfeasibleSet(_) | Error::Invalid(_) => EXIT_USAGE,
            Error::Shape(_) | Error::NotFound(_) | Error::Corruption(_) | Error::Format(_) | Error::Io(_) | Error::Normalize(_) => EXIT_DATA,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Limit(_) => EXIT_LIMIT,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(args: Vec<String>) -> Outcome {
    let cli = match Cli::try_parse_from(std::iter::once("rdao".to_string()).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure { code, message: "invalid arguments".into() }) };
        }
    };
    let start = Instant::now();
    match cli.command {
        Command::Phantom(a) => cmd_phantom(a, args, start),
        Command::Size(a) => cmd_size(a, args, start),
        Command::Cpg(a) => cmd_cpg(a, args, start),
        Command::Solve(a) => cmd_solve(a, args, start),
        Command::Evaluate(a) => cmd_evaluate(a, args, start),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn finish(mut manifest: RunManifest, dir: &Path, start: Instant) -> Outcome {
    manifest.wall_time = start.elapsed().as_secs_f64();
    manifest.write(dir)?;
    Ok(())
}

fn cmd_phantom(a: PhantomArgs, args: Vec<String>, start: Instant) -> Outcome {
    let spec = if a.adversarial {
        rdao::dataset::adversarial_spec()
    } else {
        let (rows, cols, targets) = (a.rows.unwrap_or(0), a.cols.unwrap_or(0), a.targets.unwrap_or(0));
        let geometry = BeamGeometry::new(a.angles, rows, cols, a.apertures)?;
        PhantomSpec {
            motion_amplitude: a.motion_amplitude,
            prescription: a.prescription,
            ..PhantomSpec::new(a.seed, geometry, targets, a.healthy, a.phases)
        }
    };
    let (dose, st, g) = generate_phantom(&spec)?;
    let dm = save_dataset(&a.out, &dose, &st, &g, spec_entries(&spec))?;
    let mut m = RunManifest::new("phantom", args);
    m.seed = Some(spec.seed);
    m.dataset_checksum = Some(format!("{:016x}", dm.checksum));
    if a.adversarial {
        m.set("adversarial_seed", ADVERSARIAL_SEED);
    }
    println!("dataset {} checksum {:016x}", a.out.display(), dm.checksum);
    finish(m, &a.out, start)
}

fn variants(name: &str) -> std::result::Result<Vec<Variant>, Failure> {
    if name.eq_ignore_ascii_case("all") {
        Ok(Variant::ALL.to_vec())
    } else {
        Ok(vec![parse_variant(name).map_err(usage)?])
    }
}

fn cmd_size(a: SizeArgs, args: Vec<String>, start: Instant) -> Outcome {
    let list = variants(&a.variant)?;
    let mut m = RunManifest::new("size", args);
    let (geom, targets, phases, data) = match &a.dataset {
        Some(dir) => {
            let d = load_dataset(dir)?;
            m.dataset_checksum = Some(format!("{:016x}", d.manifest.checksum));
            (d.geometry, d.structures.num_target(), d.dose.num_phases(), Some(d))
        }
        None => {
            let g = BeamGeometry::new(a.angles, a.rows.unwrap_or(0), a.cols.unwrap_or(0), a.apertures)?;
            (g, a.targets.unwrap_or(0), a.phases, None)
        }
    };
    let mut text = String::new();
    for v in &list {
        let r = size_only(&geom, targets, phases, *v, &PlanningConfig::default_for(&geom, *v))?;
        text.push_str(&format!("{} {} {} {}\n", v, r.constraints, r.variables, r.binaries));
    }
    print!("{text}");
    if let (Some(path), Some(d)) = (&a.export_lp, &data) {
        if list.len() != 1 {
            return Err(usage("--export-lp needs a single --variant"));
        }
        let v = list[0];
        let set = UncertaintySet::breathing(0.1);
        let inst = assemble(v, &d.dose, &d.structures, &d.geometry, &set, &PlanningConfig::default_for(&d.geometry, v))?;
        write_lp(&inst.model, path)?;
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sizes.txt"), &text)?;
        m.set("angles", geom.num_angles());
        m.set("rows", geom.num_rows());
        m.set("cols", geom.num_cols());
        m.set("apertures", geom.num_apertures());
        m.set("targets", targets);
        m.set("phases", phases);
        finish(m, dir, start)?;
    }
    Ok(())
}

/// Dataset, geometry (with the aperture override), uncertainty set and
/// planning config from the shared flags.
fn setup(dataset: &Path, model: &ModelArgs, alpha: f64) -> std::result::Result<(Dataset, BeamGeometry, UncertaintySet, PlanningConfig), Failure> {
    let d = load_dataset(dataset)?;
    let g = d.geometry;
    let geom = match model.apertures {
        Some(n) => BeamGeometry::new(g.num_angles(), g.num_rows(), g.num_cols(), n)?,
        None => g,
    };
    let ni = d.dose.num_phases();
    let nominal = match &model.nominal {
        Some(p) => p.clone(),
        None if ni == 5 => UncertaintySet::breathing(0.0).nominal().to_vec(),
        None => vec![1.0 / ni as f64; ni],
    };
    let set = UncertaintySet::symmetric(nominal, model.deviation)?;
    let mut cfg = PlanningConfig::default_for(&geom, model.variant);
    cfg.weight_target = model.c_target;
    cfg.weight_healthy = model.c_healthy;
    cfg.big_m = model.big_m;
    cfg.alpha = alpha;
    if let Some(s) = model.symmetry {
        cfg.symmetry = s;
    }
    if model.allocation == AllocationArg::EqualBlocks {
        cfg.allocation = Allocation::equal_blocks(&geom);
    }
    cfg.validate(&geom)?;
    Ok((d, geom, set, cfg))
}

fn record_config(m: &mut RunManifest, d: &Dataset, geom: &BeamGeometry, set: &UncertaintySet, cfg: &PlanningConfig) {
    m.dataset_checksum = Some(format!("{:016x}", d.manifest.checksum));
    m.seed = d.manifest.extra.get("phantom.seed").and_then(|s| s.parse().ok());
    m.set("variant", cfg.variant);
    m.set("apertures", geom.num_apertures());
    m.set("c_target", cfg.weight_target);
    m.set("c_healthy", cfg.weight_healthy);
    m.set("alpha", cfg.alpha);
    m.set("big_m", cfg.big_m.map_or("auto".to_string(), |v| v.to_string()));
    m.set("symmetry", cfg.symmetry);
    m.set("allocation", if cfg.allocation.is_decision_based() { "decision" } else { "equal_blocks" });
    m.set("nominal", join(set.nominal()));
    m.set("deviation_lower", join(set.lower_dev()));
    m.set("deviation_upper", join(set.upper_dev()));
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn write_fluence(dir: &Path, stem: &str, geom: &BeamGeometry, fluence: &[f64]) -> Outcome {
    for t in 0..geom.num_angles() {
        std::fs::write(dir.join(format!("{stem}_angle{}.csv", t + 1)), fluence_csv(geom, fluence, t))?;
        std::fs::write(dir.join(format!("{stem}_angle{}.pgm", t + 1)), fluence_pgm(geom, fluence, t, true))?;
    }
    Ok(())
}

fn cmd_cpg(a: CpgArgs, args: Vec<String>, start: Instant) -> Outcome {
    if !a.model.variant.is_mip() {
        return Err(usage(format!("the heuristic builds apertures; {} has none", a.model.variant)));
    }
    let (d, geom, set, cfg) = setup(&a.dataset, &a.model, a.alpha)?;
    if a.alpha == 0.0 {
        eprintln!("warning: alpha = 0 drops the intensity term, so the surrogate no longer separates apertures");
    }
    if let Some(path) = &a.export_lp {
        write_lp(&build_surrogate(&d.dose, &d.structures, &geom, &set, &cfg)?.0, path)?;
    }
    let r = run_cpg(&d.dose, &d.structures, &geom, &set, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let plan_path = a.out.join("plan.txt");
    r.plan.save(&plan_path)?;
    let reloaded = FluencePlan::load(&plan_path)?;
    let problems = check_deliverability(&reloaded, cfg.variant);
    if let Some(p) = problems.first() {
        return Err(Failure { code: 1, message: format!("written plan fails the deliverability check: {p}") });
    }
    let bounds = format!(
        "variant = {}\nalpha = {}\nz_lower = {}\nz_cpg = {}\ngap = {}\ngap_percent = {}\nsurrogate_objective = {}\napertures_used = {}\n",
        cfg.variant,
        cfg.alpha,
        r.z_lower,
        r.z_cpg,
        r.gap(),
        100.0 * r.gap(),
        r.surrogate.objective,
        r.plan.apertures_used()
    );
    std::fs::write(a.out.join("bounds.txt"), &bounds)?;
    write_fluence(&a.out, "fluence", &geom, &r.plan.fluence())?;
    write_fluence(&a.out, "lower_fluence", &geom, &r.lower_fluence)?;
    print!("{bounds}");
    let mut m = RunManifest::new("cpg", args);
    record_config(&mut m, &d, &geom, &set, &cfg);
    finish(m, &a.out, start)
}

fn cmd_solve(a: SolveArgs, args: Vec<String>, start: Instant) -> Outcome {
    let (d, geom, set, cfg) = setup(&a.dataset, &a.model, a.alpha)?;
    let v = cfg.variant;
    std::fs::create_dir_all(&a.out)?;
    let mut options = SolveOptions::from_env();
    options.time_limit = a.time_limit;
    options.node_limit = a.node_limit;
    options.rel_gap_target = a.gap;
    options.validate()?;
    let mut manifest = RunManifest::new("solve", args);
    record_config(&mut manifest, &d, &geom, &set, &cfg);
    manifest.set("warm", if a.warm == Warm::Cpg { "cpg" } else { "none" });
    manifest.set("time_limit", a.time_limit);
    manifest.set("node_limit", a.node_limit.map_or("none".to_string(), |n| n.to_string()));
    manifest.set("gap", a.gap);

    if !v.is_mip() {
        if a.warm == Warm::Cpg {
            return Err(usage("a CPG warm start needs an aperture model"));
        }
        let model = if v.is_robust() {
            build_rfmo(&d.dose, &d.structures, &geom, &set, &cfg)?
        } else {
            build_fmo(&d.dose, &d.structures, &geom, &set.nominal_only(), &cfg)?
        };
        if let Some(path) = &a.export_lp {
            write_lp(&model, path)?;
        }
        let out = solve(&model, &options)?;
        std::fs::write(a.out.join("solve_report.txt"), out.report.to_text())?;
        print!("{}", out.report.to_text());
        let status = out.report.status;
        if let Some(x) = &out.assignment {
            let w = fluence_from_assignment(&model, x, geom.num_beamlets())?;
            write_fluence(&a.out, "fluence", &geom, &w)?;
        }
        finish(manifest, &a.out, start)?;
        return status_exit(status, out.assignment.is_some());
    }

    let mut inst = assemble(v, &d.dose, &d.structures, &geom, &set, &cfg)?;
    if let Some(path) = &a.export_lp {
        write_lp(&inst.model, path)?;
    }
    if a.warm == Warm::Cpg {
        let r = run_cpg(&d.dose, &d.structures, &geom, &set, &cfg)?;
        let ws = generate_warm_start(&r.plan, &inst)?;
        manifest.set("z_cpg", r.z_cpg);
        inst.warm_start = Some(ws.clone());
        options.warm_start = Some(ws);
    }
    let log = a.out.join("incumbents.tsv");
    std::fs::write(&log, "")?;
    options.log_incumbents = true;
    options.log_path = Some(log);
    let out = solve(&inst.model, &options)?;
    std::fs::write(a.out.join("solve_report.txt"), out.report.to_text())?;
    print!("{}", out.report.to_text());
    if let Some(x) = &out.assignment {
        let (plan, notes) = decode(&inst, x)?;
        plan.save(&a.out.join("plan.txt"))?;
        write_fluence(&a.out, "fluence", &geom, &plan.fluence())?;
        if !notes.empty_with_intensity.is_empty() {
            eprintln!("note: apertures {:?} have intensity but no open beamlet", notes.empty_with_intensity);
        }
    }
    let status = out.report.status;
    let has = out.assignment.is_some();
    finish(manifest, &a.out, start)?;
    status_exit(status, has)
}

fn status_exit(status: SolveStatus, has_solution: bool) -> Outcome {
    match status {
        SolveStatus::Infeasible => Err(Failure { code: EXIT_INFEASIBLE, message: "model is infeasible".into() }),
        SolveStatus::Limit if !has_solution => Err(Failure { code: EXIT_LIMIT, message: "limit reached without a solution".into() }),
        SolveStatus::Unbounded => Err(Failure { code: 1, message: "model is unbounded".into() }),
        _ => Ok(()),
    }
}

fn cmd_evaluate(a: EvaluateArgs, args: Vec<String>, start: Instant) -> Outcome {
    let d = load_dataset(&a.dataset)?;
    let plan = FluencePlan::load(&a.plan)?;
    if plan.geometry.num_beamlets() != d.geometry.num_beamlets() {
        return Err(Error::Shape(format!("plan has {} beamlets, dataset {}", plan.geometry.num_beamlets(), d.geometry.num_beamlets())).into());
    }
    if let Some(p) = check_deliverability(&plan, a.variant).first() {
        return Err(Failure { code: EXIT_DATA, message: format!("plan is not deliverable under {}: {p}", a.variant) });
    }
    let ni = d.dose.num_phases();
    let nominal = if ni == 5 { UncertaintySet::breathing(0.0).nominal().to_vec() } else { vec![1.0 / ni as f64; ni] };
    let set = UncertaintySet::symmetric(nominal.clone(), a.deviation)?;
    let p_real = a.p_real.clone().unwrap_or_else(|| nominal.clone());
    let (plan, factor) = if a.normalize {
        let reference = match a.reference {
            Reference::Prescription => NormalizationReference::Prescription,
            Reference::Minimum => NormalizationReference::Level(minimum_target_dose(&plan, &d.dose, &d.structures, &nominal)?),
        };
        normalize_plan(&plan, &d.dose, &d.structures, &nominal, reference)?
    } else {
        (plan, 1.0)
    };
    let mut report = evaluate_plan(&plan, &d.dose, &d.structures, &p_real)?;
    report.normalization_factor = factor;
    report.vertex_underdoses = Some(vertex_underdoses(&plan, &d.dose, &d.structures, &set)?.len());
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("report.txt"), report.to_text())?;
    for curve in dvh(&plan, &d.dose, &d.structures, &p_real)? {
        std::fs::write(a.out.join(format!("dvh_{}.csv", curve.structure)), curve.to_csv())?;
    }
    if a.normalize {
        plan.save(&a.out.join("normalized_plan.txt"))?;
    }
    print!("{}", report.to_text());
    let mut m = RunManifest::new("evaluate", args);
    m.dataset_checksum = Some(format!("{:016x}", d.manifest.checksum));
    m.set("p_real", join(&p_real));
    m.set("normalize", a.normalize);
    m.set("deviation", a.deviation);
    finish(m, &a.out, start)
}

fn cmd_rerun(a: RerunArgs) -> Outcome {
    let path = if a.manifest.is_dir() { a.manifest.join(RUN_MANIFEST_FILE) } else { a.manifest.clone() };
    let m = RunManifest::read(&path)?;
    if m.command == "rerun" {
        return Err(usage("a rerun manifest cannot be replayed"));
    }
    let mut args = m.args.clone();
    if let Some(out) = &a.out {
        match args.iter().position(|s| s == "--out") {
            Some(i) if i + 1 < args.len() => args[i + 1] = out.display().to_string(),
            _ => {
                args.push("--out".into());
                args.push(out.display().to_string());
            }
        }
    }
    run(args)
}
