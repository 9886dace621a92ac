//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdao::config::Allocation;
use rdao::cpg::{generate_warm_start, run_cpg, CpgResult};
use rdao::dao::{assemble, decode, size_only, ModelInstance};
use rdao::dataset::{adversarial_spec, generate_phantom, PhantomSpec};
use rdao::evaluate::{dvh, evaluate_plan, normalize_plan, vertex_underdoses, NormalizationReference};
use rdao::plan::{check_deliverability, Aperture, FluencePlan};
use rdao::robust::{build_rfmo, extract_fluence};
use rdao::solver::{solve_lp, solve_mip, validate_assignment, SolveOptions, SolveStatus, FEASIBILITY_TOL};
use rdao::structures::HealthyStructure;
use rdao::uncertainty::REALIZED_BREATHING;
use rdao::{BeamGeometry, DoseInfluenceTensor, PlanningConfig, StructureSet, SymmetryMode, UncertaintySet, Variant};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// Independent oracles

/// Vertices of `{p : lo <= p <= hi, sum p = 1}`: all but one coordinate at a
/// bound, the last one absorbing the slack.
fn polytope_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    for free in 0..n {
        for mask in 0..(1usize << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for i in (0..n).filter(|&i| i != free) {
                p[i] = if mask >> bit & 1 == 1 { hi[i] } else { lo[i] };
                bit += 1;
            }
            let rest = 1.0 - p.iter().sum::<f64>();
            if rest >= lo[free] - 1e-12 && rest <= hi[free] + 1e-12 {
                p[free] = rest.clamp(lo[free], hi[free]);
                out.push(p);
            }
        }
    }
    out
}

fn clamped_bounds(nominal: &[f64], dl: &[f64], du: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = nominal.iter().zip(dl).map(|(p, d)| (p - d).max(0.0)).collect();
    let hi = nominal.iter().zip(du).map(|(p, d)| (p + d).min(1.0)).collect();
    (lo, hi)
}

/// Beamlet fluence of a plan, summed aperture by aperture.
fn plan_fluence(plan: &FluencePlan) -> Vec<f64> {
    let g = &plan.geometry;
    let mut w = vec![0.0; g.num_beamlets()];
    for ap in &plan.apertures {
        for (q, span) in ap.rows.iter().enumerate() {
            if let Some((lo, hi)) = span {
                for k in *lo..=*hi {
                    w[g.beamlet(q, k, ap.angle)] += ap.intensity;
                }
            }
        }
    }
    w
}

fn voxel_dose(dose: &DoseInfluenceTensor, v: usize, w: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for (b, wb) in w.iter().enumerate() {
        for (i, pi) in p.iter().enumerate() {
            s += pi * dose.get(v, b, i) * wb;
        }
    }
    s
}

/// `c_b`: weighted mean target and healthy dose per unit fluence at `p`.
fn cost_coefficients(dose: &DoseInfluenceTensor, st: &StructureSet, p: &[f64], ct: f64, ch: f64) -> Vec<f64> {
    let healthy: Vec<usize> = st.healthy().iter().flat_map(|h| h.voxels.clone()).collect();
    (0..dose.num_beamlets())
        .map(|b| {
            let mean = |vs: &[usize]| {
                if vs.is_empty() {
                    return 0.0;
                }
                vs.iter().map(|&v| (0..p.len()).map(|i| p[i] * dose.get(v, b, i)).sum::<f64>()).sum::<f64>() / vs.len() as f64
            };
            ct * mean(st.target()) + ch * mean(&healthy)
        })
        .collect()
}

/// Every open pattern of one angle: each row empty or a single window, with
/// continuity optionally required. The all-closed pattern is left out.
fn row_patterns(nq: usize, nk: usize, continuity: bool) -> Vec<Vec<Option<(usize, usize)>>> {
    let mut windows: Vec<Option<(usize, usize)>> = vec![None];
    for lo in 0..nk {
        for hi in lo..nk {
            windows.push(Some((lo, hi)));
        }
    }
    let mut out = Vec::new();
    let total = windows.len().pow(nq as u32);
    for mut code in 0..total {
        let rows: Vec<_> = (0..nq)
            .map(|_| {
                let w = windows[code % windows.len()];
                code /= windows.len();
                w
            })
            .collect();
        let active: Vec<usize> = (0..nq).filter(|&q| rows[q].is_some()).collect();
        if active.is_empty() {
            continue;
        }
        if continuity {
            if active.last().unwrap() + 1 - active[0] != active.len() {
                continue;
            }
            let ok = active.windows(2).all(|p| {
                let (a1, b1) = rows[p[0]].unwrap();
                let (a2, b2) = rows[p[1]].unwrap();
                a2 <= b1 && a1 <= b2
            });
            if !ok {
                continue;
            }
        }
        out.push(rows);
    }
    out
}

/// Smallest vertex objective of `min c.f s.t. sum_j f_j d_j >= L, 0 <= f <= M`,
/// found by solving every square subsystem of active constraints.
fn tiny_lp(cost: &[f64], cols: &[&[f64]], rhs: &[f64], big_m: f64) -> Option<f64> {
    let k = cost.len();
    let nt = rhs.len();
    // Constraint r: coefficients over f and right-hand side, as equalities
    // when active.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for v in 0..nt {
        rows.push(((0..k).map(|j| cols[j][v]).collect(), rhs[v]));
    }
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        rows.push((e.clone(), 0.0));
        rows.push((e, big_m));
    }
    let mut best: Option<f64> = None;
    let n = rows.len();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if let Some(f) = solve_square(&idx.iter().map(|&r| rows[r].clone()).collect::<Vec<_>>()) {
            let feasible = f.iter().all(|&x| x >= -1e-9 && x <= big_m * (1.0 + 1e-12))
                && (0..nt).all(|v| (0..k).map(|j| cols[j][v] * f[j]).sum::<f64>() >= rhs[v] * (1.0 - 1e-12) - 1e-9);
            if feasible {
                let z: f64 = cost.iter().zip(&f).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(z, |b: f64| b.min(z)));
            }
        }
        // Next k-combination of 0..n.
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let k = rows.len();
    let mut a: Vec<Vec<f64>> = rows.iter().map(|(r, b)| r.iter().copied().chain([*b]).collect()).collect();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..k {
            if r != c {
                let m = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= m * a[c][j];
                }
            }
        }
    }
    Some((0..k).map(|c| a[c][k] / a[c][c]).collect())
}

/// Brute-force optimum of a nominal aperture model: enumerate deliverable
/// shapes, drop dominated ones, then try every multiset of at most `|A|`
/// shapes with the best intensities.
fn brute_force_optimum(dose: &DoseInfluenceTensor, st: &StructureSet, geom: &BeamGeometry, continuity: bool, big_m: f64) -> f64 {
    let p = UncertaintySet::breathing(0.0).nominal().to_vec();
    let c = cost_coefficients(dose, st, &p, 0.7, 0.3);
    let mut shapes: Vec<(f64, Vec<f64>)> = Vec::new();
    for t in 0..geom.num_angles() {
        for rows in row_patterns(geom.num_rows(), geom.num_cols(), continuity) {
            let mut w = vec![0.0; geom.num_beamlets()];
            for (q, span) in rows.iter().enumerate() {
                if let Some((lo, hi)) = span {
                    for k in *lo..=*hi {
                        w[geom.beamlet(q, k, t)] = 1.0;
                    }
                }
            }
            let cost: f64 = w.iter().zip(&c).map(|(x, c)| x * c).sum();
            let d: Vec<f64> = st.target().iter().map(|&v| voxel_dose(dose, v, &w, &p)).collect();
            shapes.push((cost, d));
        }
    }
    let dominated = |i: usize| {
        shapes.iter().enumerate().any(|(j, (cj, dj))| {
            j != i && *cj <= shapes[i].0 && dj.iter().zip(&shapes[i].1).all(|(a, b)| a >= b) && (*cj < shapes[i].0 || dj != &shapes[i].1 || j < i)
        })
    };
    let front: Vec<usize> = (0..shapes.len()).filter(|&i| !dominated(i)).collect();
    let rhs = st.prescription();
    // A vertex of the intensity LP has at most |V_T| intensities strictly
    // inside (0, M); every other used shape sits at M. So split each
    // candidate into a set pinned at M plus at most |V_T| free shapes. Only
    // shapes with M * cost below the incumbent can be pinned.
    let na = geom.num_apertures();
    let mut best = best_multiset(&front, &shapes, rhs, big_m, na.min(rhs.len()), 0.0);
    for pinned in 1..na {
        let cand: Vec<usize> = front.iter().copied().filter(|&i| big_m * shapes[i].0 < best).collect();
        let mut stack = vec![(0usize, Vec::<usize>::new())];
        while let Some((start, set)) = stack.pop() {
            if set.len() == pinned {
                let base: f64 = set.iter().map(|&i| big_m * shapes[i].0).sum();
                if base >= best {
                    continue;
                }
                let rest: Vec<f64> =
                    rhs.iter().enumerate().map(|(v, l)| l - set.iter().map(|&i| big_m * shapes[i].1[v]).sum::<f64>()).collect();
                if rest.iter().all(|&r| r <= 1e-9) {
                    best = best.min(base);
                }
                best = best.min(best_multiset(&front, &shapes, &rest, big_m, (na - pinned).min(rhs.len()), base));
                continue;
            }
            for n in start..cand.len() {
                let mut next = set.clone();
                next.push(cand[n]);
                stack.push((n, next));
            }
        }
    }
    best
}

/// Best objective over multisets of at most `size` shapes, plus `base`.
fn best_multiset(front: &[usize], shapes: &[(f64, Vec<f64>)], rhs: &[f64], big_m: f64, size: usize, base: f64) -> f64 {
    fn rec(start: usize, left: usize, front: &[usize], shapes: &[(f64, Vec<f64>)], pick: &mut Vec<usize>, rhs: &[f64], big_m: f64, best: &mut f64) {
        if !pick.is_empty() {
            let cost: Vec<f64> = pick.iter().map(|&i| shapes[i].0).collect();
            let cols: Vec<&[f64]> = pick.iter().map(|&i| shapes[i].1.as_slice()).collect();
            if let Some(z) = tiny_lp(&cost, &cols, rhs, big_m) {
                *best = best.min(z);
            }
        }
        if left == 0 {
            return;
        }
        for n in start..front.len() {
            pick.push(front[n]);
            rec(n, left - 1, front, shapes, pick, rhs, big_m, best);
            pick.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(0, size, front, shapes, &mut Vec::new(), rhs, big_m, &mut best);
    base + best
}

// Shared instances

const CORPUS_SIZE: u64 = 100;
const TINY_SEEDS: u64 = 4;

fn corpus_spec(seed: u64) -> PhantomSpec {
    let geom = BeamGeometry::new(1 + (seed % 2) as usize, 12, 10, 6).unwrap();
    PhantomSpec::new(seed, geom, 24, 12, 5)
}

fn tiny_spec(seed: u64, apertures: usize) -> PhantomSpec {
    PhantomSpec::new(seed, BeamGeometry::new(2, 3, 3, apertures).unwrap(), 2, 4, 5)
}

fn exact_options() -> SolveOptions {
    SolveOptions { time_limit: 120.0, ..SolveOptions::default() }
}

struct CorpusEntry {
    seed: u64,
    z_fmo: f64,
    z_rfmo: f64,
    z_cpg_robust: Vec<f64>,
}

#[derive(Default)]
struct Context {
    corpus: Vec<CorpusEntry>,
    tiny: Vec<(u64, usize, Variant, f64)>,
}

// Criteria

fn c1_sizes(_: &mut Context) -> Outcome {
    // Per geometry: rows, cols, target voxels and the triples for
    // FMO, DAO, DAO-C, RFMO, RDAO, RDAO-C.
    let table: [(usize, usize, usize, [(usize, usize, usize); 6]); 5] = [
        (46, 26, 2296, [(2296, 2392, 0), (87332, 57426, 43068), (118148, 59082, 44724), (13776, 16168, 0), (98812, 71202, 43068), (129628, 72858, 44724)]),
        (40, 19, 1050, [(1050, 1520, 0), (54838, 36498, 27372), (74998, 37938, 28812), (6300, 7820, 0), (60088, 42798, 27372), (80248, 44238, 28812)]),
        (46, 23, 3168, [(3168, 2116, 0), (78268, 50802, 38100), (105844, 52458, 39756), (19008, 21124, 0), (94108, 69810, 38100), (121684, 71466, 39756)]),
        (44, 22, 1779, [(1779, 1936, 0), (70447, 46482, 34860), (95767, 48066, 36444), (10674, 12610, 0), (79342, 57156, 34860), (104662, 58740, 36444)]),
        (36, 25, 2190, [(2190, 1800, 0), (66154, 43218, 32412), (89290, 44514, 33708), (13140, 14940, 0), (77104, 56358, 32412), (100240, 57654, 33708)]),
    ];
    let start = Instant::now();
    for (q, k, vt, want) in table {
        let g = BeamGeometry::new(2, q, k, 6).map_err(e2s)?;
        for (v, w) in Variant::ALL.iter().zip(want) {
            let got = size_only(&g, vt, 5, *v, &PlanningConfig::default_for(&g, *v)).map_err(e2s)?.triple();
            ensure!(got == w, "{q}x{k} {v}: got {got:?}, want {w:?}");
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(1), "took {t:?}");
    Ok("30/30 triples exact".into())
}

fn c2_robust_counterpart(_: &mut Context) -> Outcome {
    let start = Instant::now();
    let mut worst_margin = f64::INFINITY;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let nt = rng.random_range(1..=20);
        let nh = rng.random_range(0..=5);
        let ni = rng.random_range(1..=5);
        let angles = rng.random_range(1..=2);
        let rows = rng.random_range(1..=5);
        let cols = rng.random_range(1..=(60 / (angles * rows)).min(6));
        let geom = BeamGeometry::new(angles, rows, cols, 1).map_err(e2s)?;
        let nb = geom.num_beamlets();
        let nv = nt + nh;
        let mut values = vec![0.0; nv * nb * ni];
        for x in values.iter_mut() {
            if rng.random_bool(0.7) {
                *x = rng.random_range(0.01..1.0);
            }
        }
        // Keep every target voxel reachable in every phase.
        for v in 0..nt {
            for i in 0..ni {
                let b = rng.random_range(0..nb);
                values[(v * nb + b) * ni + i] = rng.random_range(0.5..1.0);
            }
        }
        let dose = DoseInfluenceTensor::new(nv, nb, ni, values).map_err(e2s)?;
        let raw: Vec<f64> = (0..ni).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let mut nominal: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        let drift = 1.0 - nominal.iter().sum::<f64>();
        nominal[0] += drift;
        let dl: Vec<f64> = (0..ni).map(|_| rng.random_range(0.0..0.2)).collect();
        let du: Vec<f64> = (0..ni).map(|_| rng.random_range(0.0..0.2)).collect();
        let set = UncertaintySet::new(nominal.clone(), dl.clone(), du.clone()).map_err(e2s)?;
        let presc: Vec<f64> = (0..nt).map(|_| rng.random_range(10.0..50.0)).collect();
        let healthy = if nh > 0 { vec![HealthyStructure { name: "oar".into(), voxels: (nt..nv).collect() }] } else { vec![] };
        let st = StructureSet::new((0..nt).collect(), presc.clone(), healthy).map_err(e2s)?;
        let cfg = PlanningConfig::default_for(&geom, Variant::Rfmo);
        let model = build_rfmo(&dose, &st, &geom, &set, &cfg).map_err(e2s)?;
        let out = solve_lp(&model, &SolveOptions::default()).map_err(e2s)?;
        ensure!(out.report.status == SolveStatus::Optimal, "seed {seed}: {}", out.report.status.name());
        let w = extract_fluence(&model, &out, nb).map_err(e2s)?;
        let (lo, hi) = clamped_bounds(&nominal, &dl, &du);
        let verts = polytope_vertices(&lo, &hi);
        ensure!(!verts.is_empty(), "seed {seed}: no vertices");
        for v in 0..nt {
            let worst = verts.iter().map(|p| voxel_dose(&dose, v, &w, p)).fold(f64::INFINITY, f64::min);
            worst_margin = worst_margin.min(worst - presc[v]);
            ensure!(worst >= presc[v] - 1e-6, "seed {seed} voxel {v}: worst {worst} < L {}", presc[v]);
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "took {t:?}");
    Ok(format!("50/50 instances, min worst-case margin {worst_margin:.3e}"))
}

fn c3_warm_starts(ctx: &mut Context) -> Outcome {
    let start = Instant::now();
    let set = UncertaintySet::breathing(0.1);
    let mut clean = 0;
    let mut failures = Vec::new();
    ctx.corpus.clear();
    for seed in 0..CORPUS_SIZE {
        let (dose, st, g) = generate_phantom(&corpus_spec(seed)).map_err(e2s)?;
        let mut entry = CorpusEntry { seed, z_fmo: f64::NAN, z_rfmo: f64::NAN, z_cpg_robust: Vec::new() };
        for v in Variant::MIP {
            let cfg = PlanningConfig::default_for(&g, v);
            let cpg = run_cpg(&dose, &st, &g, &set, &cfg).map_err(e2s)?;
            let inst = assemble(v, &dose, &st, &g, &set, &cfg).map_err(e2s)?;
            let ws = generate_warm_start(&cpg.plan, &inst).map_err(e2s)?;
            let viol = validate_assignment(&inst.model, &ws, FEASIBILITY_TOL).map_err(e2s)?;
            if viol.is_empty() {
                clean += 1;
            } else {
                failures.push(format!("seed {seed} {v}: {}", viol[0]));
            }
            match v {
                Variant::Dao => entry.z_fmo = cpg.z_lower,
                Variant::Rdao => {
                    entry.z_rfmo = cpg.z_lower;
                    entry.z_cpg_robust.push(cpg.z_cpg);
                }
                Variant::RdaoC => entry.z_cpg_robust.push(cpg.z_cpg),
                _ => {}
            }
        }
        ctx.corpus.push(entry);
    }
    let t = start.elapsed();
    let total = CORPUS_SIZE as usize * 4;
    ensure!(failures.is_empty(), "{clean}/{total} clean; first failure {}", failures[0]);
    ensure!(t < Duration::from_secs(600), "took {t:?}");
    Ok(format!("{clean}/{total} warm starts with zero violations"))
}

fn c4_warm_start_incumbent(_: &mut Context) -> Outcome {
    let start = Instant::now();
    let set = UncertaintySet::breathing(0.1);
    let mut improved = 0;
    for seed in 0..20u64 {
        let v = Variant::MIP[seed as usize % 4];
        let geom = BeamGeometry::new(1 + (seed % 2) as usize, 6, 5, 4).map_err(e2s)?;
        let (dose, st, g) = generate_phantom(&PhantomSpec::new(200 + seed, geom, 8, 6, 5)).map_err(e2s)?;
        let cfg = PlanningConfig::default_for(&g, v);
        let cpg = run_cpg(&dose, &st, &g, &set, &cfg).map_err(e2s)?;
        let inst = assemble(v, &dose, &st, &g, &set, &cfg).map_err(e2s)?;
        let ws = generate_warm_start(&cpg.plan, &inst).map_err(e2s)?;
        let opts = SolveOptions { time_limit: 15.0, node_limit: Some(400), warm_start: Some(ws), ..SolveOptions::default() };
        let out = solve_mip(&inst.model, &opts).map_err(e2s)?;
        let first = out.report.incumbents.first().ok_or(format!("seed {seed} {v}: no incumbent"))?;
        ensure!((first.objective - cpg.z_cpg).abs() <= 1e-9, "seed {seed} {v}: incumbents[0] {} vs z_cpg {}", first.objective, cpg.z_cpg);
        ensure!(out.report.objective <= cpg.z_cpg + 1e-9, "seed {seed} {v}: final {} > z_cpg {}", out.report.objective, cpg.z_cpg);
        if out.report.objective < cpg.z_cpg - 1e-9 {
            improved += 1;
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(600), "took {t:?}");
    Ok(format!("20/20 phantoms, {improved} improved on the warm start"))
}

fn c5_bound_ordering(ctx: &mut Context) -> Outcome {
    ensure!(ctx.corpus.len() == CORPUS_SIZE as usize, "corpus bounds unavailable");
    let mut entries: Vec<(String, f64, f64, Vec<f64>)> =
        ctx.corpus.iter().map(|e| (format!("seed {}", e.seed), e.z_fmo, e.z_rfmo, e.z_cpg_robust.clone())).collect();
    let (dose, st, g) = generate_phantom(&adversarial_spec()).map_err(e2s)?;
    let set = UncertaintySet::breathing(0.1);
    let nominal = run_cpg(&dose, &st, &g, &set, &PlanningConfig::default_for(&g, Variant::Dao)).map_err(e2s)?;
    let robust: Vec<CpgResult> = [Variant::Rdao, Variant::RdaoC]
        .iter()
        .map(|&v| run_cpg(&dose, &st, &g, &set, &PlanningConfig::default_for(&g, v)))
        .collect::<Result<_, _>>()
        .map_err(e2s)?;
    entries.push(("adversarial".into(), nominal.z_lower, robust[0].z_lower, robust.iter().map(|r| r.z_cpg).collect()));
    for (name, fmo, rfmo, cpg) in &entries {
        ensure!(*fmo <= rfmo + 1e-6, "{name}: z_FMO {fmo} > z_RFMO {rfmo}");
        for z in cpg {
            ensure!(*rfmo <= z + 1e-6, "{name}: z_RFMO {rfmo} > z_cpg {z}");
        }
    }
    Ok(format!("{} phantoms ordered", entries.len()))
}

fn solve_tiny(dose: &DoseInfluenceTensor, st: &StructureSet, g: &BeamGeometry, cfg: &PlanningConfig) -> Result<(f64, ModelInstance, Vec<f64>), String> {
    let set = UncertaintySet::breathing(0.1);
    let inst = assemble(cfg.variant, dose, st, g, &set, cfg).map_err(e2s)?;
    let out = solve_mip(&inst.model, &exact_options()).map_err(e2s)?;
    ensure!(out.report.status == SolveStatus::Optimal, "{} {}: status {}", cfg.variant, cfg.symmetry, out.report.status.name());
    let x = out.assignment.ok_or("optimal without assignment")?;
    Ok((out.report.objective, inst, x))
}

fn c6_symmetry(ctx: &mut Context) -> Outcome {
    let start = Instant::now();
    let modes = [SymmetryMode::None, SymmetryMode::GlobalSort, SymmetryMode::TwoAngleSort];
    let mut checked = 0;
    ctx.tiny.clear();
    for apertures in [2usize, 3] {
        for seed in 0..TINY_SEEDS {
            let (dose, st, g) = generate_phantom(&tiny_spec(seed, apertures)).map_err(e2s)?;
            for v in [Variant::Dao, Variant::DaoC] {
                let mut objectives = Vec::new();
                let mut big_m = 0.0;
                for mode in modes {
                    let cfg = PlanningConfig { symmetry: mode, ..PlanningConfig::default_for(&g, v) };
                    let (z, inst, x) = solve_tiny(&dose, &st, &g, &cfg)?;
                    big_m = inst.big_m;
                    if mode == SymmetryMode::TwoAngleSort {
                        let sums = |t: usize, a: usize| g.angle_beamlets(t).map(|b| x[inst.layout.w[inst.layout.ba(b, a)]]).sum::<f64>();
                        for a in 0..apertures - 1 {
                            ensure!(sums(0, a) >= sums(0, a + 1) - 1e-9, "seed {seed} {v}: angle-1 sums out of order at {a}");
                            ensure!(sums(1, a) <= sums(1, a + 1) + 1e-9, "seed {seed} {v}: angle-2 sums out of order at {a}");
                        }
                    }
                    objectives.push(z);
                }
                let z0 = objectives[0];
                for (mode, z) in modes.iter().zip(&objectives) {
                    ensure!((z - z0).abs() <= 1e-6 * z0.abs().max(1.0), "seed {seed} |A|={apertures} {v}: {mode} gives {z}, none gives {z0}");
                }
                let oracle = brute_force_optimum(&dose, &st, &g, v.has_continuity(), big_m);
                ensure!((oracle - z0).abs() <= 1e-6 * z0.abs().max(1.0), "seed {seed} |A|={apertures} {v}: MIP {z0}, enumeration {oracle}");
                ctx.tiny.push((seed, apertures, v, z0));
                checked += 1;
            }
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(300), "took {t:?}");
    Ok(format!("{checked} instances agree across modes and with enumeration"))
}

fn c7_relaxation_ordering(ctx: &mut Context) -> Outcome {
    let mut pairs = 0;
    for apertures in [2usize, 3] {
        for seed in 0..TINY_SEEDS {
            let (dose, st, g) = generate_phantom(&tiny_spec(seed, apertures)).map_err(e2s)?;
            let z = |v: Variant| -> Result<f64, String> {
                if let Some(&(_, _, _, z)) = ctx.tiny.iter().find(|t| t.0 == seed && t.1 == apertures && t.2 == v) {
                    return Ok(z);
                }
                Ok(solve_tiny(&dose, &st, &g, &PlanningConfig::default_for(&g, v))?.0)
            };
            for (open, cont) in [(Variant::Dao, Variant::DaoC), (Variant::Rdao, Variant::RdaoC)] {
                let (a, b) = (z(open)?, z(cont)?);
                ensure!(a <= b + 1e-6, "seed {seed} |A|={apertures}: {open} {a} > {cont} {b}");
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs ordered"))
}

fn c8_deviation_trend(ctx: &mut Context) -> Outcome {
    let devs = [0.0, 0.05, 0.1, 0.125];
    let mut seeds: Vec<u64> = ctx.corpus.iter().map(|e| e.seed).collect();
    if seeds.is_empty() {
        seeds = (0..CORPUS_SIZE).collect();
    }
    for &seed in &seeds {
        let (dose, st, g) = generate_phantom(&corpus_spec(seed)).map_err(e2s)?;
        let cfg = PlanningConfig::default_for(&g, Variant::Rfmo);
        let mut last = f64::NEG_INFINITY;
        for d in devs {
            let model = build_rfmo(&dose, &st, &g, &UncertaintySet::breathing(d), &cfg).map_err(e2s)?;
            let out = solve_lp(&model, &SolveOptions::default()).map_err(e2s)?;
            ensure!(out.report.status == SolveStatus::Optimal, "seed {seed} dev {d}: {}", out.report.status.name());
            let z = out.report.objective;
            ensure!(z >= last - 1e-6, "seed {seed}: z at dev {d} is {z}, below {last}");
            last = z;
        }
    }
    Ok(format!("{} phantoms nondecreasing over {devs:?}", seeds.len()))
}

fn c9_adversarial(_: &mut Context) -> Outcome {
    let (dose, st, g) = generate_phantom(&adversarial_spec()).map_err(e2s)?;
    let set = UncertaintySet::breathing(0.1);
    let nominal = run_cpg(&dose, &st, &g, &set, &PlanningConfig::default_for(&g, Variant::DaoC)).map_err(e2s)?;
    let robust = run_cpg(&dose, &st, &g, &set, &PlanningConfig::default_for(&g, Variant::RdaoC)).map_err(e2s)?;
    let rep = evaluate_plan(&nominal.plan, &dose, &st, &REALIZED_BREATHING).map_err(e2s)?;
    ensure!(rep.underdose_flag, "nominal plan is not underdosed (t_min {})", rep.t_min);
    let (lo, hi) = clamped_bounds(set.nominal(), set.lower_dev(), set.upper_dev());
    let verts = polytope_vertices(&lo, &hi);
    for p in &verts {
        let r = evaluate_plan(&robust.plan, &dose, &st, p).map_err(e2s)?;
        ensure!(!r.underdose_flag, "robust plan underdosed at {p:?}");
    }
    ensure!(vertex_underdoses(&robust.plan, &dose, &st, &set).map_err(e2s)?.is_empty(), "library vertex check disagrees");
    Ok(format!("nominal t_min {:.3} < {}, robust clean at {} vertices", rep.t_min, st.min_prescription(), verts.len()))
}

fn c10_normalization(_: &mut Context) -> Outcome {
    let set = UncertaintySet::breathing(0.1);
    let p = set.nominal().to_vec();
    let mut cases = 0;
    for seed in 0..10u64 {
        let (dose, st, g) = generate_phantom(&corpus_spec(seed)).map_err(e2s)?;
        for v in [Variant::Dao, Variant::Rdao] {
            let plan = run_cpg(&dose, &st, &g, &set, &PlanningConfig::default_for(&g, v)).map_err(e2s)?.plan;
            let w0 = plan_fluence(&plan);
            let min0 = st.target().iter().map(|&t| voxel_dose(&dose, t, &w0, &p)).fold(f64::INFINITY, f64::min);
            let reference = if v.is_robust() { NormalizationReference::Level(min0) } else { NormalizationReference::Prescription };
            let (norm, factor) = normalize_plan(&plan, &dose, &st, &p, reference).map_err(e2s)?;
            let refs: Vec<f64> = match reference {
                NormalizationReference::Prescription => st.prescription().to_vec(),
                NormalizationReference::Level(l) => vec![l; st.num_target()],
            };
            let w = plan_fluence(&norm);
            let mut ratios: Vec<f64> = st.target().iter().zip(&refs).map(|(&t, r)| voxel_dose(&dose, t, &w, &p) / r).collect();
            ratios.sort_by(f64::total_cmp);
            let q = (0.05 * (ratios.len() - 1) as f64).floor() as usize;
            ensure!((ratios[q] - 0.95).abs() <= 1e-9, "seed {seed} {v}: binding ratio {}", ratios[q]);
            let level = 0.95 * refs[0];
            let frac = dvh(&norm, &dose, &st, &p).map_err(e2s)?[0].volume_fraction(level);
            ensure!(frac >= 0.95, "seed {seed} {v}: volume fraction {frac}");
            for c in [0.5, 2.0] {
                let scaled = plan.scaled(c);
                let ws = plan_fluence(&scaled);
                for &t in st.target() {
                    let (a, b) = (voxel_dose(&dose, t, &ws, &p), c * voxel_dose(&dose, t, &w0, &p));
                    ensure!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "seed {seed}: dose not linear in c={c}");
                }
                let (norm_c, factor_c) = normalize_plan(&scaled, &dose, &st, &p, reference).map_err(e2s)?;
                ensure!((factor_c * c - factor).abs() <= 1e-9 * factor, "seed {seed} {v} c={c}: factor {factor_c} vs {}", factor / c);
                for (x, y) in norm_c.apertures.iter().zip(&norm.apertures) {
                    ensure!((x.intensity - y.intensity).abs() <= 1e-9 * y.intensity.max(1.0), "seed {seed} {v} c={c}: intensities differ");
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} plans normalized, scale invariance holds for c in {{0.5, 2}}"))
}

/// A random deliverable aperture at `angle`.
fn random_aperture(rng: &mut ChaCha8Rng, g: &BeamGeometry, angle: usize, continuity: bool) -> Aperture {
    let (nq, nk) = (g.num_rows(), g.num_cols());
    let mut rows = vec![None; nq];
    if continuity {
        let top = rng.random_range(0..nq);
        let bottom = rng.random_range(top..nq);
        let mut prev: Option<(usize, usize)> = None;
        for r in rows.iter_mut().take(bottom + 1).skip(top) {
            let (lo, hi) = loop {
                let lo = rng.random_range(0..nk);
                let hi = rng.random_range(lo..nk);
                if prev.is_none_or(|(a, b)| lo <= b && a <= hi) {
                    break (lo, hi);
                }
            };
            *r = Some((lo, hi));
            prev = Some((lo, hi));
        }
    } else {
        for r in rows.iter_mut() {
            if rng.random_bool(0.7) {
                let lo = rng.random_range(0..nk);
                *r = Some((lo, rng.random_range(lo..nk)));
            }
        }
    }
    let intensity = if rows.iter().all(Option::is_none) { 0.0 } else { rng.random_range(0.1..1.0) };
    Aperture { angle, intensity, rows }
}

fn c11_bidirectional(_: &mut Context) -> Outcome {
    let set = UncertaintySet::breathing(0.1);
    let mut solved = 0;
    let mut encoded = 0;
    for case in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + case);
        let v = Variant::MIP[case as usize % 4];
        let angles = rng.random_range(1..=2);
        let g = BeamGeometry::new(angles, rng.random_range(2..=3), rng.random_range(2..=3), rng.random_range(2..=3)).map_err(e2s)?;
        let (dose, st, g) = generate_phantom(&PhantomSpec::new(case, g, 4, 2, 5)).map_err(e2s)?;
        let mut cfg = PlanningConfig::default_for(&g, v);
        if case % 3 == 1 {
            cfg.allocation = Allocation::equal_blocks(&g);
            cfg.symmetry = if rng.random_bool(0.5) { SymmetryMode::PerAngleSort } else { SymmetryMode::None };
        }
        let inst = assemble(v, &dose, &st, &g, &set, &cfg).map_err(e2s)?;

        // Solver to plan.
        let opts = SolveOptions { time_limit: 20.0, ..SolveOptions::default() };
        let out = solve_mip(&inst.model, &opts).map_err(e2s)?;
        let x = out.assignment.ok_or(format!("case {case} {v}: no solution ({})", out.report.status.name()))?;
        let (plan, _) = decode(&inst, &x).map_err(|e| format!("case {case} {v}: decode failed: {e}"))?;
        let problems = check_deliverability(&plan, v);
        ensure!(problems.is_empty(), "case {case} {v}: decoded plan has {} problem(s), first {}", problems.len(), problems[0]);
        solved += 1;

        // Plan to solver.
        let angle_list: Vec<usize> = match cfg.allocation.fixed_angle(0) {
            Some(_) => (0..g.num_apertures()).map(|a| cfg.allocation.fixed_angle(a).unwrap()).collect(),
            None => (0..g.num_apertures()).map(|_| rng.random_range(0..angles)).collect(),
        };
        let plan = loop {
            let mut aps: Vec<Aperture> = angle_list.iter().map(|&t| random_aperture(&mut rng, &g, t, v.has_continuity())).collect();
            aps.shuffle(&mut rng);
            let plan = FluencePlan { geometry: g, apertures: aps };
            let w = plan_fluence(&plan);
            let points = if v.is_robust() { polytope_vertices(set.lower(), set.upper()) } else { vec![set.nominal().to_vec()] };
            let need = st
                .target()
                .iter()
                .zip(st.prescription())
                .map(|(&t, l)| l / points.iter().map(|p| voxel_dose(&dose, t, &w, p)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            if !need.is_finite() {
                continue;
            }
            let plan = plan.scaled(need * (1.0 + 1e-6));
            if plan.apertures.iter().all(|a| a.intensity <= inst.big_m) {
                break plan;
            }
        };
        ensure!(check_deliverability(&plan, v).is_empty(), "case {case}: generator produced an undeliverable plan");
        let ws = generate_warm_start(&plan, &inst).map_err(|e| format!("case {case} {v}: {e}"))?;
        let viol = validate_assignment(&inst.model, &ws, FEASIBILITY_TOL).map_err(e2s)?;
        ensure!(viol.is_empty(), "case {case} {v} {}: {} violation(s), first {}", cfg.symmetry, viol.len(), viol[0]);
        let (back, _) = decode(&inst, &ws).map_err(e2s)?;
        let (a, b) = (plan_fluence(&back), plan_fluence(&plan));
        ensure!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.max(1.0)), "case {case}: round trip changed the fluence");
        encoded += 1;
    }
    Ok(format!("{solved}/50 solver plans clean, {encoded}/50 plans re-encoded cleanly"))
}

type Criterion = (&'static str, fn(&mut Context) -> Outcome);

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 11] = [
        ("problem sizes", c1_sizes),
        ("robust counterpart", c2_robust_counterpart),
        ("warm start validity", c3_warm_starts),
        ("warm start incumbent", c4_warm_start_incumbent),
        ("bound ordering", c5_bound_ordering),
        ("symmetry preservation", c6_symmetry),
        ("relaxation ordering", c7_relaxation_ordering),
        ("deviation trend", c8_deviation_trend),
        ("adversarial phantom", c9_adversarial),
        ("normalization", c10_normalization),
        ("checker and model agreement", c11_bidirectional),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", n + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut ctx))).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} ({detail}; {secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({detail}; {secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
