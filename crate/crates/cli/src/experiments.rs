use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use dyadlab::haar::{analyze, synthesize};
use dyadlab::operators::{
    average_shift, grid_window, hilbert_at_midpoints, operator_norm_lower_bound, operator_norm_two_weight,
    operator_norm_weighted, weak_type_witness, CommutatorSha, HaarMultiplier, HaarShift, LinearOperator, Maximal,
    NormOptions, Operator, Paraproduct, PetermichlShift, SharpTruncation, ShiftCoefficients, SignSymbol,
};
use dyadlab::sht::{assign_cubes, build_nets, build_sht_haar, verify_cubes, verify_nets, QuasiMetricCloud};
use dyadlab::sparse::{lacey_dominate, verify_sparse, SparseFamily};
use dyadlab::weights::{
    a_infty_fujii_wilson, a_infty_hruscev, alpha_lemma_constant, alpha_sequence, ap_characteristic, bellman_verify,
    bmo_dyadic_norm, carleson_intensity, fkp_sequence, little_lemma_map, ntv_conditions, CarlesonSequence,
    IntervalScan,
};
use dyadlab::{Mesh, MeshInterval, StepFunction, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{fmt, GridWindow, Metadata, Report, SweepReport, SweepRow};
use crate::CliError;

pub const OPERATORS: [&str; 9] =
    ["sha", "martingale", "haar_shift", "paraproduct", "sparse", "square", "commutator_sha", "maximal", "sharp"];

/// Exponents `−√(1 − 1/Q)` for `Q = 10^{k/4}`, `k = 0..8`: power weights whose `[w]_{A₂}`
/// spread log-uniformly over two decades.
pub fn default_alphas() -> Vec<f64> {
    (0..=8).map(|k| -(1.0 - 10f64.powf(-k as f64 / 4.0)).sqrt()).collect()
}

/// Cell averages of `log|x − x₀|`.
pub fn log_symbol(mesh: Mesh, x0: f64) -> Result<StepFunction<f64>, CliError> {
    let g = |x: f64| {
        let t = x - x0;
        if t == 0.0 {
            0.0
        } else {
            t * (t.abs().ln() - 1.0)
        }
    };
    Ok(StepFunction::from_antiderivative(mesh, g)?)
}

/// The dyadic intervals containing `x₀`, root down to the cell.
pub fn tower_family(mesh: Mesh, x0: f64) -> Result<SparseFamily, CliError> {
    let k = mesh.locate_cell(x0).ok_or_else(|| CliError::Config(format!("x0 = {x0} lies outside the mesh")))?;
    Ok(SparseFamily::new(mesh, (0..=mesh.depth()).map(|l| mesh.ancestor(k, l)).collect())?)
}

/// `w⁻¹ 1_J` and `1_J` for the argmax interval and each of its ancestors.
pub fn near_extremal_tests(w: &Weight<f64>, argmax: MeshInterval) -> Vec<StepFunction<f64>> {
    let mesh = *w.mesh();
    let mut out = Vec::new();
    let mut cur = Some(argmax);
    while let Some(j) = cur {
        let r = mesh.cell_range(j);
        let inv = (0..mesh.cells()).map(|k| if r.contains(&k) { 1.0 / w.values()[k] } else { 0.0 }).collect();
        out.push(StepFunction::new(mesh, inv).expect("finite"));
        out.push(StepFunction::indicator(mesh, j).expect("in mesh"));
        cur = j.parent();
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub operator: String,
    pub depth: u32,
    pub x0: f64,
    pub alphas: Vec<f64>,
    pub seed: Option<u64>,
    pub opts: NormOptions,
    /// BMO symbol for `paraproduct` and `commutator_sha`; `log|x − x₀|` when absent
    pub symbol: Option<StepFunction<f64>>,
    /// complexity `(m, n)` for `haar_shift`
    pub complexity: (u32, u32),
}

impl SweepSpec {
    pub fn new(operator: &str, depth: u32) -> Self {
        SweepSpec {
            operator: operator.into(),
            depth,
            x0: 1.0 / 3.0,
            alphas: default_alphas(),
            seed: None,
            opts: NormOptions::default(),
            symbol: None,
            complexity: (1, 1),
        }
    }
}

fn sweep_point(
    spec: &SweepSpec,
    mesh: Mesh,
    alpha: f64,
    b: &StepFunction<f64>,
    bmo: f64,
) -> Result<SweepRow, CliError> {
    let w = Weight::power(mesh, spec.x0, alpha)?;
    let a2rep = ap_characteristic(&w, 2.0, &IntervalScan::MeshTree)?;
    let a2 = a2rep.value;
    let mut aux = BTreeMap::new();
    aux.insert("a2_thirds".to_string(), ap_characteristic(&w, 2.0, &IntervalScan::ThirdGrids)?.value);
    aux.insert("a_inf_fw".to_string(), a_infty_fujii_wilson(&w).value);
    let seed = || {
        spec.seed
            .ok_or_else(|| CliError::Config(format!("operator {:?} is randomized and needs a seed", spec.operator)))
    };
    let linear = |op: &dyn LinearOperator<f64>, aux: &mut BTreeMap<String, f64>| -> Result<f64, CliError> {
        let e = operator_norm_weighted(op, Some(&w), &spec.opts)?;
        aux.insert("iterations".into(), e.iterations as f64);
        Ok(e.norm)
    };
    let (norm, ratio) = match spec.operator.as_str() {
        "sha" => {
            let n = linear(&PetermichlShift { mesh }, &mut aux)?;
            (n, n / a2)
        }
        "martingale" => {
            let n = linear(&SignSymbol::random(mesh, seed()?).as_multiplier::<f64>(), &mut aux)?;
            (n, n / a2)
        }
        "haar_shift" => {
            let (m, k) = spec.complexity;
            let n = linear(&HaarShift { coeffs: ShiftCoefficients::random(mesh, m, k, seed()?) }, &mut aux)?;
            (n, n / a2)
        }
        "paraproduct" => {
            let n = linear(&Paraproduct::new(b), &mut aux)?;
            (n, n / (a2 * bmo))
        }
        "sparse" => {
            let fam = tower_family(mesh, spec.x0)?;
            let n = linear(&dyadlab::operators::AveragingOperator::sparse(&fam), &mut aux)?;
            (n, n / a2)
        }
        "square" => {
            // ‖S f‖_{L²(w)} = ‖Σ √⟨w⟩_I ⟨f,h_I⟩ h_I‖_{L²}
            let avg = w.as_step().averages();
            let symbol = (0..mesh.cells()).map(|h| if h == 0 { 0.0 } else { avg[h].sqrt() }).collect();
            let op = HaarMultiplier::new(mesh, symbol, "square")?;
            let e = operator_norm_two_weight(&op, Some(&w), None, &spec.opts)?;
            aux.insert("iterations".into(), e.iterations as f64);
            (e.norm, e.norm / a2)
        }
        "commutator_sha" => {
            let n = linear(&CommutatorSha::new(b), &mut aux)?;
            (n, n / (a2 * a2 * bmo))
        }
        "maximal" | "sharp" => {
            let argmax = a2rep.mesh_interval().expect("mesh-tree scan");
            let tests = near_extremal_tests(&w, argmax);
            let op: Box<dyn Operator<f64>> = if spec.operator == "maximal" {
                Box::new(Maximal { mesh, weight: None })
            } else {
                Box::new(SharpTruncation { sigma: SignSymbol::random(mesh, seed()?).as_multiplier::<f64>() })
            };
            let n = operator_norm_lower_bound(op.as_ref(), Some(&w), 2.0, &tests)?;
            if spec.operator == "maximal" {
                let mut weak: f64 = 0.0;
                for f in &tests {
                    weak = weak.max(weak_type_witness(f, &w, 2.0)?);
                }
                aux.insert("weak".into(), weak);
            }
            (n, n / a2)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown operator {other:?}; expected one of {}",
                OPERATORS.join(", ")
            )))
        }
    };
    Ok(SweepRow { param: alpha, a2, norm, ratio, aux })
}

/// Estimated `L²(w)` norms of one operator over a power-weight sweep.
pub fn norm_sweep(spec: &SweepSpec) -> Result<SweepReport, CliError> {
    if !OPERATORS.contains(&spec.operator.as_str()) {
        return Err(CliError::Config(format!(
            "unknown operator {:?}; expected one of {}",
            spec.operator,
            OPERATORS.join(", ")
        )));
    }
    let mesh = Mesh::unit(spec.depth);
    let b = match &spec.symbol {
        Some(b) => {
            mesh.same_as(b.mesh())?;
            b.clone()
        }
        None => log_symbol(mesh, spec.x0)?,
    };
    let bmo = bmo_dyadic_norm(&b);
    let rows = spec.alphas.par_iter().map(|&a| sweep_point(spec, mesh, a, &b, bmo)).collect::<Result<Vec<_>, _>>()?;
    Ok(SweepReport::new(&spec.operator, rows))
}

fn read_signal(path: &Path, mesh: Mesh) -> Result<StepFunction<f64>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(StepFunction::read_csv(mesh, f)?)
}

fn config_mesh(cfg: &ExperimentConfig) -> Result<Mesh, CliError> {
    let (left, right) = (cfg.get("left", 0.0)?, cfg.get("right", 1.0)?);
    Mesh::new(left, right, cfg.depth).map_err(|e| CliError::Config(e.to_string()))
}

fn mesh_window(mesh: &Mesh) -> GridWindow {
    let j0 = (-mesh.length().log2()).round() as i32;
    GridWindow { label: "mesh".into(), j_min: j0, j_max: j0 + mesh.depth() as i32 }
}

fn norm_options(cfg: &ExperimentConfig) -> Result<NormOptions, CliError> {
    let d = NormOptions::default();
    Ok(NormOptions { max_iter: cfg.get("max_iter", d.max_iter)?, tol: cfg.get("tol", d.tol)?, seed: d.seed })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    match cfg.experiment.as_str() {
        "haar" => run_haar(cfg),
        "norms" => run_norms(cfg),
        "average-hilbert" => run_average_hilbert(cfg),
        "sparse-dominate" => run_sparse_dominate(cfg),
        "carleson" => run_carleson(cfg),
        "bellman" => run_bellman(cfg),
        "sht" => run_sht(cfg),
        "ntv" => run_ntv(cfg),
        other => Err(CliError::Config(format!("unknown experiment {other:?}"))),
    }
}

fn run_haar(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mesh = config_mesh(cfg)?;
    let path = cfg.get_str("input").ok_or_else(|| CliError::Config("haar needs input = <signal.csv>".into()))?;
    let f = read_signal(Path::new(path), mesh)?;
    let s = analyze(&f);
    let back = synthesize(&s);
    let err = back.sub(&f)?.sup_norm();
    let rows = (1..mesh.cells())
        .map(|h| {
            let i = MeshInterval::from_heap(h);
            vec![i.level.to_string(), i.index.to_string(), fmt(s.coeffs()[h])]
        })
        .collect();
    let parseval = ((s.energy() - f.lp_norm(2.0, None)?.powi(2)) / s.energy().max(f64::MIN_POSITIVE)).abs();
    Ok(Report {
        metadata: Metadata::new(cfg, mesh.depth(), vec![mesh_window(&mesh)]),
        headers: vec!["generation", "index", "coefficient"],
        rows,
        summary: json!({ "mean": s.mean(), "reconstruction_sup_error": err, "parseval_relative_error": parseval }),
        artifacts: vec![],
    })
}

fn run_norms(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let operator = cfg.get_str("operator").ok_or_else(|| CliError::Config("norms needs operator = <name>".into()))?;
    let mut spec = SweepSpec::new(operator, cfg.depth);
    spec.x0 = cfg.get("x0", spec.x0)?;
    if let Some(a) = cfg.get_list("alphas")? {
        spec.alphas = a;
    }
    spec.seed = cfg.seed;
    spec.opts = norm_options(cfg)?;
    spec.complexity = (cfg.get("m", 1)?, cfg.get("n", 1)?);
    if let Some(p) = cfg.get_str("symbol") {
        spec.symbol = Some(read_signal(Path::new(p), Mesh::unit(cfg.depth))?);
    }
    let sweep = norm_sweep(&spec)?;
    let mesh = Mesh::unit(cfg.depth);
    let (lo, hi) = (mesh_window(&mesh).j_min - 1, mesh_window(&mesh).j_max + 1);
    Ok(Report {
        metadata: Metadata::new(
            cfg,
            cfg.depth,
            vec![mesh_window(&mesh), GridWindow { label: "third-grid scan".into(), j_min: lo, j_max: hi }],
        ),
        headers: vec!["param", "a2", "norm", "ratio"],
        rows: sweep.csv_rows(),
        summary: json!({
            "operator": sweep.operator,
            "x0": spec.x0,
            "fit": sweep.fit,
            "a2_decades": sweep.a2_decades(),
            "rows": sweep.rows,
        }),
        artifacts: vec![],
    })
}

/// `−1` on `[¼, ½)` and `+1` on `[½, ¾)`: compactly supported with mean zero.
pub fn pair_signal(mesh: Mesh) -> Result<StepFunction<f64>, CliError> {
    Ok(StepFunction::from_antiderivative(mesh, |x| {
        let c = |a: f64, b: f64| (x.clamp(a, b) - a).max(0.0);
        c(0.5, 0.75) - c(0.25, 0.5)
    })?)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HilbertRun {
    pub margin: u32,
    pub seed: u64,
    pub samples: usize,
    pub correlation: f64,
    pub discrepancy: f64,
}

/// Monte-Carlo averages of the shift for each `(margin, seed)` against the exact transform.
pub fn average_hilbert(
    f: &StepFunction<f64>,
    samples: usize,
    margins: &[u32],
    seeds: &[u64],
) -> Result<Vec<HilbertRun>, CliError> {
    let h = hilbert_at_midpoints(f)?;
    let mut out = Vec::new();
    for &margin in margins {
        for &seed in seeds {
            let avg = average_shift(f, samples, seed, margin)?;
            let corr = correlation(avg.values.values(), h.values());
            let disc = avg.values.sub(&h)?.lp_norm(2.0, None)?;
            out.push(HilbertRun { margin, seed, samples, correlation: corr, discrepancy: disc });
        }
    }
    Ok(out)
}

fn run_average_hilbert(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let seed = cfg.require_seed()?;
    let mesh = config_mesh(cfg)?;
    let f = match cfg.get_str("input") {
        Some(p) => read_signal(Path::new(p), mesh)?,
        None => pair_signal(mesh)?,
    };
    let samples = cfg.get("samples", 2000usize)?;
    let margins: Vec<u32> = cfg.get_list("margins")?.unwrap_or(vec![3.0, 6.0]).into_iter().map(|m| m as u32).collect();
    let seeds: Vec<u64> = (0..cfg.get("seeds", 10u64)?).map(|i| seed.wrapping_add(i)).collect();
    let runs = average_hilbert(&f, samples, &margins, &seeds)?;
    let mean_of = |m: u32| {
        let v: Vec<f64> = runs.iter().filter(|r| r.margin == m).map(|r| r.discrepancy).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let means: Vec<(u32, f64)> = margins.iter().map(|&m| (m, mean_of(m))).collect();
    let windows = margins
        .iter()
        .map(|&m| {
            let (lo, hi) = grid_window(&mesh, m);
            GridWindow { label: format!("margin {m}"), j_min: lo, j_max: hi }
        })
        .collect();
    Ok(Report {
        metadata: Metadata::new(cfg, mesh.depth(), windows),
        headers: vec!["margin", "seed", "samples", "correlation", "l2_discrepancy"],
        rows: runs
            .iter()
            .map(|r| {
                vec![
                    r.margin.to_string(),
                    r.seed.to_string(),
                    r.samples.to_string(),
                    fmt(r.correlation),
                    fmt(r.discrepancy),
                ]
            })
            .collect(),
        summary: json!({
            "mean_discrepancy": means,
            "min_correlation": runs.iter().map(|r| r.correlation).fold(f64::INFINITY, f64::min),
            "factor": dyadlab::operators::PETERMICHL_AVERAGE_FACTOR,
        }),
        artifacts: vec![],
    })
}

fn run_sparse_dominate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mesh = config_mesh(cfg)?;
    let seed = cfg.require_seed()?;
    let top = match cfg.get_list("top")? {
        Some(v) if v.len() == 2 => MeshInterval::new(v[0] as u32, v[1] as usize),
        Some(_) => return Err(CliError::Config("top = <generation>,<index>".into())),
        None => MeshInterval::ROOT,
    };
    mesh.check(top).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = match cfg.get_str("input") {
        Some(p) => read_signal(Path::new(p), mesh)?,
        None => {
            let r = mesh.cell_range(top);
            StepFunction::new(
                mesh,
                (0..mesh.cells()).map(|k| if r.contains(&k) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect(),
            )?
        }
    };
    let sigma = SignSymbol::random(mesh, rng.gen());
    let out = lacey_dominate(&f, &sigma, top, cfg.get_opt("c0")?)?;
    let ver = verify_sparse(&out.family);
    let mut family_json = Vec::new();
    out.family.write_json(&mut family_json)?;
    let worst = out
        .target
        .values()
        .iter()
        .zip(out.bound.values())
        .filter(|(_, &b)| b > 0.0)
        .map(|(t, b)| t / b)
        .fold(0.0, f64::max);
    Ok(Report {
        metadata: Metadata::new(cfg, mesh.depth(), vec![mesh_window(&mesh)]),
        headers: vec!["generation", "index", "stopping_mass"],
        rows: out
            .stopping_masses
            .iter()
            .map(|(i, m)| vec![i.level.to_string(), i.index.to_string(), fmt(*m)])
            .collect(),
        summary: json!({
            "c0_used": out.c0_used,
            "rejected": out.rejected,
            "family_size": out.family.len(),
            "verification": ver,
            "max_target_to_bound": worst,
        }),
        artifacts: vec![("sparse-family.json".into(), family_json)],
    })
}

/// Random weight `exp` of a random walk with steps in `(−step, step)`.
pub fn random_walk_weight(mesh: Mesh, rng: &mut ChaCha8Rng, step: f64) -> Weight<f64> {
    let mut acc = 0.0f64;
    let vals = (0..mesh.cells())
        .map(|_| {
            acc += rng.gen_range(-step..step);
            acc.exp()
        })
        .collect();
    Weight::from_values(mesh, vals).expect("positive")
}

pub fn random_sequence(mesh: Mesh, rng: &mut ChaCha8Rng, density: f64) -> CarlesonSequence<f64> {
    CarlesonSequence::from_fn(mesh, |_| if rng.gen_bool(density) { rng.gen_range(0.0..1.0) } else { 0.0 })
        .expect("nonnegative")
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CarlesonInstance {
    pub intensity: f64,
    pub little_mapped: f64,
    pub little_bound: f64,
    pub alpha_intensity: f64,
    pub alpha_bound: f64,
    pub fkp_intensity: f64,
    pub fkp_bound: f64,
}

impl CarlesonInstance {
    pub fn holds(&self) -> (bool, bool, bool) {
        let tol = 1.0 + 1e-12;
        (
            self.little_mapped <= self.little_bound * tol,
            self.alpha_intensity <= self.alpha_bound * tol,
            self.fkp_intensity <= self.fkp_bound * tol + 1e-12,
        )
    }
}

/// The Little Lemma, α-Lemma and FKP checks on one random (sequence, weight) pair.
pub fn carleson_instance(
    mesh: Mesh,
    rng: &mut ChaCha8Rng,
    step: f64,
    alpha: f64,
) -> Result<CarlesonInstance, CliError> {
    let w = random_walk_weight(mesh, rng, step);
    let seq = random_sequence(mesh, rng, 0.3);
    let intensity = carleson_intensity(&seq, None)?;
    let mapped = little_lemma_map(&seq, &w)?;
    let a2 = ap_characteristic(&w, 2.0, &IntervalScan::MeshTree)?.value;
    Ok(CarlesonInstance {
        intensity,
        little_mapped: carleson_intensity(&mapped, Some(&w))?,
        little_bound: 4.0 * intensity,
        alpha_intensity: carleson_intensity(&alpha_sequence(&w, alpha)?, None)?,
        alpha_bound: alpha_lemma_constant(alpha) * a2.powf(alpha),
        fkp_intensity: carleson_intensity(&fkp_sequence(&w), None)?,
        fkp_bound: 8.0 * a_infty_hruscev(&w).value.ln(),
    })
}

fn run_carleson(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.require_seed()?);
    let mesh = Mesh::unit(cfg.depth);
    let n = cfg.get("instances", 200usize)?;
    let step = cfg.get("step", 0.6)?;
    let alpha = cfg.get("alpha", 0.25)?;
    let inst = (0..n).map(|_| carleson_instance(mesh, &mut rng, step, alpha)).collect::<Result<Vec<_>, _>>()?;
    let all = |k: usize| inst.iter().all(|i| [i.holds().0, i.holds().1, i.holds().2][k]);
    Ok(Report {
        metadata: Metadata::new(cfg, mesh.depth(), vec![mesh_window(&mesh)]),
        headers: vec![
            "instance",
            "intensity",
            "little_mapped",
            "little_bound",
            "alpha_intensity",
            "alpha_bound",
            "fkp_intensity",
            "fkp_bound",
        ],
        rows: inst
            .iter()
            .enumerate()
            .map(|(k, i)| {
                vec![
                    k.to_string(),
                    fmt(i.intensity),
                    fmt(i.little_mapped),
                    fmt(i.little_bound),
                    fmt(i.alpha_intensity),
                    fmt(i.alpha_bound),
                    fmt(i.fkp_intensity),
                    fmt(i.fkp_bound),
                ]
            })
            .collect(),
        summary: json!({
            "alpha": alpha,
            "alpha_constant": alpha_lemma_constant(alpha),
            "little_lemma_holds": all(0),
            "alpha_lemma_holds": all(1),
            "fkp_holds": all(2),
        }),
        artifacts: vec![],
    })
}

fn run_bellman(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let samples = cfg.get("samples", 10_000usize)?;
    let rep = bellman_verify(samples, cfg.require_seed()?);
    Ok(Report {
        metadata: Metadata::new(cfg, 0, vec![]),
        headers: vec![
            "samples",
            "range_violations",
            "derivative_violations",
            "hessian_violations",
            "convexity_violations",
            "min_convexity_slack",
            "finite_difference_error",
        ],
        rows: vec![vec![
            rep.samples.to_string(),
            rep.range_violations.to_string(),
            rep.derivative_violations.to_string(),
            rep.hessian_violations.to_string(),
            rep.convexity_violations.to_string(),
            fmt(rep.min_convexity_slack),
            fmt(rep.finite_difference_error),
        ]],
        summary: json!({ "passed": rep.passed(), "report": rep }),
        artifacts: vec![],
    })
}

/// Uniform planar points in the unit square with masses in `[½, 2)`.
pub fn random_planar_cloud(n: usize, rng: &mut ChaCha8Rng) -> Result<QuasiMetricCloud<f64>, CliError> {
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let mass = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    Ok(QuasiMetricCloud::from_points((0..n).map(|i| format!("p{i}")).collect(), &coords, mass)?)
}

fn run_sht(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let cloud = match cfg.get_str("input") {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::Io(format!("{p}: {e}")))?;
            QuasiMetricCloud::read_csv(f, cfg.get_opt("a0")?)?
        }
        None => random_planar_cloud(cfg.get("points", 512usize)?, &mut ChaCha8Rng::seed_from_u64(cfg.require_seed()?))?,
    };
    let delta = cfg.get("delta", 0.5)?;
    let range = match (cfg.get_opt::<i32>("k_min")?, cfg.get_opt::<i32>("k_max")?) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(CliError::Config("k_min and k_max go together".into())),
    };
    let nets = build_nets(&cloud, delta, range)?;
    let (separated, covering) = verify_nets(&nets, &cloud);
    let cubes = assign_cubes(&nets, &cloud);
    let ver = verify_cubes(&cubes, &cloud);
    let basis = build_sht_haar(&cubes, cloud.mass())?;
    let rows = cubes
        .levels
        .iter()
        .map(|l| {
            let mut sizes = vec![0usize; l.centers.len()];
            for &c in &l.membership {
                sizes[c] += 1;
            }
            vec![
                l.k.to_string(),
                l.centers.len().to_string(),
                sizes.iter().min().copied().unwrap_or(0).to_string(),
                sizes.iter().max().copied().unwrap_or(0).to_string(),
            ]
        })
        .collect();
    let cubes_json = serde_json::to_vec_pretty(&cubes).expect("serializable");
    Ok(Report {
        metadata: Metadata::new(
            cfg,
            cubes.levels.len() as u32,
            vec![GridWindow { label: "levels k".into(), j_min: nets.k_min, j_max: nets.k_max }],
        ),
        headers: vec!["k", "cubes", "min_points", "max_points"],
        rows,
        summary: json!({
            "points": cloud.len(),
            "a0": cloud.a0(),
            "delta": delta,
            "nets_separated": separated,
            "nets_covering": covering,
            "cubes": ver,
            "outer_ok": ver.outer_ok(),
            "inner_positive": ver.inner_positive(),
            "inner_meets_target": ver.inner_meets_target(),
            "basis_functions": basis.functions.len(),
            "top_cubes": basis.top_cubes.len(),
            "dimension_identity": basis.functions.len() + basis.top_cubes.len() == cloud.len(),
            "gram_deviation": basis.gram_deviation(),
        }),
        artifacts: vec![("sht-cubes.json".into(), cubes_json)],
    })
}

fn run_ntv(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mesh = Mesh::unit(cfg.depth);
    let opts = norm_options(cfg)?;
    let x0 = cfg.get("x0", 1.0 / 3.0)?;
    let pairs: Vec<(f64, Weight<f64>, Weight<f64>)> = match (cfg.get_str("u"), cfg.get_str("v")) {
        (Some(u), Some(v)) => {
            let u = Weight::new(read_signal(Path::new(u), mesh)?)?;
            let v = Weight::new(read_signal(Path::new(v), mesh)?)?;
            vec![(f64::NAN, u, v)]
        }
        (None, None) => cfg
            .get_list("alphas")?
            .unwrap_or_else(default_alphas)
            .into_iter()
            .map(|a| Weight::power(mesh, x0, a).map(|w| (a, w.clone(), w)))
            .collect::<Result<_, _>>()?,
        _ => return Err(CliError::Config("ntv takes both u and v, or neither".into())),
    };
    let reps = pairs.par_iter().map(|(_, u, v)| ntv_conditions(u, v, &opts)).collect::<Result<Vec<_>, _>>()?;
    Ok(Report {
        metadata: Metadata::new(cfg, mesh.depth(), vec![mesh_window(&mesh)]),
        headers: vec![
            "param",
            "a2",
            "u_inv_intensity",
            "v_intensity",
            "t0_norm",
            "alpha_intensity",
            "alpha_to_log_ratio",
        ],
        rows: pairs
            .iter()
            .zip(&reps)
            .map(|((a, _, _), r)| {
                vec![
                    fmt(*a),
                    fmt(r.joint_a2),
                    fmt(r.u_inv_intensity),
                    fmt(r.v_intensity),
                    fmt(r.t0_norm),
                    fmt(r.alpha_intensity),
                    r.alpha_to_log_ratio.map(fmt).unwrap_or_default(),
                ]
            })
            .collect(),
        summary: json!({ "reports": reps }),
        artifacts: vec![],
    })
}
