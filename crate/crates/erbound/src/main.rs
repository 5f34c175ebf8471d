use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use erbound::calculus::{active_set, active_set_default};
use erbound::fixtures;
use erbound::hoffman::{
    self, HoffmanOptions, HoffmanReport, HoffmanVerdict, SubsetMode, ALL_SUBSETS_CAP,
};
use erbound::minimax::{min_norm_point, minimax_over_generators, sphere_search_minimax};
use erbound::model::{
    parse_system, BoxRegion, PerturbationSpec, System, FEASIBILITY_TOL,
};
use erbound::moduli::{
    beta_at, beta_modulus, default_local_radii, distance_to_sublevel_set, global_modulus,
    local_modulus, ModulusEstimate, Region,
};
use erbound::report::{assemble, csv_cell, num, opt_num, vec_num, write_csv};
use erbound::stability::{
    adversarial_perturbation, global_stability_verdict, local_stability_verdict, Classification,
    StabilityVerdict,
};
use erbound::{Error, Result};

const EXIT_OK: i32 = 0;
const EXIT_UNSTABLE: i32 = 2;
const EXIT_INDETERMINATE: i32 = 3;
const EXIT_USAGE: i32 = 64;
const EXIT_DATA: i32 = 65;
const EXIT_INTERNAL: i32 = 70;

#[derive(Parser)]
#[command(
    name = "erbound",
    version,
    about = "Error-bound moduli, stability verdicts, and Hoffman constants \
             for convex constraint systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// System description file (JSON); bundled fixture names also work
    #[arg(long, global = true)]
    system: Option<String>,

    /// Seed for all sampling
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker-thread cap (recorded; output assembly is single-threaded)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for CSV table dumps
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// Active-set tolerance override
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Verdict zero-tolerance override
    #[arg(long = "zero-tol", global = true)]
    zero_tol: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    All,
    Realizable,
}

#[derive(Subcommand)]
enum Command {
    /// Local stability verdict and modulus estimates at a boundary point
    AnalyzeLocal {
        /// Reference point, comma-separated floats
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Perturbation budget epsilon
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Samples per radius / per estimator
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Global stability verdict and modulus estimates over a box
    AnalyzeGlobal {
        /// Box as "lo,hi" (broadcast) or "lo1,hi1;lo2,hi2;..." per axis
        #[arg(long = "box", default_value = "-5,5", allow_hyphen_values = true)]
        bounds: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Hoffman constant: subset minimax table, tau, verdict, estimates
    Hoffman {
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
        /// Also sample an upper estimate of sigma over --box
        #[arg(long, default_value_t = false)]
        estimate: bool,
        #[arg(long = "box", default_value = "-5,5", allow_hyphen_values = true)]
        bounds: String,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Random rank-one perturbation trials
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// All-subsets enumeration cap on the number of constraints
        #[arg(long, default_value_t = ALL_SUBSETS_CAP)]
        cap: usize,
    },
    /// Apply or search a linear perturbation and compare moduli
    Perturb {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Perturbation direction u* (unit ball), comma-separated; absent
        /// triggers an adversarial search
        #[arg(long, allow_hyphen_values = true)]
        ustar: Option<String>,
        /// Candidate budget for the adversarial search
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Cross-check oracles: exact vs sphere minimax, duality, ratio vs beta
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        /// Check this many random affine systems instead of --point
        #[arg(long)]
        random: Option<usize>,
    },
    /// Reproduce a bundled worked example
    Repro {
        /// One of: example1, example2, remark31, remark32
        case: String,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                EXIT_OK
            } else {
                EXIT_USAGE
            };
        }
    };
    let started = Instant::now();
    match run(&cli) {
        Ok((command, options, results, code)) => {
            let report = assemble(
                command,
                options,
                results,
                started.elapsed().as_secs_f64() * 1e3,
            );
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            code_for_error(&e)
        }
    }
}

fn code_for_error(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::EmptyComponentList
        | Error::DimensionMismatch { .. }
        | Error::NotPsd { .. }
        | Error::NonFiniteInput
        | Error::DegenerateBox { .. }
        | Error::NotOnBoundary { .. }
        | Error::PerturbationTooLarge { .. }
        | Error::NotAffine { .. }
        | Error::SizeCap { .. }
        | Error::InfeasibleSystem
        | Error::NoInfeasibleSamples
        | Error::NoBoundaryPoints
        | Error::NoWitness => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

type CommandOutput = (&'static str, Value, Value, i32);

fn run(cli: &Cli) -> Result<CommandOutput> {
    match &cli.command {
        Command::AnalyzeLocal {
            point,
            eps,
            samples,
        } => cmd_analyze_local(cli, point, *eps, *samples),
        Command::AnalyzeGlobal {
            bounds,
            samples,
            eps,
        } => cmd_analyze_global(cli, bounds, *samples, *eps),
        Command::Hoffman {
            mode,
            estimate,
            bounds,
            samples,
            trials,
            eps,
            cap,
        } => cmd_hoffman(cli, *mode, *estimate, bounds, *samples, *trials, *eps, *cap),
        Command::Perturb {
            point,
            eps,
            ustar,
            budget,
            samples,
        } => cmd_perturb(cli, point, *eps, ustar.as_deref(), *budget, *samples),
        Command::Oracle { point, random } => cmd_oracle(cli, point.as_deref(), *random),
        Command::Repro { case } => cmd_repro(cli, case),
    }
}

// ---------------------------------------------------------------------------
// Input parsing
// ---------------------------------------------------------------------------

fn load_system(cli: &Cli) -> Result<System> {
    let name = cli.system.as_deref().ok_or_else(|| Error::Parse {
        path: "--system".into(),
        message: "a system file is required for this command".into(),
    })?;
    let path = std::path::Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: name.into(),
            message: e.to_string(),
        })?;
        parse_system(&text)
    } else {
        fixtures::by_name(name).map_err(|_| Error::Parse {
            path: name.into(),
            message: "file not found and not a bundled fixture name".into(),
        })
    }
}

fn parse_floats(what: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: what.into(),
                message: format!("bad float {t:?}: {e}"),
            })
        })
        .collect()
}

fn parse_box(spec: &str, n: usize) -> Result<BoxRegion> {
    let pairs: Vec<Vec<f64>> = spec
        .split(';')
        .map(|p| parse_floats("--box", p))
        .collect::<Result<_>>()?;
    let bad = || Error::Parse {
        path: "--box".into(),
        message: format!("expected \"lo,hi\" or {n} semicolon-separated pairs"),
    };
    if pairs.iter().any(|p| p.len() != 2) {
        return Err(bad());
    }
    let (lower, upper): (Vec<f64>, Vec<f64>) = if pairs.len() == 1 {
        (vec![pairs[0][0]; n], vec![pairs[0][1]; n])
    } else if pairs.len() == n {
        (
            pairs.iter().map(|p| p[0]).collect(),
            pairs.iter().map(|p| p[1]).collect(),
        )
    } else {
        return Err(bad());
    };
    BoxRegion::new(lower, upper)
}

// ---------------------------------------------------------------------------
// JSON views of library results
// ---------------------------------------------------------------------------

fn estimate_json(e: &ModulusEstimate) -> Value {
    json!({
        "value": num(e.value),
        "method": e.method.to_string(),
        "samples_used": e.samples_used,
        "radius_schedule": e.radius_schedule.as_ref().map(|r| vec_num(r)),
        "seed": e.seed,
    })
}

fn perturbation_json(p: &PerturbationSpec) -> Value {
    json!({
        "u_star": vec_num(&p.u_star),
        "epsilon": num(p.epsilon),
        "anchor": vec_num(&p.anchor),
    })
}

fn verdict_json(v: &StabilityVerdict) -> Value {
    json!({
        "classification": v.classification.to_string(),
        "gamma": num(v.gamma),
        "guaranteed_modulus": opt_num(v.guaranteed_modulus),
        "witness": v.witness.as_ref().map(perturbation_json),
        "witness_modulus": opt_num(v.witness_modulus),
        "sequence_check": v.sequence_check.as_ref().map(|sc| json!({
            "thresholds": vec_num(&sc.thresholds),
            "min_gamma": vec_num(&sc.min_gamma),
            "qualifying": sc.qualifying,
        })),
        "zero_tolerance": num(v.zero_tolerance),
        "boundary_points_found": v.boundary_points.len(),
    })
}

fn classification_exit(c: Classification) -> i32 {
    match c {
        Classification::Stable | Classification::StableSingleton => EXIT_OK,
        Classification::Unstable => EXIT_UNSTABLE,
        Classification::Indeterminate => EXIT_INDETERMINATE,
    }
}

fn hoffman_json(r: &HoffmanReport) -> Value {
    let table: Vec<Value> = r
        .subset_table
        .iter()
        .map(|row| {
            json!({
                "subset": row.labels,
                "theta": num(row.theta),
                "direction": vec_num(&row.direction),
                "branch": row.branch.to_string(),
            })
        })
        .collect();
    json!({
        "mode": match r.mode {
            SubsetMode::AllSubsets => "all",
            SubsetMode::RealizableActiveSets => "realizable",
        },
        "subset_table": table,
        "tau": num(r.tau),
        "hoffman_lower_bound": num(r.hoffman_lower_bound),
        "sampled_sigma": opt_num(r.sampled_sigma),
        "verdict": r.verdict.to_string(),
        "zero_tolerance": num(r.zero_tolerance),
        "perturbation_trials": r.perturbation_trials.iter().map(|t| json!({
            "x_tilde": vec_num(&t.x_tilde),
            "u_tilde": vec_num(&t.u_tilde),
            "epsilon": num(t.epsilon),
            "sigma_tilde": num(t.sigma_tilde),
        })).collect::<Vec<_>>(),
    })
}

fn common_options(cli: &Cli) -> Value {
    json!({
        "system": cli.system,
        "seed": cli.seed,
        "threads": cli.threads,
        "eta": cli.eta.map(num),
        "zero_tol": cli.zero_tol.map(num),
    })
}

fn merge(base: Value, extra: Value) -> Value {
    let (Value::Object(mut b), Value::Object(e)) = (base, extra) else {
        unreachable!("options are objects");
    };
    b.extend(e);
    Value::Object(b)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_analyze_local(
    cli: &Cli,
    point: &str,
    eps: f64,
    samples: usize,
) -> Result<CommandOutput> {
    let system = load_system(cli)?;
    let x = parse_floats("--point", point)?;
    let verdict = local_stability_verdict(&system, &x, eps)?;
    let radii = default_local_radii(&x);
    let ratio = local_modulus(&system, &x, &radii, samples, cli.seed)?;
    let beta = beta_modulus(
        &system,
        &Region::Local {
            x_bar: x.clone(),
            radii: radii.clone(),
        },
        samples,
        cli.seed,
    )?;
    let code = classification_exit(verdict.classification);
    let options = merge(
        common_options(cli),
        json!({ "point": vec_num(&x), "eps": num(eps), "samples": samples }),
    );
    let results = json!({
        "verdict": verdict_json(&verdict),
        "local_modulus": estimate_json(&ratio),
        "beta_modulus": estimate_json(&beta),
    });
    if let Some(dir) = &cli.csv {
        write_csv(
            &dir.join("local_summary.csv"),
            &["quantity", "value"],
            &[
                vec!["gamma".into(), csv_cell(verdict.gamma)],
                vec!["local_modulus".into(), csv_cell(ratio.value)],
                vec!["beta_modulus".into(), csv_cell(beta.value)],
            ],
        )?;
    }
    Ok(("analyze-local", options, results, code))
}

fn cmd_analyze_global(
    cli: &Cli,
    bounds_spec: &str,
    samples: usize,
    eps: f64,
) -> Result<CommandOutput> {
    let system = load_system(cli)?;
    let bounds = parse_box(bounds_spec, system.dimension())?;
    let options = merge(
        common_options(cli),
        json!({ "box": bounds_spec, "samples": samples, "eps": num(eps) }),
    );
    let verdict = match global_stability_verdict(&system, &bounds, samples, samples, eps, cli.seed)
    {
        Ok(v) => v,
        Err(Error::NoWitness) => {
            // no feasible point found in the box: report unknown feasibility
            let results = json!({ "feasibility": "unknown" });
            return Ok(("analyze-global", options, results, EXIT_INDETERMINATE));
        }
        Err(e) => return Err(e),
    };
    let ratio = global_modulus(&system, &bounds, samples, cli.seed)?;
    let beta = beta_modulus(
        &system,
        &Region::Global {
            bounds: bounds.clone(),
        },
        samples,
        cli.seed,
    )?;
    let code = classification_exit(verdict.classification);
    let results = json!({
        "feasibility": "non_empty",
        "verdict": verdict_json(&verdict),
        "global_modulus": estimate_json(&ratio),
        "beta_modulus": estimate_json(&beta),
    });
    if let Some(dir) = &cli.csv {
        write_csv(
            &dir.join("global_summary.csv"),
            &["quantity", "value"],
            &[
                vec!["tau_hat".into(), csv_cell(verdict.gamma)],
                vec!["global_modulus".into(), csv_cell(ratio.value)],
                vec!["beta_modulus".into(), csv_cell(beta.value)],
            ],
        )?;
    }
    Ok(("analyze-global", options, results, code))
}

#[allow(clippy::too_many_arguments)]
fn cmd_hoffman(
    cli: &Cli,
    mode: ModeArg,
    estimate: bool,
    bounds_spec: &str,
    samples: usize,
    trials: usize,
    eps: f64,
    cap: usize,
) -> Result<CommandOutput> {
    let system = load_system(cli)?;
    let bounds = parse_box(bounds_spec, system.dimension())?;
    let report = if estimate || trials > 0 {
        hoffman::hoffman_verdict(
            &system,
            &HoffmanOptions {
                cap,
                bounds,
                samples: if estimate { samples } else { 0 },
                trials,
                epsilon: eps,
                seed: cli.seed,
            },
        )?
    } else {
        let mode = match mode {
            ModeArg::All => SubsetMode::AllSubsets,
            ModeArg::Realizable => SubsetMode::RealizableActiveSets,
        };
        let mut r = subset_only_verdict(&system, mode, cap)?;
        if let Some(zt) = cli.zero_tol {
            r.zero_tolerance = zt;
        }
        r
    };
    let options = merge(
        common_options(cli),
        json!({
            "mode": match mode { ModeArg::All => "all", ModeArg::Realizable => "realizable" },
            "estimate": estimate,
            "box": bounds_spec,
            "samples": samples,
            "trials": trials,
            "eps": num(eps),
            "cap": cap,
        }),
    );
    if let Some(dir) = &cli.csv {
        let rows: Vec<Vec<String>> = report
            .subset_table
            .iter()
            .map(|row| {
                vec![
                    row.labels.join(" "),
                    csv_cell(row.theta),
                    row.direction
                        .iter()
                        .map(|&v| csv_cell(v))
                        .collect::<Vec<_>>()
                        .join(" "),
                    row.branch.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("subset_table.csv"),
            &["subset", "theta", "direction", "branch"],
            &rows,
        )?;
    }
    let code = match report.verdict {
        HoffmanVerdict::UniformlyBounded => EXIT_OK,
        HoffmanVerdict::NotUniformlyBounded => EXIT_UNSTABLE,
        HoffmanVerdict::Indeterminate => EXIT_INDETERMINATE,
    };
    Ok(("hoffman", options, hoffman_json(&report), code))
}

/// Subset-table-only verdict used when no sampling was requested.
fn subset_only_verdict(system: &System, mode: SubsetMode, cap: usize) -> Result<HoffmanReport> {
    let mut report = hoffman::subset_tau(system, mode, cap)?;
    report.verdict = match mode {
        // all subsets dominate every realizable active set
        SubsetMode::AllSubsets if report.tau > report.zero_tolerance => {
            HoffmanVerdict::UniformlyBounded
        }
        SubsetMode::RealizableActiveSets if report.tau <= report.zero_tolerance => {
            HoffmanVerdict::NotUniformlyBounded
        }
        SubsetMode::AllSubsets => {
            // a vanishing theta over all subsets: decisive only if realizable
            if system.dimension() <= 3 {
                let realizable =
                    hoffman::subset_tau(system, SubsetMode::RealizableActiveSets, cap)?;
                if realizable.tau <= realizable.zero_tolerance {
                    HoffmanVerdict::NotUniformlyBounded
                } else {
                    HoffmanVerdict::Indeterminate
                }
            } else {
                HoffmanVerdict::Indeterminate
            }
        }
        SubsetMode::RealizableActiveSets => HoffmanVerdict::Indeterminate,
    };
    Ok(report)
}

fn cmd_perturb(
    cli: &Cli,
    point: &str,
    eps: f64,
    ustar: Option<&str>,
    budget: usize,
    samples: usize,
) -> Result<CommandOutput> {
    let system = load_system(cli)?;
    let x = parse_floats("--point", point)?;
    let active = match cli.eta {
        Some(eta) => active_set(&system, &x, eta)?,
        None => active_set_default(&system, &x)?,
    };
    let gamma = erbound::minimax::directional_minimax(&system, &x, &active.indices)?.value;
    let radii = default_local_radii(&x);
    let base_estimate = local_modulus(&system, &x, &radii, samples, cli.seed)?;
    let (spec, perturbed_value, searched) = match ustar {
        Some(u_text) => {
            let u = parse_floats("--ustar", u_text)?;
            let spec = PerturbationSpec::new(u, eps, x.clone())?;
            let perturbed = system.base().with_perturbation(spec.clone())?;
            let est = local_modulus(&perturbed, &x, &radii, samples, cli.seed)?;
            (spec, est.value, false)
        }
        None => {
            let (spec, value) = adversarial_perturbation(&system, &x, eps, budget, cli.seed)?;
            (spec, value, true)
        }
    };
    let bound = gamma.abs() - eps;
    let options = merge(
        common_options(cli),
        json!({
            "point": vec_num(&x),
            "eps": num(eps),
            "ustar": spec.u_star.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "adversarial_search": searched,
            "budget": budget,
            "samples": samples,
        }),
    );
    let results = json!({
        "gamma": num(gamma),
        "base_local_modulus": estimate_json(&base_estimate),
        "perturbation": perturbation_json(&spec),
        "perturbed_local_modulus": num(perturbed_value),
        "stability_lower_bound": num(bound),
        "bound_respected": perturbed_value >= bound - 1e-9,
    });
    Ok(("perturb", options, results, EXIT_OK))
}

struct OracleCheck {
    name: &'static str,
    passed: bool,
    residual: Option<f64>,
    tolerance: Option<f64>,
    note: String,
}

fn oracle_checks_at(system: &System, x: &[f64], eta: Option<f64>, seed: u64) -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();
    let active = match eta {
        Some(e) => active_set(system, x, e)?,
        None => active_set_default(system, x)?,
    };
    let gradients: Vec<Vec<f64>> = active
        .indices
        .iter()
        .map(|&i| system.component_gradient(i, x))
        .collect();
    let exact = minimax_over_generators(&gradients)?;
    let mnp = min_norm_point(&gradients)?;

    // duality: distance from the origin to the active-gradient hull equals
    // the positive part of -gamma
    let duality_residual = ((-exact.value).max(0.0) - mnp.d).abs();
    checks.push(OracleCheck {
        name: "duality",
        passed: duality_residual <= 1e-8,
        residual: Some(duality_residual),
        tolerance: Some(1e-8),
        note: format!("gamma={:.12}, min_norm_distance={:.12}", exact.value, mnp.d),
    });
    if !mnp.certified {
        checks.push(OracleCheck {
            name: "min_norm_certificate",
            passed: false,
            residual: Some(mnp.residual),
            tolerance: None,
            note: "Wolfe iteration left an uncertified residual".into(),
        });
    }

    // exact branch vs dense sphere search
    let (sphere_value, _) = sphere_search_minimax(&gradients, 100_000, 40, seed)?;
    let sphere_residual = (exact.value - sphere_value).abs();
    let sphere_tol = if system.dimension() <= 2 { 1e-3 } else { 5e-3 };
    checks.push(OracleCheck {
        name: "exact_vs_sphere",
        passed: sphere_residual <= sphere_tol,
        residual: Some(sphere_residual),
        tolerance: Some(sphere_tol),
        note: format!("exact={:.9}, sphere={sphere_value:.9}", exact.value),
    });

    // ratio and beta against the subset lower bound (affine, feasible only)
    let f = system.f(x);
    if system.is_affine() && f > FEASIBILITY_TOL {
        let constraints = system.require_affine()?;
        let start = vec![0.0; system.dimension()];
        if let erbound::qp::Feasibility::Point(_) =
            erbound::qp::polyhedron_feasible_point(&constraints, &start)?
        {
            let tau_report = if constraints.len() <= ALL_SUBSETS_CAP {
                hoffman::subset_tau(system, SubsetMode::AllSubsets, ALL_SUBSETS_CAP)?
            } else {
                hoffman::subset_tau(system, SubsetMode::RealizableActiveSets, ALL_SUBSETS_CAP)?
            };
            let dist = distance_to_sublevel_set(system, x)?;
            let ratio = f / dist.value;
            let beta = beta_at(system, x, active.eta)?;
            checks.push(OracleCheck {
                name: "ratio_above_tau",
                passed: ratio >= tau_report.tau - 1e-6,
                residual: Some(tau_report.tau - ratio),
                tolerance: Some(1e-6),
                note: format!("ratio={ratio:.9}, tau={:.9}", tau_report.tau),
            });
            checks.push(OracleCheck {
                name: "beta_above_tau",
                passed: beta >= tau_report.tau - 1e-6,
                residual: Some(tau_report.tau - beta),
                tolerance: Some(1e-6),
                note: format!("beta={beta:.9}, tau={:.9}", tau_report.tau),
            });
        }
    }
    Ok(checks)
}

fn cmd_oracle(cli: &Cli, point: Option<&str>, random: Option<usize>) -> Result<CommandOutput> {
    let mut all_checks: Vec<Value> = Vec::new();
    let mut failed = 0usize;
    let mut total = 0usize;
    let mut record = |label: String, checks: Vec<OracleCheck>, out: &mut Vec<Value>| {
        for c in &checks {
            total += 1;
            if !c.passed {
                failed += 1;
            }
        }
        out.push(json!({
            "case": label,
            "checks": checks.iter().map(|c| json!({
                "name": c.name,
                "passed": c.passed,
                "residual": c.residual.map(num),
                "tolerance": c.tolerance.map(num),
                "note": c.note,
            })).collect::<Vec<_>>(),
        }));
    };
    match (point, random) {
        (Some(p), _) => {
            let system = load_system(cli)?;
            let x = parse_floats("--point", p)?;
            let checks = oracle_checks_at(&system, &x, cli.eta, cli.seed)?;
            record(format!("point {x:?}"), checks, &mut all_checks);
        }
        (None, Some(count)) => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
            for k in 0..count {
                let system = erbound::synth::random_affine_system(
                    cli.seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
                );
                let x = erbound::synth::random_point(system.dimension(), 4.0, &mut rng);
                let checks = oracle_checks_at(&system, &x, cli.eta, cli.seed)?;
                record(format!("random system {k}"), checks, &mut all_checks);
            }
        }
        (None, None) => {
            return Err(Error::Parse {
                path: "--point/--random".into(),
                message: "oracle requires --point or --random N".into(),
            })
        }
    }
    let options = merge(
        common_options(cli),
        json!({ "point": point, "random": random }),
    );
    let results = json!({
        "cases": all_checks,
        "checks_total": total,
        "checks_failed": failed,
    });
    let code = if failed == 0 { EXIT_OK } else { EXIT_UNSTABLE };
    Ok(("oracle", options, results, code))
}

// ---------------------------------------------------------------------------
// Reproduction of the worked examples
// ---------------------------------------------------------------------------

fn repro_row(
    quantity: &str,
    reported: Option<f64>,
    computed: f64,
    note: &str,
) -> Value {
    json!({
        "quantity": quantity,
        "reported": opt_num(reported),
        "computed": num(computed),
        "abs_diff": reported.map_or(Value::Null, |r| num((r - computed).abs())),
        "note": note,
    })
}

fn cmd_repro(cli: &Cli, case: &str) -> Result<CommandOutput> {
    let seed = cli.seed;
    let rows: Vec<Value> = match case {
        "example1" => repro_example1(seed)?,
        "example2" => repro_example2(seed)?,
        "remark31" => repro_remark31(seed)?,
        "remark32" => repro_remark32(seed)?,
        other => {
            eprintln!("error: unknown repro case {other:?} (expected example1, example2, remark31, remark32)");
            std::process::exit(EXIT_USAGE);
        }
    };
    if let Some(dir) = &cli.csv {
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let cell = |k: &str| match &r[k] {
                    Value::Null => String::new(),
                    Value::Number(n) => csv_cell(n.as_f64().unwrap()),
                    Value::String(s) => s.clone(),
                    v => v.to_string(),
                };
                vec![
                    cell("quantity"),
                    cell("reported"),
                    cell("computed"),
                    cell("abs_diff"),
                    cell("note"),
                ]
            })
            .collect();
        write_csv(
            &dir.join(format!("repro_{case}.csv")),
            &["quantity", "reported", "computed", "abs_diff", "note"],
            &csv_rows,
        )?;
    }
    let options = merge(common_options(cli), json!({ "case": case }));
    Ok(("repro", options, json!({ "table": rows }), EXIT_OK))
}

fn theta_for(system: &System, subset: &[usize]) -> Result<(f64, Vec<f64>)> {
    let constraints = system.require_affine()?;
    let gradients: Vec<Vec<f64>> = subset.iter().map(|&t| constraints[t].0.clone()).collect();
    let mm = minimax_over_generators(&gradients)?;
    Ok((mm.value, mm.direction))
}

fn repro_example1(seed: u64) -> Result<Vec<Value>> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let s = fixtures::example1();
    let mut rows = Vec::new();
    let (t12, h12) = theta_for(&s, &[0, 1])?;
    let (t13, h13) = theta_for(&s, &[0, 2])?;
    let (t23, _) = theta_for(&s, &[1, 2])?;
    let (t123, _) = theta_for(&s, &[0, 1, 2])?;
    rows.push(repro_row("theta_{1,2}", Some(-1.0), t12, &format!(
        "direction computed {h12:?}; the published direction has a sign misprint"
    )));
    rows.push(repro_row("theta_{1,3}", Some(-1.0), t13, &format!(
        "direction computed {h13:?}"
    )));
    rows.push(repro_row("theta_{2,3}", Some(-sqrt2 / 2.0), t23, ""));
    rows.push(repro_row("theta_{1,2,3}", Some(sqrt2), t123,
        "published value sqrt(2) appears to be a misprint; the inradius of the \
         hull of the three gradients about the origin is sqrt(2)/2"));
    let report = hoffman::subset_tau(&s, SubsetMode::AllSubsets, ALL_SUBSETS_CAP)?;
    rows.push(repro_row("tau", Some(sqrt2 / 2.0), report.tau, "uniform bound over all subsets"));
    let bounds = BoxRegion::cube(2, -5.0, 5.0)?;
    let verdict = global_stability_verdict(&s, &bounds, 2000, 2000, 0.1, seed)?;
    rows.push(repro_row(
        "verdict",
        None,
        if verdict.classification == Classification::Stable { 1.0 } else { 0.0 },
        &format!("global stability: {}", verdict.classification),
    ));
    Ok(rows)
}

fn repro_example2(seed: u64) -> Result<Vec<Value>> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let s = fixtures::example2();
    let mut rows = Vec::new();
    let (gamma, _) = theta_for(&s, &[0, 1])?;
    rows.push(repro_row("gamma at boundary", Some(0.0), gamma,
        "origin lies in the hull of the two opposing gradients"));
    let report = hoffman::subset_tau(&s, SubsetMode::RealizableActiveSets, ALL_SUBSETS_CAP)?;
    rows.push(repro_row("tau (realizable)", Some(0.0), report.tau,
        "no uniform Hoffman bound survives perturbation"));
    let eps = 0.1;
    let bounds = BoxRegion::cube(2, -2.0, 2.0)?;
    let sigma = hoffman::perturbed_hoffman(&s, &[0.0, 0.0], &[0.0, 1.0], eps, &bounds, 4000, seed)?;
    rows.push(repro_row(
        "perturbed sigma (eps=0.1, u*=(0,1))",
        Some(eps / sqrt2),
        sigma,
        "sampled upper estimate of the perturbed Hoffman constant",
    ));
    let spec = PerturbationSpec::new(vec![0.0, 1.0], eps, vec![0.0, 0.0])?;
    let perturbed = s.base().with_perturbation(spec)?;
    let d = distance_to_sublevel_set(&perturbed, &[-eps, eps])?;
    let ratio = perturbed.f(&[-eps, eps]) / d.value;
    rows.push(repro_row(
        "perturbed ratio at (-0.1, 0.1)",
        Some(eps / sqrt2),
        ratio,
        "f = eps^2 and the distance to the perturbed wedge is sqrt(2)*eps",
    ));
    Ok(rows)
}

fn repro_remark31(seed: u64) -> Result<Vec<Value>> {
    let s = fixtures::remark31();
    let mut rows = Vec::new();
    let x = [0.0];
    let radii = default_local_radii(&x);
    let est = local_modulus(&s, &x, &radii, 2000, seed)?;
    rows.push(repro_row("local modulus", Some(f64::INFINITY), est.value,
        "the zero function has no infeasible points"));
    let verdict = local_stability_verdict(&s, &x, 0.1)?;
    rows.push(repro_row("gamma", Some(0.0), verdict.gamma, ""));
    rows.push(repro_row(
        "witness modulus (eps=0.1)",
        None,
        verdict.witness_modulus.unwrap_or(f64::NAN),
        &format!(
            "verdict {}; a linear tilt of size eps drops the modulus to about eps",
            verdict.classification
        ),
    ));
    Ok(rows)
}

fn repro_remark32(seed: u64) -> Result<Vec<Value>> {
    let s = fixtures::remark32();
    let mut rows = Vec::new();
    let bounds = BoxRegion::new(vec![-50.0], vec![10.0])?;
    let est = global_modulus(&s, &bounds, 4000, seed)?;
    rows.push(repro_row("global modulus over [-50,10]", Some(0.2), est.value,
        "reported value is the guaranteed ceiling 2*eps; the sampled estimate sits near eps"));
    let d = distance_to_sublevel_set(&s, &[-30.0])?;
    let ratio = s.f(&[-30.0]) / d.value;
    rows.push(repro_row("ratio at x = -30", Some(0.1), ratio,
        "bisection distance oracle on exp(x) - 1 - 0.1x"));
    Ok(rows)
}
