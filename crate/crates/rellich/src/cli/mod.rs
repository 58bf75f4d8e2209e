//! Batch driver behind the `rellich` binary: parse a run configuration,
//! dispatch to the library, emit a JSON report plus CSV tables.
//!
//! Exit codes: `0` all checks passed, `1` usage or configuration error,
//! `2` a numerical check failed, `3` a hypothesis of the inequality under
//! test failed (the run is vacuous, not a counterexample).

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cascade::{self, EpsilonSchedule};
use crate::constants;
use crate::extremizers::{self, ExtremizerSpec, SweepMode};
use crate::functionals;
use crate::geometry;
use crate::varsolve;

pub use config::{parse_config, Command, ConfigError, GeometrySpec, RunConfig, SweepModeSpec};
pub use report::{Check, CsvTable, Report};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Constants(#[from] constants::ConstantsError),
    #[error(transparent)]
    Cascade(#[from] cascade::CascadeError),
    #[error(transparent)]
    Functionals(#[from] functionals::FunctionalsError),
    #[error(transparent)]
    Extremizer(#[from] extremizers::ExtremizerError),
    #[error(transparent)]
    Varsolve(#[from] varsolve::VarsolveError),
}

/// Runs one configured command, writing `report.json` and any CSV tables
/// under `out_dir`. Deterministic given the config and seed.
pub fn run(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<Report, RunError> {
    let mut rep = Report::new(cfg.command.name(), cfg.seed, cfg.raw.clone());
    let mut tables: Vec<CsvTable> = Vec::new();
    match cfg.command {
        Command::Identities => run_identities(cfg, &mut rep),
        Command::Constants => run_constants(cfg, &mut rep)?,
        Command::CheckGeometry => run_check_geometry(cfg, &mut rep)?,
        Command::Quotient => run_quotient(cfg, &mut rep, &mut tables, jobs)?,
        Command::Sweep => run_sweep(cfg, &mut rep, &mut tables)?,
        Command::Minimize => run_minimize(cfg, &mut rep, &mut tables)?,
        Command::Report => {}
    }
    for t in &tables {
        let path = t.write(out_dir)?;
        rep.tables.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    rep.finish();
    rep.write_json(out_dir)?;
    Ok(rep)
}

fn exit_code(rep: &Report) -> i32 {
    if !rep.hypotheses_hold() {
        3
    } else if rep.all_passed() {
        0
    } else {
        2
    }
}

/// Richardson-extrapolated central difference used by the identity suite.
fn richardson_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let (d1, d2, d4) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

fn run_identities(cfg: &RunConfig, rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1d3);
    let mut worst_223 = 0.0f64;
    let mut worst_zeta = 0.0f64;
    for _ in 0..200 {
        // stay below 1 with margin for the finite-difference probes
        let t: f64 = rng.random_range(1e-4..0.99);
        for m in 1..=6 {
            let v = cascade::cascade_value(t, m).expect("t in (0,1)");
            let lhs = t * v.eta_prime();
            let rhs = 0.5 * v.zeta + 0.5 * v.eta * v.eta;
            worst_223 = worst_223.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
            let fd = richardson_diff(
                |s| cascade::cascade_value(s, m).expect("t in (0,1)").zeta,
                t,
                t * 5e-3,
            );
            worst_zeta =
                worst_zeta.max((v.zeta_prime() - fd).abs() / fd.abs().max(1e-300));
        }
    }
    rep.checks.push(
        Check::new("cascade_identity_2_23", worst_223 <= 1e-10, worst_223)
            .with_threshold(1e-10)
            .with_note("t·eta' = (zeta + eta²)/2, term-wise vs aggregate"),
    );
    rep.checks.push(
        Check::new("cascade_zeta_rate", worst_zeta <= 1e-8, worst_zeta)
            .with_threshold(1e-8)
            .with_note("zeta' = theta/t vs extrapolated finite differences"),
    );

    let mut worst_rule = 0.0f64;
    for _ in 0..50 {
        let t: f64 = rng.random_range(1e-3..0.95);
        let i: usize = 1 + (rng.random_range(0.0..4.0) as usize);
        let beta: f64 = rng.random_range(0.25..2.5);
        let exact = cascade::chain_power_derivative(t, i, beta).expect("valid");
        let fd = richardson_diff(
            |s| cascade::x_chain(s, i).expect("valid")[i - 1].powf(beta),
            t,
            t * 5e-3,
        );
        worst_rule = worst_rule.max((exact - fd).abs() / fd.abs().max(1e-300));
    }
    rep.checks.push(
        Check::new("cascade_power_rule", worst_rule <= 1e-8, worst_rule)
            .with_threshold(1e-8)
            .with_note("d/dt X_i^β = (β/t) X_1⋯X_{i-1} X_i^{1+β} vs finite differences"),
    );

    let mut worst_coeff = 0.0f64;
    for _ in 0..50 {
        let p: f64 = rng.random_range(1.001..5.0);
        let k: f64 = 2.0 * p + 0.1 + rng.random_range(0.0..15.0);
        let beta: f64 = rng.random_range(-2.0..2.0);
        if let Ok(idr) = constants::coefficient_identities(p, k, beta) {
            worst_coeff = worst_coeff.max(idr.max_residual);
        }
    }
    rep.checks.push(
        Check::new("rellich_coefficient_identities", worst_coeff <= 1e-9, worst_coeff)
            .with_threshold(1e-9)
            .with_note("r0 = Q^p, r1 = r2 = 0, r2' and P+|Q|^{p-2}Q = G"),
    );

    let mut worst_classic = 0.0f64;
    for c in constants::cross_check_classical() {
        worst_classic = worst_classic.max(c.rel_error);
    }
    rep.checks.push(
        Check::new("classical_cross_checks", worst_classic <= 1e-12, worst_classic)
            .with_threshold(1e-12),
    );
}

fn run_constants(cfg: &RunConfig, rep: &mut Report) -> Result<(), RunError> {
    let set = constants::rellich_constants(cfg.p, cfg.k)?;
    println!("{}", serde_json::to_string_pretty(&set).expect("serializes"));
    let residual =
        (set.p_const + set.q.abs().powf(cfg.p - 2.0) * set.q - set.g).abs() / set.q_abs_p;
    rep.checks.push(
        Check::new("constant_set_pg_identity", residual <= 1e-12, residual).with_threshold(1e-12),
    );
    if cfg.k + cfg.s != cfg.p {
        let params =
            constants::InequalityParams::new(cfg.p, cfg.s, cfg.k, cfg.m, 1.0)?
                .with_weights(cfg.alpha, cfg.beta, cfg.gamma);
        let hc = constants::hardy_constants(&params)?;
        println!("{}", serde_json::to_string_pretty(&hc).expect("serializes"));
    }
    Ok(())
}

fn run_check_geometry(cfg: &RunConfig, rep: &mut Report) -> Result<(), RunError> {
    let field = cfg.geometry.build()?;
    let samples = field.sample_interior(cfg.check_samples, cfg.seed);
    let report = geometry::check_condition(&field, cfg.k, cfg.s, cfg.p, &samples)?;
    let mut note = report.convex_note.clone().unwrap_or_default();
    if let Some(wf) = report.weak_form_max {
        note.push_str(&format!(" [weak-form max {wf:.3e}]"));
    }
    // the sign condition is the object under test here, so it is reported as
    // a check, not as a vacuous-run hypothesis
    rep.checks.push(
        Check::new("sign_condition", report.passed, report.min_value)
            .with_note(format!(
                "min of (k+s-p)(dΔd-k+1) over {} samples;{}",
                report.samples, note
            )),
    );
    Ok(())
}

fn d_scale_for(cfg: &RunConfig, field: &geometry::DistanceField) -> f64 {
    if cfg.d_scale > 0.0 {
        cfg.d_scale
    } else {
        field.sup_distance()
    }
}

fn run_quotient(
    cfg: &RunConfig,
    rep: &mut Report,
    tables: &mut Vec<CsvTable>,
    jobs: usize,
) -> Result<(), RunError> {
    let field = cfg.geometry.build()?;
    let sup_d = field.sup_distance();
    let d0 = d_scale_for(cfg, &field);

    // hypothesis: the sign condition for the Hardy side
    let samples = field.sample_interior(100, cfg.seed ^ 0x5eed);
    match geometry::check_condition(&field, cfg.k, cfg.s, cfg.p, &samples) {
        Ok(cond) => rep.hypotheses.push(
            Check::new("sign_condition", cond.passed, cond.min_value)
                .as_hypothesis()
                .with_note(cond.convex_note.unwrap_or_default()),
        ),
        Err(e) => rep.hypotheses.push(
            Check::new("sign_condition", false, f64::NAN)
                .as_hypothesis()
                .with_note(e.to_string()),
        ),
    }

    struct BumpOutcome {
        seed: u64,
        rows: Vec<Vec<String>>,
        checks: Vec<Check>,
        hypotheses: Vec<Check>,
    }
    let one_bump = |seed: u64| -> BumpOutcome {
        let mut checks = Vec::new();
        let mut hypotheses = Vec::new();
        let mut rows = Vec::new();
        let (profile, spec) = functionals::random_bump(sup_d, seed);
        match functionals::rellich_quotient(&profile, &field, cfg.p) {
            Ok(q) => {
                let set = constants::rellich_constants(cfg.p, q.k).expect("validated");
                let passed = q.ratio >= set.q_abs_p - 10.0 * q.ratio_error;
                checks.push(
                    Check::new(format!("bump{seed:04}_quotient"), passed, q.ratio)
                        .with_error(q.ratio_error)
                        .with_threshold(set.q_abs_p),
                );
                rows.push(vec![
                    seed.to_string(),
                    format!("{:?}", spec.support),
                    report::num(q.numerator.value),
                    report::num(q.denominator.value),
                    report::num(q.ratio),
                    report::num(q.ratio_error),
                ]);
            }
            Err(e) => checks.push(
                Check::new(format!("bump{seed:04}_quotient"), false, f64::NAN)
                    .with_note(e.to_string()),
            ),
        }
        match functionals::j_functional_with_search(&profile, &field, cfg.p, cfg.m, d0, 8) {
            Ok((j, d_used)) => {
                checks.push(
                    Check::new(format!("bump{seed:04}_j{}", cfg.m), j.value.passes(), j.value.value)
                        .with_error(j.value.error_bound)
                        .with_note(format!("D = {d_used}")),
                );
            }
            Err(e) => checks.push(
                Check::new(format!("bump{seed:04}_j{}", cfg.m), false, f64::NAN)
                    .with_note(e.to_string()),
            ),
        }
        if cfg.k + cfg.s != cfg.p {
            let params = constants::InequalityParams::new(cfg.p, cfg.s, cfg.k, cfg.m, d0)
                .expect("validated")
                .with_weights(cfg.alpha, cfg.beta, cfg.gamma);
            match functionals::hardy_deficit_with_search(&profile, &field, &params, 8) {
                Ok((h, d_used)) => {
                    checks.push(
                        Check::new(
                            format!("bump{seed:04}_hardy"),
                            h.deficit.passes(),
                            h.deficit.value,
                        )
                        .with_error(h.deficit.error_bound)
                        .with_note(format!("D = {d_used}, min psi = {}", h.psi_min)),
                    );
                }
                Err(functionals::FunctionalsError::PsiNotPositive { min_psi }) => {
                    hypotheses.push(
                        Check::new(format!("bump{seed:04}_psi_positive"), false, min_psi)
                            .as_hypothesis()
                            .with_note("weight 1+α·eta+β·eta²+γ·zeta not positive; D too small"),
                    );
                }
                Err(e) => checks.push(
                    Check::new(format!("bump{seed:04}_hardy"), false, f64::NAN)
                        .with_note(e.to_string()),
                ),
            }
        }
        BumpOutcome {
            seed,
            rows,
            checks,
            hypotheses,
        }
    };

    let seeds: Vec<u64> = (0..cfg.profile_count as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let mut outcomes = par_map(&seeds, jobs, |&s| one_bump(s));
    outcomes.sort_by_key(|o| o.seed);

    let mut rows = Vec::new();
    for mut o in outcomes {
        rows.append(&mut o.rows);
        rep.checks.append(&mut o.checks);
        rep.hypotheses.append(&mut o.hypotheses);
    }
    tables.push(CsvTable {
        name: "quotients".into(),
        comment: "per-bump Rellich quotients: seed, support, numerator, denominator, ratio, \
                  error bound"
            .into(),
        header: ["seed", "support", "numerator", "denominator", "ratio", "error_bound"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    });
    Ok(())
}

fn run_sweep(
    cfg: &RunConfig,
    rep: &mut Report,
    tables: &mut Vec<CsvTable>,
) -> Result<(), RunError> {
    let field = cfg.geometry.build()?;
    let d0 = d_scale_for(cfg, &field);
    if cfg.sweep_schedules.len() < 2 {
        return Err(RunError::Usage(
            "sweep needs sweep.schedules with at least 2 entries".into(),
        ));
    }
    let schedules: Vec<EpsilonSchedule> = cfg
        .sweep_schedules
        .iter()
        .map(|s| EpsilonSchedule::new(s.clone()))
        .collect::<Result<_, _>>()?;
    let mode = match cfg.sweep_mode {
        SweepModeSpec::Plain => SweepMode::PlainQuotient,
        SweepModeSpec::Improved => SweepMode::ImprovedRatio,
        SweepModeSpec::PowerProbe { eps } => SweepMode::PowerProbe { eps },
        SweepModeSpec::Hardy => SweepMode::HardyQuotient { s: cfg.s },
    };
    let m = schedules[0].depth();
    let base = ExtremizerSpec {
        p: cfg.p,
        m,
        d_scale: d0,
        schedule: schedules[0].clone(),
        r_in: cfg.sweep_r_in,
        window: (
            cfg.sweep_window.0 * field.sup_distance(),
            cfg.sweep_window.1 * field.sup_distance(),
        ),
    };
    let table = extremizers::epsilon_sweep(&field, &base, &schedules, mode)?;
    rep.data = Some(serde_json::to_value(&table).expect("table serializes"));

    let warn = if table.divergence_warning {
        "; divergence warning: r_in too large to expose denominator growth"
    } else {
        ""
    };
    rep.checks.push(
        Check::new(
            "sweep_strictly_decreasing",
            table.strictly_decreasing,
            table.rows.last().unwrap().ratio,
        )
        .with_note(format!("{} rows{warn}", table.rows.len())),
    );
    if let Some(target) = table.target {
        let one_sided = table
            .rows
            .iter()
            .all(|r| r.ratio >= target - 10.0 * r.error_bound);
        rep.checks.push(
            Check::new("sweep_one_sided_bound", one_sided, target).with_note(
                "every ratio stays above the sharp constant minus 10× the error bound",
            ),
        );
        match mode {
            SweepMode::PlainQuotient => {
                let last = table.rows.last().unwrap().ratio;
                rep.checks.push(
                    Check::new("sweep_final_within_5pct", last <= 1.05 * target, last)
                        .with_threshold(1.05 * target),
                );
            }
            SweepMode::ImprovedRatio => {
                let shrink = table.gap_shrink.unwrap_or(0.0);
                rep.checks.push(
                    Check::new("sweep_gap_shrink", shrink >= 0.3, shrink).with_threshold(0.3),
                );
            }
            // trend-only modes carry no extra closeness claim
            SweepMode::PowerProbe { .. } | SweepMode::HardyQuotient { .. } => {}
        }
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.schedule
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                report::num(r.numerator),
                report::num(r.denominator),
                report::num(r.ratio),
                report::num(r.error_bound),
                report::num(r.truncation_sensitivity),
                report::num(r.neg_log_r_in),
            ]
        })
        .collect();
    tables.push(CsvTable {
        name: "sweep".into(),
        comment: "epsilon sweep: schedule (eps_0..eps_m), numerator, denominator, ratio, \
                  error bound, truncation sensitivity, log(1/r_in)"
            .into(),
        header: [
            "schedule",
            "numerator",
            "denominator",
            "ratio",
            "error_bound",
            "truncation_sensitivity",
            "neg_log_r_in",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows,
    });
    Ok(())
}

fn run_minimize(
    cfg: &RunConfig,
    rep: &mut Report,
    tables: &mut Vec<CsvTable>,
) -> Result<(), RunError> {
    let field = cfg.geometry.build()?;
    let b = cfg
        .minimize_b
        .unwrap_or(field.sup_distance() * (1.0 - 1e-3));
    let levels = if cfg.minimize_levels >= 2 {
        varsolve::refine_study(&field, cfg.p, cfg.minimize_n, cfg.minimize_r_in, b, cfg.minimize_levels)?
    } else {
        let problem = varsolve::discrete_problem(&field, cfg.p, cfg.minimize_n, cfg.minimize_r_in, b)?;
        let res = varsolve::minimize_quotient(&problem)?;
        if cfg.dump_profile {
            let rows = problem
                .nodes()
                .iter()
                .zip(&res.minimizer)
                .map(|(&r, &u)| vec![report::num(r), report::num(u)])
                .collect();
            tables.push(CsvTable {
                name: "minimizer".into(),
                comment: "discrete minimizer profile: radius, value".into(),
                header: vec!["r".into(), "u".into()],
                rows,
            });
        }
        vec![varsolve::RefineLevel {
            n: res.n,
            r_in: res.r_in,
            min_value: res.min_value,
            residual: res.residual,
        }]
    };
    rep.data = Some(serde_json::to_value(&levels).expect("levels serialize"));
    let set = constants::rellich_constants(cfg.p, cfg.geometry.codim() as f64)?;
    let last = levels.last().unwrap();
    rep.checks.push(
        Check::new(
            "minimize_above_analytic",
            last.min_value >= set.q_abs_p * 0.95,
            last.min_value,
        )
        .with_threshold(set.q_abs_p * 0.95)
        .with_note(format!("analytic constant {}", set.q_abs_p)),
    );
    rep.checks.push(
        Check::new("minimize_residual", last.residual <= 1e-8, last.residual)
            .with_threshold(1e-8),
    );
    if levels.len() >= 2 {
        let monotone = levels.windows(2).all(|w| w[1].min_value <= w[0].min_value * (1.0 + 1e-9));
        rep.checks.push(Check::new(
            "minimize_levels_monotone",
            monotone,
            levels.len() as f64,
        ));
    }
    let rows = levels
        .iter()
        .map(|l| {
            vec![
                l.n.to_string(),
                report::num(l.r_in),
                report::num(l.min_value),
                report::num(l.residual),
            ]
        })
        .collect();
    tables.push(CsvTable {
        name: "minimize".into(),
        comment: "discrete minimization levels: nodes, r_in, minimum, residual".into(),
        header: ["n", "r_in", "min", "residual"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    });
    Ok(())
}

/// Order-preserving parallel map over a slice; `jobs ≤ 1` runs inline.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        for (slot_chunk, item_chunk) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in slot_chunk.iter_mut().zip(item_chunk) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("filled")).collect()
}

fn usage() -> String {
    "usage: rellich <identities|constants|check-geometry|quotient|sweep|minimize|report> \
     --config <path> [--out <dir>] [--seed <n>] [--jobs <n>]"
        .to_string()
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match main_with_args(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main_with_args(args: &[String]) -> Result<i32, RunError> {
    if args.is_empty() {
        return Err(RunError::Usage(usage()));
    }
    let command = Command::parse(&args[0])
        .ok_or_else(|| RunError::Usage(format!("unknown command {:?}\n{}", args[0], usage())))?;
    let mut config_path: Option<PathBuf> = None;
    let mut out_dir = PathBuf::from("out");
    let mut seed_override: Option<u64> = None;
    let mut jobs = 1usize;
    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        let mut value = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| RunError::Usage(format!("{name} needs a value\n{}", usage())))
        };
        match arg.as_str() {
            "--config" => config_path = Some(PathBuf::from(value("--config")?)),
            "--out" => out_dir = PathBuf::from(value("--out")?),
            "--seed" => {
                seed_override = Some(value("--seed")?.parse().map_err(|_| {
                    RunError::Usage("--seed needs an unsigned integer".into())
                })?)
            }
            "--jobs" => {
                jobs = value("--jobs")?
                    .parse()
                    .map_err(|_| RunError::Usage("--jobs needs a positive integer".into()))?
            }
            other => return Err(RunError::Usage(format!("unknown flag {other:?}\n{}", usage()))),
        }
    }
    let config_path =
        config_path.ok_or_else(|| RunError::Usage(format!("--config is required\n{}", usage())))?;
    let text = std::fs::read_to_string(&config_path)?;
    let mut cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return Ok(1);
        }
    };
    if cfg.command != command {
        return Err(RunError::Usage(format!(
            "command-line command {:?} does not match config command {:?}",
            command.name(),
            cfg.command.name()
        )));
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
        cfg.raw.insert("seed".into(), seed.to_string());
    }
    let rep = run(&cfg, &out_dir, jobs)?;
    let code = exit_code(&rep);
    for c in rep.hypotheses.iter().chain(&rep.checks) {
        let status = if c.passed { "pass" } else { "FAIL" };
        let kind = if c.hypothesis { "hypothesis" } else { "check" };
        println!("[{status}] {kind} {}: value {:.6e} {}", c.key, c.value, c.note);
    }
    println!(
        "{}: {} checks, {} hypotheses -> exit {code}",
        cfg.command.name(),
        rep.checks.len(),
        rep.hypotheses.len()
    );
    Ok(code)
}
