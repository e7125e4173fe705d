//! Subcommand implementations.
//!
//! Each command builds the model from the shared configuration, runs one
//! analysis and writes its artifacts into the output directory. JSON is the
//! primary report format; `--format csv` writes flat tables with the same
//! content. Every writer is deterministic: no timestamps, ordered rows,
//! floats printed through the shortest round-trip formatting.

use std::fs;
use std::path::Path;

use serde::Serialize;

use marketspan::completeness::{completeness_check, CompletenessOptions, Verdict};
use marketspan::envelope::{time_analyticity_probe, RadiusProbe};
use marketspan::hedging::{convergence_study, replicate_claim, ConvergencePoint, HedgeOptions, HedgeReport};
use marketspan::model::{validate_assumptions, CheckRow, ValidationReport};
use marketspan::paths::{simulate_paths, SimOptions};
use marketspan::residuals::pde_residual;
use marketspan::solver::solve_backward;
use marketspan::stochvol::{verify_coefficient_conditions, run_flagship, ConditionReport, FlagshipMc};
use marketspan::{DiffusionModel, Payoff};

use crate::{CliError, Context, Format, Outcome};

/// Maps a claim name to the payoff the hedge or price run works on.
///
/// `derivative` and `call` are the model's own terminal claim; `digital` and
/// `put` reuse its strike and rate; `forward` is the traded forward asset at
/// the horizon; `one` is the constant unit claim (a digital with zero
/// strike), whose price field is identically one in a driftless market.
pub fn target_payoff(name: &str, model: &DiffusionModel) -> Result<Payoff, CliError> {
    match name {
        "derivative" | "call" => Ok(model.g.clone()),
        "digital" => {
            let rc = model.reduced_call.as_ref().ok_or_else(|| {
                CliError::Config(format!(
                    "target {name:?} needs a model with a registered strike"
                ))
            })?;
            Ok(Payoff::Digital { gamma: rc.gamma })
        }
        "put" => {
            let rc = model.reduced_call.as_ref().ok_or_else(|| {
                CliError::Config(format!(
                    "target {name:?} needs a model with a registered strike"
                ))
            })?;
            Ok(Payoff::Put {
                gamma: rc.gamma,
                rate: rc.rate,
            })
        }
        "forward" => Ok(Payoff::FieldAtHorizon(model.f.clone())),
        "one" => Ok(Payoff::Digital { gamma: 0.0 }),
        other => Err(CliError::Config(format!(
            "unknown target {other:?}, expected derivative, call, put, digital, forward or one"
        ))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

#[derive(Serialize)]
struct ProbeBlock {
    field: String,
    probes: Vec<RadiusProbe>,
}

#[derive(Serialize)]
struct ValidateBundle {
    validation: ValidationReport,
    conditions: Option<ConditionReport>,
    time_probes: Vec<ProbeBlock>,
}

fn write_validate(ctx: &Context, bundle: &ValidateBundle) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    match ctx.format {
        Format::Json => {
            write_json(&ctx.out_dir.join("validation.json"), bundle)?;
            files.push("validation.json".to_string());
        }
        Format::Csv => {
            let mut text = String::from("id,pass,margin,worst_t,worst_x1,worst_x2,detail\n");
            for r in &bundle.validation.rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.id,
                    r.pass,
                    r.margin,
                    r.worst_t,
                    r.worst_x[0],
                    r.worst_x[1],
                    csv_quote(&r.detail)
                ));
            }
            fs::write(ctx.out_dir.join("validation.csv"), text)?;
            files.push("validation.csv".to_string());
            if let Some(cond) = &bundle.conditions {
                let mut text = String::from("id,pass,observed,bound,witness_y,witness_p,detail\n");
                for r in &cond.rows {
                    text.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        r.id,
                        r.pass,
                        r.observed,
                        r.bound,
                        r.witness[0],
                        r.witness[1],
                        csv_quote(&r.detail)
                    ));
                }
                fs::write(ctx.out_dir.join("conditions.csv"), text)?;
                files.push("conditions.csv".to_string());
            }
            if !bundle.time_probes.is_empty() {
                let mut text = String::from("field,t,radius,reliable,method,detail\n");
                for block in &bundle.time_probes {
                    for p in &block.probes {
                        text.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            block.field,
                            p.t,
                            p.radius,
                            p.reliable,
                            csv_quote(&p.method),
                            csv_quote(&p.detail)
                        ));
                    }
                }
                fs::write(ctx.out_dir.join("probes.csv"), text)?;
                files.push("probes.csv".to_string());
            }
        }
    }
    Ok(files)
}

pub fn cmd_validate(ctx: &Context) -> Result<Outcome, CliError> {
    if let Some(detail) = ctx.config.degenerate_volatility() {
        let bundle = ValidateBundle {
            validation: ValidationReport {
                model: "constant_vol".to_string(),
                n_probes: 0,
                rows: vec![CheckRow {
                    id: "A1_uniform_ellipticity".to_string(),
                    pass: false,
                    margin: -1.0,
                    worst_t: 0.0,
                    worst_x: [0.0, 0.0],
                    detail,
                }],
            },
            conditions: None,
            time_probes: Vec::new(),
        };
        let files = write_validate(ctx, &bundle)?;
        println!(
            "validate: constant_vol assumptions FAIL (degenerate volatility), wrote {}",
            files.join(", ")
        );
        return Ok(Outcome::Diagnostic);
    }

    let model = ctx.config.build_model()?;
    let domain = model.default_domain(ctx.config.grid.half_width_sds)?;
    let diag = &ctx.config.diagnostics;
    let validation = validate_assumptions(&model, &domain, diag.n_probes);
    let conditions = match ctx.config.stochvol_params() {
        Some(params) => Some(verify_coefficient_conditions(params, 6)?),
        None => None,
    };

    // Heuristic analyticity probes on the drift and diffusion entries that
    // carry the time dependence; reported, never gating.
    let mut time_probes = Vec::new();
    if !diag.time_probe_grid.is_empty() {
        for field in [&model.b[0], &model.a[0][0]] {
            time_probes.push(ProbeBlock {
                field: field.name().to_string(),
                probes: time_analyticity_probe(field, &diag.time_probe_grid, diag.time_probe_order)?,
            });
        }
    }

    let bundle = ValidateBundle {
        validation,
        conditions,
        time_probes,
    };
    let files = write_validate(ctx, &bundle)?;

    let n_rows = bundle.validation.rows.len();
    let n_pass = bundle.validation.rows.iter().filter(|r| r.pass).count();
    let assumptions_ok = bundle.validation.passed();
    let conditions_ok = bundle.conditions.as_ref().is_none_or(|c| c.passed());
    let cond_note = match &bundle.conditions {
        Some(c) => format!(
            ", conditions {} ({}/{} rows)",
            if c.passed() { "PASS" } else { "FAIL" },
            c.rows.iter().filter(|r| r.pass).count(),
            c.rows.len()
        ),
        None => String::new(),
    };
    println!(
        "validate: {} assumptions {} ({n_pass}/{n_rows} rows){cond_note}, wrote {}",
        bundle.validation.model,
        if assumptions_ok { "PASS" } else { "FAIL" },
        files.join(", ")
    );
    if assumptions_ok && conditions_ok {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Diagnostic)
    }
}

#[derive(Serialize)]
struct PriceSummary {
    model: String,
    target: String,
    price0: f64,
    residual: marketspan::residuals::ResidualStats,
}

pub fn cmd_price(ctx: &Context) -> Result<Outcome, CliError> {
    let model = ctx.config.build_model()?;
    let grid = ctx.config.build_grid(&model)?;
    let target = target_payoff(&ctx.config.price.target, &model)?;
    let v = solve_backward(&model, &grid, &target)?;
    v.write_csv_path(&ctx.out_dir.join("price.csv"))?;
    let price0 = v.interpolate(0.0, model.x0).0;
    let residual = pde_residual(&model, &v, 0.1, 0.9, 2)?;
    let summary = PriceSummary {
        model: model.name.clone(),
        target: ctx.config.price.target.clone(),
        price0,
        residual,
    };
    match ctx.format {
        Format::Json => write_json(&ctx.out_dir.join("price.json"), &summary)?,
        Format::Csv => {
            let text = format!(
                "model,target,price0,residual_rms,residual_max_abs,residual_n,worst_t,worst_x1,worst_x2\n{},{},{},{},{},{},{},{},{}\n",
                summary.model,
                summary.target,
                summary.price0,
                summary.residual.rms,
                summary.residual.max_abs,
                summary.residual.n,
                summary.residual.worst_t,
                summary.residual.worst_x[0],
                summary.residual.worst_x[1]
            );
            fs::write(ctx.out_dir.join("price_summary.csv"), text)?;
        }
    }
    println!(
        "price: {} target {} v(0, x0) = {}, interior residual rms {}",
        summary.model, summary.target, summary.price0, summary.residual.rms
    );
    Ok(Outcome::Clean)
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::CompleteViaRank => "complete_via_rank",
        Verdict::CompleteViaPairing => "complete_via_pairing",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn cmd_complete(ctx: &Context) -> Result<Outcome, CliError> {
    let model = ctx.config.build_model()?;
    let domain = model.default_domain(ctx.config.grid.half_width_sds)?;
    let diag = &ctx.config.diagnostics;
    let opts = CompletenessOptions {
        n_probes: diag.completeness_probes,
        tol_rel: diag.near_singular_tol,
        max_singular_fraction: diag.max_singular_fraction,
        value_floor: diag.value_floor,
        error_factor: diag.error_factor,
        rel_floor: diag.rel_floor,
    };
    let report = completeness_check(&model, &domain, &opts)?;
    let mut text = report.to_json()?;
    text.push('\n');
    fs::write(ctx.out_dir.join("verdict.json"), text)?;
    if ctx.format == Format::Csv {
        let (witness, value) = match &report.pairing {
            Some(w) => (w.test_function.clone(), w.value),
            None => (String::new(), 0.0),
        };
        let text = format!(
            "model,verdict,growth_ok,near_singular_fraction,pairing_function,pairing_value\n{},{},{},{},{},{}\n",
            report.model,
            verdict_label(report.verdict),
            report.growth_ok,
            report.rank.fraction,
            witness,
            value
        );
        fs::write(ctx.out_dir.join("verdict.csv"), text)?;
    }
    println!(
        "complete: {} -> {} (near-singular fraction {})",
        report.model,
        verdict_label(report.verdict),
        report.rank.fraction
    );
    if report.verdict == Verdict::Inconclusive {
        Ok(Outcome::Diagnostic)
    } else {
        Ok(Outcome::Clean)
    }
}

#[derive(Serialize)]
struct HedgeBundle {
    target: String,
    report: HedgeReport,
    convergence: Vec<ConvergencePoint>,
}

fn write_convergence_csv(path: &Path, points: &[ConvergencePoint]) -> Result<(), CliError> {
    let mut text = String::from("n_steps,rmse,fallback_fraction\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.n_steps, p.rmse, p.fallback_fraction));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_hedge(ctx: &Context, target_name: &str) -> Result<Outcome, CliError> {
    let model = ctx.config.build_model()?;
    let grid = ctx.config.build_grid(&model)?;
    let target = target_payoff(target_name, &model)?;
    let v = solve_backward(&model, &grid, &model.g.clone())?;
    let mc = &ctx.config.mc;
    let bundle = simulate_paths(
        &model,
        &SimOptions {
            n_paths: mc.n_paths,
            n_steps: mc.n_steps,
            seed: ctx.seed,
            antithetic: mc.antithetic,
            workers: ctx.workers,
        },
    )?;
    let hopts = HedgeOptions {
        tol_rel_det: ctx.config.hedge.tol_rel_det,
        workers: ctx.workers,
    };
    let (report, _errors) = replicate_claim(&model, &v, &target, &bundle, &hopts)?;
    let convergence = if ctx.config.hedge.levels.is_empty() {
        Vec::new()
    } else {
        convergence_study(
            &model,
            &v,
            &target,
            ctx.config.hedge.paths,
            &ctx.config.hedge.levels,
            ctx.seed.wrapping_add(1),
            &hopts,
        )?
    };
    let bundle = HedgeBundle {
        target: target_name.to_string(),
        report,
        convergence,
    };
    match ctx.format {
        Format::Json => write_json(&ctx.out_dir.join("hedge.json"), &bundle)?,
        Format::Csv => {
            let r = &bundle.report;
            let text = format!(
                "target,n_paths,n_steps,price0,rmse,mean_error,max_abs_error,error_scale,fallback_events,fallback_fraction,clipped_fraction,min_rel_det\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.target,
                r.n_paths,
                r.n_steps,
                r.price0,
                r.rmse,
                r.mean_error,
                r.max_abs_error,
                r.error_scale,
                r.fallback_events,
                r.fallback_fraction,
                r.clipped_fraction,
                r.min_rel_det
            );
            fs::write(ctx.out_dir.join("hedge.csv"), text)?;
            write_convergence_csv(&ctx.out_dir.join("hedge_convergence.csv"), &bundle.convergence)?;
        }
    }
    println!(
        "hedge: target {} over {} paths x {} steps, rmse {} (scale {}), fallback fraction {}",
        bundle.target,
        bundle.report.n_paths,
        bundle.report.n_steps,
        bundle.report.rmse,
        bundle.report.error_scale,
        bundle.report.fallback_fraction
    );
    Ok(Outcome::Clean)
}

pub fn cmd_flagship(ctx: &Context) -> Result<Outcome, CliError> {
    let params = ctx.config.stochvol_params().ok_or_else(|| {
        CliError::Config("flagship requires a stochvol model section".to_string())
    })?;
    let model = ctx.config.build_model()?;
    let grid = ctx.config.build_grid(&model)?;
    let mc = FlagshipMc {
        n_paths: ctx.config.mc.n_paths,
        n_steps: ctx.config.mc.n_steps,
        hedge_paths: ctx.config.hedge.paths,
        hedge_levels: ctx.config.hedge.levels.clone(),
        seed: ctx.seed,
        workers: ctx.workers,
    };
    let summary = run_flagship(params, &grid, &mc, &ctx.out_dir)?;
    println!(
        "flagship: {} verdict {} price0 {} (mc {} +- {}), assumptions {}, conditions {}",
        summary.model,
        verdict_label(summary.verdict),
        summary.price0,
        summary.mc_price_mean,
        summary.mc_price_se,
        if summary.assumptions_passed { "PASS" } else { "FAIL" },
        if summary.conditions_passed { "PASS" } else { "FAIL" }
    );
    let clean = summary.assumptions_passed
        && summary.conditions_passed
        && summary.verdict != Verdict::Inconclusive;
    if clean {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Diagnostic)
    }
}
