use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::equilibrium::{
    agreeable_at, demand_from, mutually_agreeable, pareto_check, solve_pepa, Allocation,
};
use crate::error::{Error, Result};
use crate::io::report::{self, DemandRow};
use crate::io::{load_model, LoadedModel};
use crate::risk::{inf_convolution, RiskEvaluator};
use crate::stability::{ramp_distribution, run_stability_sweep, FamilyKind, PerturbationFamily};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "equilibria", version, about = "Capital requirements and partial equilibria for contingent claims")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a model file.
    Validate { model: PathBuf },
    /// Solve for the equilibrium price and allocation of the bundle.
    Price { model: PathBuf },
    /// Tabulate one agent's demand along a price ray for one claim.
    DemandSweep {
        model: PathBuf,
        /// Agent index (0-based) or name.
        #[arg(long, default_value = "0")]
        agent: String,
        /// Claim index (0-based) within the bundle.
        #[arg(long, default_value_t = 0)]
        claim: usize,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of prices, endpoints included.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test whether the agents' optimizer measures at zero coincide.
    ParetoCheck { model: PathBuf },
    /// Decide whether an allocation is acceptable to all agents at some price.
    AgreeCheck {
        model: PathBuf,
        /// JSON array of rows, inline or as a file path; defaults to the
        /// equilibrium allocation.
        #[arg(long)]
        allocation: Option<String>,
    },
    /// Optimal sharing of one bundle claim among all agents.
    Infconv {
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        claim: usize,
    },
    /// Equilibria along a converging perturbation of the agents.
    StabilitySweep {
        model: PathBuf,
        #[arg(long, value_enum)]
        family: Family,
        /// Schedule length; weights are 2^-m for m = 0..length.
        #[arg(long, default_value_t = 21)]
        length: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Gamma,
    Endowment,
    Probs,
    Wealth,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ArbitrageDetected { .. }
        | Error::AssumptionViolated { .. }
        | Error::EmptyIntersection
        | Error::InfeasiblePolytope
        | Error::PriceOutsideRange { .. }
        | Error::DomainViolation(_) => EXIT_ASSUMPTION,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_IO,
    }
}

fn init_logging() {
    let env = env_logger::Env::default().filter("EQUILIBRIA_LOG");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Runs the command line with process stdout and stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the command line writing to the given sinks; returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn agent_index(model: &LoadedModel, key: &str) -> Result<usize> {
    if let Ok(i) = key.parse::<usize>() {
        if i < model.agents.len() {
            return Ok(i);
        }
    }
    model
        .agent_names
        .iter()
        .position(|n| n == key)
        .ok_or_else(|| Error::validation("agent", format!("no agent `{key}`")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_allocation(arg: &str) -> Result<Vec<Vec<f64>>> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)?
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("allocation line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            Ok(report::render(json!({
                "status": "ok",
                "states": m.market.num_states(),
                "assets": m.market.num_assets(),
                "agents": m.agents.len(),
                "claims": m.bundle.len(),
                "no_arbitrage_certificate": m.market.certificate(),
                "warnings": m.warnings,
            })))
        }
        Command::Price { model } => {
            let m = load_model(&model)?;
            let r = solve_pepa(&m.agents, &m.market, &m.bundle, &m.solver)?;
            Ok(report::render(report::pepa_json(&r, &m.agent_names, &m.claim_names)))
        }
        Command::DemandSweep {
            model,
            agent,
            claim,
            from,
            to,
            steps,
            out,
        } => {
            let m = load_model(&model)?;
            let i = agent_index(&m, &agent)?;
            if claim >= m.bundle.len() {
                return Err(Error::validation("claim", format!("index {claim} out of range")));
            }
            if steps == 0 {
                return Err(Error::validation("steps", "must be positive"));
            }
            let agent_model = &m.agents[i];
            let mut ev = RiskEvaluator::new(agent_model, &m.market)?;
            let base = m.bundle.prices_under(ev.measure_at_zero());
            let mut rows = Vec::with_capacity(steps);
            let mut start: Option<Vec<f64>> = None;
            for s in 0..steps {
                let t = if steps == 1 { 0.0 } else { s as f64 / (steps - 1) as f64 };
                let mut p = base.clone();
                p[claim] = from + t * (to - from);
                let z = demand_from(agent_model, &m.market, &m.bundle, &p, start.as_deref(), &m.solver)
                    .map_err(|e| match e {
                        Error::PriceOutsideRange { price, .. } => Error::PriceOutsideRange { agent: i, price },
                        other => other,
                    })?;
                let (_, g, _) = ev.r_and_grad(&m.bundle, &z)?;
                let residual = g.iter().zip(&p).fold(0.0_f64, |acc, (a, b)| acc.max((a + b).abs()));
                start = Some(z.clone());
                rows.push(DemandRow {
                    price: p,
                    demand: z,
                    residual,
                });
            }
            let decreasing = rows.windows(2).all(|w| {
                let d = w[1].demand[claim] - w[0].demand[claim];
                if to >= from {
                    d < 0.0
                } else {
                    d > 0.0
                }
            });
            let csv = report::demand_csv(&rows, &m.claim_names);
            let mut summary = json!({
                "agent": m.agent_names[i],
                "claim": m.claim_names[claim],
                "rows": rows.len(),
                "strictly_decreasing": decreasing,
                "max_residual": rows.iter().map(|r| r.residual).fold(0.0, f64::max),
            });
            if let Some(path) = &out {
                write_file(path, &csv)?;
                summary["csv"] = json!(path.display().to_string());
            } else {
                summary["table"] = json!(rows
                    .iter()
                    .map(|r| json!({ "price": r.price, "demand": r.demand, "residual": r.residual }))
                    .collect::<Vec<_>>());
            }
            Ok(report::render(summary))
        }
        Command::ParetoCheck { model } => {
            let m = load_model(&model)?;
            let p = pareto_check(&m.agents, &m.market)?;
            Ok(report::render(report::pareto_json(&p)))
        }
        Command::AgreeCheck { model, allocation } => {
            let m = load_model(&model)?;
            let (alloc, pepa) = match allocation {
                Some(arg) => (Allocation::new(parse_allocation(&arg)?)?, None),
                None => {
                    let r = solve_pepa(&m.agents, &m.market, &m.bundle, &m.solver)?;
                    (r.allocation.clone(), Some(r))
                }
            };
            let a = mutually_agreeable(&m.agents, &m.market, &m.bundle, &alloc)?;
            let mut v = report::agree_json(&a);
            v["allocation"] = json!(alloc.weights);
            if let Some(r) = pepa {
                let slack = agreeable_at(&m.agents, &m.market, &m.bundle, &alloc, &r.price)?;
                v["equilibrium_price"] = json!(r.price.0);
                v["max_requirement_at_equilibrium_price"] = json!(slack);
            }
            Ok(report::render(v))
        }
        Command::Infconv { model, claim } => {
            let m = load_model(&model)?;
            let c = m
                .bundle
                .claims()
                .get(claim)
                .ok_or_else(|| Error::validation("claim", format!("index {claim} out of range")))?;
            let ic = inf_convolution(&m.agents, &m.market, c)?;
            Ok(report::render(report::infconv_json(&ic, &m.agent_names)))
        }
        Command::StabilitySweep {
            model,
            family,
            length,
            out,
        } => {
            let m = load_model(&model)?;
            let kind = match family {
                Family::Gamma => FamilyKind::Gamma,
                Family::Endowment => FamilyKind::Endowment,
                Family::Probs => FamilyKind::Probs {
                    target: ramp_distribution(m.market.num_states()),
                },
                Family::Wealth => FamilyKind::Wealth,
            };
            let fam = PerturbationFamily::geometric(kind, m.agents.clone(), length);
            let r = run_stability_sweep(&fam, &m.market, &m.bundle, &m.solver)?;
            let csv = report::sweep_csv(&r, &m.agent_names, &m.claim_names);
            let path = out.as_ref().map(|p| p.display().to_string());
            if let Some(p) = &out {
                write_file(p, &csv)?;
            }
            Ok(report::render(report::sweep_json(&r, path.as_deref())))
        }
    }
}
