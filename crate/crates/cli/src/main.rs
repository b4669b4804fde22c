//! Command-line front end: exact orbit evaluation, induction traces, tower
//! construction, the non-reversibility criterion pipeline, and the joining
//! discrepancy table.
//!
//! Exit codes are part of the contract:
//!   0 success (criterion: SATISFIED)
//!   2 usage error
//!   3 invalid config or rejected input
//!   4 domain error
//!   5 exact length tie stops the induction
//!   6 INCONCLUSIVE
//!   7 FAILED_MASS
//!   8 FAILED_SYMMETRY
//!   9 internal error

use clap::{Parser, Subcommand};
use ietflow::criterion::{theorem_pipeline, CriterionError, PipelineParams, Verdict};
use ietflow::iet::{IetConfig, IetSpec, KeaneCheck};
use ietflow::interval::Interval;
use ietflow::joinings::{joining_convergence_check, FlowRect, RectTriple};
use ietflow::rauzy::{induct_partial, RauzyError};
use ietflow::roof::{center_on_tower, PiecewiseRoof, RoofConfig};
use ietflow::towers::{
    build_w_constant, build_w_linear, ReferenceChoice, RigidityTower, TowerBudget, TowerError,
};
use ietflow::Scalar;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 3;
const EXIT_DOMAIN: u8 = 4;
const EXIT_TIE: u8 = 5;
const EXIT_INCONCLUSIVE: u8 = 6;
const EXIT_FAILED_MASS: u8 = 7;
const EXIT_FAILED_SYMMETRY: u8 = 8;
const EXIT_INTERNAL: u8 = 9;

#[derive(Parser)]
#[command(
    name = "ietflow",
    about = "Exact interval exchange transformations, renormalization towers and \
             special-flow reversibility diagnostics",
    version
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print T^n(x) for the configured exchange.
    Apply {
        #[arg(long)]
        x: String,
        #[arg(short, long, default_value_t = 1)]
        n: i64,
    },
    /// Print the orbit segment x, Tx, ..., T^n x (one exact value per line).
    Orbit {
        #[arg(long)]
        x: String,
        #[arg(short, long, default_value_t = 0)]
        n: i64,
    },
    /// Bounded-depth search for forbidden endpoint-orbit coincidences.
    Keane {
        #[arg(long, default_value_t = 50)]
        depth: u64,
    },
    /// Run n induction steps and print the trace as JSON.
    Induct {
        #[arg(short, long)]
        n: usize,
    },
    /// Build rigidity towers and print them as JSON.
    Towers {
        /// Construction to use: "linear" or "constant".
        #[arg(long, default_value = "linear")]
        case: String,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Full criterion pipeline; prints the report as JSON.
    Criterion {
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
        /// Write the atom histogram as CSV to this path.
        #[arg(long)]
        histogram: Option<String>,
    },
    /// Joining discrepancy table over a rectangle family; prints CSV.
    Joining {
        /// JSON file with a list of {"base": [lo, hi], "band": [lo, hi]}.
        #[arg(long)]
        rects: String,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Debug, Clone, Deserialize)]
struct RunConfig {
    iet: IetConfig,
    #[serde(default)]
    roof: Option<RoofConfig>,
    #[serde(default)]
    params: ParamsConfig,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize, Default)]
struct ParamsConfig {
    epsilon: Option<String>,
    budget: Option<usize>,
    #[allow(dead_code)]
    depth: Option<usize>,
    samples: Option<u64>,
    seed: Option<u64>,
    r: Option<usize>,
    max_hits: Option<usize>,
    /// Reference length vector for the positive-return matrix.
    reference_lengths: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
struct OutputConfig {
    #[allow(dead_code)]
    #[serde(default = "default_format")]
    format: String,
    #[serde(default = "default_precision")]
    precision: usize,
}

fn default_format() -> String {
    "json".into()
}
fn default_precision() -> usize {
    12
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            format: default_format(),
            precision: default_precision(),
        }
    }
}

#[derive(Serialize)]
struct ErrorPayload<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    at_step: Option<usize>,
}

fn fail(kind: &str, message: String, at_step: Option<usize>, code: u8) -> ExitCode {
    let payload = ErrorPayload {
        error: kind,
        message,
        at_step,
    };
    eprintln!("{}", serde_json::to_string(&payload).expect("serializable"));
    ExitCode::from(code)
}

fn load_config(path: &Option<String>) -> Result<RunConfig, String> {
    let path = path.as_ref().ok_or("missing --config")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("read {path}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("parse {path}: {e}"))
}

fn build_iet(cfg: &RunConfig) -> Result<IetSpec, String> {
    cfg.iet.build()
}

fn build_roof(cfg: &RunConfig) -> Result<PiecewiseRoof, String> {
    let roof_cfg = cfg.roof.as_ref().ok_or("config has no roof section")?;
    let roof = roof_cfg.build()?;
    // consistency: an explicit r must match the roof's discontinuity count,
    // and zero-slope-sum (constant-case) runs must declare r
    if let Some(r) = cfg.params.r {
        let jumps = roof.jumps().len();
        if roof.is_piecewise_constant() && r != jumps {
            return Err(format!(
                "params.r = {r} does not match the roof's {jumps} discontinuities"
            ));
        }
    } else if roof.is_piecewise_constant() && roof.sum_of_jumps().is_zero() {
        return Err("constant-case runs require params.r".into());
    }
    Ok(roof)
}

fn parse_scalar(s: &str) -> Result<Scalar, String> {
    s.parse::<Scalar>().map_err(|e| e.to_string())
}

fn budget_from(cfg: &RunConfig, override_budget: Option<usize>) -> TowerBudget {
    let max_steps = override_budget
        .or(cfg.params.budget)
        .unwrap_or(TowerBudget::default().max_steps);
    TowerBudget {
        max_steps,
        max_hits: cfg.params.max_hits.unwrap_or(4),
        max_height: 1 << 22,
    }
}

fn reference_from(cfg: &RunConfig) -> Result<ReferenceChoice, String> {
    match &cfg.params.reference_lengths {
        None => Ok(ReferenceChoice::default()),
        Some(strings) => {
            let lambda0: Vec<Scalar> = strings
                .iter()
                .map(|s| parse_scalar(s))
                .collect::<Result<_, _>>()?;
            Ok(ReferenceChoice {
                lambda0: Some(lambda0),
            })
        }
    }
}

fn epsilon_from(cfg: &RunConfig, flag: &Option<String>) -> Result<Scalar, String> {
    let s = flag
        .clone()
        .or_else(|| cfg.params.epsilon.clone())
        .unwrap_or_else(|| "1/5".to_string());
    parse_scalar(&s)
}

fn tower_error_exit(e: &TowerError) -> u8 {
    match e {
        TowerError::Rauzy(RauzyError::KeaneViolation { .. }) => EXIT_TIE,
        TowerError::BudgetExhausted { .. } => EXIT_INCONCLUSIVE,
        TowerError::InvalidR(_)
        | TowerError::NotNormalized
        | TowerError::ParameterInfeasible(_)
        | TowerError::DuplicateBeta => EXIT_CONFIG,
        _ => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("IETFLOW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => fail("internal", msg, None, EXIT_INTERNAL),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Apply { x, n } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let x = match parse_scalar(x) {
                Ok(v) => v,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            match iet.apply(&x, *n) {
                Ok(v) => {
                    println!("{v}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail("domain", e.to_string(), None, EXIT_DOMAIN)),
            }
        }
        Command::Orbit { x, n } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let x = match parse_scalar(x) {
                Ok(v) => v,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            match iet.orbit(&x, *n) {
                Ok(points) => {
                    let mut out = std::io::stdout().lock();
                    for p in points {
                        writeln!(out, "{p}").map_err(|e| e.to_string())?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail("domain", e.to_string(), None, EXIT_DOMAIN)),
            }
        }
        Command::Keane { depth } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let result = ietflow::iet::keane_check(&iet, *depth);
            println!("{}", serde_json::to_string_pretty(&result).unwrap());
            match result {
                KeaneCheck::Ok => Ok(ExitCode::SUCCESS),
                KeaneCheck::Violation { .. } => Ok(ExitCode::from(EXIT_TIE)),
            }
        }
        Command::Induct { n } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            match induct_partial(iet.pi(), iet.lengths(), *n) {
                Ok(trace) if trace.n == *n => {
                    println!("{}", serde_json::to_string_pretty(&trace).unwrap());
                    Ok(ExitCode::SUCCESS)
                }
                Ok(trace) => Ok(fail(
                    "keane_violation",
                    "exact tie stops the induction".into(),
                    Some(trace.n + 1),
                    EXIT_TIE,
                )),
                Err(e) => Ok(fail("internal", e.to_string(), None, EXIT_INTERNAL)),
            }
        }
        Command::Towers {
            case,
            epsilon,
            budget,
        } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i.normalized(),
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let eps = match epsilon_from(&cfg, epsilon) {
                Ok(e) => e,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let reference = match reference_from(&cfg) {
                Ok(r) => r,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let bud = budget_from(&cfg, *budget);
            let towers: Result<Vec<RigidityTower>, TowerError> = match case.as_str() {
                "linear" => build_w_linear(&iet, &eps, bud, &reference),
                "constant" => {
                    let r = match cfg.params.r {
                        Some(r) => r,
                        None => {
                            return Ok(fail(
                                "config",
                                "constant-case towers require params.r".into(),
                                None,
                                EXIT_CONFIG,
                            ))
                        }
                    };
                    build_w_constant(&iet, &eps, r, bud, &reference)
                }
                other => {
                    return Ok(fail(
                        "config",
                        format!("unknown case `{other}`"),
                        None,
                        EXIT_CONFIG,
                    ))
                }
            };
            match towers {
                Ok(ts) => {
                    println!("{}", serde_json::to_string_pretty(&ts).unwrap());
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    let code = tower_error_exit(&e);
                    Ok(fail("towers", e.to_string(), None, code))
                }
            }
        }
        Command::Criterion {
            epsilon,
            budget,
            histogram,
        } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let roof = match build_roof(&cfg) {
                Ok(r) => r,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let eps = match epsilon_from(&cfg, epsilon) {
                Ok(e) => e,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let reference = match reference_from(&cfg) {
                Ok(r) => r,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let params = PipelineParams {
                epsilon: eps,
                budget: budget_from(&cfg, *budget),
                reference,
                ..Default::default()
            };
            match theorem_pipeline(&iet, &roof, &params) {
                Ok(report) => {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap());
                    if let (Some(path), Some(xi)) = (histogram, &report.xi_p) {
                        let mut csv = String::from("value,mass\n");
                        for (v, m) in &xi.atoms {
                            csv.push_str(&format!(
                                "{},{}\n",
                                v.to_decimal(cfg.output.precision),
                                m.to_decimal(cfg.output.precision)
                            ));
                        }
                        std::fs::write(path, csv).map_err(|e| e.to_string())?;
                    }
                    let code = match report.verdict {
                        Verdict::Satisfied => return Ok(ExitCode::SUCCESS),
                        Verdict::FailedMass => EXIT_FAILED_MASS,
                        Verdict::FailedSymmetry => EXIT_FAILED_SYMMETRY,
                        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
                    };
                    Ok(ExitCode::from(code))
                }
                Err(e) => {
                    let code = match &e {
                        CriterionError::Tower(t) => tower_error_exit(t),
                        CriterionError::OppositeJumps(_, _)
                        | CriterionError::CaseUnsupported(_)
                        | CriterionError::JumpOffExchange
                        | CriterionError::BadAlpha(_) => EXIT_CONFIG,
                        CriterionError::Iet(_) | CriterionError::Roof(_) => EXIT_DOMAIN,
                        _ => EXIT_INTERNAL,
                    };
                    Ok(fail("criterion", e.to_string(), None, code))
                }
            }
        }
        Command::Joining {
            rects,
            samples,
            seed,
            epsilon,
            budget,
        } => {
            let cfg = match load_config(&cli.config) {
                Ok(c) => c,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let iet = match build_iet(&cfg) {
                Ok(i) => i.normalized(),
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let roof = match build_roof(&cfg) {
                Ok(r) => r,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let triples = match load_rects(rects) {
                Ok(t) => t,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            println!("depth,rect_id,lhs,rhs,stderr,flag");
            if triples.is_empty() {
                return Ok(ExitCode::SUCCESS);
            }
            let eps = match epsilon_from(&cfg, epsilon) {
                Ok(e) => e,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let reference = match reference_from(&cfg) {
                Ok(r) => r,
                Err(m) => return Ok(fail("config", m, None, EXIT_CONFIG)),
            };
            let bud = budget_from(&cfg, *budget);
            let towers = match build_w_linear(&iet, &eps, bud, &reference) {
                Ok(t) => t,
                Err(e) => {
                    let code = tower_error_exit(&e);
                    return Ok(fail("towers", e.to_string(), None, code));
                }
            };
            let a_n: Vec<Scalar> = towers
                .iter()
                .map(|t| center_on_tower(roof.function(), &t.delta, &t.translations))
                .collect();
            let n_samples = samples.or(cfg.params.samples).unwrap_or(10_000);
            let seed = seed.or(cfg.params.seed).unwrap_or(0);
            match joining_convergence_check(&roof, &iet, &towers, &a_n, &triples, n_samples, seed)
            {
                Ok(rows) => {
                    let precision = cfg.output.precision;
                    let mut out = std::io::stdout().lock();
                    for row in rows {
                        writeln!(
                            out,
                            "{},{},{},{},{:.6e},{}",
                            row.depth,
                            row.rect_id,
                            row.lhs.value.to_decimal(precision),
                            row.rhs.value.to_decimal(precision),
                            row.combined_sigma,
                            row.flag
                        )
                        .map_err(|e| e.to_string())?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(fail("joining", e.to_string(), None, EXIT_INTERNAL)),
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct RectConfig {
    base: [String; 2],
    band: [String; 2],
}

fn load_rects(path: &str) -> Result<Vec<RectTriple>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("read {path}: {e}"))?;
    let rects: Vec<RectConfig> =
        serde_json::from_str(&text).map_err(|e| format!("parse {path}: {e}"))?;
    rects
        .iter()
        .enumerate()
        .map(|(i, rc)| -> Result<RectTriple, String> {
            let base = Interval::new(parse_scalar(&rc.base[0])?, parse_scalar(&rc.base[1])?);
            let band = Interval::new(parse_scalar(&rc.band[0])?, parse_scalar(&rc.band[1])?);
            let rect = FlowRect { base, band };
            Ok(RectTriple {
                id: format!("r{i}"),
                a: rect.clone(),
                b: rect.clone(),
                c: rect,
            })
        })
        .collect()
}
