//! Batch driver for the netbridge solvers: reads JSON problem descriptions,
//! runs the requested solve, and writes plot-ready artifacts.
//!
//! Subcommands:
//!
//! * `solve` — run a marginal or moment bridge and write `marginals.csv`
//!   (mass evolution, one row per time step), `flows_t{t}.dot` (per-interval
//!   edge flows), and `solution.json` (potentials, joint law, diagnostics).
//! * `verify` — solve a small instance and cross-check the joint law
//!   against the brute-force constrained-minimization oracle.
//! * `prior-info` — print spectral data for the graph and the time
//!   marginals of the prior.
//!
//! Exit codes: 0 success, 1 bad input or I/O failure, 2 solver
//! non-convergence, 3 infeasible constraints.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use netbridge::bridge::{
    kl_divergence, recover_flow, solve_bridge, BridgeSolution, PartialMarginal, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use netbridge::graph::{PERRON_MAX_ITER, PERRON_TOL};
use netbridge::io;
use netbridge::moments::{moment_bridge, to_bridge_solution, MomentSpec};
use netbridge::oracle::{bridge_constraints, brute_force_bridge, LinearConstraint};
use netbridge::prior::MarkovPrior;
use netbridge::Error;

/// Largest solver/oracle deviation `verify` accepts.
const VERIFY_TOL: f64 = 1e-6;

/// Prints one line to stdout. A broken pipe (the reader went away, e.g.
/// `netbridge ... | head`) is a normal way for a batch run to end, not a
/// failure; any other write error is.
fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let res = out
        .write_all(line.as_bytes())
        .and_then(|()| out.write_all(b"\n"));
    if let Err(e) = res {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(1);
    }
}

#[derive(Parser)]
#[command(
    name = "netbridge",
    version,
    about = "Entropy-optimal interpolation of mass over directed graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write marginals.csv, flows_t{t}.dot, solution.json.
    Solve(SolveArgs),
    /// Solve and cross-check the joint law against the brute-force oracle.
    Verify(ProblemArgs),
    /// Print spectral data and the time marginals of the prior.
    PriorInfo(PriorInfoArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Graph description (JSON); required by graph-derived priors.
    #[arg(long)]
    graph: Option<PathBuf>,

    /// Prior description (JSON).
    #[arg(long)]
    prior: PathBuf,

    /// Endpoint marginal constraints (JSON); exactly one of --marginals/--moments.
    #[arg(long)]
    marginals: Option<PathBuf>,

    /// Endpoint moment constraints (JSON); exactly one of --marginals/--moments.
    #[arg(long)]
    moments: Option<PathBuf>,

    /// Convergence tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// Iteration budget.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Artifact formats to emit (comma separated).
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = vec![Format::Csv, Format::Json, Format::Dot]
    )]
    format: Vec<Format>,
}

#[derive(Args)]
struct PriorInfoArgs {
    /// Graph description (JSON); enables the spectral lines.
    #[arg(long)]
    graph: Option<PathBuf>,

    /// Prior description (JSON).
    #[arg(long)]
    prior: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    /// marginals.csv — mass-evolution matrix, one row per time step.
    Csv,
    /// solution.json — potentials, joint law, diagnostics.
    Json,
    /// flows_t{t}.dot — one digraph per interval, edge labels = mass moved.
    Dot,
}

enum Constraint {
    Marginals {
        rho0: Option<PartialMarginal>,
        rho_n: Option<PartialMarginal>,
    },
    Moments(MomentSpec),
}

struct Instance {
    prior: MarkovPrior,
    constraint: Constraint,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; keep their exit 0. Real
            // usage errors fold into the generic bad-input code so that 2
            // stays reserved for non-convergence.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
        Command::PriorInfo(args) => cmd_prior_info(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed: deviation exceeds {VERIFY_TOL:e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::Stalled { .. } => 2,
        Error::Infeasible(_) | Error::InfeasibleMoments(_) => 3,
        _ => 1,
    }
}

fn load_instance(args: &ProblemArgs) -> netbridge::Result<Instance> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "tolerance must be a positive number, got {}",
            args.tol
        )));
    }
    if args.max_iter == 0 {
        return Err(Error::InvalidSpec(
            "iteration budget must be positive".into(),
        ));
    }
    let graph = args.graph.as_deref().map(io::load_graph).transpose()?;
    let prior = io::load_prior(&args.prior, graph.as_ref())?;
    let constraint = match (&args.marginals, &args.moments) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidSpec(
                "--marginals and --moments are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidSpec(
                "exactly one of --marginals or --moments is required".into(),
            ))
        }
        (Some(path), None) => {
            let (rho0, rho_n) = io::load_marginals(path, prior.n())?;
            Constraint::Marginals { rho0, rho_n }
        }
        (None, Some(path)) => Constraint::Moments(io::load_moments(path)?),
    };
    Ok(Instance { prior, constraint })
}

fn run_solver(inst: &Instance, tol: f64, max_iter: usize) -> netbridge::Result<BridgeSolution> {
    match &inst.constraint {
        Constraint::Marginals { rho0, rho_n } => {
            solve_bridge(&inst.prior, rho0.as_ref(), rho_n.as_ref(), tol, max_iter)
        }
        Constraint::Moments(spec) => {
            let (_, dual) = moment_bridge(&inst.prior, spec, tol, max_iter)?;
            if dual.near_degenerate {
                eprintln!(
                    "warning: multipliers near the feasibility boundary; \
                     the solution may be close to degenerate"
                );
            }
            to_bridge_solution(&inst.prior, &dual, spec)
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> netbridge::Result<()> {
    let inst = load_instance(&args.problem)?;
    let sol = run_solver(&inst, args.problem.tol, args.problem.max_iter)?;
    let flow = recover_flow(&inst.prior, &sol)?;
    fs::create_dir_all(&args.out)?;
    let mut written: Vec<String> = Vec::new();
    if args.format.contains(&Format::Csv) {
        fs::write(
            args.out.join("marginals.csv"),
            render_marginals_csv(&flow.marginals),
        )?;
        written.push("marginals.csv".into());
    }
    if args.format.contains(&Format::Dot) {
        for (t, f) in flow.edge_flows.iter().enumerate() {
            let name = format!("flows_t{t}.dot");
            fs::write(args.out.join(&name), render_flow_dot(t, f))?;
            written.push(name);
        }
    }
    if args.format.contains(&Format::Json) {
        io::write_solution(&args.out.join("solution.json"), &sol)?;
        written.push("solution.json".into());
    }
    if sol.iterations == 0 {
        emit("solved in closed form");
    } else {
        emit(&format!(
            "converged in {} iterations (residual {:.3e})",
            sol.iterations, sol.final_gap
        ));
    }
    emit(&format!("relative entropy from prior: {}", fmt10(sol.kl_value)));
    emit(&format!("wrote {} in {}", written.join(", "), args.out.display()));
    Ok(())
}

fn cmd_verify(args: &ProblemArgs) -> netbridge::Result<bool> {
    let inst = load_instance(args)?;
    let sol = run_solver(&inst, args.tol, args.max_iter)?;
    let p0n = inst.prior.endpoint_joint()?;
    let q_oracle = brute_force_bridge(&p0n, &oracle_constraints(&inst))?;
    let deviation = sol
        .q0n
        .iter()
        .zip(q_oracle.iter())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0, f64::max);
    let oracle_kl = kl_divergence(&q_oracle, &p0n)?;
    emit(&format!("max joint deviation: {}", fmt10(deviation)));
    emit(&format!("solver relative entropy: {}", fmt10(sol.kl_value)));
    emit(&format!("oracle relative entropy: {}", fmt10(oracle_kl)));
    Ok(deviation < VERIFY_TOL)
}

fn oracle_constraints(inst: &Instance) -> Vec<LinearConstraint> {
    let n = inst.prior.n();
    match &inst.constraint {
        Constraint::Marginals { rho0, rho_n } => {
            bridge_constraints(rho0.as_ref(), rho_n.as_ref(), n)
        }
        Constraint::Moments(spec) => {
            let values: Vec<f64> = match spec.node_values() {
                Some(v) => v.to_vec(),
                None => (1..=n).map(|i| i as f64).collect(),
            };
            let mut out = Vec::new();
            if let Some(m) = spec.m0_1() {
                out.push(LinearConstraint::initial_moment(&values, 1, m));
            }
            if let Some(m) = spec.m0_2() {
                out.push(LinearConstraint::initial_moment(&values, 2, m));
            }
            if let Some(m) = spec.mn_1() {
                out.push(LinearConstraint::final_moment(&values, 1, m));
            }
            if let Some(m) = spec.mn_2() {
                out.push(LinearConstraint::final_moment(&values, 2, m));
            }
            out
        }
    }
}

fn cmd_prior_info(args: &PriorInfoArgs) -> netbridge::Result<()> {
    let graph = args.graph.as_deref().map(io::load_graph).transpose()?;
    let prior = io::load_prior(&args.prior, graph.as_ref())?;
    if let Some(g) = &graph {
        let perron = g.perron(PERRON_TOL, PERRON_MAX_ITER)?;
        emit(&format!("adjacency spectral radius: {}", fmt10(perron.lambda)));
        emit(&format!("topological entropy: {}", fmt10(g.topological_entropy()?)));
    }
    for t in 0..=prior.horizon() {
        let m = prior.marginal(t)?;
        let cells: Vec<String> = m.iter().map(|&v| fmt10(v)).collect();
        emit(&format!("marginal t={t}: {}", cells.join(" ")));
    }
    Ok(())
}

/// One number, ten significant digits, scientific notation. Fixing the
/// formatting keeps every artifact byte-identical across runs.
fn fmt10(x: f64) -> String {
    format!("{x:.9e}")
}

fn render_marginals_csv(marginals: &Array2<f64>) -> String {
    let n = marginals.ncols();
    let mut out = String::new();
    let header: Vec<String> = (1..=n).map(|j| j.to_string()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in marginals.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt10(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn render_flow_dot(t: usize, flow: &Array2<f64>) -> String {
    let n = flow.nrows();
    let mut out = format!("digraph flows_t{t} {{\n");
    out.push_str("  rankdir=LR;\n");
    for i in 1..=n {
        out.push_str(&format!("  {i};\n"));
    }
    for i in 0..n {
        for j in 0..n {
            let mass = flow[[i, j]];
            if mass > 0.0 {
                out.push_str(&format!(
                    "  {} -> {} [label=\"{}\"];\n",
                    i + 1,
                    j + 1,
                    fmt10(mass)
                ));
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ten_digit_format_is_stable() {
        assert_eq!(fmt10(0.5), "5.000000000e-1");
        assert_eq!(fmt10(1.0), "1.000000000e0");
        assert_eq!(fmt10(0.0), "0.000000000e0");
        assert_eq!(fmt10(0.0806), "8.060000000e-2");
    }

    #[test]
    fn csv_layout_has_header_and_one_row_per_time() {
        let m = array![[0.5, 0.5], [0.25, 0.75], [0.0, 1.0]];
        let csv = render_marginals_csv(&m);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "1,2");
        assert_eq!(lines[1], "5.000000000e-1,5.000000000e-1");
        assert_eq!(lines[3], "0.000000000e0,1.000000000e0");
    }

    #[test]
    fn dot_output_skips_zero_flows() {
        let f = array![[0.0, 1.0], [0.0, 0.0]];
        let dot = render_flow_dot(0, &f);
        assert!(dot.starts_with("digraph flows_t0 {"));
        assert!(dot.contains("1 -> 2 [label=\"1.000000000e0\"];"));
        assert!(!dot.contains("2 -> 1"));
        assert!(dot.contains("  1;\n"));
    }

    #[test]
    fn exit_codes_partition_the_error_space() {
        assert_eq!(
            exit_code_for(&Error::NonConvergence {
                method: "x",
                iterations: 1,
                gap: 0.1
            }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::Stalled {
                iterations: 1,
                gap: 0.1
            }),
            2
        );
        assert_eq!(exit_code_for(&Error::Infeasible("m".into())), 3);
        assert_eq!(exit_code_for(&Error::InfeasibleMoments("m".into())), 3);
        assert_eq!(exit_code_for(&Error::InvalidSpec("m".into())), 1);
        assert_eq!(
            exit_code_for(&Error::Io(std::io::Error::other("m"))),
            1
        );
    }
}
