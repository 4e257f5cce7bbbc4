use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use setmdp_core::mdp::{greedy_policy, value_iteration};
use setmdp_core::nonstationary::{
    DeploymentComparison, DeploymentKind, DeploymentSetup, ParamSchedule, TrajectoryStats,
    DEFAULT_HORIZON, DEFAULT_SEEDS,
};
use setmdp_core::robust::{ordering_check, OrderingReport, RobustSolution};
use setmdp_core::setops::{
    algorithm1_envelope, hausdorff_distance, set_operator_apply, Direction, ValueSetParticles,
    DEFAULT_CAP, DEFAULT_EPS,
};
use setmdp_core::uncertainty::{
    is_s_rectangular, is_sa_rectangular, probe_containment, probe_containment_vertices,
    ContainmentProbeReport, DEFAULT_PROBE_SLACK,
};
use setmdp_core::windfield::{build_scenario, sampled_optimal_values, Region, WindConfig};
use setmdp_core::{ParamSet, ValueOperator, ValueVector};

use crate::error::{CliError, CliResult};
use crate::format::{load_param_set, load_policy, param_set_value};
use crate::output::{emit, fmt_f64, to_csv, to_json};

/// Environment variable holding the worker-thread count for multi-seed runs.
pub const THREADS_ENV: &str = "SETMDP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "setmdp", version, about = "Set-based value iteration for MDPs with uncertain parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Certified accuracy of every reported bound.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// Override the discount factor stored in the input.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorArg {
    Bellman,
    Optimistic,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Iid,
    Cyclic,
    GreedyUp,
    GreedyDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    /// Stationary fixed point of the deployed operator under the first member.
    Nominal,
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal value and greedy policy of a single MDP.
    Solve {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Certified lower/upper envelope of the fixed-point set.
    Bounds {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Bound the policy-evaluation operator of this policy instead of the
        /// Bellman operator.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Also run this many set-valued iterations on a particle cloud.
        #[arg(long, default_value_t = 0)]
        set_iterations: usize,
        /// Particle cap for the set-valued iterations.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Optimistic and robust values and policies.
    Robust {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the envelopes of the Bellman, optimistic and robust operators.
    Ordering {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// State reported in the CSV summary.
        #[arg(long, default_value_t = 0)]
        state: usize,
    },
    /// Value iteration under time-varying parameters.
    Simulate {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "robust")]
        operator: OperatorArg,
        /// Run the optimistic, robust and Bellman deployments side by side.
        #[arg(long)]
        compare: bool,
        #[arg(long, value_enum, default_value = "iid")]
        schedule: ScheduleArg,
        /// First seed; seeds `seed .. seed + seeds` are run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        /// Coordinate reported in summaries and traces.
        #[arg(long, default_value_t = 0)]
        state: usize,
        #[arg(long, value_enum, default_value = "nominal")]
        start: StartArg,
    },
    /// Build the wind-field benchmark.
    Windfield {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 9)]
        width: usize,
        #[arg(long, default_value_t = 9)]
        height: usize,
        /// Target cell as `i,j` (defaults to the top-right corner).
        #[arg(long, value_parser = parse_cell)]
        target: Option<(usize, usize)>,
        /// Emit the switching (finite) set instead of its convex hull.
        #[arg(long)]
        discrete: bool,
        /// Instead of the parameter set, solve this many MDPs estimated from
        /// sampled wind vectors and report their optimal values.
        #[arg(long)]
        sampled: Option<usize>,
        /// Wind samples per state-action pair for `--sampled`.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate an input and report its structural properties.
    Check {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_cell(text: &str) -> Result<(usize, usize), String> {
    let (i, j) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `i,j`, got `{text}`"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(i)?, parse(j)?))
}

/// Reads the worker-thread count (default 1).
pub fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be an integer >= 1, got `{text}`"
            ))),
        },
    }
}

/// Maps `f` over `items` on up to `threads` scoped threads. Results keep the
/// order of `items`, so the output does not depend on the thread count.
pub fn parallel_map<I, T, F>(items: &[I], threads: usize, f: F) -> CliResult<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> CliResult<T> + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<CliResult<Vec<T>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker thread panicked")?);
        }
        Ok(out)
    })
}

fn load(input: &Path, common: &Common) -> CliResult<ParamSet> {
    let ps = load_param_set(input)?;
    match common.gamma {
        Some(g) => ps.with_discount(g).map_err(|e| CliError::invalid("--gamma", e)),
        None => Ok(ps),
    }
}

fn check_eps(common: &Common) -> CliResult<()> {
    if !(common.eps > 0.0 && common.eps.is_finite()) {
        return Err(CliError::invalid("--eps", setmdp_core::Error::InvalidTolerance(common.eps)));
    }
    Ok(())
}

fn check_state(ps: &ParamSet, state: usize) -> CliResult<()> {
    if state >= ps.states() {
        return Err(CliError::Usage(format!(
            "--state {state} is out of range for {} states",
            ps.states()
        )));
    }
    Ok(())
}

fn render<T: Serialize>(common: &Common, json: &T, csv: impl FnOnce() -> String) -> CliResult<()> {
    let text = match common.format {
        Format::Json => to_json(json),
        Format::Csv => csv(),
    };
    emit(&text, common.out.as_deref())
}

fn floats(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|&x| fmt_f64(x))
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve { input, common } => solve(&input, &common),
        Command::Bounds {
            input,
            common,
            policy,
            set_iterations,
            cap,
        } => bounds(&input, &common, policy.as_deref(), set_iterations, cap),
        Command::Robust { input, common } => robust(&input, &common),
        Command::Ordering {
            input,
            common,
            state,
        } => ordering(&input, &common, state),
        Command::Simulate {
            input,
            common,
            operator,
            compare,
            schedule,
            seed,
            seeds,
            horizon,
            state,
            start,
        } => simulate(
            &input,
            &common,
            SimulateArgs {
                operator,
                compare,
                schedule,
                seed,
                seeds,
                horizon,
                state,
                start,
            },
        ),
        Command::Windfield {
            common,
            width,
            height,
            target,
            discrete,
            sampled,
            samples,
            seed,
        } => windfield(&common, width, height, target, discrete, sampled, samples, seed),
        Command::Check { input, common } => check(&input, &common),
    }
}

#[derive(Serialize)]
struct SolveOut {
    command: &'static str,
    states: usize,
    actions: usize,
    gamma: f64,
    eps: f64,
    iterations: usize,
    residual: f64,
    value: ValueVector,
    policy: Vec<usize>,
}

fn solve(input: &Path, common: &Common) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    if ps.member_count() != 1 {
        return Err(CliError::Unsupported(format!(
            "`solve` needs a single MDP but the input is a {} set with {} members; use `bounds` or `robust`",
            ps.variant_name(),
            ps.member_count()
        )));
    }
    let m = ps.nominal();
    let zero = ValueVector::zeros(m.states());
    let outcome = value_iteration(&m, &ValueOperator::Bellman, &zero, common.eps)?;
    let pi = greedy_policy(&outcome.value, &m)?;
    let policy: Vec<usize> = pi
        .rows()
        .map(|r| r.iter().position(|&p| p == 1.0).unwrap_or(0))
        .collect();
    let out = SolveOut {
        command: "solve",
        states: m.states(),
        actions: m.actions(),
        gamma: m.discount(),
        eps: common.eps,
        iterations: outcome.iterations,
        residual: outcome.residual,
        value: outcome.value,
        policy,
    };
    render(common, &out, || {
        to_csv(
            &["state", "value", "action"],
            (0..out.states).map(|s| vec![s.to_string(), fmt_f64(out.value[s]), out.policy[s].to_string()]),
        )
    })
}

#[derive(Serialize)]
struct SetIterationOut {
    steps: usize,
    cap: usize,
    particles: usize,
    exact: bool,
    hausdorff: Vec<f64>,
    lower: ValueVector,
    upper: ValueVector,
}

#[derive(Serialize)]
struct BoundsOut {
    command: &'static str,
    operator: &'static str,
    variant: &'static str,
    states: usize,
    gamma: f64,
    eps: f64,
    iterations: usize,
    residual: f64,
    lower: ValueVector,
    upper: ValueVector,
    box_lower: ValueVector,
    box_upper: ValueVector,
    residuals: Vec<f64>,
    containment: ContainmentProbeReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    set_iteration: Option<SetIterationOut>,
}

fn bounds(input: &Path, common: &Common, policy: Option<&Path>, set_iterations: usize, cap: usize) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    let op = match policy {
        Some(p) => ValueOperator::Evaluate(load_policy(p)?),
        None => ValueOperator::Bellman,
    };
    let zero = ValueVector::zeros(ps.states());
    let report = algorithm1_envelope(&ps, &op, &zero, common.eps)?;
    let set_iteration = if set_iterations > 0 {
        let mut cloud = ValueSetParticles::new(vec![zero.clone()], cap)?;
        let mut hausdorff = Vec::with_capacity(set_iterations);
        for _ in 0..set_iterations {
            let next = set_operator_apply(&cloud, &ps, &op)?;
            hausdorff.push(hausdorff_distance(&cloud, &next));
            cloud = next;
        }
        let (lo, hi) = cloud.envelope();
        Some(SetIterationOut {
            steps: set_iterations,
            cap,
            particles: cloud.len(),
            exact: cloud.is_exact(),
            hausdorff,
            lower: lo.clone(),
            upper: hi.clone(),
        })
    } else {
        None
    };
    let bx = report.inflated_box();
    let out = BoundsOut {
        command: "bounds",
        operator: report.operator,
        variant: report.variant,
        states: ps.states(),
        gamma: ps.discount(),
        eps: common.eps,
        iterations: report.iterations,
        residual: report.residual,
        residuals: report.trace.iter().map(|r| r.residual).collect(),
        lower: report.lower.clone(),
        upper: report.upper.clone(),
        box_lower: bx.lower,
        box_upper: bx.upper,
        containment: report.containment.clone(),
        set_iteration,
    };
    render(common, &out, || {
        let n = ps.states();
        let mut header = vec!["k".to_string()];
        header.extend((0..n).map(|s| format!("lower_{s}")));
        header.extend((0..n).map(|s| format!("upper_{s}")));
        header.push("residual".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        to_csv(
            &header,
            report.trace.iter().map(|row| {
                let mut rec = vec![row.k.to_string()];
                rec.extend(floats(&row.lower));
                rec.extend(floats(&row.upper));
                rec.push(fmt_f64(row.residual));
                rec
            }),
        )
    })
}

#[derive(Serialize)]
struct RobustOut {
    command: &'static str,
    states: usize,
    gamma: f64,
    eps: f64,
    #[serde(flatten)]
    solution: RobustSolution,
}

fn robust(input: &Path, common: &Common) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    let solution = RobustSolution::solve(&ps, common.eps)?;
    let out = RobustOut {
        command: "robust",
        states: ps.states(),
        gamma: ps.discount(),
        eps: common.eps,
        solution,
    };
    render(common, &out, || {
        let (o, r) = (&out.solution.optimistic.value, &out.solution.robust.value);
        to_csv(
            &["state", "optimistic", "robust"],
            (0..out.states).map(|s| vec![s.to_string(), fmt_f64(o[s]), fmt_f64(r[s])]),
        )
    })
}

#[derive(Serialize)]
struct OrderingOut {
    command: &'static str,
    states: usize,
    gamma: f64,
    all_hold: bool,
    #[serde(flatten)]
    report: OrderingReport,
}

/// `(set, max, min)` rows at one state, as in a table of extremal values.
pub fn ordering_table(report: &OrderingReport, state: usize) -> Vec<(&'static str, f64, f64)> {
    vec![
        ("bellman", report.upper_bellman[state], report.lower_bellman[state]),
        ("optimistic", report.upper_optimistic[state], report.lower_optimistic[state]),
        ("robust", report.upper_robust[state], report.lower_robust[state]),
    ]
}

fn ordering(input: &Path, common: &Common, state: usize) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    check_state(&ps, state)?;
    let report = ordering_check(&ps, common.eps)?;
    let out = OrderingOut {
        command: "ordering",
        states: ps.states(),
        gamma: ps.discount(),
        all_hold: report.all_hold(),
        report,
    };
    render(common, &out, || {
        to_csv(
            &["set", "state", "max", "min"],
            ordering_table(&out.report, state)
                .into_iter()
                .map(|(name, hi, lo)| vec![name.into(), state.to_string(), fmt_f64(hi), fmt_f64(lo)]),
        )
    })
}

struct SimulateArgs {
    operator: OperatorArg,
    compare: bool,
    schedule: ScheduleArg,
    seed: u64,
    seeds: usize,
    horizon: usize,
    state: usize,
    start: StartArg,
}

#[derive(Serialize)]
struct SimulateOut<'a> {
    command: &'static str,
    schedule: &'static str,
    seeds: Vec<u64>,
    horizon: usize,
    eps: f64,
    #[serde(flatten)]
    comparison: &'a DeploymentComparison,
}

fn simulate(input: &Path, common: &Common, args: SimulateArgs) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    check_state(&ps, args.state)?;
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let threads = thread_count()?;
    let kinds: Vec<DeploymentKind> = if args.compare {
        DeploymentKind::ALL.to_vec()
    } else {
        vec![match args.operator {
            OperatorArg::Bellman => DeploymentKind::Bellman,
            OperatorArg::Optimistic => DeploymentKind::Optimistic,
            OperatorArg::Robust => DeploymentKind::Robust,
        }]
    };
    let mut setup = DeploymentSetup::with_kinds(&ps, common.eps, &kinds)?;
    if args.start == StartArg::Zero {
        setup = setup.with_start(&ValueVector::zeros(ps.states()))?;
    }
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed.wrapping_add(i)).collect();
    let schedule_for = |seed: u64| match args.schedule {
        ScheduleArg::Iid => ParamSchedule::iid(seed, args.horizon),
        ScheduleArg::Cyclic => ParamSchedule::cyclic_members(&ps, args.horizon),
        ScheduleArg::GreedyUp => ParamSchedule::greedy(Direction::Upper, args.horizon),
        ScheduleArg::GreedyDown => ParamSchedule::greedy(Direction::Lower, args.horizon),
    };
    let runs: Vec<Vec<TrajectoryStats>> =
        parallel_map(&seeds, threads, |&seed| Ok(setup.run(&schedule_for(seed))?))?;
    let comparison = setup.aggregate(&runs, args.state)?;
    let schedule_name = match args.schedule {
        ScheduleArg::Iid => "iid",
        ScheduleArg::Cyclic => "cyclic",
        ScheduleArg::GreedyUp => "greedy_up",
        ScheduleArg::GreedyDown => "greedy_down",
    };
    let out = SimulateOut {
        command: "simulate",
        schedule: schedule_name,
        seeds: seeds.clone(),
        horizon: args.horizon,
        eps: common.eps,
        comparison: &comparison,
    };
    render(common, &out, || {
        let mut header = vec!["seed", "k", "coordinate", "value", "box_lower", "box_upper"];
        if args.compare {
            header.insert(0, "deployment");
        }
        let mut rows = Vec::new();
        for summary in &comparison.summaries {
            for (seed, trace) in seeds.iter().zip(&summary.traces) {
                for (k, &v) in trace.iter().enumerate() {
                    let mut rec = vec![
                        seed.to_string(),
                        k.to_string(),
                        args.state.to_string(),
                        fmt_f64(v),
                        fmt_f64(summary.box_lower),
                        fmt_f64(summary.box_upper),
                    ];
                    if args.compare {
                        rec.insert(0, summary.name.clone());
                    }
                    rows.push(rec);
                }
            }
        }
        to_csv(&header, rows)
    })
}

#[derive(Serialize)]
struct SampledOut {
    command: &'static str,
    mdps: usize,
    samples: usize,
    seed: u64,
    values: Vec<ValueVector>,
}

#[allow(clippy::too_many_arguments)]
fn windfield(
    common: &Common,
    width: usize,
    height: usize,
    target: Option<(usize, usize)>,
    discrete: bool,
    sampled: Option<usize>,
    samples: usize,
    seed: u64,
) -> CliResult<()> {
    let defaults = WindConfig::default();
    let config = WindConfig {
        width,
        height,
        target: target.unwrap_or((width.saturating_sub(1), height.saturating_sub(1))),
        discount: common.gamma.unwrap_or(defaults.discount),
        ..defaults
    };
    let scenario = build_scenario(&config).map_err(|e| CliError::invalid("windfield", e))?;
    if let Some(count) = sampled {
        check_eps(common)?;
        let values = sampled_optimal_values(&scenario, count, samples, seed, common.eps)?;
        let out = SampledOut {
            command: "windfield",
            mdps: count,
            samples,
            seed,
            values,
        };
        return render(common, &out, || {
            let mut rows = Vec::new();
            for (n, v) in out.values.iter().enumerate() {
                for s in 0..v.len() {
                    let (i, j) = scenario.coords(s);
                    rows.push(vec![n.to_string(), s.to_string(), i.to_string(), j.to_string(), fmt_f64(v[s])]);
                }
            }
            to_csv(&["mdp", "state", "i", "j", "value"], rows)
        });
    }
    let ps = if discrete {
        scenario.finite_param_set()?
    } else {
        scenario.mixture_param_set()?
    };
    render(common, &param_set_value(&ps), || {
        to_csv(
            &["state", "i", "j", "region"],
            (0..scenario.states()).map(|s| {
                let (i, j) = scenario.coords(s);
                let region = match scenario.region(s) {
                    Region::Calm => "calm",
                    Region::Gusty => "gusty",
                    Region::Unreliable => "unreliable",
                };
                vec![s.to_string(), i.to_string(), j.to_string(), region.into()]
            }),
        )
    })
}

#[derive(Serialize)]
struct CheckOut {
    command: &'static str,
    variant: &'static str,
    states: usize,
    actions: usize,
    gamma: f64,
    members: u128,
    s_rectangular: bool,
    sa_rectangular: bool,
    containment: ContainmentProbeReport,
}

fn check(input: &Path, common: &Common) -> CliResult<()> {
    check_eps(common)?;
    let ps = load(input, common)?;
    if common.format == Format::Csv {
        return Err(CliError::Unsupported("`check` only reports JSON".into()));
    }
    let op = ValueOperator::Bellman;
    let envelope = algorithm1_envelope(&ps, &op, &ValueVector::zeros(ps.states()), common.eps)?;
    let probes = [ValueVector::zeros(ps.states()), envelope.lower, envelope.upper];
    let containment = if ps.is_mixture() {
        probe_containment_vertices(&ps, &op, &probes, DEFAULT_PROBE_SLACK)?
    } else {
        probe_containment(&ps, &op, &probes, DEFAULT_PROBE_SLACK)?
    };
    let out = CheckOut {
        command: "check",
        variant: ps.variant_name(),
        states: ps.states(),
        actions: ps.actions(),
        gamma: ps.discount(),
        members: ps.member_count(),
        s_rectangular: is_s_rectangular(&ps),
        sa_rectangular: is_sa_rectangular(&ps),
        containment,
    };
    render(common, &out, String::new)
}
