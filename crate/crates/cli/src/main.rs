use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use eacc_cli::emit::emit_trace;
use eacc_cli::scenario::{parse_scenario, policy_name};
use eacc_core::channel::{feasible_activations, sample_channels};
use eacc_core::energy::generate_credits;
use eacc_core::engine::{run, run_with, Policy, ScenarioConfig, Summary, TraceRecord};
use eacc_core::model::SystemState;
use eacc_core::oracle::{solve_num, utility_gap, verify_maxweight, AverageModel, VerifyParams};

/// Slotted-time simulator for energy-aware cooperative computation among a
/// source and a group of D2D-connected devices.
#[derive(Parser)]
#[command(name = "eacc", version, about)]
struct Cli {
    /// Scenario file (TOML; see the repository README for the format)
    #[arg(long)]
    scenario: PathBuf,

    /// Override the scenario's control policy
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,

    /// Override the scenario's slot count
    #[arg(long)]
    slots: Option<u64>,

    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,

    /// Write trace.csv and summary.txt into this directory
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also solve the offline utility optimum (grid 0.01) and print the gap
    #[arg(long)]
    oracle: bool,

    /// Re-check sampled report-fresh slots against the exhaustive decision
    /// grid (needs at most 2 devices)
    #[arg(long)]
    verify: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Eacc,
    NoCoop,
    Coop,
}

impl From<PolicyArg> for Policy {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Eacc => Policy::Eacc,
            PolicyArg::NoCoop => Policy::NoCooperation,
            PolicyArg::Coop => Policy::CooperationOnly,
        }
    }
}

enum CliError {
    /// Bad scenario or flags: exit code 2.
    Config(String),
    /// Failure while running or writing results: exit code 1.
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run_cli(cli: &Cli) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&cli.scenario)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.scenario.display())))?;
    let mut config = parse_scenario(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(policy) = cli.policy {
        config.policy = policy.into();
    }
    if let Some(slots) = cli.slots {
        config.slots = slots;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    let summary = if let Some(out_dir) = &cli.out {
        let (trace, summary) = run(&config).map_err(|e| CliError::Runtime(e.to_string()))?;
        let (trace_path, summary_path) =
            emit_trace(&trace, &summary, out_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
        println!(
            "wrote {} and {}",
            trace_path.display(),
            summary_path.display()
        );
        summary
    } else {
        run_with(&config, |_, _| {}).map_err(|e| CliError::Runtime(e.to_string()))?
    };
    print_summary(&config, &summary);

    if cli.oracle {
        let model = AverageModel::from_config(&config);
        let (y_star, value) = solve_num(&model, &config.constants.utility, 0.01)
            .map_err(|e| CliError::Config(e.to_string()))?;
        println!(
            "oracle: y*={} value={value:.6} achieved={:.6} gap={:.6}",
            fmt_vec(&y_star),
            summary.sum_utility,
            utility_gap(&summary, value),
        );
    }

    if cli.verify {
        let (ok, total) = verify_sampled_slots(&config)?;
        println!(
            "verify: {ok}/{total} sampled report-fresh slots maximize the per-slot objective \
             (grid resolution 1)"
        );
        if ok != total {
            return Err(CliError::Runtime("max-weight verification failed".into()));
        }
    }
    Ok(())
}

fn print_summary(config: &ScenarioConfig, summary: &Summary) {
    println!(
        "policy={} slots={} seed={} delivered={} admitted={} utility={:.4} mean_backlog={:.2}",
        policy_name(config.policy),
        summary.slots,
        config.seed,
        fmt_vec(&summary.mean_delivered_rate),
        fmt_vec(&summary.mean_admitted_rate),
        summary.sum_utility,
        summary.mean_backlog,
    );
}

fn fmt_vec(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", inner.join(","))
}

/// Replays the run, keeping up to 100 evenly spaced slots where the queue
/// reports are fresh, and checks each recorded decision against the
/// exhaustive decision grid.
fn verify_sampled_slots(config: &ScenarioConfig) -> Result<(usize, usize), CliError> {
    if config.n_devices > 2 {
        return Err(CliError::Config(format!(
            "--verify supports at most 2 devices, scenario has {}",
            config.n_devices
        )));
    }
    let period = config.report_period_slots;
    let reports = (config.slots / period).max(1);
    let stride = (reports / 100).max(1);

    let mut samples: Vec<(SystemState, TraceRecord)> = Vec::new();
    run_with(config, |state, record| {
        if record.slot.is_multiple_of(period)
            && (record.slot / period).is_multiple_of(stride)
            && samples.len() < 100
        {
            samples.push((state.clone(), record.clone()));
        }
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    // The verification constants carry the work-factor-adjusted budgets the
    // controllers actually ran with.
    let mut constants = config.constants.clone();
    for dev in 0..config.n_devices {
        constants.d_max[dev] = config.effective_d_max(dev);
    }

    let total = samples.len();
    let mut ok = 0;
    for (state, record) in samples {
        // Reconstruct what the controllers saw: fresh reports and the
        // slot's credit allowance.
        let mut fresh = state.clone();
        fresh.reported_u = state.u.clone();
        for dev in 0..config.n_devices {
            let allowance = generate_credits(state.batteries[dev], &config.battery[dev]);
            fresh.credits.row_mut(dev).fill(allowance);
        }
        let channels = sample_channels(config.seed, record.slot, &config.channel)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let activations = feasible_activations(config.mode, &channels, config.enumeration_limit)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let params = VerifyParams {
            constants: &constants,
            receivers: &config.receivers,
            resolution: 1.0,
            tolerance: 1e-6,
        };
        if verify_maxweight(&fresh, &record.decision, &activations, &params)
            .map_err(|e| CliError::Runtime(e.to_string()))?
        {
            ok += 1;
        }
    }
    Ok((ok, total))
}
