use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mflq_core::experiment::{
    self, reproduce_figure, run_study, simulate_decentralized, synthesize, FIGURE_SEED,
};
use mflq_core::sim::{evaluate_costs, meanfield_gap, write_study_csv, write_trajectory_csv};
use mflq_core::{
    stability, Error, ErrorCategory, ExperimentConfig, Gains, StudyOutcome, StudySpec,
};

/// Mean field LQ social control and games: synthesis, stability analysis,
/// simulation and studies.
#[derive(Parser)]
#[command(name = "mflq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the simulations.
    #[arg(long, global = true, env = "MFLQ_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the control gains and write gains.json.
    Synth,
    /// Check the stabilization conditions and write stabilization.json.
    Stabilize,
    /// Simulate the decentralized laws; writes trajectories and costs.
    Simulate,
    /// Run the study named in the configuration.
    Study,
    /// Regenerate the example figures as CSV.
    Figures {
        /// Figure numbers (1 to 7); all when omitted.
        #[arg(long, value_delimiter = ',')]
        which: Vec<u8>,
    },
}

fn exit_code(c: ErrorCategory) -> u8 {
    match c {
        ErrorCategory::Config => 2,
        ErrorCategory::Infeasible => 3,
        ErrorCategory::Numerical => 4,
    }
}

fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Config => "config",
        ErrorCategory::Infeasible => "infeasible",
        ErrorCategory::Numerical => "numerical",
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn synthesis_log(cfg: &ExperimentConfig, gains: &Gains) -> String {
    let mut log = format!("problem: {:?}\nhorizon: {:?}\n", cfg.problem, cfg.horizon);
    match gains {
        Gains::Social(g) => {
            log += &format!("P(0) = {:?}\n", g.p.initial().as_slice());
            log += &format!("Pi(0) = {:?}\n", g.pi.initial().as_slice());
            log += &format!("K(0) = {:?}\n", g.k.initial().as_slice());
            log += &format!("s(0) = {:?}\n", g.s.initial().as_slice());
        }
        Gains::Game(g) => {
            log += &format!("P(0) = {:?}\n", g.p.initial().as_slice());
            log += &format!("P_bar(0) = {:?}\n", g.p_bar.initial().as_slice());
            log += &format!("s_hat(0) = {:?}\n", g.s_hat.initial().as_slice());
            if let Some(r) = &g.solvability {
                log += &format!("finite-horizon solvability: {r:?}\n");
            }
        }
    }
    let xb = gains.x_bar();
    log += &format!("x_bar(0) = {:?}\n", xb.initial().as_slice());
    log += &format!(
        "x_bar({}) = {:?}\n",
        xb.end_time(),
        xb.terminal().as_slice()
    );
    log
}

fn cmd_synth(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    let gains = synthesize(&cfg)?;
    write_text(&cli.out, "gains.json", &gains.to_json())?;
    let log = synthesis_log(&cfg, &gains);
    write_text(&cli.out, "synth.log", &log)?;
    print!("{log}");
    Ok(())
}

fn cmd_stabilize(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    let report = stability::analyze(&cfg.model);
    write_text(
        &cli.out,
        "stabilization.json",
        &serde_json::to_string_pretty(&report)?,
    )?;
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_simulate(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    let gains = synthesize(&cfg)?;
    let bundle = simulate_decentralized(&cfg.model, &gains, &cfg.sim)?;
    write_trajectory_csv(&bundle, create(&cli.out, "trajectories.csv")?)?;
    let costs = evaluate_costs(&bundle, &cfg.model);
    let gap = meanfield_gap(&bundle, cfg.model.rho)?;
    let summary = serde_json::json!({ "costs": costs, "meanfield_gap": gap });
    write_text(
        &cli.out,
        "costs.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "social cost per agent {:.6} (stderr {:.2e}); discounted mean field gap {:.3e}",
        costs.social_per_agent,
        costs.social_stderr / bundle.n_agents as f64,
        gap.discounted_gap
    );
    Ok(())
}

fn write_figures(out: &Path, which: &[u8], seed: u64) -> Result<(), Error> {
    for &w in which {
        let fig = reproduce_figure(w, seed)?;
        fig.write_csv(create(out, &fig.file_name())?)?;
        let configs: Vec<serde_json::Value> = experiment::figure_configs(w, seed)?
            .iter()
            .map(|c| serde_json::from_str(&c.to_json()))
            .collect::<Result<_, _>>()?;
        write_text(
            out,
            &format!("fig{w}_config.json"),
            &serde_json::to_string_pretty(&configs)?,
        )?;
        if let Some(o) = &fig.overlay {
            write_text(
                out,
                &format!("fig{w}_summary.json"),
                &serde_json::to_string_pretty(o)?,
            )?;
        }
        println!("wrote {}", out.join(fig.file_name()).display());
    }
    Ok(())
}

fn cmd_study(cli: &Cli) -> Result<(), Error> {
    let cfg = load(cli)?;
    if let Some(StudySpec::Figures { which }) = &cfg.study {
        return write_figures(&cli.out, which, cfg.sim.seed);
    }
    if cfg.study.is_none() {
        return Err(Error::Config("the configuration names no study".into()));
    }
    let gains = synthesize(&cfg)?;
    let outcome = run_study(&cfg, &gains)?.expect("study configured");
    write_text(
        &cli.out,
        "study.json",
        &serde_json::to_string_pretty(&outcome)?,
    )?;
    let rows = match &outcome {
        StudyOutcome::Convergence(r) => Some(&r.rows),
        StudyOutcome::Nash(r) => Some(&r.rows),
        StudyOutcome::Representation(r) => {
            println!("representation check passed: {}", r.passed);
            None
        }
    };
    if let Some(rows) = rows {
        write_study_csv(rows, create(&cli.out, "study.csv")?)?;
        for r in rows {
            println!(
                "N = {:>5}  {:<28} {:>14.6e} ± {:.2e}",
                r.n, r.metric, r.estimate, r.stderr
            );
        }
    }
    Ok(())
}

fn cmd_figures(cli: &Cli, which: &[u8]) -> Result<(), Error> {
    let which: Vec<u8> = if which.is_empty() {
        (1..=7).collect()
    } else {
        which.to_vec()
    };
    write_figures(&cli.out, &which, cli.seed.unwrap_or(FIGURE_SEED))
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth => cmd_synth(cli),
        Command::Stabilize => cmd_stabilize(cli),
        Command::Simulate => cmd_simulate(cli),
        Command::Study => cmd_study(cli),
        Command::Figures { which } => cmd_figures(cli, which),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let c = e.category();
            let msg = serde_json::json!({ "error": { "category": category_name(c), "message": e.to_string() } });
            eprintln!("{msg}");
            ExitCode::from(exit_code(c))
        }
    }
}
