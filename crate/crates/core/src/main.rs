use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use blitzsim::engine::SimTime;
use blitzsim::harness::demo::{self, fig1_bottom, fig1_top};
use blitzsim::harness::emit::{summary_csv, table_csv, trace_csv, write_file};
use blitzsim::harness::matrix::{summarize, MatrixSpec};
use blitzsim::harness::metrics::scenario_sim;
use blitzsim::harness::scenario::{parse_size, size_label, ScenarioConfig, Variant, SIZES};
use blitzsim::harness::sim::{simulate, Recording};
use blitzsim::harness::validate;
use blitzsim::signaling::EstimatorSpec;

#[derive(Parser)]
#[command(name = "blitzsim", version, about = "Slow Start vs. bandwidth-hinted startup on a simulated bottleneck")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix and write summary.csv and table.csv.
    Run {
        /// Preset name or `all`.
        #[arg(long, default_value = "all")]
        scenario: String,
        /// Scenario config file (`key = value` lines); replaces --scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// 70K, 2M, 10M, a byte count, or `all`.
        #[arg(long, default_value = "all")]
        size: String,
        /// `baseline`, `blitz:<factor>[:overest]` or `all`. May be repeated.
        #[arg(long, default_value = "all")]
        variant: Vec<String>,
        #[arg(long, default_value_t = 30)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Client estimates follow this `time_ms,kbps` trace instead of the
        /// true bottleneck rate.
        #[arg(long)]
        hint_trace: Option<PathBuf>,
        /// Also write the packet trace of repetition 0 of every cell.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Startup traces of one and two baseline flows on a 50 Mbit/s, 50 ms link.
    DemoFig1 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "fig1")]
        out: PathBuf,
    },
    /// Run the invariant suite.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn scenarios(name: &str, config: Option<&Path>) -> Result<Vec<ScenarioConfig>, Box<dyn Error>> {
    if let Some(path) = config {
        return Ok(vec![ScenarioConfig::load(path)?]);
    }
    if name.eq_ignore_ascii_case("all") {
        return Ok(ScenarioConfig::presets());
    }
    Ok(vec![ScenarioConfig::preset(name)?])
}

fn variants(args: &[String]) -> Result<Vec<Variant>, Box<dyn Error>> {
    let mut out = vec![Variant::Baseline];
    for a in args {
        let parsed = if a.eq_ignore_ascii_case("all") { Variant::standard_set() } else { vec![a.parse()?] };
        for v in parsed {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run(
    scenario: &str,
    config: Option<&Path>,
    size: &str,
    variant: &[String],
    reps: u32,
    seed: u64,
    hint_trace: Option<&Path>,
    trace: bool,
    out: &Path,
) -> Result<(), Box<dyn Error>> {
    let mut scs = scenarios(scenario, config)?;
    if let Some(p) = hint_trace {
        let est = EstimatorSpec::load_trace(p)?;
        for sc in &mut scs {
            sc.estimator = est.clone();
        }
    }
    let sizes = if size.eq_ignore_ascii_case("all") { SIZES.to_vec() } else { vec![parse_size(size)?] };
    let spec = MatrixSpec { scenarios: scs, sizes, variants: variants(variant)?, reps, seed };
    let total = spec.scenarios.len() * spec.sizes.len() * spec.variants.len() * reps as usize;
    eprintln!("running {total} simulations");
    let started = Instant::now();
    let records = spec.run();
    eprintln!("done in {:.1} s", started.elapsed().as_secs_f64());

    let cells = summarize(&records);
    write_file(&out.join("summary.csv"), &summary_csv(&records))?;
    write_file(&out.join("table.csv"), &table_csv(&cells))?;
    if trace {
        for sc in &spec.scenarios {
            for &size in &spec.sizes {
                for &v in &spec.variants {
                    let cfg = spec.cell_config(sc, size, v);
                    let rec = Recording { trace: true, ..Recording::default() };
                    let o = simulate(scenario_sim(&cfg, 0, rec));
                    let name = format!("{}_{}_{}.csv", sc.name, size_label(size), v.to_string().replace(':', "_"));
                    write_file(&out.join("traces").join(name), &trace_csv(&o.trace))?;
                }
            }
        }
    }

    for c in &cells {
        let Some(st) = c.stats.as_ref().filter(|_| c.variant != "baseline") else { continue };
        println!(
            "{:<9} {:>4} {:<14} fct x{:.2} ({:+.0} ms{}) loss {} ({:+.1}{}) infl {:.3} timeouts {}",
            c.scenario,
            size_label(c.size_bytes),
            c.variant,
            st.mean_fct_factor,
            st.fct.delta,
            if st.fct.significant { "" } else { ", n.s." },
            st.mean_loss_factor.map_or_else(|| "-".to_string(), |f| format!("x{f:.1}")),
            st.loss.delta,
            if st.loss.significant { "" } else { ", n.s." },
            st.mean_inflation,
            c.timeouts,
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn ms(t: Option<SimTime>) -> String {
    t.map_or_else(|| "never".to_string(), |t| format!("{:.1} ms", t.as_millis_f64()))
}

fn demo_fig1(seed: u64, out: &Path) -> Result<(), Box<dyn Error>> {
    let top = fig1_top(seed);
    println!("single flow: slow start exit {}, 95 % utilization {}", ms(top.slow_start_exit), ms(top.saturation));
    let ratios: Vec<String> = top.round_ratios.iter().map(|r| format!("{r:.2}")).collect();
    println!("single flow: window growth per round trip in slow start [{}]", ratios.join(", "));
    write_file(&out.join("top_cwnd.csv"), &demo::cwnd_csv(&top.outcome.cwnd_log))?;
    write_file(&out.join("top_bandwidth.csv"), &demo::top_bandwidth_csv(&top))?;

    let bottom = fig1_bottom(seed);
    println!(
        "two flows: second flow starts at {}, first within 20 % of its fair share after {}",
        ms(Some(bottom.second_start)),
        bottom.time_to_fair.map_or_else(
            || format!("more than {} s", demo::BOTTOM_OBSERVATION.as_secs_f64()),
            |t| format!("{:.1} s", t.as_secs_f64())
        )
    );
    write_file(&out.join("bottom_cwnd.csv"), &demo::cwnd_csv(&bottom.outcome.cwnd_log))?;
    write_file(&out.join("bottom_bandwidth.csv"), &demo::bottom_bandwidth_csv(&bottom))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, config, size, variant, reps, seed, hint_trace, trace, out } => {
            run(&scenario, config.as_deref(), &size, &variant, reps, seed, hint_trace.as_deref(), trace, &out)
        }
        Command::DemoFig1 { seed, out } => demo_fig1(seed, &out),
        Command::Validate { seed } => {
            let started = Instant::now();
            let checks = validate::run_all(seed);
            for c in &checks {
                println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed, {:.1} s", checks.len(), started.elapsed().as_secs_f64());
            if failed > 0 {
                return ExitCode::FAILURE;
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
