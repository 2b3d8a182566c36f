use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oprl::harness::{
    complexity_label, run_ablations, run_experiment, sweep_dataset_optimality, sweep_dataset_size, Anchors,
    ExperimentConfig, SweepReport,
};
use oprl::theory::run_theory_suite;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(name = "oprl", version, about = "Offline preference-based RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one configuration over its seeds.
    Run(ExperimentArgs),
    /// Sample complexity as a function of offline dataset size.
    SweepSize {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,40,200")]
        sizes: Vec<usize>,
    },
    /// Sample complexity as a function of behavior-policy noise.
    SweepOptimality {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,1")]
        epsilons: Vec<f64>,
    },
    /// The full method against each single ablation.
    Ablate(ExperimentArgs),
    /// Numerical checks of the planner, models and bounds.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the preference-labeling HTTP server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session snapshots; sessions are kept in memory only when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleArg {
    Bernoulli,
    Deterministic,
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON config; missing fields take the environment's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// star, gridworld or sepsis.
    #[arg(long)]
    env: Option<String>,
    /// oprl_uniform, oprl_uncertainty, sim_oprl or pbop.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated seeds, or a range such as `0..6`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lambda_t: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo >= hi {
            bail!("empty seed range {text}");
        }
        return Ok((lo..hi).collect());
    }
    text.split(',').map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`"))).collect()
}

impl ExperimentArgs {
    /// The config file (or `{}`) with command-line overrides applied.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut obj: Map<String, Value> = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
                    Value::Object(map) => map,
                    _ => bail!("{} must hold a JSON object", path.display()),
                }
            }
            None => Map::new(),
        };
        if let Some(env) = &self.env {
            obj.insert("env".into(), json!(env));
        }
        if let Some(strategy) = &self.strategy {
            obj.insert("strategy".into(), json!(strategy));
        }
        if let Some(seeds) = &self.seeds {
            obj.insert("seeds".into(), json!(parse_seeds(seeds)?));
        }
        if let Some(b) = self.budget {
            obj.insert("budget".into(), json!(b));
        }
        if let Some(b) = self.batch {
            obj.insert("batch_size".into(), json!(b));
        }
        if let Some(l) = self.lambda_t {
            obj.insert("lambda_t".into(), json!(l));
        }
        if let Some(l) = self.lambda_r {
            obj.insert("lambda_r".into(), json!(l));
        }
        if let Some(o) = self.oracle {
            let name = match o {
                OracleArg::Bernoulli => "bernoulli",
                OracleArg::Deterministic => "deterministic",
            };
            obj.insert("oracle".into(), json!(name));
        }
        Ok(ExperimentConfig::from_json_str(&Value::Object(obj).to_string())?)
    }
}

fn git_hash() -> String {
    Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn metadata(cfg: &ExperimentConfig, anchors: Anchors) -> Value {
    json!({
        "tool": "oprl",
        "version": env!("CARGO_PKG_VERSION"),
        "git_hash": git_hash(),
        "config": cfg,
        "anchors": anchors,
        "anchor_mode": cfg.anchor_mode,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn env_anchors(cfg: &ExperimentConfig) -> Result<Anchors> {
    Ok(Anchors::for_env(&cfg.env.build())?)
}

fn cmd_run(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config()?;
    let series = run_experiment(&cfg)?;
    let meta = metadata(&cfg, series.anchors);
    let csv = write(&args.out, "metrics.csv", &series.to_csv(&meta))?;
    let summary = write_json(&args.out, "summary.json", &series.summary_json(&meta))?;
    println!(
        "{} {}: sample complexity {} (gap {}), final mean {:.1}",
        cfg.env,
        cfg.strategy,
        complexity_label(series.sample_complexity()),
        cfg.target_gap,
        series.final_mean()
    );
    println!("wrote {} and {}", csv.display(), summary.display());
    Ok(())
}

fn print_sweep(name: &str, report: &SweepReport) {
    println!("{name:>10}  N_p   final  per-seed");
    for row in &report.rows {
        let per_seed: Vec<String> = row.per_seed_sample_complexity.iter().map(|c| complexity_label(*c)).collect();
        let mut line = format!(
            "{:>10}  {:<4}  {:>5.1}  {}",
            row.setting,
            complexity_label(row.sample_complexity),
            row.final_mean,
            per_seed.join(" ")
        );
        if let (Some(t), Some(p)) = (row.transition_l1_error, row.preference_accuracy) {
            line += &format!("  transition L1 {t:.3}, preference accuracy {p:.3}");
        }
        if row.degenerate_coverage {
            line += "  (degenerate coverage)";
        }
        println!("{line}");
    }
    println!("spearman rho {:.3}", report.spearman_rho);
}

fn cmd_sweep(args: &ExperimentArgs, name: &str, run: impl FnOnce(&ExperimentConfig) -> oprl::Result<SweepReport>) -> Result<()> {
    let cfg = args.config()?;
    let report = run(&cfg)?;
    print_sweep(name, &report);
    let out = json!({ "metadata": metadata(&cfg, env_anchors(&cfg)?), "report": report });
    let path = write_json(&args.out, &format!("sweep_{name}.json"), &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ablate(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config()?;
    let rows = run_ablations(&cfg)?;
    for r in &rows {
        println!(
            "{:<22} final {:>5.1}  drop {:>5.1}  N_p {}",
            r.label,
            r.final_mean,
            r.drop_vs_full,
            complexity_label(r.sample_complexity)
        );
    }
    let out = json!({ "metadata": metadata(&cfg, env_anchors(&cfg)?), "rows": rows });
    let path = write_json(&args.out, "ablations.json", &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_verify(seed: u64, out: Option<&Path>) -> Result<bool> {
    let checks = run_theory_suite(seed)?;
    for c in &checks {
        println!("{} {:<26} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(dir) = out {
        let path = write_json(dir, "verify.json", &json!({ "seed": seed, "git_hash": git_hash(), "checks": checks }))?;
        println!("wrote {}", path.display());
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn cmd_serve(addr: SocketAddr, data_dir: Option<PathBuf>) -> Result<()> {
    let state = match data_dir {
        Some(dir) => {
            let state = oprl_server::AppState::persistent(&dir)?;
            println!("loaded {} session(s) from {}", state.len(), dir.display());
            state
        }
        None => oprl_server::AppState::in_memory(),
    };
    println!("listening on http://{addr}");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(oprl_server::serve(addr, Arc::new(state)))?;
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run(args) => cmd_run(&args)?,
        Cmd::SweepSize { exp, sizes } => cmd_sweep(&exp, "size", |c| sweep_dataset_size(c, &sizes))?,
        Cmd::SweepOptimality { exp, epsilons } => {
            cmd_sweep(&exp, "optimality", |c| sweep_dataset_optimality(c, &epsilons))?
        }
        Cmd::Ablate(args) => cmd_ablate(&args)?,
        Cmd::Verify { seed, out } => {
            if !cmd_verify(seed, out.as_deref())? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Serve { addr, data_dir } => cmd_serve(addr, data_dir)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use oprl::envs::EnvId;
    use oprl::harness::Strategy;

    #[test]
    fn seeds_accept_lists_and_ranges() {
        assert_eq!(parse_seeds("3,1,4").unwrap(), vec![3, 1, 4]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert!(parse_seeds("4..4").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_override_the_preset() {
        let args = ExperimentArgs {
            env: Some("gridworld".into()),
            strategy: Some("oprl_uniform".into()),
            budget: Some(12),
            lambda_t: Some(2.0),
            oracle: Some(OracleArg::Deterministic),
            ..Default::default()
        };
        let cfg = args.config().unwrap();
        assert_eq!(cfg.env, EnvId::Gridworld);
        assert_eq!(cfg.strategy, Strategy::OprlUniform);
        assert_eq!(cfg.budget, 12);
        assert_eq!(cfg.lambda_t, 2.0);
        assert_eq!(cfg.lambda_r, 0.1);
        assert_eq!(cfg.oracle, oprl::elicitation::OracleMode::Deterministic);
    }

    #[test]
    fn flags_win_over_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"env": "sepsis", "budget": 300, "seeds": [9]}"#).unwrap();
        let args = ExperimentArgs { config: Some(path), batch: Some(50), ..Default::default() };
        let cfg = args.config().unwrap();
        assert_eq!((cfg.env, cfg.budget, cfg.batch_size, cfg.seeds.clone()), (EnvId::Sepsis, 300, 50, vec![9]));
        assert_eq!(cfg.lambda_t, 1.0);
    }
}
