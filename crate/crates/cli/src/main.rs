use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use causal_combine::evalgraph::DegreeMode;
use causal_combine::partition::{PartitionOptions, Strategy};
use causal_combine::pipeline::{run_pipeline, Run, RunConfig};
use causal_combine::task::TaskKind;
use causal_combine::zoo::ZooModelId;

/// Combined causal models for small trained networks.
#[derive(Parser)]
#[command(name = "ccombine", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run directory. Falls back to the config's output_dir, then to
    /// $CCOMBINE_OUT/<task>, then to ./runs/<task>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run config (JSON, see `print-config`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task for the default config when neither --config nor a stored config exists.
    #[arg(long)]
    task: Option<TaskKind>,
}

#[derive(Args, Clone)]
struct PartitionArgs {
    #[arg(long)]
    degree: Option<DegreeMode>,
    #[arg(long)]
    strategy: Option<Strategy>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the default config for a task.
    PrintConfig {
        #[arg(long, default_value = "boolean")]
        task: TaskKind,
    },
    /// Run every stage and write the manifest.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Skip stages whose artifacts already exist.
        #[arg(long)]
        resume: bool,
    },
    /// Write the factual table and counterfactual datasets.
    GenData {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the network.
    TrainNet {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train rotations: one (model, site, k) if given, otherwise all configured.
    TrainAlignment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        site: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build evaluation graphs: one model if given, otherwise all candidates.
    EvalGraph {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, requires = "k")]
        site: Option<usize>,
        #[arg(long, requires = "site")]
        k: Option<usize>,
        /// Evaluate a random subset of this many inputs.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Partition the inputs at one threshold.
    Partition {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        opts: PartitionArgs,
    },
    /// Trace the strength–faithfulness frontier.
    Frontier {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[command(flatten)]
        opts: PartitionArgs,
    },
    /// Emit tables and plots from the artifacts of a run.
    Report {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn load_config(args: &RunArgs, dir_hint: Option<&Path>) -> anyhow::Result<Option<RunConfig>> {
    if let Some(p) = &args.config {
        return Ok(Some(
            RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        ));
    }
    if let Some(dir) = dir_hint {
        let stored = dir.join("config.json");
        if stored.exists() {
            return Ok(Some(RunConfig::load(&stored)?));
        }
    }
    Ok(args.task.map(RunConfig::default_for))
}

fn resolve_dir(args: &RunArgs, config: Option<&RunConfig>) -> anyhow::Result<PathBuf> {
    if let Some(d) = &args.out {
        return Ok(d.clone());
    }
    if let Some(d) = config.and_then(|c| c.output_dir.clone()) {
        return Ok(d);
    }
    let task = config.map(|c| c.task).or(args.task);
    let Some(task) = task else {
        bail!("no run directory: pass --out, --config or --task");
    };
    let root = std::env::var_os("CCOMBINE_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    Ok(root.join(task.to_string()))
}

/// Opens the run a stage verb works on, creating it from a config if needed.
fn open_run(args: &RunArgs) -> anyhow::Result<Run> {
    let early = load_config(args, args.out.as_deref())?;
    let dir = resolve_dir(args, early.as_ref())?;
    if args.config.is_none() && dir.join("config.json").exists() {
        return Ok(Run::open(&dir)?);
    }
    let config = match early {
        Some(c) => c,
        None => bail!("no config for {}: pass --config or --task", dir.display()),
    };
    Ok(Run::create(config, &dir)?)
}

fn partition_options(run: &Run, a: &PartitionArgs) -> PartitionOptions {
    let mut o = run.config().partition.options();
    if let Some(d) = a.degree {
        o.degree = d;
    }
    if let Some(s) = a.strategy {
        o.strategy = s;
    }
    o
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let run = match cli.cmd {
        Cmd::PrintConfig { task } => {
            print!("{}", RunConfig::default_for(task).to_json());
            return Ok(());
        }
        Cmd::Pipeline { run, resume } => {
            let config = load_config(&run, None)?
                .or_else(|| Some(RunConfig::default_for(TaskKind::Boolean)))
                .expect("default config");
            let dir = resolve_dir(&run, Some(&config))?;
            let manifest = run_pipeline(&config, &dir, resume)?;
            println!(
                "{}: {} files, {} graphs, {} frontier points",
                dir.display(),
                manifest.files.len(),
                manifest.graphs,
                manifest.frontier_points
            );
            return Ok(());
        }
        Cmd::GenData { run } => {
            let r = open_run(&run)?;
            r.gen_data(false)?;
            r
        }
        Cmd::TrainNet { run, seed } => {
            let r = open_run(&run)?;
            let rec = r.train_net(seed, false)?;
            println!("{}", serde_json::to_string(&rec)?);
            r
        }
        Cmd::TrainAlignment {
            run,
            model,
            site,
            k,
            seed,
        } => {
            let r = open_run(&run)?;
            match model {
                None => {
                    r.train_alignments(false)?;
                }
                Some(m) => {
                    let id = ZooModelId::parse(r.task(), &m)?;
                    let site = site.unwrap_or(r.config().alignment.sites[0]);
                    let k = k.unwrap_or(r.config().alignment.k[0]);
                    let net = r.load_net()?;
                    let row = r.train_alignment(&net, id, site, k, seed)?;
                    println!("{}", serde_json::to_string(&row)?);
                    r.record_iia(row)?;
                }
            }
            r
        }
        Cmd::EvalGraph {
            run,
            model,
            site,
            k,
            sample,
        } => {
            let r = open_run(&run)?;
            match model {
                None => {
                    r.eval_graphs(false)?;
                }
                Some(m) => {
                    let id = ZooModelId::parse(r.task(), &m)?;
                    let net = r.load_net()?;
                    let meta = r.eval_graph(&net, id, site.zip(k), sample)?;
                    println!("{}", serde_json::to_string(&meta)?);
                }
            }
            r
        }
        Cmd::Partition { run, lambda, opts } => {
            let r = open_run(&run)?;
            let o = partition_options(&r, &opts);
            let res = r.partition(lambda, &o)?;
            println!(
                "lambda {}: strength {} ({} of {}) with {:?}",
                res.lambda,
                res.strength.value(),
                res.strength.explained,
                res.strength.total,
                res.model_set()
            );
            r
        }
        Cmd::Frontier { run, lambdas, opts } => {
            let r = open_run(&run)?;
            let o = partition_options(&r, &opts);
            for p in r.frontier(lambdas.as_deref(), Some(o))? {
                println!("{},{},{}", p.lambda, p.model_set.join("+"), p.strength);
            }
            r
        }
        Cmd::Report { run } => {
            let r = open_run(&run)?;
            let s = r.report()?;
            for p in &s.written {
                println!("wrote {}", p.display());
            }
            for m in &s.missing {
                println!("missing {m}");
            }
            r
        }
    };
    let m = run.write_manifest()?;
    info!("manifest lists {} files", m.files.len());
    Ok(())
}
