//! Command-line front end: each pipeline stage is a subcommand that reads and
//! writes plain files.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors (including a
//! missing input file), 2 for I/O failures while running.

mod diagram;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use serde_json::json;

use topoprune::activations::{
    export_report, read_scores_csv, score_neurons, summarize, RF_CSV_HEADER,
};
use topoprune::encoder::rng::SplitMix64;
use topoprune::encoder::{
    count_parameters, dump_activations, init_model, parse_corpus, sample_indices, ActivationDump,
    CaptureMode, Checkpoint, EncoderConfig, TokenBatch,
};
use topoprune::homology::{write_diagram_csv, DeathScale};
use topoprune::planner::{
    build_plan, default_assignment, plan_parameter_report, rank_distributions, Arch, Level,
    LevelAssignment, PrunePlan,
};
use topoprune::surgery::{apply_plan, verify_surgery};
use topoprune::zero_ph::zero_persistence_scalars;
use topoprune::Component;

pub const THREADS_ENV: &str = "TOPOPRUNE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}\n\nFor more information, try '--help'.")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] topoprune::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "topoprune",
    version,
    about = "Score encoder neurons by zero-dimensional persistent homology and prune by r_f percentiles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a checkpoint with seeded random weights.
    #[command(group(ArgGroup::new("shape").args(["config", "arch"])))]
    InitModel {
        /// JSON file with the encoder configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the Base or Large shape.
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 256)]
        intermediate: usize,
        #[arg(long, default_value_t = 1000)]
        vocab: usize,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        cls_id: u32,
        #[arg(long, default_value_t = 0)]
        pad_id: u32,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a random pre-tokenized corpus that fits a checkpoint.
    SynthCorpus {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 150)]
        lines: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a corpus through a checkpoint and store the [CLS] outputs of every component.
    DumpActs {
        #[arg(long)]
        ckpt: PathBuf,
        /// One sequence of whitespace-separated token ids per line, starting with [CLS].
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "affine")]
        capture: CaptureMode,
        /// Number of corpus lines to sample; all lines if the corpus is smaller.
        #[arg(long, default_value_t = 150)]
        corpus_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score every neuron and write rf.csv, scores.csv and medians.svg.
    Analyze {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a prune plan from neuron scores.
    #[command(group(ArgGroup::new("model").args(["arch", "ckpt"]).required(true).multiple(true)))]
    #[command(group(ArgGroup::new("input").args(["rf", "scores"]).required(true)))]
    Plan {
        /// Shape and default level table.
        #[arg(long)]
        arch: Option<Arch>,
        /// Take the shape from this checkpoint.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// rf.csv from `analyze`; scores are read from the scores.csv next to it.
        #[arg(long)]
        rf: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// JSON array of {"layer", "component", "level"} entries.
        #[arg(long, conflicts_with = "uniform")]
        assignment: Option<PathBuf>,
        /// Apply one level to Q, K, V and Intermediate of every layer from 3 on.
        #[arg(long)]
        uniform: Option<Level>,
        /// Prune Q/K/V by the component-wide percentile instead of per head.
        #[arg(long)]
        global_percentile: bool,
        /// scores.csv whose mean + std replaces the compensation constants.
        #[arg(long)]
        compensation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a plan to a checkpoint; the manifest is written next to the output.
    Prune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare final and per-layer [CLS] states of two checkpoints over a corpus.
    Verify {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        pruned: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 150)]
        corpus_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Birth–death diagram (CSV and SVG) of one neuron.
    Diagram {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        component: Component,
        #[arg(long)]
        neuron: usize,
        #[arg(long, default_value = "radius")]
        death_scale: DeathScale,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter counts of a checkpoint, an architecture, or a plan applied to either.
    #[command(group(ArgGroup::new("model").args(["arch", "ckpt"]).required(true)))]
    Report {
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match thread_pool() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{raw}`"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input file not found: {}",
            path.display()
        )))
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_batch(path: &Path, cfg: &EncoderConfig, size: usize, seed: u64) -> Result<TokenBatch> {
    if size == 0 {
        return Err(CliError::Usage("--corpus-size must be at least 1".into()));
    }
    let lines = parse_corpus(&read_text(path)?)?;
    let chosen: Vec<Vec<u32>> = sample_indices(lines.len(), size, seed)
        .into_iter()
        .map(|i| lines[i].clone())
        .collect();
    Ok(TokenBatch::from_sequences(&chosen, cfg)?)
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::InitModel {
            config,
            arch,
            layers,
            hidden,
            heads,
            intermediate,
            vocab,
            max_len,
            cls_id,
            pad_id,
            seed,
            out,
        } => {
            let mut cfg = match (config, arch) {
                (Some(path), _) => {
                    require_file(&path)?;
                    EncoderConfig::from_json(&read_text(&path)?)?
                }
                (None, Some(arch)) => arch.config(),
                (None, None) => EncoderConfig {
                    layers,
                    hidden,
                    heads,
                    intermediate,
                    vocab,
                    max_len,
                    seed: 0,
                    cls_id,
                    pad_id,
                },
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let ckpt = init_model(&cfg)?;
            ckpt.save(&out)?;
            println!(
                "{}: {} parameters",
                out.display(),
                count_parameters(ckpt.tensors.values())
            );
        }
        Command::SynthCorpus {
            ckpt,
            lines,
            seed,
            out,
        } => {
            require_file(&ckpt)?;
            let cfg = Checkpoint::load(&ckpt)?.config;
            let mut rng = SplitMix64::new(seed);
            let mut text = String::new();
            for _ in 0..lines {
                let len = 2 + rng.next_below(cfg.max_len.max(2) as u64 - 1) as usize;
                let mut ids = vec![cfg.cls_id.to_string()];
                while ids.len() < len {
                    let id = rng.next_below(cfg.vocab as u64) as u32;
                    if id != cfg.pad_id && id != cfg.cls_id {
                        ids.push(id.to_string());
                    }
                }
                text.push_str(&ids.join(" "));
                text.push('\n');
            }
            std::fs::write(&out, text)?;
        }
        Command::DumpActs {
            ckpt,
            corpus,
            out,
            capture,
            corpus_size,
            seed,
        } => {
            require_file(&ckpt)?;
            require_file(&corpus)?;
            let model = Checkpoint::load(&ckpt)?;
            let batch = load_batch(&corpus, &model.config, corpus_size, seed)?;
            let dump = dump_activations(&model, &batch, capture)?;
            dump.save(&out)?;
            println!(
                "{}: {} tensors x {} rows",
                out.display(),
                dump.entries.len(),
                dump.rows
            );
        }
        Command::Analyze { activations, out } => {
            require_file(&activations)?;
            let dump = ActivationDump::load(&activations)?;
            let distributions = summarize(&score_neurons(&dump)?)?;
            export_report(&distributions, &out)?;
            println!(
                "{}: rf.csv ({} rows), scores.csv, medians.svg",
                out.display(),
                distributions.len()
            );
        }
        Command::Plan {
            arch,
            ckpt,
            rf,
            scores,
            assignment,
            uniform,
            global_percentile,
            compensation,
            out,
        } => {
            let scores_path = match (scores, rf) {
                (Some(s), _) => s,
                (None, Some(rf)) => {
                    require_file(&rf)?;
                    if read_text(&rf)?.lines().next().map(str::trim) != Some(RF_CSV_HEADER) {
                        return Err(CliError::Usage(format!(
                            "{} is not an rf.csv report",
                            rf.display()
                        )));
                    }
                    rf.with_file_name("scores.csv")
                }
                (None, None) => unreachable!("clap requires --rf or --scores"),
            };
            require_file(&scores_path)?;
            for path in [&ckpt, &assignment, &compensation].into_iter().flatten() {
                require_file(path)?;
            }
            let cfg = match (&ckpt, arch) {
                (Some(path), _) => Checkpoint::load(path)?.config,
                (None, Some(arch)) => arch.config(),
                (None, None) => unreachable!("clap requires --arch or --ckpt"),
            };
            let levels = match (assignment, uniform, arch) {
                (Some(path), _, _) => LevelAssignment::from_json(&read_text(&path)?)?,
                (None, Some(level), _) => LevelAssignment::uniform(cfg.layers, level),
                (None, None, Some(arch)) => default_assignment(arch),
                (None, None, None) => {
                    return Err(CliError::Usage(
                        "give --arch, --assignment or --uniform to choose levels".into(),
                    ))
                }
            };
            let distributions = summarize(&read_scores_csv(&read_text(&scores_path)?)?)?;
            let mut plan = build_plan(&distributions, &levels, cfg.heads, global_percentile)?;
            if let Some(path) = compensation {
                plan.set_compensation(&read_scores_csv(&read_text(&path)?)?)?;
            }
            let report = plan_parameter_report(&plan, &cfg);
            plan.report = Some(report);
            std::fs::write(&out, plan.to_json()?)?;
            println!(
                "{}: {} -> {} parameters (ratio {:.4})",
                out.display(),
                report.original,
                report.pruned,
                report.ratio
            );
        }
        Command::Prune { ckpt, plan, out } => {
            require_file(&ckpt)?;
            require_file(&plan)?;
            let model = Checkpoint::load(&ckpt)?;
            let plan = PrunePlan::from_json(&read_text(&plan)?)?;
            let (pruned, manifest) = apply_plan(&model, &plan)?;
            pruned.save(&out)?;
            let manifest_out = manifest_path(&out);
            std::fs::write(&manifest_out, manifest.to_json()?)?;
            println!(
                "{}: {} -> {} parameters (ratio {:.4}); manifest {}",
                out.display(),
                manifest.original_parameters,
                manifest.pruned_parameters,
                manifest.ratio,
                manifest_out.display()
            );
        }
        Command::Verify {
            original,
            pruned,
            corpus,
            corpus_size,
            seed,
            out,
        } => {
            for path in [&original, &pruned, &corpus] {
                require_file(path)?;
            }
            let a = Checkpoint::load(&original)?;
            let b = Checkpoint::load(&pruned)?;
            let batch = load_batch(&corpus, &a.config, corpus_size, seed)?;
            let report = verify_surgery(&a, &b, &batch)?;
            let text =
                serde_json::to_string_pretty(&report).map_err(topoprune::Error::from)? + "\n";
            if let Some(path) = out {
                std::fs::write(path, &text)?;
            }
            print!("{text}");
        }
        Command::Diagram {
            activations,
            layer,
            component,
            neuron,
            death_scale,
            out,
        } => {
            require_file(&activations)?;
            let dump = ActivationDump::load(&activations)?;
            let m = dump.get(layer, component)?;
            if neuron >= m.cols {
                return Err(CliError::Usage(format!(
                    "neuron {neuron} out of range; layer {layer} {component} has {} neurons",
                    m.cols
                )));
            }
            let values: Vec<f64> = m.column(neuron).into_iter().map(f64::from).collect();
            let result = zero_persistence_scalars(&values)?;
            std::fs::create_dir_all(&out)?;
            let mut csv = Vec::new();
            write_diagram_csv(&result.to_diagram(), &mut csv, death_scale, true)?;
            std::fs::write(out.join("diagram.csv"), csv)?;
            let k = death_scale.factor();
            let points: Vec<(f64, f64)> = result
                .birth_death_points()
                .into_iter()
                .map(|(b, d)| (b * k, d * k))
                .collect();
            let title = format!("layer {layer} {component} neuron {neuron}");
            std::fs::write(
                out.join("diagram.svg"),
                diagram::render_svg(&points, result.r_f * k, &title),
            )?;
            println!("{}: r_f = {}", out.display(), result.r_f * k);
        }
        Command::Report { arch, ckpt, plan } => {
            let (cfg, actual) = match (&ckpt, arch) {
                (Some(path), _) => {
                    require_file(path)?;
                    let model = Checkpoint::load(path)?;
                    let n = count_parameters(model.tensors.values());
                    (model.config, Some(n))
                }
                (None, Some(arch)) => (arch.config(), None),
                (None, None) => unreachable!("clap requires --arch or --ckpt"),
            };
            let value = match (plan, arch, actual) {
                (Some(path), _, _) => {
                    require_file(&path)?;
                    let plan = PrunePlan::from_json(&read_text(&path)?)?;
                    json!(plan_parameter_report(&plan, &cfg))
                }
                (None, _, Some(n)) => json!({ "parameters": n }),
                (None, Some(arch), None) => {
                    let plan = build_plan(
                        &rank_distributions(&cfg),
                        &default_assignment(arch),
                        cfg.heads,
                        false,
                    )?;
                    json!(plan_parameter_report(&plan, &cfg))
                }
                (None, None, None) => unreachable!(),
            };
            println!(
                "{}",
                serde_json::to_string(&value).map_err(topoprune::Error::from)?
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_checkpoint() {
        assert_eq!(
            manifest_path(Path::new("out/pruned.tst")),
            Path::new("out/pruned.manifest.json")
        );
        assert_eq!(
            manifest_path(Path::new("pruned")),
            Path::new("pruned.manifest.json")
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["topoprune", "frobnicate"]), 1);
        assert_eq!(
            run([
                "topoprune",
                "analyze",
                "--activations",
                "/nonexistent/a.tst",
                "--out",
                "/tmp/x"
            ]),
            1
        );
        assert_eq!(run(["topoprune", "--help"]), 0);
    }
}
