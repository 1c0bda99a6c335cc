use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use songbridge::config::PipelineConfig;
use songbridge::corpus::Style;
use songbridge::pipeline::dataset::write_json;
use songbridge::pipeline::evaluate::{write_plots, ModelDurations, ModelLf0, ModelMel, Sources};
use songbridge::pipeline::train::{load_acoustic, load_duration, load_lf0};
use songbridge::pipeline::{self, Dataset, DurationMode, Lf0Mode, SynthesisJob, ToySpec};
use songbridge::{Error, Result};

/// Singing synthesis toolkit: corpus preparation, training of the duration,
/// LF0 and acoustic models, synthesis and evaluation.
#[derive(Parser)]
#[command(name = "songbridge", version)]
struct Cli {
    /// TOML (or .json) pipeline configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a deterministic synthetic corpus with a manifest.
    MakeToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        sing: usize,
        #[arg(long, default_value_t = 10)]
        speak: usize,
    },
    /// Extracts mel, LF0 and frame features for every manifest entry.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue past utterances that fail validation.
        #[arg(long)]
        skip_bad: bool,
    },
    TrainDm(TrainArgs),
    TrainLf0(TrainArgs),
    TrainAm(TrainArgs),
    /// Renders a score to a waveform, dumping every intermediate stage.
    Synth(SynthArgs),
    /// Prints the effective configuration as TOML.
    PrintConfig {
        /// Start from the small preset used with the toy corpus.
        #[arg(long)]
        desk: bool,
    },
    /// Scores checkpoints on a prepared held-out set.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        /// Report path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Directory for mel and LF0 comparison figures.
        #[arg(long)]
        plots: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared feature cache.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoints: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    score: PathBuf,
    #[arg(long, default_value_t = 0)]
    speaker: u32,
    #[arg(long, default_value = "singing")]
    style: Style,
    /// Use aligned intervals instead of predicted durations.
    #[arg(long)]
    intervals: Option<PathBuf>,
    /// Track LF0 from this audio instead of predicting it.
    #[arg(long, conflicts_with = "f0_file")]
    lf0_audio: Option<PathBuf>,
    /// Read F0 in Hz, one value per frame, instead of predicting it.
    #[arg(long)]
    f0_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Output file stem; defaults to the score's.
    #[arg(long)]
    name: Option<String>,
    /// Accept checkpoints written under a different configuration.
    #[arg(long)]
    force: bool,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::PrintConfig { desk } => {
            if desk {
                let seed = cfg.seed;
                cfg = PipelineConfig::desk();
                if cli.seed.is_some() {
                    cfg.seed = seed;
                }
            }
            print!("{}", cfg.to_toml());
        }
        Command::MakeToyCorpus { out, sing, speak } => {
            let m = pipeline::make_toy_corpus(&out, &ToySpec { sing, speak, seed: cfg.seed }, &cfg.audio)?;
            println!("wrote {} utterances to {}", m.records.len(), out.display());
        }
        Command::Prepare { manifest, out, skip_bad } => {
            let r = pipeline::prepare(&manifest, &out, &cfg.audio, skip_bad)?;
            println!("prepared {}, skipped {}", r.prepared.len(), r.failed.len());
            for f in &r.failed {
                eprintln!("skipped {}: {}", f.id, f.reason);
            }
        }
        Command::TrainDm(a) => {
            let log = pipeline::train_dm(&Dataset::load(&a.data)?, &cfg, &a.checkpoints, cfg.seed)?;
            println!("duration model: {} steps, final NLL {:.4} (frames)", log.steps, log.last());
        }
        Command::TrainLf0(a) => {
            let log = pipeline::train_lf0(&Dataset::load(&a.data)?, &cfg, &a.checkpoints, cfg.seed)?;
            println!("LF0 model: {} steps, final NLL {:.4} (log-Hz)", log.steps, log.last());
        }
        Command::TrainAm(a) => {
            let log = pipeline::train_am(&Dataset::load(&a.data)?, &cfg, &a.checkpoints, cfg.seed)?;
            if let Some(l) = log.last() {
                println!(
                    "acoustic model: {} steps, mse pre {:.4} post {:.4}, adversarial CE {:.4}",
                    log.len(),
                    l.recon_mse_pre,
                    l.recon_mse_post,
                    l.adv_ce
                );
            }
        }
        Command::Synth(a) => {
            let name = match a.name {
                Some(n) => n,
                None => a
                    .score
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Error::Config("cannot derive an output name from the score path".into()))?,
            };
            let job = SynthesisJob {
                score: a.score,
                speaker: a.speaker,
                style: a.style,
                durations: a.intervals.map_or(DurationMode::Predicted, DurationMode::Intervals),
                lf0: match (a.lf0_audio, a.f0_file) {
                    (Some(p), _) => Lf0Mode::Audio(p),
                    (None, Some(p)) => Lf0Mode::F0File(p),
                    (None, None) => Lf0Mode::Predicted,
                },
                seed: cfg.seed,
                name,
            };
            let out = pipeline::synthesize(&job, &cfg, &a.checkpoints, &a.out, a.force)?;
            println!(
                "{}: {} frames, {:.3} s",
                out.wav_path.display(),
                out.durations.total(),
                out.wav.duration()
            );
        }
        Command::Evaluate { data, checkpoints, out, plots, force } => {
            let ds = Dataset::load(&data)?;
            let inf = &cfg.inference;
            let dm = load_duration(&checkpoints, &cfg, &ds.vocab, force);
            let lm = load_lf0(&checkpoints, &cfg, &ds.vocab, force);
            let am = load_acoustic(&checkpoints, &cfg, &ds.vocab, force);
            let d = dm.as_ref().map(|m| ModelDurations { model: m, mode: inf.duration_sampling, seed: cfg.seed });
            let l = lm.as_ref().map(|m| ModelLf0 { model: m, mode: inf.lf0_sampling, smooth: inf.lf0_median_filter, seed: cfg.seed });
            let m = am.as_ref().map(|(net, stats)| ModelMel {
                net,
                stats,
                dropout_seed: inf.prenet_dropout.then_some(cfg.seed),
            });
            let src = Sources {
                durations: d.as_ref().map(|x| x as _).map_err(|e| e.to_string()),
                lf0: l.as_ref().map(|x| x as _).map_err(|e| e.to_string()),
                mel: m.as_ref().map(|x| x as _).map_err(|e| e.to_string()),
            };
            let utts: Vec<_> = ds.utterances.iter().collect();
            let report = pipeline::evaluate(&utts, &ds.stats, &src);
            write_json(&out, &report)?;
            if let (Some(dir), Some(u)) = (plots, utts.first()) {
                write_plots(u, &ds.stats, &src, &dir)?;
            }
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
