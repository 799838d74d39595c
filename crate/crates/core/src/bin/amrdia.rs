use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use amrdia::decoder::DecodeMode;
use amrdia::model::Ablation;
use amrdia::pipeline::{
    run_eval, run_generate, run_gradcheck, run_parse, run_report, run_train, AppConfig, CommandError,
};

#[derive(Parser)]
#[command(name = "amrdia", version, about = "AMR-augmented dialogue generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, simplify and linearize the graphs of a dialogue file.
    Parse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model, writing per-epoch and best checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Decode responses for a dialogue file.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Beam width; greedy when absent.
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Also write the tokenized gold responses here.
        #[arg(long)]
        refs_out: Option<PathBuf>,
    },
    /// Score predictions against references.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "model")]
        system: String,
    },
    /// Compare analytic and finite-difference gradients of the model loss.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        vocab: usize,
    },
    /// Combine score records from `eval` into one table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&Path>) -> Result<AppConfig, CommandError> {
    Ok(match config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    })
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Parse { input, out, config } => {
            let cfg = load(config.as_deref())?;
            let s = run_parse(&input, &out, &cfg)?;
            println!("{} graphs written, {} lines skipped", s.graphs, s.skipped);
        }
        Command::Train {
            config,
            data,
            out,
            ablation,
            epochs,
            max_steps,
            batch_size,
            lr,
            seed,
            resume,
        } => {
            let mut cfg = load(config.as_deref())?;
            let t = &mut cfg.train;
            t.ablation = ablation.unwrap_or(t.ablation);
            t.max_epochs = epochs.unwrap_or(t.max_epochs);
            t.max_steps = max_steps.or(t.max_steps);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.learning_rate = lr.unwrap_or(t.learning_rate);
            t.seed = seed.unwrap_or(t.seed);
            let ck = run_train(&cfg, &data, &out, resume.as_deref())?;
            for (i, loss) in ck.state.loss_log.iter().enumerate() {
                println!("epoch {:>3}  loss {loss:.6}", i + 1);
            }
            println!("{} steps, checkpoints in {}", ck.state.step, out.display());
        }
        Command::Generate {
            ckpt,
            data,
            out,
            config,
            beam,
            max_len,
            refs_out,
        } => {
            let cfg = load(config.as_deref())?;
            let mut dcfg = cfg.decoding;
            if let Some(w) = beam {
                dcfg.mode = DecodeMode::Beam;
                dcfg.beam_width = w;
            }
            dcfg.max_gen_len = max_len.unwrap_or(dcfg.max_gen_len);
            let n = run_generate(&ckpt, &data, &out, refs_out.as_deref(), &dcfg)?;
            println!("{n} responses written to {}", out.display());
        }
        Command::Eval {
            preds,
            refs,
            out,
            system,
        } => {
            run_eval(&preds, &refs, &out, &system)?;
            print!("{}", std::fs::read_to_string(&out).unwrap_or_default());
        }
        Command::Gradcheck { config, vocab } => {
            let cfg = load(config.as_deref())?;
            match run_gradcheck(&cfg, vocab) {
                Ok(r) => println!(
                    "max relative error {:.3e} over {} coordinates (worst {}[{}])",
                    r.max_rel_error, r.coordinates, r.worst_param, r.worst_index
                ),
                Err(e) => {
                    println!("{e}");
                    return Err(e);
                }
            }
        }
        Command::Report { inputs, out } => {
            print!("{}", run_report(&inputs, out.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
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
