mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latent_throw::config::ExperimentConfig;
use latent_throw::dataset::{self, Dataset, DatasetMeta};
use latent_throw::planner::{self, Objective, PlanResult};
use latent_throw::primitives::PrimitiveBasis;
use latent_throw::render::render_svg;
use latent_throw::rng;
use latent_throw::sim::parse_trajectory_csv;
use latent_throw::wgan::{eval_accuracy, Normalizer, Trainer, TrainingData};
use latent_throw::Error;

use manifest::{to_json, Recorder};

#[derive(Parser)]
#[command(name = "latent-throw", version, about = "Throwing-motion generation and latent-space planning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON), applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base settings: desk or paper.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Seed for every stochastic stage; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for all outputs; relative input paths resolve against it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Treat a search that misses objective 0 as an error.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and balance a dataset of valid throws.
    GenData {
        #[arg(long, default_value = "dataset.ltds")]
        output: PathBuf,
        /// Also write the dataset as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Convert a dataset file to CSV.
    ExportCsv {
        #[arg(long, default_value = "dataset.ltds")]
        dataset: PathBuf,
        #[arg(long, default_value = "dataset.csv")]
        output: PathBuf,
    },
    /// Train the conditional generator.
    Train {
        #[arg(long, default_value = "dataset.ltds")]
        dataset: PathBuf,
        #[arg(long, default_value = "checkpoint.ltgc")]
        checkpoint: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Use Adam's beta2 = 0.999 instead of the configured value.
        #[arg(long)]
        beta2_standard: bool,
    },
    /// Landing accuracy of generated motions.
    Eval {
        #[arg(long, default_value = "checkpoint.ltgc")]
        checkpoint: PathBuf,
        /// Motions to roll out; defaults to the config value.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Search the generator's latent space.
    Plan {
        #[arg(long, default_value = "checkpoint.ltgc")]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_objective)]
        objective: Option<Objective>,
        /// Target landing distance, meters.
        #[arg(long)]
        target: Option<f64>,
        /// File name stem of the outputs.
        #[arg(long)]
        name: Option<String>,
    },
    /// Baseline search directly over primitive weights.
    PlanDirect {
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Draw a trajectory CSV as SVG.
    Render {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the primitive basis tables as CSV.
    Basis {
        #[arg(long, default_value = "basis.csv")]
        output: PathBuf,
    },
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    Objective::parse(s).ok_or_else(|| format!("unknown objective {s:?}; expected l1 or l2"))
}

/// Failure with its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

/// Which input a format error refers to decides its exit code.
#[derive(Clone, Copy)]
enum Ctx {
    General,
    Checkpoint,
    Csv,
}

fn fail(ctx: Ctx) -> impl Fn(Error) -> Failure {
    move |e| {
        let code = match (&e, ctx) {
            (Error::InvalidConfig(_) | Error::ConditionOutOfRange(_), _) => 2,
            (Error::Timeout { .. }, _) => 3,
            (Error::NonFiniteLoss { .. }, _) => 4,
            (Error::CheckpointMismatch(_), _) => 5,
            (Error::Format { .. } | Error::ShapeMismatch { .. }, Ctx::Checkpoint) => 5,
            (Error::Format { .. }, Ctx::Csv) => 7,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_fail(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(1, format!("{}: {e}", path.display()))
}

type CliResult<T> = Result<T, Failure>;

struct Env {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
    strict: bool,
}

impl Env {
    fn path(&self, p: &Path) -> PathBuf {
        self.out_dir.join(p)
    }

    fn read(&self, p: &Path, rec: &mut Recorder) -> CliResult<(PathBuf, Vec<u8>)> {
        let path = self.path(p);
        let bytes = fs::read(&path).map_err(io_fail(&path))?;
        rec.input(&path, &bytes);
        Ok((path, bytes))
    }

    fn write(&self, p: &Path, bytes: &[u8], rec: &mut Recorder) -> CliResult<()> {
        let path = self.path(p);
        rec.output(&path, bytes).map_err(io_fail(&path))
    }

    fn basis(&self) -> CliResult<PrimitiveBasis> {
        PrimitiveBasis::new(self.cfg.primitives.clone(), self.cfg.sim.dt).map_err(fail(Ctx::General))
    }

    fn normalizer(&self) -> CliResult<Normalizer> {
        let meta = DatasetMeta::from_configs(&self.cfg.dataset, &self.cfg.sim);
        Normalizer::new(&meta, self.cfg.primitives.num_primitives).map_err(fail(Ctx::General))
    }

    fn finish(&self, rec: Recorder) -> CliResult<()> {
        rec.finish(&self.cfg).map_err(io_fail(&self.out_dir))
    }
}

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let preset = ExperimentConfig::preset(&g.preset).map_err(fail(Ctx::General))?;
    let mut cfg = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))?;
            preset.overlay_json(&text).map_err(fail(Ctx::General))?
        }
        None => preset,
    };
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &g.out_dir {
        cfg.output_dir = dir.display().to_string();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Failure::new(2, "--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(1, e.to_string()))?;
    }
    let mut cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Plan { objective, target, .. } => {
            if let Some(o) = objective {
                cfg.planner.objective = *o;
            }
            if let Some(t) = target {
                cfg.planner.target = *t;
            }
        }
        Command::PlanDirect { target: Some(t), .. } => cfg.planner.target = *t,
        Command::Train { beta2_standard: true, .. } => cfg.train.beta2 = 0.999,
        _ => {}
    }
    cfg.validate().map_err(fail(Ctx::General))?;
    let env = Env {
        out_dir: PathBuf::from(&cfg.output_dir),
        cfg,
        strict: cli.global.strict,
    };
    match cli.command {
        Command::GenData { output, csv } => gen_data(&env, &output, csv),
        Command::ExportCsv { dataset, output } => export_csv(&env, &dataset, &output),
        Command::Train { dataset, checkpoint, resume, .. } => train(&env, &dataset, &checkpoint, resume.as_deref()),
        Command::Eval { checkpoint, samples } => eval(&env, &checkpoint, samples),
        Command::Plan { checkpoint, name, .. } => plan(&env, &checkpoint, name),
        Command::PlanDirect { name, .. } => plan_direct(&env, name),
        Command::Render { trajectory, output } => render(&env, &trajectory, output),
        Command::Basis { output } => basis(&env, &output),
    }
}

fn gen_data(env: &Env, output: &Path, csv: bool) -> CliResult<()> {
    let mut rec = Recorder::new("gen-data", &env.out_dir);
    let basis = env.basis()?;
    let (ds, report) = dataset::generate(&env.cfg.dataset, &env.cfg.sim, &basis).map_err(fail(Ctx::General))?;
    env.write(output, &ds.to_bytes(), &mut rec)?;
    let report_json = to_json(&report).map_err(io_fail(output))?;
    env.write(Path::new("gen_report.json"), report_json.as_bytes(), &mut rec)?;
    if csv {
        env.write(&output.with_extension("csv"), ds.to_csv().as_bytes(), &mut rec)?;
    }
    println!(
        "{} samples ({} valid before balancing, {} simulated)",
        report.balanced_count, report.valid_before_balance, report.simulated
    );
    env.finish(rec)
}

fn export_csv(env: &Env, dataset: &Path, output: &Path) -> CliResult<()> {
    let mut rec = Recorder::new("export-csv", &env.out_dir);
    let (_, bytes) = env.read(dataset, &mut rec)?;
    let ds = Dataset::from_bytes(&bytes).map_err(fail(Ctx::General))?;
    env.write(output, ds.to_csv().as_bytes(), &mut rec)?;
    env.finish(rec)
}

fn train(env: &Env, dataset: &Path, checkpoint: &Path, resume: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("train", &env.out_dir);
    let (_, bytes) = env.read(dataset, &mut rec)?;
    let ds = Dataset::from_bytes(&bytes).map_err(fail(Ctx::General))?;
    if ds.num_primitives != env.cfg.primitives.num_primitives {
        return Err(Failure::new(
            2,
            format!(
                "dataset has {} primitives per joint, config has {}",
                ds.num_primitives, env.cfg.primitives.num_primitives
            ),
        ));
    }
    let norm = Normalizer::new(&ds.meta, ds.num_primitives).map_err(fail(Ctx::General))?;
    let data = TrainingData::new(&ds, &norm).map_err(fail(Ctx::General))?;
    let mut trainer = match resume {
        Some(path) => {
            let (_, bytes) = env.read(path, &mut rec)?;
            let mut t = Trainer::from_bytes(&bytes).map_err(fail(Ctx::Checkpoint))?;
            let mut expected = env.cfg.train.clone();
            expected.epochs = t.cfg.epochs;
            if t.cfg != expected {
                return Err(Failure::new(5, "checkpoint was trained with different settings"));
            }
            if t.model.normalizer != norm {
                return Err(Failure::new(5, "checkpoint was trained on a different dataset range"));
            }
            t.cfg.epochs = env.cfg.train.epochs;
            t
        }
        None => Trainer::new(env.cfg.train.clone(), norm).map_err(fail(Ctx::General))?,
    };
    let ckpt_path = env.path(checkpoint);
    let every = env.cfg.train.checkpoint_every;
    trainer
        .train(&data, |t| {
            let e = t.epoch();
            if let Some(h) = t.model.history.last() {
                println!(
                    "epoch {e}: d_loss {:.5} wasserstein {:.5} penalty {:.5}",
                    h.d_loss, h.wasserstein, h.penalty
                );
            }
            if every > 0 && e % every == 0 && e < t.cfg.epochs {
                t.save(&ckpt_path)?;
            }
            Ok(())
        })
        .map_err(fail(Ctx::General))?;
    env.write(checkpoint, &trainer.to_bytes(), &mut rec)?;
    env.write(Path::new("loss_history.csv"), trainer.history_csv().as_bytes(), &mut rec)?;
    env.finish(rec)
}

fn load_model(env: &Env, checkpoint: &Path, rec: &mut Recorder) -> CliResult<Trainer> {
    let (_, bytes) = env.read(checkpoint, rec)?;
    let t = Trainer::from_bytes(&bytes).map_err(fail(Ctx::Checkpoint))?;
    if t.model.normalizer != env.normalizer()? {
        return Err(Failure::new(
            5,
            "checkpoint normalization does not match the configured primitives and distance range",
        ));
    }
    Ok(t)
}

fn eval(env: &Env, checkpoint: &Path, samples: Option<usize>) -> CliResult<()> {
    let mut rec = Recorder::new("eval", &env.out_dir);
    let t = load_model(env, checkpoint, &mut rec)?;
    let basis = env.basis()?;
    let n = samples.unwrap_or(env.cfg.planner.eval_samples);
    let mut r = rng::derive(env.cfg.rng_seed, &[rng::TAG_EVAL]);
    let report = eval_accuracy(&t.model, &env.cfg.sim, &basis, n, &mut r).map_err(fail(Ctx::General))?;
    let json = to_json(&report).map_err(io_fail(checkpoint))?;
    env.write(Path::new("eval_report.json"), json.as_bytes(), &mut rec)?;
    env.write(Path::new("eval_scatter.csv"), report.to_csv().as_bytes(), &mut rec)?;
    println!(
        "mean relative error {:.4}, median {:.4}, failure rate {:.4} over {} motions",
        report.mean_rel_error, report.median_rel_error, report.failure_rate, report.samples
    );
    env.finish(rec)
}

fn write_plan(env: &Env, stem: &str, result: &PlanResult, basis: &PrimitiveBasis, rec: &mut Recorder) -> CliResult<()> {
    let (traj, _) = planner::replay(result, &env.cfg.sim, basis).map_err(fail(Ctx::General))?;
    let traj_csv = traj.to_csv();
    let rows = parse_trajectory_csv(&traj_csv).map_err(fail(Ctx::General))?;
    let svg = render_svg(&rows, &env.cfg.sim, &env.cfg.planner.penalty, env.cfg.planner.frame_interval)
        .map_err(fail(Ctx::General))?;
    let json = to_json(result).map_err(io_fail(&env.out_dir))?;
    env.write(Path::new(&format!("{stem}.json")), json.as_bytes(), rec)?;
    env.write(Path::new(&format!("{stem}_trajectory.csv")), traj_csv.as_bytes(), rec)?;
    env.write(Path::new(&format!("{stem}_trace.csv")), result.trace_csv().as_bytes(), rec)?;
    env.write(Path::new(&format!("{stem}.svg")), svg.as_bytes(), rec)?;
    rec.timings.push((format!("{stem}_search_seconds"), result.wall_time));
    println!(
        "objective {:.6} at generation {} of {}, landing {:?}, relative error {:.4}",
        result.objective,
        result.best_generation,
        result.generations,
        result.landing_x,
        result.relative_error()
    );
    Ok(())
}

fn check_converged(env: &Env, result: &PlanResult) -> CliResult<()> {
    if env.strict && !result.converged {
        return Err(Failure::new(
            6,
            format!("search did not reach objective 0 (best {:.6})", result.objective),
        ));
    }
    Ok(())
}

fn plan(env: &Env, checkpoint: &Path, name: Option<String>) -> CliResult<()> {
    let mut rec = Recorder::new("plan", &env.out_dir);
    let t = load_model(env, checkpoint, &mut rec)?;
    let basis = env.basis()?;
    let p = &env.cfg.planner;
    let result = planner::search_latent(&t.model, p.target, p.objective, &env.cfg.cmaes, &p.penalty, &env.cfg.sim, &basis)
        .map_err(fail(Ctx::General))?;
    let objective = serde_json::to_value(p.objective).ok();
    let tag = objective.as_ref().and_then(|v| v.as_str()).unwrap_or("l1");
    let stem = name.unwrap_or_else(|| format!("plan_latent_{tag}"));
    write_plan(env, &stem, &result, &basis, &mut rec)?;
    env.finish(rec)?;
    check_converged(env, &result)
}

fn plan_direct(env: &Env, name: Option<String>) -> CliResult<()> {
    let mut rec = Recorder::new("plan-direct", &env.out_dir);
    let basis = env.basis()?;
    let norm = env.normalizer()?;
    let mut cma = env.cfg.cmaes.clone();
    cma.max_generations = env.cfg.planner.direct_max_generations;
    let p = &env.cfg.planner;
    let result = planner::search_action(p.target, &norm, &cma, &p.penalty, &env.cfg.sim, &basis).map_err(fail(Ctx::General))?;
    let stem = name.unwrap_or_else(|| "plan_direct".into());
    write_plan(env, &stem, &result, &basis, &mut rec)?;
    env.finish(rec)?;
    check_converged(env, &result)
}

fn render(env: &Env, trajectory: &Path, output: Option<PathBuf>) -> CliResult<()> {
    let mut rec = Recorder::new("render", &env.out_dir);
    let (path, bytes) = env.read(trajectory, &mut rec)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::new(7, "trajectory csv is not UTF-8"))?;
    let rows = parse_trajectory_csv(&text).map_err(fail(Ctx::Csv))?;
    let svg = render_svg(&rows, &env.cfg.sim, &env.cfg.planner.penalty, env.cfg.planner.frame_interval)
        .map_err(fail(Ctx::Csv))?;
    let output = output.unwrap_or_else(|| path.with_extension("svg"));
    env.write(&output, svg.as_bytes(), &mut rec)?;
    env.finish(rec)
}

fn basis(env: &Env, output: &Path) -> CliResult<()> {
    let mut rec = Recorder::new("basis", &env.out_dir);
    env.write(output, env.basis()?.to_csv().as_bytes(), &mut rec)?;
    env.finish(rec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
