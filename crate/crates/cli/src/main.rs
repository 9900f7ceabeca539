use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use con4m::autodiff::{argmax, load_checkpoint, save_checkpoint, CheckpointManifest, ParamStore};
use con4m::config::{parse_pairs, RunConfig};
use con4m::data::io::{read_json, read_jsonl, write_json, write_jsonl};
use con4m::data::{
    disturb_dataset, disturb_symmetric, generate_mvd, make_splits, point_levels, segment_interval,
    DisturbMode, DisturbanceConfig, Fold, GeneratorConfig, SegmentSequence, TimeInterval,
};
use con4m::metrics::{mi_gain, DiscreteJoint, MetricsReport, MiGain};
use con4m::model::Con4m;
use con4m::predict::PredictionRecord;
use con4m::trainer::{
    apply_harmonized, evaluate_samples, harmonized_intervals, tile_records, train, HarmonizedInterval,
};
use serde::{Deserialize, Serialize};

const SNAPSHOT: &str = "config.resolved";

#[derive(Parser)]
#[command(name = "con4m", version, about = "Consistency learning for segmented time-series classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, env = "CON4M_OUT", default_value = "con4m-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Disturb class boundaries of a dataset.
    Disturb {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cut a dataset into labelled segment sequences.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train on one fold and keep the best validation checkpoint.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on the test groups of its fold.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the dataset with working labels replaced by harmonized ones.
    HarmonizeExport {
        #[arg(long)]
        input: PathBuf,
        /// Output directory of a `train` run.
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Mutual-information gain of context on bundled joints.
    MiDemo {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<con4m::Error> for Failure {
    fn from(e: con4m::Error) -> Self {
        match e {
            con4m::Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetManifest {
    records: usize,
    generator: Option<GeneratorConfig>,
    seed: Option<u64>,
    window: usize,
    stride: usize,
    disturbance: Option<DisturbanceConfig>,
    config_hash: String,
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint_epoch: usize,
    test_clean: MetricsReport,
    test_working: MetricsReport,
    val_working: MetricsReport,
    /// Fraction of test intervals whose constrained labels change class at most once.
    single_transition: f64,
}

#[derive(Serialize)]
struct PredictionLine {
    first_segment: usize,
    clean_labels: Vec<usize>,
    #[serde(flatten)]
    record: PredictionRecord,
}

#[derive(Serialize)]
struct MiRow {
    name: &'static str,
    #[serde(flatten)]
    gain: MiGain,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn resolve(common: &Common, base: &[(String, String)]) -> Outcome<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.apply_pairs(base)?;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let pairs = parse_pairs(&text, &path.display().to_string()).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.apply_pairs(&pairs)?;
    }
    let mut extra = Vec::new();
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        extra.push((k.trim().to_string(), v.trim().to_string()));
    }
    cfg.apply_pairs(&extra)?;
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(common: &Common, cfg: &RunConfig) -> Outcome<PathBuf> {
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", common.out.display())))?;
    let snapshot = common.out.join(SNAPSHOT);
    std::fs::write(&snapshot, cfg.to_text())
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", snapshot.display())))?;
    Ok(common.out.clone())
}

fn guard(input: &Path, output: &Path) -> Outcome<()> {
    if let (Ok(a), Ok(b)) = (input.canonicalize(), output.canonicalize()) {
        if a == b {
            return Err(Failure::Config(format!("output {} would overwrite the input", b.display())));
        }
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Outcome<Vec<TimeInterval>> {
    Ok(read_jsonl(path)?)
}

fn group_count(data: &[TimeInterval]) -> usize {
    data.iter().map(|iv| iv.group_id + 1).max().unwrap_or(0)
}

fn select_fold(cfg: &RunConfig, data: &[TimeInterval]) -> Outcome<Fold> {
    let plan = make_splits(group_count(data), cfg.scheme)?;
    let n = plan.folds.len();
    plan.folds
        .into_iter()
        .nth(cfg.fold)
        .ok_or_else(|| Failure::Config(format!("config error for `split.fold`: {} of {n} folds", cfg.fold)))
}

fn write_dataset(path: &Path, data: &[TimeInterval], manifest: &DatasetManifest) -> Outcome<()> {
    write_jsonl(path, data)?;
    write_json(&sidecar(path), manifest)?;
    Ok(())
}

fn cmd_gen(common: &Common) -> Outcome<()> {
    let cfg = resolve(common, &[])?;
    let out = prepare_out(common, &cfg)?;
    let data = generate_mvd(&cfg.generator, cfg.seed())?;
    let manifest = DatasetManifest {
        records: data.len(),
        generator: Some(cfg.generator.clone()),
        seed: Some(cfg.seed()),
        window: cfg.train.window(),
        stride: cfg.train.stride,
        disturbance: None,
        config_hash: cfg.hash(),
    };
    write_dataset(&out.join("dataset.jsonl"), &data, &manifest)
}

fn cmd_disturb(input: &Path, common: &Common) -> Outcome<()> {
    let cfg = resolve(common, &[])?;
    if cfg.disturbance.mode == DisturbMode::Symmetric {
        return Err(Failure::Config(
            "config error for `disturb.mode`: symmetric disturbance acts on segment labels; apply it with `segment`".into(),
        ));
    }
    let data = read_dataset(input)?;
    let out = prepare_out(common, &cfg)?;
    let target = out.join("disturbed.jsonl");
    guard(input, &target)?;
    let disturbed = disturb_dataset(&data, cfg.disturbance.ratio, cfg.disturbance.seed)?;
    let mut manifest = read_json::<DatasetManifest>(&sidecar(input)).unwrap_or(DatasetManifest {
        records: data.len(),
        generator: None,
        seed: None,
        window: cfg.train.window(),
        stride: cfg.train.stride,
        disturbance: None,
        config_hash: String::new(),
    });
    manifest.disturbance = Some(cfg.disturbance);
    manifest.config_hash = cfg.hash();
    write_dataset(&target, &disturbed, &manifest)
}

fn cmd_segment(input: &Path, common: &Common) -> Outcome<()> {
    let cfg = resolve(common, &[])?;
    let data = read_dataset(input)?;
    let out = prepare_out(common, &cfg)?;
    let target = out.join("segments.jsonl");
    guard(input, &target)?;
    let (w, r) = (cfg.train.window(), cfg.train.stride);
    let mut seqs: Vec<SegmentSequence> = Vec::with_capacity(data.len());
    for iv in &data {
        let levels = point_levels(&iv.labels, cfg.train.schedule.levels);
        let mut seq = segment_interval(iv.interval_id, &iv.values, &iv.labels, Some(&levels), w, r)?;
        if cfg.disturbance.mode == DisturbMode::Symmetric && cfg.disturbance.ratio > 0.0 {
            seq.seg_labels = disturb_symmetric(
                &seq.seg_labels,
                cfg.generator.classes,
                cfg.disturbance.ratio,
                cfg.disturbance.seed.wrapping_add(iv.interval_id as u64),
            )?;
        }
        seqs.push(seq);
    }
    write_jsonl(&target, &seqs)?;
    Ok(())
}

fn cmd_train(input: &Path, common: &Common) -> Outcome<()> {
    let cfg = resolve(common, &[])?;
    let data = read_dataset(input)?;
    let fold = select_fold(&cfg, &data)?;
    let out = prepare_out(common, &cfg)?;
    let result = train(&cfg.train, &data, &fold)?;
    let manifest = CheckpointManifest {
        config_hash: cfg.hash(),
        epoch: result.log.best_epoch,
        seed: cfg.seed(),
        rng_word_pos: 0,
        config: cfg.to_pairs(),
    };
    save_checkpoint(&out.join("checkpoint.bin"), &result.best, &manifest)?;
    write_json(&out.join("train_log.json"), &result.log)?;
    write_jsonl(&out.join("label_state.jsonl"), &harmonized_intervals(&result))?;
    Ok(())
}

fn cmd_eval(input: &Path, checkpoint: &Path, common: &Common) -> Outcome<()> {
    let (loaded, manifest) = load_checkpoint(checkpoint)?;
    let cfg = resolve(common, &manifest.config)?;
    let data = read_dataset(input)?;
    let fold = select_fold(&cfg, &data)?;
    let out = prepare_out(common, &cfg)?;
    let mut store = ParamStore::new();
    let model = Con4m::new(&mut store, &cfg.train.model, cfg.seed())?;
    store
        .load_from(&loaded)
        .map_err(|e| Failure::Config(format!("checkpoint does not match the model config: {e}")))?;
    let (w, r, l) = (cfg.train.window(), cfg.train.stride, cfg.train.seq_len);
    let pick = |groups: &[usize]| -> Vec<&TimeInterval> {
        data.iter().filter(|iv| groups.contains(&iv.group_id)).collect()
    };
    let test = tile_records(&pick(&fold.test), w, r, l)?;
    let val = tile_records(&pick(&fold.val), w, r, l)?;
    let tau = cfg.train.tau;
    let mut lines = Vec::with_capacity(test.len());
    let mut single = 0usize;
    for s in &test {
        let bundle = model.predict(&store, &s.segments)?;
        let constrained: Vec<usize> = (0..bundle.p_bar.rows()).map(|i| argmax(bundle.p_bar.row(i))).collect();
        single += usize::from(constrained.windows(2).filter(|p| p[0] != p[1]).count() <= 1);
        lines.push(PredictionLine {
            first_segment: s.first_segment,
            clean_labels: s.clean.clone(),
            record: bundle.record(s.interval_id),
        });
    }
    let report = EvalReport {
        checkpoint_epoch: manifest.epoch,
        test_clean: evaluate_samples(&model, &store, &test, true, tau)?,
        test_working: evaluate_samples(&model, &store, &test, false, tau)?,
        val_working: evaluate_samples(&model, &store, &val, false, tau)?,
        single_transition: single as f64 / test.len().max(1) as f64,
    };
    write_json(&out.join("metrics.json"), &report)?;
    write_jsonl(&out.join("predictions.jsonl"), &lines)?;
    Ok(())
}

fn cmd_harmonize_export(input: &Path, run: &Path, common: &Common) -> Outcome<()> {
    let snapshot = std::fs::read_to_string(run.join(SNAPSHOT))
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", run.join(SNAPSHOT).display())))?;
    let base = parse_pairs(&snapshot, SNAPSHOT)?;
    let cfg = resolve(common, &base)?;
    let data = read_dataset(input)?;
    let items: Vec<HarmonizedInterval> = read_jsonl(&run.join("label_state.jsonl"))?;
    let out = prepare_out(common, &cfg)?;
    let target = out.join("harmonized.jsonl");
    guard(input, &target)?;
    let harmonized = apply_harmonized(&data, &items, cfg.train.window(), cfg.train.stride, cfg.generator.classes)?;
    write_jsonl(&target, &harmonized)?;
    Ok(())
}

fn bundled_joints() -> Outcome<Vec<(&'static str, DiscreteJoint)>> {
    let mut saturated = vec![vec![vec![0.0; 2]; 2]; 2];
    let mut context_only = vec![vec![vec![0.0; 2]; 2]; 2];
    let mut noisy = vec![vec![vec![0.0; 2]; 2]; 2];
    let (py, px) = ([0.3, 0.7], [0.4, 0.6]);
    for y in 0..2 {
        saturated[y][y] = vec![0.25, 0.25];
        for x in 0..2 {
            context_only[y][x][y] = py[y] * px[x];
            for a in 0..2 {
                let fx = if x == y { 0.8 } else { 0.2 };
                let fa = if a == y { 0.9 } else { 0.1 };
                noisy[y][x][a] = 0.5 * fx * fa;
            }
        }
    }
    Ok(vec![
        ("saturated", DiscreteJoint::new(saturated)?),
        ("context_only", DiscreteJoint::new(context_only)?),
        ("noisy_views", DiscreteJoint::new(noisy)?),
        ("independent", DiscreteJoint::independent(&[0.5, 0.5], &[0.2, 0.8], &[0.1, 0.9])?),
    ])
}

fn cmd_mi_demo(common: &Common) -> Outcome<()> {
    let cfg = resolve(common, &[])?;
    let out = prepare_out(common, &cfg)?;
    let rows: Vec<MiRow> = bundled_joints()?
        .into_iter()
        .map(|(name, j)| MiRow { name, gain: mi_gain(&j) })
        .collect();
    println!("{:<14} {:>10} {:>14} {:>10}", "joint", "I(y;x)", "I(y;x,x_A)", "gain");
    for r in &rows {
        println!(
            "{:<14} {:>10.6} {:>14.6} {:>10.6}",
            r.name, r.gain.i_y_x, r.gain.i_y_x_context, r.gain.gain
        );
    }
    write_json(&out.join("mi_demo.json"), &rows)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match &cli.command {
        Command::Gen { common } => cmd_gen(common),
        Command::Disturb { input, common } => cmd_disturb(input, common),
        Command::Segment { input, common } => cmd_segment(input, common),
        Command::Train { input, common } => cmd_train(input, common),
        Command::Eval {
            input,
            checkpoint,
            common,
        } => cmd_eval(input, checkpoint, common),
        Command::HarmonizeExport { input, run, common } => cmd_harmonize_export(input, run, common),
        Command::MiDemo { common } => cmd_mi_demo(common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
