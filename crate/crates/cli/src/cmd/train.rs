use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use pan_core::autodiff::ParamStore;
use pan_core::corpus::load;
use pan_core::fsio::write_atomic;
use pan_core::network::{
    train_stage1, train_stage2, Augment, EpochLog, PanConfig, PanModel, TrainSet,
};
use pan_core::PanError;

use crate::error::{usage, CliError};
use crate::run::{read_json, version, write_json, TrainRun, RUN_FILE};
use crate::Stage;

pub const CHECKPOINT: &str = "model.panw";
pub const LOG: &str = "train.jsonl";

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub stage: Stage,
    /// JSON network config; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to start from; required for `--stage 2`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_theta: Option<f64>,
    #[arg(long)]
    pub lr_decay_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_augment: bool,
}

fn merged_config(
    args: &TrainArgs,
    num_classes: usize,
    (h, w): (usize, usize),
) -> Result<PanConfig, CliError> {
    let mut c: PanConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PanConfig::default(),
    };
    c.num_classes = num_classes;
    c.input_h = h;
    c.input_w = w;
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag {
                c.$field = v;
            }
        };
    }
    set!(total_epochs, args.epochs);
    set!(lr_main, args.lr);
    set!(lr_theta_layer, args.lr_theta);
    set!(lr_decay_epoch, args.lr_decay_epoch);
    set!(batch_size, args.batch_size);
    set!(alpha, args.alpha);
    set!(seed, args.seed);
    if args.no_augment {
        c.augment = Augment::none();
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

pub fn load_checkpoint(config: PanConfig, path: &Path) -> Result<PanModel, PanError> {
    let bytes = pan_core::fsio::read(path)?;
    let store = ParamStore::read_checkpoint(&bytes[..], path)?;
    PanModel::from_params(config, store, path)
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    if args.stage == Stage::Two && args.init.is_none() {
        return Err(usage(
            "--stage 2 needs --init <checkpoint> from a stage-1 run",
        ));
    }
    let corpus = load(&args.corpus)?;
    let (images, labels, k) = corpus.train_set();
    let first = images.first().ok_or_else(|| PanError::Format {
        path: args.corpus.clone(),
        msg: "no training images".into(),
    })?;
    let size = (first.shape()[1], first.shape()[2]);
    let config = merged_config(args, k, size)?;
    let mut model = match &args.init {
        Some(p) => load_checkpoint(config.clone(), p)?,
        None => PanModel::new(config.clone())?,
    };

    fs::create_dir_all(&args.out).map_err(|e| PanError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let stage = match args.stage {
        Stage::One => "1",
        Stage::Two => "2",
        Stage::Both => "both",
    };
    write_json(
        &args.out.join(RUN_FILE),
        &TrainRun {
            version: version(),
            corpus: args.corpus.clone(),
            stage: stage.into(),
            init: args.init.clone(),
            network: config,
        },
    )?;

    let log_path = args.out.join(LOG);
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .map_err(|e| PanError::Io {
            path: log_path.clone(),
            source: e,
        })?;
    let mut log_err = None;
    let mut hook = |l: &EpochLog| {
        let line = serde_json::to_string(l).expect("serializable");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
        eprintln!(
            "stage {} epoch {:>3}  lr {:.0e}  l_base {:.4}{}",
            l.stage,
            l.epoch,
            l.lr,
            l.l_base,
            l.l_align
                .map(|a| format!("  l_align {a:.4}"))
                .unwrap_or_default()
        );
    };
    let data = TrainSet {
        images: &images,
        labels: &labels,
    };
    if matches!(args.stage, Stage::One | Stage::Both) {
        train_stage1(&mut model, data, Some(&mut hook))?;
    }
    if matches!(args.stage, Stage::Two | Stage::Both) {
        train_stage2(&mut model, data, Some(&mut hook))?;
    }
    if let Some(e) = log_err {
        return Err(PanError::Io {
            path: log_path,
            source: e,
        }
        .into());
    }
    let mut bytes = Vec::new();
    model
        .params()
        .write_checkpoint(&mut bytes)
        .expect("in-memory write");
    write_atomic(&args.out.join(CHECKPOINT), &bytes)?;
    Ok(())
}
