use std::path::Path;

use pan_core::corpus::{load, Split};
use pan_core::descriptor::{write_pane, DescriptorMeta, EmbeddingFile, SidecarRow};
use pan_core::Tensor;

use crate::cmd::train::load_checkpoint;
use crate::error::CliError;
use crate::run::train_run_for;
use crate::SplitArg;

pub fn run(ckpt: &Path, corpus_dir: &Path, split: SplitArg, out: &Path) -> Result<(), CliError> {
    let run = train_run_for(ckpt)?;
    let model = load_checkpoint(run.network, ckpt)?;
    let corpus = load(corpus_dir)?;
    let split = match split {
        SplitArg::Query => Split::Query,
        SplitArg::Gallery => Split::Gallery,
        SplitArg::Train => Split::Train,
    };
    let samples: Vec<_> = corpus.split(split).collect();
    let images: Vec<&Tensor> = samples.iter().map(|(_, s)| &s.image).collect();
    let emb = model.embed_all(&images)?;
    let cfg = model.config();
    let mut file = EmbeddingFile::new(cfg.base_embed_dim(), cfg.align_embed_dim());
    let mut sidecar = Vec::with_capacity(samples.len());
    for ((i, s), e) in samples.iter().zip(&emb) {
        let meta = DescriptorMeta {
            sample_id: *i as u32,
            identity: s.identity,
            camera: s.camera,
        };
        file.push(meta, &e.base, &e.align)?;
        sidecar.push(SidecarRow {
            sample_id: *i as u32,
            path: s.path.clone(),
        });
    }
    write_pane(out, &file, &sidecar)?;
    eprintln!("embedded {} images into {}", samples.len(), out.display());
    Ok(())
}
