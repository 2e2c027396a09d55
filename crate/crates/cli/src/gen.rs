//! `sgt gen`: write a SpurShapes dataset to disk.

use std::path::PathBuf;

use sgt_core::datagen::{generate, write_dataset, Split, SpurSpec};

use crate::{prepare_out_dir, read_json, CliError};

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub force: bool,
}

/// Generates all three splits. Returns the per-split counts.
pub fn cmd_gen(opts: &GenOptions) -> Result<Vec<(Split, usize)>, CliError> {
    let mut spec: SpurSpec = match &opts.spec {
        Some(p) => read_json(p)?,
        None => SpurSpec::default(),
    };
    if let Some(s) = opts.seed {
        spec.seed = s;
    }
    // nothing touches the disk before the spec is known to be valid
    spec.validate()?;
    prepare_out_dir(&opts.out, opts.force)?;
    let splits = [Split::Train, Split::IidTest, Split::OodTest]
        .into_iter()
        .map(|s| Ok((s, generate(&spec, s)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_dataset(&opts.out, &spec, &splits)?;
    Ok(splits.iter().map(|(s, v)| (*s, v.len())).collect())
}
