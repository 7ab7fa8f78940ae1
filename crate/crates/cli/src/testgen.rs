use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use codeverif_core::testgen::{emit_corpus, GeneratorSpec};

use crate::args::GenTestsArgs;
use crate::table::Table;

pub fn run(args: GenTestsArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec = GeneratorSpec::from_json(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let existing = corpus_files(&args.out_dir)?;
    if !existing.is_empty() {
        if !args.force {
            bail!("{} already holds {} .in files; pass --force to replace them", args.out_dir.display(), existing.len());
        }
        for name in existing {
            fs::remove_file(args.out_dir.join(name))?;
        }
    }
    let inputs = emit_corpus(&spec, &args.out_dir)?;
    let mut table = Table::new(["label", "category", "bytes"]);
    for input in &inputs {
        table.row([input.label.clone(), input.category.to_string(), input.byte_size.to_string()]);
    }
    table.print();
    println!();
    println!("cases:  {}", inputs.len());
    println!("seed:   {}", spec.seed);
    println!("digest: {}", corpus_digest(&args.out_dir)?);
    Ok(())
}

fn corpus_files(dir: &Path) -> Result<Vec<String>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".in"))
        .collect();
    names.sort();
    Ok(names)
}

/// SHA-256 over `name NUL len NUL bytes` of every `.in` file, by name.
pub fn corpus_digest(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in corpus_files(dir)? {
        let bytes = fs::read(dir.join(&name))?;
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(bytes.len().to_string().as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}
