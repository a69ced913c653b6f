//! Labelled trace corpora on disk: `<class>/<id>.tact` plus `manifest.csv`
//! with header `class,path,seed` (paths relative to the manifest).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use tactile_core::signal::io::{read_trace, write_trace};
use tactile_core::vibro::{trace_seed, TraceCorpus};

pub const MANIFEST: &str = "manifest.csv";

/// Writes every trace and the manifest; `seed` is the corpus seed the traces were drawn from.
pub fn write_corpus(dir: &Path, corpus: &TraceCorpus, seed: u64) -> Result<()> {
    let mut manifest = String::from("class,path,seed\n");
    for (class, traces) in corpus.classes.iter().zip(&corpus.traces) {
        let class_dir = dir.join(class);
        fs::create_dir_all(&class_dir).with_context(|| format!("creating {}", class_dir.display()))?;
        for (i, t) in traces.iter().enumerate() {
            let rel = format!("{class}/{i:04}.tact");
            write_trace(&dir.join(&rel), t)?;
            manifest.push_str(&format!("{class},{rel},{}\n", trace_seed(seed, class, i)));
        }
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub class: String,
    pub path: String,
    pub seed: u64,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "class,path,seed" => {}
        _ => bail!("manifest line 1: expected header `class,path,seed`"),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let [class, path, seed] = f.as_slice() else {
            bail!("manifest line {}: expected 3 fields, got {}", i + 1, f.len());
        };
        if class.is_empty() || path.is_empty() {
            bail!("manifest line {}: empty class or path", i + 1);
        }
        let seed = seed
            .trim()
            .parse()
            .with_context(|| format!("manifest line {}: bad seed `{seed}`", i + 1))?;
        rows.push(ManifestRow {
            class: class.to_string(),
            path: path.to_string(),
            seed,
        });
    }
    if rows.is_empty() {
        bail!("manifest lists no traces");
    }
    Ok(rows)
}

/// Loads a corpus; classes keep the order of their first manifest row.
pub fn read_corpus(dir: &Path) -> Result<TraceCorpus> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        bail!("corpus manifest not found at {} (run gen-data first)", path.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_manifest(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut corpus = TraceCorpus {
        classes: Vec::new(),
        traces: Vec::new(),
    };
    for r in rows {
        let c = match corpus.classes.iter().position(|c| *c == r.class) {
            Some(c) => c,
            None => {
                corpus.classes.push(r.class.clone());
                corpus.traces.push(Vec::new());
                corpus.classes.len() - 1
            }
        };
        corpus.traces[c].push(read_trace(&dir.join(&r.path))?);
    }
    corpus.validate()?;
    Ok(corpus)
}
