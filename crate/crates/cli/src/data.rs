//! Locating datasets and checkpoints on disk.

use std::fs;
use std::path::{Path, PathBuf};

use fedtopic::corpus::{load_corpus_filtered, BowCorpus};
use fedtopic::synthgen::load_dataset;

use crate::config::Config;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const WORD_EMBEDDINGS: &str = "word_embeddings.txt";

/// Where training documents come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// A generated dataset directory.
    Synthetic(PathBuf),
    /// One corpus file per node.
    Corpora(Vec<PathBuf>),
}

/// Dataset directories below `root` (those holding a manifest), as paths
/// relative to `root`, sorted.
pub fn discover(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let dir = root.join(rel);
        if dir.join(MANIFEST).is_file() {
            out.push(rel.to_path_buf());
            return Ok(());
        }
        let mut subdirs: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| rel.join(e.file_name()))
            .collect();
        subdirs.sort();
        for s in subdirs {
            walk(root, &s, out)?;
        }
        Ok(())
    }
    if !root.is_dir() {
        return Err(CliError::Config(format!("dataset directory {} does not exist", root.display())));
    }
    let mut out = Vec::new();
    walk(root, Path::new(""), &mut out)?;
    if out.is_empty() {
        return Err(CliError::Config(format!("no dataset found under {}", root.display())));
    }
    Ok(out)
}

/// Repetition index encoded as a `run<r>` path component, else 0.
pub fn run_index(rel: &Path) -> usize {
    rel.components()
        .filter_map(|c| c.as_os_str().to_str()?.strip_prefix("run")?.parse().ok())
        .last()
        .unwrap_or(0)
}

/// Training sources named by the config, each with its path relative to the
/// output directory.
pub fn sources(cfg: &Config) -> Result<Vec<(PathBuf, Source)>> {
    match (cfg.get_path("data.dataset")?, cfg.get_list("data.corpora")?) {
        (Some(_), Some(_)) => Err(CliError::Config("set exactly one of data.dataset and data.corpora".into())),
        (None, None) => Err(CliError::Config("no data: set data.dataset or data.corpora".into())),
        (Some(root), None) => Ok(discover(&root)?
            .into_iter()
            .map(|rel| {
                let dir = root.join(&rel);
                (rel, Source::Synthetic(dir))
            })
            .collect()),
        (None, Some(paths)) => {
            let paths: Vec<PathBuf> = paths.iter().map(|p| cfg.resolve(p)).collect();
            if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
                return Err(CliError::Config(format!("corpus {} does not exist", missing.display())));
            }
            Ok(vec![(PathBuf::new(), Source::Corpora(paths))])
        }
    }
}

impl Source {
    pub fn load(&self, min_count: usize) -> Result<Vec<BowCorpus>> {
        match self {
            Source::Synthetic(dir) => Ok(load_dataset(dir)?.train),
            Source::Corpora(paths) => paths.iter().map(|p| Ok(load_corpus_filtered(p, min_count)?)).collect(),
        }
    }

    /// Value for a `data.*` override that reproduces this source.
    pub fn as_override(&self) -> String {
        match self {
            Source::Synthetic(dir) => format!("data.dataset={}", absolute(dir).display()),
            Source::Corpora(paths) => {
                let list: Vec<String> = paths.iter().map(|p| absolute(p).display().to_string()).collect();
                format!("data.corpora={}", list.join(","))
            }
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Checkpoints in `dir` keyed by file stem, sorted.
pub fn checkpoints_in(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<(String, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p.clone())))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_indices() {
        assert_eq!(run_index(Path::new("K_shared-3/run7")), 7);
        assert_eq!(run_index(Path::new("")), 0);
        assert_eq!(run_index(Path::new("runner")), 0);
    }

    #[test]
    fn discovery_finds_nested_manifests() {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["b/run1", "b/run0", "a"] {
            fs::create_dir_all(dir.path().join(sub)).unwrap();
            fs::write(dir.path().join(sub).join(MANIFEST), "").unwrap();
        }
        fs::create_dir_all(dir.path().join("empty")).unwrap();
        let found = discover(dir.path()).unwrap();
        assert_eq!(found, [PathBuf::from("a"), PathBuf::from("b/run0"), PathBuf::from("b/run1")]);
        assert!(discover(&dir.path().join("empty")).is_err());
    }
}
