use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Inputs read and artifacts written by one invocation, for the manifest.
pub struct Run {
    argv: Vec<String>,
    command: &'static str,
    seed: u64,
    pretty: bool,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a [String],
    seed: u64,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex(&h.finalize()))
}

/// Write `bytes` to a temp file next to `dest`, then rename over it.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)
        .with_context(|| format!("cannot create a temporary file in {}", parent.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dest)
        .with_context(|| format!("cannot write {}", dest.display()))?;
    Ok(())
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl Run {
    pub fn new(argv: Vec<String>, command: &'static str, seed: u64, pretty: bool) -> Self {
        Run {
            argv,
            command,
            seed,
            pretty,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Checks that an input exists and records its digest.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if !path.is_file() {
            anyhow::bail!("input file not found: {}", path.display());
        }
        let sha256 = digest_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Writes to `dest`, or stdout when there is none.
    pub fn emit(&mut self, dest: Option<&Path>, bytes: &[u8]) -> Result<()> {
        match dest {
            Some(p) => {
                write_atomic(p, bytes)?;
                self.outputs.push(FileDigest {
                    path: p.display().to_string(),
                    sha256: hex(&Sha256::digest(bytes)),
                });
            }
            None => {
                let mut out = io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn emit_json<T: Serialize + ?Sized>(&mut self, dest: Option<&Path>, value: &T) -> Result<()> {
        let bytes = json_bytes(value, self.pretty)?;
        self.emit(dest, &bytes)
    }

    pub fn emit_jsonl<T: Serialize>(&mut self, dest: Option<&Path>, rows: &[T]) -> Result<()> {
        self.emit(dest, &jsonl_bytes(rows)?)
    }

    /// Writes the manifest next to the first file output. Runs that only
    /// print to stdout have nowhere to put one.
    pub fn finish(self) -> Result<()> {
        let Some(first) = self.outputs.first() else {
            return Ok(());
        };
        let dest = sibling(Path::new(&first.path), ".manifest.json");
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            args: self.argv.get(1..).unwrap_or(&[]),
            seed: self.seed,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        write_atomic(&dest, &json_bytes(&manifest, true)?)
    }
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T, pretty: bool) -> Result<Vec<u8>> {
    let mut bytes = if pretty {
        serde_json::to_vec_pretty(value)?
    } else {
        serde_json::to_vec(value)?
    };
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}
