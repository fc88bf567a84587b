use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Digests of a file, or of every file below a directory in path order.
pub fn digest_inputs(path: &Path) -> CliResult<Vec<FileDigest>> {
    let mut files = Vec::new();
    collect_files(path, &mut files).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    files
        .into_iter()
        .map(|f| {
            let bytes = fs::read(&f).map_err(|e| CliError::data(format!("{}: {e}", f.display())))?;
            Ok(FileDigest {
                path: f.display().to_string(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect()
}

/// Output directory that records a digest for every file it writes.
pub struct Outputs {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl Outputs {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::config(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.written.push(FileDigest {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Records a file produced elsewhere (e.g. a checkpoint) under `rel`.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.written.push(FileDigest {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `config.json` and `manifest.json`.
    pub fn finish(mut self, command: &str, config: &RunConfig, inputs: &[FileDigest]) -> CliResult<()> {
        self.write("config.json", config.to_json().as_bytes())?;
        let mut outputs = self.written.clone();
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed(),
            config,
            inputs,
            outputs: &outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

pub struct Line<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Polyline chart of equally spaced observations, y axis from 0.
pub fn line_chart(title: &str, lines: &[Line<'_>]) -> String {
    let n = lines.iter().map(|l| l.values.len()).max().unwrap_or(0);
    let ymax = lines
        .iter()
        .flat_map(|l| l.values.iter())
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let x = |i: usize| MARGIN + pw * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| MARGIN + ph * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<path d="M{m} {m} V{b} H{r}" stroke="#444" fill="none"/>"##,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for frac in [0.0, 0.5, 1.0] {
        let v = ymax * frac;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0,
            y(v) + 3.0
        );
    }
    for (k, line) in lines.iter().enumerate() {
        let pts: Vec<String> = line
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            line.color,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-family="sans-serif" font-size="11" fill="{}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            line.color,
            escape(line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_line() {
        let a = [0.1, 0.3, 0.2];
        let b = [0.2, 0.2, 0.2];
        let svg = line_chart(
            "s<1>",
            &[
                Line {
                    label: "|r|",
                    color: "#999",
                    values: &a,
                },
                Line {
                    label: "dsvm",
                    color: "#c00",
                    values: &b,
                },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("s&lt;1&gt;"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
