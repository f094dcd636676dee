use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cbc_core::corridor::parse_corridor_log;
use cbc_core::geom::parse_polygons;
use cbc_core::pathfollow::parse_path;
use cbc_core::sim::parse_trajectory_csv;
use cbc_core::world::load_world;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Polygons,
    CorridorLog,
    Trajectory,
    World,
    Path,
    Json,
    /// Plain CSV with a header row.
    Table,
}

/// Writes files under one output directory and re-parses them afterwards.
#[derive(Debug)]
pub struct Emitter {
    root: PathBuf,
    files: Vec<(PathBuf, Kind)>,
}

impl Emitter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, kind: Kind, content: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.files.push((path, kind));
        Ok(())
    }

    pub fn json(&mut self, rel: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, Kind::Json, &text)
    }

    pub fn table(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(rel, Kind::Table, &text)
    }

    /// Re-read every emitted file and parse it with the matching reader.
    pub fn self_check(&self) -> Result<usize> {
        for (path, kind) in &self.files {
            let text = fs::read_to_string(path)?;
            let res: Result<(), String> = match kind {
                Kind::Polygons => parse_polygons(&text).map(drop),
                Kind::CorridorLog => parse_corridor_log(&text).map(drop),
                Kind::Trajectory => parse_trajectory_csv(&text).map(drop),
                Kind::World => load_world(&text).map(drop).map_err(|e| e.to_string()),
                Kind::Path => parse_path(&text).map(drop),
                Kind::Json => serde_json::from_str::<serde_json::Value>(&text)
                    .map(drop)
                    .map_err(|e| e.to_string()),
                Kind::Table => check_table(&text),
            };
            if let Err(e) = res {
                bail!("self-check failed for {}: {e}", path.display());
            }
        }
        Ok(self.files.len())
    }
}

fn check_table(text: &str) -> Result<(), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty table")?;
    let cols = header.split(',').count();
    for (i, line) in lines.enumerate() {
        let n = line.split(',').count();
        if n != cols {
            return Err(format!("row {} has {n} fields, header has {cols}", i + 2));
        }
        for f in line.split(',') {
            if !f.is_empty()
                && f.parse::<f64>().is_err()
                && !matches!(f, "true" | "false")
                && !f.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Err(format!("row {}: unreadable field {f:?}", i + 2));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_table_is_caught() {
        assert!(check_table("a,b\n1,2\n").is_ok());
        assert!(check_table("a,b\n1\n").is_err());
        assert!(check_table("").is_err());
        assert!(check_table("a\nx y\n").is_err());
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = Emitter::new(dir.path()).unwrap();
        e.write("a/b.world", Kind::World, "res 1 origin 0 0\n..\n").unwrap();
        e.json("s.json", &serde_json::json!({"x": 1})).unwrap();
        assert_eq!(e.self_check().unwrap(), 2);
        e.write("bad.world", Kind::World, "nonsense\n").unwrap();
        assert!(e.self_check().is_err());
    }
}
