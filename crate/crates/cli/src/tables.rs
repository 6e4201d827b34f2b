//! Reading back the tables the CLI writes, and atomic file output.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use crloc::metrics::FixationTarget;
use crloc::Point;

/// Writes `path` through a sibling temporary file so a failed run leaves no
/// partial output.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).with_context(|| format!("{}", path.display()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, &buf).with_context(|| format!("{}", path.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("{}", path.display()))?;
    Ok(())
}

/// Fails with a not-found error (exit 3) when `path` does not exist.
pub fn require(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(anyhow!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "no such file"
        ))
        .context(format!("{}", path.display())))
    }
}

fn reader(path: &Path) -> anyhow::Result<csv::Reader<std::fs::File>> {
    require(path)?;
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("{}", path.display()))
}

fn cell(rec: &csv::StringRecord, i: usize) -> anyhow::Result<Option<f64>> {
    let s = rec.get(i).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| anyhow!("bad number '{s}'"))
}

fn point(rec: &csv::StringRecord, (ix, iy): (usize, usize)) -> anyhow::Result<Option<Point>> {
    Ok(match (cell(rec, ix)?, cell(rec, iy)?) {
        (Some(x), Some(y)) => Some(Point::new(x, y)),
        _ => None,
    })
}

/// A per-frame pipeline table.
#[derive(Debug, Clone)]
pub struct FrameTable {
    pub t: Vec<f64>,
    pub pupil: Vec<Option<Point>>,
    /// `(method, centers)` for every `cr_<method>_x/_y` column pair.
    pub cr: Vec<(String, Vec<Option<Point>>)>,
}

impl FrameTable {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut rd = reader(path)?;
        let headers = rd
            .headers()
            .with_context(|| format!("{}", path.display()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| anyhow!("{}: missing column '{name}'", path.display()))
        };
        let t_col = col("t")?;
        let pupil_cols = (col("pupil_x")?, col("pupil_y")?);
        let mut methods = Vec::new();
        for h in headers.iter() {
            if let Some(m) = h.strip_prefix("cr_").and_then(|r| r.strip_suffix("_x")) {
                methods.push((m.to_string(), (col(h)?, col(&format!("cr_{m}_y"))?)));
            }
        }
        if methods.is_empty() {
            bail!("{}: no cr_<method>_x columns", path.display());
        }
        let mut table = FrameTable {
            t: Vec::new(),
            pupil: Vec::new(),
            cr: methods
                .iter()
                .map(|(m, _)| (m.clone(), Vec::new()))
                .collect(),
        };
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.with_context(|| format!("{}", path.display()))?;
            let ctx = || format!("{}: row {}", path.display(), line + 1);
            table.t.push(
                cell(&rec, t_col)
                    .with_context(ctx)?
                    .ok_or_else(|| anyhow!("{}: empty t", ctx()))?,
            );
            table.pupil.push(point(&rec, pupil_cols).with_context(ctx)?);
            for ((_, cols), (_, out)) in methods.iter().zip(&mut table.cr) {
                out.push(point(&rec, *cols).with_context(ctx)?);
            }
        }
        Ok(table)
    }

    /// Nominal sampling rate from the first two timestamps.
    pub fn rate(&self) -> anyhow::Result<f64> {
        match self.t.as_slice() {
            [a, b, ..] if b > a => Ok(1.0 / (b - a)),
            _ => bail!("need at least two frames with increasing t"),
        }
    }

    pub fn method(&self, name: &str) -> anyhow::Result<&[Option<Point>]> {
        self.cr
            .iter()
            .find(|(m, _)| m == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| {
                let have: Vec<&str> = self.cr.iter().map(|(m, _)| m.as_str()).collect();
                anyhow!(
                    "no CR column for method '{name}' (have {})",
                    have.join(", ")
                )
            })
    }
}

/// `x,y,onset,offset` rows.
pub fn read_targets(path: &Path) -> anyhow::Result<Vec<FixationTarget>> {
    let mut rd = reader(path)?;
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("{}", path.display()))?;
        let ctx = || format!("{}: row {}", path.display(), line + 1);
        let v: Vec<f64> = (0..4)
            .map(|i| cell(&rec, i)?.ok_or_else(|| anyhow!("empty cell")))
            .collect::<anyhow::Result<_>>()
            .with_context(ctx)?;
        out.push(FixationTarget::new(Point::new(v[0], v[1]), v[2], v[3]).with_context(ctx)?);
    }
    Ok(out)
}

pub fn write_targets(
    out: &mut impl std::io::Write,
    targets: &[FixationTarget],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "onset", "offset"])?;
    for t in targets {
        w.write_record([
            t.position.x.to_string(),
            t.position.y.to_string(),
            format!("{:.6}", t.onset),
            format!("{:.6}", t.offset),
        ])?;
    }
    w.flush()
}
