//! Exact comparison of two backends' outputs and traces.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Result;

use crate::artifacts::Artifacts;
use crate::config::PipelineConfig;
use crate::run::{read_summary, Backend, OUTPUTS};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diff {
    pub images: usize,
    pub traces: usize,
    /// Human-readable mismatch descriptions, in file order.
    pub mismatches: Vec<String>,
}

impl Diff {
    pub fn is_empty(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn lines(path: &Path) -> Result<Vec<String>> {
    if !path.is_file() {
        anyhow::bail!("{} missing: run `yoso run` for that backend first", path.display());
    }
    Ok(std::fs::read_to_string(path)?.lines().map(str::to_owned).collect())
}

/// Image index of an `outputs.csv` data row.
fn image_of(line: &str) -> Option<usize> {
    line.split(',').next()?.parse().ok()
}

/// Compares `outputs.csv` over the images both runs cover, and every trace
/// file present in both runs.
pub fn compare(cfg: &PipelineConfig, a: Backend, b: Backend) -> Result<Diff> {
    let out = Artifacts::new(cfg)?;
    let (da, db) = (out.run_dir(a.name()), out.run_dir(b.name()));
    let la = lines(&da.join(OUTPUTS))?;
    let lb = lines(&db.join(OUTPUTS))?;
    let mut diff = Diff::default();
    // Only integer runs can match the accelerator exactly.
    if let (Ok(sa), Ok(sb)) = (read_summary(&da), read_summary(&db)) {
        if sa.quantized != sb.quantized {
            let float = if sa.quantized { b } else { a };
            diff.mismatches.push(format!(
                "{} ran on the float network and {} on the integer one; re-run {} with --quantize",
                float.name(),
                if sa.quantized { a.name() } else { b.name() },
                float.name()
            ));
        }
    }
    if la.first() != lb.first() {
        diff.mismatches.push(format!("{OUTPUTS}: headers differ"));
    }
    let last = |l: &[String]| l.last().and_then(|s| image_of(s));
    let common = match (last(&la), last(&lb)) {
        (Some(x), Some(y)) => x.min(y) + 1,
        _ => 0,
    };
    diff.images = common;
    let keep = |l: &&String| image_of(l).is_some_and(|i| i < common);
    let ra: Vec<&String> = la.iter().skip(1).filter(keep).collect();
    let rb: Vec<&String> = lb.iter().skip(1).filter(keep).collect();
    if ra.len() != rb.len() {
        diff.mismatches.push(format!("{OUTPUTS}: {} rows vs {} rows", ra.len(), rb.len()));
    }
    for (x, y) in ra.iter().zip(&rb) {
        if x != y {
            diff.mismatches.push(format!("{OUTPUTS}: {} | {}", x, y));
        }
    }

    let names = |d: &Path| -> Result<BTreeSet<String>> {
        let t = d.join("traces");
        if !t.is_dir() {
            return Ok(BTreeSet::new());
        }
        let mut s = BTreeSet::new();
        for e in std::fs::read_dir(t)? {
            s.insert(e?.file_name().to_string_lossy().into_owned());
        }
        Ok(s)
    };
    let shared: Vec<String> = names(&da)?.intersection(&names(&db)?).cloned().collect();
    diff.traces = shared.len();
    for name in shared {
        let ta = lines(&da.join("traces").join(&name))?;
        let tb = lines(&db.join("traces").join(&name))?;
        let sa: BTreeSet<&String> = ta.iter().skip(1).collect();
        let sb: BTreeSet<&String> = tb.iter().skip(1).collect();
        for only in sa.difference(&sb) {
            diff.mismatches.push(format!("traces/{name}: only in {}: {only}", a.name()));
        }
        for only in sb.difference(&sa) {
            diff.mismatches.push(format!("traces/{name}: only in {}: {only}", b.name()));
        }
    }
    if common == 0 {
        diff.mismatches.push("no images in common".into());
    }
    Ok(diff)
}
