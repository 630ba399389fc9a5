//! Plain-text model files.
//!
//! ```text
//! pve-model 1
//! n_states 104
//! n_actions 4
//! rank full
//! discount 0.99
//! <rewards and transitions in vectorize_model order, one per line>
//! ```
//!
//! Values are printed with 17 significant digits so files round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use pve_core::analysis::{devectorize_model, vectorize_model};
use pve_core::TabularMdp;

use crate::error::{LabError, LabResult};

pub const MAGIC: &str = "pve-model 1";

pub fn render_model(model: &TabularMdp, rank: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n_states {}", model.n_states());
    let _ = writeln!(out, "n_actions {}", model.n_actions());
    let _ = writeln!(out, "rank {rank}");
    let _ = writeln!(out, "discount {:.16e}", model.discount());
    for x in vectorize_model(model).iter() {
        let _ = writeln!(out, "{x:.16e}");
    }
    out
}

pub fn write_model(path: &Path, model: &TabularMdp, rank: &str) -> LabResult<()> {
    std::fs::write(path, render_model(model, rank))?;
    Ok(())
}

fn header<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> LabResult<&'a str> {
    let line = lines
        .next()
        .ok_or_else(|| LabError::ModelFile(format!("missing {key} line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .map(str::trim)
        .ok_or_else(|| LabError::ModelFile(format!("expected {key}, found {line:?}")))
}

pub fn parse_model(text: &str) -> LabResult<TabularMdp> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(LabError::ModelFile(format!("missing {MAGIC:?} header")));
    }
    let bad = |what: &str| LabError::ModelFile(format!("bad {what}"));
    let ns: usize = header(&mut lines, "n_states")?.parse().map_err(|_| bad("n_states"))?;
    let na: usize = header(&mut lines, "n_actions")?.parse().map_err(|_| bad("n_actions"))?;
    header(&mut lines, "rank")?;
    let discount: f64 = header(&mut lines, "discount")?.parse().map_err(|_| bad("discount"))?;
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|_| bad("value")))
        .collect::<LabResult<Vec<_>>>()?;
    Ok(devectorize_model(&values, ns, na, discount)?)
}

pub fn read_model(path: &Path) -> LabResult<TabularMdp> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::ModelFile(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text)
}
