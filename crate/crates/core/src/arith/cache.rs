//! On-disk factorization cache.
//!
//! One entry per line:
//!
//! ```text
//! 9348=2^2*3*19*41 complete
//! 1=1 complete
//! 221360932801524804324=2^2*3*18446744400127067027 incomplete
//! ```
//!
//! For an `incomplete` entry the last `*`-separated term is the unfactored
//! cofactor. Lines starting with `#` and blank lines are ignored. Loading
//! re-validates every entry; saving merges with whatever is on disk, with
//! the in-memory entry winning.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_traits::One;

use super::{factorize, FactorBudget, FactoredInteger};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct FactorCache {
    entries: BTreeMap<BigUint, FactoredInteger>,
}

fn parse_line(line: &str, lineno: usize) -> Result<FactoredInteger> {
    let bad = |reason: &str| Error::CacheFormat {
        line: lineno,
        reason: reason.to_string(),
    };
    let (body, marker) = line.trim().rsplit_once(char::is_whitespace).ok_or_else(|| bad("missing marker"))?;
    let complete = match marker {
        "complete" => true,
        "incomplete" => false,
        _ => return Err(bad("marker must be `complete` or `incomplete`")),
    };
    let (value, rhs) = body.trim().split_once('=').ok_or_else(|| bad("missing `=`"))?;
    let value: BigUint = value.trim().parse().map_err(|_| bad("value is not an integer"))?;
    let mut terms: Vec<&str> = rhs.trim().split('*').collect();
    let cofactor = if complete {
        BigUint::one()
    } else {
        let last = terms.pop().ok_or_else(|| bad("incomplete entry needs a cofactor"))?;
        last.parse().map_err(|_| bad("cofactor is not an integer"))?
    };
    let mut factors = Vec::new();
    for term in terms {
        if term == "1" {
            continue;
        }
        let (p, e) = match term.split_once('^') {
            Some((p, e)) => (p, e.parse::<u32>().map_err(|_| bad("bad exponent"))?),
            None => (term, 1),
        };
        factors.push((p.parse().map_err(|_| bad("bad prime"))?, e));
    }
    let f = FactoredInteger::from_parts(value, factors, cofactor).map_err(|e| bad(&e.to_string()))?;
    if f.complete != complete {
        return Err(bad("marker disagrees with cofactor"));
    }
    Ok(f)
}

fn format_line(f: &FactoredInteger) -> String {
    format!(
        "{}={} {}",
        f.value,
        f.factor_string(),
        if f.complete { "complete" } else { "incomplete" }
    )
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cache = FactorCache::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            cache.insert(parse_line(trimmed, i + 1)?);
        }
        Ok(cache)
    }

    /// Loads a cache file; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in self.entries.values() {
            out.push_str(&format_line(f));
            out.push('\n');
        }
        out
    }

    /// Read-merge-write: entries on disk are kept unless this cache holds
    /// the same value, in which case ours replaces theirs.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut merged = Self::load(path)?;
        for f in self.entries.values() {
            merged.entries.insert(f.value.clone(), f.clone());
        }
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let tmp = dir.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("factor-cache"),
            std::process::id()
        ));
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(merged.render().as_bytes())?;
            file.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// A complete entry is never replaced by an incomplete one.
    pub fn insert(&mut self, f: FactoredInteger) {
        match self.entries.get(&f.value) {
            Some(existing) if existing.complete && !f.complete => {}
            _ => {
                self.entries.insert(f.value.clone(), f);
            }
        }
    }

    pub fn get(&self, n: &BigUint) -> Option<&FactoredInteger> {
        self.entries.get(n)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cached complete result, or a fresh factorization recorded here.
    pub fn factorize(&mut self, n: &BigUint, budget: &FactorBudget) -> Result<FactoredInteger> {
        if let Some(f) = self.entries.get(n).filter(|f| f.complete) {
            return Ok(f.clone());
        }
        let f = factorize(n, budget)?;
        self.insert(f.clone());
        Ok(f)
    }
}
