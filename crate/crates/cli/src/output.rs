//! CSV and JSON writers. Floats are written in their shortest round-trip
//! form.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nnreach::{Interval, IntervalBox};
use serde::Serialize;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn interval_fields(iv: &Interval) -> [String; 2] {
    [num(iv.lo()), num(iv.hi())]
}

pub fn box_fields(b: &IntervalBox) -> Vec<String> {
    b.dims().iter().flat_map(interval_fields).collect()
}

/// `lo_1,hi_1,...` for anonymous dimensions.
pub fn indexed_bounds_header(n: usize) -> Vec<String> {
    (1..=n).flat_map(|i| [format!("lo_{i}"), format!("hi_{i}")]).collect()
}

/// `name_lo,name_hi,...` for named dimensions.
pub fn named_bounds_header<'a>(names: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    names
        .into_iter()
        .flat_map(|n| [format!("{n}_lo"), format!("{n}_hi")])
        .collect()
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv<I>(&self, name: &str, header: &[String], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
