//! Line-delimited JSON: one header object, then one record per line.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fields common to every file header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormatTag {
    pub format: String,
    pub version: u32,
}

pub fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::other)?;
    w.write_all(b"\n")
}

/// Parses a header of type `H` followed by records of type `R`. Blank lines
/// are skipped. A completely empty input yields `Ok(None)`.
pub fn read<H, R, B>(reader: B, label: &str, format: &str) -> Result<Option<(H, Vec<R>)>>
where
    H: DeserializeOwned,
    R: DeserializeOwned,
    B: BufRead,
{
    let mut header: Option<H> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: label.to_string(),
            line: i + 1,
            reason: e.to_string(),
        };
        if header.is_none() {
            let tag: FormatTag = serde_json::from_str(&line).map_err(parse_err)?;
            if tag.format != format || tag.version != 1 {
                return Err(Error::Parse {
                    path: label.to_string(),
                    line: i + 1,
                    reason: format!(
                        "expected {format} version 1, found {} version {}",
                        tag.format, tag.version
                    ),
                });
            }
            header = Some(serde_json::from_str(&line).map_err(parse_err)?);
        } else {
            records.push(serde_json::from_str(&line).map_err(parse_err)?);
        }
    }
    Ok(header.map(|h| (h, records)))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}
