//! JSONL and CSV bid files. Both use the columns
//! `slot, builder_id, received_at_ms, eligible_at_ms, value_eth`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::bids::BidRecord;
use crate::error::{Error, Result};

pub fn write_bids_jsonl(path: &Path, bids: &[BidRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for bid in bids {
        serde_json::to_writer(&mut out, bid)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads one bid per non-blank line, validating each record.
pub fn read_bids_jsonl(path: &Path) -> Result<Vec<BidRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bids = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bid: BidRecord = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        bid.validate()?;
        bids.push(bid);
    }
    Ok(bids)
}

pub fn write_bids_csv(path: &Path, bids: &[BidRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for bid in bids {
        w.serialize(bid)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_bids_csv(path: &Path) -> Result<Vec<BidRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut bids = Vec::new();
    for row in r.deserialize() {
        let bid: BidRecord = row?;
        bid.validate()?;
        bids.push(bid);
    }
    Ok(bids)
}

/// Picks the reader from the file extension (`.csv`, otherwise JSONL).
pub fn read_bids(path: &Path) -> Result<Vec<BidRecord>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_bids_csv(path),
        _ => read_bids_jsonl(path),
    }
}
