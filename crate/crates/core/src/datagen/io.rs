//! Plain-text dataset export.
//!
//! `advertisers.csv`:
//!
//! ```text
//! advertiser_id,tcpa
//! 0,1.3862943611198906e0
//! ```
//!
//! `instances.csv`, one row per query. `slot_ctrs` is a `;`-separated list,
//! `candidates` a `;`-separated list of `advertiser_id:value:cost:reserve`:
//!
//! ```text
//! query_id,leaf_id,slot_ctrs,candidates
//! 0,17,1.0000000000000000e0;5.1200000000000001e-1,3:1.25e0:1.1e-1:0e0;0:...
//! ```
//!
//! Reals are written with 17 significant digits, so reading a file back
//! reproduces every value bit for bit.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Advertiser, AuctionInstance, Candidate};

pub const ADVERTISERS_HEADER: &str = "advertiser_id,tcpa";
pub const INSTANCES_HEADER: &str = "query_id,leaf_id,slot_ctrs,candidates";

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_advertisers<W: Write>(mut w: W, advertisers: &[Advertiser]) -> std::io::Result<()> {
    writeln!(w, "{ADVERTISERS_HEADER}")?;
    for a in advertisers {
        writeln!(w, "{},{}", a.id, format_f64(a.tcpa))?;
    }
    Ok(())
}

pub fn write_instances<W: Write>(mut w: W, instances: &[AuctionInstance]) -> std::io::Result<()> {
    writeln!(w, "{INSTANCES_HEADER}")?;
    for inst in instances {
        let ctrs: Vec<String> = inst.slot_ctrs.iter().map(|&b| format_f64(b)).collect();
        let cands: Vec<String> = inst
            .candidates
            .iter()
            .map(|c| format!("{}:{}:{}:{}", c.advertiser, format_f64(c.value), format_f64(c.cost), format_f64(c.reserve)))
            .collect();
        writeln!(w, "{},{},{},{}", inst.query_id, inst.leaf_id, ctrs.join(";"), cands.join(";"))?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, DatasetIoError> {
    s.parse().map_err(|_| DatasetIoError::Parse { line, msg: format!("bad {what}: {s:?}") })
}

fn lines_after_header<R: BufRead>(r: R, header: &str) -> Result<Vec<(usize, String)>, DatasetIoError> {
    let mut out = Vec::new();
    let mut lines = r.lines();
    let first = lines.next().transpose()?;
    if first.as_deref().map(str::trim_end) != Some(header) {
        return Err(DatasetIoError::Parse { line: 1, msg: format!("expected header {header:?}") });
    }
    for (i, l) in lines.enumerate() {
        let l = l?;
        if !l.trim().is_empty() {
            out.push((i + 2, l));
        }
    }
    Ok(out)
}

/// Reads `advertisers.csv`. Features are not exported, so they come back empty.
pub fn read_advertisers<R: BufRead>(r: R) -> Result<Vec<Advertiser>, DatasetIoError> {
    lines_after_header(r, ADVERTISERS_HEADER)?
        .into_iter()
        .map(|(n, l)| {
            let (id, tcpa) = l.split_once(',').ok_or(DatasetIoError::Parse { line: n, msg: "expected 2 fields".into() })?;
            let tcpa: f64 = parse(tcpa, n, "tcpa")?;
            Ok(Advertiser { id: parse(id, n, "advertiser id")?, feature: Vec::new(), roi_target: 1.0 / tcpa, tcpa })
        })
        .collect()
}

pub fn read_instances<R: BufRead>(r: R) -> Result<Vec<AuctionInstance>, DatasetIoError> {
    lines_after_header(r, INSTANCES_HEADER)?
        .into_iter()
        .map(|(n, l)| {
            let fields: Vec<&str> = l.splitn(4, ',').collect();
            if fields.len() != 4 {
                return Err(DatasetIoError::Parse { line: n, msg: "expected 4 fields".into() });
            }
            let slot_ctrs = fields[2]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| parse(s, n, "slot ctr"))
                .collect::<Result<Vec<f64>, _>>()?;
            let candidates = fields[3]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|c| {
                    let p: Vec<&str> = c.split(':').collect();
                    if p.len() != 4 {
                        return Err(DatasetIoError::Parse { line: n, msg: format!("bad candidate {c:?}") });
                    }
                    Ok(Candidate {
                        advertiser: parse(p[0], n, "advertiser id")?,
                        value: parse(p[1], n, "value")?,
                        cost: parse(p[2], n, "cost")?,
                        reserve: parse(p[3], n, "reserve")?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AuctionInstance {
                query_id: parse(fields[0], n, "query id")?,
                leaf_id: parse(fields[1], n, "leaf id")?,
                candidates,
                slot_ctrs,
            })
        })
        .collect()
}
