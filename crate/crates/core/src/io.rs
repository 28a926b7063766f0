//! File formats: smile CSV with a JSON sidecar, model spec JSON, and the
//! binary path panel with its JSON descriptor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{PathSet, SvModelSpec};
use crate::smile::{MarketSmile, Quote, SmileError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("smile csv header must be `strike,implied_vol`, found `{0}`")]
    Header(String),
    #[error("smile csv line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("path panel: {0}")]
    Panel(&'static str),
    #[error("panel does not match its descriptor: {0}")]
    Descriptor(&'static str),
    #[error(transparent)]
    Smile(#[from] SmileError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Sidecar metadata for a smile CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileMeta {
    pub spot: f64,
    pub t: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
}

fn finite_non_negative(line: u64, name: &str, raw: &str) -> Result<f64, IoError> {
    let v: f64 = raw.trim().parse().map_err(|_| IoError::Row {
        line,
        reason: format!("{name} `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IoError::Row {
            line,
            reason: format!("{name} is not finite"),
        });
    }
    if v < 0.0 {
        return Err(IoError::Row {
            line,
            reason: format!("{name} is negative"),
        });
    }
    Ok(v)
}

/// Strict parse: the header is required and every row has exactly two
/// finite non-negative fields. Errors report 1-based file lines.
pub fn parse_smile_csv(text: &str) -> Result<Vec<Quote>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(IoError::Header(String::new())),
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != ["strike", "implied_vol"] {
        return Err(IoError::Header(names.join(",")));
    }
    let mut quotes = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(IoError::Row {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let strike = finite_non_negative(line, "strike", &record[0])?;
        let vol = finite_non_negative(line, "implied_vol", &record[1])?;
        quotes.push(Quote::new(strike, vol));
    }
    Ok(quotes)
}

pub fn parse_meta_json(text: &str) -> Result<SmileMeta, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_smile(csv_text: &str, meta_text: &str) -> Result<MarketSmile, IoError> {
    let quotes = parse_smile_csv(csv_text)?;
    let meta = parse_meta_json(meta_text)?;
    Ok(MarketSmile::new(meta.spot, meta.t, meta.expiry, quotes)?)
}

pub fn smile_csv(smile: &MarketSmile) -> String {
    let mut out = String::from("strike,implied_vol\n");
    for q in smile.quotes() {
        out.push_str(&format!("{:?},{:?}\n", q.strike, q.implied_vol));
    }
    out
}

pub fn smile_meta(smile: &MarketSmile) -> SmileMeta {
    SmileMeta {
        spot: smile.spot(),
        t: smile.t(),
        expiry: smile.expiry(),
    }
}

pub fn parse_model_spec(text: &str) -> Result<SvModelSpec, IoError> {
    let spec: SvModelSpec = serde_json::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

const MAGIC: &[u8; 8] = b"ZVPATHS1";

/// JSON companion of a binary panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelDescriptor {
    pub spec: SvModelSpec,
    pub t: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
    pub steps_per_year: usize,
    pub seed: u64,
    pub n_paths: usize,
    pub time_grid: Vec<f64>,
    pub has_sigma: bool,
}

/// Raw arrays of a decoded panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPanel {
    pub time_grid: Vec<f64>,
    pub integrated_var: Vec<f64>,
    pub left_var: Vec<f64>,
    pub mixing_m: Vec<f64>,
    pub mixing_vol: Vec<f64>,
    pub terminal_sigma: Vec<f64>,
    pub sigma_paths: Option<Vec<Vec<f64>>>,
}

/// Little-endian layout: magic, `n_paths: u64`, `n_times: u64`,
/// `has_sigma: u8`, time grid, five per-path series, then the optional
/// path-major σ panel.
pub fn encode_panel(set: &PathSet) -> Vec<u8> {
    let n = set.n_paths();
    let m = set.time_grid.len();
    let sigma_len = set.sigma_paths.as_ref().map_or(0, |_| n * m);
    let mut out = Vec::with_capacity(25 + 8 * (m + 5 * n + sigma_len));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.push(set.sigma_paths.is_some() as u8);
    let series = [
        &set.time_grid,
        &set.integrated_var,
        &set.left_var,
        &set.mixing_m,
        &set.mixing_vol,
        &set.terminal_sigma,
    ];
    for s in series {
        for v in s.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(paths) = &set.sigma_paths {
        for p in paths {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn descriptor(set: &PathSet) -> PanelDescriptor {
    PanelDescriptor {
        spec: set.spec,
        t: set.t,
        expiry: set.expiry,
        steps_per_year: set.steps_per_year,
        seed: set.seed,
        n_paths: set.n_paths(),
        time_grid: set.time_grid.clone(),
        has_sigma: set.sigma_paths.is_some(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.bytes.len() < n {
            return Err(IoError::Panel("truncated"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        let bytes = self.take(n.checked_mul(8).ok_or(IoError::Panel("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_panel(bytes: &[u8]) -> Result<PathPanel, IoError> {
    let mut cur = Cursor { bytes };
    if cur.take(8)? != MAGIC {
        return Err(IoError::Panel("bad magic"));
    }
    let n = usize::try_from(cur.u64()?).map_err(|_| IoError::Panel("path count too large"))?;
    let m = usize::try_from(cur.u64()?).map_err(|_| IoError::Panel("grid too large"))?;
    let has_sigma = match cur.take(1)?[0] {
        0 => false,
        1 => true,
        _ => return Err(IoError::Panel("bad sigma flag")),
    };
    if n == 0 || m < 2 {
        return Err(IoError::Panel("empty panel"));
    }
    // size check before any allocation
    let body = n
        .checked_mul(5)
        .and_then(|x| x.checked_add(m))
        .and_then(|x| {
            if has_sigma {
                n.checked_mul(m).and_then(|y| x.checked_add(y))
            } else {
                Some(x)
            }
        })
        .and_then(|x| x.checked_mul(8))
        .ok_or(IoError::Panel("length overflow"))?;
    if cur.bytes.len() != body {
        return Err(IoError::Panel("length does not match header"));
    }
    let time_grid = cur.f64s(m)?;
    if !time_grid.iter().all(|t| t.is_finite()) || !time_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(IoError::Panel("time grid must be finite and increasing"));
    }
    let integrated_var = cur.f64s(n)?;
    let left_var = cur.f64s(n)?;
    let mixing_m = cur.f64s(n)?;
    let mixing_vol = cur.f64s(n)?;
    let terminal_sigma = cur.f64s(n)?;
    let nonneg = |xs: &[f64]| xs.iter().all(|x| x.is_finite() && *x >= 0.0);
    if !nonneg(&integrated_var) || !nonneg(&left_var) || !nonneg(&mixing_vol) || !nonneg(&terminal_sigma)
    {
        return Err(IoError::Panel("negative or non-finite path statistic"));
    }
    if !mixing_m.iter().all(|x| x.is_finite() && *x > 0.0) {
        return Err(IoError::Panel("mixing weight must be positive"));
    }
    let sigma_paths = if has_sigma {
        let flat = cur.f64s(n * m)?;
        Some(flat.chunks_exact(m).map(<[f64]>::to_vec).collect())
    } else {
        None
    };
    Ok(PathPanel {
        time_grid,
        integrated_var,
        left_var,
        mixing_m,
        mixing_vol,
        terminal_sigma,
        sigma_paths,
    })
}

pub fn assemble(desc: &PanelDescriptor, panel: PathPanel) -> Result<PathSet, IoError> {
    desc.spec.validate()?;
    if desc.n_paths != panel.integrated_var.len() {
        return Err(IoError::Descriptor("path count"));
    }
    if desc.time_grid != panel.time_grid {
        return Err(IoError::Descriptor("time grid"));
    }
    if desc.has_sigma != panel.sigma_paths.is_some() {
        return Err(IoError::Descriptor("sigma flag"));
    }
    if desc.time_grid[0] != desc.t || *desc.time_grid.last().unwrap() != desc.expiry {
        return Err(IoError::Descriptor("grid end points"));
    }
    Ok(PathSet {
        spec: desc.spec,
        t: desc.t,
        expiry: desc.expiry,
        steps_per_year: desc.steps_per_year,
        seed: desc.seed,
        time_grid: panel.time_grid,
        sigma_paths: panel.sigma_paths,
        integrated_var: panel.integrated_var,
        left_var: panel.left_var,
        mixing_m: panel.mixing_m,
        mixing_vol: panel.mixing_vol,
        terminal_sigma: panel.terminal_sigma,
    })
}
