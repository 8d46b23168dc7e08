//! On-disk formats.
//!
//! Binary shot files (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "NVSHOTS1"
//! version      u32      1
//! n_nvs        u32
//! n_shots      u64
//! seed         u64
//! seq_hash     u64
//! config_hash  32 bytes (SHA-256 of the resolved config)
//! records, n_shots times:
//!   shot_index u64
//!   random_pi  u8       0 = none, 1 = skipped, 2 = applied
//!   per NV:    counts f64, flags u8
//! ```
//!
//! Flag bits: 0 charge bit, 1 true NV⁻, 2 spin prepared, 3 prepared in
//! m_s=±1, 4 spin reset by a neighbor.

use std::io::Write;
use std::path::Path;

use nvsim_core::simulator::{ChargeState, Frame, NvOutcome, ShotRecord, SpinState};
use nvsim_core::statmodels::CountHistogram;

use crate::{sig9, CliError};

pub const SHOTS_MAGIC: &[u8; 8] = b"NVSHOTS1";
pub const SHOTS_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 8 + 8 + 32;

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotsHeader {
    pub n_nvs: u32,
    pub n_shots: u64,
    pub seed: u64,
    pub sequence_hash: u64,
    pub config_hash: [u8; 32],
}

impl ShotsHeader {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(SHOTS_MAGIC);
        out.extend_from_slice(&SHOTS_VERSION.to_le_bytes());
        out.extend_from_slice(&self.n_nvs.to_le_bytes());
        out.extend_from_slice(&self.n_shots.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.sequence_hash.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out
    }
}

fn flags(o: &NvOutcome) -> u8 {
    let mut f = o.charge_bit as u8;
    f |= ((o.true_charge == ChargeState::Nvm) as u8) << 1;
    if let Some(s) = o.spin_prep {
        f |= 1 << 2;
        f |= ((s == SpinState::Ms1) as u8) << 3;
    }
    f | (o.spin_reset as u8) << 4
}

fn outcome(counts: f64, f: u8) -> NvOutcome {
    NvOutcome {
        counts,
        charge_bit: f & 1 != 0,
        true_charge: if f & 2 != 0 { ChargeState::Nvm } else { ChargeState::Nv0 },
        spin_prep: (f & 4 != 0).then_some(if f & 8 != 0 { SpinState::Ms1 } else { SpinState::Ms0 }),
        spin_reset: f & 16 != 0,
    }
}

/// Appends the binary form of `records`.
pub fn encode_shots_binary(records: &[ShotRecord], out: &mut Vec<u8>) {
    for r in records {
        out.extend_from_slice(&r.shot_index.to_le_bytes());
        out.push(match r.random_pi {
            None => 0,
            Some(false) => 1,
            Some(true) => 2,
        });
        for o in &r.nvs {
            out.extend_from_slice(&o.counts.to_le_bytes());
            out.push(flags(o));
        }
    }
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {msg}", path.display()))
}

pub fn is_shots_binary(bytes: &[u8]) -> bool {
    bytes.starts_with(SHOTS_MAGIC)
}

/// Parses a binary shot file. `path` only labels errors.
pub fn decode_shots_binary(bytes: &[u8], path: &Path) -> Result<(ShotsHeader, Vec<ShotRecord>), CliError> {
    if bytes.len() < HEADER_LEN || !is_shots_binary(bytes) {
        return Err(bad(path, "not a binary shot file"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != SHOTS_VERSION {
        return Err(bad(path, format!("unsupported shot file version {version}")));
    }
    let header = ShotsHeader {
        n_nvs: u32_at(12),
        n_shots: u64_at(16),
        seed: u64_at(24),
        sequence_hash: u64_at(32),
        config_hash: bytes[40..72].try_into().unwrap(),
    };
    let n = header.n_nvs as usize;
    let rec_len = 9 + 9 * n;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != header.n_shots * rec_len as u64 {
        return Err(bad(path, format!("expected {} records of {rec_len} bytes, found {} bytes", header.n_shots, body.len())));
    }
    let mut records = Vec::with_capacity(header.n_shots as usize);
    for chunk in body.chunks_exact(rec_len) {
        let random_pi = match chunk[8] {
            0 => None,
            1 => Some(false),
            2 => Some(true),
            v => return Err(bad(path, format!("bad random_pi byte {v}"))),
        };
        let nvs = (0..n)
            .map(|k| {
                let o = 9 + 9 * k;
                outcome(f64::from_le_bytes(chunk[o..o + 8].try_into().unwrap()), chunk[o + 8])
            })
            .collect();
        records.push(ShotRecord {
            shot_index: u64::from_le_bytes(chunk[..8].try_into().unwrap()),
            seed: header.seed,
            sequence_hash: header.sequence_hash,
            random_pi,
            nvs,
        });
    }
    Ok((header, records))
}

pub fn shots_csv_header(n_nvs: usize, seed: u64, config_hash: &str) -> String {
    let mut s = format!("# seed={seed} config_hash={config_hash}\nshot_index,random_pi");
    for i in 0..n_nvs {
        s.push_str(&format!(",nv{i}_counts,nv{i}_flags"));
    }
    s.push('\n');
    s
}

/// Appends CSV rows. Counts use the shortest exact decimal form, flags
/// the bit layout of the binary format.
pub fn encode_shots_csv(records: &[ShotRecord], out: &mut Vec<u8>) {
    for r in records {
        let pi = match r.random_pi {
            None => "",
            Some(false) => "0",
            Some(true) => "1",
        };
        let _ = write!(out, "{},{pi}", r.shot_index);
        for o in &r.nvs {
            let _ = write!(out, ",{},{}", o.counts, flags(o));
        }
        out.push(b'\n');
    }
}

pub fn decode_shots_csv(text: &str, path: &Path) -> Result<(u64, Vec<ShotRecord>), CliError> {
    let mut seed = 0;
    let mut records = Vec::new();
    let mut n_cols = None;
    for (ln, line) in text.lines().enumerate() {
        let err = |m: &str| bad(path, format!("line {}: {m}", ln + 1));
        if let Some(c) = line.strip_prefix('#') {
            for kv in c.split_whitespace() {
                if let Some(v) = kv.strip_prefix("seed=") {
                    seed = v.parse().map_err(|_| err("bad seed"))?;
                }
            }
            continue;
        }
        if line.starts_with("shot_index") {
            n_cols = Some(line.split(',').count());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if Some(cols.len()) != n_cols || !cols.len().is_multiple_of(2) {
            return Err(err("column count differs from the header"));
        }
        let random_pi = match cols[1] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            _ => return Err(err("bad random_pi")),
        };
        let mut nvs = Vec::with_capacity(cols.len() / 2 - 1);
        for pair in cols[2..].chunks_exact(2) {
            let c: f64 = pair[0].parse().map_err(|_| err("bad counts"))?;
            let f: u8 = pair[1].parse().map_err(|_| err("bad flags"))?;
            nvs.push(outcome(c, f));
        }
        records.push(ShotRecord {
            shot_index: cols[0].parse().map_err(|_| err("bad shot index"))?,
            seed,
            sequence_hash: 0,
            random_pi,
            nvs,
        });
    }
    if n_cols.is_none() {
        return Err(bad(path, "missing CSV header"));
    }
    Ok((seed, records))
}

/// Two columns `bin_center count`, separated by whitespace, comma or tab.
/// Lines starting with `#` are comments.
pub fn parse_columns(text: &str, path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
        match row {
            Ok(r) => rows.push(r),
            // a header line
            Err(_) if rows.is_empty() => continue,
            Err(_) => return Err(bad(path, format!("line {}: not numeric", ln + 1))),
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(i) = rows.iter().position(|r| r.len() != w) {
            return Err(bad(path, format!("row {} has {} columns, expected {w}", i + 1, rows[i].len())));
        }
    }
    Ok(rows)
}

pub fn histogram_from_rows(rows: &[Vec<f64>], path: &Path) -> Result<CountHistogram, CliError> {
    let centers: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let counts: Result<Vec<u64>, _> = rows
        .iter()
        .map(|r| if r[1] >= 0.0 && r[1].fract() == 0.0 { Ok(r[1] as u64) } else { Err(bad(path, "counts must be non-negative integers")) })
        .collect();
    CountHistogram::from_centers(&centers, counts?).map_err(|e| bad(path, e))
}

pub fn encode_histogram(h: &CountHistogram) -> String {
    let mut s = String::from("# bin_center\tcount\n");
    for (c, n) in h.centers().iter().zip(h.bin_counts()) {
        s.push_str(&format!("{}\t{n}\n", sig9(*c)));
    }
    s
}

/// Tab-separated table with a header row.
pub fn encode_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join("\t");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| sig9(v)).collect();
        s.push_str(&cells.join("\t"));
        s.push('\n');
    }
    s
}

/// Square matrix, tab-separated, with NV labels.
pub fn encode_matrix(labels: &[usize], values: &[f64]) -> String {
    let n = labels.len();
    let mut s = String::from("nv");
    for l in labels {
        s.push_str(&format!("\t{l}"));
    }
    s.push('\n');
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&l.to_string());
        for j in 0..n {
            s.push('\t');
            s.push_str(&sig9(values[i * n + j]));
        }
        s.push('\n');
    }
    s
}

/// Binary 16-bit PGM. ADU values are rounded and clamped to `0..=65535`.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes();
    out.reserve(frame.pixels.len() * 2);
    for &p in &frame.pixels {
        out.extend_from_slice(&(p.round().clamp(0.0, 65535.0) as u16).to_be_bytes());
    }
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Frame, CliError> {
    // header: magic, width, height, maxval, separated by whitespace,
    // with optional comments
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad(path, "truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad(path, "bad PGM header"))?.to_string());
    }
    i += 1;
    if fields[0] != "P5" {
        return Err(bad(path, "not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(path, "bad PGM header"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max == 0 || max > 65535 {
        return Err(bad(path, "bad PGM maxval"));
    }
    let bpp = if max > 255 { 2 } else { 1 };
    let data = bytes.get(i..).unwrap_or(&[]);
    if data.len() != w * h * bpp {
        return Err(bad(path, format!("PGM body has {} bytes, expected {}", data.len(), w * h * bpp)));
    }
    let pixels = if bpp == 2 {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        data.iter().map(|&b| b as f64).collect()
    };
    Ok(Frame { width: w, height: h, pixels })
}
