//! File formats: CSV exports, the binary grid format, JSON sidecars, event
//! ingestion and the on-disk eigenfunction table cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gqs::{EigenGridSpec, EigenTable};
use crate::grid::{Grid2, UniformGrid};
use crate::inference::Histogram;
use crate::sampling::Event;
use crate::special::AiryZeroTable;

pub const GRID_MAGIC: &[u8; 8] = b"GQSGRID1";
pub const GRID_VERSION: u32 = 1;
pub const TABLE_MAGIC: &[u8; 8] = b"GQSEIGN1";
pub const TABLE_VERSION: u32 = 1;

/// Fails if `path` exists and `force` is off; creates the parent directory.
pub fn prepare_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Long-format CSV: one `row,col,value` line per grid node.
pub fn write_grid_csv(path: &Path, grid: &Grid2, header: [&str; 3]) -> Result<()> {
    let mut out = String::with_capacity(grid.values.len() * 40);
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, x) in grid.rows.points().enumerate() {
        for (c, y) in grid.cols.points().enumerate() {
            out.push_str(&format!("{x:.10e},{y:.10e},{:.10e}\n", grid.get(r, c)));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// `GQSGRID1`, version, dims, axis bounds, then row-major values; all
/// little-endian.
pub fn encode_grid(grid: &Grid2) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 8 * grid.values.len());
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&GRID_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.rows.len as u64).to_le_bytes());
    buf.extend_from_slice(&(grid.cols.len as u64).to_le_bytes());
    for v in [grid.rows.start, grid.rows.end(), grid.cols.start, grid.cols.end()] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            path: self.path.to_path_buf(),
            reason: format!("truncated at byte {}", self.at),
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn bad(&self, reason: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<Grid2> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(8)? != GRID_MAGIC {
        return Err(r.bad("not a GQSGRID1 file"));
    }
    let version = r.u32()?;
    if version != GRID_VERSION {
        return Err(r.bad(&format!("unsupported grid version {version}")));
    }
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let (r0, r1, c0, c1) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let values = r.f64s(rows.checked_mul(cols).ok_or_else(|| r.bad("dimension overflow"))?)?;
    if r.at != bytes.len() {
        return Err(r.bad("trailing bytes"));
    }
    Ok(Grid2 {
        rows: UniformGrid::new(r0, r1, rows)?,
        cols: UniformGrid::new(c0, c1, cols)?,
        values,
    })
}

pub fn write_grid_binary(path: &Path, grid: &Grid2) -> Result<()> {
    write_atomic(path, &encode_grid(grid))
}

pub fn read_grid_binary(path: &Path) -> Result<Grid2> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes, path)
}

pub fn write_events_csv(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(events.len() * 48));
    for e in events {
        w.serialize(e).map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            reason: err.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|err| Error::Parse {
        path: path.to_path_buf(),
        reason: err.to_string(),
    })?;
    write_atomic(path, &bytes)
}

/// Writes `lower,upper,count` rows, one per bin.
pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut text = String::from("lower,upper,count\n");
    for (w, c) in h.edges.windows(2).zip(&h.counts) {
        text.push_str(&format!("{:e},{:e},{c}\n", w[0], w[1]));
    }
    write_atomic(path, text.as_bytes())
}

/// Reads `X_m,T_s` rows. Rejects non-finite values and `X` at or before the
/// mirror end (`X ≤ d`) with the offending line number.
pub fn read_events_csv(path: &Path, mirror_length: f64) -> Result<Vec<Event>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(file, path, mirror_length)
}

pub fn parse_events<R: std::io::Read>(input: R, path: &Path, mirror_length: f64) -> Result<Vec<Event>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut events = Vec::new();
    for (i, rec) in rdr.deserialize::<Event>().enumerate() {
        let line = i + 2;
        let e = rec.map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            reason: format!("line {line}: {err}"),
        })?;
        if !e.x.is_finite() || !e.t.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                reason: format!("line {line}: non-finite value"),
            });
        }
        if e.x <= mirror_length {
            return Err(Error::Domain(format!(
                "{} line {line}: X = {} m is not beyond the mirror end d = {mirror_length} m",
                path.display(),
                e.x
            )));
        }
        events.push(e);
    }
    Ok(events)
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    spec: EigenGridSpec,
    zeros: AiryZeroTable,
    kappa_start: f64,
    kappa_step: f64,
    n_kappa: usize,
    full_norms: Vec<f64>,
}

/// Magic, version, JSON header length and header, complex values, then a
/// SHA-256 of everything before it.
pub fn encode_table(table: &EigenTable) -> Vec<u8> {
    let header = serde_json::to_vec(&TableHeader {
        spec: table.spec,
        zeros: table.zeros.clone(),
        kappa_start: table.kappa_start,
        kappa_step: table.kappa_step,
        n_kappa: table.n_kappa,
        full_norms: table.full_norms.clone(),
    })
    .expect("header serializes");
    let mut buf = Vec::with_capacity(32 + header.len() + 16 * table.values.len());
    buf.extend_from_slice(TABLE_MAGIC);
    buf.extend_from_slice(&TABLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in &table.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_table(bytes: &[u8], path: &Path) -> Result<EigenTable> {
    let mut r = Reader { bytes, at: 0, path };
    if bytes.len() < 32 {
        return Err(r.bad("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(r.bad("checksum mismatch"));
    }
    r.bytes = body;
    if r.take(8)? != TABLE_MAGIC {
        return Err(r.bad("not a GQSEIGN1 file"));
    }
    let version = r.u32()?;
    if version != TABLE_VERSION {
        return Err(r.bad(&format!("unsupported table version {version}")));
    }
    let len = r.u64()? as usize;
    let h: TableHeader = serde_json::from_slice(r.take(len)?).map_err(|e| r.bad(&e.to_string()))?;
    let n_states = h.zeros.len();
    let raw = r.f64s(2 * n_states * h.n_kappa)?;
    if r.at != body.len() || h.full_norms.len() != n_states {
        return Err(r.bad("inconsistent dimensions"));
    }
    Ok(EigenTable {
        spec: h.spec,
        zeros: h.zeros,
        kappa_start: h.kappa_start,
        kappa_step: h.kappa_step,
        n_kappa: h.n_kappa,
        values: raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        full_norms: h.full_norms,
        bounds: Default::default(),
    })
}

/// Cached table for `(n_states, spec)` under `dir`, built and stored when
/// missing. A corrupted or mismatched cache file is rebuilt with a warning.
pub fn cached_table(dir: &Path, key: &str, n_states: usize, spec: EigenGridSpec) -> Result<EigenTable> {
    let path = dir.join(format!("eigen-{key}.bin"));
    if path.exists() {
        match fs::read(&path).map_err(|e| Error::io(&path, e)).and_then(|b| decode_table(&b, &path)) {
            Ok(t) if t.n_states() == n_states && t.spec == spec => {
                log::debug!("loaded eigenfunction table {}", path.display());
                return Ok(t);
            }
            Ok(_) => log::warn!("{}: table does not match the configuration; rebuilding", path.display()),
            Err(e) => log::warn!("{e}; rebuilding the eigenfunction table"),
        }
    }
    log::info!("building eigenfunction table ({n_states} states)");
    let table = EigenTable::build(n_states, spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode_table(&table);
    match write_atomic(&path, &bytes) {
        Ok(()) => {}
        Err(e) => log::warn!("could not cache the eigenfunction table: {e}"),
    }
    Ok(table)
}

/// Appends one JSON line and flushes.
pub fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Reads complete JSON lines; a torn final line is dropped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, l) in lines.iter().enumerate() {
        match serde_json::from_str(l) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: dropping incomplete last line", path.display());
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gqs::basis::tests::small_table;

    #[test]
    fn grid_binary_round_trip() {
        let g = Grid2::from_fn(
            UniformGrid::new(0.06, 0.2, 7).unwrap(),
            UniformGrid::new(0.24, 0.26, 5).unwrap(),
            |x, t| x * t + 1.0,
        );
        let back = decode_grid(&encode_grid(&g), Path::new("mem")).unwrap();
        assert_eq!(back.values, g.values);
        assert_eq!(back.rows.len, 7);
        assert!((back.cols.step - g.cols.step).abs() < 1e-18);
        let mut bad = encode_grid(&g);
        bad[0] = b'X';
        assert!(decode_grid(&bad, Path::new("mem")).is_err());
        assert!(decode_grid(&encode_grid(&g)[..50], Path::new("mem")).is_err());
    }

    #[test]
    fn table_round_trip_and_corruption() {
        let t = small_table();
        let bytes = encode_table(&t);
        let back = decode_table(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.values, t.values);
        assert_eq!(back.n_states(), t.n_states());
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        let e = decode_table(&bad, Path::new("mem")).unwrap_err().to_string();
        assert!(e.contains("checksum"), "{e}");
    }

    #[test]
    fn cache_rebuilds_corrupted_file() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_table().spec;
        let a = cached_table(dir.path(), "k", 20, spec).unwrap();
        let path = dir.path().join("eigen-k.bin");
        fs::write(&path, b"garbage").unwrap();
        let b = cached_table(dir.path(), "k", 20, spec).unwrap();
        assert_eq!(a.values, b.values);
        assert!(decode_table(&fs::read(&path).unwrap(), &path).is_ok());
    }

    #[test]
    fn events_csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.csv");
        let ev = vec![Event { x: 0.1, t: 0.26 }, Event { x: 0.123456789, t: 0.251 }];
        write_events_csv(&p, &ev).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("X_m,T_s"));
        assert_eq!(read_events_csv(&p, 0.05).unwrap(), ev);

        let e = parse_events("X_m,T_s\n0.1,0.2\n0.04,0.2\n".as_bytes(), Path::new("in.csv"), 0.05).unwrap_err();
        assert!(matches!(e, Error::Domain(_)) && e.to_string().contains("line 3"), "{e}");
        let e = parse_events("X_m,T_s\n0.1,abc\n".as_bytes(), Path::new("in.csv"), 0.05).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse_events("X_m,T_s\n0.1,NaN\n".as_bytes(), Path::new("in.csv"), 0.05).unwrap_err();
        assert!(e.to_string().contains("non-finite"), "{e}");
    }

    #[test]
    fn jsonl_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("progress.jsonl");
        append_jsonl(&p, &[1, 2]).unwrap();
        append_jsonl(&p, &[3, 4]).unwrap();
        let mut f = fs::OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"[5,").unwrap();
        let v: Vec<[i32; 2]> = read_jsonl(&p).unwrap();
        assert_eq!(v, vec![[1, 2], [3, 4]]);
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.json");
        prepare_output(&p, false).unwrap();
        write_json(&p, &1).unwrap();
        assert!(prepare_output(&p, false).is_err());
        prepare_output(&p, true).unwrap();
    }
}
