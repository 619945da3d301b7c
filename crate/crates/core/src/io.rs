//! CSV ingestion, synthetic corpora, index snapshots and result tables.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::feature::SpaceMode;
use crate::index::{Entry, Hit, Node, PairHit, RTree, Record};
use crate::series::{Relation, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvLayout {
    /// `id, v1, ..., vn`, one series per row.
    #[default]
    Wide,
    /// `id, t, value` with dense integer `t` from 0.
    Long,
}

impl FromStr for CsvLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(CsvLayout::Wide),
            "long" => Ok(CsvLayout::Long),
            _ => Err(Error::invalid(format!("unknown CSV layout '{s}' (expected wide or long)"))),
        }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, layout: CsvLayout) -> Result<Relation> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, layout)
}

/// Parses series from any reader. A first row whose value cell does not
/// parse as a number is treated as a header.
pub fn read_csv(input: impl Read, layout: CsvLayout) -> Result<Relation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: e.position().map_or(i + 1, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec));
    }
    if let Some((_, first)) = rows.first() {
        let probe = first.get(1).unwrap_or("");
        if probe.parse::<f64>().is_err() {
            rows.remove(0);
        }
    }
    match layout {
        CsvLayout::Wide => assemble_wide(&rows),
        CsvLayout::Long => assemble_long(&rows),
    }
}

fn parse_value(text: &str, row: usize, column: usize) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Parse {
            row,
            column,
            message: format!("value {v} is not finite"),
        }),
        Err(_) => Err(Error::Parse {
            row,
            column,
            message: format!("cannot parse '{text}' as a number"),
        }),
    }
}

fn parse_id(rec: &csv::StringRecord, row: usize) -> Result<String> {
    match rec.get(0) {
        Some(id) if !id.is_empty() => Ok(id.to_string()),
        _ => Err(Error::Parse {
            row,
            column: 1,
            message: "missing series id".into(),
        }),
    }
}

fn assemble_wide(rows: &[(usize, csv::StringRecord)]) -> Result<Relation> {
    let Some((_, first)) = rows.first() else {
        return Ok(Relation::default());
    };
    let expected = first.len() - 1;
    let ragged: Vec<usize> = rows
        .iter()
        .filter(|(_, r)| r.len() - 1 != expected)
        .map(|(line, _)| *line)
        .collect();
    if !ragged.is_empty() {
        return Err(Error::RaggedRows { rows: ragged, expected });
    }
    let mut rel = Relation::default();
    for (line, rec) in rows {
        let id = parse_id(rec, *line)?;
        let values = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, v)| parse_value(v, *line, c + 1))
            .collect::<Result<Vec<_>>>()?;
        rel.push(TimeSeries::new(id, values)?)?;
    }
    Ok(rel)
}

fn assemble_long(rows: &[(usize, csv::StringRecord)]) -> Result<Relation> {
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, Vec<(usize, usize, f64)>> = HashMap::new();
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(Error::Parse {
                row: *line,
                column: rec.len().min(3) + 1,
                message: format!("long format needs 3 fields, found {}", rec.len()),
            });
        }
        let id = parse_id(rec, *line)?;
        let t: usize = rec[1].parse().map_err(|_| Error::Parse {
            row: *line,
            column: 2,
            message: format!("time index '{}' is not a non-negative integer", &rec[1]),
        })?;
        let v = parse_value(&rec[2], *line, 3)?;
        if !cells.contains_key(&id) {
            order.push(id.clone());
        }
        cells.entry(id).or_default().push((*line, t, v));
    }
    let mut series = Vec::with_capacity(order.len());
    for id in order {
        let mut pts = cells.remove(&id).unwrap_or_default();
        pts.sort_by_key(|&(line, t, _)| (t, line));
        for (i, &(line, t, _)) in pts.iter().enumerate() {
            if t != i {
                return Err(Error::Parse {
                    row: line,
                    column: 2,
                    message: format!("series '{id}' time indexes are not dense from 0 (found {t}, expected {i})"),
                });
            }
        }
        series.push(TimeSeries::new(id, pts.iter().map(|p| p.2).collect())?);
    }
    if let Some(n) = series.first().map(TimeSeries::len) {
        let ragged: Vec<usize> = series
            .iter()
            .filter(|s| s.len() != n)
            .filter_map(|s| {
                rows.iter()
                    .find(|(_, r)| r.get(0) == Some(s.id.as_str()))
                    .map(|(l, _)| *l)
            })
            .collect();
        if !ragged.is_empty() {
            return Err(Error::RaggedRows { rows: ragged, expected: n });
        }
    }
    Relation::new(series)
}

/// Writes a relation as wide CSV with a header. Values use Rust's
/// shortest round-trip formatting, so reading the file back is lossless.
pub fn write_wide_csv(rel: &Relation, mut out: impl Write) -> std::io::Result<()> {
    if let Some(n) = rel.series_len() {
        write!(out, "id")?;
        for t in 0..n {
            write!(out, ",v{t}")?;
        }
        writeln!(out)?;
    }
    for s in rel {
        write!(out, "{}", csv_field(&s.id))?;
        for v in s.values.values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\t']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Random walks `x_t = x_{t-1} + z_t` with `z_t ~ U[-4, 4]`.
///
/// The start value is drawn from a normal with mean 59.5 and sd 13.25
/// truncated to `[20, 99]` by rejection (or uniformly on `[20, 99]` with
/// `uniform_start`). All draws come from ChaCha8 seeded with `seed`, so a
/// corpus is reproducible on every platform.
pub fn generate_synthetic(count: usize, length: usize, seed: u64, uniform_start: bool) -> Result<Relation> {
    if count == 0 {
        return Err(Error::invalid("series count must be at least 1"));
    }
    if length < 2 {
        return Err(Error::invalid(format!("series length must be at least 2, got {length}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Normal::new(59.5, 13.25).expect("valid normal parameters");
    let width = (count - 1).to_string().len().max(4);
    let mut series = Vec::with_capacity(count);
    for i in 0..count {
        let mut x = if uniform_start {
            rng.gen_range(20.0..=99.0)
        } else {
            loop {
                let v: f64 = start.sample(&mut rng);
                if (20.0..=99.0).contains(&v) {
                    break v;
                }
            }
        };
        let mut values = Vec::with_capacity(length);
        values.push(x);
        for _ in 1..length {
            x += rng.gen_range(-4.0..=4.0);
            values.push(x);
        }
        series.push(TimeSeries::new(format!("s{i:0width$}"), values)?);
    }
    Ok(Relation::from_unchecked(series))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    Tsv,
}

impl TableFormat {
    fn sep(self) -> char {
        match self {
            TableFormat::Csv => ',',
            TableFormat::Tsv => '\t',
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "tsv" => Ok(TableFormat::Tsv),
            _ => Err(Error::invalid(format!("unknown output format '{s}' (expected csv or tsv)"))),
        }
    }
}

/// `v` with six significant digits in positional notation.
pub fn format_distance(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.6}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// `rank,id,distance` rows, rank starting at 1.
pub fn emit_hits(hits: &[Hit], format: TableFormat, mut out: impl Write) -> std::io::Result<()> {
    let s = format.sep();
    writeln!(out, "rank{s}id{s}distance")?;
    for (i, h) in hits.iter().enumerate() {
        writeln!(out, "{}{s}{}{s}{}", i + 1, cell(&h.id, format), format_distance(h.distance))?;
    }
    Ok(())
}

/// `idA,idB,distance` rows.
pub fn emit_pairs(pairs: &[PairHit], format: TableFormat, mut out: impl Write) -> std::io::Result<()> {
    let s = format.sep();
    writeln!(out, "idA{s}idB{s}distance")?;
    for p in pairs {
        writeln!(
            out,
            "{}{s}{}{s}{}",
            cell(&p.id_a, format),
            cell(&p.id_b, format),
            format_distance(p.distance)
        )?;
    }
    Ok(())
}

fn cell(s: &str, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => csv_field(s),
        TableFormat::Tsv => s.replace(['\t', '\n'], " "),
    }
}

const MAGIC: &[u8; 4] = b"TSRT";
pub const SNAPSHOT_VERSION: u16 = 1;
/// Magic, version and payload length.
const HEADER_LEN: usize = 4 + 2 + 8;

/// Writes `tree` as a snapshot. The file is written next to `path` and
/// renamed into place, so readers never see a half-written snapshot.
pub fn save_index(tree: &RTree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_index(tree)?;
    let tmp = path.with_extension("tsrt-partial");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<RTree> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes)
}

/// Layout: `TSRT`, u16 version, u64 payload length, payload, CRC-32 of the
/// payload. All integers and floats little-endian.
pub fn encode_index(tree: &RTree) -> Result<Vec<u8>> {
    if let Some(name) = &tree.materialized {
        return Err(Error::invalid(format!(
            "index materialized under '{name}' cannot be saved; save the base index instead"
        )));
    }
    let mut p = Vec::new();
    let (tag, k) = match tree.mode {
        SpaceMode::Raw(k) => (0u8, k),
        SpaceMode::NormalForm(k) => (1u8, k),
    };
    p.push(tag);
    put_u32(&mut p, k);
    put_u32(&mut p, tree.capacity);
    put_u32(&mut p, tree.min_fill);
    put_u32(&mut p, tree.series_len.unwrap_or(0));
    put_u32(&mut p, tree.records.len());
    for r in &tree.records {
        put_str(&mut p, &r.id);
        for v in &r.raw {
            p.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_u32(&mut p, tree.skipped.len());
    for s in &tree.skipped {
        put_str(&mut p, s);
    }
    put_u32(&mut p, tree.height);
    put_u32(&mut p, tree.nodes.len());
    let mut stack = vec![tree.root];
    while let Some(id) = stack.pop() {
        let node = &tree.nodes[id];
        put_u32(&mut p, id);
        p.push(node.leaf as u8);
        put_u32(&mut p, node.entries.len());
        for e in &node.entries {
            for v in e.lo.iter().chain(&e.hi) {
                p.extend_from_slice(&v.to_le_bytes());
            }
            if node.leaf {
                put_u32(&mut p, e.child);
            }
        }
        if !node.leaf {
            stack.extend(node.entries.iter().rev().map(|e| e.child));
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + p.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    out.extend_from_slice(&p);
    out.extend_from_slice(&crc32fast::hash(&p).to_le_bytes());
    Ok(out)
}

pub fn decode_index(bytes: &[u8]) -> Result<RTree> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let declared = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let available = (bytes.len() - HEADER_LEN) as u64;
    if available < declared.saturating_add(4) {
        return Err(Error::Truncated(format!(
            "payload declares {declared} bytes plus checksum, file holds {available}"
        )));
    }
    if available > declared + 4 {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after checksum",
            available - declared - 4
        )));
    }
    let end = HEADER_LEN + declared as usize;
    let payload = &bytes[HEADER_LEN..end];
    let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    decode_payload(&mut Cursor { buf: payload, pos: 0 })
}

fn decode_payload(c: &mut Cursor) -> Result<RTree> {
    let mode = match c.u8()? {
        0 => SpaceMode::Raw(c.u32()?),
        1 => SpaceMode::NormalForm(c.u32()?),
        t => return Err(Error::Corrupt(format!("unknown space mode tag {t}"))),
    };
    let capacity = c.u32()?;
    let min_fill = c.u32()?;
    let mut tree = RTree::new(mode, capacity).map_err(|e| Error::Corrupt(e.to_string()))?;
    if min_fill != tree.min_fill {
        return Err(Error::Corrupt(format!(
            "minimum fill {min_fill} does not match capacity {capacity}"
        )));
    }
    let n = c.u32()?;
    let count = c.u32()?;
    let dims = mode.dims();
    for _ in 0..count {
        let id = c.string()?;
        let raw = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let s = TimeSeries::new(id, raw).map_err(|e| Error::Corrupt(e.to_string()))?;
        if tree.ids.contains_key(&s.id) {
            return Err(Error::Corrupt(format!("duplicate id '{}'", s.id)));
        }
        let rec = Record::from_series(&s, mode).map_err(|e| Error::Corrupt(e.to_string()))?;
        tree.ids.insert(rec.id.clone(), tree.records.len());
        tree.records.push(rec);
    }
    tree.series_len = (count > 0).then_some(n);
    let skipped = c.u32()?;
    tree.skipped = (0..skipped).map(|_| c.string()).collect::<Result<_>>()?;
    tree.height = c.u32()?;
    let node_count = c.u32()?;
    if node_count == 0 || node_count > c.buf.len() {
        return Err(Error::Corrupt(format!("implausible node count {node_count}")));
    }
    let mut slots: Vec<Option<Node>> = vec![None; node_count];
    let mut seen = vec![false; tree.records.len()];
    tree.root = decode_node(c, &mut slots, dims, &mut seen, &tree.records)?;
    if c.pos != c.buf.len() {
        return Err(Error::Corrupt("unread bytes at end of payload".into()));
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Corrupt("node table does not cover every record".into()));
    }
    tree.nodes = slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Corrupt("node table has gaps".into()))?;
    let report = tree.audit();
    if !report.is_ok() {
        return Err(Error::Corrupt(format!("structural audit failed: {}", report.violations.join("; "))));
    }
    Ok(tree)
}

/// Reads one node and its subtree in preorder and stores it in its slot;
/// returns the node's id.
fn decode_node(
    c: &mut Cursor,
    slots: &mut [Option<Node>],
    dims: usize,
    seen: &mut [bool],
    records: &[Record],
) -> Result<usize> {
    let id = c.u32()?;
    if id >= slots.len() || slots[id].is_some() {
        return Err(Error::Corrupt(format!("node id {id} is out of range or repeated")));
    }
    let leaf = match c.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Corrupt(format!("bad leaf flag {b}"))),
    };
    let len = c.u32()?;
    slots[id] = Some(Node {
        leaf,
        entries: Vec::new(),
    });
    let mut entries = Vec::with_capacity(len.min(1024));
    for _ in 0..len {
        let lo = (0..dims).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let hi = (0..dims).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let child = if leaf {
            let r = c.u32()?;
            if r >= records.len() || seen[r] {
                return Err(Error::Corrupt(format!("leaf entry refers to record {r} twice or out of range")));
            }
            if records[r].point.dims != lo {
                return Err(Error::Corrupt(format!("stored features of '{}' are stale", records[r].id)));
            }
            seen[r] = true;
            r
        } else {
            usize::MAX
        };
        entries.push(Entry { lo, hi, child });
    }
    // Inner entries are followed by their subtrees, in entry order.
    if !leaf {
        for e in &mut entries {
            e.child = decode_node(c, slots, dims, seen, records)?;
        }
    }
    slots[id].as_mut().expect("slot filled above").entries = entries;
    Ok(id)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("snapshot fields fit in 32 bits");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!("payload ends at byte {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Corrupt("id is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::RangeQuery;
    use crate::samples::{S1, S2};
    use crate::spectral::Signal;
    use crate::transform::{make_moving_average, Transformation};

    fn wide(text: &str) -> Result<Relation> {
        read_csv(text.as_bytes(), CsvLayout::Wide)
    }

    #[test]
    fn stock_pair_from_wide_csv() {
        let mut text = String::from("id");
        for t in 0..15 {
            text += &format!(",v{t}");
        }
        text += "\n";
        for (id, vals) in [("s1", S1), ("s2", S2)] {
            text += id;
            for v in vals {
                text += &format!(",{v}");
            }
            text += "\n";
        }
        let rel = wide(&text).unwrap();
        assert_eq!(rel.len(), 2);
        assert_eq!(rel.series_len(), Some(15));
        assert_eq!(rel.get("s2").unwrap().values.values(), &S2[..]);
        // Headerless works too.
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(wide(&body).unwrap(), rel);
    }

    #[test]
    fn empty_input() {
        assert!(wide("").unwrap().is_empty());
        assert!(wide("id,v0,v1\n").unwrap().is_empty());
    }

    #[test]
    fn ragged_rows_are_listed() {
        match wide("a,1,2,3\nb,1,2\nc,1,2,3\nd,4\n") {
            Err(Error::RaggedRows { rows, expected }) => {
                assert_eq!(rows, vec![2, 4]);
                assert_eq!(expected, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_cell() {
        match wide("a,1,2\nb,1,x\n") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(wide("a,1,2\na,3,4\n"), Err(Error::DuplicateId(_))));
        assert!(matches!(wide("a,1,inf\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn long_layout() {
        let text = "id,t,value\nb,1,5\na,0,1\na,1,2\nb,0,4\n";
        let rel = read_csv(text.as_bytes(), CsvLayout::Long).unwrap();
        assert_eq!(rel.as_slice()[0].id, "b");
        assert_eq!(rel.get("a").unwrap().values.values(), &[1.0, 2.0]);
        assert_eq!(rel.get("b").unwrap().values.values(), &[4.0, 5.0]);
        assert!(read_csv("a,0,1\na,2,2\n".as_bytes(), CsvLayout::Long).is_err());
        assert!(matches!(
            read_csv("a,0,1\na,1,2\nb,0,3\n".as_bytes(), CsvLayout::Long),
            Err(Error::RaggedRows { .. })
        ));
    }

    #[test]
    fn dump_then_ingest_is_lossless() {
        let rel = generate_synthetic(20, 17, 5, false).unwrap();
        let mut buf = Vec::new();
        write_wide_csv(&rel, &mut buf).unwrap();
        assert_eq!(wide(std::str::from_utf8(&buf).unwrap()).unwrap(), rel);
    }

    #[test]
    fn generator_is_deterministic_and_bounded() {
        let a = generate_synthetic(10_000, 16, 99, false).unwrap();
        assert_eq!(a, generate_synthetic(10_000, 16, 99, false).unwrap());
        assert_ne!(a, generate_synthetic(10_000, 16, 100, false).unwrap());
        let mut start_sum = 0.0;
        for s in &a {
            let v = s.values.values();
            assert!((20.0..=99.0).contains(&v[0]));
            assert!(v.windows(2).all(|w| (w[1] - w[0]).abs() <= 4.0));
            start_sum += v[0];
        }
        let mean = start_sum / 10_000.0;
        assert!((mean - 59.5).abs() < 1.0, "start mean {mean}");
        assert!(generate_synthetic(0, 16, 1, false).is_err());
        assert!(generate_synthetic(3, 1, 1, false).is_err());
        let u = generate_synthetic(2000, 2, 3, true).unwrap();
        assert!(u.iter().all(|s| (20.0..=99.0).contains(&s.values[0])));
    }

    #[test]
    fn distances_use_six_significant_digits() {
        assert_eq!(format_distance(0.0), "0.000000");
        assert_eq!(format_distance(0.47), "0.470000");
        assert_eq!(format_distance(11.920172), "11.9202");
        assert_eq!(format_distance(123456.7), "123457");
        let mut buf = Vec::new();
        emit_hits(&[], TableFormat::Csv, &mut buf).unwrap();
        assert_eq!(buf, b"rank,id,distance\n");
        buf.clear();
        emit_pairs(
            &[PairHit {
                id_a: "a".into(),
                id_b: "b".into(),
                distance: 1.5,
            }],
            TableFormat::Tsv,
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "idA\tidB\tdistance\na\tb\t1.50000\n");
    }

    #[test]
    fn averaged_stock_query_table() {
        let rel = Relation::new(vec![
            TimeSeries::new("s1", S1.to_vec()).unwrap(),
            TimeSeries::new("s2", S2.to_vec()).unwrap(),
        ])
        .unwrap();
        let tree = RTree::build(&rel, SpaceMode::Raw(2), 4).unwrap();
        let q = RangeQuery::from_signal(
            &Signal::new(S1.to_vec()).unwrap(),
            tree.mode(),
            1.0,
            make_moving_average(3, 15, 15, None).unwrap(),
        )
        .unwrap()
        .transform_query(tree.mode())
        .unwrap();
        let (hits, _) = tree.transformed_range_search(&q).unwrap();
        let mut buf = Vec::new();
        emit_hits(&hits, TableFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("1,s1,0.000000") || rows[1].starts_with("1,s1,"));
        let d: f64 = rows[2].split(',').nth(2).unwrap().parse().unwrap();
        assert!((d - 0.47).abs() < 0.01);
    }

    fn sample_tree() -> RTree {
        let rel = generate_synthetic(300, 32, 11, false).unwrap();
        RTree::build(&rel, SpaceMode::NormalForm(2), 8).unwrap()
    }

    #[test]
    fn snapshot_roundtrip() {
        let tree = sample_tree();
        let bytes = encode_index(&tree).unwrap();
        let back = decode_index(&bytes).unwrap();
        assert_eq!(back.records(), tree.records());
        assert_eq!(back.height(), tree.height());
        assert_eq!(back.nodes, tree.nodes);
        assert_eq!(back.root, tree.root);
        assert_eq!(encode_index(&back).unwrap(), bytes);
        let q = RangeQuery::new(
            tree.records()[0].clone_prepared(),
            3.0,
            make_moving_average(4, 32, 32, None).unwrap(),
        )
        .unwrap();
        assert_eq!(
            tree.transformed_range_search(&q).unwrap().0,
            back.transformed_range_search(&q).unwrap().0
        );
    }

    #[test]
    fn empty_snapshot_roundtrip() {
        let tree = RTree::new(SpaceMode::Raw(3), 16).unwrap();
        let back = decode_index(&encode_index(&tree).unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.mode(), SpaceMode::Raw(3));
    }

    #[test]
    fn damaged_snapshots_are_rejected() {
        let bytes = encode_index(&sample_tree()).unwrap();
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 100] ^= 0x10;
        assert!(matches!(decode_index(&flipped), Err(Error::ChecksumMismatch { .. })));
        assert!(matches!(decode_index(&bytes[..bytes.len() - 10]), Err(Error::Truncated(_))));
        assert!(matches!(decode_index(&bytes[..8]), Err(Error::Truncated(_))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_index(&magic), Err(Error::BadMagic)));
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(
            decode_index(&version),
            Err(Error::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn file_roundtrip_and_materialized_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.tsrt");
        let tree = sample_tree();
        save_index(&tree, &path).unwrap();
        assert_eq!(load_index(&path).unwrap().records(), tree.records());
        let m = tree.materialize(&Transformation::identity(32).unwrap()).unwrap();
        assert!(save_index(&m, dir.path().join("m.tsrt")).is_err());
        assert!(matches!(load_index(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
