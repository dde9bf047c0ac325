//! EMB1 (pooled matrix), TOK1 (per-token records) and IDS1 (row ids).
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary32.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{EmbeddingMatrix, TokenEmbeddings, TokenKind};
use crate::error::{Error, Result};

const EMB1_MAGIC: &[u8; 4] = b"EMB1";
const TOK1_MAGIC: &[u8; 4] = b"TOK1";

/// Sidecar id file of an embeddings file: `<path>.ids`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn read_u32<R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format(format, format!("truncated before {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_floats<R: Read>(r: &mut R, count: usize, format: &'static str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::format(format, format!("truncated payload, expected {count} floats")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_floats<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the EMB1 payload (ids are written separately).
pub fn write_emb1<W: Write>(mut out: W, m: &EmbeddingMatrix) -> Result<()> {
    out.write_all(EMB1_MAGIC)?;
    out.write_all(&(m.rows() as u32).to_le_bytes())?;
    out.write_all(&(m.dim() as u32).to_le_bytes())?;
    write_floats(&mut out, m.data())?;
    Ok(())
}

/// Reads an EMB1 payload as `(rows, dim, data)`.
pub fn read_emb1<R: Read>(mut input: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::format("EMB1", "truncated before magic"))?;
    if &magic != EMB1_MAGIC {
        return Err(Error::format("EMB1", format!("bad magic {magic:?}")));
    }
    let n = read_u32(&mut input, "EMB1", "row count")? as usize;
    let d = read_u32(&mut input, "EMB1", "dimension")? as usize;
    let data = read_floats(&mut input, n * d, "EMB1")?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::format("EMB1", "trailing bytes after payload"));
    }
    Ok((n, d, data))
}

pub fn write_ids<W: Write>(mut out: W, ids: &[String]) -> Result<()> {
    for id in ids {
        if id.contains('\n') || id.contains('\r') {
            return Err(Error::format("IDS1", format!("id {id:?} contains a line break")));
        }
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub fn read_ids<R: BufRead>(input: R) -> Result<Vec<String>> {
    Ok(input.lines().collect::<std::io::Result<Vec<_>>>()?)
}

/// Writes `path` (EMB1) and its `.ids` sidecar.
pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_emb1(&mut out, m)?;
    out.flush()?;
    let ids = ids_path(path);
    let mut out = BufWriter::new(File::create(&ids).map_err(|e| Error::io(&ids, e))?);
    write_ids(&mut out, m.ids())?;
    out.flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (n, d, data) = read_emb1(BufReader::new(file))?;
    let ids_file = ids_path(path);
    let file = File::open(&ids_file).map_err(|e| Error::io(&ids_file, e))?;
    let ids = read_ids(BufReader::new(file))?;
    if ids.len() != n {
        return Err(Error::format(
            "IDS1",
            format!("{} ids for {n} rows in {}", ids.len(), path.display()),
        ));
    }
    EmbeddingMatrix::new(d, data, ids)
}

/// Writes one TOK1 record.
pub fn write_tok1<W: Write>(mut out: W, te: &TokenEmbeddings) -> Result<()> {
    out.write_all(TOK1_MAGIC)?;
    out.write_all(&(te.len() as u32).to_le_bytes())?;
    out.write_all(&(te.dim() as u32).to_le_bytes())?;
    write_floats(&mut out, te.data())?;
    let mask: Vec<u8> = te.mask().iter().map(|k| k.code()).collect();
    out.write_all(&mask)?;
    Ok(())
}

/// Reads concatenated TOK1 records until end of input.
pub fn read_tok1<R: Read>(mut input: R) -> Result<Vec<TokenEmbeddings>> {
    let mut records = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        match input.read(&mut magic[..1])? {
            0 => return Ok(records),
            _ => input
                .read_exact(&mut magic[1..])
                .map_err(|_| Error::format("TOK1", "truncated magic"))?,
        }
        if &magic != TOK1_MAGIC {
            return Err(Error::format("TOK1", format!("bad magic {magic:?}")));
        }
        let t = read_u32(&mut input, "TOK1", "token count")? as usize;
        let d = read_u32(&mut input, "TOK1", "dimension")? as usize;
        let data = read_floats(&mut input, t * d, "TOK1")?;
        let mut codes = vec![0u8; t];
        input
            .read_exact(&mut codes)
            .map_err(|_| Error::format("TOK1", "truncated mask"))?;
        let mask = codes
            .iter()
            .map(|&c| TokenKind::from_code(c).ok_or_else(|| Error::format("TOK1", format!("mask code {c}"))))
            .collect::<Result<Vec<_>>>()?;
        records.push(TokenEmbeddings::new(d, data, mask)?);
    }
}
