//! Tag file formats.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic      4 bytes  "TTAG"
//! version    u16      1
//! n_channels u16
//! per channel: id u8, name_len u16, name (UTF-8)
//! meta_len   u32, metadata (UTF-8 JSON)
//! count      u64
//! records    count × (channel u8, t_ps u64)
//! ```
//!
//! The text format is one `channel,t_ps` line per tag.

use std::io::{BufRead, Read, Write};

use super::TimeTag;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TTAG";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TagFile {
    pub channels: Vec<(u8, String)>,
    pub metadata: serde_json::Value,
    pub tags: Vec<TimeTag>,
}

pub fn write_binary<W: Write>(mut w: W, file: &TagFile) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let n = u16::try_from(file.channels.len())
        .map_err(|_| Error::Format("too many channels".into()))?;
    w.write_all(&n.to_le_bytes())?;
    for (id, name) in &file.channels {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::Format("channel name too long".into()))?;
        w.write_all(&[*id])?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
    }
    let meta = serde_json::to_vec(&file.metadata)?;
    let len = u32::try_from(meta.len()).map_err(|_| Error::Format("metadata too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(file.tags.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(9 * 4096);
    for chunk in file.tags.chunks(4096) {
        buf.clear();
        for tag in chunk {
            buf.push(tag.channel);
            buf.extend_from_slice(&tag.t_ps.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated tag file: {e}")))?;
    Ok(b)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<TagFile> {
    if &read_exact::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("not a tag file (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported tag file version {version}"
        )));
    }
    let n = u16::from_le_bytes(read_exact(&mut r)?);
    let mut channels = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let [id] = read_exact::<1, _>(&mut r)?;
        let len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated tag file: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("channel name is not UTF-8".into()))?;
        channels.push((id, name));
    }
    let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut meta = vec![0u8; len];
    r.read_exact(&mut meta)
        .map_err(|e| Error::Format(format!("truncated tag file: {e}")))?;
    let metadata = serde_json::from_slice(&meta)?;
    let count = u64::from_le_bytes(read_exact(&mut r)?);
    let mut tags = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let rec = read_exact::<9, _>(&mut r)?;
        let mut t = [0u8; 8];
        t.copy_from_slice(&rec[1..]);
        tags.push(TimeTag::new(rec[0], u64::from_le_bytes(t)));
    }
    Ok(TagFile {
        channels,
        metadata,
        tags,
    })
}

pub fn write_text<W: Write>(mut w: W, tags: &[TimeTag]) -> Result<()> {
    for t in tags {
        writeln!(w, "{},{}", t.channel, t.t_ps)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<Vec<TimeTag>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            Error::Format(format!(
                "line {}: expected `channel,t_ps`, got `{line}`",
                n + 1
            ))
        };
        let (c, t) = line.split_once(',').ok_or_else(bad)?;
        out.push(TimeTag::new(
            c.trim().parse().map_err(|_| bad())?,
            t.trim().parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let file = TagFile {
            channels: vec![
                (1, "bsm-v".into()),
                (2, "bsm-h".into()),
                (3, "signal".into()),
            ],
            metadata: serde_json::json!({"scenario": "local", "seed": 7}),
            tags: vec![
                TimeTag::new(1, 0),
                TimeTag::new(3, u64::MAX),
                TimeTag::new(2, 12345),
            ],
        };
        let mut buf = Vec::new();
        write_binary(&mut buf, &file).unwrap();
        assert_eq!(&buf[..4], b"TTAG");
        assert_eq!(read_binary(&buf[..]).unwrap(), file);
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        assert!(read_binary(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let tags = vec![TimeTag::new(1, 5), TimeTag::new(3, 99)];
        let mut buf = Vec::new();
        write_text(&mut buf, &tags).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "1,5\n3,99\n");
        assert_eq!(read_text(&buf[..]).unwrap(), tags);
        assert!(read_text(&b"1;5\n"[..]).is_err());
    }
}
