//! Single-file model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TWU1"
//! u32          header length in bytes
//! [u8]         UTF-8 header, `key=value` lines
//! f64 * total  parameter blocks in declaration order
//! ```
//!
//! The header records the topology, site policy, tap count and every block
//! as `name:len`, which is enough to rebuild the network before reading the
//! parameters.

use std::fs;
use std::path::Path;

use crate::error::{Result, TwuError};
use crate::trainer::net::{SitePolicy, ToyNet};

pub const MAGIC: &[u8; 4] = b"TWU1";

fn bad(msg: impl Into<String>) -> TwuError {
    TwuError::Checkpoint(msg.into())
}

pub fn encode(net: &ToyNet) -> Vec<u8> {
    let blocks = net.param_blocks();
    let p = net.policy;
    let header = format!(
        "topology=toynet\nchannels={}\npool={}\nstride={}\nmode={}\ntaps={}\nblocks={}\n",
        net.channels,
        p.pool,
        p.stride,
        p.mode,
        p.taps,
        blocks
            .iter()
            .map(|b| format!("{}:{}", b.name, b.values.len()))
            .collect::<Vec<_>>()
            .join(",")
    );
    let mut out = Vec::with_capacity(8 + header.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for block in &blocks {
        for v in &block.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ToyNet> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing TWU1 magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|e| bad(format!("header is not UTF-8: {e}")))?;

    let mut fields = std::collections::HashMap::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header line '{line}'")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks '{k}'")));
    if get("topology")? != "toynet" {
        return Err(bad(format!("unknown topology '{}'", get("topology")?)));
    }
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|e| bad(format!("bad '{k}': {e}")))
    };
    let policy = SitePolicy {
        pool: get("pool")?.parse()?,
        stride: get("stride")?.parse()?,
        mode: get("mode")?.parse()?,
        taps: parse_usize("taps")?,
    };
    let mut net = ToyNet::new(parse_usize("channels")?, policy, 0)?;

    let declared: Vec<(String, usize)> = get("blocks")?
        .split(',')
        .map(|entry| {
            let (name, len) = entry
                .split_once(':')
                .ok_or_else(|| bad(format!("malformed block entry '{entry}'")))?;
            let len = len.parse().map_err(|e| bad(format!("bad block length: {e}")))?;
            Ok((name.to_string(), len))
        })
        .collect::<Result<_>>()?;
    let expected: Vec<(String, usize)> = net
        .param_blocks()
        .into_iter()
        .map(|b| (b.name, b.values.len()))
        .collect();
    if declared != expected {
        return Err(TwuError::Shape(format!(
            "checkpoint blocks {declared:?} do not match topology {expected:?}"
        )));
    }
    let body = &bytes[8 + header_len..];
    let total: usize = expected.iter().map(|(_, n)| n).sum();
    if body.len() != 8 * total {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            8 * total,
            body.len()
        )));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    net.load_flat(&flat)?;
    Ok(net)
}

pub fn save(net: &ToyNet, path: &Path) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ToyNet> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::BankMode;

    #[test]
    fn round_trip_every_policy() {
        for policy in [
            SitePolicy::baseline(),
            SitePolicy::wavelet(BankMode::Lattice, 8),
            SitePolicy::wavelet(BankMode::Free, 4),
        ] {
            let net = ToyNet::new(3, policy, 9).unwrap();
            let bytes = encode(&net);
            assert_eq!(&bytes[..4], b"TWU1");
            assert_eq!(decode(&bytes).unwrap(), net);
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let net = ToyNet::new(2, SitePolicy::baseline(), 1).unwrap();
        let bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOPE").is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
    }
}
