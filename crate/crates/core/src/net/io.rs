//! Binary mapping-network files.
//!
//! Layout: 4-byte magic `MNW1`, little-endian u32 header length, a UTF-8
//! header `src=<tag>;tgt=<tag>;dims=<d_s>,<h1>,<h2>,<h3>,<d_t>`, then all
//! parameters as little-endian f64 in layer order (weights row-major, then
//! bias, per layer). Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, MappingNetwork, NetError};

pub const MAGIC: &[u8; 4] = b"MNW1";

const MAX_HEADER_LEN: u32 = 1 << 16;

pub fn write_network(net: &MappingNetwork, w: &mut impl Write) -> Result<(), NetError> {
    for tag in [&net.source_lang, &net.target_lang] {
        if tag.contains(';') || tag.contains(',') {
            return Err(NetError::InvalidHeader(format!(
                "language tag {tag:?} may not contain ';' or ','"
            )));
        }
    }
    let dims: Vec<String> = net.dims().iter().map(ToString::to_string).collect();
    let header = format!(
        "src={};tgt={};dims={}",
        net.source_lang,
        net.target_lang,
        dims.join(",")
    );
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    for v in net.flatten_params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<MappingNetwork, NetError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| NetError::Truncated(format!("while reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(NetError::BadMagic { found: magic });
    }

    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)
        .map_err(|e| NetError::Truncated(format!("while reading header length: {e}")))?;
    let hlen = u32::from_le_bytes(len4);
    if hlen > MAX_HEADER_LEN {
        return Err(NetError::InvalidHeader(format!(
            "header length {hlen} exceeds limit {MAX_HEADER_LEN}"
        )));
    }
    let mut hbuf = vec![0u8; hlen as usize];
    r.read_exact(&mut hbuf)
        .map_err(|e| NetError::Truncated(format!("while reading header: {e}")))?;
    let header = String::from_utf8(hbuf)
        .map_err(|e| NetError::InvalidHeader(format!("header is not UTF-8: {e}")))?;

    let (src, tgt, dims) = parse_header(&header)?;
    if dims.iter().any(|&d| d == 0) {
        return Err(NetError::InvalidTopology(format!(
            "layer widths must be positive, got {dims:?}"
        )));
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = read_f64s(r, fan_in * fan_out)?;
        let bias = read_f64s(r, fan_out)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((fan_in, fan_out), weights)
                .expect("length checked by read_f64s"),
            bias: Array1::from_vec(bias),
        });
    }

    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(NetError::TrailingData);
    }

    let net = MappingNetwork {
        source_lang: src,
        target_lang: tgt,
        layers,
    };
    if !net.params_finite() {
        return Err(NetError::NonFinite(
            "network file holds non-finite parameters".into(),
        ));
    }
    Ok(net)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, NetError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| NetError::Truncated(format!("parameter payload needs {} bytes: {e}", n * 8)))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| {
            f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
        })
        .collect())
}

fn parse_header(header: &str) -> Result<(String, String, Vec<usize>), NetError> {
    let mut src = None;
    let mut tgt = None;
    let mut dims = None;
    for field in header.split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| NetError::InvalidHeader(format!("field {field:?} lacks '='")))?;
        match key {
            "src" => src = Some(value.to_string()),
            "tgt" => tgt = Some(value.to_string()),
            "dims" => {
                let parsed: Result<Vec<usize>, _> =
                    value.split(',').map(str::parse::<usize>).collect();
                dims = Some(parsed.map_err(|e| {
                    NetError::InvalidHeader(format!("bad dims {value:?}: {e}"))
                })?);
            }
            other => {
                return Err(NetError::InvalidHeader(format!("unknown field {other:?}")));
            }
        }
    }
    match (src, tgt, dims) {
        (Some(s), Some(t), Some(d)) => {
            if d.len() != 5 {
                return Err(NetError::InvalidTopology(format!(
                    "expected 5 layer widths (input, 3 hidden, output), got {}",
                    d.len()
                )));
            }
            Ok((s, t, d))
        }
        _ => Err(NetError::InvalidHeader(format!(
            "header {header:?} must set src, tgt and dims"
        ))),
    }
}

pub fn save_network(net: &MappingNetwork, path: impl AsRef<Path>) -> Result<(), NetError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<MappingNetwork, NetError> {
    read_network(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample() -> MappingNetwork {
        MappingNetwork::init("ceb", "tam", 4, [6, 5, 6], 3, 31)
    }

    #[test]
    fn round_trip_is_bit_exact_and_forward_identical() {
        let net = sample();
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(back.source_lang, "ceb");
        assert_eq!(back.target_lang, "tam");
        assert_eq!(back.dims(), net.dims());
        let (a, b) = (net.flatten_params(), back.flatten_params());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }

        let probe = Array2::from_elem((7, 4), 0.25f64);
        assert_eq!(net.forward(&probe).unwrap(), back.forward(&probe).unwrap());

        let mut buf2 = Vec::new();
        write_network(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut buf = Vec::new();
        write_network(&sample(), &mut buf).unwrap();
        buf[3] = b'9';
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(NetError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_network(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(NetError::Truncated(_))
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut buf = Vec::new();
        write_network(&sample(), &mut buf).unwrap();
        buf.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(NetError::TrailingData)
        ));
    }

    #[test]
    fn zero_width_topology_is_rejected() {
        let header = b"src=a;tgt=b;dims=0,4,4,4,3";
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header);
        assert!(matches!(
            read_network(&mut buf.as_slice()),
            Err(NetError::InvalidTopology(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.mnw");
        let net = sample();
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(net.flatten_params(), back.flatten_params());
    }
}
