//! Weights files and transition logs.
//!
//! A weights file is the magic `ABWM`, a little-endian `u32` header length,
//! a JSON header describing shapes, then every parameter as a little-endian
//! `f64` in layout order. Transition logs are JSON lines with items written
//! as `[identity, attribute]` pairs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generative::GenerativeModel;
use super::net::{layout, HeadKind, Net, NetShape, Tensor};
use super::parametric::ParametricModel;
use super::ModelError;
use crate::domain::{AbstractTransition, Vocabulary};

pub const MAGIC: &[u8; 4] = b"ABWM";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HIDDEN: usize = 4096;
const MAX_HEADER: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub version: u32,
    pub shape: NetShape,
    pub tensors: Vec<Tensor>,
    pub seed: u64,
    pub steps: u64,
    #[serde(default)]
    pub vocab: Option<Vocabulary>,
}

fn encode_net(net: &Net, seed: u64, steps: u64, vocab: Option<&Vocabulary>) -> Vec<u8> {
    let header = WeightsHeader {
        version: FORMAT_VERSION,
        shape: net.shape,
        tensors: net.tensors.clone(),
        seed,
        steps,
        vocab: vocab.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(8 + json.len() + 8 * net.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn format_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

/// Parses a weights file, checking the header against the layout implied
/// by its shape before reading any parameters.
pub fn decode_weights(bytes: &[u8]) -> Result<(Net, WeightsHeader), ModelError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(format_err("missing ABWM magic"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if header_len > MAX_HEADER || 8 + header_len > bytes.len() {
        return Err(format_err("header length out of range"));
    }
    let header: WeightsHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported version {}",
            header.version
        )));
    }
    let shape = header.shape;
    if shape.hidden == 0
        || shape.hidden > MAX_HIDDEN
        || shape.attributes == 0
        || shape.attributes >= u8::MAX as usize
        || shape.identities >= u16::MAX as usize
    {
        return Err(format_err("shape out of range"));
    }
    if let Some(v) = &header.vocab {
        if v.num_identities() != shape.identities || v.num_attributes() != shape.attributes {
            return Err(format_err("vocabulary does not match shape"));
        }
    }
    let expected = layout(&shape);
    let same = expected.len() == header.tensors.len()
        && expected.iter().zip(&header.tensors).all(|(a, b)| {
            a.name == b.name && a.offset == b.offset && a.rows == b.rows && a.cols == b.cols
        });
    if !same {
        return Err(format_err("tensor table does not match shape"));
    }
    let total = expected.last().map_or(0, |t| t.offset + t.len());
    let payload = &bytes[8 + header_len..];
    if Some(payload.len()) != total.checked_mul(8) {
        return Err(format_err(format!(
            "expected {} parameter bytes, found {}",
            total * 8,
            payload.len()
        )));
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(format_err("non-finite parameter"));
    }
    Ok((
        Net {
            shape,
            tensors: expected,
            params,
        },
        header,
    ))
}

impl ParametricModel {
    pub fn to_bytes(&self, vocab: Option<&Vocabulary>) -> Vec<u8> {
        encode_net(&self.net, self.seed, self.steps, vocab)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, WeightsHeader), ModelError> {
        let (net, header) = decode_weights(bytes)?;
        if net.shape.head != HeadKind::Binary {
            return Err(format_err("not a discriminative model"));
        }
        Ok((
            ParametricModel {
                net,
                seed: header.seed,
                steps: header.steps,
            },
            header,
        ))
    }

    pub fn save(
        &self,
        path: impl AsRef<Path>,
        vocab: Option<&Vocabulary>,
    ) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes(vocab))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, WeightsHeader), ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl GenerativeModel {
    pub fn to_bytes(&self, vocab: Option<&Vocabulary>) -> Vec<u8> {
        encode_net(&self.net, self.seed, self.steps, vocab)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, WeightsHeader), ModelError> {
        let (net, header) = decode_weights(bytes)?;
        if net.shape.head != HeadKind::Categorical {
            return Err(format_err("not a generative model"));
        }
        Ok((
            GenerativeModel {
                net,
                seed: header.seed,
                steps: header.steps,
            },
            header,
        ))
    }

    pub fn save(
        &self,
        path: impl AsRef<Path>,
        vocab: Option<&Vocabulary>,
    ) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes(vocab))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, WeightsHeader), ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Parses one transition-log line. The recorded success flag must agree
/// with the next state.
pub fn parse_transition_line(line: &str) -> Result<AbstractTransition, ModelError> {
    let t: AbstractTransition = serde_json::from_str(line)?;
    if t.success != t.behaviour.holds_in(&t.next_state) {
        return Err(format_err("success flag disagrees with next state"));
    }
    Ok(t)
}

pub fn write_transitions<'a>(
    mut out: impl Write,
    transitions: impl IntoIterator<Item = &'a AbstractTransition>,
) -> Result<(), ModelError> {
    for t in transitions {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a transition log, skipping blank lines.
pub fn read_transitions(input: impl std::io::Read) -> Result<Vec<AbstractTransition>, ModelError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            parse_transition_line(&line).map_err(|e| format_err(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

pub fn save_transitions(
    path: impl AsRef<Path>,
    transitions: &[AbstractTransition],
) -> Result<(), ModelError> {
    let file = fs::File::create(path)?;
    write_transitions(std::io::BufWriter::new(file), transitions)
}

pub fn load_transitions(path: impl AsRef<Path>) -> Result<Vec<AbstractTransition>, ModelError> {
    read_transitions(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AbstractState, AttributeId, Behaviour, Item, ItemIdentity};

    #[test]
    fn weights_round_trip() {
        let mut m = ParametricModel::new(4, 3, 8, 7);
        m.params_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, p)| *p += i as f64 * 1e-3);
        let bytes = m.to_bytes(None);
        let (back, header) = ParametricModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.seed, 7);
        assert!(GenerativeModel::from_bytes(&bytes).is_err());
    }

    #[test]
    fn truncated_weights_rejected() {
        let bytes = ParametricModel::new(2, 3, 4, 0).to_bytes(None);
        for cut in [0, 3, 8, 20, bytes.len() - 1] {
            assert!(decode_weights(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn transition_line_format() {
        let s = AbstractState::new(vec![Item::new(0, 0), Item::EMPTY]).unwrap();
        let b = Behaviour::single(ItemIdentity(0), AttributeId(1));
        let n = crate::domain::apply_delta(&s, &b).unwrap();
        let t = AbstractTransition::observed(s, b, n, 3);
        let mut buf = Vec::new();
        write_transitions(&mut buf, [&t]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("[65535,255]"), "{text}");
        assert_eq!(read_transitions(buf.as_slice()).unwrap(), vec![t]);
        let lie = text.replace("\"success\":true", "\"success\":false");
        assert!(parse_transition_line(lie.trim()).is_err());
    }
}
