//! One-file-per-shot storage.
//!
//! Layout (all header lines are `\n`-terminated ASCII):
//!
//! ```text
//! ROTCTL-SHOT 1
//! session_id <u32>
//! shot_id <u32>
//! dt 0.02
//! flat_top <start> <end>
//! steps <n>
//! channels <c>
//! <channel name>            (c lines, fixed order)
//! data f32le
//! <n * c little-endian f32 values, row-major by step>
//! ```
//!
//! Each record holds the raw state channels followed by the actuators.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::schema::{channel_names, ACTUATOR_DIM, FRAME_DT, RAW_STATE_DIM};
use crate::synth::Shot;

pub const SHOT_MAGIC: &str = "ROTCTL-SHOT 1";

pub fn shot_file_name(shot: &Shot) -> String {
    format!("session_{:04}_shot_{:06}.shot", shot.session_id, shot.shot_id)
}

pub fn encode_shot(shot: &Shot) -> Vec<u8> {
    let names = channel_names();
    let mut out = String::new();
    out.push_str(SHOT_MAGIC);
    out.push('\n');
    out.push_str(&format!("session_id {}\n", shot.session_id));
    out.push_str(&format!("shot_id {}\n", shot.shot_id));
    out.push_str(&format!("dt {}\n", shot.dt));
    out.push_str(&format!("flat_top {} {}\n", shot.flat_top.0, shot.flat_top.1));
    out.push_str(&format!("steps {}\n", shot.len()));
    out.push_str(&format!("channels {}\n", names.len()));
    for n in &names {
        out.push_str(n);
        out.push('\n');
    }
    out.push_str("data f32le\n");
    let mut bytes = out.into_bytes();
    bytes.reserve(shot.len() * names.len() * 4);
    for f in 0..shot.len() {
        for &v in shot.states.row(f).iter().chain(shot.actuators.row(f).iter()) {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    bytes
}

pub fn write_shot(path: &Path, shot: &Shot) -> Result<()> {
    std::fs::write(path, encode_shot(shot)).map_err(|e| Error::io(path, e))
}

/// Splits `bytes` into header lines up to and including `terminator`, returning the payload offset.
pub(crate) fn split_header<'a>(bytes: &'a [u8], path: &Path, terminator: &str) -> Result<(Vec<&'a str>, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let rel = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::schema(path, format!("header ended before `{terminator}`")))?;
        let line = std::str::from_utf8(&bytes[pos..pos + rel]).map_err(|_| Error::schema(path, "non-utf8 header"))?;
        pos += rel + 1;
        if line == terminator {
            return Ok((lines, pos));
        }
        lines.push(line);
    }
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str, path: &Path) -> Result<Vec<&'a str>> {
    let line = lines
        .next()
        .ok_or_else(|| Error::schema(path, format!("missing `{key}`")))?;
    let mut parts = line.split(' ');
    if parts.next() != Some(key) {
        return Err(Error::schema(path, format!("expected `{key}`, found `{line}`")));
    }
    Ok(parts.collect())
}

fn parse<T: std::str::FromStr>(s: Option<&&str>, what: &str, path: &Path) -> Result<T> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::schema(path, format!("bad value for `{what}`")))
}

pub fn decode_shot(bytes: &[u8], path: &Path) -> Result<Shot> {
    let (lines, offset) = split_header(bytes, path, "data f32le")?;
    let mut it = lines.into_iter();
    if it.next() != Some(SHOT_MAGIC) {
        return Err(Error::schema(path, "not a shot file or unsupported schema version"));
    }
    let session_id: u32 = parse(field(&mut it, "session_id", path)?.first(), "session_id", path)?;
    let shot_id: u32 = parse(field(&mut it, "shot_id", path)?.first(), "shot_id", path)?;
    let dt: f64 = parse(field(&mut it, "dt", path)?.first(), "dt", path)?;
    if (dt - FRAME_DT).abs() > 1e-12 {
        return Err(Error::schema(path, format!("dt {dt} differs from 0.02")));
    }
    let ft = field(&mut it, "flat_top", path)?;
    let flat_top: (usize, usize) = (parse(ft.first(), "flat_top", path)?, parse(ft.get(1), "flat_top", path)?);
    let steps: usize = parse(field(&mut it, "steps", path)?.first(), "steps", path)?;
    let n_channels: usize = parse(field(&mut it, "channels", path)?.first(), "channels", path)?;
    let expected = channel_names();
    if n_channels != expected.len() {
        return Err(Error::schema(
            path,
            format!("channel count {n_channels}, expected {}", expected.len()),
        ));
    }
    for (i, want) in expected.iter().enumerate() {
        match it.next() {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(Error::schema(
                    path,
                    format!("channel {i} is `{got}`, expected `{want}`"),
                ))
            }
            None => return Err(Error::schema(path, "channel list cut short")),
        }
    }
    if let Some(extra) = it.next() {
        return Err(Error::schema(path, format!("unexpected header line `{extra}`")));
    }

    let payload = &bytes[offset..];
    let want = steps * n_channels * 4;
    if payload.len() != want {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: want,
            found: payload.len(),
        });
    }
    let mut states = Array2::zeros((steps, RAW_STATE_DIM));
    let mut actuators = Array2::zeros((steps, ACTUATOR_DIM));
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        let (row, col) = (i / n_channels, i % n_channels);
        if col < RAW_STATE_DIM {
            states[(row, col)] = v;
        } else {
            actuators[(row, col - RAW_STATE_DIM)] = v;
        }
    }
    let shot = Shot {
        session_id,
        shot_id,
        dt: FRAME_DT,
        flat_top,
        states,
        actuators,
    };
    shot.validate().map_err(|e| Error::schema(path, e.to_string()))?;
    Ok(shot)
}

pub fn read_shot(path: &Path) -> Result<Shot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_shot(&bytes, path)
}

/// Reads every shot listed in a corpus manifest, in manifest order.
pub fn read_corpus(dir: &Path) -> Result<(crate::synth::CorpusManifest, Vec<Shot>)> {
    let path = dir.join(crate::synth::session::MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: crate::synth::CorpusManifest =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.clone(), source: e })?;
    let shots = manifest
        .files
        .iter()
        .map(|f| read_shot(&dir.join(&f.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, shots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate_shot, MachineParams, ScenarioSpec};

    fn shot() -> Shot {
        let spec = ScenarioSpec {
            n_frames: 30,
            flat_top_start: 10,
            ..Default::default()
        };
        simulate_shot(&spec, &MachineParams::default(), 7, 1).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = shot();
        let bytes = encode_shot(&s);
        let back = decode_shot(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn corrupted_length_is_truncation() {
        let s = shot();
        let bytes = encode_shot(&s);
        let needle = b"steps 30\n";
        let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        let mut bad = bytes.clone();
        bad[pos + 6] = b'4'; // "steps 40"
        assert!(matches!(decode_shot(&bad, Path::new("mem")), Err(Error::Truncated { .. })));
        let cut = &bytes[..bytes.len() - 4];
        assert!(matches!(decode_shot(cut, Path::new("mem")), Err(Error::Truncated { .. })));
    }

    #[test]
    fn permuted_channels_are_schema_errors() {
        let bytes = encode_shot(&shot());
        let a = b"\nbeta_n\nli\n";
        let pos = bytes.windows(a.len()).position(|w| w == a).unwrap();
        let mut bad = bytes.clone();
        bad[pos + 1..pos + 1 + 9].copy_from_slice(b"li\nbeta_n");
        assert!(matches!(decode_shot(&bad, Path::new("mem")), Err(Error::Schema { .. })));
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut bytes = encode_shot(&shot());
        bytes[12] = b'9';
        assert!(matches!(decode_shot(&bytes, Path::new("mem")), Err(Error::Schema { .. })));
    }
}
