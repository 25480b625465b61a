//! Capture files: line-delimited JSON and the compact `DYAD0001` binary form.
//!
//! JSON lines carry one frame each:
//!
//! ```text
//! {"sample_id":"p01-hugging-003","label":"hugging","pair_id":"p01","t":0,
//!  "bodies":[{"joints":[[x,y,z,c], ... 32 entries]}, {...}]}
//! ```
//!
//! `c` is the confidence ordinal 0..=3. A frame may carry `"occluded":true`
//! to mark it occluded even when both bodies are present. Frames of several
//! samples may be interleaved; samples are returned in order of first
//! appearance.
//!
//! The binary form stores the same content losslessly (little-endian):
//!
//! ```text
//! "DYAD0001"  u32 sample_count
//! per sample: str sample_id, str pair_id, u8 class_id, u32 frame_count,
//!             u32 occluded_count, u32 occluded_index * occluded_count,
//!             per frame: u32 t, u8 body_count,
//!                        per body: 32 * (f64 x, f64 y, f64 z, u8 confidence)
//! str = u32 byte length + utf-8 bytes
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{FormatError, Reader, Writer};
use crate::geometry::Vec3;
use crate::skeleton::{
    validate_sample, BodyPose, Confidence, DyadFrame, DyadSample, InteractionLabel, OcclusionRule,
    FRAMES_PER_SAMPLE, NUM_JOINTS,
};

pub const CAPTURE_MAGIC: &[u8; 8] = b"DYAD0001";

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown interaction label `{label}`")]
    Label { line: usize, label: String },
    #[error("sample `{sample_id}`: {message}")]
    Validation { sample_id: String, message: String },
    #[error("binary capture: {0}")]
    Format(#[from] FormatError),
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    sample_id: String,
    label: String,
    pair_id: String,
    t: u32,
    bodies: Vec<BodyRecord>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    occluded: bool,
}

#[derive(Serialize, Deserialize)]
struct BodyRecord {
    joints: Vec<[f64; 4]>,
}

/// Reads a capture file, detecting the binary form by its magic header.
pub fn parse_capture(path: impl AsRef<Path>) -> Result<Vec<DyadSample>, CaptureError> {
    parse_capture_with(path, &OcclusionRule::default())
}

pub fn parse_capture_with(
    path: impl AsRef<Path>,
    rule: &OcclusionRule,
) -> Result<Vec<DyadSample>, CaptureError> {
    let bytes = fs::read(path)?;
    parse_capture_bytes(&bytes, rule)
}

pub fn parse_capture_bytes(bytes: &[u8], rule: &OcclusionRule) -> Result<Vec<DyadSample>, CaptureError> {
    if bytes.starts_with(CAPTURE_MAGIC) {
        decode_binary(bytes, rule)
    } else {
        parse_jsonl(bytes, rule)
    }
}

struct Pending {
    sample: DyadSample,
    marked: BTreeSet<usize>,
}

pub fn parse_jsonl(input: impl BufRead, rule: &OcclusionRule) -> Result<Vec<DyadSample>, CaptureError> {
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| CaptureError::Parse { line: line_no, message: e.to_string() })?;
        let label: InteractionLabel = rec
            .label
            .parse()
            .map_err(|_| CaptureError::Label { line: line_no, label: rec.label.clone() })?;
        let bodies = rec
            .bodies
            .iter()
            .map(|b| body_from_record(b, line_no))
            .collect::<Result<Vec<_>, _>>()?;
        if bodies.len() > 2 {
            return Err(CaptureError::Parse {
                line: line_no,
                message: format!("{} bodies, at most 2 allowed", bodies.len()),
            });
        }

        let entry = pending.entry(rec.sample_id.clone()).or_insert_with(|| {
            order.push(rec.sample_id.clone());
            Pending {
                sample: DyadSample {
                    sample_id: rec.sample_id.clone(),
                    pair_id: rec.pair_id.clone(),
                    label,
                    frames: Vec::new(),
                    occluded_frames: BTreeSet::new(),
                },
                marked: BTreeSet::new(),
            }
        });
        if entry.sample.label != label || entry.sample.pair_id != rec.pair_id {
            return Err(CaptureError::Parse {
                line: line_no,
                message: format!("label or pair_id changes within sample `{}`", rec.sample_id),
            });
        }
        if rec.occluded {
            entry.marked.insert(entry.sample.frames.len());
        }
        entry.sample.frames.push(DyadFrame { t: rec.t, bodies });
    }

    order
        .into_iter()
        .map(|id| {
            let Pending { mut sample, marked } = pending.remove(&id).unwrap();
            sample.occluded_frames = marked;
            finish_sample(sample, rule)
        })
        .collect()
}

fn body_from_record(b: &BodyRecord, line: usize) -> Result<BodyPose, CaptureError> {
    if b.joints.len() != NUM_JOINTS {
        return Err(CaptureError::Parse {
            line,
            message: format!("expected {NUM_JOINTS} joints per body, found {}", b.joints.len()),
        });
    }
    let mut pose = BodyPose::default();
    for (n, [x, y, z, c]) in b.joints.iter().copied().enumerate() {
        pose.joints[n] = Vec3::new(x, y, z);
        pose.confidences[n] = Confidence::from_f64(c).ok_or_else(|| CaptureError::Parse {
            line,
            message: format!("joint {n}: confidence {c} not in {{0,1,2,3}}"),
        })?;
    }
    Ok(pose)
}

fn finish_sample(mut s: DyadSample, rule: &OcclusionRule) -> Result<DyadSample, CaptureError> {
    if s.frames.len() != FRAMES_PER_SAMPLE {
        return Err(CaptureError::Validation {
            message: format!("expected {FRAMES_PER_SAMPLE} frames, found {}", s.frames.len()),
            sample_id: s.sample_id,
        });
    }
    s.mark_occlusions(rule);
    let violations = validate_sample(&s);
    if let Some(v) = violations.first() {
        return Err(CaptureError::Validation { sample_id: s.sample_id, message: v.to_string() });
    }
    Ok(s)
}

pub fn write_jsonl(samples: &[DyadSample], mut out: impl Write) -> io::Result<()> {
    for s in samples {
        for (i, f) in s.frames.iter().enumerate() {
            let rec = FrameRecord {
                sample_id: s.sample_id.clone(),
                label: s.label.name().to_string(),
                pair_id: s.pair_id.clone(),
                t: f.t,
                bodies: f
                    .bodies
                    .iter()
                    .map(|b| BodyRecord {
                        joints: b
                            .joints
                            .iter()
                            .zip(b.confidences.iter())
                            .map(|(p, c)| [p.x, p.y, p.z, c.as_f64()])
                            .collect(),
                    })
                    .collect(),
                occluded: s.occluded_frames.contains(&i),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn encode_binary(samples: &[DyadSample]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CAPTURE_MAGIC);
    w.u32(samples.len() as u32);
    for s in samples {
        w.string(&s.sample_id);
        w.string(&s.pair_id);
        w.u8(s.label.class_id() as u8);
        w.u32(s.frames.len() as u32);
        w.u32(s.occluded_frames.len() as u32);
        for &t in &s.occluded_frames {
            w.u32(t as u32);
        }
        for f in &s.frames {
            w.u32(f.t);
            w.u8(f.bodies.len() as u8);
            for b in &f.bodies {
                for (p, c) in b.joints.iter().zip(b.confidences.iter()) {
                    w.f64(p.x);
                    w.f64(p.y);
                    w.f64(p.z);
                    w.u8(c.ordinal());
                }
            }
        }
    }
    w.into_inner()
}

pub fn decode_binary(bytes: &[u8], rule: &OcclusionRule) -> Result<Vec<DyadSample>, CaptureError> {
    let mut r = Reader::new(bytes);
    r.magic(CAPTURE_MAGIC)?;
    // Smallest possible sample: two empty strings, class, two counts.
    let n = r.count(4 + 4 + 1 + 4 + 4)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let sample_id = r.string()?;
        let pair_id = r.string()?;
        let class = r.u8()?;
        let label = InteractionLabel::from_class_id(class as usize)
            .ok_or_else(|| FormatError::Invalid(format!("class id {class} out of range")))?;
        let frame_count = r.count(5)?;
        let occ_count = r.count(4)?;
        let mut occluded_frames = BTreeSet::new();
        for _ in 0..occ_count {
            occluded_frames.insert(r.u32()? as usize);
        }
        let mut frames = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            let t = r.u32()?;
            let body_count = r.u8()?;
            if body_count > 2 {
                return Err(FormatError::Invalid(format!("{body_count} bodies in frame {t}")).into());
            }
            let mut bodies = Vec::with_capacity(body_count as usize);
            for _ in 0..body_count {
                let mut pose = BodyPose::default();
                for n in 0..NUM_JOINTS {
                    pose.joints[n] = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
                    let c = r.u8()?;
                    pose.confidences[n] = Confidence::from_ordinal(c)
                        .ok_or_else(|| FormatError::Invalid(format!("confidence {c} out of range")))?;
                }
                bodies.push(pose);
            }
            frames.push(DyadFrame { t, bodies });
        }
        let sample = DyadSample { sample_id, pair_id, label, frames, occluded_frames };
        out.push(finish_sample(sample, rule)?);
    }
    r.finish()?;
    Ok(out)
}

/// Writes samples to `path`, as binary when the extension is `.dyad` and as
/// JSON lines otherwise.
pub fn write_capture(path: impl AsRef<Path>, samples: &[DyadSample]) -> io::Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "dyad") {
        fs::write(path, encode_binary(samples))
    } else {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        write_jsonl(samples, &mut w)?;
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::tests::static_sample;

    fn jsonl(samples: &[DyadSample]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_jsonl(samples, &mut buf).unwrap();
        buf
    }

    #[test]
    fn single_clean_hugging_capture() {
        let s = static_sample(InteractionLabel::Hugging);
        let parsed = parse_jsonl(&jsonl(&[s.clone()])[..], &OcclusionRule::default()).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].label, InteractionLabel::Hugging);
        assert!(parsed[0].occluded_frames.is_empty());
        assert_eq!(parsed[0], s);
    }

    #[test]
    fn single_body_frames_become_occluded() {
        let mut s = static_sample(InteractionLabel::Pointing);
        for t in 10..20 {
            s.frames[t].bodies.truncate(1);
        }
        let text = String::from_utf8(jsonl(&[s])).unwrap();
        // Strip the explicit flags so occlusion has to be inferred from body counts.
        let text = text.replace(",\"occluded\":true", "");
        let parsed = parse_jsonl(text.as_bytes(), &OcclusionRule::default()).unwrap();
        let expected: BTreeSet<usize> = (10..20).collect();
        assert_eq!(parsed[0].occluded_frames, expected);
    }

    #[test]
    fn short_capture_is_rejected_with_sample_id() {
        let mut s = static_sample(InteractionLabel::Nodding);
        s.sample_id = "short-one".into();
        s.frames.pop();
        let err = parse_jsonl(&jsonl(&[s])[..], &OcclusionRule::default()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CaptureError::Validation { .. }));
        assert!(msg.contains("expected 91 frames"), "{msg}");
        assert!(msg.contains("short-one"), "{msg}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let mut bytes = jsonl(&[static_sample(InteractionLabel::Waving)]);
        bytes.extend_from_slice(b"{not json}\n");
        match parse_jsonl(&bytes[..], &OcclusionRule::default()) {
            Err(CaptureError::Parse { line, .. }) => assert_eq!(line, 92),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_a_label_error() {
        let text = String::from_utf8(jsonl(&[static_sample(InteractionLabel::Waving)])).unwrap();
        let text = text.replacen("\"waving\"", "\"moonwalk\"", 1);
        match parse_jsonl(text.as_bytes(), &OcclusionRule::default()) {
            Err(CaptureError::Label { line: 1, label }) => assert_eq!(label, "moonwalk"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_confidence_is_a_parse_error() {
        let text = String::from_utf8(jsonl(&[static_sample(InteractionLabel::Waving)])).unwrap();
        let text = text.replacen(",3.0]", ",7.0]", 1);
        assert!(matches!(
            parse_jsonl(text.as_bytes(), &OcclusionRule::default()),
            Err(CaptureError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let mut a = static_sample(InteractionLabel::Laughing);
        a.frames[3].bodies[0].joints[5] = Vec3::new(0.1 + 0.2, -1e-300, 1234.567890123);
        a.frames[40].bodies.pop();
        a.occluded_frames.insert(40);
        a.occluded_frames.insert(41);
        let mut b = static_sample(InteractionLabel::TwirlingHair);
        b.sample_id = "second".into();
        let samples = vec![a, b];
        let bytes = encode_binary(&samples);
        assert_eq!(&bytes[..8], CAPTURE_MAGIC);
        let back = parse_capture_bytes(&bytes, &OcclusionRule::default()).unwrap();
        assert_eq!(back, samples);
        let back = parse_capture_bytes(&jsonl(&samples), &OcclusionRule::default()).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let bytes = encode_binary(&[static_sample(InteractionLabel::Laughing)]);
        for cut in [9, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(parse_capture_bytes(&bytes[..cut], &OcclusionRule::default()).is_err());
        }
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = vec![static_sample(InteractionLabel::Hugging)];
        for name in ["a.dyad", "a.jsonl"] {
            let p = dir.path().join(name);
            write_capture(&p, &s).unwrap();
            assert_eq!(parse_capture(&p).unwrap(), s);
        }
    }
}
