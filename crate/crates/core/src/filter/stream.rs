use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::jsonl;

pub const STREAM_FORMAT: &str = "aqua-stream";

#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    Image(PathBuf),
    Features(FeatureVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub source: FrameSource,
    pub byte_size: u64,
    /// Whether the downstream model gets this frame right, when known.
    pub correct: Option<bool>,
}

/// Frames in stream order with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameStream {
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extractor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
    byte_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correct: Option<bool>,
}

impl FrameStream {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::invalid("frame stream", format!("duplicate frame id {}", f.frame_id)));
            }
        }
        Ok(FrameStream { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.frames.iter().map(|f| f.byte_size).sum()
    }

    pub fn write<W: Write>(&self, w: &mut W, fingerprint: Option<&str>) -> Result<()> {
        let io = |e| Error::io("stream output", e);
        let header = Header {
            format: STREAM_FORMAT.into(),
            version: 1,
            config_fingerprint: fingerprint.map(str::to_string),
        };
        jsonl::write_line(w, &header).map_err(io)?;
        for f in &self.frames {
            let (image, extractor_id, features) = match &f.source {
                FrameSource::Image(p) => (Some(p.clone()), None, None),
                FrameSource::Features(v) => (None, Some(v.extractor_id.clone()), Some(v.values.clone())),
            };
            let line = Line {
                frame_id: f.frame_id.clone(),
                image,
                extractor_id,
                features,
                byte_size: f.byte_size,
                correct: f.correct,
            };
            jsonl::write_line(w, &line).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Relative image paths are resolved against `base`.
    pub fn read<R: BufRead>(reader: R, label: &str, base: &Path) -> Result<Self> {
        let Some((_, lines)) = jsonl::read::<Header, Line, _>(reader, label, STREAM_FORMAT)? else {
            return Ok(FrameStream::default());
        };
        let frames = lines
            .into_iter()
            .map(|l| {
                let source = match (l.image, l.features) {
                    (Some(p), None) => FrameSource::Image(if p.is_absolute() { p } else { base.join(p) }),
                    (None, Some(values)) => {
                        let ex = l.extractor_id.ok_or_else(|| {
                            Error::invalid("frame stream", format!("{} has features but no extractor_id", l.frame_id))
                        })?;
                        FrameSource::Features(FeatureVector::new(l.frame_id.clone(), ex, values)?)
                    }
                    _ => {
                        return Err(Error::invalid(
                            "frame stream",
                            format!("{} needs exactly one of image or features", l.frame_id),
                        ))
                    }
                };
                Ok(Frame { frame_id: l.frame_id, source, byte_size: l.byte_size, correct: l.correct })
            })
            .collect::<Result<Vec<_>>>()?;
        FrameStream::new(frames)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::read(std::io::BufReader::new(file), &path.display().to_string(), base)
    }

    pub fn save(&self, path: &Path, fingerprint: Option<&str>) -> Result<()> {
        let mut w = jsonl::create(path)?;
        self.write(&mut w, fingerprint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_resolution() {
        let s = FrameStream::new(vec![
            Frame {
                frame_id: "f0".into(),
                source: FrameSource::Image("imgs/f0.png".into()),
                byte_size: 100,
                correct: Some(true),
            },
            Frame {
                frame_id: "f1".into(),
                source: FrameSource::Features(FeatureVector::new("f1", "nss-v1", vec![0.5; 3]).unwrap()),
                byte_size: 50,
                correct: None,
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        s.write(&mut buf, None).unwrap();
        let back = FrameStream::read(&buf[..], "mem", Path::new("/data")).unwrap();
        assert_eq!(back.frames()[0].source, FrameSource::Image("/data/imgs/f0.png".into()));
        assert_eq!(back.frames()[1], s.frames()[1]);
        assert_eq!(back.total_bytes(), 150);
    }

    #[test]
    fn rejects_duplicates_and_ambiguity() {
        let f = Frame { frame_id: "a".into(), source: FrameSource::Image("x".into()), byte_size: 1, correct: None };
        assert!(FrameStream::new(vec![f.clone(), f]).is_err());
        let text = concat!(r#"{"format":"aqua-stream","version":1}"#, "\n", r#"{"frame_id":"a","byte_size":1}"#, "\n");
        assert!(FrameStream::read(text.as_bytes(), "mem", Path::new(".")).is_err());
    }
}
