use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::DatasetError;

pub const META_FORMAT: &str = "dreamkit-episodes";
pub const META_VERSION: u32 = 1;

/// Contiguous run of frames belonging to one episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    pub length: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// How unknown `meta.json` fields are treated on load.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetaMode {
    /// Unknown fields are an error.
    #[default]
    Strict,
    /// Unknown fields are kept in [`DatasetMeta::extras`] and written back on
    /// repack.
    Lax,
}

/// Contents of `meta.json`. The field set is described by
/// `schemas/meta.schema.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub tokens_per_frame: usize,
    pub codebook_size: u64,
    pub contact_codebook_size: u64,
    pub frame_count: usize,
    pub frame_rate: f64,
    pub n_joints: usize,
    pub has_reward: bool,
    pub segments: Vec<Segment>,
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

impl DatasetMeta {
    pub fn parse(bytes: &[u8], mode: MetaMode) -> Result<Self, DatasetError> {
        let meta: DatasetMeta = serde_json::from_slice(bytes).map_err(DatasetError::Meta)?;
        if mode == MetaMode::Strict && !meta.extras.is_empty() {
            return Err(DatasetError::UnknownMetaFields(
                meta.extras.keys().cloned().collect(),
            ));
        }
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("meta serializes");
        out.push(b'\n');
        out
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |m: String| Err(DatasetError::Invalid(m));
        if self.format != META_FORMAT {
            return invalid(format!(
                "format is {:?}, expected {META_FORMAT:?}",
                self.format
            ));
        }
        if self.version != META_VERSION {
            return invalid(format!("unsupported version {}", self.version));
        }
        if self.tokens_per_frame == 0 {
            return invalid("tokens_per_frame must be positive".into());
        }
        if self.codebook_size == 0 || self.codebook_size > u64::from(u32::MAX) + 1 {
            return invalid(format!(
                "codebook_size {} outside 1..=2^32",
                self.codebook_size
            ));
        }
        if self.contact_codebook_size == 0 || self.contact_codebook_size > u64::from(u32::MAX) + 1 {
            return invalid(format!(
                "contact_codebook_size {} outside 1..=2^32",
                self.contact_codebook_size
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return invalid("frame_rate must be positive".into());
        }
        validate_segments(&self.segments, self.frame_count)
    }
}

/// Segments must be non-empty, ordered, contiguous from 0 and cover exactly
/// `frame_count` frames.
pub fn validate_segments(segments: &[Segment], frame_count: usize) -> Result<(), DatasetError> {
    let mut cursor = 0usize;
    for (i, s) in segments.iter().enumerate() {
        if s.length == 0 {
            return Err(DatasetError::Invalid(format!("segment {i} is empty")));
        }
        if s.start != cursor {
            return Err(DatasetError::Invalid(format!(
                "segment {i} starts at {}, expected {cursor}",
                s.start
            )));
        }
        cursor = s.end();
    }
    if cursor != frame_count {
        return Err(DatasetError::Invalid(format!(
            "segments cover {cursor} frames, frame_count is {frame_count}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetMeta {
        DatasetMeta {
            format: META_FORMAT.into(),
            version: META_VERSION,
            tokens_per_frame: 16,
            codebook_size: 256,
            contact_codebook_size: 256,
            frame_count: 5,
            frame_rate: 50.0,
            n_joints: 7,
            has_reward: false,
            segments: vec![
                Segment {
                    start: 0,
                    length: 2,
                },
                Segment {
                    start: 2,
                    length: 3,
                },
            ],
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn strict_rejects_and_lax_preserves_unknown_fields() {
        let mut v: Value = serde_json::from_slice(&sample().to_json()).unwrap();
        v["scenario"] = "flashlight_box".into();
        let bytes = serde_json::to_vec(&v).unwrap();
        match DatasetMeta::parse(&bytes, MetaMode::Strict) {
            Err(DatasetError::UnknownMetaFields(f)) => assert_eq!(f, vec!["scenario".to_string()]),
            other => panic!("{other:?}"),
        }
        let lax = DatasetMeta::parse(&bytes, MetaMode::Lax).unwrap();
        assert_eq!(lax.extras["scenario"], "flashlight_box");
        let again: Value = serde_json::from_slice(&lax.to_json()).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = DatasetMeta::parse(b"{\"format\": ", MetaMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::Meta(_)));
    }

    #[test]
    fn segment_rules() {
        assert!(validate_segments(
            &[Segment {
                start: 0,
                length: 4
            }],
            4
        )
        .is_ok());
        assert!(validate_segments(&[], 0).is_ok());
        assert!(validate_segments(
            &[Segment {
                start: 1,
                length: 3
            }],
            4
        )
        .is_err());
        assert!(validate_segments(
            &[Segment {
                start: 0,
                length: 3
            }],
            4
        )
        .is_err());
        assert!(validate_segments(
            &[
                Segment {
                    start: 0,
                    length: 2
                },
                Segment {
                    start: 1,
                    length: 2
                }
            ],
            3
        )
        .is_err());
        assert!(validate_segments(
            &[Segment {
                start: 0,
                length: 0
            }],
            0
        )
        .is_err());
    }
}
