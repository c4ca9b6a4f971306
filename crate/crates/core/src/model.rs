//! Trained model bundle, the training pipeline, and the TEGC1 file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TEGC1\0"  u16 version
//! section*   u32 byte length + payload, in order:
//!            vocabulary, templates, classes, config+metrics (JSON),
//!            example index (JSON), weights
//! u32        CRC32 of every preceding byte
//! ```
//!
//! String lists are `u32 count` then `u32 len + UTF-8` per string. A class
//! is `u64 frequency`, `u32 n` + n template ids, then its insertion and
//! deletion token lists. Weights are `u32 V, H, K` followed by f32 `W1`
//! (H×V), `b1`, `W2` (K×H), `b2`, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    evaluate, train, EpochStats, EvalReport, Network, NetworkConfig, Split, TrainError,
};
use crate::corpus::{Dataset, LabeledExample};
use crate::diagnostics::{ErrorGroup, TemplateRegistry};
use crate::encoder::{feature_tokens, FeatureVector, FeatureVocabulary};
use crate::repair::{ClassId, ClassKey, ClassTable, RepairTokenSet};
use crate::suggester::ExampleIndex;

pub const MAGIC: &[u8; 6] = b"TEGC1\0";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub train_size: usize,
    pub validation_size: usize,
    /// Evaluation on the held-out split; absent when it was empty.
    pub test: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vocab: FeatureVocabulary,
    pub classes: ClassTable,
    pub templates: TemplateRegistry,
    pub network: Network<f32>,
    pub config: NetworkConfig,
    pub metrics: ModelMetrics,
    pub examples: ExampleIndex,
}

pub fn example_tokens(ex: &LabeledExample) -> Vec<String> {
    feature_tokens(&ex.abstract_buggy, ex.error_templates.ids())
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: TrainedModel,
    pub split: Split,
}

/// Builds the vocabulary over all examples, trains the network, evaluates
/// it on the held-out split and indexes every example for suggestions.
pub fn train_model(dataset: &Dataset, config: &NetworkConfig) -> Result<TrainReport, TrainError> {
    if dataset.examples.is_empty() || dataset.classes.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let token_seqs: Vec<Vec<String>> = dataset.examples.iter().map(example_tokens).collect();
    let vocab = FeatureVocabulary::build(&token_seqs);
    let data: Vec<(FeatureVector, ClassId)> = token_seqs
        .iter()
        .zip(&dataset.examples)
        .map(|(toks, ex)| (vocab.vectorize(toks), ex.class_id))
        .collect();

    let outcome = train(&data, dataset.classes.len(), config)?;
    let test_items: Vec<(&FeatureVector, ClassId)> =
        outcome.split.test.iter().map(|&i| (&data[i].0, data[i].1)).collect();
    let test = (!test_items.is_empty()).then(|| evaluate(&outcome.network, &test_items));

    let metrics = ModelMetrics {
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        train_size: outcome.split.train.len(),
        validation_size: outcome.split.validation.len(),
        test,
    };
    let model = TrainedModel {
        vocab,
        classes: dataset.classes.clone(),
        templates: dataset.templates.clone(),
        network: outcome.network,
        config: config.clone(),
        metrics,
        examples: ExampleIndex::build(&dataset.examples),
    };
    Ok(TrainReport {
        model,
        split: outcome.split,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorKind {
    #[error("bad magic, expected \"TEGC1\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unexpected end of file")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model format error at byte {offset}: {kind}")]
pub struct FormatError {
    pub offset: usize,
    pub kind: FormatErrorKind,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Serialize, Deserialize)]
struct ConfigSection {
    config: NetworkConfig,
    metrics: ModelMetrics,
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn strs<'a>(&mut self, items: impl ExactSizeIterator<Item = &'a String>) {
        self.u32(items.len() as u32);
        for s in items {
            self.str(s);
        }
    }

    fn section(&mut self, body: impl FnOnce(&mut Encoder)) {
        let mut inner = Encoder { buf: Vec::new() };
        body(&mut inner);
        self.u32(inner.buf.len() as u32);
        self.buf.extend_from_slice(&inner.buf);
    }
}

/// Cursor over the file bytes that reports absolute offsets.
struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Decoder<'a> {
    fn err(&self, kind: FormatErrorKind) -> FormatError {
        FormatError {
            offset: self.pos,
            kind,
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> FormatError {
        self.err(FormatErrorKind::Invalid(msg.into()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.end - self.pos < n {
            return Err(self.err(FormatErrorKind::Truncated));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| FormatError {
            offset: start,
            kind: FormatErrorKind::Invalid("string is not UTF-8".into()),
        })
    }

    fn strs(&mut self) -> Result<Vec<String>, FormatError> {
        let n = self.u32()? as usize;
        // each string needs at least its 4-byte length
        if n > (self.end - self.pos) / 4 {
            return Err(self.err(FormatErrorKind::Truncated));
        }
        (0..n).map(|_| self.str()).collect()
    }

    /// Runs `body` on the next length-prefixed section, which it must
    /// consume exactly.
    fn section<T>(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Decoder<'a>) -> Result<T, FormatError>,
    ) -> Result<T, FormatError> {
        let len = self.u32()? as usize;
        if self.end - self.pos < len {
            return Err(self.err(FormatErrorKind::Truncated));
        }
        let mut inner = Decoder {
            bytes: self.bytes,
            pos: self.pos,
            end: self.pos + len,
        };
        let value = body(&mut inner)?;
        if inner.pos != inner.end {
            return Err(inner.invalid(format!("{} trailing bytes in {name} section", inner.end - inner.pos)));
        }
        self.pos = inner.end;
        Ok(value)
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T, FormatError> {
        let start = self.pos;
        let raw = self.take(self.end - self.pos)?;
        serde_json::from_slice(raw).map_err(|e| FormatError {
            offset: start,
            kind: FormatErrorKind::Invalid(e.to_string()),
        })
    }
}

impl TrainedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder { buf: Vec::new() };
        enc.buf.extend_from_slice(MAGIC);
        enc.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

        enc.section(|e| e.strs(self.vocab.tokens().iter()));
        enc.section(|e| e.strs(self.templates.patterns().iter()));
        enc.section(|e| {
            e.u32(self.classes.len() as u32);
            for class in self.classes.iter() {
                e.u64(class.frequency as u64);
                let ids = class.key.templates.ids();
                e.u32(ids.len() as u32);
                for &id in ids {
                    e.u32(id);
                }
                e.strs(class.key.repair.insertions.iter());
                e.strs(class.key.repair.deletions.iter());
            }
        });
        let config = ConfigSection {
            config: self.config.clone(),
            metrics: self.metrics.clone(),
        };
        enc.section(|e| e.buf.extend(serde_json::to_vec(&config).expect("config serializes")));
        enc.section(|e| e.buf.extend(serde_json::to_vec(&self.examples).expect("index serializes")));
        enc.section(|e| {
            e.u32(self.network.inputs() as u32);
            e.u32(self.network.hidden() as u32);
            e.u32(self.network.classes() as u32);
            for p in self.network.params() {
                e.buf.extend_from_slice(&p.to_le_bytes());
            }
        });

        let crc = crc32fast::hash(&enc.buf);
        enc.u32(crc);
        enc.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let header = MAGIC.len() + 2;
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(FormatError {
                offset: 0,
                kind: FormatErrorKind::BadMagic,
            });
        }
        if bytes.len() < header + 4 {
            return Err(FormatError {
                offset: bytes.len(),
                kind: FormatErrorKind::Truncated,
            });
        }
        let mut dec = Decoder {
            bytes,
            pos: MAGIC.len(),
            end: bytes.len() - 4,
        };
        let version = dec.u16()?;
        if version != FORMAT_VERSION {
            return Err(FormatError {
                offset: MAGIC.len(),
                kind: FormatErrorKind::UnsupportedVersion(version),
            });
        }
        let crc_at = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[crc_at..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..crc_at]);
        if stored != computed {
            return Err(FormatError {
                offset: crc_at,
                kind: FormatErrorKind::ChecksumMismatch { stored, computed },
            });
        }

        let vocab_tokens = dec.section("vocabulary", |d| d.strs())?;
        let patterns = dec.section("templates", |d| d.strs())?;
        let classes = dec.section("classes", |d| {
            let n = d.u32()? as usize;
            let mut out = Vec::new();
            for _ in 0..n {
                let frequency = d.u64()? as usize;
                let nt = d.u32()? as usize;
                if nt > (d.end - d.pos) / 4 {
                    return Err(d.err(FormatErrorKind::Truncated));
                }
                let ids: Vec<u32> = (0..nt).map(|_| d.u32()).collect::<Result<_, _>>()?;
                if ids.iter().any(|&id| id == 0 || id as usize > patterns.len()) {
                    return Err(d.invalid("class refers to an unknown template"));
                }
                let insertions = d.strs()?;
                let deletions = d.strs()?;
                let key = ClassKey::new(
                    ids.into_iter().collect::<ErrorGroup>(),
                    RepairTokenSet::new(insertions, deletions),
                );
                out.push((key, frequency));
            }
            Ok(out)
        })?;
        let ConfigSection { config, metrics } = dec.section("config", |d| d.json())?;
        let examples: ExampleIndex = dec.section("examples", |d| d.json())?;
        let network = dec.section("weights", |d| {
            let start = d.pos;
            let (v, h, k) = (d.u32()? as usize, d.u32()? as usize, d.u32()? as usize);
            if v != vocab_tokens.len() || k != classes.len() {
                return Err(FormatError {
                    offset: start,
                    kind: FormatErrorKind::Invalid(format!(
                        "weight shape V={v} K={k} does not match vocabulary {} / classes {}",
                        vocab_tokens.len(),
                        classes.len()
                    )),
                });
            }
            let count = crate::classifier::param_count(v, h, k);
            let raw = d.take(count.checked_mul(4).ok_or_else(|| d.invalid("weight count overflows"))?)?;
            let params = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Network::from_params(v, h, k, params).expect("length checked"))
        })?;
        if dec.pos != dec.end {
            return Err(dec.invalid("trailing bytes before checksum"));
        }

        Ok(TrainedModel {
            vocab: FeatureVocabulary::from_tokens(vocab_tokens),
            classes: ClassTable::from_classes(classes),
            templates: TemplateRegistry::from_patterns(patterns),
            network,
            config,
            metrics,
            examples,
        })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes())?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Ok(Self::from_bytes(&fs::read(path)?)?)
    }

    pub fn checksum(&self) -> u32 {
        let bytes = self.to_bytes();
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::param_count;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_model(seed: u64) -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = FeatureVocabulary::from_tokens(
            ["E_1", "E_2", "INT", "INVALID", "INT_=", "="].map(String::from).to_vec(),
        );
        let classes = ClassTable::from_classes(vec![
            (ClassKey::new([1].into_iter().collect(), RepairTokenSet::new([";"], Vec::<String>::new())), 40),
            (ClassKey::new([2].into_iter().collect(), RepairTokenSet::new(["INT"], ["INVALID"])), 12),
        ]);
        let params = (0..param_count(6, 4, 2)).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        TrainedModel {
            vocab,
            classes,
            templates: TemplateRegistry::from_patterns(vec![
                "expected □_1 after expression".into(),
                "use of undeclared identifier □_1".into(),
            ]),
            network: Network::from_params(6, 4, 2, params).unwrap(),
            config: NetworkConfig::default(),
            metrics: ModelMetrics {
                best_epoch: 1,
                history: vec![],
                train_size: 0,
                validation_size: 0,
                test: None,
            },
            examples: ExampleIndex::default(),
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let m = tiny_model(1);
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..6], MAGIC);
        let back = TrainedModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.classes, m.classes);
        assert_eq!(back.templates, m.templates);
        assert_eq!(back.network, m.network);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = tiny_model(2).to_bytes();
        bytes[0] = b'X';
        let err = TrainedModel::from_bytes(&bytes).unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.to_string().contains("\"TEGC1\""), "{err}");
    }

    #[test]
    fn rejects_truncation_and_corruption() {
        let bytes = tiny_model(3).to_bytes();
        for cut in [3, 8, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(TrainedModel::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        let err = TrainedModel::from_bytes(&flipped).unwrap_err();
        assert!(matches!(err.kind, FormatErrorKind::ChecksumMismatch { .. }));
        assert_eq!(err.offset, bytes.len() - 4);
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = tiny_model(4).to_bytes();
        bytes[6] = 9;
        let err = TrainedModel::from_bytes(&bytes).unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::UnsupportedVersion(9));
        assert_eq!(err.offset, 6);
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tegc");
        let m = tiny_model(5);
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.checksum(), m.checksum());
        assert!(matches!(
            TrainedModel::load(&dir.path().join("missing")),
            Err(ModelError::Io(_))
        ));
    }
}
