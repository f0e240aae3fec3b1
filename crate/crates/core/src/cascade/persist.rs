//! Model file (`GCFM`), little-endian throughout:
//!
//! ```text
//! "GCFM" | version u8 = 1 | payload_len u64 | payload | crc32 u32
//! ```
//!
//! The CRC-32 covers every byte before it. The payload holds, in order: the
//! config echo, the label mapping, `base_dim`, `n_classes`, the layers (each
//! four fold-ensembles of learner parameters), the recorded layer
//! accuracies and `best_layer_index`. Trees are stored as node arrays: a tag
//! byte, then either `feature u32, threshold f64, left u32, right u32` or
//! the leaf payload (`K x f64` distribution, or one `f64` score).

use std::path::Path;

use crate::atomic::write_atomic;
use crate::cascade::{CascadeConfig, CascadeLayer, CascadeModel, FoldEnsemble, N_LEARNERS};
use crate::dataset::LabelMapping;
use crate::error::{Error, Result};
use crate::learners::{
    BoostedTrees, Classifier, FittedLearner, Forest, LearnerConfig, LearnerKind, LogisticModel, MaxFeatures,
    Node, Tree, SIMPLEX_TOLERANCE,
};

pub const MODEL_MAGIC: &[u8; 4] = b"GCFM";
pub const MODEL_VERSION: u8 = 0x01;
const PREAMBLE_LEN: usize = 4 + 1 + 8;
const NO_DEPTH_LIMIT: u32 = u32::MAX;

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::InvalidData(format!("{v} does not fit the model file's u32 fields")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

fn kind_tag(kind: LearnerKind) -> u8 {
    match kind {
        LearnerKind::RandomForest => 0,
        LearnerKind::ExtraTrees => 1,
        LearnerKind::BoostedTrees => 2,
        LearnerKind::Logistic => 3,
    }
}

fn encode_learner_config(e: &mut Encoder, cfg: &LearnerConfig) -> Result<()> {
    e.u8(kind_tag(cfg.kind));
    e.u32(cfg.n_trees)?;
    match cfg.max_depth {
        Some(d) if d < NO_DEPTH_LIMIT as usize => e.u32(d)?,
        _ => e.u32(NO_DEPTH_LIMIT as usize)?,
    }
    e.u32(cfg.min_samples_leaf)?;
    match cfg.max_features {
        MaxFeatures::Sqrt => {
            e.u8(0);
            e.u32(0)?;
        }
        MaxFeatures::All => {
            e.u8(1);
            e.u32(0)?;
        }
        MaxFeatures::Count(c) => {
            e.u8(2);
            e.u32(c)?;
        }
    }
    e.u8(u8::from(cfg.bootstrap));
    e.f64(cfg.learning_rate);
    e.u32(cfg.n_rounds)?;
    e.f64(cfg.l2_penalty);
    e.u32(cfg.max_iterations)?;
    e.u64(cfg.seed);
    Ok(())
}

fn encode_tree<L>(e: &mut Encoder, tree: &Tree<L>, leaf: impl Fn(&mut Encoder, &L)) -> Result<()> {
    e.u32(tree.nodes().len())?;
    for node in tree.nodes() {
        match node {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                e.u8(0);
                e.u32(*feature)?;
                e.f64(*threshold);
                e.u32(*left)?;
                e.u32(*right)?;
            }
            Node::Leaf(value) => {
                e.u8(1);
                leaf(e, value);
            }
        }
    }
    Ok(())
}

fn encode_learner(e: &mut Encoder, model: &FittedLearner) -> Result<()> {
    e.u8(kind_tag(model.kind()));
    e.u32(model.n_features())?;
    e.u32(model.n_classes())?;
    match model {
        FittedLearner::RandomForest(f) | FittedLearner::ExtraTrees(f) => {
            e.u32(f.trees().len())?;
            for tree in f.trees() {
                encode_tree(e, tree, |e, dist: &Vec<f64>| e.f64s(dist))?;
            }
        }
        FittedLearner::BoostedTrees(b) => {
            e.u32(b.rounds().len())?;
            for round in b.rounds() {
                for tree in round {
                    encode_tree(e, tree, |e, v: &f64| e.f64(*v))?;
                }
            }
        }
        FittedLearner::Logistic(m) => {
            e.f64s(m.means());
            e.f64s(m.scales());
            e.f64s(m.weights());
        }
    }
    Ok(())
}

/// Canonical byte encoding: equal models give equal bytes.
pub fn encode_model(model: &CascadeModel) -> Result<Vec<u8>> {
    let mut e = Encoder { buf: Vec::new() };
    let cfg = &model.config;
    e.u32(cfg.k_folds)?;
    e.u32(cfg.max_layers)?;
    e.u32(cfg.patience)?;
    e.f64(cfg.improvement_epsilon);
    e.u64(cfg.seed);
    for learner in &cfg.learners {
        encode_learner_config(&mut e, learner)?;
    }

    e.u32(model.label_mapping.n_classes())?;
    for &o in model.label_mapping.originals() {
        e.u64(o as u64);
    }
    e.u32(model.base_dim)?;
    e.u32(model.n_classes)?;

    e.u32(model.layers.len())?;
    for layer in &model.layers {
        e.u32(layer.input_dim)?;
        for ensemble in &layer.ensembles {
            e.u32(ensemble.models().len())?;
            for m in ensemble.models() {
                encode_learner(&mut e, m)?;
            }
        }
    }
    for layer in &model.layers {
        e.f64(layer.accuracy);
    }
    e.u32(model.best_layer_index)?;

    let payload = e.buf;
    let mut out = Vec::with_capacity(PREAMBLE_LEN + payload.len() + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: String,
}

impl<'a> Decoder<'a> {
    fn enter(&mut self, section: impl Into<String>) {
        self.section = section.into();
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                section: self.section.clone(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads `n` items of at least `min_size` bytes each; the count is
    /// checked against the remaining input before allocating.
    fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u32()?;
        if n.saturating_mul(min_size) > self.remaining() {
            return Err(Error::Truncated {
                section: self.section.clone(),
            });
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Truncated {
            section: self.section.clone(),
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn invalid(&self, what: impl std::fmt::Display) -> Error {
        Error::BadModelFile(format!("section `{}`: {what}", self.section))
    }
}

fn decode_kind(d: &mut Decoder) -> Result<LearnerKind> {
    match d.u8()? {
        0 => Ok(LearnerKind::RandomForest),
        1 => Ok(LearnerKind::ExtraTrees),
        2 => Ok(LearnerKind::BoostedTrees),
        3 => Ok(LearnerKind::Logistic),
        t => Err(d.invalid(format!("unknown learner tag {t}"))),
    }
}

fn decode_learner_config(d: &mut Decoder) -> Result<LearnerConfig> {
    let kind = decode_kind(d)?;
    let n_trees = d.u32()?;
    let max_depth = match d.u32()? {
        x if x == NO_DEPTH_LIMIT as usize => None,
        x => Some(x),
    };
    let min_samples_leaf = d.u32()?;
    let max_features = match (d.u8()?, d.u32()?) {
        (0, _) => MaxFeatures::Sqrt,
        (1, _) => MaxFeatures::All,
        (2, c) => MaxFeatures::Count(c),
        (t, _) => return Err(d.invalid(format!("unknown max_features tag {t}"))),
    };
    let bootstrap = d.u8()? != 0;
    Ok(LearnerConfig {
        kind,
        n_trees,
        max_depth,
        min_samples_leaf,
        max_features,
        bootstrap,
        learning_rate: d.f64()?,
        n_rounds: d.u32()?,
        l2_penalty: d.f64()?,
        max_iterations: d.u32()?,
        seed: d.u64()?,
    })
}

fn decode_tree<L>(
    d: &mut Decoder,
    n_features: usize,
    mut leaf: impl FnMut(&mut Decoder) -> Result<L>,
) -> Result<Tree<L>> {
    let n_nodes = d.count(2)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        nodes.push(match d.u8()? {
            0 => Node::Split {
                feature: d.u32()?,
                threshold: d.f64()?,
                left: d.u32()?,
                right: d.u32()?,
            },
            1 => Node::Leaf(leaf(d)?),
            t => return Err(d.invalid(format!("unknown node tag {t}"))),
        });
    }
    Tree::from_nodes(nodes, n_features).map_err(|e| d.invalid(e))
}

fn decode_distribution(d: &mut Decoder, k: usize) -> Result<Vec<f64>> {
    let dist = d.f64s(k)?;
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(d.invalid("leaf distribution off the probability simplex"));
    }
    Ok(dist)
}

fn decode_learner(d: &mut Decoder, expected: LearnerKind) -> Result<FittedLearner> {
    let kind = decode_kind(d)?;
    if kind != expected {
        return Err(d.invalid(format!("expected {expected}, found {kind}")));
    }
    let n_features = d.u32()?;
    let k = d.u32()?;
    let model = match kind {
        LearnerKind::RandomForest | LearnerKind::ExtraTrees => {
            let n_trees = d.count(4)?;
            let trees = (0..n_trees)
                .map(|_| decode_tree(d, n_features, |d| decode_distribution(d, k)))
                .collect::<Result<Vec<_>>>()?;
            let forest = Forest::from_trees(trees, n_features, k).map_err(|e| d.invalid(e))?;
            if kind == LearnerKind::RandomForest {
                FittedLearner::RandomForest(forest)
            } else {
                FittedLearner::ExtraTrees(forest)
            }
        }
        LearnerKind::BoostedTrees => {
            let n_rounds = d.count(4 * k)?;
            let mut rounds = Vec::with_capacity(n_rounds);
            for _ in 0..n_rounds {
                let round = (0..k)
                    .map(|_| decode_tree(d, n_features, |d| d.f64()))
                    .collect::<Result<Vec<_>>>()?;
                rounds.push(round);
            }
            FittedLearner::BoostedTrees(
                BoostedTrees::from_rounds(rounds, n_features, k).map_err(|e| d.invalid(e))?,
            )
        }
        LearnerKind::Logistic => {
            let means = d.f64s(n_features)?;
            let scales = d.f64s(n_features)?;
            let weights = d.f64s(k * (n_features + 1))?;
            FittedLearner::Logistic(
                LogisticModel::from_parts(k, means, scales, weights).map_err(|e| d.invalid(e))?,
            )
        }
    };
    Ok(model)
}

fn decode_payload(d: &mut Decoder) -> Result<CascadeModel> {
    d.enter("config");
    let k_folds = d.u32()?;
    let max_layers = d.u32()?;
    let patience = d.u32()?;
    let improvement_epsilon = d.f64()?;
    let seed = d.u64()?;
    let mut learners = Vec::with_capacity(N_LEARNERS);
    for _ in 0..N_LEARNERS {
        learners.push(decode_learner_config(d)?);
    }
    let config = CascadeConfig {
        k_folds,
        learners: learners.try_into().expect("four learner configs"),
        max_layers,
        patience,
        improvement_epsilon,
        seed,
    };

    d.enter("label mapping");
    let n_labels = d.count(8)?;
    let originals = (0..n_labels)
        .map(|_| d.u64().map(|o| o as usize))
        .collect::<Result<Vec<_>>>()?;
    let label_mapping = LabelMapping::from_originals(originals.clone());
    if label_mapping.originals() != originals.as_slice() {
        return Err(d.invalid("labels must be strictly increasing"));
    }

    d.enter("dimensions");
    let base_dim = d.u32()?;
    let n_classes = d.u32()?;
    let n_layers = d.count(4)?;

    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        d.enter(format!("layer {l}"));
        let input_dim = d.u32()?;
        let mut ensembles = Vec::with_capacity(N_LEARNERS);
        for kind in LearnerKind::LAYER_ORDER {
            d.enter(format!("layer {l} / {kind}"));
            let n_folds = d.count(9)?;
            let mut models = Vec::with_capacity(n_folds);
            for f in 0..n_folds {
                d.enter(format!("layer {l} / {kind} / fold {f}"));
                models.push(decode_learner(d, kind)?);
            }
            ensembles.push(FoldEnsemble::new(models).map_err(|e| d.invalid(e))?);
        }
        layers.push(CascadeLayer {
            ensembles,
            accuracy: f64::NAN,
            input_dim,
        });
    }

    d.enter("layer accuracies");
    for layer in &mut layers {
        layer.accuracy = d.f64()?;
    }
    d.enter("best layer index");
    let best_layer_index = d.u32()?;

    Ok(CascadeModel {
        config,
        label_mapping,
        base_dim,
        n_classes,
        layers,
        best_layer_index,
    })
}

pub fn decode_model(bytes: &[u8]) -> Result<CascadeModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::BadModelFile("wrong magic bytes, expected GCFM".into()));
    }
    if bytes.len() < 5 {
        return Err(Error::Truncated {
            section: "version".into(),
        });
    }
    if bytes[4] != MODEL_VERSION {
        return Err(Error::BadModelFile(format!(
            "version {:#04x} is not supported (expected {MODEL_VERSION:#04x})",
            bytes[4]
        )));
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(Error::Truncated {
            section: "payload length".into(),
        });
    }
    let declared = u64::from_le_bytes(bytes[5..PREAMBLE_LEN].try_into().expect("8 bytes"));
    let payload_end = usize::try_from(declared)
        .ok()
        .and_then(|n| n.checked_add(PREAMBLE_LEN))
        .ok_or_else(|| Error::BadModelFile("payload length overflows".into()))?;
    let complete = bytes.len() >= payload_end + 4;
    if complete {
        if bytes.len() > payload_end + 4 {
            return Err(Error::BadModelFile("trailing bytes after checksum".into()));
        }
        let stored = u32::from_le_bytes(bytes[payload_end..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[..payload_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
    }

    let payload = &bytes[PREAMBLE_LEN..payload_end.min(bytes.len())];
    let mut d = Decoder {
        bytes: payload,
        pos: 0,
        section: String::new(),
    };
    let model = decode_payload(&mut d)?;
    if !complete {
        let section = if bytes.len() < payload_end {
            "payload"
        } else {
            "checksum"
        };
        return Err(Error::Truncated {
            section: section.into(),
        });
    }
    if d.remaining() != 0 {
        return Err(Error::BadModelFile("unparsed bytes at end of payload".into()));
    }
    model.validate().map_err(|e| Error::BadModelFile(e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &CascadeModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CascadeModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
