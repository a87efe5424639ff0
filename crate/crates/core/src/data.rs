//! Quadruple datasets: parsing, vocabularies, reciprocal augmentation,
//! time resampling and 1-N target grouping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuadruple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub timestamp: NaiveDate,
}

/// Integer-indexed fact. `p >= |R|` marks a reciprocal relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub s: usize,
    pub p: usize,
    pub o: usize,
    pub t: usize,
}

impl Quadruple {
    pub const fn new(s: usize, p: usize, o: usize, t: usize) -> Self {
        Self { s, p, o, t }
    }

    pub fn key(&self) -> QueryKey {
        QueryKey {
            s: self.s,
            p: self.p,
            t: self.t,
        }
    }
}

/// A 1-N query `(s, p, ?, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryKey {
    pub s: usize,
    pub p: usize,
    pub t: usize,
}

pub fn parse_date(text: &str) -> Result<NaiveDate> {
    let text = text.trim();
    // chrono accepts some non-padded forms; the distribution format is strict.
    let well_formed = text.len() == 10
        && text.bytes().enumerate().all(|(i, b)| match i {
            4 | 7 => b == b'-',
            _ => b.is_ascii_digit(),
        });
    if !well_formed {
        return Err(Error::InvalidDate(text.to_string()));
    }
    NaiveDate::parse_from_str(text, DATE_FORMAT).map_err(|_| Error::InvalidDate(text.to_string()))
}

/// Reads tab-separated `subject \t predicate \t object \t YYYY-MM-DD` lines.
/// Blank lines are skipped; CRLF endings are accepted.
pub fn parse_quadruples<R: BufRead>(source: R) -> Result<Vec<RawQuadruple>> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated columns, found {}", fields.len()),
            });
        }
        if let Some(pos) = fields[..3].iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("column {} is empty", pos + 1),
            });
        }
        let timestamp = parse_date(fields[3]).map_err(|_| Error::Parse {
            line: line_no,
            message: format!("unparseable date `{}`", fields[3]),
        })?;
        out.push(RawQuadruple {
            subject: fields[0].to_string(),
            predicate: fields[1].to_string(),
            object: fields[2].to_string(),
            timestamp,
        });
    }
    Ok(out)
}

/// String <-> index bijection with indices in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    pub fn from_names(names: Vec<String>) -> Self {
        let mut out = Self::default();
        for name in names {
            out.intern(&name);
        }
        out
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub entities: Interner,
    /// Original relations only; reciprocal `p + |R|` is implicit.
    pub relations: Interner,
    /// Observed dates in ascending order.
    pub timestamps: Vec<NaiveDate>,
    timestamp_index: HashMap<NaiveDate, usize>,
}

/// SHA-256 digests of the three vocabularies, used to pin checkpoints to data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabHashes {
    pub entities: String,
    pub relations: String,
    pub timestamps: String,
}

impl Vocab {
    /// Entities and relations are numbered by first occurrence scanning
    /// train, then valid, then test; timestamps chronologically.
    pub fn build(splits: &[&[RawQuadruple]]) -> Self {
        let mut entities = Interner::default();
        let mut relations = Interner::default();
        let mut dates = BTreeSet::new();
        for split in splits {
            for q in split.iter() {
                entities.intern(&q.subject);
                relations.intern(&q.predicate);
                entities.intern(&q.object);
                dates.insert(q.timestamp);
            }
        }
        Self::from_parts(entities, relations, dates.into_iter().collect())
    }

    pub fn from_parts(entities: Interner, relations: Interner, mut timestamps: Vec<NaiveDate>) -> Self {
        timestamps.sort_unstable();
        timestamps.dedup();
        let timestamp_index = timestamps.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        Self {
            entities,
            relations,
            timestamps,
            timestamp_index,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_timestamps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn timestamp_of(&self, date: &NaiveDate) -> Option<usize> {
        self.timestamp_index.get(date).copied()
    }

    /// Relation name, with a `^-1` suffix for reciprocal indices.
    pub fn relation_name(&self, p: usize) -> Option<String> {
        let r = self.num_relations();
        if p < r {
            self.relations.name(p).map(str::to_string)
        } else {
            self.relations.name(p - r).map(|n| format!("{n}^-1"))
        }
    }

    pub fn hashes(&self) -> VocabHashes {
        fn digest<'a>(items: impl Iterator<Item = &'a str>) -> String {
            let mut h = Sha256::new();
            for item in items {
                h.update(item.as_bytes());
                h.update(b"\n");
            }
            hex::encode(h.finalize())
        }
        let dates: Vec<String> = self.timestamps.iter().map(|d| d.format(DATE_FORMAT).to_string()).collect();
        VocabHashes {
            entities: digest(self.entities.names().iter().map(String::as_str)),
            relations: digest(self.relations.names().iter().map(String::as_str)),
            timestamps: digest(dates.iter().map(String::as_str)),
        }
    }
}

pub fn index_quadruples(raw: &[RawQuadruple], vocab: &Vocab) -> Result<Vec<Quadruple>> {
    let entity = |name: &str| {
        vocab.entities.get(name).ok_or_else(|| Error::OutOfVocabulary {
            kind: "entity",
            token: name.to_string(),
        })
    };
    raw.iter()
        .map(|q| {
            let p = vocab.relations.get(&q.predicate).ok_or_else(|| Error::OutOfVocabulary {
                kind: "relation",
                token: q.predicate.clone(),
            })?;
            let t = vocab.timestamp_of(&q.timestamp).ok_or_else(|| Error::OutOfVocabulary {
                kind: "timestamp",
                token: q.timestamp.format(DATE_FORMAT).to_string(),
            })?;
            Ok(Quadruple::new(entity(&q.subject)?, p, entity(&q.object)?, t))
        })
        .collect()
}

/// Maps a relation index to its reciprocal partner in `[0, 2|R|)`.
pub fn reciprocal_relation(p: usize, num_relations: usize) -> usize {
    if p < num_relations {
        p + num_relations
    } else {
        p - num_relations
    }
}

/// Appends `(o, p + |R|, s, t)` for every input fact, after the originals.
pub fn augment_reciprocal(quads: &[Quadruple], num_relations: usize) -> Result<Vec<Quadruple>> {
    if let Some(q) = quads.iter().find(|q| q.p >= num_relations) {
        return Err(Error::AlreadyAugmented {
            relation: q.p,
            num_relations,
        });
    }
    let mut out = Vec::with_capacity(quads.len() * 2);
    out.extend_from_slice(quads);
    out.extend(
        quads
            .iter()
            .map(|q| Quadruple::new(q.o, q.p + num_relations, q.s, q.t)),
    );
    Ok(out)
}

/// Number of timestamp buckets after merging `rate` consecutive timestamps.
pub fn resampled_count(num_timestamps: usize, rate: usize) -> Result<usize> {
    if rate == 0 {
        return Err(Error::Config("time sampling rate must be >= 1".into()));
    }
    Ok(num_timestamps.div_ceil(rate))
}

/// Replaces every `t` by `floor(t / rate)`. Returns the new quadruples and
/// the coarsened timestamp count `ceil(|T| / rate)`.
pub fn resample_time(
    quads: &[Quadruple],
    num_timestamps: usize,
    rate: usize,
) -> Result<(Vec<Quadruple>, usize)> {
    let count = resampled_count(num_timestamps, rate)?;
    let out = quads
        .iter()
        .map(|q| Quadruple { t: q.t / rate, ..*q })
        .collect();
    Ok((out, count))
}

/// `(s, p, t)` -> every object observed with that key.
pub type TargetIndex = BTreeMap<QueryKey, BTreeSet<usize>>;

pub fn group_targets(quads: &[Quadruple]) -> TargetIndex {
    let mut index = TargetIndex::new();
    for q in quads {
        index.entry(q.key()).or_default().insert(q.o);
    }
    index
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_timestamps: usize,
    pub num_train: usize,
    pub num_valid: usize,
    pub num_test: usize,
    pub date_min: Option<String>,
    pub date_max: Option<String>,
}

pub fn dataset_stats(vocab: &Vocab, train: usize, valid: usize, test: usize) -> DatasetStats {
    let fmt = |d: &NaiveDate| d.format(DATE_FORMAT).to_string();
    DatasetStats {
        num_entities: vocab.num_entities(),
        num_relations: vocab.num_relations(),
        num_timestamps: vocab.num_timestamps(),
        num_train: train,
        num_valid: valid,
        num_test: test,
        date_min: vocab.timestamps.first().map(fmt),
        date_max: vocab.timestamps.last().map(fmt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Three indexed splits over a shared vocabulary, before augmentation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
}

fn split_path(dir: &Path, split: Split) -> Option<PathBuf> {
    let name = split.name();
    [name.to_string(), format!("{name}.txt"), format!("{name}.tsv")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

impl Dataset {
    /// Loads `train`, `valid` and `test` (optionally with `.txt`/`.tsv`) from `dir`.
    /// Only `train` is mandatory.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let read = |split: Split| -> Result<Vec<RawQuadruple>> {
            match split_path(dir, split) {
                Some(path) => {
                    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                    parse_quadruples(std::io::BufReader::new(file)).map_err(|e| match e {
                        Error::Parse { line, message } => Error::Parse {
                            line,
                            message: format!("{}: {message}", path.display()),
                        },
                        other => other,
                    })
                }
                None if split == Split::Train => Err(Error::io(
                    dir.join("train"),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "missing train split"),
                )),
                None => Ok(Vec::new()),
            }
        };
        let train = read(Split::Train)?;
        let valid = read(Split::Valid)?;
        let test = read(Split::Test)?;
        Self::from_raw(&train, &valid, &test)
    }

    pub fn from_raw(train: &[RawQuadruple], valid: &[RawQuadruple], test: &[RawQuadruple]) -> Result<Self> {
        let vocab = Vocab::build(&[train, valid, test]);
        Ok(Self {
            train: index_quadruples(train, &vocab)?,
            valid: index_quadruples(valid, &vocab)?,
            test: index_quadruples(test, &vocab)?,
            vocab,
        })
    }

    pub fn split(&self, split: Split) -> &[Quadruple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(&self.vocab, self.train.len(), self.valid.len(), self.test.len())
    }
}
