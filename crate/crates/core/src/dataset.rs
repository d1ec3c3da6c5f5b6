//! Tagging-record ingestion: parsing, tag filtering, dense re-indexing and
//! the per-user train/validation/test split.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::{self, Stream};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty folksonomy")]
    EmptyFolksonomy,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("split manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("split manifest does not match the dataset: {0}")]
    ManifestMismatch(String),
}

/// One `(user, item, tag)` record exactly as it appears in the source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RawAssignment {
    pub user_id: u64,
    pub item_id: u64,
    pub tag_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FileFormat {
    /// Tab-separated with a single header line (the HetRec 2011 releases).
    #[default]
    HetRec,
    /// Tab-separated without a header.
    Headerless,
}

/// Reads `userID<TAB>itemID<TAB>tagID[<TAB>...]` lines. Columns past the
/// third are ignored, blank lines are skipped and CRLF endings are accepted.
pub fn parse_assignments<R: BufRead>(
    source: R,
    format: FileFormat,
) -> Result<Vec<RawAssignment>, DataError> {
    let skip = match format {
        FileFormat::HetRec => 1,
        FileFormat::Headerless => 0,
    };
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if idx < skip {
            continue;
        }
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let mut field = |name: &str| -> Result<u64, DataError> {
            let raw = cols.next().ok_or_else(|| DataError::Parse {
                line: line_no,
                message: format!("missing {name} column"),
            })?;
            raw.trim().parse::<u64>().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("{name} is not a non-negative integer: {raw:?}"),
            })
        };
        let user_id = field("userID")?;
        let item_id = field("itemID")?;
        let tag_id = field("tagID")?;
        records.push(RawAssignment {
            user_id,
            item_id,
            tag_id,
        });
    }
    Ok(records)
}

/// Keeps the records whose tag occurs at least `min_count` times, counting
/// raw occurrences before any deduplication. Order is preserved.
pub fn filter_tags(records: &[RawAssignment], min_count: usize) -> Vec<RawAssignment> {
    assert!(min_count >= 1, "min_count must be positive");
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.tag_id).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| counts[&r.tag_id] >= min_count)
        .copied()
        .collect()
}

/// Bijection between external identifiers and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityIndex {
    forward: HashMap<u64, usize>,
    reverse: Vec<u64>,
}

impl EntityIndex {
    pub fn from_external(ids: Vec<u64>) -> Result<Self, DataError> {
        let mut forward = HashMap::with_capacity(ids.len());
        for (dense, &ext) in ids.iter().enumerate() {
            if forward.insert(ext, dense).is_some() {
                return Err(DataError::ManifestMismatch(format!(
                    "external id {ext} listed twice"
                )));
            }
        }
        Ok(EntityIndex {
            forward,
            reverse: ids,
        })
    }

    fn intern(&mut self, external: u64) -> usize {
        let next = self.reverse.len();
        *self.forward.entry(external).or_insert_with(|| {
            self.reverse.push(external);
            next
        })
    }

    pub fn dense(&self, external: u64) -> Option<usize> {
        self.forward.get(&external).copied()
    }

    pub fn external(&self, dense: usize) -> u64 {
        self.reverse[dense]
    }

    /// External ids in dense order.
    pub fn externals(&self) -> &[u64] {
        &self.reverse
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: EntityIndex,
    pub items: EntityIndex,
    pub tags: EntityIndex,
}

/// A tagging record over dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub user: usize,
    pub tag: usize,
    pub item: usize,
}

impl Triple {
    pub fn new(user: usize, tag: usize, item: usize) -> Self {
        Triple { user, tag, item }
    }
}

/// Deduplicated, densely indexed tagging records.
#[derive(Debug, Clone)]
pub struct Folksonomy {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub triples: Vec<Triple>,
    pub id_maps: IdMap,
}

/// Re-indexes entities in order of first appearance and collapses duplicate records.
pub fn build_folksonomy(records: &[RawAssignment]) -> Result<Folksonomy, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyFolksonomy);
    }
    let mut ids = IdMap::default();
    let mut seen = HashSet::with_capacity(records.len());
    let mut triples = Vec::with_capacity(records.len());
    for r in records {
        let t = Triple {
            user: ids.users.intern(r.user_id),
            tag: ids.tags.intern(r.tag_id),
            item: ids.items.intern(r.item_id),
        };
        if seen.insert(t) {
            triples.push(t);
        }
    }
    Ok(Folksonomy {
        n_users: ids.users.len(),
        n_items: ids.items.len(),
        n_tags: ids.tags.len(),
        triples,
        id_maps: ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub n_assignments: usize,
    pub sparsity: f64,
}

pub fn compute_stats(f: &Folksonomy) -> DatasetStats {
    let cells = f.n_users as f64 * f.n_items as f64;
    DatasetStats {
        n_users: f.n_users,
        n_items: f.n_items,
        n_tags: f.n_tags,
        n_assignments: f.triples.len(),
        sparsity: 1.0 - f.triples.len() as f64 / cells,
    }
}

impl DatasetStats {
    /// Sparsity as a percentage string with two decimals, e.g. `99.20%`.
    pub fn sparsity_percent(&self) -> String {
        format!("{:.2}%", self.sparsity * 100.0)
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users\t{}", self.n_users)?;
        writeln!(f, "items\t{}", self.n_items)?;
        writeln!(f, "tags\t{}", self.n_tags)?;
        writeln!(f, "assignments\t{}", self.n_assignments)?;
        write!(f, "sparsity\t{}", self.sparsity_percent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(DataError::InvalidRatios(format!(
                "{parts:?} must all be > 0"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidRatios(format!("{parts:?} must sum to 1")));
        }
        Ok(())
    }

    /// `(train, validation, test)` pair counts for a user with `n` pairs.
    pub fn allocate(&self, n: usize) -> (usize, usize, usize) {
        if n == 0 {
            return (0, 0, 0);
        }
        // The epsilon absorbs representation error such as 0.6 * 5 = 3.0000000000000004.
        let n_train = ((self.train * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
        let rest = n - n_train;
        let val_share = self.validation / (self.validation + self.test);
        let n_val = ((rest as f64 * val_share + 1e-9).floor() as usize).min(rest);
        (n_train, n_val, rest - n_val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitName::Train),
            "validation" => Some(SplitName::Validation),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

/// The `(user, item)` pairs of each split, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPairs {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub train: Vec<(usize, usize)>,
    pub validation: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

const MANIFEST_MAGIC: &str = "#folkrec-split";

impl SplitPairs {
    pub fn get(&self, name: SplitName) -> &[(usize, usize)] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Items of `name` grouped per user; each list is sorted and deduplicated.
    pub fn items_by_user(&self, name: SplitName) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users];
        for &(u, i) in self.get(name) {
            out[u].push(i);
        }
        for items in &mut out {
            items.sort_unstable();
            items.dedup();
        }
        out
    }

    /// Writes a header line with entity counts, then one
    /// `split<TAB>user<TAB>item` line per pair.
    pub fn write_manifest<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{MANIFEST_MAGIC}\t{}\t{}\t{}",
            self.n_users, self.n_items, self.n_tags
        )?;
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for &(u, i) in self.get(name) {
                writeln!(out, "{}\t{u}\t{i}", name.as_str())?;
            }
        }
        Ok(())
    }

    pub fn read_manifest<R: BufRead>(source: R) -> Result<Self, DataError> {
        let mut lines = source.lines();
        let header = lines.next().transpose()?.ok_or(DataError::Manifest {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.trim_end_matches('\r');
        let parts: Vec<&str> = header.split('\t').collect();
        let bad_header = || DataError::Manifest {
            line: 1,
            message: format!("expected `{MANIFEST_MAGIC}<TAB>users<TAB>items<TAB>tags`"),
        };
        if parts.len() != 4 || parts[0] != MANIFEST_MAGIC {
            return Err(bad_header());
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| bad_header());
        let mut pairs = SplitPairs {
            n_users: count(parts[1])?,
            n_items: count(parts[2])?,
            n_tags: count(parts[3])?,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let err = |message: String| DataError::Manifest {
                line: line_no,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            }
            let name = SplitName::parse(cols[0])
                .ok_or_else(|| err(format!("unknown split name {:?}", cols[0])))?;
            let u: usize = cols[1]
                .parse()
                .map_err(|_| err(format!("bad user index {:?}", cols[1])))?;
            let i: usize = cols[2]
                .parse()
                .map_err(|_| err(format!("bad item index {:?}", cols[2])))?;
            if u >= pairs.n_users || i >= pairs.n_items {
                return Err(err(format!("pair ({u}, {i}) out of range")));
            }
            match name {
                SplitName::Train => pairs.train.push((u, i)),
                SplitName::Validation => pairs.validation.push((u, i)),
                SplitName::Test => pairs.test.push((u, i)),
            }
        }
        for v in [&mut pairs.train, &mut pairs.validation, &mut pairs.test] {
            v.sort_unstable();
        }
        Ok(pairs)
    }
}

/// Train/validation/test partition of a folksonomy by `(user, item)` pair.
/// Every triple travels with its pair.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub id_maps: IdMap,
    pub train: Vec<Triple>,
    pub validation: Vec<Triple>,
    pub test: Vec<Triple>,
    pub pairs: SplitPairs,
    pub train_pairs: HashSet<(usize, usize)>,
}

impl SplitDataset {
    /// Rebuilds a split from a frozen pair assignment.
    pub fn from_pairs(f: &Folksonomy, pairs: SplitPairs) -> Result<Self, DataError> {
        if (pairs.n_users, pairs.n_items, pairs.n_tags) != (f.n_users, f.n_items, f.n_tags) {
            return Err(DataError::ManifestMismatch(format!(
                "manifest counts {}/{}/{} vs dataset {}/{}/{}",
                pairs.n_users, pairs.n_items, pairs.n_tags, f.n_users, f.n_items, f.n_tags
            )));
        }
        let mut assignment: HashMap<(usize, usize), SplitName> = HashMap::new();
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for &p in pairs.get(name) {
                if assignment.insert(p, name).is_some() {
                    return Err(DataError::ManifestMismatch(format!(
                        "pair {p:?} assigned more than once"
                    )));
                }
            }
        }
        let mut out = SplitDataset {
            n_users: f.n_users,
            n_items: f.n_items,
            n_tags: f.n_tags,
            id_maps: f.id_maps.clone(),
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            train_pairs: pairs.train.iter().copied().collect(),
            pairs,
        };
        let mut covered = HashSet::new();
        for &t in &f.triples {
            let key = (t.user, t.item);
            let name = *assignment.get(&key).ok_or_else(|| {
                DataError::ManifestMismatch(format!("pair {key:?} missing from manifest"))
            })?;
            covered.insert(key);
            match name {
                SplitName::Train => out.train.push(t),
                SplitName::Validation => out.validation.push(t),
                SplitName::Test => out.test.push(t),
            }
        }
        if covered.len() != assignment.len() {
            return Err(DataError::ManifestMismatch(
                "manifest lists pairs absent from the dataset".into(),
            ));
        }
        Ok(out)
    }

    pub fn triples(&self, name: SplitName) -> &[Triple] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

/// Per-user stratified random split of the unique `(user, item)` pairs.
///
/// Each user's pairs (in first-appearance order) are shuffled under the
/// `Split` substream of `seed`; `⌈train·n⌉` (at least one) go to train and
/// the remainder is divided between validation and test in proportion.
pub fn split(f: &Folksonomy, ratios: SplitRatios, seed: u64) -> Result<SplitDataset, DataError> {
    ratios.validate()?;
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); f.n_users];
    let mut seen = HashSet::new();
    for t in &f.triples {
        if seen.insert((t.user, t.item)) {
            per_user[t.user].push(t.item);
        }
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let mut pairs = SplitPairs {
        n_users: f.n_users,
        n_items: f.n_items,
        n_tags: f.n_tags,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (u, items) in per_user.iter_mut().enumerate() {
        items.shuffle(&mut rng);
        let (n_train, n_val, _) = ratios.allocate(items.len());
        for (rank, &i) in items.iter().enumerate() {
            let target = if rank < n_train {
                &mut pairs.train
            } else if rank < n_train + n_val {
                &mut pairs.validation
            } else {
                &mut pairs.test
            };
            target.push((u, i));
        }
    }
    for v in [&mut pairs.train, &mut pairs.validation, &mut pairs.test] {
        v.sort_unstable();
    }
    SplitDataset::from_pairs(f, pairs)
}
