//! Word usages, rated instance pairs and the two task targets.
//!
//! Ratings are ordinal relatedness judgments in `1..=4` (1 = unrelated,
//! 4 = identical). Each instance yields up to two targets:
//!
//! - the median judgment (OGWiC), present only when the conventional median
//!   of the ratings is an integer;
//! - the mean absolute difference over all unordered annotator pairs
//!   (DisWiC), defined only with at least two ratings.
//!
//! Rows with an empty `ratings` field are accepted as unlabeled prediction
//! inputs and carry no target.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 4;

pub const USAGE_COLUMNS: [&str; 6] = [
    "usage_id",
    "lemma",
    "language",
    "target_start",
    "target_end",
    "context",
];
pub const INSTANCE_COLUMNS: [&str; 6] = [
    "instance_id",
    "lemma",
    "language",
    "usage_1",
    "usage_2",
    "ratings",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Median judgment classification, scored with ordinal alpha.
    Ogwic,
    /// Mean disagreement ranking, scored with Spearman's rho.
    Diswic,
}

impl Task {
    pub fn target(self, targets: &TaskTargets) -> Option<f64> {
        match self {
            Task::Ogwic => targets.median_label.map(f64::from),
            Task::Diswic => targets.mean_disagreement,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Ogwic => "krippendorff_alpha",
            Task::Diswic => "spearman_rho",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ogwic => "ogwic",
            Task::Diswic => "diswic",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ogwic" => Ok(Task::Ogwic),
            "diswic" => Ok(Task::Diswic),
            other => Err(Error::InvalidInput(format!(
                "unknown task `{other}` (expected ogwic or diswic)"
            ))),
        }
    }
}

/// A lemma occurring in one particular context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Usage {
    pub usage_id: String,
    pub lemma: String,
    pub language: String,
    /// Character offset (not byte offset) of the target, inclusive.
    pub target_start: usize,
    /// Character offset of the target, exclusive.
    pub target_end: usize,
    pub context: String,
}

impl Usage {
    pub fn validate(&self) -> Result<()> {
        let len = self.context.chars().count();
        if self.target_start >= self.target_end || self.target_end > len {
            return Err(Error::invalid_data(
                format!("usage {}", self.usage_id),
                format!(
                    "target span [{}, {}) is empty or outside a context of {len} characters",
                    self.target_start, self.target_end
                ),
            ));
        }
        Ok(())
    }

    pub fn target_text(&self) -> String {
        self.context
            .chars()
            .skip(self.target_start)
            .take(self.target_end - self.target_start)
            .collect()
    }

    /// Context length in whitespace-separated words.
    pub fn word_count(&self) -> usize {
        self.context.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTargets {
    pub median_label: Option<u8>,
    pub mean_disagreement: Option<f64>,
}

impl TaskTargets {
    pub fn from_ratings(ratings: &[u8]) -> Result<Self> {
        if ratings.is_empty() {
            return Ok(Self::default());
        }
        let median_label = median_label(ratings)?;
        let mean_disagreement = if ratings.len() >= 2 {
            Some(mean_pairwise_disagreement(ratings)?)
        } else {
            None
        };
        Ok(Self {
            median_label,
            mean_disagreement,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub instance_id: String,
    pub lemma: String,
    pub language: String,
    pub usage_1: String,
    pub usage_2: String,
    /// Empty for unlabeled rows.
    pub ratings: Vec<u8>,
    pub targets: TaskTargets,
}

impl Instance {
    pub fn new(
        instance_id: impl Into<String>,
        lemma: impl Into<String>,
        language: impl Into<String>,
        usage_1: impl Into<String>,
        usage_2: impl Into<String>,
        ratings: Vec<u8>,
    ) -> Result<Self> {
        let instance_id = instance_id.into();
        validate_ratings(&instance_id, &ratings)?;
        let targets = TaskTargets::from_ratings(&ratings)?;
        Ok(Self {
            instance_id,
            lemma: lemma.into(),
            language: language.into(),
            usage_1: usage_1.into(),
            usage_2: usage_2.into(),
            ratings,
            targets,
        })
    }

    pub fn is_labeled(&self) -> bool {
        !self.ratings.is_empty()
    }

    pub fn target(&self, task: Task) -> Option<f64> {
        task.target(&self.targets)
    }
}

fn validate_ratings(instance_id: &str, ratings: &[u8]) -> Result<()> {
    match ratings
        .iter()
        .find(|r| !(MIN_RATING..=MAX_RATING).contains(*r))
    {
        Some(bad) => Err(Error::invalid_data(
            format!("instance {instance_id}"),
            format!("rating {bad} outside {MIN_RATING}..={MAX_RATING}"),
        )),
        None => Ok(()),
    }
}

/// Median of the ratings if it is an integer, `None` otherwise.
///
/// For an even count the median is the mean of the two middle values, so
/// `[2, 3]` (median 2.5) has no label while `[1, 3]` has label 2.
pub fn median_label(ratings: &[u8]) -> Result<Option<u8>> {
    if ratings.is_empty() {
        return Err(Error::InvalidInput(
            "median of an empty rating list".into(),
        ));
    }
    validate_ratings("ratings", ratings)?;
    let mut sorted = ratings.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        return Ok(Some(sorted[n / 2]));
    }
    let (lo, hi) = (sorted[n / 2 - 1], sorted[n / 2]);
    // (lo + hi) / 2 is integral iff lo and hi have the same parity.
    if (lo + hi) % 2 == 0 {
        Ok(Some((lo + hi) / 2))
    } else {
        Ok(None)
    }
}

/// Mean absolute rating difference over all `n(n-1)/2` annotator pairs.
pub fn mean_pairwise_disagreement(ratings: &[u8]) -> Result<f64> {
    if ratings.len() < 2 {
        return Err(Error::TargetUndefined(format!(
            "mean pairwise disagreement needs at least 2 ratings, got {}",
            ratings.len()
        )));
    }
    validate_ratings("ratings", ratings)?;
    // Counting sort: sum over value pairs instead of rating pairs.
    let mut counts = [0u64; MAX_RATING as usize + 1];
    for &r in ratings {
        counts[r as usize] += 1;
    }
    let mut total = 0u64;
    for a in MIN_RATING..=MAX_RATING {
        for b in (a + 1)..=MAX_RATING {
            total += counts[a as usize] * counts[b as usize] * u64::from(b - a);
        }
    }
    let n = ratings.len() as u64;
    Ok(total as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DiscardCounts {
    /// Labeled instances without an integral median (excluded from OGWiC).
    pub no_median: usize,
    /// Labeled instances with a single rating (excluded from DisWiC).
    pub too_few_ratings: usize,
    pub unlabeled: usize,
}

/// Usages plus instances with their targets. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    usages: Vec<Usage>,
    usage_index: HashMap<String, usize>,
    instances: Vec<Instance>,
    discarded: DiscardCounts,
}

impl Dataset {
    pub fn new(usages: Vec<Usage>, instances: Vec<Instance>) -> Result<Self> {
        let mut usage_index = HashMap::with_capacity(usages.len());
        for (i, usage) in usages.iter().enumerate() {
            usage.validate()?;
            if usage_index.insert(usage.usage_id.clone(), i).is_some() {
                return Err(Error::invalid_data(
                    format!("usage {}", usage.usage_id),
                    "duplicate usage_id",
                ));
            }
        }

        let mut seen = HashSet::with_capacity(instances.len());
        let mut discarded = DiscardCounts::default();
        for inst in &instances {
            let ctx = || format!("instance {}", inst.instance_id);
            if !seen.insert(inst.instance_id.as_str()) {
                return Err(Error::invalid_data(ctx(), "duplicate instance_id"));
            }
            validate_ratings(&inst.instance_id, &inst.ratings)?;
            for usage_id in [&inst.usage_1, &inst.usage_2] {
                let usage = usage_index
                    .get(usage_id)
                    .map(|&i| &usages[i])
                    .ok_or_else(|| {
                        Error::invalid_data(ctx(), format!("dangling usage reference `{usage_id}`"))
                    })?;
                if usage.lemma != inst.lemma {
                    return Err(Error::invalid_data(
                        ctx(),
                        format!(
                            "usage `{usage_id}` has lemma `{}`, instance has `{}`",
                            usage.lemma, inst.lemma
                        ),
                    ));
                }
            }
            if !inst.is_labeled() {
                discarded.unlabeled += 1;
                continue;
            }
            if inst.targets.median_label.is_none() {
                discarded.no_median += 1;
            }
            if inst.targets.mean_disagreement.is_none() {
                discarded.too_few_ratings += 1;
            }
        }
        if discarded.no_median + discarded.too_few_ratings > 0 {
            log::info!(
                "{} instance(s) lack an integral median (excluded from OGWiC), \
                 {} have a single rating (excluded from DisWiC)",
                discarded.no_median,
                discarded.too_few_ratings
            );
        }

        Ok(Self {
            usages,
            usage_index,
            instances,
            discarded,
        })
    }

    pub fn usages(&self) -> &[Usage] {
        &self.usages
    }

    pub fn usage(&self, usage_id: &str) -> Option<&Usage> {
        self.usage_index.get(usage_id).map(|&i| &self.usages[i])
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn discarded(&self) -> DiscardCounts {
        self.discarded
    }

    /// Instances carrying the target of `task`, in file order.
    pub fn task_instances(&self, task: Task) -> impl Iterator<Item = &Instance> {
        self.instances
            .iter()
            .filter(move |inst| inst.target(task).is_some())
    }

    /// Instances a model for `task` should predict: those with the task's
    /// target plus unlabeled rows.
    pub fn prediction_instances(&self, task: Task) -> impl Iterator<Item = &Instance> {
        self.instances
            .iter()
            .filter(move |inst| !inst.is_labeled() || inst.target(task).is_some())
    }

    pub fn task_count(&self, task: Task) -> usize {
        self.task_instances(task).count()
    }

    /// Same usages, instances restricted to `language`.
    pub fn filter_language(&self, language: &str) -> Dataset {
        let instances: Vec<Instance> = self
            .instances
            .iter()
            .filter(|i| i.language == language)
            .cloned()
            .collect();
        Dataset::new(self.usages.clone(), instances)
            .expect("subset of a valid dataset is valid")
    }

    /// Languages of the instances, sorted.
    pub fn languages(&self) -> Vec<String> {
        self.instances
            .iter()
            .map(|i| i.language.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

pub fn load_dataset(usages_path: &Path, instances_path: &Path) -> Result<Dataset> {
    let usages = read_usages(usages_path)?;
    let instances = read_instances(instances_path)?;
    Dataset::new(usages, instances)
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let found: Vec<&str> = header.split('\t').collect();
    if found != columns {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                columns.join("\\t"),
                found.join("\\t")
            ),
        });
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(unescape_field).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_usages(path: &Path) -> Result<Vec<Usage>> {
    read_table(path, &USAGE_COLUMNS)?
        .into_iter()
        .map(|(line, mut f)| {
            let offset = |s: &str, name: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_error(path, line, format!("{name} `{s}` is not an offset")))
            };
            let target_start = offset(&f[3], "target_start")?;
            let target_end = offset(&f[4], "target_end")?;
            let usage = Usage {
                context: std::mem::take(&mut f[5]),
                language: std::mem::take(&mut f[2]),
                lemma: std::mem::take(&mut f[1]),
                usage_id: std::mem::take(&mut f[0]),
                target_start,
                target_end,
            };
            usage
                .validate()
                .map_err(|e| parse_error(path, line, e.to_string()))?;
            Ok(usage)
        })
        .collect()
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    read_table(path, &INSTANCE_COLUMNS)?
        .into_iter()
        .map(|(line, mut f)| {
            let ratings = parse_ratings(&f[5])
                .map_err(|m| parse_error(path, line, format!("instance {}: {m}", f[0])))?;
            Instance::new(
                std::mem::take(&mut f[0]),
                std::mem::take(&mut f[1]),
                std::mem::take(&mut f[2]),
                std::mem::take(&mut f[3]),
                std::mem::take(&mut f[4]),
                ratings,
            )
        })
        .collect()
}

fn parse_ratings(field: &str) -> std::result::Result<Vec<u8>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|r| {
            r.trim()
                .parse::<u8>()
                .map_err(|_| format!("rating `{r}` is not an integer"))
        })
        .collect()
}

pub fn write_usages(path: &Path, usages: &[Usage]) -> Result<()> {
    let mut out = fs::File::create(path).map(std::io::BufWriter::new)?;
    writeln!(out, "{}", USAGE_COLUMNS.join("\t"))?;
    for u in usages {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            escape_field(&u.usage_id),
            escape_field(&u.lemma),
            escape_field(&u.language),
            u.target_start,
            u.target_end,
            escape_field(&u.context)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut out = fs::File::create(path).map(std::io::BufWriter::new)?;
    writeln!(out, "{}", INSTANCE_COLUMNS.join("\t"))?;
    for i in instances {
        let ratings: Vec<String> = i.ratings.iter().map(u8::to_string).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            escape_field(&i.instance_id),
            escape_field(&i.lemma),
            escape_field(&i.language),
            escape_field(&i.usage_1),
            escape_field(&i.usage_2),
            ratings.join(",")
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// One row of the training-set statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageStats {
    pub language: String,
    pub unique_contexts: usize,
    pub unique_lemmas: usize,
    /// Mean context length in whitespace-separated words, rounded.
    pub context_length: u64,
    pub ogwic_instances: usize,
    pub diswic_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsTable {
    pub languages: Vec<LanguageStats>,
    /// Per-language mean of every column, rounded; `None` for an empty corpus.
    pub average: Option<LanguageStats>,
}

pub fn dataset_stats(dataset: &Dataset) -> StatsTable {
    #[derive(Default)]
    struct Acc<'a> {
        contexts: BTreeSet<&'a str>,
        lemmas: BTreeSet<&'a str>,
        ogwic: usize,
        diswic: usize,
    }

    let mut by_lang: BTreeMap<&str, Acc<'_>> = BTreeMap::new();
    for u in dataset.usages() {
        let acc = by_lang.entry(u.language.as_str()).or_default();
        acc.contexts.insert(u.context.as_str());
        acc.lemmas.insert(u.lemma.as_str());
    }
    for inst in dataset.instances() {
        let acc = by_lang.entry(inst.language.as_str()).or_default();
        acc.ogwic += usize::from(inst.targets.median_label.is_some());
        acc.diswic += usize::from(inst.targets.mean_disagreement.is_some());
    }

    let mut mean_lengths = Vec::with_capacity(by_lang.len());
    let languages: Vec<LanguageStats> = by_lang
        .into_iter()
        .map(|(language, acc)| {
            let words: usize = acc
                .contexts
                .iter()
                .map(|c| c.split_whitespace().count())
                .sum();
            let mean_len = if acc.contexts.is_empty() {
                0.0
            } else {
                words as f64 / acc.contexts.len() as f64
            };
            mean_lengths.push(mean_len);
            LanguageStats {
                language: language.to_string(),
                unique_contexts: acc.contexts.len(),
                unique_lemmas: acc.lemmas.len(),
                context_length: mean_len.round() as u64,
                ogwic_instances: acc.ogwic,
                diswic_instances: acc.diswic,
            }
        })
        .collect();

    let average = (!languages.is_empty()).then(|| {
        let k = languages.len() as f64;
        let avg = |f: &dyn Fn(&LanguageStats) -> usize| {
            (languages.iter().map(|s| f(s) as f64).sum::<f64>() / k).round() as usize
        };
        LanguageStats {
            language: "AVG".into(),
            unique_contexts: avg(&|s| s.unique_contexts),
            unique_lemmas: avg(&|s| s.unique_lemmas),
            context_length: (mean_lengths.iter().sum::<f64>() / k).round() as u64,
            ogwic_instances: avg(&|s| s.ogwic_instances),
            diswic_instances: avg(&|s| s.diswic_instances),
        }
    });

    StatsTable { languages, average }
}

impl StatsTable {
    pub const COLUMNS: [&'static str; 6] = [
        "language",
        "unique_contexts",
        "unique_lemmas",
        "context_length",
        "ogwic_instances",
        "diswic_instances",
    ];

    /// Header plus one row per language, then the `AVG` row.
    pub fn to_tsv(&self) -> String {
        let mut out = Self::COLUMNS.join("\t");
        out.push('\n');
        for row in self.languages.iter().chain(self.average.as_ref()) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                row.language,
                row.unique_contexts,
                row.unique_lemmas,
                row.context_length,
                row.ogwic_instances,
                row.diswic_instances
            ));
        }
        out
    }
}

/// Paths of the two TSV files making up one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPaths {
    pub usages: PathBuf,
    pub instances: PathBuf,
}

impl SplitPaths {
    pub fn load(&self) -> Result<Dataset> {
        load_dataset(&self.usages, &self.instances)
    }
}
