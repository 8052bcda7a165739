//! Knowledge base of asked questions and the answers collected for them.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qgen::QuestionRecord;
use crate::taxonomy::Taxonomy;
use crate::uncertainty::cosine_similarity;

pub const KB_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    Text { text: String },
    /// "Do not understand".
    NoAnswer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbRecord {
    pub question: QuestionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    /// Region features; they become an exemplar once a text answer arrives.
    pub features: Vec<f64>,
    #[serde(default)]
    pub answer: Option<Answer>,
    #[serde(default)]
    pub rating: Option<u8>,
    #[serde(default)]
    pub answered_at: Option<String>,
}

impl KbRecord {
    pub fn new(question: QuestionRecord, features: Vec<f64>, image_path: Option<String>) -> Self {
        Self {
            question,
            image_path,
            features,
            answer: None,
            rating: None,
            answered_at: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.question.id
    }

    pub fn is_answered(&self) -> bool {
        self.answer.is_some()
    }

    pub fn answer_text(&self) -> Option<&str> {
        match &self.answer {
            Some(Answer::Text { text }) => Some(text),
            _ => None,
        }
    }
}

/// A submitted answer: exactly one of `answer` and `no_answer`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerSubmission {
    pub record_id: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub no_answer: bool,
    #[serde(default)]
    pub rating: Option<u8>,
}

impl AnswerSubmission {
    pub fn to_answer(&self) -> Result<Answer> {
        let text = self.answer.as_deref().map(str::trim).filter(|t| !t.is_empty());
        match (text, self.no_answer) {
            (Some(t), false) => Ok(Answer::Text { text: t.to_string() }),
            (None, true) => Ok(Answer::NoAnswer),
            (Some(_), true) => Err(Error::InvalidInput(
                "give either an answer or no_answer, not both".into(),
            )),
            (None, false) => Err(Error::InvalidInput("answer text is empty".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionStats {
    pub total: usize,
    /// Records with a text answer.
    pub answered: usize,
    pub no_answer: usize,
    pub successful: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub known: Vec<String>,
    pub records: Vec<KbRecord>,
    pub version: u32,
}

impl KnowledgeBase {
    pub fn new(known: Vec<String>) -> Self {
        Self {
            known,
            records: Vec::new(),
            version: KB_VERSION,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let kb: Self = serde_json::from_str(text)?;
        kb.validate()?;
        Ok(kb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != KB_VERSION {
            return Err(Error::Data(format!("unsupported KB version {}", self.version)));
        }
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.id()) {
                return Err(Error::Data(format!("duplicate record id '{}'", r.id())));
            }
            if let Some(rating) = r.rating {
                if !(1..=5).contains(&rating) {
                    return Err(Error::Data(format!("record '{}' has rating {rating}", r.id())));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Load `path`, or start an empty KB when the file does not exist.
    pub fn load_or_new(path: impl AsRef<Path>, known: Vec<String>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new(known))
        }
    }

    /// Write to a temporary file next to `path`, then rename over it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        let text = serde_json::to_string_pretty(self)?;
        tmp.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&KbRecord> {
        self.records.iter().find(|r| r.id() == id)
    }

    /// Add a pending record. Returns `false` when a record with the same id
    /// is already present (nothing changes).
    pub fn enqueue(&mut self, record: KbRecord) -> bool {
        if self.get(record.id()).is_some() {
            return false;
        }
        self.records.push(record);
        true
    }

    /// Oldest record still waiting for an answer.
    pub fn next_unanswered(&self) -> Option<&KbRecord> {
        self.records.iter().find(|r| !r.is_answered())
    }

    pub fn ingest_answer(&mut self, submission: &AnswerSubmission, now: DateTime<Utc>) -> Result<&KbRecord> {
        let answer = submission.to_answer()?;
        if let Some(r) = submission.rating {
            if !(1..=5).contains(&r) {
                return Err(Error::InvalidInput(format!("rating must lie in 1..=5, got {r}")));
            }
        }
        let record = self
            .records
            .iter_mut()
            .find(|r| r.question.id == submission.record_id)
            .ok_or_else(|| Error::NotFound(format!("no record '{}'", submission.record_id)))?;
        if record.is_answered() {
            return Err(Error::Conflict(format!(
                "record '{}' is already answered",
                submission.record_id
            )));
        }
        record.answer = Some(answer);
        record.rating = submission.rating;
        record.answered_at = Some(now.to_rfc3339_opts(SecondsFormat::Millis, true));
        Ok(record)
    }

    /// True when an answered exemplar with the same target word has region
    /// features more than `threshold` cosine-similar to `features`.
    pub fn is_duplicate(&self, features: &[f64], target_word: &str, threshold: f64) -> bool {
        self.records.iter().any(|r| {
            r.answer_text().is_some()
                && r.question.target_word == target_word
                && cosine_similarity(&r.features, features) > threshold
        })
    }

    pub fn stats(&self, taxonomy: Option<&Taxonomy>) -> AcquisitionStats {
        acquisition_stats(&self.records, &self.known, taxonomy)
    }
}

/// Words an answer must avoid to count as new knowledge: the known classes
/// and, when a taxonomy is given, all of their hypernyms.
pub fn excluded_answers(known: &[String], taxonomy: Option<&Taxonomy>) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = known.iter().map(|k| k.trim().to_lowercase()).collect();
    if let Some(t) = taxonomy {
        for k in known {
            if let Ok(anc) = t.ancestor_set(k) {
                out.extend(anc);
            }
        }
    }
    out
}

/// Counts over `records`; a record is successful when its text answer is
/// outside [`excluded_answers`] and its rating is at least 4.
pub fn acquisition_stats(records: &[KbRecord], known: &[String], taxonomy: Option<&Taxonomy>) -> AcquisitionStats {
    let excluded = excluded_answers(known, taxonomy);
    let mut s = AcquisitionStats {
        total: records.len(),
        ..Default::default()
    };
    for r in records {
        match &r.answer {
            Some(Answer::Text { text }) => {
                s.answered += 1;
                if r.rating.is_some_and(|x| x >= 4) && !excluded.contains(&text.trim().to_lowercase()) {
                    s.successful += 1;
                }
            }
            Some(Answer::NoAnswer) => s.no_answer += 1,
            None => {}
        }
    }
    s
}
