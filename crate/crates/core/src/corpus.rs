//! Question corpus records, JSON-lines I/O and the question filter.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposal::Region;
use crate::qgen::{detokenize, tokenize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub image: String,
    /// `[x_tl, y_tl, x_br, y_br]`.
    pub region: [u32; 4],
    pub target_word: String,
    pub question: String,
}

impl CorpusRecord {
    pub fn region(&self) -> Region {
        let [a, b, c, d] = self.region;
        Region::new(a, b, c, d)
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Data(format!("corpus line {}: {e}", n + 1)))
        })
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn corpus_to_jsonl(records: &[CorpusRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, corpus_to_jsonl(records)?).map_err(|e| Error::io(path, e))
}

pub const QUESTION_CAP: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub not_what: usize,
    pub what_color: usize,
    pub over_cap: usize,
}

/// Keep questions starting with "what" but not "what color", and at most
/// `cap` copies of each question (compared after tokenization). Input order
/// is preserved.
pub fn filter_corpus(records: &[CorpusRecord], cap: usize) -> (Vec<CorpusRecord>, FilterReport) {
    let mut report = FilterReport {
        input: records.len(),
        ..Default::default()
    };
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept = Vec::new();
    for r in records {
        let tokens = tokenize(&r.question);
        if tokens.first().map(String::as_str) != Some("what") {
            report.not_what += 1;
            continue;
        }
        if tokens.get(1).map(String::as_str) == Some("color") {
            report.what_color += 1;
            continue;
        }
        let count = seen.entry(detokenize(&tokens)).or_insert(0);
        if *count >= cap {
            report.over_cap += 1;
            continue;
        }
        *count += 1;
        kept.push(r.clone());
    }
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(q: &str) -> CorpusRecord {
        CorpusRecord {
            image: "img".into(),
            region: [0, 0, 4, 4],
            target_word: "dog".into(),
            question: q.into(),
        }
    }

    #[test]
    fn filter_rules() {
        let input = vec![
            rec("What is this dog?"),
            rec("Where is the dog?"),
            rec("What color is the dog?"),
            rec("what is this dog ?"),
            rec("Whatever"),
        ];
        let (kept, report) = filter_corpus(&input, 1);
        assert_eq!(kept, vec![input[0].clone()]);
        assert_eq!(
            report,
            FilterReport {
                input: 5,
                kept: 1,
                not_what: 2,
                what_color: 1,
                over_cap: 1
            }
        );
    }

    #[test]
    fn cap_of_fifty() {
        let input: Vec<CorpusRecord> = (0..60).map(|_| rec("what is it?")).collect();
        let (kept, report) = filter_corpus(&input, QUESTION_CAP);
        assert_eq!(kept.len(), 50);
        assert_eq!(report.over_cap, 10);
    }

    #[test]
    fn jsonl_round_trip() {
        let records = vec![rec("what is this ?"), rec("what kind of dog is this ?")];
        let text = corpus_to_jsonl(&records).unwrap();
        assert_eq!(parse_corpus(&text).unwrap(), records);
        assert!(text.lines().next().unwrap().contains(r#""region":[0,0,4,4]"#));
        let err = parse_corpus("{\"image\": 3}\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
