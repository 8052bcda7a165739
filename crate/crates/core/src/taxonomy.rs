//! Hypernym DAG and lowest-common-hypernym target words.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::SoftmaxDistribution;

/// Rooted DAG of words; edges point from a word to its hypernyms.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    words: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    depth: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetWord {
    pub word: String,
    /// Shortest hop count from the root.
    pub depth: usize,
    pub sources: Vec<String>,
    pub k: usize,
}

/// Parse `child<TAB>parent` lines. Blank lines and lines starting with `#`
/// are ignored.
pub fn parse_edge_tsv(text: &str) -> Result<Vec<(String, String)>> {
    let mut edges = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match fields.as_slice() {
            [child, parent] if !child.is_empty() && !parent.is_empty() => {
                edges.push((child.to_string(), parent.to_string()));
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected 'child<TAB>parent', got {line:?}",
                    n + 1
                )))
            }
        }
    }
    Ok(edges)
}

impl Taxonomy {
    /// Build and validate a taxonomy. Without a declared root, the unique
    /// word that has no hypernym becomes the root.
    pub fn from_edges(edges: &[(String, String)], root: Option<&str>) -> Result<Self> {
        let mut words: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |w: &str, words: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(w) {
                return i;
            }
            let i = words.len();
            index.insert(w.to_string(), i);
            words.push(w.to_string());
            i
        };
        let mut pairs = Vec::with_capacity(edges.len());
        for (c, p) in edges {
            let ci = intern(c, &mut words);
            let pi = intern(p, &mut words);
            pairs.push((ci, pi));
        }
        let declared = root.map(|r| intern(r, &mut words));
        drop(intern);

        let n = words.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (c, p) in pairs {
            if c == p {
                return Err(Error::Taxonomy(format!("cycle through '{}'", words[c])));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
                children[p].push(c);
            }
        }

        if let Some(w) = find_cycle(&parents) {
            return Err(Error::Taxonomy(format!("cycle through '{}'", words[w])));
        }

        let root = match declared {
            Some(r) => {
                if !parents[r].is_empty() {
                    return Err(Error::Taxonomy(format!(
                        "declared root '{}' has a hypernym",
                        words[r]
                    )));
                }
                r
            }
            None => {
                let tops: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
                match tops.as_slice() {
                    [r] => *r,
                    [] => return Err(Error::Taxonomy("taxonomy has no root".into())),
                    many => {
                        let names: Vec<&str> = many.iter().map(|&i| words[i].as_str()).collect();
                        return Err(Error::Taxonomy(format!(
                            "root is not unique: {}",
                            names.join(", ")
                        )));
                    }
                }
            }
        };

        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in &children[u] {
                if depth[c] == usize::MAX {
                    depth[c] = depth[u] + 1;
                    queue.push_back(c);
                }
            }
        }
        if let Some(orphan) = (0..n).find(|&i| depth[i] == usize::MAX) {
            return Err(Error::Taxonomy(format!(
                "'{}' does not reach the root '{}'",
                words[orphan], words[root]
            )));
        }

        Ok(Self {
            words,
            index,
            parents,
            children,
            root,
            depth,
        })
    }

    pub fn from_tsv(text: &str, root: Option<&str>) -> Result<Self> {
        Self::from_edges(&parse_edge_tsv(text)?, root)
    }

    pub fn load_tsv(path: impl AsRef<Path>, root: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, root)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push_str(&self.words[c]);
                out.push('\t');
                out.push_str(&self.words[p]);
                out.push('\n');
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.words[self.root]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("word '{word}' not in taxonomy")))
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn parents_of(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn depth(&self, word: &str) -> Result<usize> {
        Ok(self.depth[self.id(word)?])
    }

    /// Child → parent edges as id pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (c, p)))
            .collect()
    }

    /// Ids of `id` and all of its hypernyms.
    pub fn ancestor_ids(&self, id: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([id]);
        let mut stack = vec![id];
        while let Some(u) = stack.pop() {
            for &p in &self.parents[u] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// The word itself plus every hypernym reachable from it.
    pub fn ancestor_set(&self, word: &str) -> Result<BTreeSet<String>> {
        Ok(self
            .ancestor_ids(self.id(word)?)
            .into_iter()
            .map(|i| self.words[i].clone())
            .collect())
    }

    /// True when `hypernym` equals `word` or lies above it.
    pub fn is_hypernym_of(&self, hypernym: &str, word: &str) -> Result<bool> {
        let h = self.id(hypernym)?;
        Ok(self.ancestor_ids(self.id(word)?).contains(&h))
    }

    /// Deepest common ancestor of all `words`; equal depths resolve to the
    /// lexicographically smallest word.
    pub fn lowest_common_hypernym(&self, words: &[&str]) -> Result<TargetWord> {
        if words.is_empty() {
            return Err(Error::InvalidInput("no words given".into()));
        }
        let missing: Vec<&str> = words.iter().copied().filter(|w| !self.contains(w)).collect();
        if !missing.is_empty() {
            return Err(Error::NotFound(format!(
                "not in taxonomy: {}",
                missing.join(", ")
            )));
        }
        let mut common = self.ancestor_ids(self.index[words[0]]);
        for w in &words[1..] {
            let other = self.ancestor_ids(self.index[*w]);
            common.retain(|i| other.contains(i));
        }
        let best = common
            .into_iter()
            .max_by(|&a, &b| {
                self.depth[a]
                    .cmp(&self.depth[b])
                    .then_with(|| self.words[b].cmp(&self.words[a]))
            })
            .expect("root is a common ancestor");
        Ok(TargetWord {
            word: self.words[best].clone(),
            depth: self.depth[best],
            sources: words.iter().map(|w| w.to_string()).collect(),
            k: words.len(),
        })
    }

    /// Target word for a classifier output: the lowest common hypernym of
    /// the `k` most probable labels.
    pub fn select_target_word(&self, dist: &SoftmaxDistribution, k: usize) -> Result<TargetWord> {
        if k == 0 || k > dist.num_classes() {
            return Err(Error::InvalidInput(format!(
                "k must lie in 1..={}, got {k}",
                dist.num_classes()
            )));
        }
        let top: Vec<&str> = dist
            .top_k(k)
            .into_iter()
            .map(|i| dist.labels()[i].as_str())
            .collect();
        self.lowest_common_hypernym(&top)
    }
}

/// A node on some directed cycle of the parent graph, if any.
fn find_cycle(parents: &[Vec<usize>]) -> Option<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; parents.len()];
    for start in 0..parents.len() {
        if mark[start] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        mark[start] = Mark::Active;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[u].get(*next) {
                *next += 1;
                match mark[p] {
                    Mark::Active => return Some(p),
                    Mark::New => {
                        mark[p] = Mark::Active;
                        stack.push((p, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[u] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(c: &str, p: &str) -> (String, String) {
        (c.to_string(), p.to_string())
    }

    pub(crate) fn toy() -> Taxonomy {
        Taxonomy::from_edges(
            &[
                e("dog", "animal"),
                e("cat", "animal"),
                e("animal", "entity"),
                e("car", "artifact"),
                e("artifact", "entity"),
            ],
            Some("entity"),
        )
        .unwrap()
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn builds_toy_taxonomy() {
        let t = toy();
        assert_eq!(t.len(), 6);
        assert_eq!(t.root(), "entity");
        assert_eq!(t.depth("dog").unwrap(), 2);
        assert_eq!(t.depth("entity").unwrap(), 0);
    }

    #[test]
    fn detects_cycles() {
        let err = Taxonomy::from_edges(&[e("dog", "animal"), e("animal", "dog")], None).unwrap_err();
        match err {
            Error::Taxonomy(msg) => assert!(msg.contains("dog") || msg.contains("animal")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Taxonomy::from_edges(&[e("x", "x")], None).is_err());
        // cycle hanging below a valid root
        let r = Taxonomy::from_edges(
            &[e("a", "root"), e("b", "a"), e("c", "b"), e("a", "c")],
            Some("root"),
        );
        assert!(matches!(r, Err(Error::Taxonomy(_))));
    }

    #[test]
    fn detects_unreachable_and_ambiguous_roots() {
        let err = Taxonomy::from_edges(&[e("dog", "animal"), e("car", "artifact")], Some("animal"))
            .unwrap_err();
        assert!(err.to_string().contains("car") || err.to_string().contains("artifact"));
        let err = Taxonomy::from_edges(&[e("dog", "animal"), e("car", "artifact")], None)
            .unwrap_err();
        assert!(err.to_string().contains("not unique"));
    }

    #[test]
    fn empty_edges_with_root() {
        let t = Taxonomy::from_edges(&[], Some("entity")).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.ancestor_set("entity").unwrap(), set(&["entity"]));
    }

    #[test]
    fn ancestor_sets() {
        let t = toy();
        assert_eq!(t.ancestor_set("dog").unwrap(), set(&["dog", "animal", "entity"]));
        assert_eq!(t.ancestor_set("entity").unwrap(), set(&["entity"]));
        assert!(matches!(t.ancestor_set("fish"), Err(Error::NotFound(_))));

        let dag = Taxonomy::from_edges(
            &[
                e("dog", "pet"),
                e("dog", "canine"),
                e("pet", "animal"),
                e("canine", "carnivore"),
                e("carnivore", "animal"),
            ],
            None,
        )
        .unwrap();
        assert_eq!(
            dag.ancestor_set("dog").unwrap(),
            set(&["dog", "pet", "canine", "carnivore", "animal"])
        );
    }

    #[test]
    fn lowest_common_hypernym_examples() {
        let t = toy();
        assert_eq!(t.lowest_common_hypernym(&["dog", "cat"]).unwrap().word, "animal");
        assert_eq!(t.lowest_common_hypernym(&["dog", "car"]).unwrap().word, "entity");
        let same = t.lowest_common_hypernym(&["dog", "dog"]).unwrap();
        assert_eq!((same.word.as_str(), same.depth), ("dog", 2));
        assert_eq!(t.lowest_common_hypernym(&["dog", "animal"]).unwrap().word, "animal");
        assert!(t.lowest_common_hypernym(&[]).is_err());
    }

    #[test]
    fn equal_depth_ties_are_lexicographic() {
        let t = Taxonomy::from_edges(
            &[
                e("dog", "pet"),
                e("dog", "mammal"),
                e("cat", "pet"),
                e("cat", "mammal"),
                e("pet", "animal"),
                e("mammal", "animal"),
            ],
            None,
        )
        .unwrap();
        assert_eq!(t.lowest_common_hypernym(&["dog", "cat"]).unwrap().word, "mammal");
    }

    #[test]
    fn target_word_from_distribution() {
        let t = toy();
        let labels: std::sync::Arc<[String]> =
            vec!["dog".to_string(), "cat".to_string(), "car".to_string()].into();
        let d = SoftmaxDistribution::new(vec![0.45, 0.4, 0.15], labels.clone()).unwrap();
        assert_eq!(t.select_target_word(&d, 2).unwrap().word, "animal");
        let tw3 = t.select_target_word(&d, 3).unwrap();
        assert_eq!(tw3.word, "entity");
        assert_eq!(tw3.k, 3);
        assert_eq!(t.select_target_word(&d, 1).unwrap().word, "dog");
        assert!(t.select_target_word(&d, 4).is_err());

        let missing: std::sync::Arc<[String]> =
            vec!["dog".to_string(), "unicorn".to_string()].into();
        let d = SoftmaxDistribution::new(vec![0.5, 0.5], missing).unwrap();
        let err = t.select_target_word(&d, 2).unwrap_err();
        assert!(matches!(err, Error::NotFound(ref m) if m.contains("unicorn")));
    }

    #[test]
    fn tsv_parsing() {
        let text = "# toy\n\ndog\tanimal\ncat\tanimal\nanimal\tentity\n";
        let t = Taxonomy::from_tsv(text, None).unwrap();
        assert_eq!(t.root(), "entity");
        assert_eq!(t.len(), 4);
        assert!(parse_edge_tsv("dog animal\n").is_err());
        assert!(Taxonomy::from_tsv("", None).is_err());
        let back = Taxonomy::from_tsv(&t.to_tsv(), None).unwrap();
        assert_eq!(back.len(), t.len());
    }
}
