use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const SIL: usize = 0;
pub const WAIT: usize = 1;
pub const NONE: usize = 2;
pub const UNSPEC: usize = 3;
pub const SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; SPECIALS] = ["<SIL>", "<WAIT>", "<NONE>", "<UNSPEC>"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VocabError {
    #[error("target size {target} must be at least {min} (specials plus one)")]
    TargetTooSmall { target: usize, min: usize },
    #[error("target size {target} exceeds current size {size}")]
    TargetTooLarge { target: usize, size: usize },
    #[error("expected {expected} embedding rows of width {dim}, got {actual}")]
    Embeddings { expected: usize, dim: usize, actual: String },
    #[error("vocabulary file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Token → embedding-row map. Ids 0..4 are the reserved specials; corpus
/// tokens follow in lexicographic order. After merging, several tokens may
/// share one embedding row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabData", into = "VocabData")]
pub struct VocabMap {
    tokens: Vec<String>,
    counts: Vec<u64>,
    lookup: Vec<usize>,
    rows: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    counts: Vec<u64>,
    lookup: Vec<usize>,
}

impl From<VocabData> for VocabMap {
    fn from(d: VocabData) -> Self {
        Self::assemble(d.tokens, d.counts, d.lookup)
    }
}

impl From<VocabMap> for VocabData {
    fn from(v: VocabMap) -> Self {
        VocabData {
            tokens: v.tokens,
            counts: v.counts,
            lookup: v.lookup,
        }
    }
}

impl VocabMap {
    fn assemble(tokens: Vec<String>, counts: Vec<u64>, lookup: Vec<usize>) -> Self {
        let rows = lookup.iter().max().map_or(0, |m| m + 1);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            counts,
            lookup,
            rows,
            index,
        }
    }

    /// One embedding row per distinct token, plus the specials.
    pub fn from_counts<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tally: BTreeMap<&str, u64> = BTreeMap::new();
        for t in tokens {
            *tally.entry(t).or_default() += 1;
        }
        let mut names: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; SPECIALS];
        for (t, c) in tally {
            if SPECIAL_TOKENS.contains(&t) {
                continue;
            }
            names.push(t.to_string());
            counts.push(c);
        }
        let lookup = (0..names.len()).collect();
        Self::assemble(names, counts, lookup)
    }

    /// Embedding row for `token`; tokens never seen map to UNSPEC.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).map_or(UNSPEC, |&i| self.lookup[i])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Number of embedding rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of known tokens, specials included.
    pub fn tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, original_id: usize) -> &str {
        &self.tokens[original_id]
    }

    /// Occurrence count per embedding row (merged counts accumulate).
    pub fn row_counts(&self) -> Vec<u64> {
        let mut c = vec![0; self.rows];
        for (i, &r) in self.lookup.iter().enumerate() {
            c[r] += self.counts[i];
        }
        c
    }

    /// `token \t id \t count \t row` lines, preceded by `#` comment lines.
    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            for line in c.lines() {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s.push_str("# token\tid\tcount\tmerged_into\n");
        for i in 0..self.tokens.len() {
            s.push_str(&format!("{}\t{}\t{}\t{}\n", self.tokens[i], i, self.counts[i], self.lookup[i]));
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        let mut lookup = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| VocabError::Parse {
                line: n + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            let id: usize = f[1].parse().map_err(|_| err("bad id"))?;
            if id != tokens.len() {
                return Err(err("ids must be consecutive from 0"));
            }
            tokens.push(f[0].to_string());
            counts.push(f[2].parse().map_err(|_| err("bad count"))?);
            lookup.push(f[3].parse().map_err(|_| err("bad merged_into"))?);
        }
        if tokens.len() < SPECIALS || (0..SPECIALS).any(|i| tokens[i] != SPECIAL_TOKENS[i] || lookup[i] != i) {
            return Err(VocabError::Parse {
                line: 0,
                msg: "special tokens must occupy ids 0..4".into(),
            });
        }
        Ok(Self::assemble(tokens, counts, lookup))
    }
}

fn cosine_distance(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot / (na * nb)
}

/// Greedy merge over embedding rows. Returns, for every row, the index of
/// the row it ends up in after compaction. Rows below `SPECIALS` never merge.
///
/// Each step removes the lowest-count non-special row (ties: highest index)
/// and folds its count into its nearest surviving non-special row by cosine
/// distance (ties: lowest index).
pub fn merge_plan(embeddings: &[Vec<f64>], counts: &[u64], target: usize) -> Result<Vec<usize>, VocabError> {
    merge_rows(embeddings, counts, target).map(|(plan, _)| plan)
}

/// Merge plan plus the surviving original rows in compacted order.
fn merge_rows(embeddings: &[Vec<f64>], counts: &[u64], target: usize) -> Result<(Vec<usize>, Vec<usize>), VocabError> {
    let n = embeddings.len();
    if counts.len() != n {
        return Err(VocabError::Embeddings {
            expected: counts.len(),
            dim: embeddings.first().map_or(0, Vec::len),
            actual: format!("{n} rows"),
        });
    }
    if target < SPECIALS + 1 {
        return Err(VocabError::TargetTooSmall {
            target,
            min: SPECIALS + 1,
        });
    }
    if target > n {
        return Err(VocabError::TargetTooLarge { target, size: n });
    }
    let norms: Vec<f64> = embeddings.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut alive = vec![true; n];
    let mut count = counts.to_vec();
    let mut parent: Vec<usize> = (0..n).collect();
    let nearest = |i: usize, alive: &[bool]| -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in SPECIALS..n {
            if j == i || !alive[j] {
                continue;
            }
            let d = cosine_distance(&embeddings[i], &embeddings[j], norms[i], norms[j]);
            if d < best.0 {
                best = (d, j);
            }
        }
        best.1
    };
    let mut nn = vec![usize::MAX; n];
    if target < n {
        for i in SPECIALS..n {
            nn[i] = nearest(i, &alive);
        }
    }
    let mut queue: BTreeSet<(u64, Reverse<usize>)> = (SPECIALS..n).map(|i| (count[i], Reverse(i))).collect();
    let mut size = n;
    while size > target {
        let (cx, Reverse(x)) = queue.pop_first().expect("non-special rows remain");
        let y = nn[x];
        alive[x] = false;
        parent[x] = y;
        queue.remove(&(count[y], Reverse(y)));
        count[y] += cx;
        queue.insert((count[y], Reverse(y)));
        size -= 1;
        if size > target {
            for i in SPECIALS..n {
                if alive[i] && nn[i] == x {
                    nn[i] = nearest(i, &alive);
                }
            }
        }
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let mut new_id = vec![usize::MAX; n];
    for (k, &i) in survivors.iter().enumerate() {
        new_id[i] = k;
    }
    let plan = (0..n)
        .map(|i| {
            let mut r = i;
            while parent[r] != r {
                r = parent[r];
            }
            new_id[r]
        })
        .collect();
    Ok((plan, survivors))
}

/// Shrinks `vocab` to `target` embedding rows. `embeddings` holds one row
/// per current embedding row of `vocab`. Returns the merged map and the
/// surviving embedding rows.
pub fn merge_vocab(vocab: &VocabMap, embeddings: &[Vec<f64>], target: usize) -> Result<(VocabMap, Vec<Vec<f64>>), VocabError> {
    let dim = embeddings.first().map_or(0, Vec::len);
    if embeddings.len() != vocab.rows() || embeddings.iter().any(|e| e.len() != dim) {
        return Err(VocabError::Embeddings {
            expected: vocab.rows(),
            dim,
            actual: format!("{} rows", embeddings.len()),
        });
    }
    let (plan, survivors) = merge_rows(embeddings, &vocab.row_counts(), target)?;
    let lookup = vocab.lookup.iter().map(|&r| plan[r]).collect();
    let kept = survivors.iter().map(|&r| embeddings[r].clone()).collect();
    Ok((VocabMap::assemble(vocab.tokens.clone(), vocab.counts.clone(), lookup), kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_are_reserved() {
        let v = VocabMap::from_counts(["b", "a", "b"]);
        assert_eq!(v.rows(), 6);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        assert_eq!(v.id("zzz"), UNSPEC);
        assert_eq!(v.row_counts(), vec![0, 0, 0, 0, 1, 2]);
    }

    #[test]
    fn identity_at_current_size() {
        let v = VocabMap::from_counts(["a", "b", "c"]);
        let e: Vec<Vec<f64>> = (0..v.rows()).map(|i| vec![i as f64, 1.0]).collect();
        let (m, kept) = merge_vocab(&v, &e, v.rows()).unwrap();
        assert_eq!(m, v);
        assert_eq!(kept, e);
    }

    #[test]
    fn duplicate_embedding_merges() {
        // three regular tokens, two with identical direction; drop one row
        let v = VocabMap::from_counts(["a", "a", "b", "c", "c", "c"]);
        let mut e = vec![vec![0.0, 0.0]; 4];
        e.push(vec![1.0, 0.0]); // a
        e.push(vec![0.0, 1.0]); // b (rarest)
        e.push(vec![0.0, 2.0]); // c, same direction as b
        let (m, kept) = merge_vocab(&v, &e, 6).unwrap();
        assert_eq!(m.rows(), 6);
        assert_eq!(m.id("b"), m.id("c"));
        assert_ne!(m.id("a"), m.id("c"));
        assert_eq!(m.row_counts()[m.id("c")], 4);
        assert_eq!(kept[m.id("c")], vec![0.0, 2.0]);
    }

    #[test]
    fn target_bounds() {
        let v = VocabMap::from_counts(["a", "b"]);
        let e = vec![vec![1.0]; v.rows()];
        assert_eq!(
            merge_vocab(&v, &e, 4).unwrap_err(),
            VocabError::TargetTooSmall { target: 4, min: 5 }
        );
        assert!(merge_vocab(&v, &e, 7).is_err());
        let (m, _) = merge_vocab(&v, &e, 5).unwrap();
        assert_eq!(m.id("a"), m.id("b"));
        assert_eq!(m.id("a"), 4);
    }

    #[test]
    fn tsv_round_trip() {
        let v = VocabMap::from_counts(["x", "y", "y"]);
        let e = vec![vec![1.0, 0.5]; v.rows()];
        let (m, _) = merge_vocab(&v, &e, 5).unwrap();
        let text = m.to_tsv(&["seed 3".into()]);
        assert!(text.starts_with("# seed 3\n"));
        assert_eq!(VocabMap::from_tsv(&text).unwrap(), m);
        assert!(VocabMap::from_tsv("x\t0\t1\t0\n").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = VocabMap::from_counts(["x", "y"]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<VocabMap>(&s).unwrap(), v);
    }
}
