//! Word-vector tables and brute-force cosine neighbor search.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("`{0}` has no embedding")]
    OovQuery(String),
    #[error("embedding i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs; later duplicates replace earlier ones.
    pub fn from_entries<I>(name: &str, entries: I) -> Result<Self, EmbedError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = Self {
            name: name.to_string(),
            dim: 0,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        };
        for (word, vec) in entries {
            if table.dim == 0 {
                if vec.is_empty() {
                    return Err(EmbedError::DimensionMismatch(0, 0));
                }
                table.dim = vec.len();
            } else if vec.len() != table.dim {
                return Err(EmbedError::DimensionMismatch(table.dim, vec.len()));
            }
            table.insert(word, &vec);
        }
        if table.words.is_empty() {
            return Err(EmbedError::EmptyTable);
        }
        Ok(table)
    }

    /// Returns true if `word` replaced an existing entry.
    fn insert(&mut self, word: String, vec: &[f64]) -> bool {
        if let Some(&i) = self.index.get(&word) {
            self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vec);
            return true;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vec);
        false
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Writes the table in the text layout `load_embeddings` reads.
    pub fn write_text<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Parses `word v1 .. vd` lines. A leading `count dim` header is skipped.
pub fn read_embeddings<R: BufRead>(name: &str, reader: R) -> Result<EmbeddingTable, EmbedError> {
    let mut table = EmbeddingTable {
        name: name.to_string(),
        dim: 0,
        words: Vec::new(),
        index: HashMap::new(),
        vectors: Vec::new(),
    };
    let mut first_content = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let is_header = first_content && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok());
        first_content = false;
        if is_header {
            continue;
        }
        let format = |reason: String| EmbedError::Format { line: line_no, reason };
        if fields.len() < 2 {
            return Err(format("expected a word followed by at least one value".into()));
        }
        let vec = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| format(format!("bad value `{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if table.dim == 0 {
            table.dim = vec.len();
        } else if vec.len() != table.dim {
            return Err(format(format!("expected {} values, found {}", table.dim, vec.len())));
        }
        if table.insert(fields[0].to_string(), &vec) {
            log::warn!(
                "duplicate embedding for `{}` at line {line_no}; keeping the last",
                fields[0]
            );
        }
    }
    if table.words.is_empty() {
        return Err(EmbedError::EmptyTable);
    }
    Ok(table)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    let file = File::open(path)?;
    read_embeddings(&path.display().to_string(), BufReader::new(file))
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Up to `k` words from `candidates` most cosine-similar to `query`.
///
/// The query itself, words without an embedding and zero vectors are
/// skipped. Results are ordered by descending similarity, ties by word.
pub fn topk_similar<'a, I>(
    query: &str,
    candidates: I,
    k: usize,
    table: &EmbeddingTable,
) -> Result<Vec<(String, f64)>, EmbedError>
where
    I: IntoIterator<Item = &'a String>,
{
    let q = table
        .get(query)
        .ok_or_else(|| EmbedError::OovQuery(query.to_string()))?;
    let mut scored: Vec<(String, f64)> = Vec::new();
    for word in candidates {
        if word == query {
            continue;
        }
        let Some(v) = table.get(word) else { continue };
        match cosine(q, v) {
            Ok(s) => scored.push((word.clone(), s)),
            Err(EmbedError::ZeroVector) if v.iter().all(|&x| x == 0.0) => continue,
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.dedup_by(|a, b| a.0 == b.0);
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn table(text: &str) -> EmbeddingTable {
        read_embeddings("test", text.as_bytes()).unwrap()
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn parses_and_skips_header() {
        let t = table("2 3\ncat 1 0 0\ndog 0 1 0\n");
        assert_eq!((t.dim(), t.len()), (3, 2));
        assert_eq!(t.get("dog").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn inconsistent_dimension_is_format_error() {
        let r = read_embeddings("t", "a 1 2 3\nb 1 2\n".as_bytes());
        assert!(matches!(r, Err(EmbedError::Format { line: 2, .. })));
        assert!(matches!(
            read_embeddings("t", "".as_bytes()),
            Err(EmbedError::EmptyTable)
        ));
    }

    #[test]
    fn duplicate_keeps_last() {
        let t = table("a 1 2\nb 3 4\na 5 6\n");
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("a").unwrap(), &[5.0, 6.0]);
    }

    #[test]
    fn cosine_identities() {
        let x = [1.0, 2.0, -3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbedError::ZeroVector)));
    }

    #[test]
    fn topk_rules() {
        let t = table("q 1 0\ntwin 1 0\nnear 1 1\nfar -1 0\nother 0 1\n");
        assert!(topk_similar("q", &set(&["q"]), 3, &t).unwrap().is_empty());
        let r = topk_similar("q", &set(&["far", "near", "twin", "q", "missing"]), 10, &t).unwrap();
        let words: Vec<&str> = r.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["twin", "near", "far"]);
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        let two = topk_similar("q", &set(&["far", "near", "twin"]), 2, &t).unwrap();
        assert_eq!(two.len(), 2);
        assert!(matches!(
            topk_similar("nope", &set(&["q"]), 1, &t),
            Err(EmbedError::OovQuery(_))
        ));
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = table("q 1 0\nb 0 1\na 0 2\n");
        let r = topk_similar("q", &set(&["b", "a"]), 2, &t).unwrap();
        assert_eq!(r[0].0, "a");
    }
}
