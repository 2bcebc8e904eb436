//! Keyed embedding tables and the word-vector text format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// A dense vector per string key (token or user id). Row order is the key
/// insertion order, which every constructor keeps deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    /// Whether a downstream trainer may update these rows (pretrained word
    /// vectors are typically frozen; user vectors always train).
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Rows initialized uniformly in `[-0.5/dim, 0.5/dim]`, the usual
    /// skip-gram input-vector init.
    pub fn random<R: Rng>(keys: Vec<String>, dim: usize, rng: &mut R) -> Result<Self> {
        let bound = 0.5 / dim as f64;
        let data = (0..keys.len() * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self::from_rows(keys, dim, data)
    }

    pub fn zeros(keys: Vec<String>, dim: usize) -> Result<Self> {
        let data = vec![0.0; keys.len() * dim];
        Self::from_rows(keys, dim, data)
    }

    pub fn from_rows(keys: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        if data.len() != keys.len() * dim {
            return Err(Error::ShapeMismatch {
                expected: vec![keys.len(), dim],
                got: vec![data.len()],
                context: "embedding table rows".into(),
            });
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::DuplicateToken {
                    token: k.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self {
            keys,
            index,
            dim,
            data,
            trainable: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in row order.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn id_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.id_of(key).map(|i| self.row(i))
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// Flat row-major view of all vectors.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Read the word-vector text format: an optional `<count> <dim>` header,
/// then one `token v1 … vd` line per entry. Headerless files infer the
/// dimension from their first line.
pub fn load_vectors(path: &Path) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path)?);
    let path_str = path.display().to_string();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path_str.clone(),
        line,
        msg,
    };

    let mut keys: Vec<String> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut declared: Option<(usize, usize)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();

        // A first line of exactly two integers is the header. A real entry
        // can't look like that: it would be a token with a single integer
        // component, which the headered format (count dim) shadows by design.
        if keys.is_empty() && declared.is_none() && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if d == 0 {
                    return Err(parse_err(lineno, "header declares dimension 0".into()));
                }
                declared = Some((count, d));
                dim = Some(d);
                continue;
            }
        }

        if fields.len() < 2 {
            return Err(parse_err(
                lineno,
                "expected a token followed by at least one value".into(),
            ));
        }
        let token = fields[0].to_string();
        let values = &fields[1..];
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {d} values, found {}", values.len()),
                ));
            }
            _ => {}
        }
        if seen.insert(token.clone(), lineno).is_some() {
            return Err(Error::DuplicateToken {
                token,
                line: lineno,
            });
        }
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad float {v:?}")))?;
            data.push(x);
        }
        keys.push(token);
    }

    let dim = dim.ok_or_else(|| Error::EmptyInput(format!("no vectors in {path_str}")))?;
    if let Some((count, _)) = declared {
        if count != keys.len() {
            return Err(Error::Parse {
                path: path_str,
                line: 1,
                msg: format!("header declares {count} entries, file has {}", keys.len()),
            });
        }
    }
    let mut table = EmbeddingTable::from_rows(keys, dim, data)?;
    table.trainable = false;
    Ok(table)
}

/// Write the headered text format. Round-trips exactly: values are printed
/// with Rust's shortest-round-trip float formatting.
pub fn save_vectors(table: &EmbeddingTable, path: &Path) -> Result<()> {
    for key in table.keys() {
        if key.chars().any(|c| c.is_whitespace()) || key.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "key {key:?} cannot be saved in a space-separated format"
            )));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (i, key) in table.keys().iter().enumerate() {
        write!(out, "{key}")?;
        for v in table.row(i) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_headered_file() {
        let f = write_temp("2 3\na 1 0 0\nb 0 1 0\n");
        let t = load_vectors(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("a").unwrap(), &[1.0, 0.0, 0.0]);
        assert!(!t.trainable);
    }

    #[test]
    fn loads_headerless_file() {
        let f = write_temp("a 1 0 0\nb 0 1 0\n");
        let t = load_vectors(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("b").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn ragged_line_names_offender() {
        let f = write_temp("a 1 0 0\nb 0 1 0\nc 5 5\n");
        let err = load_vectors(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "got {err}");
    }

    #[test]
    fn duplicate_token_rejected() {
        let f = write_temp("a 1 0\nb 2 2\na 3 3\n");
        let err = load_vectors(f.path()).unwrap_err();
        assert!(matches!(err, Error::DuplicateToken { line: 3, .. }), "got {err}");
    }

    #[test]
    fn header_count_mismatch_rejected() {
        let f = write_temp("3 2\na 1 0\nb 0 1\n");
        assert!(load_vectors(f.path()).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let keys: Vec<String> = (0..20).map(|i| format!("tok{i}")).collect();
        let table = EmbeddingTable::random(keys, 7, &mut rng).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_vectors(&table, f.path()).unwrap();
        let back = load_vectors(f.path()).unwrap();
        assert_eq!(back.keys(), table.keys());
        assert_eq!(back.dim(), table.dim());
        // shortest-round-trip printing makes this exact, well within the
        // 1e-6 relative tolerance the format promises
        assert_eq!(back.data(), table.data());
    }

    #[test]
    fn empty_table_saves_header_only() {
        let table = EmbeddingTable::zeros(vec![], 5).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_vectors(&table, f.path()).unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(content, "0 5\n");
    }

    #[test]
    fn whitespace_keys_cannot_be_saved() {
        let table = EmbeddingTable::zeros(vec!["a b".into()], 2).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(save_vectors(&table, f.path()).is_err());
    }

    #[test]
    fn duplicate_keys_rejected_at_construction() {
        assert!(EmbeddingTable::zeros(vec!["x".into(), "x".into()], 2).is_err());
    }
}
