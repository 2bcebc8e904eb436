//! Data model and ingestion: question records, tokenization, vocabulary,
//! and the two line-delimited dataset formats.

mod synthetic;
mod triples;

pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use triples::{make_triples, sample_candidate_pool, CandidatePool, Triple};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved vocabulary id used to right-pad short sequences.
pub const PAD: usize = 0;
/// Reserved vocabulary id for out-of-vocabulary tokens.
pub const UNK: usize = 1;

/// One answer to a question: who wrote it and how the community voted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub user_id: String,
    pub votes: u64,
    /// Present only in the extended dataset variant; the user-ranking model
    /// never reads it, the answer-ranking baseline does.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
}

/// A question with its answer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub text: String,
    pub answers: Vec<Answer>,
}

impl QuestionRecord {
    /// The unique highest-vote answerer, or `TiedTopVote` if the best vote
    /// count is shared (ties carry no usable order signal).
    pub fn gold_user(&self) -> Result<&str> {
        let best = self
            .answers
            .iter()
            .map(|a| a.votes)
            .max()
            .ok_or_else(|| Error::EmptyInput(format!("question {:?} has no answers", self.question_id)))?;
        let mut winners = self.answers.iter().filter(|a| a.votes == best);
        let first = winners.next().expect("max exists");
        if winners.any(|a| a.user_id != first.user_id) {
            return Err(Error::TiedTopVote(self.question_id.clone()));
        }
        Ok(&first.user_id)
    }
}

/// Which held-out role a dataset file plays. The two test splits have
/// identical semantics; they are simply independent samples. Ordering
/// follows the pipeline: train, dev, test1, test2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test1,
    Test2,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test1" => Ok(Split::Test1),
            "test2" => Ok(Split::Test2),
            other => Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected train|dev|test1|test2)"
            ))),
        }
    }
}

/// All records of one split, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub split: Split,
    pub records: Vec<QuestionRecord>,
}

impl Dataset {
    /// All distinct answerer ids across the dataset, sorted. This is the
    /// canonical user universe for graphs, embeddings and candidate pools.
    pub fn user_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .flat_map(|r| r.answers.iter().map(|a| a.user_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// On-disk dataset encodings accepted by [`parse_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `question_id TAB text TAB user:votes[,user:votes…]`, optionally
    /// followed by one base64 answer-text field per answer.
    Tsv,
    /// One JSON object per line: `{"id", "text", "answers":[{"user","votes","text"?}]}`.
    Jsonl,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(DataFormat::Tsv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!(
                "unknown format {other:?} (expected tsv|jsonl)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct JsonAnswer {
    user: String,
    votes: u64,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    answers: Vec<JsonAnswer>,
}

/// Read one split from disk. Order is preserved; blank lines are ignored;
/// a repeated question id within the file is a hard error.
pub fn parse_dataset(path: &Path, format: DataFormat, split: Split) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let mut records = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let record = match format {
            DataFormat::Tsv => parse_tsv_line(&line).map_err(|msg| Error::Parse {
                path: path_str.clone(),
                line: lineno,
                msg,
            })?,
            DataFormat::Jsonl => parse_json_line(&line).map_err(|msg| Error::Parse {
                path: path_str.clone(),
                line: lineno,
                msg,
            })?,
        };
        if seen.insert(record.question_id.clone(), ()).is_some() {
            return Err(Error::DuplicateQuestionId(record.question_id));
        }
        records.push(record);
    }
    Ok(Dataset { split, records })
}

/// Serialize a dataset to the TSV format [`parse_dataset`] reads. Records
/// where every answer carries text use the extended (base64) variant; a
/// record mixing texted and text-free answers cannot be represented and is
/// rejected, as are embedded tabs/newlines and commas in user ids.
pub fn dataset_to_tsv(dataset: &Dataset) -> Result<String> {
    let clean = |s: &str, what: &str, qid: &str| -> Result<()> {
        if s.contains('\t') || s.contains('\n') || s.contains('\r') {
            return Err(Error::InvalidConfig(format!(
                "{what} of question {qid:?} contains a tab or newline"
            )));
        }
        Ok(())
    };
    let mut out = String::new();
    for record in &dataset.records {
        let qid = &record.question_id;
        clean(qid, "id", qid)?;
        clean(&record.text, "text", qid)?;
        if record.answers.is_empty() {
            return Err(Error::EmptyInput(format!("question {qid:?} has no answers")));
        }
        let texted = record.answers.iter().filter(|a| a.answer_text.is_some()).count();
        if texted != 0 && texted != record.answers.len() {
            return Err(Error::InvalidConfig(format!(
                "question {qid:?} mixes answers with and without text"
            )));
        }
        let mut answers = String::new();
        for (i, a) in record.answers.iter().enumerate() {
            clean(&a.user_id, "user id", qid)?;
            if a.user_id.contains(',') || a.user_id.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "user id {:?} cannot appear in the answers field",
                    a.user_id
                )));
            }
            if i > 0 {
                answers.push(',');
            }
            answers.push_str(&format!("{}:{}", a.user_id, a.votes));
        }
        out.push_str(&format!("{qid}\t{}\t{answers}", record.text));
        if texted > 0 {
            for a in &record.answers {
                let text = a.answer_text.as_deref().expect("all answers texted");
                out.push('\t');
                out.push_str(&BASE64.encode(text.as_bytes()));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_tsv_line(line: &str) -> std::result::Result<QuestionRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(format!(
            "expected at least 3 tab-separated fields (id, text, answers), got {}",
            fields.len()
        ));
    }
    let question_id = fields[0].to_string();
    if question_id.is_empty() {
        return Err("empty question id".into());
    }
    let text = fields[1].to_string();
    let mut answers = Vec::new();
    for part in fields[2].split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err("empty user:votes entry in answers field".into());
        }
        let (user, votes) = part
            .rsplit_once(':')
            .ok_or_else(|| format!("answer entry {part:?} is not user:votes"))?;
        if user.is_empty() {
            return Err(format!("answer entry {part:?} has an empty user id"));
        }
        let votes: u64 = votes
            .parse()
            .map_err(|_| format!("votes in {part:?} is not a non-negative integer"))?;
        answers.push(Answer {
            user_id: user.to_string(),
            votes,
            answer_text: None,
        });
    }
    // Extended variant: one base64 answer-text field per answer.
    let extra = &fields[3..];
    if !extra.is_empty() {
        if extra.len() != answers.len() {
            return Err(format!(
                "{} answer-text fields for {} answers",
                extra.len(),
                answers.len()
            ));
        }
        for (answer, enc) in answers.iter_mut().zip(extra) {
            let bytes = BASE64
                .decode(enc.as_bytes())
                .map_err(|e| format!("bad base64 answer text: {e}"))?;
            let text =
                String::from_utf8(bytes).map_err(|_| "answer text is not UTF-8".to_string())?;
            answer.answer_text = Some(text);
        }
    }
    Ok(QuestionRecord {
        question_id,
        text,
        answers,
    })
}

fn parse_json_line(line: &str) -> std::result::Result<QuestionRecord, String> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.id.is_empty() {
        return Err("empty question id".into());
    }
    Ok(QuestionRecord {
        question_id: rec.id,
        text: rec.text,
        answers: rec
            .answers
            .into_iter()
            .map(|a| Answer {
                user_id: a.user,
                votes: a.votes,
                answer_text: a.text,
            })
            .collect(),
    })
}

/// How raw text becomes tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    /// Lowercase, split on Unicode whitespace, strip punctuation off token
    /// edges. The right choice for pre-segmented (space-separated) text.
    Whitespace,
    /// Overlapping character bigrams of each non-space run; a length-1 run
    /// is kept as-is. Fallback for scripts without space segmentation.
    CharBigram,
}

impl std::str::FromStr for TokenizeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizeMode::Whitespace),
            "char_bigram" => Ok(TokenizeMode::CharBigram),
            other => Err(Error::InvalidConfig(format!(
                "unknown tokenize mode {other:?} (expected whitespace|char_bigram)"
            ))),
        }
    }
}

/// Punctuation stripped from token edges in whitespace mode: ASCII
/// punctuation plus the typographic and CJK marks common in QA text.
fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}'
                | '\u{2026}' | '\u{00AB}' | '\u{00BB}' | '\u{3001}' | '\u{3002}' | '\u{FF0C}'
                | '\u{FF01}' | '\u{FF1F}' | '\u{FF1A}' | '\u{FF1B}' | '\u{FF08}' | '\u{FF09}'
                | '\u{300A}' | '\u{300B}'
        )
}

/// Split text into tokens. Empty input yields an empty list; both modes
/// lowercase so vocabulary lookups are case-insensitive.
pub fn tokenize(text: &str, mode: TokenizeMode) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    match mode {
        TokenizeMode::Whitespace => {
            for raw in lowered.split_whitespace() {
                let token = raw.trim_matches(is_edge_punct);
                if !token.is_empty() {
                    out.push(token.to_string());
                }
            }
        }
        TokenizeMode::CharBigram => {
            for run in lowered.split_whitespace() {
                let chars: Vec<char> = run.chars().collect();
                if chars.len() == 1 {
                    out.push(chars[0].to_string());
                } else {
                    for pair in chars.windows(2) {
                        out.push(pair.iter().collect());
                    }
                }
            }
        }
    }
    out
}

/// Token table with reserved ids 0 (padding) and 1 (unknown). Corpus tokens
/// get ids from 2 upward in descending frequency, ties broken
/// lexicographically, so id order is stable across runs.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    min_count: u64,
}

impl Vocab {
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    /// Build from an iterator of already-tokenized texts.
    pub fn from_token_lists<'a, I>(token_lists: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_count == 0 {
            return Err(Error::InvalidConfig("min_count must be at least 1".into()));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for list in token_lists {
            for token in list {
                *freq.entry(token.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, count)| count >= min_count)
            .collect();
        // Descending frequency, then lexicographic, so ids are deterministic.
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token = Vec::with_capacity(kept.len() + 2);
        id_to_token.push(Self::PAD_TOKEN.to_string());
        id_to_token.push(Self::UNK_TOKEN.to_string());
        id_to_token.extend(kept.iter().map(|(t, _)| t.to_string()));

        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id))
            .collect();
        Ok(Self {
            token_to_id,
            id_to_token,
            min_count,
        })
    }

    /// Tokenize every question text (and any answer texts) in the given
    /// datasets and build the table.
    pub fn build(datasets: &[&Dataset], mode: TokenizeMode, min_count: u64) -> Result<Self> {
        let mut lists: Vec<Vec<String>> = Vec::new();
        for ds in datasets {
            for rec in &ds.records {
                lists.push(tokenize(&rec.text, mode));
                for ans in &rec.answers {
                    if let Some(text) = &ans.answer_text {
                        lists.push(tokenize(text, mode));
                    }
                }
            }
        }
        Self::from_token_lists(lists.iter().map(|l| l.as_slice()), min_count)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    /// Total table size including the two reserved ids.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        // Reserved entries are always present; "empty" means no corpus tokens.
        self.id_to_token.len() <= 2
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Tokens in id order, including the reserved entries.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Map tokens to ids, truncating to the first `max_len` tokens and
/// right-padding with [`PAD`] so the result has length exactly `max_len`.
pub fn encode_text(tokens: &[String], vocab: &Vocab, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("encode length must be at least 1".into()));
    }
    let mut ids = Vec::with_capacity(max_len);
    for token in tokens.iter().take(max_len) {
        ids.push(vocab.id(token).unwrap_or(UNK));
    }
    ids.resize(max_len, PAD);
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_three_line_tsv() {
        let f = write_temp("q1\thow to sort\tu1:5,u2:3\nq2\tborrow checker\tu3:2\nq3\tlifetimes\tu1:0\n");
        let ds = parse_dataset(f.path(), DataFormat::Tsv, Split::Train).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.records[0].question_id, "q1");
        assert_eq!(ds.records[0].answers[1].votes, 3);
        assert_eq!(ds.records[2].answers[0].user_id, "u1");
    }

    #[test]
    fn missing_answers_field_names_line_two() {
        let f = write_temp("q1\ttext\tu1:5\nq2\tno answers here\n");
        let err = parse_dataset(f.path(), DataFormat::Tsv, Split::Train).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn duplicate_question_id_rejected() {
        let f = write_temp("q1\ta\tu1:5\nq1\tb\tu2:3\n");
        let err = parse_dataset(f.path(), DataFormat::Tsv, Split::Train).unwrap_err();
        assert!(matches!(err, Error::DuplicateQuestionId(id) if id == "q1"));
    }

    #[test]
    fn malformed_votes_rejected_with_line() {
        let f = write_temp("q1\ta\tu1:notanumber\n");
        let err = parse_dataset(f.path(), DataFormat::Tsv, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "got {err}");
    }

    #[test]
    fn extended_tsv_decodes_answer_texts() {
        use base64::Engine;
        let a1 = BASE64.encode("first answer");
        let a2 = BASE64.encode("second answer");
        let f = write_temp(&format!("q1\ttext\tu1:5,u2:3\t{a1}\t{a2}\n"));
        let ds = parse_dataset(f.path(), DataFormat::Tsv, Split::Train).unwrap();
        assert_eq!(ds.records[0].answers[0].answer_text.as_deref(), Some("first answer"));
        assert_eq!(ds.records[0].answers[1].answer_text.as_deref(), Some("second answer"));
    }

    #[test]
    fn extended_tsv_field_count_mismatch_is_error() {
        let a1 = BASE64.encode("only one");
        let f = write_temp(&format!("q1\ttext\tu1:5,u2:3\t{a1}\n"));
        assert!(parse_dataset(f.path(), DataFormat::Tsv, Split::Train).is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let f = write_temp(
            r#"{"id":"q9","text":"install drivers","answers":[{"user":"u1","votes":7},{"user":"u2","votes":1,"text":"try apt"}]}"#,
        );
        let ds = parse_dataset(f.path(), DataFormat::Jsonl, Split::Dev).unwrap();
        assert_eq!(ds.records[0].question_id, "q9");
        assert_eq!(ds.records[0].answers[1].answer_text.as_deref(), Some("try apt"));
        assert_eq!(ds.records[0].answers[0].answer_text, None);
    }

    #[test]
    fn gold_user_picks_unique_top_and_rejects_tie() {
        let rec = QuestionRecord {
            question_id: "q".into(),
            text: String::new(),
            answers: vec![
                Answer { user_id: "a".into(), votes: 5, answer_text: None },
                Answer { user_id: "b".into(), votes: 9, answer_text: None },
            ],
        };
        assert_eq!(rec.gold_user().unwrap(), "b");
        let tied = QuestionRecord {
            question_id: "q".into(),
            text: String::new(),
            answers: vec![
                Answer { user_id: "a".into(), votes: 5, answer_text: None },
                Answer { user_id: "b".into(), votes: 5, answer_text: None },
            ],
        };
        assert!(matches!(tied.gold_user(), Err(Error::TiedTopVote(_))));
    }

    #[test]
    fn tokenize_basic_sentence() {
        assert_eq!(
            tokenize("Buy used cars", TokenizeMode::Whitespace),
            vec!["buy", "used", "cars"]
        );
    }

    #[test]
    fn tokenize_empty_and_punctuation() {
        assert!(tokenize("", TokenizeMode::Whitespace).is_empty());
        assert!(tokenize("  \t\n ", TokenizeMode::Whitespace).is_empty());
        assert_eq!(
            tokenize("Hello, world! (really)", TokenizeMode::Whitespace),
            vec!["hello", "world", "really"]
        );
        // interior punctuation survives
        assert_eq!(
            tokenize("don't panic", TokenizeMode::Whitespace),
            vec!["don't", "panic"]
        );
        // a token that is all punctuation disappears
        assert_eq!(tokenize("a -- b", TokenizeMode::Whitespace), vec!["a", "b"]);
    }

    #[test]
    fn tokenize_char_bigrams() {
        assert_eq!(
            tokenize("abc d", TokenizeMode::CharBigram),
            vec!["ab", "bc", "d"]
        );
        assert_eq!(tokenize("xy", TokenizeMode::CharBigram), vec!["xy"]);
        assert!(tokenize("", TokenizeMode::CharBigram).is_empty());
    }

    fn vocab_from(corpus: &[&str], min_count: u64) -> Vocab {
        let lists: Vec<Vec<String>> = corpus
            .iter()
            .map(|t| tokenize(t, TokenizeMode::Whitespace))
            .collect();
        Vocab::from_token_lists(lists.iter().map(|l| l.as_slice()), min_count).unwrap()
    }

    #[test]
    fn vocab_orders_by_frequency_then_token() {
        let v = vocab_from(&["a a b"], 1);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
        assert_eq!(v.id(Vocab::PAD_TOKEN), Some(PAD));
        assert_eq!(v.id(Vocab::UNK_TOKEN), Some(UNK));
    }

    #[test]
    fn vocab_min_count_filters() {
        let v = vocab_from(&["a a b"], 2);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), None);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn vocab_frequency_tie_breaks_lexicographically() {
        let v = vocab_from(&["y x"], 1);
        // equal frequency: "x" < "y" so "x" gets the smaller id
        assert_eq!(v.id("x"), Some(2));
        assert_eq!(v.id("y"), Some(3));
    }

    #[test]
    fn reserved_tokens_cannot_collide_with_corpus() {
        // the tokenizer strips angle brackets, so a literal "<pad>" in text
        // becomes "pad", never the reserved token itself
        let v = vocab_from(&["<pad> <unk>"], 1);
        assert_eq!(v.id("pad"), Some(2));
        assert_eq!(v.id("unk"), Some(3));
        assert_eq!(v.token(PAD), Some(Vocab::PAD_TOKEN));
        assert_eq!(v.token(UNK), Some(Vocab::UNK_TOKEN));
    }

    #[test]
    fn encode_pads_truncates_and_maps_unknown() {
        let v = vocab_from(&["alpha beta gamma"], 1);
        let toks = tokenize("alpha beta gamma", TokenizeMode::Whitespace);
        let ids = encode_text(&toks, &v, 5).unwrap();
        assert_eq!(ids.len(), 5);
        assert_eq!(&ids[3..], &[PAD, PAD]);

        let long: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
        let ids = encode_text(&long, &v, 50).unwrap();
        assert_eq!(ids.len(), 50);
        assert!(ids.iter().all(|&id| id == UNK));

        let unknown = tokenize("zeta", TokenizeMode::Whitespace);
        assert_eq!(encode_text(&unknown, &v, 2).unwrap(), vec![UNK, PAD]);
    }

    #[test]
    fn encode_is_idempotent_on_truncated_tokens() {
        let v = vocab_from(&["a b c d e f"], 1);
        let toks: Vec<String> = tokenize("a b c d e f", TokenizeMode::Whitespace);
        let once = encode_text(&toks, &v, 4).unwrap();
        let truncated: Vec<String> = toks[..4].to_vec();
        let twice = encode_text(&truncated, &v, 4).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn tsv_writer_round_trips_through_the_parser() {
        let make = |texts: bool| Dataset {
            split: Split::Train,
            records: vec![
                QuestionRecord {
                    question_id: "q1".into(),
                    text: "how do I flatten a nested list".into(),
                    answers: vec![
                        Answer {
                            user_id: "alice".into(),
                            votes: 7,
                            answer_text: texts.then(|| "use a comprehension".into()),
                        },
                        Answer {
                            user_id: "bob:2".into(),
                            votes: 1,
                            answer_text: texts.then(|| "recursion, with ümlauts".into()),
                        },
                    ],
                },
                QuestionRecord {
                    question_id: "q2".into(),
                    text: String::new(),
                    answers: vec![Answer {
                        user_id: "carol".into(),
                        votes: 0,
                        answer_text: texts.then(String::new),
                    }],
                },
            ],
        };
        for texts in [false, true] {
            let ds = make(texts);
            let tsv = dataset_to_tsv(&ds).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ds.tsv");
            std::fs::write(&path, &tsv).unwrap();
            let parsed = parse_dataset(&path, DataFormat::Tsv, Split::Train).unwrap();
            assert_eq!(parsed, ds, "texts={texts}");
        }
    }

    #[test]
    fn tsv_writer_rejects_unrepresentable_records() {
        let mut ds = Dataset {
            split: Split::Train,
            records: vec![QuestionRecord {
                question_id: "q1".into(),
                text: "fine".into(),
                answers: vec![
                    Answer {
                        user_id: "a".into(),
                        votes: 2,
                        answer_text: Some("yes".into()),
                    },
                    Answer {
                        user_id: "b".into(),
                        votes: 1,
                        answer_text: None,
                    },
                ],
            }],
        };
        assert!(dataset_to_tsv(&ds).is_err(), "mixed text presence");
        ds.records[0].answers[1].answer_text = Some("ok".into());
        ds.records[0].text = "tab\there".into();
        assert!(dataset_to_tsv(&ds).is_err(), "embedded tab");
        ds.records[0].text = "fine".into();
        ds.records[0].answers[0].user_id = "a,b".into();
        assert!(dataset_to_tsv(&ds).is_err(), "comma in user id");
    }
}
