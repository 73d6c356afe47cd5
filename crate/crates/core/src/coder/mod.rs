//! Per-symbol codes over dynamically supplied distributions.
//!
//! Every table is rebuilt from scratch at each step. Construction sorts with a
//! total order (probability descending, then token ascending for rank codes;
//! length ascending, then token ascending for canonical prefix codes), so the
//! encoder and decoder derive identical tables from identical inputs.

mod bits;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bits::{BitReader, BitString};

use crate::predictor::Symbol;

#[derive(Debug, Error, PartialEq)]
pub enum CoderError {
    #[error("empty support")]
    EmptySupport,
    #[error("probability of {token} is {prob}; codes need strictly positive finite probabilities")]
    BadProbability { token: Token, prob: f64 },
    #[error("probabilities sum to {0}, more than 1")]
    MassExceeded(f64),
    #[error("code lengths violate the Kraft inequality")]
    KraftViolation,
    #[error("codeword of {0} bits exceeds the supported maximum")]
    CodewordTooLong(u32),
    #[error("{0} is not in the code table")]
    UnknownToken(Token),
    #[error("bit stream truncated: needed {needed} bits, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("no codeword matches the bit stream")]
    InvalidCodeword,
    #[error("rank code needs the message length; use decode_with_length")]
    LengthRequired,
    #[error("invalid bit character {0:?}")]
    BadBitChar(char),
}

/// A codable event: an alphabet symbol or the outage marker `e`.
///
/// Symbols order before the outage marker.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Symbol(Symbol),
    Outage,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Symbol(s) => write!(f, "symbol {s}"),
            Token::Outage => f.write_str("outage marker"),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    /// Non-prefix-free rank code; message boundaries come from framing.
    OneToOne,
    /// Canonical prefix code with lengths `ceil(-log2 p)`.
    Shannon,
    /// Canonical Huffman code.
    Huffman,
}

/// Longest codeword any prefix table may hold.
pub const MAX_CODEWORD_BITS: u32 = 127;

/// `ceil(-log2 p)`, clamped at zero.
pub fn shannon_length(p: f64) -> u32 {
    let l = (-p.log2()).ceil();
    if l <= 0.0 {
        0
    } else {
        l as u32
    }
}

/// `floor(log2 rank)` for a 1-based rank.
pub fn one_to_one_length(rank: usize) -> u32 {
    assert!(rank >= 1, "ranks are 1-based");
    usize::BITS - 1 - rank.leading_zeros()
}

/// Codeword of the `rank`-th string in the enumeration `ε, 0, 1, 00, 01, ...`.
fn one_to_one_codeword(rank: usize) -> BitString {
    let len = one_to_one_length(rank);
    BitString::from_value((rank - (1usize << len)) as u128, len)
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    token: Token,
    prob: f64,
    code: BitString,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeTable {
    kind: CodeKind,
    /// Rank order for one-to-one tables, canonical order otherwise.
    entries: Vec<Entry>,
    by_token: HashMap<Token, usize>,
    by_code: HashMap<BitString, usize>,
    max_len: usize,
}

fn check_support(support: &[(Token, f64)]) -> Result<(), CoderError> {
    if support.is_empty() {
        return Err(CoderError::EmptySupport);
    }
    if let Some(&(token, prob)) = support.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
        return Err(CoderError::BadProbability { token, prob });
    }
    Ok(())
}

fn by_prob_desc(a: &(Token, f64), b: &(Token, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl CodeTable {
    fn from_entries(kind: CodeKind, entries: Vec<Entry>) -> Self {
        let by_token = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token, i))
            .collect();
        let by_code = if kind == CodeKind::OneToOne {
            HashMap::new()
        } else {
            entries
                .iter()
                .enumerate()
                .map(|(i, e)| (e.code.clone(), i))
                .collect()
        };
        let max_len = entries.iter().map(|e| e.code.len()).max().unwrap_or(0);
        CodeTable {
            kind,
            entries,
            by_token,
            by_code,
            max_len,
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(token, probability, codeword)` in table order.
    pub fn iter(&self) -> impl Iterator<Item = (Token, f64, &BitString)> {
        self.entries.iter().map(|e| (e.token, e.prob, &e.code))
    }

    pub fn codeword(&self, token: Token) -> Option<&BitString> {
        self.by_token.get(&token).map(|&i| &self.entries[i].code)
    }

    /// `sum 2^-len` over all entries.
    pub fn kraft_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| (-(e.code.len() as f64)).exp2())
            .sum()
    }

    pub fn encode(&self, token: Token) -> Result<&BitString, CoderError> {
        self.codeword(token).ok_or(CoderError::UnknownToken(token))
    }

    /// Reads one codeword from a prefix-code stream.
    pub fn decode(&self, reader: &mut BitReader<'_>) -> Result<Token, CoderError> {
        if self.kind == CodeKind::OneToOne {
            return Err(CoderError::LengthRequired);
        }
        let mut word = BitString::new();
        loop {
            if let Some(&i) = self.by_code.get(&word) {
                return Ok(self.entries[i].token);
            }
            if word.len() >= self.max_len {
                return Err(CoderError::InvalidCodeword);
            }
            match reader.read_bit() {
                Some(bit) => word.push(bit),
                None => {
                    return Err(CoderError::Truncated {
                        needed: word.len() + 1,
                        available: word.len(),
                    })
                }
            }
        }
    }

    /// Decodes a complete rank-code message whose length is known from framing.
    pub fn decode_with_length(&self, message: &BitString) -> Result<Token, CoderError> {
        if self.kind != CodeKind::OneToOne {
            let mut reader = message.reader();
            let token = self.decode(&mut reader)?;
            return if reader.remaining() == 0 {
                Ok(token)
            } else {
                Err(CoderError::InvalidCodeword)
            };
        }
        let len = message.len() as u32;
        let value = message.value().ok_or(CoderError::InvalidCodeword)?;
        if len >= usize::BITS - 1 {
            return Err(CoderError::InvalidCodeword);
        }
        let rank = (1usize << len) + value as usize;
        self.entries
            .get(rank - 1)
            .map(|e| e.token)
            .ok_or(CoderError::InvalidCodeword)
    }
}

/// Rank code: the `i`-th most probable token gets the `i`-th string of
/// `ε, 0, 1, 00, 01, 10, 11, 000, ...`, i.e. `floor(log2 i)` bits.
pub fn build_one_to_one(support: &[(Token, f64)]) -> Result<CodeTable, CoderError> {
    check_support(support)?;
    let mut sorted = support.to_vec();
    sorted.sort_by(by_prob_desc);
    let entries = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (token, prob))| Entry {
            token,
            prob,
            code: one_to_one_codeword(i + 1),
        })
        .collect();
    Ok(CodeTable::from_entries(CodeKind::OneToOne, entries))
}

/// Assigns canonical codewords: sort by (length, token) and count upward.
fn canonical(kind: CodeKind, mut items: Vec<(Token, f64, u32)>) -> Result<CodeTable, CoderError> {
    let max_len = items.iter().map(|&(_, _, l)| l).max().unwrap_or(0);
    if max_len > MAX_CODEWORD_BITS {
        return Err(CoderError::CodewordTooLong(max_len));
    }
    let capacity = 1u128 << max_len;
    let mut used = 0u128;
    for &(_, _, l) in &items {
        used = used
            .checked_add(1u128 << (max_len - l))
            .ok_or(CoderError::KraftViolation)?;
    }
    if used > capacity {
        return Err(CoderError::KraftViolation);
    }

    items.sort_by(|a, b| a.2.cmp(&b.2).then(a.0.cmp(&b.0)));
    let mut entries = Vec::with_capacity(items.len());
    let mut code = 0u128;
    let mut prev_len = items[0].2;
    for (token, prob, len) in items {
        code <<= len - prev_len;
        prev_len = len;
        entries.push(Entry {
            token,
            prob,
            code: BitString::from_value(code, len),
        });
        code += 1;
    }
    Ok(CodeTable::from_entries(kind, entries))
}

/// Canonical Shannon code with `len(x) = ceil(-log2 p(x))`.
pub fn build_shannon(support: &[(Token, f64)]) -> Result<CodeTable, CoderError> {
    check_support(support)?;
    let total: f64 = support.iter().map(|(_, p)| p).sum();
    if total > 1.0 + crate::predictor::NORMALIZATION_TOLERANCE {
        return Err(CoderError::MassExceeded(total));
    }
    let items = support
        .iter()
        .map(|&(t, p)| (t, p, shannon_length(p)))
        .collect();
    canonical(CodeKind::Shannon, items)
}

#[derive(PartialEq)]
struct HeapItem {
    prob: f64,
    seq: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Reversed so BinaryHeap pops the lightest node, earliest seq first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .prob
            .total_cmp(&self.prob)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical Huffman code. Ties merge the earliest-created node first, leaves
/// created in token order.
pub fn build_huffman(support: &[(Token, f64)]) -> Result<CodeTable, CoderError> {
    check_support(support)?;
    let mut leaves = support.to_vec();
    leaves.sort_by_key(|a| a.0);
    let n = leaves.len();
    if n == 1 {
        return canonical(CodeKind::Huffman, vec![(leaves[0].0, leaves[0].1, 0)]);
    }
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<HeapItem> = leaves
        .iter()
        .enumerate()
        .map(|(i, &(_, p))| HeapItem { prob: p, seq: i })
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let a = heap.pop().expect("two nodes");
        let b = heap.pop().expect("two nodes");
        parent[a.seq] = next;
        parent[b.seq] = next;
        heap.push(HeapItem {
            prob: a.prob + b.prob,
            seq: next,
        });
        next += 1;
    }
    let items = leaves
        .iter()
        .enumerate()
        .map(|(i, &(t, p))| {
            let mut depth = 0u32;
            let mut node = i;
            while parent[node] != usize::MAX {
                node = parent[node];
                depth += 1;
            }
            (t, p, depth)
        })
        .collect();
    canonical(CodeKind::Huffman, items)
}

/// Builds a table of the requested kind.
pub fn build_table(kind: CodeKind, support: &[(Token, f64)]) -> Result<CodeTable, CoderError> {
    match kind {
        CodeKind::OneToOne => build_one_to_one(support),
        CodeKind::Shannon => build_shannon(support),
        CodeKind::Huffman => build_huffman(support),
    }
}

pub fn encode_symbol(table: &CodeTable, token: Token) -> Result<BitString, CoderError> {
    table.encode(token).cloned()
}

pub fn decode_symbol(table: &CodeTable, reader: &mut BitReader<'_>) -> Result<Token, CoderError> {
    table.decode(reader)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(i: u32) -> Token {
        Token::Symbol(Symbol(i))
    }

    fn lengths(table: &CodeTable) -> HashMap<Token, usize> {
        table.iter().map(|(t, _, c)| (t, c.len())).collect()
    }

    #[test]
    fn one_to_one_examples() {
        let t = build_one_to_one(&[(sym(0), 0.625), (sym(1), 0.375)]).unwrap();
        assert_eq!(t.codeword(sym(0)).unwrap().to_string(), "");
        assert_eq!(t.codeword(sym(1)).unwrap().to_string(), "0");

        let support: Vec<_> = (0..7).map(|i| (sym(i), 1.0 / (i + 2) as f64)).collect();
        let t = build_one_to_one(&support).unwrap();
        let lens: Vec<usize> = t.iter().map(|(_, _, c)| c.len()).collect();
        assert_eq!(lens, vec![0, 1, 1, 2, 2, 2, 2]);
        let words: Vec<String> = t.iter().map(|(_, _, c)| c.to_string()).collect();
        assert_eq!(words, vec!["", "0", "1", "00", "01", "10", "11"]);

        let t = build_one_to_one(&[(sym(7), 0.5), (sym(3), 0.5)]).unwrap();
        assert!(t.codeword(sym(3)).unwrap().is_empty());
    }

    #[test]
    fn one_to_one_decodes_with_framing() {
        let support: Vec<_> = (0..5).map(|i| (sym(i), 0.2)).collect();
        let t = build_one_to_one(&support).unwrap();
        assert_eq!(t.decode_with_length(&BitString::new()).unwrap(), sym(0));
        for (token, _, code) in t.iter() {
            assert_eq!(t.decode_with_length(code).unwrap(), token);
        }
        // rank 6 does not exist
        assert_eq!(
            t.decode_with_length(&"10".parse().unwrap()),
            Err(CoderError::InvalidCodeword)
        );
        assert_eq!(
            t.decode(&mut BitString::new().reader()),
            Err(CoderError::LengthRequired)
        );
    }

    #[test]
    fn shannon_examples() {
        let t = build_shannon(&[(sym(0), 0.625), (sym(1), 0.375)]).unwrap();
        assert_eq!(lengths(&t), HashMap::from([(sym(0), 1), (sym(1), 2)]));

        let t = build_shannon(&[(sym(0), 0.5), (sym(1), 0.3), (Token::Outage, 0.2)]).unwrap();
        assert_eq!(
            lengths(&t),
            HashMap::from([(sym(0), 1), (sym(1), 2), (Token::Outage, 3)])
        );

        let support: Vec<_> = (0..4).map(|i| (sym(i), 0.25)).collect();
        let t = build_shannon(&support).unwrap();
        let words: Vec<String> = t.iter().map(|(_, _, c)| c.to_string()).collect();
        assert_eq!(words, vec!["00", "01", "10", "11"]);
    }

    #[test]
    fn shannon_stream_parses_unambiguously() {
        let t = build_shannon(&[(sym(0), 0.5), (sym(1), 0.3), (Token::Outage, 0.2)]).unwrap();
        assert_eq!(t.codeword(sym(0)).unwrap().to_string(), "0");
        assert_eq!(t.codeword(sym(1)).unwrap().to_string(), "10");
        assert_eq!(t.codeword(Token::Outage).unwrap().to_string(), "110");
        let stream: BitString = "0110100".parse().unwrap();
        let mut r = stream.reader();
        let decoded: Vec<Token> = (0..4).map(|_| t.decode(&mut r).unwrap()).collect();
        assert_eq!(decoded, vec![sym(0), Token::Outage, sym(1), sym(0)]);
        assert_eq!(
            t.decode(&mut r),
            Err(CoderError::Truncated {
                needed: 1,
                available: 0
            })
        );
        // "111" is not a codeword of this incomplete code
        let junk: BitString = "111".parse().unwrap();
        assert_eq!(
            t.decode(&mut junk.reader()),
            Err(CoderError::InvalidCodeword)
        );
    }

    #[test]
    fn certain_outcome_costs_nothing() {
        for kind in [CodeKind::OneToOne, CodeKind::Shannon, CodeKind::Huffman] {
            let t = build_table(kind, &[(Token::Outage, 1.0)]).unwrap();
            assert!(t.codeword(Token::Outage).unwrap().is_empty());
            if kind != CodeKind::OneToOne {
                assert_eq!(t.decode(&mut BitString::new().reader()), Ok(Token::Outage));
            }
        }
        let t = build_shannon(&[(sym(4), 0.5), (Token::Outage, 0.5)]).unwrap();
        assert_eq!(
            lengths(&t),
            HashMap::from([(sym(4), 1), (Token::Outage, 1)])
        );
    }

    #[test]
    fn rejects_bad_supports() {
        assert_eq!(build_shannon(&[]), Err(CoderError::EmptySupport));
        assert!(matches!(
            build_shannon(&[(sym(0), 0.0), (sym(1), 1.0)]),
            Err(CoderError::BadProbability { .. })
        ));
        assert!(matches!(
            build_shannon(&[(sym(0), 0.7), (sym(1), 0.7)]),
            Err(CoderError::MassExceeded(_))
        ));
        assert!(matches!(
            build_one_to_one(&[(sym(0), f64::NAN)]),
            Err(CoderError::BadProbability { .. })
        ));
        let t = build_shannon(&[(sym(0), 1.0)]).unwrap();
        assert_eq!(t.encode(sym(1)), Err(CoderError::UnknownToken(sym(1))));
    }

    #[test]
    fn huffman_is_complete_and_no_worse_than_shannon() {
        let support = vec![
            (sym(0), 0.4),
            (sym(1), 0.2),
            (sym(2), 0.2),
            (sym(3), 0.1),
            (Token::Outage, 0.1),
        ];
        let h = build_huffman(&support).unwrap();
        let s = build_shannon(&support).unwrap();
        assert!((h.kraft_sum() - 1.0).abs() < 1e-12);
        let avg = |t: &CodeTable| -> f64 { t.iter().map(|(_, p, c)| p * c.len() as f64).sum() };
        assert!(avg(&h) <= avg(&s));
        for (token, _, code) in h.iter() {
            assert_eq!(h.decode(&mut code.reader()).unwrap(), token);
        }
    }

    #[test]
    fn length_helpers() {
        assert_eq!(shannon_length(1.0), 0);
        assert_eq!(shannon_length(0.5), 1);
        assert_eq!(shannon_length(0.375), 2);
        assert_eq!(shannon_length(0.2), 3);
        assert_eq!(one_to_one_length(1), 0);
        assert_eq!(one_to_one_length(3), 1);
        assert_eq!(one_to_one_length(4), 2);
        assert_eq!(one_to_one_length(256), 8);
    }
}
