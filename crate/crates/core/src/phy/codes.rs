//! Ternary preamble codes and the code table.
//!
//! The built-in table is derived from degree-7 m-sequences: a Gold-style
//! product of two m-sequences supplies the pulse polarities and a third
//! m-sequence masks roughly half of the positions to zero. Candidates are
//! accepted greedily while every pair keeps its normalized cyclic
//! cross-correlation at or below [`MAX_CROSS_CORRELATION`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Upper bound on the normalized cyclic cross-correlation between two
/// distinct table codes, over all lags.
pub const MAX_CROSS_CORRELATION: f64 = 0.3;

const MSEQ_DEGREE: u32 = 7;
const MSEQ_LEN: usize = (1 << MSEQ_DEGREE) - 1;
const BUILTIN_ENTRIES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryCode {
    pub index: u8,
    pub symbols: Vec<i8>,
}

impl TernaryCode {
    pub fn new(index: u8, symbols: Vec<i8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::CodeTable(format!("code {index} is empty")));
        }
        if symbols.iter().any(|s| !matches!(s, -1..=1)) {
            return Err(Error::CodeTable(format!("code {index} has a non-ternary symbol")));
        }
        if symbols.iter().all(|&s| s == 0) {
            return Err(Error::CodeTable(format!("code {index} has no pulses")));
        }
        Ok(TernaryCode { index, symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Sum of squared symbols, i.e. the number of pulses.
    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|&s| f64::from(s * s)).sum()
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("{}: ", self.index);
        for &s in &self.symbols {
            line.push(match s {
                1 => '+',
                -1 => '-',
                _ => '0',
            });
        }
        line
    }
}

/// Normalized cyclic cross-correlation `|R(τ)| / sqrt(Pa·Pb)` for every lag.
pub fn cyclic_ncc(a: &[i8], b: &[i8]) -> Vec<f64> {
    let n = a.len();
    let pa: f64 = a.iter().map(|&x| f64::from(x * x)).sum();
    let pb: f64 = b.iter().map(|&x| f64::from(x * x)).sum();
    let norm = (pa * pb).sqrt();
    (0..b.len())
        .map(|lag| {
            let r: i64 = (0..n)
                .map(|i| i64::from(a[i]) * i64::from(b[(i + lag) % b.len()]))
                .sum();
            (r as f64).abs() / norm
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeTable {
    codes: BTreeMap<u8, TernaryCode>,
}

impl CodeTable {
    /// The deterministic built-in table, indices 1 through 24.
    pub fn builtin() -> &'static CodeTable {
        static TABLE: OnceLock<CodeTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let table = CodeTable::from_codes(generate_builtin()).expect("generated codes are valid");
            table
                .self_test()
                .expect("built-in code table violates the cross-correlation bound");
            table
        })
    }

    pub fn from_codes(codes: impl IntoIterator<Item = TernaryCode>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for code in codes {
            let idx = code.index;
            if map.insert(idx, code).is_some() {
                return Err(Error::CodeTable(format!("duplicate index {idx}")));
            }
        }
        if map.is_empty() {
            return Err(Error::CodeTable("no codes".into()));
        }
        let table = CodeTable { codes: map };
        for (i, a) in table.codes.values().enumerate() {
            if table.codes.values().skip(i + 1).any(|b| a.symbols == b.symbols) {
                return Err(Error::CodeTable(format!("code {} is duplicated", a.index)));
            }
        }
        Ok(table)
    }

    /// Parses `index: +0-+-...` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut codes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (idx, body) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("line {}: missing ':'", lineno + 1)))?;
            let index: u8 = idx
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index {idx:?}", lineno + 1)))?;
            let symbols = body
                .trim()
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    '0' => Ok(0),
                    other => Err(Error::Parse(format!("line {}: bad symbol {other:?}", lineno + 1))),
                })
                .collect::<Result<Vec<i8>>>()?;
            codes.push(TernaryCode::new(index, symbols)?);
        }
        CodeTable::from_codes(codes)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for code in self.codes.values() {
            let _ = writeln!(out, "{}", code.to_line());
        }
        out
    }

    pub fn get(&self, index: u8) -> Result<&TernaryCode> {
        self.codes.get(&index).ok_or(Error::UnknownCode(index.into()))
    }

    pub fn indices(&self) -> impl Iterator<Item = u8> + '_ {
        self.codes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Largest normalized cyclic cross-correlation between two codes.
    pub fn max_cross_correlation(&self, a: u8, b: u8) -> Result<f64> {
        let (a, b) = (self.get(a)?, self.get(b)?);
        if a.len() != b.len() {
            return Ok(0.0);
        }
        Ok(cyclic_ncc(&a.symbols, &b.symbols).into_iter().fold(0.0, f64::max))
    }

    /// Checks the pairwise cross-correlation bound over all lags.
    pub fn self_test(&self) -> Result<()> {
        let idx: Vec<u8> = self.indices().collect();
        for (i, &a) in idx.iter().enumerate() {
            for &b in &idx[i + 1..] {
                let x = self.max_cross_correlation(a, b)?;
                if x > MAX_CROSS_CORRELATION + 1e-12 {
                    return Err(Error::CodeTable(format!(
                        "codes {a} and {b} cross-correlate at {x:.3}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The code that interferes least with `victim`: smallest zero-lag
    /// correlation first, then smallest peak over all lags.
    pub fn least_correlated(&self, victim: u8) -> Result<u8> {
        let v = self.get(victim)?;
        let mut best: Option<(u8, f64, f64)> = None;
        for code in self.codes.values().filter(|c| c.index != victim && c.len() == v.len()) {
            let ncc = cyclic_ncc(&v.symbols, &code.symbols);
            let zero = ncc[0];
            let peak = ncc.iter().copied().fold(0.0, f64::max);
            let better = match best {
                None => true,
                Some((_, bz, bp)) => zero < bz - 1e-12 || ((zero - bz).abs() <= 1e-12 && peak < bp - 1e-12),
            };
            if better {
                best = Some((code.index, zero, peak));
            }
        }
        best.map(|b| b.0)
            .ok_or_else(|| Error::CodeTable(format!("no alternative to code {victim}")))
    }
}

/// Galois LFSR m-sequence as 0/1 values.
fn msequence(poly: u32) -> Vec<u8> {
    let mut state = 1u32;
    let taps = (poly >> 1) | (1 << (MSEQ_DEGREE - 1));
    (0..MSEQ_LEN)
        .map(|_| {
            let bit = (state & 1) as u8;
            state >>= 1;
            if bit == 1 {
                state ^= taps;
            }
            bit
        })
        .collect()
}

fn is_primitive(poly: u32) -> bool {
    let taps = (poly >> 1) | (1 << (MSEQ_DEGREE - 1));
    let mut state = 1u32;
    for period in 1..=MSEQ_LEN + 2 {
        let bit = state & 1;
        state >>= 1;
        if bit == 1 {
            state ^= taps;
        }
        if state == 1 {
            return period == MSEQ_LEN;
        }
    }
    false
}

fn generate_builtin() -> Vec<TernaryCode> {
    let polys: Vec<u32> = (1..(1u32 << MSEQ_DEGREE)).step_by(2).filter(|&p| is_primitive(p)).collect();
    let bipolar = |s: Vec<u8>| -> Vec<i8> { s.into_iter().map(|b| 1 - 2 * b as i8).collect() };
    let u = bipolar(msequence(polys[0]));
    let v = bipolar(msequence(polys[1]));
    let mask = msequence(polys[2]);

    let mut accepted: Vec<Vec<i8>> = Vec::new();
    for shift in 0..MSEQ_LEN {
        let candidate: Vec<i8> = (0..MSEQ_LEN)
            .map(|i| u[i] * v[(i + MSEQ_LEN - shift) % MSEQ_LEN] * mask[i] as i8)
            .collect();
        let auto = cyclic_ncc(&candidate, &candidate);
        if auto[1..].iter().any(|&x| x > MAX_CROSS_CORRELATION) {
            continue;
        }
        let fits = accepted.iter().all(|other| {
            cyclic_ncc(&candidate, other).iter().all(|&x| x <= MAX_CROSS_CORRELATION)
        });
        if fits {
            accepted.push(candidate);
            if accepted.len() == BUILTIN_ENTRIES {
                break;
            }
        }
    }
    accepted
        .into_iter()
        .enumerate()
        .map(|(i, symbols)| TernaryCode { index: i as u8 + 1, symbols })
        .collect()
}
