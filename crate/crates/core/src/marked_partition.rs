//! Marked partitions of `{1, …, n}`.
//!
//! Integers are indexed from 0 in the Rust API (index `i` stands for the
//! integer `i + 1`); the text format uses 1-based block labels. Blocks are
//! always labelled canonically: block 0 contains integer 0, and each further
//! block starts at the least integer not yet covered. Marks are stored once
//! per block, and a mark of 0 means the block is frozen.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{arg, construction, parse, EssfError, Result};

/// A partition of `{0, …, n-1}` with one nonnegative mark per block.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPartition {
    assignment: Vec<u32>,
    marks: Vec<f64>,
}

fn check_mark(v: f64) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return construction(format!("mark {v} is not a finite nonnegative real"));
    }
    // Normalize -0.0 so that serialization prints "0".
    Ok(if v == 0.0 { 0.0 } else { v })
}

impl MarkedPartition {
    /// Builds a partition from arbitrary block labels, one per integer, and a
    /// mark lookup `marks[label]`. Labels are re-canonicalized.
    pub fn from_labels(labels: &[usize], marks: &[f64]) -> Result<Self> {
        let x = Self::from_labels_lenient(labels, marks)?;
        if x.num_blocks() != marks.len() {
            return construction("every block label must be used by some integer");
        }
        Ok(x)
    }

    /// Like [`from_labels`](Self::from_labels) but silently drops marks of
    /// labels that no integer uses.
    pub(crate) fn from_labels_lenient(labels: &[usize], marks: &[f64]) -> Result<Self> {
        if labels.is_empty() {
            return construction("a marked partition needs level n >= 1");
        }
        let mut relabel: Vec<Option<u32>> = vec![None; marks.len()];
        let mut assignment = Vec::with_capacity(labels.len());
        let mut canon_marks = Vec::new();
        for &l in labels {
            if l >= marks.len() {
                return construction(format!("block label {l} has no mark"));
            }
            let k = match relabel[l] {
                Some(k) => k,
                None => {
                    let k = canon_marks.len() as u32;
                    relabel[l] = Some(k);
                    canon_marks.push(check_mark(marks[l])?);
                    k
                }
            };
            assignment.push(k);
        }
        Ok(Self {
            assignment,
            marks: canon_marks,
        })
    }

    /// Builds a partition of `{0, …, n-1}` from explicit blocks.
    pub fn from_blocks(n: usize, blocks: &[(Vec<usize>, f64)]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (k, (members, _)) in blocks.iter().enumerate() {
            if members.is_empty() {
                return construction("blocks must be nonempty");
            }
            for &i in members {
                if i >= n || labels[i] != usize::MAX {
                    return construction(format!("integer index {i} is out of range or repeated"));
                }
                labels[i] = k;
            }
        }
        if labels.contains(&usize::MAX) {
            return construction("blocks do not cover {1..n}");
        }
        let marks: Vec<f64> = blocks.iter().map(|b| b.1).collect();
        Self::from_labels(&labels, &marks)
    }

    /// The one-block partition `(1_n, v)`.
    pub fn single_block(n: usize, mark: f64) -> Result<Self> {
        if n == 0 {
            return construction("a marked partition needs level n >= 1");
        }
        Ok(Self {
            assignment: vec![0; n],
            marks: vec![check_mark(mark)?],
        })
    }

    /// The partition into singletons, with `marks[i]` on `{i}`.
    pub fn singletons(marks: &[f64]) -> Result<Self> {
        let labels: Vec<usize> = (0..marks.len()).collect();
        Self::from_labels(&labels, marks)
    }

    pub fn level(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.marks.len()
    }

    /// Canonical block index of each integer.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Marks indexed by canonical block.
    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.assignment[i] as usize
    }

    pub fn mark_of(&self, i: usize) -> f64 {
        self.marks[self.assignment[i] as usize]
    }

    /// Mark carried by each integer.
    pub fn per_integer_marks(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .map(|&k| self.marks[k as usize])
            .collect()
    }

    /// Members of every block, in canonical block order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (i, &k) in self.assignment.iter().enumerate() {
            out[k as usize].push(i);
        }
        out
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_blocks()];
        for &k in &self.assignment {
            out[k as usize] += 1;
        }
        out
    }

    /// True for `(1_n, v)` with any mark.
    pub fn is_single_block(&self) -> bool {
        self.marks.len() == 1
    }

    /// Restriction to the first `n` integers.
    pub fn restrict(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.level() {
            return arg(format!(
                "cannot restrict a level-{} partition to level {n}",
                self.level()
            ));
        }
        let labels: Vec<usize> = self.assignment[..n].iter().map(|&k| k as usize).collect();
        let used = labels.iter().copied().max().unwrap_or(0) + 1;
        // Canonical labels make the kept blocks exactly 0..used.
        Self::from_labels(&labels, &self.marks[..used])
    }

    /// The action `x ↦ x∘σ`: in the result `i ~ j` iff `σ(i) ~ σ(j)` in `self`,
    /// and `i` carries the mark of `σ(i)`.
    pub fn apply_permutation(&self, sigma: &Permutation) -> Result<Self> {
        if sigma.len() != self.level() {
            return arg(format!(
                "permutation of {} elements applied at level {}",
                sigma.len(),
                self.level()
            ));
        }
        let labels: Vec<usize> = sigma
            .images()
            .iter()
            .map(|&s| self.assignment[s] as usize)
            .collect();
        Self::from_labels(&labels, &self.marks)
    }

    /// Fragments block `k` by `parts[k]`, multiplying marks. Only the first
    /// `|block k|` integers of `parts[k]` are used, matched to the members of
    /// block `k` in increasing order. Frozen blocks are left intact.
    pub fn frag(&self, parts: &[MarkedPartition]) -> Result<Self> {
        if parts.len() < self.num_blocks() {
            return arg(format!(
                "frag needs {} parts, got {}",
                self.num_blocks(),
                parts.len()
            ));
        }
        let sizes = self.block_sizes();
        for (k, &b) in sizes.iter().enumerate() {
            if parts[k].level() < b {
                return arg(format!(
                    "part {k} has level {} below its block size {b}",
                    parts[k].level()
                ));
            }
        }
        // Label (k, l) as offset[k] + l.
        let mut offset = Vec::with_capacity(self.num_blocks() + 1);
        let mut acc = 0;
        for (k, part) in parts.iter().take(self.num_blocks()).enumerate() {
            offset.push(acc);
            acc += if self.marks[k] == 0.0 {
                1
            } else {
                part.num_blocks()
            };
        }
        let mut marks = vec![0.0; acc];
        let mut position = vec![0usize; self.num_blocks()];
        let mut labels = Vec::with_capacity(self.level());
        for &k in &self.assignment {
            let k = k as usize;
            let p = position[k];
            position[k] += 1;
            if self.marks[k] == 0.0 {
                labels.push(offset[k]);
                marks[offset[k]] = 0.0;
            } else {
                let l = parts[k].block_of(p);
                labels.push(offset[k] + l);
                marks[offset[k] + l] = self.marks[k] * parts[k].marks[l];
            }
        }
        // Blocks of a part that fall outside the restriction stay unused.
        Self::from_labels_lenient(&labels, &marks)
    }

    /// True when every block of `self` lies inside a block of `other`.
    pub fn is_finer_than(&self, other: &MarkedPartition) -> bool {
        if self.level() != other.level() {
            return false;
        }
        let mut image = vec![u32::MAX; self.num_blocks()];
        for (i, &k) in self.assignment.iter().enumerate() {
            let target = other.assignment[i];
            let slot = &mut image[k as usize];
            if *slot == u32::MAX {
                *slot = target;
            } else if *slot != target {
                return false;
            }
        }
        true
    }

    /// Asymptotic-frequency estimate `(|B|/n, mark)` per block, sorted in
    /// lexicographically nonincreasing order.
    pub fn empirical_frequencies(&self) -> FrequencyEstimate {
        let n = self.level() as f64;
        let mut pairs: Vec<(f64, f64)> = self
            .block_sizes()
            .iter()
            .zip(&self.marks)
            .map(|(&b, &v)| (b as f64 / n, v))
            .collect();
        pairs.sort_by(|a, b| lex_cmp(*b, *a));
        FrequencyEstimate { pairs }
    }
}

/// Lexicographic order on `(size, mark)` pairs.
pub fn lex_cmp(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Block frequencies paired with block marks, lexicographically nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimate {
    pub pairs: Vec<(f64, f64)>,
}

impl fmt::Display for MarkedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.level())?;
        let labels: Vec<String> = self
            .assignment
            .iter()
            .map(|&k| (k + 1).to_string())
            .collect();
        writeln!(f, "{}", labels.join(" "))?;
        let marks: Vec<String> = self.marks.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", marks.join(" "))
    }
}

impl FromStr for MarkedPartition {
    type Err = EssfError;

    /// Parses the three-line text form `n=<level>`, block labels, marks.
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = match lines.next() {
            Some(h) => h,
            None => return parse("empty input"),
        };
        let n: usize = match header.strip_prefix("n=").map(|v| v.trim().parse()) {
            Some(Ok(n)) if n >= 1 => n,
            _ => return parse(format!("bad header line {header:?}")),
        };
        let labels_line = lines.next().ok_or_else(|| EssfError::Parse("missing labels".into()))?;
        let marks_line = lines.next().ok_or_else(|| EssfError::Parse("missing marks".into()))?;
        if lines.next().is_some() {
            return parse("trailing content after the marks line");
        }
        let mut labels = Vec::with_capacity(n);
        for tok in labels_line.split_whitespace() {
            match tok.parse::<usize>() {
                Ok(l) if l >= 1 => labels.push(l - 1),
                _ => return parse(format!("bad block label {tok:?}")),
            }
            if labels.len() > n {
                return parse(format!("more than {n} labels"));
            }
        }
        if labels.len() != n {
            return parse(format!("expected {n} labels, found {}", labels.len()));
        }
        let mut marks = Vec::new();
        for tok in marks_line.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(v) => marks.push(v),
                Err(_) => return parse(format!("bad mark {tok:?}")),
            }
            if marks.len() > n {
                return parse(format!("more than {n} marks"));
            }
        }
        Self::from_labels(&labels, &marks).map_err(|e| EssfError::Parse(e.to_string()))
    }
}

/// A bijection of `{0, …, n-1}`, stored as its image vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &s in &images {
            if s >= images.len() || seen[s] {
                return arg("permutation images must be a bijection of {1..n}");
            }
            seen[s] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            images: (0..n).collect(),
        }
    }

    /// The transposition of `i` and `j`.
    pub fn swap(n: usize, i: usize, j: usize) -> Result<Self> {
        if i >= n || j >= n {
            return arg("transposition indices out of range");
        }
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(i, j);
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    /// `self ∘ other`, i.e. `i ↦ self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return arg("composing permutations of different sizes");
        }
        Ok(Self {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        })
    }

    /// Restriction to `{0, …, n-1}`, which must be mapped onto itself.
    pub fn restrict(&self, n: usize) -> Result<Self> {
        if n > self.len() || self.images[..n].iter().any(|&s| s >= n) {
            return arg("permutation does not preserve {1..n}");
        }
        Ok(Self {
            images: self.images[..n].to_vec(),
        })
    }
}
