//! Token streams with onset times and sentence boundaries, plus the sidecar
//! CSV format `token,onset_seconds,sentence_id`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A token sequence with per-token onset seconds and sentence end boundaries.
///
/// `sentence_breaks` holds end-exclusive indices: sentence `j` spans
/// `[breaks[j-1], breaks[j])` (with an implicit 0 for the first). A trailing
/// partial sentence after the last break is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedCorpus {
    tokens: Vec<u32>,
    onsets: Vec<f64>,
    sentence_breaks: Vec<usize>,
}

impl TimedCorpus {
    pub fn new(tokens: Vec<u32>, onsets: Vec<f64>, sentence_breaks: Vec<usize>) -> Result<Self> {
        if tokens.len() != onsets.len() {
            return Err(Error::shape(format!(
                "{} tokens vs {} onsets",
                tokens.len(),
                onsets.len()
            )));
        }
        if let Some(&first) = onsets.first() {
            if first < 0.0 {
                return Err(Error::config("onsets must start at or after 0"));
            }
        }
        if onsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("onsets must be monotone nondecreasing"));
        }
        if sentence_breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sentence breaks must be strictly increasing"));
        }
        if sentence_breaks.iter().any(|&b| b == 0 || b > tokens.len()) {
            return Err(Error::config("sentence breaks out of range"));
        }
        Ok(Self {
            tokens,
            onsets,
            sentence_breaks,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn onsets(&self) -> &[f64] {
        &self.onsets
    }

    pub fn sentence_breaks(&self) -> &[usize] {
        &self.sentence_breaks
    }

    /// Sentence id of each token, counting from 0.
    pub fn sentence_ids(&self) -> Vec<usize> {
        let mut ids = vec![0usize; self.len()];
        let mut sid = 0;
        let mut next_break = self.sentence_breaks.first().copied();
        for (i, id) in ids.iter_mut().enumerate() {
            if let Some(b) = next_break {
                if i >= b {
                    sid += 1;
                    next_break = self.sentence_breaks.get(sid).copied();
                }
            }
            *id = sid;
        }
        ids
    }

    /// Token index ranges of each sentence, including a trailing partial one.
    pub fn sentence_ranges(&self) -> Vec<(usize, usize)> {
        let mut ranges = Vec::with_capacity(self.sentence_breaks.len() + 1);
        let mut start = 0;
        for &b in &self.sentence_breaks {
            ranges.push((start, b));
            start = b;
        }
        if start < self.len() {
            ranges.push((start, self.len()));
        }
        ranges
    }

    /// The sub-corpus with onsets in `[t0, t1)`, rebased so onsets start at 0.
    pub fn slice_by_time(&self, t0: f64, t1: f64) -> Self {
        let start = self.onsets.partition_point(|&o| o < t0);
        let end = self.onsets.partition_point(|&o| o < t1);
        let tokens = self.tokens[start..end].to_vec();
        let onsets = self.onsets[start..end].iter().map(|&o| o - t0).collect();
        let breaks = self
            .sentence_breaks
            .iter()
            .filter(|&&b| b > start && b <= end)
            .map(|&b| b - start)
            .collect();
        Self {
            tokens,
            onsets,
            sentence_breaks: breaks,
        }
    }

    pub fn max_token(&self) -> Option<u32> {
        self.tokens.iter().copied().max()
    }

    /// Writes the sidecar CSV `token,onset_seconds,sentence_id`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ids = self.sentence_ids();
        let mut out = String::from("token,onset_seconds,sentence_id\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", self.tokens[i], self.onsets[i], ids[i]));
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads the sidecar CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut tokens = Vec::new();
        let mut onsets = Vec::new();
        let mut ids: Vec<usize> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                continue; // header
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse_err =
                |what: &str| Error::format(format!("{}:{}: bad {what}", path.display(), lineno + 1));
            let tok: u32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("token"))?;
            let onset: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("onset"))?;
            let sid: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("sentence_id"))?;
            tokens.push(tok);
            onsets.push(onset);
            ids.push(sid);
        }
        let mut breaks = Vec::new();
        for i in 1..ids.len() {
            if ids[i] != ids[i - 1] {
                breaks.push(i);
            }
        }
        Self::new(tokens, onsets, breaks)
    }

    /// Renders tokens as bytes. Token ids must fit in a byte.
    pub fn to_text(&self) -> Result<String> {
        let bytes: Vec<u8> = self
            .tokens
            .iter()
            .map(|&t| {
                u8::try_from(t).map_err(|_| Error::format(format!("token {t} exceeds byte range")))
            })
            .collect::<Result<_>>()?;
        String::from_utf8(bytes).map_err(|_| Error::format("corpus bytes are not valid UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> TimedCorpus {
        TimedCorpus::new(
            vec![10, 11, 12, 13, 14],
            vec![0.0, 0.5, 1.0, 1.5, 2.0],
            vec![2, 4],
        )
        .unwrap()
    }

    #[test]
    fn sentence_ids_follow_breaks() {
        assert_eq!(sample().sentence_ids(), vec![0, 0, 1, 1, 2]);
    }

    #[test]
    fn sentence_ranges_include_trailing_partial() {
        assert_eq!(sample().sentence_ranges(), vec![(0, 2), (2, 4), (4, 5)]);
    }

    #[test]
    fn csv_round_trip() {
        let c = sample();
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        c.write_csv(&path).unwrap();
        let back = TimedCorpus::read_csv(&path).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn slice_by_time_rebases_onsets() {
        let c = sample();
        let s = c.slice_by_time(1.0, 2.0);
        assert_eq!(s.tokens(), &[12, 13]);
        assert_eq!(s.onsets(), &[0.0, 0.5]);
        assert_eq!(s.sentence_breaks(), &[2]);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(TimedCorpus::new(vec![1], vec![-0.1], vec![]).is_err());
        assert!(TimedCorpus::new(vec![1, 2], vec![1.0, 0.5], vec![]).is_err());
        assert!(TimedCorpus::new(vec![1, 2], vec![0.0, 1.0], vec![3]).is_err());
    }
}
