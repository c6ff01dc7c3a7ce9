use serde::{Deserialize, Serialize};

use crate::{CoadError, Result};

/// Aligned feature rows for the two views, optionally with ground truth.
///
/// Rows are stored flat and row-major: row `i` of the `s` view is
/// `s[i*d_s .. (i+1)*d_s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset<F> {
    s: Vec<F>,
    q: Vec<F>,
    d_s: usize,
    d_q: usize,
    labels: Option<Vec<bool>>,
    /// Generator echo, or "external".
    pub metadata: String,
}

impl<F: Clone> PairedDataset<F> {
    pub fn new(
        s: Vec<F>,
        d_s: usize,
        q: Vec<F>,
        d_q: usize,
        labels: Option<Vec<bool>>,
        metadata: impl Into<String>,
    ) -> Result<Self> {
        if d_s == 0 || d_q == 0 {
            return Err(CoadError::Empty("feature dimension"));
        }
        if !s.len().is_multiple_of(d_s) || !q.len().is_multiple_of(d_q) {
            return Err(CoadError::Precondition(
                "feature buffer is not a whole number of rows".into(),
            ));
        }
        let n = s.len() / d_s;
        if q.len() / d_q != n {
            return Err(CoadError::LengthMismatch {
                what: "s rows vs q rows",
                left: n,
                right: q.len() / d_q,
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(CoadError::LengthMismatch {
                    what: "labels vs rows",
                    left: l.len(),
                    right: n,
                });
            }
        }
        Ok(Self {
            s,
            q,
            d_s,
            d_q,
            labels,
            metadata: metadata.into(),
        })
    }

    /// One scalar score per view.
    pub fn from_scores(
        s: Vec<F>,
        q: Vec<F>,
        labels: Option<Vec<bool>>,
        metadata: impl Into<String>,
    ) -> Result<Self> {
        Self::new(s, 1, q, 1, labels, metadata)
    }

    pub fn len(&self) -> usize {
        self.s.len() / self.d_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_q(&self) -> usize {
        self.d_q
    }

    pub fn s_row(&self, i: usize) -> &[F] {
        &self.s[i * self.d_s..(i + 1) * self.d_s]
    }

    pub fn q_row(&self, i: usize) -> &[F] {
        &self.q[i * self.d_q..(i + 1) * self.d_q]
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    /// Column `k` of the s view.
    pub fn s_column(&self, k: usize) -> Vec<F> {
        (0..self.len()).map(|i| self.s_row(i)[k].clone()).collect()
    }

    pub fn q_column(&self, k: usize) -> Vec<F> {
        (0..self.len()).map(|i| self.q_row(i)[k].clone()).collect()
    }

    /// Copies the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut s = Vec::with_capacity(rows.len() * self.d_s);
        let mut q = Vec::with_capacity(rows.len() * self.d_q);
        for &i in rows {
            s.extend_from_slice(self.s_row(i));
            q.extend_from_slice(self.q_row(i));
        }
        Self {
            s,
            q,
            d_s: self.d_s,
            d_q: self.d_q,
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
            metadata: self.metadata.clone(),
        }
    }
}
