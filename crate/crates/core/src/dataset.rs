//! Encoded datasets and their on-disk formats.
//!
//! Embedding file:
//!
//! ```text
//! n=<rows> d=<dim>
//! [label=<k>] [domain=<s>] v1 v2 ... vd
//! ```
//!
//! Corpus file: one document per line, `label<TAB>domain<TAB>text`, where a
//! missing label or domain is written as `-`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Rows of the representation space with optional labels and domain tags.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub representations: Matrix,
    pub labels: Vec<Option<usize>>,
    pub domain_tags: Vec<Option<String>>,
}

impl EncodedDataset {
    pub fn new(
        representations: Matrix,
        labels: Vec<Option<usize>>,
        domain_tags: Vec<Option<String>>,
    ) -> Result<Self> {
        let n = representations.nrows();
        if labels.len() != n || domain_tags.len() != n {
            return Err(Error::Dimension(format!(
                "{n} rows but {} labels and {} domain tags",
                labels.len(),
                domain_tags.len()
            )));
        }
        if !representations.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        Ok(Self {
            representations,
            labels,
            domain_tags,
        })
    }

    /// Unlabeled, untagged rows.
    pub fn unlabeled(representations: Matrix) -> Result<Self> {
        let n = representations.nrows();
        Self::new(representations, vec![None; n], vec![None; n])
    }

    pub fn len(&self) -> usize {
        self.representations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.representations.ncols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// All labels, or a data error naming the first unlabeled row.
    pub fn required_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Data(format!("row {i} has no label"))))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Same rows with labels removed.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: vec![None; self.len()],
            ..self.clone()
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            representations: self.representations.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            domain_tags: rows.iter().map(|&i| self.domain_tags[i].clone()).collect(),
        }
    }

    /// Distinct domain tags in sorted order.
    pub fn domains(&self) -> Vec<String> {
        self.domain_tags
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn rows_in_domain(&self, domain: &str) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.domain_tags[i].as_deref() == Some(domain))
            .collect()
    }

    pub fn rows_not_in_domain(&self, domain: &str) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.domain_tags[i].as_deref() != Some(domain))
            .collect()
    }

    /// Stacks datasets row-wise.
    pub fn concat(parts: &[&EncodedDataset]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::Data("nothing to concatenate".into()));
        };
        let d = first.dim();
        if let Some(bad) = parts.iter().find(|p| p.dim() != d) {
            return Err(Error::Dimension(format!(
                "cannot stack dimension {} onto {d}",
                bad.dim()
            )));
        }
        let views: Vec<_> = parts.iter().map(|p| p.representations.view()).collect();
        let representations = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self {
            representations,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            domain_tags: parts
                .iter()
                .flat_map(|p| p.domain_tags.iter().cloned())
                .collect(),
        })
    }

    pub fn to_embedding_string(&self) -> String {
        let mut out = format!("n={} d={}\n", self.len(), self.dim());
        for (i, row) in self.representations.rows().into_iter().enumerate() {
            let mut fields: Vec<String> = Vec::with_capacity(row.len() + 2);
            if let Some(l) = self.labels[i] {
                fields.push(format!("label={l}"));
            }
            if let Some(tag) = &self.domain_tags[i] {
                fields.push(format!("domain={tag}"));
            }
            fields.extend(row.iter().map(|v| format!("{v}")));
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    pub fn write_embeddings(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_embedding_string())?;
        Ok(())
    }

    pub fn parse_embeddings(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let Some((_, header)) = lines.next() else {
            return Err(Error::format(1, "missing header"));
        };
        let (n, d) = parse_header(header)?;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        let mut rows = 0usize;
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            if rows > n {
                return Err(Error::format(lineno, format!("more than n={n} rows")));
            }
            let mut label = None;
            let mut tag = None;
            let mut values = 0usize;
            for tok in line.split_whitespace() {
                if let Some(v) = tok.strip_prefix("label=") {
                    if values > 0 {
                        return Err(Error::format(lineno, "label= after values"));
                    }
                    if v != "-" {
                        label = Some(v.parse::<usize>().map_err(|_| {
                            Error::format(lineno, format!("bad label {v:?}"))
                        })?);
                    }
                } else if let Some(v) = tok.strip_prefix("domain=") {
                    if values > 0 {
                        return Err(Error::format(lineno, "domain= after values"));
                    }
                    if v != "-" {
                        tag = Some(v.to_string());
                    }
                } else {
                    let x: f64 = tok
                        .parse()
                        .map_err(|_| Error::format(lineno, format!("bad number {tok:?}")))?;
                    if !x.is_finite() {
                        return Err(Error::format(lineno, format!("non-finite value {tok:?}")));
                    }
                    data.push(x);
                    values += 1;
                }
            }
            if values != d {
                return Err(Error::format(
                    lineno,
                    format!("expected {d} values, found {values}"),
                ));
            }
            labels.push(label);
            tags.push(tag);
        }
        if rows != n {
            return Err(Error::format(
                text.lines().count() + 1,
                format!("header declares n={n} rows, found {rows}"),
            ));
        }
        let representations = Array2::from_shape_vec((n, d), data).expect("row widths checked");
        Self::new(representations, labels, tags)
    }

    pub fn read_embeddings(path: &Path) -> Result<Self> {
        Self::parse_embeddings(&fs::read_to_string(path)?)
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut n = None;
    let mut d = None;
    for tok in line.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(1, format!("malformed header token {tok:?}")))?;
        let v: usize = value
            .parse()
            .map_err(|_| Error::format(1, format!("malformed header value {tok:?}")))?;
        match key {
            "n" => n = Some(v),
            "d" => d = Some(v),
            _ => return Err(Error::format(1, format!("unknown header key {key:?}"))),
        }
    }
    match (n, d) {
        (Some(n), Some(d)) if d > 0 => Ok((n, d)),
        _ => Err(Error::format(1, "header must be \"n=<rows> d=<dim>\" with d > 0")),
    }
}

/// One raw document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub text: String,
    pub label: Option<usize>,
    pub domain_tag: Option<String>,
}

impl Document {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            label: None,
            domain_tag: None,
        }
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(label), Some(domain), Some(body)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::format(lineno, "expected label<TAB>domain<TAB>text"));
        };
        let label = match label {
            "-" => None,
            l => Some(
                l.parse::<usize>()
                    .map_err(|_| Error::format(lineno, format!("bad label {l:?}")))?,
            ),
        };
        let domain_tag = match domain {
            "-" => None,
            d => Some(d.to_string()),
        };
        docs.push(Document {
            text: body.to_string(),
            label,
            domain_tag,
        });
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn corpus_to_string(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let label = d.label.map_or_else(|| "-".to_string(), |l| l.to_string());
        let domain = d.domain_tag.as_deref().unwrap_or("-");
        let text = d.text.replace(['\t', '\n', '\r'], " ");
        let _ = writeln!(out, "{label}\t{domain}\t{text}");
    }
    out
}
