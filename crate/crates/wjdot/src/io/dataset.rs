//! Plain-text dataset files, one record per line.
//!
//! ```text
//! format wjdot-dataset 1
//! kind source
//! id s0
//! group a
//! dim 3
//! classes 4
//! data
//! s 0.25 -1.5 0.75 2
//! ```
//!
//! Source files carry `s` rows (features then class index). Target files
//! use `kind target`, carry `a` rows (unlabeled adaptation inputs) and
//! optionally `t` rows (labeled test samples); their `group` line records
//! the known true group, or `unknown`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::{Group, JointSample, SourceDomain, TargetDomain};
use crate::{Error, Result};
use ndarray::Array1;

const FORMAT_LINE: &str = "format wjdot-dataset 1";

/// A parsed dataset file: either one source domain or one target domain
/// with its (possibly unknown) true group.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Source(SourceDomain),
    Target {
        domain: TargetDomain,
        true_group: Option<Group>,
    },
}

impl Dataset {
    pub fn id(&self) -> &str {
        match self {
            Dataset::Source(s) => &s.id,
            Dataset::Target { domain, .. } => &domain.id,
        }
    }
}

fn fmt_features(out: &mut String, features: &Array1<f64>) {
    for v in features {
        let _ = write!(out, " {v}");
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(FORMAT_LINE);
    out.push('\n');
    match dataset {
        Dataset::Source(source) => {
            let dim = source.feature_dim().unwrap_or(0);
            let classes = source.label_dim().unwrap_or(0);
            let _ = writeln!(out, "kind source");
            let _ = writeln!(out, "id {}", source.id);
            let _ = writeln!(out, "group {}", source.group.as_str());
            let _ = writeln!(out, "dim {dim}");
            let _ = writeln!(out, "classes {classes}");
            out.push_str("data\n");
            for sample in &source.samples {
                let class = sample.one_hot_class().ok_or_else(|| {
                    Error::invalid("dataset save", "source labels must be one-hot")
                })?;
                out.push('s');
                fmt_features(&mut out, &sample.features);
                let _ = writeln!(out, " {class}");
            }
        }
        Dataset::Target { domain, true_group } => {
            let dim = domain
                .adaptation_inputs
                .first()
                .map(|x| x.len())
                .or_else(|| {
                    domain
                        .test_samples
                        .as_ref()
                        .and_then(|t| t.first().map(|s| s.features.len()))
                })
                .unwrap_or(0);
            let classes = domain
                .test_samples
                .as_ref()
                .and_then(|t| t.first().map(|s| s.label.len()))
                .unwrap_or(0);
            let _ = writeln!(out, "kind target");
            let _ = writeln!(out, "id {}", domain.id);
            let group = true_group.map_or("unknown", Group::as_str);
            let _ = writeln!(out, "group {group}");
            let _ = writeln!(out, "dim {dim}");
            let _ = writeln!(out, "classes {classes}");
            out.push_str("data\n");
            for x in &domain.adaptation_inputs {
                out.push('a');
                fmt_features(&mut out, x);
                out.push('\n');
            }
            for sample in domain.test_samples.iter().flatten() {
                let class = sample.one_hot_class().ok_or_else(|| {
                    Error::invalid("dataset save", "test labels must be one-hot")
                })?;
                out.push('t');
                fmt_features(&mut out, &sample.features);
                let _ = writeln!(out, " {class}");
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Header {
    kind: String,
    id: String,
    group: Option<Group>,
    dim: usize,
    classes: usize,
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let err = |line: usize, message: String| Error::Parse {
        path: path_str.clone(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    if first.trim() != FORMAT_LINE {
        return Err(err(1, format!("expected '{FORMAT_LINE}'")));
    }

    let mut kind = None;
    let mut id = None;
    let mut group = None;
    let mut dim = None;
    let mut classes = None;
    let mut data_line = None;
    for (idx, raw) in &mut lines {
        let line = raw.trim();
        let lineno = idx + 1;
        if line == "data" {
            data_line = Some(lineno);
            break;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(lineno, format!("malformed header line '{line}'")))?;
        let value = value.trim();
        match key {
            "kind" => kind = Some(value.to_string()),
            "id" => id = Some(value.to_string()),
            "group" => {
                group = if value == "unknown" {
                    Some(None)
                } else {
                    Some(Some(Group::parse(value).ok_or_else(|| {
                        err(lineno, format!("unknown group tag '{value}'"))
                    })?))
                }
            }
            "dim" => {
                dim = Some(value.parse::<usize>().map_err(|_| {
                    err(lineno, format!("invalid dim '{value}'"))
                })?)
            }
            "classes" => {
                classes = Some(value.parse::<usize>().map_err(|_| {
                    err(lineno, format!("invalid classes '{value}'"))
                })?)
            }
            other => return Err(err(lineno, format!("unknown header field '{other}'"))),
        }
    }
    let data_line = data_line.ok_or_else(|| err(1, "missing 'data' marker".into()))?;
    let header = Header {
        kind: kind.ok_or_else(|| err(data_line, "missing header field 'kind'".into()))?,
        id: id.ok_or_else(|| err(data_line, "missing header field 'id'".into()))?,
        group: group
            .ok_or_else(|| err(data_line, "missing header field 'group'".into()))?,
        dim: dim.ok_or_else(|| err(data_line, "missing header field 'dim'".into()))?,
        classes: classes
            .ok_or_else(|| err(data_line, "missing header field 'classes'".into()))?,
    };

    let parse_row = |lineno: usize, fields: &[&str], labeled: bool| -> Result<(Array1<f64>, Option<usize>)> {
        let expected = header.dim + usize::from(labeled);
        if fields.len() != expected {
            return Err(err(
                lineno,
                format!("expected {expected} values, got {}", fields.len()),
            ));
        }
        let mut features = Array1::zeros(header.dim);
        for (i, field) in fields[..header.dim].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(lineno, format!("invalid number '{field}'")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value '{field}'")));
            }
            features[i] = v;
        }
        let class = if labeled {
            let raw = fields[header.dim];
            let class: usize = raw
                .parse()
                .map_err(|_| err(lineno, format!("invalid class index '{raw}'")))?;
            if class >= header.classes {
                return Err(err(
                    lineno,
                    format!("class index {class} out of range for {} classes", header.classes),
                ));
            }
            Some(class)
        } else {
            None
        };
        Ok((features, class))
    };

    let mut source_samples = Vec::new();
    let mut adaptation_inputs = Vec::new();
    let mut test_samples = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = line.split_whitespace().collect();
        let tag = fields.remove(0);
        match (header.kind.as_str(), tag) {
            ("source", "s") => {
                let (features, class) = parse_row(lineno, &fields, true)?;
                source_samples.push(JointSample::one_hot(
                    features,
                    class.expect("labeled row"),
                    header.classes,
                )?);
            }
            ("target", "a") => {
                let (features, _) = parse_row(lineno, &fields, false)?;
                adaptation_inputs.push(features);
            }
            ("target", "t") => {
                let (features, class) = parse_row(lineno, &fields, true)?;
                test_samples.push(JointSample::one_hot(
                    features,
                    class.expect("labeled row"),
                    header.classes,
                )?);
            }
            (_, tag) => return Err(err(lineno, format!("unexpected row tag '{tag}'"))),
        }
    }

    match header.kind.as_str() {
        "source" => {
            let group = header
                .group
                .ok_or_else(|| err(data_line, "source files need a concrete group".into()))?;
            Ok(Dataset::Source(SourceDomain {
                id: header.id,
                samples: source_samples,
                group,
            }))
        }
        "target" => Ok(Dataset::Target {
            domain: TargetDomain {
                id: header.id,
                adaptation_inputs,
                test_samples: if test_samples.is_empty() {
                    None
                } else {
                    Some(test_samples)
                },
            },
            true_group: header.group,
        }),
        other => Err(err(data_line, format!("unknown dataset kind '{other}'"))),
    }
}
