//! Pair lists (`indexA indexB same`) and template lists
//! (`templateId subjectId i,j,k`), UTF-8, one record per line, `#` starts a
//! comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairList {
    pub entries: Vec<Pair>,
}

impl PairList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.entries.iter().map(|p| p.same).collect()
    }

    /// Every index must name a template of `set`.
    pub fn check_templates(&self, set: &TemplateSet) -> Result<()> {
        for (k, p) in self.entries.iter().enumerate() {
            for id in [p.a, p.b] {
                let known = u32::try_from(id).is_ok_and(|id| set.templates.contains_key(&id));
                if !known {
                    return Err(Error::contract(format!(
                        "pair {k} references unknown template {id}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub subject: u32,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    pub templates: BTreeMap<u32, Template>,
}

impl TemplateSet {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (i + 1, body.split_whitespace().collect()))
    })
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::ParseLine {
        line,
        msg: msg.into(),
    }
}

fn index(line: usize, field: &str, limit: Option<usize>) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| bad(line, format!("invalid index {field:?}")))?;
    if let Some(limit) = limit {
        if v >= limit {
            return Err(bad(line, format!("index {v} out of range (have {limit} samples)")));
        }
    }
    Ok(v)
}

/// Parses a pair list. With `limit`, every index must be below it.
pub fn parse_pairs(text: &str, limit: Option<usize>) -> Result<PairList> {
    let mut entries = Vec::new();
    for (line, fields) in records(text) {
        let [a, b, same] = fields[..] else {
            return Err(bad(line, format!("expected 3 fields, found {}", fields.len())));
        };
        let same = match same {
            "1" => true,
            "0" => false,
            other => return Err(bad(line, format!("same flag must be 0 or 1, got {other:?}"))),
        };
        entries.push(Pair {
            a: index(line, a, limit)?,
            b: index(line, b, limit)?,
            same,
        });
    }
    Ok(PairList { entries })
}

pub fn write_pairs(pairs: &PairList) -> String {
    let mut out = String::new();
    for p in &pairs.entries {
        let _ = writeln!(out, "{} {} {}", p.a, p.b, u8::from(p.same));
    }
    out
}

/// Parses a template list. With `limit`, every sample index must be below it.
pub fn parse_templates(text: &str, limit: Option<usize>) -> Result<TemplateSet> {
    let mut templates = BTreeMap::new();
    for (line, fields) in records(text) {
        let [id, subject, samples] = fields[..] else {
            return Err(bad(line, format!("expected 3 fields, found {}", fields.len())));
        };
        let id: u32 = id
            .parse()
            .map_err(|_| bad(line, format!("invalid template id {id:?}")))?;
        let subject: u32 = subject
            .parse()
            .map_err(|_| bad(line, format!("invalid subject id {subject:?}")))?;
        let samples = samples
            .split(',')
            .map(|f| index(line, f, limit))
            .collect::<Result<Vec<_>>>()?;
        if templates.insert(id, Template { subject, samples }).is_some() {
            return Err(bad(line, format!("duplicate template id {id}")));
        }
    }
    Ok(TemplateSet { templates })
}

pub fn write_templates(set: &TemplateSet) -> String {
    let mut out = String::new();
    for (id, t) in &set.templates {
        let samples: Vec<String> = t.samples.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{id} {} {}", t.subject, samples.join(","));
    }
    out
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>, limit: Option<usize>) -> Result<PairList> {
    parse_pairs(&read(path.as_ref())?, limit)
}

pub fn load_templates(path: impl AsRef<Path>, limit: Option<usize>) -> Result<TemplateSet> {
    parse_templates(&read(path.as_ref())?, limit)
}

/// `count` random pairs over `labels`, half same-class and half
/// different-class, in shuffled order.
pub fn sample_pairs(labels: &[usize], count: usize, seed: u64) -> Result<PairList> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let pairable: Vec<usize> = (0..classes).filter(|&c| by_class[c].len() >= 2).collect();
    let populated = by_class.iter().filter(|v| !v.is_empty()).count();
    if count > 0 && (pairable.is_empty() || populated < 2) {
        return Err(Error::contract(
            "pair sampling needs two populated classes and one class with two samples",
        ));
    }

    let mut rng = Rng::new(seed);
    let mut entries = Vec::with_capacity(count);
    let same_count = count / 2;
    for _ in 0..same_count {
        let members = &by_class[pairable[rng.below(pairable.len())]];
        let a = rng.below(members.len());
        let mut b = rng.below(members.len() - 1);
        if b >= a {
            b += 1;
        }
        entries.push(Pair {
            a: members[a],
            b: members[b],
            same: true,
        });
    }
    while entries.len() < count {
        let a = rng.below(labels.len());
        let b = rng.below(labels.len());
        if labels[a] != labels[b] {
            entries.push(Pair { a, b, same: false });
        }
    }
    rng.shuffle(&mut entries);
    Ok(PairList { entries })
}

/// Groups each class's samples, in dataset order, into templates of at most
/// `size` samples. Template ids count up from 0; the subject is the class.
pub fn templates_by_class(labels: &[usize], size: usize) -> Result<TemplateSet> {
    if size == 0 {
        return Err(Error::contract("template size must be >= 1"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut templates = BTreeMap::new();
    let mut next_id = 0u32;
    for class in 0..classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        for chunk in members.chunks(size) {
            templates.insert(
                next_id,
                Template {
                    subject: class as u32,
                    samples: chunk.to_vec(),
                },
            );
            next_id += 1;
        }
    }
    Ok(TemplateSet { templates })
}
