//! Streaming readers for plain-text corpora laid out as one file per
//! language (`<lang>.txt`) or per pair (`<src>__<tgt>.tsv`).

use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MonoExample, ParallelExample};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    MonoLines,
    ParallelTsv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Mono(MonoExample),
    Parallel(ParallelExample),
}

/// A skipped row, recorded for the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub file: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub files: usize,
    pub examples: usize,
    pub blank_lines: usize,
    pub malformed: Vec<Skipped>,
}

struct OpenFile {
    path: PathBuf,
    langs: (String, Option<String>),
    lines: Lines<BufReader<File>>,
    line_no: usize,
}

/// Single-consumer iterator over all examples under a directory.
pub struct Ingest {
    layout: Layout,
    pending: std::vec::IntoIter<PathBuf>,
    current: Option<OpenFile>,
    summary: IngestSummary,
}

/// Open every `.txt` (mono) or `.tsv` (parallel) file below `root`, in
/// sorted path order.
pub fn ingest_external(root: &Path, layout: Layout) -> Result<Ingest> {
    let ext = match layout {
        Layout::MonoLines => "txt",
        Layout::ParallelTsv => "tsv",
    };
    let mut files = Vec::new();
    collect(root, ext, &mut files)?;
    files.sort();
    Ok(Ingest {
        layout,
        pending: files.into_iter(),
        current: None,
        summary: IngestSummary::default(),
    })
}

fn collect(dir: &Path, ext: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        if path.is_dir() {
            collect(&path, ext, out)?;
        } else if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    Ok(())
}

fn langs_for(path: &Path, layout: Layout) -> Result<(String, Option<String>)> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Parse(format!("bad file name {}", path.display())))?;
    match layout {
        Layout::MonoLines => Ok((stem.to_string(), None)),
        Layout::ParallelTsv => {
            let (s, t) = stem.split_once("__").ok_or_else(|| {
                Error::Parse(format!("{}: expected <src>__<tgt>.tsv", path.display()))
            })?;
            Ok((s.to_string(), Some(t.to_string())))
        }
    }
}

impl Ingest {
    pub fn summary(&self) -> &IngestSummary {
        &self.summary
    }

    /// Drain the iterator, returning the examples and the final summary.
    pub fn collect_all(mut self) -> Result<(Vec<Example>, IngestSummary)> {
        let mut out = Vec::new();
        for ex in self.by_ref() {
            out.push(ex?);
        }
        Ok((out, self.summary))
    }

    fn open_next(&mut self) -> Option<Result<()>> {
        let path = self.pending.next()?;
        let result = (|| {
            let langs = langs_for(&path, self.layout)?;
            let file = File::open(&path).at(&path)?;
            self.summary.files += 1;
            self.current = Some(OpenFile {
                path,
                langs,
                lines: BufReader::new(file).lines(),
                line_no: 0,
            });
            Ok(())
        })();
        Some(result)
    }
}

impl Iterator for Ingest {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.current.is_none() {
                match self.open_next()? {
                    Ok(()) => {}
                    Err(e) => return Some(Err(e)),
                }
            }
            let cur = self.current.as_mut().unwrap();
            let line = match cur.lines.next() {
                None => {
                    self.current = None;
                    continue;
                }
                Some(Err(e)) => return Some(Err(Error::io(cur.path.clone(), e))),
                Some(Ok(l)) => l,
            };
            cur.line_no += 1;
            if line.trim().is_empty() {
                self.summary.blank_lines += 1;
                continue;
            }
            let example = match (&cur.langs.1, self.layout) {
                (None, _) => Example::Mono(MonoExample {
                    lang: cur.langs.0.clone(),
                    text: line,
                }),
                (Some(tgt), _) => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    if fields.len() != 2 || fields.iter().any(|f| f.trim().is_empty()) {
                        self.summary.malformed.push(Skipped {
                            file: cur.path.clone(),
                            line: cur.line_no,
                            reason: format!("expected 2 non-empty fields, found {}", fields.len()),
                        });
                        continue;
                    }
                    Example::Parallel(ParallelExample {
                        src_lang: cur.langs.0.clone(),
                        tgt_lang: tgt.clone(),
                        src_text: fields[0].to_string(),
                        tgt_text: fields[1].to_string(),
                    })
                }
            };
            self.summary.examples += 1;
            return Some(Ok(example));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn blank_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("xx.txt"), "a\n\nb\n").unwrap();
        let (examples, summary) = ingest_external(dir.path(), Layout::MonoLines)
            .unwrap()
            .collect_all()
            .unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(summary.blank_lines, 1);
        assert_eq!(
            examples[0],
            Example::Mono(MonoExample { lang: "xx".into(), text: "a".into() })
        );
    }

    #[test]
    fn malformed_tsv_rows_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("de__en.tsv"), "ein\tone\na\tb\tc\td\nzwei\ttwo\n").unwrap();
        let (examples, summary) = ingest_external(dir.path(), Layout::ParallelTsv)
            .unwrap()
            .collect_all()
            .unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(summary.malformed.len(), 1);
        assert_eq!(summary.malformed[0].line, 2);
    }

    #[test]
    fn bad_parallel_file_name_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("deen.tsv"), "a\tb\n").unwrap();
        let mut it = ingest_external(dir.path(), Layout::ParallelTsv).unwrap();
        assert!(matches!(it.next(), Some(Err(Error::Parse(_)))));
    }
}
