//! File formats.
//!
//! All tables are comma-separated with a header row except the summary and
//! SLOR tables, which are whitespace-aligned text. Lines starting with `#`
//! are comments; writers use them for provenance and readers skip them.
//!
//! Dataset: `id,case,gs_available,ss_available,brs_<name>...,ss_<name>...,gs_<name>...`
//! with cells `0`/`1`, and `NA` exactly where the availability flag is 0.
//!
//! Draws: `chain,iter,<parameter names>` with one comment line
//! `# chain <k> seed <s> burnin <b> thin <t>` per chain. Chains are numbered
//! from 0; `iter` counts sweeps including burn-in.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};
use tempfile::NamedTempFile;

use crate::diagnostics::{CredibleRegion, PatternFrequencyTable, PosteriorSummary, SlorTable};
use crate::error::{PlcmError, Result};
use crate::model::{param_names, Dataset, ModelParams, PathogenPanel, SubjectRecord};
use crate::prediction::{argmax, EtiologyPrediction};
use crate::sampler::{Chain, ChainSet};

const FIXED: [&str; 4] = ["id", "case", "gs_available", "ss_available"];

fn parse_err(source: &str, line: u64, field: Option<&str>, message: impl Into<String>) -> PlcmError {
    PlcmError::Parse {
        path: source.to_string(),
        line,
        field: field.map(str::to_string),
        message: message.into(),
    }
}

fn csv_err(source: &str, e: csv::Error) -> PlcmError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("row has {len} fields, header has {expected_len}")
        }
        _ => e.to_string(),
    };
    parse_err(source, line, None, message)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    ReaderBuilder::new().comment(Some(b'#')).from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(w)
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Writes each line prefixed with `# `.
pub fn write_comments<W: Write + ?Sized>(w: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

/// Writes through a temporary file in the destination directory, renamed
/// into place once complete.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

// ---- dataset ----

pub fn dataset_header(panel: &PathogenPanel) -> Vec<String> {
    let mut h: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    h.extend(panel.names().iter().map(|n| format!("brs_{n}")));
    h.extend(panel.ss_panel().iter().map(|&j| format!("ss_{}", panel.name(j))));
    h.extend(panel.names().iter().map(|n| format!("gs_{n}")));
    h
}

pub fn write_dataset<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(dataset_header(&ds.panel)).map_err(|e| csv_err("<output>", e))?;
    let (j, n_ss) = (ds.panel.len(), ds.panel.n_ss());
    for s in &ds.subjects {
        let mut row: Vec<&str> = vec![&s.id, bit(s.case), bit(s.gs_available), bit(s.ss_available)];
        row.extend(s.brs.iter().map(|&b| bit(b)));
        match (s.ss_available, &s.ss) {
            (true, Some(ss)) => row.extend(ss.iter().map(|&b| bit(b))),
            _ => row.extend(std::iter::repeat("NA").take(n_ss)),
        }
        match (s.gs_available, &s.gs) {
            (true, Some(gs)) => row.extend(gs.iter().map(|&b| bit(b))),
            _ => row.extend(std::iter::repeat("NA").take(j)),
        }
        wr.write_record(&row).map_err(|e| csv_err("<output>", e))?;
    }
    wr.flush()?;
    Ok(())
}

fn parse_bit(cell: &str, source: &str, line: u64, field: &str) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(source, line, Some(field), format!("expected 0 or 1, got {cell:?}"))),
    }
}

/// Reads a dataset. The panel comes from the header unless `expected` is
/// given, in which case the header must match it.
pub fn read_dataset<R: Read>(r: R, source: &str, expected: Option<&PathogenPanel>) -> Result<Dataset> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| csv_err(source, e))?.clone();
    let hline = line_of(&header);
    let cols: Vec<&str> = header.iter().collect();
    for (k, want) in FIXED.iter().enumerate() {
        if cols.get(k) != Some(want) {
            return Err(parse_err(source, hline, cols.get(k).copied(), format!("column {} must be {want}", k + 1)));
        }
    }
    let mut names: Vec<String> = Vec::new();
    let mut ss_names: Vec<String> = Vec::new();
    let mut gs_names: Vec<String> = Vec::new();
    for c in &cols[4..] {
        if let Some(n) = c.strip_prefix("brs_") {
            if !ss_names.is_empty() || !gs_names.is_empty() {
                return Err(parse_err(source, hline, Some(c), "bronze columns must precede silver and gold columns"));
            }
            names.push(n.to_string());
        } else if let Some(n) = c.strip_prefix("ss_") {
            if !gs_names.is_empty() {
                return Err(parse_err(source, hline, Some(c), "silver columns must precede gold columns"));
            }
            ss_names.push(n.to_string());
        } else if let Some(n) = c.strip_prefix("gs_") {
            gs_names.push(n.to_string());
        } else {
            return Err(parse_err(source, hline, Some(c), "unknown column"));
        }
    }
    if gs_names != names {
        return Err(parse_err(source, hline, None, "gold columns must list the bronze pathogens in the same order"));
    }
    let panel = PathogenPanel::from_names(&names, &ss_names)
        .map_err(|e| parse_err(source, hline, None, e.to_string()))?;
    let panel = match expected {
        Some(p) if p.names() != panel.names() || p.ss_panel() != panel.ss_panel() => {
            return Err(parse_err(source, hline, None, "header does not match the configured pathogen panel"));
        }
        Some(p) => p.clone(),
        None => panel,
    };
    let (j, n_ss) = (panel.len(), panel.n_ss());

    let mut subjects = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(source, e))?;
        let line = line_of(&rec);
        let cell = |k: usize| rec.get(k).unwrap_or("");
        let flag = |k: usize| parse_bit(cell(k), source, line, cols[k]);
        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(parse_err(source, line, Some("id"), "empty id"));
        }
        let (case, gs_available, ss_available) = (flag(1)?, flag(2)?, flag(3)?);
        let block = |start: usize, len: usize, available: bool| -> Result<Option<Vec<bool>>> {
            if available {
                (start..start + len).map(flag).collect::<Result<Vec<_>>>().map(Some)
            } else {
                for k in start..start + len {
                    if cell(k) != "NA" {
                        return Err(parse_err(source, line, Some(cols[k]), "expected NA where the availability flag is 0"));
                    }
                }
                Ok(None)
            }
        };
        let brs = block(4, j, true)?.expect("available");
        let ss = block(4 + j, n_ss, ss_available)?;
        let gs = block(4 + j + n_ss, j, gs_available)?;
        subjects.push(SubjectRecord {
            id,
            case,
            gs_available,
            ss_available,
            brs,
            ss,
            gs,
        });
    }
    Ok(Dataset::new(panel, subjects))
}

pub fn read_dataset_file(path: &Path, expected: Option<&PathogenPanel>) -> Result<Dataset> {
    read_dataset(open(path)?, &path.display().to_string(), expected)
}

pub fn write_dataset_file(path: &Path, ds: &Dataset, comments: &[String]) -> Result<()> {
    write_atomic(path, |w| {
        write_comments(w, comments)?;
        write_dataset(w, ds)
    })
}

// ---- draws ----

pub fn write_draws<W: Write>(mut w: W, chains: &ChainSet, panel: &PathogenPanel) -> Result<()> {
    for (k, c) in chains.chains.iter().enumerate() {
        writeln!(w, "# chain {k} seed {} burnin {} thin {}", c.seed, c.n_burnin, c.thin)?;
    }
    let mut wr = writer(w);
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(param_names(panel));
    wr.write_record(&header).map_err(|e| csv_err("<output>", e))?;
    for (k, c) in chains.chains.iter().enumerate() {
        for (i, d) in c.draws.iter().enumerate() {
            let mut row = vec![k.to_string(), c.iteration(i).to_string()];
            row.extend(d.to_flat().iter().map(|v| v.to_string()));
            wr.write_record(&row).map_err(|e| csv_err("<output>", e))?;
        }
    }
    wr.flush()?;
    Ok(())
}

struct ChainMeta {
    seed: u64,
    n_burnin: usize,
    thin: usize,
}

fn parse_chain_meta(line: &str) -> Option<(usize, ChainMeta)> {
    let t: Vec<&str> = line.trim_start_matches('#').split_whitespace().collect();
    match t.as_slice() {
        ["chain", k, "seed", s, "burnin", b, "thin", th] => Some((
            k.parse().ok()?,
            ChainMeta {
                seed: s.parse().ok()?,
                n_burnin: b.parse().ok()?,
                thin: th.parse().ok()?,
            },
        )),
        _ => None,
    }
}

/// Reads a draws file written by [`write_draws`]. Cause frequencies are not
/// stored in the file, so the chains have none.
pub fn read_draws<R: Read>(mut r: R, source: &str, panel: &PathogenPanel) -> Result<ChainSet> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut meta: Vec<(usize, ChainMeta)> = text.lines().filter(|l| l.starts_with('#')).filter_map(parse_chain_meta).collect();
    meta.sort_by_key(|m| m.0);

    let mut rdr = reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_err(source, e))?.clone();
    let mut want = vec!["chain".to_string(), "iter".to_string()];
    want.extend(param_names(panel));
    if header.iter().ne(want.iter().map(String::as_str)) {
        let bad = header.iter().zip(&want).find(|(a, b)| a != b).map(|(a, _)| a);
        return Err(parse_err(
            source,
            line_of(&header),
            bad,
            format!("header does not match the panel; expected {}", want.join(",")),
        ));
    }
    let (j, n_ss) = (panel.len(), panel.n_ss());
    let mut chains: Vec<Chain> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(source, e))?;
        let line = line_of(&rec);
        let k: usize = rec[0].parse().map_err(|_| parse_err(source, line, Some("chain"), "expected a chain index"))?;
        rec[1].parse::<usize>().map_err(|_| parse_err(source, line, Some("iter"), "expected an iteration number"))?;
        let vals = (2..rec.len())
            .map(|c| {
                rec[c]
                    .parse::<f64>()
                    .map_err(|_| parse_err(source, line, Some(&want[c]), format!("expected a number, got {:?}", &rec[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let params = ModelParams::from_flat(j, n_ss, &vals).map_err(|e| parse_err(source, line, None, e.to_string()))?;
        params.check().map_err(|e| parse_err(source, line, None, e.to_string()))?;
        if k == chains.len() {
            let m = meta.iter().find(|m| m.0 == k).map(|m| &m.1);
            chains.push(Chain {
                seed: m.map_or(0, |m| m.seed),
                n_burnin: m.map_or(0, |m| m.n_burnin),
                thin: m.map_or(1, |m| m.thin),
                draws: Vec::new(),
                cause_counts: Vec::new(),
            });
        } else if k + 1 != chains.len() {
            return Err(parse_err(source, line, Some("chain"), "chains must appear in order 0, 1, ..."));
        }
        chains.last_mut().expect("pushed").draws.push(params);
    }
    Ok(ChainSet { chains })
}

pub fn read_draws_file(path: &Path, panel: &PathogenPanel) -> Result<ChainSet> {
    read_draws(open(path)?, &path.display().to_string(), panel)
}

// ---- patterns and predictions ----

/// Reads `[id,]<name>...` rows of bronze patterns. Pathogen columns may come
/// in any order but must cover the panel exactly. Without an `id` column,
/// rows are numbered from 1.
pub fn read_patterns<R: Read>(r: R, source: &str, panel: &PathogenPanel) -> Result<Vec<(String, Vec<bool>)>> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| csv_err(source, e))?.clone();
    let hline = line_of(&header);
    let has_id = header.get(0) == Some("id");
    let skip = usize::from(has_id);
    let mut slot = Vec::new();
    for name in header.iter().skip(skip) {
        let j = panel
            .index_of(name)
            .ok_or_else(|| parse_err(source, hline, Some(name), format!("unknown pathogen {name:?}")))?;
        if slot.contains(&j) {
            return Err(parse_err(source, hline, Some(name), "duplicate pathogen column"));
        }
        slot.push(j);
    }
    if let Some(missing) = (0..panel.len()).find(|j| !slot.contains(j)) {
        return Err(parse_err(source, hline, None, format!("missing column for pathogen {}", panel.name(missing))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(source, e))?;
        let line = line_of(&rec);
        let mut m = vec![false; panel.len()];
        for (c, &j) in slot.iter().enumerate() {
            m[j] = parse_bit(&rec[c + skip], source, line, panel.name(j))?;
        }
        let id = if has_id { rec[0].to_string() } else { (i + 1).to_string() };
        out.push((id, m));
    }
    Ok(out)
}

pub fn read_patterns_file(path: &Path, panel: &PathogenPanel) -> Result<Vec<(String, Vec<bool>)>> {
    read_patterns(open(path)?, &path.display().to_string(), panel)
}

/// `id,<name>...,p_<name>...,predicted`.
pub fn write_predictions<W: Write>(
    w: W,
    panel: &PathogenPanel,
    rows: &[(String, Vec<bool>, EtiologyPrediction)],
) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(panel.names().iter().cloned());
    header.extend(panel.names().iter().map(|n| format!("p_{n}")));
    header.push("predicted".into());
    wr.write_record(&header).map_err(|e| csv_err("<output>", e))?;
    for (id, m, p) in rows {
        let mut row = vec![id.clone()];
        row.extend(m.iter().map(|&b| bit(b).to_string()));
        row.extend(p.p_hat.iter().map(|v| v.to_string()));
        row.push(panel.name(p.argmax()).to_string());
        wr.write_record(&row).map_err(|e| csv_err("<output>", e))?;
    }
    wr.flush()?;
    Ok(())
}

/// Within-sample cause probabilities of each case: `id,p_<name>...,predicted`.
pub fn write_classification<W: Write>(w: W, ds: &Dataset, probs: &[Vec<f64>]) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(ds.panel.names().iter().map(|n| format!("p_{n}")));
    header.push("predicted".into());
    wr.write_record(&header).map_err(|e| csv_err("<output>", e))?;
    for (s, p) in ds.cases().zip(probs) {
        let mut row = vec![s.id.clone()];
        row.extend(p.iter().map(|v| v.to_string()));
        row.push(ds.panel.name(argmax(p)).to_string());
        wr.write_record(&row).map_err(|e| csv_err("<output>", e))?;
    }
    wr.flush()?;
    Ok(())
}

// ---- reports ----

fn opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.prec$}"),
        _ => "NA".into(),
    }
}

pub fn write_summary_table<W: Write>(mut w: W, s: &PosteriorSummary) -> Result<()> {
    let width = s.params.iter().map(|p| p.name.len()).max().unwrap_or(9).max(9);
    writeln!(
        w,
        "{:<width$} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>9}",
        "parameter", "mean", "sd", "q2.5", "q25", "q50", "q75", "q97.5", "bgr", "ess"
    )?;
    for p in &s.params {
        write!(w, "{:<width$} {:>9.5} {:>9.5}", p.name, p.mean, p.sd)?;
        for q in p.quantiles {
            write!(w, " {q:>9.5}")?;
        }
        writeln!(w, " {:>7} {:>9}", opt(p.bgr, 4), opt(Some(p.ess), 0))?;
    }
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, names: &[String], m: &[Vec<Option<f64>>]) -> Result<()> {
    let width = names.iter().map(String::len).max().unwrap_or(1).max(8);
    write!(w, "{:<width$}", "")?;
    for n in names {
        write!(w, " {n:>width$}")?;
    }
    writeln!(w)?;
    for (r, n) in names.iter().enumerate() {
        write!(w, "{n:<width$}")?;
        for (c, v) in m[r].iter().enumerate() {
            let cell = if r == c { "-".to_string() } else { opt(*v, 3) };
            write!(w, " {cell:>width$}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// SLOR matrix followed by the observed, predictive mean and predictive SD
/// log odds ratio matrices. Lower triangles are cases, upper triangles
/// controls.
pub fn write_slor_table<W: Write>(mut w: W, t: &SlorTable) -> Result<()> {
    writeln!(w, "# lower triangle: cases; upper triangle: controls; {} replicates", t.n_replicates)?;
    for (title, m) in [
        ("slor", &t.slor),
        ("observed_lor", &t.observed),
        ("predictive_mean_lor", &t.pred_mean),
        ("predictive_sd_lor", &t.pred_sd),
    ] {
        writeln!(w, "# {title}")?;
        write_matrix(&mut w, &t.names, m)?;
    }
    Ok(())
}

/// `group,pattern,observed,pred_mean,q2.5,q50,q97.5`; patterns are bit
/// strings in panel order.
pub fn write_pattern_table<W: Write>(mut w: W, t: &PatternFrequencyTable, panel: &PathogenPanel) -> Result<()> {
    writeln!(w, "# pattern bits: {}; {} replicates", panel.names().join(" "), t.n_replicates)?;
    let mut wr = writer(w);
    wr.write_record(["group", "pattern", "observed", "pred_mean", "q2.5", "q50", "q97.5"])
        .map_err(|e| csv_err("<output>", e))?;
    for row in t.cases.iter().chain(&t.controls) {
        let group = match row.group {
            crate::diagnostics::Group::Case => "case",
            crate::diagnostics::Group::Control => "control",
        };
        let pattern: String = row.pattern.iter().map(|&b| bit(b)).collect();
        wr.write_record([
            group.to_string(),
            pattern,
            row.observed.to_string(),
            row.pred_mean.to_string(),
            row.q025.to_string(),
            row.q50.to_string(),
            row.q975.to_string(),
        ])
        .map_err(|e| csv_err("<output>", e))?;
    }
    wr.flush()?;
    Ok(())
}

/// `contour,vertex,pi_<a>,pi_<b>,pi_<c>`, preceded by the region's level,
/// bandwidth, threshold and area as comments.
pub fn write_contours<W: Write>(mut w: W, r: &CredibleRegion, panel: &PathogenPanel) -> Result<()> {
    let h = r.bandwidth;
    writeln!(w, "# level {} reference {} draws {} kde_points {}", r.level, panel.name(r.reference), r.n_draws, r.n_kde_points)?;
    writeln!(w, "# bandwidth {} {} {} {} threshold {} area {}", h[0][0], h[0][1], h[1][0], h[1][1], r.threshold, r.area)?;
    let mut wr = writer(w);
    let mut header = vec!["contour".to_string(), "vertex".to_string()];
    header.extend(panel.names().iter().map(|n| format!("pi_{n}")));
    wr.write_record(&header).map_err(|e| csv_err("<output>", e))?;
    for (c, poly) in r.contours.iter().enumerate() {
        for (v, p) in poly.iter().enumerate() {
            wr.write_record([c.to_string(), v.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])
                .map_err(|e| csv_err("<output>", e))?;
        }
    }
    wr.flush()?;
    Ok(())
}
