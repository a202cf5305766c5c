//! Polymer records, the seeded synthetic generator, and JSONL/CSV I/O.

use crate::chem::{atomic_mass, parse_monomer, ChemError, Element, HYDROGEN_MASS};
use crate::polymer::{build_polymer, Architecture, PolymerError, PolymerGraph};
use crate::seed::rng_from;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

/// Regression label name written by the synthetic generator.
pub const REGRESSION_LABEL: &str = "target";
/// Four-class label name written by the synthetic generator.
pub const CLASS_LABEL: &str = "class";
pub const NUM_CLASSES: usize = 4;

/// Conjugated, mostly aromatic repeat units.
pub const FAMILY_A: &[&str] = &[
    "[*]c1ccc([*])cc1",
    "[*]c1ccc([*])s1",
    "[*]c1ccc([*])o1",
    "[*]c1ccc([*])nc1",
    "[*]c1ccc2cc([*])ccc2c1",
    "[*]c1cc(F)c([*])cc1F",
    "[*]c1ccc(-c2ccc([*])cc2)cc1",
    "[*]c1ccc(C=Cc2ccc([*])cc2)cc1",
    "[*]c1ccc2c(c1)sc1cc([*])ccc12",
    "[*]c1cc(OC)c([*])cc1OC",
    "[*]c1ccc([*])c2nsnc12",
    "[*]c1ccc(N(C)C)c([*])c1",
    "[*]c1cnc([*])cn1",
    "[*]c1ccc(C#N)c([*])c1",
    "[*]c1sc([*])c2c1OCCO2",
];

/// Vinyl and condensation repeat units, disjoint from [`FAMILY_A`].
pub const FAMILY_B: &[&str] = &[
    "[*]CC[*]",
    "[*]CC([*])C",
    "[*]CC([*])C(=O)OC",
    "[*]CC([*])c1ccccc1",
    "[*]OCC[*]",
    "[*]CC([*])(C)C(=O)OC",
    "[*]CC([*])Cl",
    "[*]CC([*])C#N",
    "[*]NCCCCCC(=O)[*]",
    "[*]CC([*])O",
    "[*]CC([*])OC(C)=O",
    "[*]C(F)(F)C([*])(F)F",
    "[*]CC=CC[*]",
    "[*]Oc1ccc(C(C)(C)c2ccc(OC(=O)[*])cc2)cc1",
];

pub const STOICHIOMETRIES: [(f64, f64); 3] = [(0.5, 0.5), (0.25, 0.75), (0.75, 0.25)];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset size must be at least 1 (got {0})")]
    InvalidCount(usize),
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {id}: {source}")]
    Monomer {
        id: String,
        #[source]
        source: ChemError,
    },
    #[error("record {id}: {source}")]
    Polymer {
        id: String,
        #[source]
        source: PolymerError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub monomer_a: String,
    pub monomer_b: String,
    pub stoichiometry: [f64; 2],
    pub architecture: Architecture,
    #[serde(default)]
    pub labels: BTreeMap<String, f64>,
}

impl Record {
    pub fn build_graph(&self) -> Result<PolymerGraph, DatasetError> {
        let parse = |s: &str| {
            parse_monomer(s).map_err(|source| DatasetError::Monomer {
                id: self.id.clone(),
                source,
            })
        };
        let a = parse(&self.monomer_a)?;
        let b = parse(&self.monomer_b)?;
        build_polymer(
            &a,
            &b,
            (self.stoichiometry[0], self.stoichiometry[1]),
            self.architecture,
        )
        .map_err(|source| DatasetError::Polymer {
            id: self.id.clone(),
            source,
        })
    }

    pub fn label(&self, name: &str) -> Option<f64> {
        self.labels.get(name).copied()
    }
}

/// A generated record with its graph and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: Record,
    pub graph: PolymerGraph,
    pub regression: f64,
    pub class: usize,
}

/// Unstandardized synthetic property: the stoichiometry-weighted repeat-unit
/// mass plus node-averaged chemistry (mass per atom, heteroatom and aromatic
/// shares, degree) and the mean squared stochastic weight, with one
/// interaction.
pub fn raw_synthetic_label(graph: &PolymerGraph) -> f64 {
    let n = graph.node_count().max(1) as f64;
    let mean = |f: &dyn Fn(&crate::polymer::PolymerNode) -> f64| graph.nodes.iter().map(f).sum::<f64>() / n;
    let mass = mean(&|v| atomic_mass(v.atom.element) + HYDROGEN_MASS * f64::from(v.hydrogens));
    let aromatic = mean(&|v| f64::from(u8::from(v.atom.aromatic)));
    let hetero = mean(&|v| f64::from(u8::from(v.atom.element != Element::C)));
    let degree = mean(&|v| f64::from(v.atom.degree));
    let (w2, k) = graph
        .edges
        .iter()
        .filter(|e| e.stochastic)
        .fold((0.0, 0usize), |(s, k), e| (s + e.weight * e.weight, k + 1));
    let w2 = if k > 0 { w2 / k as f64 } else { 0.0 };
    let u_mass = (mass - 13.6) / 0.75;
    let u_arom = (aromatic - 0.87) / 0.115;
    let u_het = (hetero - 0.146) / 0.088;
    let u_deg = (degree - 2.1) / 0.08;
    let u_w = (w2 - 0.22) / 0.056;
    let u_mw = (graph.pseudolabel_mw - 117.6) / 26.5;
    u_mw + 0.4 * u_het - 0.3 * u_arom + 0.5 * u_mass * u_het + 0.2 * u_deg + 0.3 * u_w
}

/// Class index from quartile cut points (ascending).
pub fn quartile_class(value: f64, cuts: &[f64; 3]) -> usize {
    cuts.iter().filter(|&&c| value > c).count()
}

/// Empirical 25/50/75 percentiles (linear interpolation).
pub fn quartile_cuts(values: &[f64]) -> [f64; 3] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if sorted.is_empty() {
            return 0.0;
        }
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    [q(0.25), q(0.5), q(0.75)]
}

/// Generate `n` labeled polymers from the default library ([`FAMILY_A`]).
pub fn generate_synthetic_dataset(n: usize, seed: u64) -> Result<Vec<Sample>, DatasetError> {
    generate_from_library(FAMILY_A, "syn", n, seed)
}

/// Generate `n` labeled polymers whose monomers come from `library`.
///
/// Record `i` draws from its own stream seeded by `(seed, i)`, so output
/// is independent of generation order.
pub fn generate_from_library(library: &[&str], prefix: &str, n: usize, seed: u64) -> Result<Vec<Sample>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidCount(n));
    }
    assert!(library.len() >= 2, "library needs at least two monomers");
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_from(&[seed, i as u64]);
        let ia = rng.gen_range(0..library.len());
        let mut ib = rng.gen_range(0..library.len() - 1);
        if ib >= ia {
            ib += 1;
        }
        let stoich = *STOICHIOMETRIES.choose(&mut rng).expect("non-empty");
        let arch = *Architecture::ALL.choose(&mut rng).expect("non-empty");
        let record = Record {
            id: format!("{prefix}-{i:06}"),
            monomer_a: library[ia].to_string(),
            monomer_b: library[ib].to_string(),
            stoichiometry: [stoich.0, stoich.1],
            architecture: arch,
            labels: BTreeMap::new(),
        };
        let graph = record.build_graph()?;
        let y = raw_synthetic_label(&graph);
        raw.push((record, graph, y));
    }
    let ys: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let standardized: Vec<f64> = ys
        .iter()
        .map(|y| if std > 0.0 { (y - mean) / std } else { 0.0 })
        .collect();
    let cuts = quartile_cuts(&standardized);
    Ok(raw
        .into_iter()
        .zip(standardized)
        .map(|((mut record, graph, _), y)| {
            let class = quartile_class(y, &cuts);
            record.labels.insert(REGRESSION_LABEL.to_string(), y);
            record.labels.insert(CLASS_LABEL.to_string(), class as f64);
            Sample {
                record,
                graph,
                regression: y,
                class,
            }
        })
        .collect())
}

/// Format a float with 17 significant digits (round-trips exactly).
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        // JSON has no representation; callers validate finiteness first
        return "null".to_string();
    }
    format!("{x:.16e}")
}

fn record_line(record: &Record) -> String {
    let q = |s: &str| serde_json::to_string(s).expect("string serialization");
    let mut line = String::new();
    write!(
        line,
        "{{\"id\":{},\"monomer_a\":{},\"monomer_b\":{},\"stoichiometry\":[{},{}],\"architecture\":\"{}\",\"labels\":{{",
        q(&record.id),
        q(&record.monomer_a),
        q(&record.monomer_b),
        fmt_f64(record.stoichiometry[0]),
        fmt_f64(record.stoichiometry[1]),
        record.architecture
    )
    .expect("write to string");
    for (i, (name, value)) in record.labels.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        write!(line, "{}:{}", q(name), fmt_f64(*value)).expect("write to string");
    }
    line.push_str("}}");
    line
}

/// Serialize records as JSONL text.
pub fn to_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn write_dataset(records: &[Record], path: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(to_jsonl(records).as_bytes()).map_err(io_err(path))?;
    Ok(())
}

fn validate_record(record: &Record, line: usize) -> Result<(), DatasetError> {
    let violation = |message: String| DatasetError::SchemaViolation { line, message };
    let [fa, fb] = record.stoichiometry;
    if !(fa.is_finite() && fb.is_finite()) || (fa + fb - 1.0).abs() > 1e-9 || fa < 0.0 || fb < 0.0 {
        return Err(violation(format!(
            "stoichiometry [{fa}, {fb}] must be non-negative and sum to 1"
        )));
    }
    if record.id.is_empty() {
        return Err(violation("empty id".to_string()));
    }
    if let Some((name, _)) = record.labels.iter().find(|(_, v)| !v.is_finite()) {
        return Err(violation(format!("label {name:?} is not finite")));
    }
    Ok(())
}

/// Parse JSONL text; line numbers in errors are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<Record>, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| DatasetError::SchemaViolation {
            line: i + 1,
            message: e.to_string(),
        })?;
        validate_record(&record, i + 1)?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Record>, DatasetError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io_err(path))?);
        text.push('\n');
    }
    parse_jsonl(&text)
}

/// Read a `id,label` CSV file.
pub fn read_label_csv(path: &Path) -> Result<BTreeMap<String, f64>, DatasetError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DatasetError::IoFailure {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::SchemaViolation {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(DatasetError::SchemaViolation {
            line: 1,
            message: format!(
                "expected header id,label, found {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        });
    }
    let mut labels = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DatasetError::SchemaViolation {
            line,
            message: e.to_string(),
        })?;
        let value: f64 = row[1].trim().parse().map_err(|_| DatasetError::SchemaViolation {
            line,
            message: format!("label {:?} is not a number", &row[1]),
        })?;
        labels.insert(row[0].to_string(), value);
    }
    Ok(labels)
}

/// Attach labels from a CSV map under `name`; records without a value are left alone.
pub fn attach_labels(records: &mut [Record], labels: &BTreeMap<String, f64>, name: &str) -> usize {
    let mut attached = 0;
    for r in records.iter_mut() {
        if let Some(&v) = labels.get(&r.id) {
            r.labels.insert(name.to_string(), v);
            attached += 1;
        }
    }
    attached
}

/// Shuffle helper shared by split code; deterministic for a seed.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(&[seed, 0x5EED]));
    idx
}
