#![allow(dead_code)]

pub mod oracle;

use polyjepa::chem::parse_monomer;
use polyjepa::dataset::generate_synthetic_dataset;
use polyjepa::diff::{Bound, Matrix, ParamSet, Tape, Var};
use polyjepa::encoder::PreparedGraph;
use polyjepa::encoding::NODE_PE_STEPS;
use polyjepa::polymer::{build_polymer, Architecture, PolymerGraph};
use polyjepa::seed::{hash_str, rng_from};
use rand::Rng;

pub fn polymer(a: &str, b: &str, stoich: (f64, f64), arch: Architecture) -> PolymerGraph {
    build_polymer(&parse_monomer(a).unwrap(), &parse_monomer(b).unwrap(), stoich, arch).unwrap()
}

pub fn synthetic_graphs(n: usize, seed: u64) -> Vec<PreparedGraph> {
    generate_synthetic_dataset(n, seed)
        .unwrap()
        .into_iter()
        .map(|s| PreparedGraph::new(hash_str(&s.record.id), s.graph, NODE_PE_STEPS))
        .collect()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// One scalar coordinate of one parameter in one of several parameter sets.
#[derive(Debug, Clone)]
pub struct Coord {
    pub set: usize,
    pub name: String,
    pub index: usize,
    pub analytic: f64,
}

/// `count` coordinates drawn uniformly over all scalars of `sets`, with
/// the gradient currently stored for each.
pub fn sample_coords(sets: &[&ParamSet], count: usize, seed: u64) -> Vec<Coord> {
    let mut all = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        for (name, p) in set.iter() {
            for i in 0..p.value.data.len() {
                all.push(Coord {
                    set: s,
                    name: name.to_string(),
                    index: i,
                    analytic: p.grad.data[i],
                });
            }
        }
    }
    let mut rng = rng_from(&[seed, 0xfd]);
    (0..count).map(|_| all[rng.gen_range(0..all.len())].clone()).collect()
}

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-6)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between stored gradients and central differences
/// of `eval` over `coords`. `access` maps a set index to the set inside `model`.
pub fn max_fd_error<M>(
    model: &mut M,
    coords: &[Coord],
    access: impl Fn(&mut M, usize) -> &mut ParamSet,
    eval: impl Fn(&M) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for c in coords {
        let original = access(model, c.set).value(&c.name).data[c.index];
        let at = |x: f64, model: &mut M| {
            access(model, c.set).get_mut(&c.name).unwrap().value.data[c.index] = x;
            eval(model)
        };
        let plus = at(original + FD_STEP, model);
        let minus = at(original - FD_STEP, model);
        at(original, model);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(c.analytic, numeric));
    }
    worst
}

pub type Build = dyn Fn(&mut Tape, &Bound) -> Var;

/// Scalar loss from `build`: the output itself when 1×1, else its mean
/// squared distance to a fixed random matrix.
fn scalar_loss(tape: &mut Tape, bound: &Bound, build: &Build, probe: Option<&Matrix>) -> Var {
    let out = build(tape, bound);
    match probe {
        Some(r) => {
            let r = tape.constant(r.clone());
            tape.mse(out, r).unwrap()
        }
        None => out,
    }
}

/// Largest relative finite-difference error of the tape gradient of `build`
/// over 100 sampled input coordinates.
pub fn primitive_fd_error(label: &str, inputs: Vec<(&str, Matrix)>, build: &Build) -> f64 {
    let mut params = ParamSet::new();
    for (name, m) in inputs {
        params.insert(name, m);
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let out = build(&mut tape, &bound);
    let shape = tape.shape(out);
    let probe = (shape != (1, 1)).then(|| random_matrix(shape.0, shape.1, &mut rng_from(&[7, shape.0 as u64])));
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let loss = scalar_loss(&mut tape, &bound, build, probe.as_ref());
    let grads = tape.backward(loss).unwrap();
    params.zero_grad();
    params.accumulate(&bound, &grads);
    let coords = sample_coords(&[&params], 100, label.len() as u64);
    max_fd_error(
        &mut params,
        &coords,
        |p, _| p,
        |p| {
            let mut tape = Tape::new();
            let bound = p.bind(&mut tape, true);
            let loss = scalar_loss(&mut tape, &bound, build, probe.as_ref());
            tape.value(loss).item()
        },
    )
}

/// Ablation markdown with every `mean ± std` cell replaced by `x ± x`;
/// italics kept, bold dropped.
pub fn table_skeleton(markdown: &str) -> String {
    let mut out = String::new();
    for line in markdown.lines() {
        let line = line.replace("**", "");
        let cells: Vec<&str> = line.trim_matches('|').split(" | ").map(str::trim).collect();
        let masked: Vec<String> = cells
            .iter()
            .map(|c| {
                let italic = c.len() > 2 && c.starts_with('*') && c.ends_with('*');
                let inner = c.trim_matches('*');
                let numeric = inner
                    .split_once(" ± ")
                    .is_some_and(|(m, s)| m.parse::<f64>().is_ok() && s.parse::<f64>().is_ok());
                match (numeric, italic) {
                    (true, true) => "*x ± x*".to_string(),
                    (true, false) => "x ± x".to_string(),
                    _ => c.to_string(),
                }
            })
            .collect();
        out.push_str(&format!("| {} |\n", masked.join(" | ")));
    }
    out
}

pub fn golden(name: &str) -> String {
    let p = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
