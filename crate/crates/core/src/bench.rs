//! Evaluation against reference solvers and gap summaries.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_solve, greedy_construct, sample_best};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::policy::{greedy_rollout, ModelParams};
use crate::solution::Solution;
use crate::training::mix_seed;

/// One solver configuration.
#[derive(Debug, Clone, Copy)]
pub enum Solver<'a> {
    Greedy,
    Oracle,
    /// Greedy decoding when `samples <= 1`, best-of-`samples` otherwise.
    Model {
        params: &'a ModelParams,
        samples: usize,
        seed: u64,
    },
}

impl Solver<'_> {
    pub fn label(&self) -> String {
        match self {
            Solver::Greedy => "greedy".into(),
            Solver::Oracle => "oracle".into(),
            Solver::Model { samples, .. } if *samples <= 1 => "model-greedy".into(),
            Solver::Model { samples, .. } => format!("model-sample-{samples}"),
        }
    }

    /// Solves instance number `index` of a dataset; `index` only feeds the
    /// sampling seed.
    pub fn solve(&self, inst: &Instance, index: usize) -> Result<Solution> {
        match *self {
            Solver::Greedy => Ok(greedy_construct(inst)),
            Solver::Oracle => Ok(exhaustive_solve(inst)?.best_solution),
            Solver::Model { params, samples, .. } if samples <= 1 => {
                let r = greedy_rollout(params, inst)?;
                Solution::from_trajectory(&r.trajectory, inst)
            }
            Solver::Model { params, samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64));
                sample_best(inst, params, samples, &mut rng)
            }
        }
    }
}

pub enum Reference<'a> {
    Solver(Solver<'a>),
    /// Objectives keyed by instance id.
    Table(HashMap<String, f64>),
}

impl Reference<'_> {
    pub fn label(&self) -> String {
        match self {
            Reference::Solver(s) => s.label(),
            Reference::Table(_) => "file".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance_id: String,
    pub variant: String,
    pub n: usize,
    pub k: u32,
    pub method: String,
    pub objective: f64,
    pub reference: f64,
    pub gap_pct: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instances: usize,
    pub mean_objective: f64,
    pub mean_reference: f64,
    pub mean_gap_pct: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub reference: String,
    pub rows: Vec<EvalRow>,
    pub aggregate: Aggregate,
}

/// `100 · (objective − reference) / reference`.
pub fn gap_pct(objective: f64, reference: f64) -> f64 {
    100.0 * (objective - reference) / reference
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn aggregate(rows: &[EvalRow]) -> Aggregate {
    Aggregate {
        instances: rows.len(),
        mean_objective: mean(rows.iter().map(|r| r.objective)),
        mean_reference: mean(rows.iter().map(|r| r.reference)),
        mean_gap_pct: mean(rows.iter().map(|r| r.gap_pct)),
        mean_time_s: mean(rows.iter().map(|r| r.time_s)),
    }
}

/// Evaluates `method` on every instance, in parallel; rows come back sorted
/// by instance id.
pub fn evaluate(
    instances: &[(String, Instance)],
    method: &Solver<'_>,
    reference: &Reference<'_>,
) -> Result<EvalReport> {
    let mut rows = instances
        .par_iter()
        .enumerate()
        .map(|(i, (id, inst))| {
            let t = Instant::now();
            let sol = method.solve(inst, i)?;
            let time_s = t.elapsed().as_secs_f64();
            let reference = match reference {
                Reference::Solver(s) => s.solve(inst, i)?.objective,
                Reference::Table(t) => *t
                    .get(id)
                    .ok_or_else(|| Error::Config(format!("reference file has no entry for instance `{id}`")))?,
            };
            Ok(EvalRow {
                instance_id: id.clone(),
                variant: inst.variant.to_string(),
                n: inst.n_customers(),
                k: inst.fleet_size(),
                method: method.label(),
                objective: sol.objective,
                reference,
                gap_pct: gap_pct(sol.objective, reference),
                time_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(EvalReport {
        method: method.label(),
        reference: reference.label(),
        aggregate: aggregate(&rows),
        rows,
    })
}

pub fn write_csv<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<EvalRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

/// Objectives keyed by `instance_id` from any CSV with those two columns.
pub fn read_reference_table<R: Read>(input: R) -> Result<HashMap<String, f64>> {
    #[derive(Deserialize)]
    struct Entry {
        instance_id: String,
        objective: f64,
    }
    let mut out = HashMap::new();
    let mut rdr = csv::Reader::from_reader(input);
    for e in rdr.deserialize::<Entry>() {
        let e = e.map_err(csv_err)?;
        out.insert(e.instance_id, e.objective);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub variant: String,
    pub method: String,
    pub instances: usize,
    pub mean_objective: f64,
    pub mean_reference: f64,
    pub mean_gap_pct: f64,
    pub mean_time_s: f64,
}

/// Per-(variant, method) means, sorted by variant then method.
pub fn gap_report(rows: &[EvalRow]) -> Vec<GapSummary> {
    let mut groups: BTreeMap<(String, String), Vec<EvalRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.variant.clone(), r.method.clone()))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|((variant, method), rs)| {
            let a = aggregate(&rs);
            GapSummary {
                variant,
                method,
                instances: a.instances,
                mean_objective: a.mean_objective,
                mean_reference: a.mean_reference,
                mean_gap_pct: a.mean_gap_pct,
                mean_time_s: a.mean_time_s,
            }
        })
        .collect()
}

pub fn write_gap_csv<W: Write>(summary: &[GapSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Every `*.json` instance in `dir`, keyed by file stem and sorted by name.
pub fn load_instance_dir(dir: &Path) -> Result<Vec<(String, Instance)>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "instance directory {} does not exist",
            dir.display()
        )));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let inst = Instance::load(&p).map_err(|e| match e {
                Error::Parse { line, column, message } => Error::Parse {
                    line,
                    column,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })?;
            Ok((id, inst))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, GeneratorConfig, VariantFlags};

    fn dataset(n: usize) -> Vec<(String, Instance)> {
        (0..n)
            .map(|i| {
                let inst =
                    generate_instance(&GeneratorConfig::new(5, 4, 2, VariantFlags::BASIC[i % 5], i as u64)).unwrap();
                (format!("inst_{i:05}"), inst)
            })
            .collect()
    }

    #[test]
    fn greedy_against_itself_has_zero_gap() {
        let r = evaluate(&dataset(6), &Solver::Greedy, &Reference::Solver(Solver::Greedy)).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.rows.iter().all(|x| x.gap_pct == 0.0));
        assert_eq!(r.aggregate.mean_gap_pct, 0.0);
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let r = evaluate(&dataset(10), &Solver::Greedy, &Reference::Solver(Solver::Oracle)).unwrap();
        assert!(r.rows.iter().all(|x| x.gap_pct >= -1e-9));
        let m: f64 = r.rows.iter().map(|x| x.gap_pct).sum::<f64>() / 10.0;
        assert!((m - r.aggregate.mean_gap_pct).abs() <= 1e-12);
        let ids: Vec<&str> = r.rows.iter().map(|x| x.instance_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn csv_round_trip_and_gap_groups() {
        let r = evaluate(&dataset(5), &Solver::Greedy, &Reference::Solver(Solver::Oracle)).unwrap();
        let mut buf = Vec::new();
        write_csv(&r.rows, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("instance_id,variant,n,k,method,objective,reference,gap_pct,time_s\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), r.rows);
        let table = read_reference_table(&buf[..]).unwrap();
        assert_eq!(table.len(), 5);
        let g = gap_report(&r.rows);
        assert_eq!(g.len(), 5);
        assert_eq!(g.iter().map(|s| s.instances).sum::<usize>(), 5);
    }
}
