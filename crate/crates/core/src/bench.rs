//! Scan-versus-index comparison over one workload.
//!
//! Four methods answer the same queries:
//!
//! * `a` scan-naive: full distance to every stored spectrum;
//! * `b` scan-early-abandon: the same scan, stopping each comparison once it
//!   exceeds `epsilon^2`;
//! * `c` index-plain: an index materialized over the transformed data,
//!   searched without a transformation;
//! * `d` index-transformed: the original index, transformed during search.
//!
//! Work counters are deterministic; wall time is reported but is only a
//! rough guide.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::feature::Prepared;
use crate::index::{scan_join, sequential_scan, JoinQuery, QueryStats, RTree, RangeQuery};
use crate::transform::Transformation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    ScanNaive,
    ScanEarlyAbandon,
    IndexPlain,
    IndexTransformed,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ScanNaive,
        Method::ScanEarlyAbandon,
        Method::IndexPlain,
        Method::IndexTransformed,
    ];

    pub fn letter(self) -> char {
        match self {
            Method::ScanNaive => 'a',
            Method::ScanEarlyAbandon => 'b',
            Method::IndexPlain => 'c',
            Method::IndexTransformed => 'd',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::ScanNaive => "scan-naive",
            Method::ScanEarlyAbandon => "scan-early-abandon",
            Method::IndexPlain => "index-plain",
            Method::IndexTransformed => "index-transformed",
        }
    }

    /// Parses a comma-separated list such as `a,b,d` or `scan-naive,d`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse())
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("no benchmark methods selected"));
        }
        Ok(out)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| s.len() == 1 && s.starts_with(m.letter()) || s == m.name())
            .ok_or_else(|| Error::invalid(format!("unknown benchmark method '{s}' (expected a, b, c or d)")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum Workload {
    /// Each query asks for `{o : D(T(o), q) < epsilon}`.
    Range {
        queries: Vec<Prepared>,
        epsilon: f64,
        transform: Transformation,
    },
    /// Self-join `{(a, b) : D(T(a), T(b)) < epsilon}`, each pair once.
    Join { epsilon: f64, transform: Transformation },
}

impl Workload {
    fn kind(&self) -> &'static str {
        match self {
            Workload::Range { .. } => "range",
            Workload::Join { .. } => "join",
        }
    }

    fn transform(&self) -> &Transformation {
        match self {
            Workload::Range { transform, .. } | Workload::Join { transform, .. } => transform,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub wall_ms: f64,
    pub stats: QueryStats,
    /// Answer ids per query (one set for a join, of `idA\tidB` keys).
    pub answer_sets: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub workload: String,
    pub transform: String,
    pub queries: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, m: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    /// True when every method produced the same answers for every query.
    pub fn answers_agree(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].answer_sets == w[1].answer_sets)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "method,label,workload,transform,queries,wall_ms,nodes_visited,coefficients_touched,candidates,answers"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.3},{},{},{},{}",
                r.method.letter(),
                r.method.name(),
                self.workload,
                self.transform,
                self.queries,
                r.wall_ms,
                r.stats.nodes_visited,
                r.stats.coefficients_touched,
                r.stats.candidates,
                r.stats.answers
            )?;
        }
        Ok(())
    }
}

/// Runs `methods` over `workload` against `tree`.
pub fn run_bench(tree: &RTree, workload: &Workload, methods: &[Method]) -> Result<BenchReport> {
    let t = workload.transform();
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        let start = Instant::now();
        let (stats, answer_sets) = match workload {
            Workload::Range { queries, epsilon, .. } => run_range(tree, m, queries, *epsilon, t)?,
            Workload::Join { epsilon, .. } => run_join(tree, m, *epsilon, t)?,
        };
        rows.push(BenchRow {
            method: m,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            stats,
            answer_sets,
        });
    }
    Ok(BenchReport {
        workload: workload.kind().to_string(),
        transform: t.name().to_string(),
        queries: match workload {
            Workload::Range { queries, .. } => queries.len(),
            Workload::Join { .. } => 1,
        },
        rows,
    })
}

fn run_range(
    tree: &RTree,
    m: Method,
    queries: &[Prepared],
    epsilon: f64,
    t: &Transformation,
) -> Result<(QueryStats, Vec<BTreeSet<String>>)> {
    let materialized = match m {
        Method::IndexPlain => Some(tree.materialize(t)?),
        _ => None,
    };
    let mut total = QueryStats::default();
    let mut sets = Vec::with_capacity(queries.len());
    for q in queries {
        let rq = RangeQuery::new(q.clone(), epsilon, t.clone())?;
        let (hits, stats) = match m {
            Method::ScanNaive => sequential_scan(tree.records(), tree.mode(), &rq, false)?,
            Method::ScanEarlyAbandon => sequential_scan(tree.records(), tree.mode(), &rq, true)?,
            Method::IndexPlain => materialized.as_ref().expect("materialized").range_search(&rq)?,
            Method::IndexTransformed => tree.transformed_range_search(&rq)?,
        };
        total.absorb(&stats);
        sets.push(hits.into_iter().map(|h| h.id).collect());
    }
    total.visited.clear();
    Ok((total, sets))
}

fn run_join(tree: &RTree, m: Method, epsilon: f64, t: &Transformation) -> Result<(QueryStats, Vec<BTreeSet<String>>)> {
    let (pairs, mut stats) = match m {
        Method::ScanNaive => scan_join(tree.records(), t, epsilon, false)?,
        Method::ScanEarlyAbandon => scan_join(tree.records(), t, epsilon, true)?,
        Method::IndexPlain => tree.materialize(t)?.join_impl(&JoinQuery::new(epsilon, t.clone())?, false)?,
        Method::IndexTransformed => tree.transformed_join(&JoinQuery::new(epsilon, t.clone())?)?,
    };
    stats.visited.clear();
    let set = pairs.into_iter().map(|p| format!("{}\t{}", p.id_a, p.id_b)).collect();
    Ok((stats, vec![set]))
}
