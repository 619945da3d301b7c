//! Command-line front end. `main.rs` only parses arguments and maps errors
//! to exit codes; everything else lives here so it can be driven from tests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{run_bench, Method, Workload};
use crate::error::{Error, Result};
use crate::feature::{Prepared, SpaceMode};
use crate::index::{transform_prepared, JoinQuery, KnnQuery, RTree, RangeQuery};
use crate::io::{
    emit_hits, emit_pairs, generate_synthetic, ingest_csv, load_index, save_index, write_wide_csv, CsvLayout,
    TableFormat,
};
use crate::spectral::Signal;
use crate::transform::{parse_registry, TransformSpec, Transformation};

#[derive(Debug, Parser)]
#[command(name = "tsquery", version, about = "Similarity queries over time series under transformations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic random-walk corpus as wide CSV.
    Gen(GenArgs),
    /// Validate a CSV file and rewrite it as canonical wide CSV.
    Ingest(IngestArgs),
    /// Build an index snapshot from a CSV file.
    Build(BuildArgs),
    /// Range query: stored series within epsilon of the query.
    Range(RangeArgs),
    /// k nearest neighbours of the query.
    Knn(KnnArgs),
    /// All pairs within epsilon of each other.
    Join(JoinArgs),
    /// Compare scan and index methods on one workload.
    Bench(BenchArgs),
    /// Check the structure of an index snapshot.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub length: usize,
    #[arg(long, env = "TSQUERY_SEED")]
    pub seed: u64,
    /// Draw start values uniformly from [20, 99] instead of a truncated normal.
    #[arg(long)]
    pub uniform_start: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Wide,
    Long,
}

impl From<LayoutArg> for CsvLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Wide => CsvLayout::Wide,
            LayoutArg::Long => CsvLayout::Long,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "wide")]
    pub format: LayoutArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// First k coefficients of the raw series (2k dimensions).
    Raw,
    /// Mean, std and coefficients 1..=k of the normal form (2k+2 dimensions).
    Normal,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "wide")]
    pub format: LayoutArg,
    #[arg(long, value_enum, default_value = "normal")]
    pub mode: ModeArg,
    /// Number of retained coefficients.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = crate::index::DEFAULT_CAPACITY)]
    pub capacity: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Use the stored series with this id as the query.
    #[arg(long, conflicts_with = "query_file", required_unless_present = "query_file")]
    pub query_id: Option<String>,
    /// Use the first series of this wide CSV file as the query.
    #[arg(long)]
    pub query_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// `identity`, `rev`, `mavg:M`, `mavg:M:W1,..`, `warp:M`, `affine:S[:SHIFT]`,
    /// or a name from --registry.
    #[arg(long)]
    pub transform: Option<String>,
    /// Registry file of named transformations.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Tsv,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Tsv => TableFormat::Tsv,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long = "output-format", value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RangeArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Transform the query as well as the data.
    #[arg(long)]
    pub transform_query: bool,
    /// Bounds on the transformed mean, `LO:HI` (normal mode only).
    #[arg(long, value_parser = parse_bounds)]
    pub mean_bounds: Option<(f64, f64)>,
    /// Bounds on the transformed std, `LO:HI` (normal mode only).
    #[arg(long, value_parser = parse_bounds)]
    pub std_bounds: Option<(f64, f64)>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Number of neighbours.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub transform: TransformArgs,
    #[arg(long)]
    pub transform_query: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Report each ordered hit, so symmetric pairs appear twice.
    #[arg(long)]
    pub raw_pairs: bool,
    /// Join the relation with its transformed self instead of transforming both sides.
    #[arg(long)]
    pub one_sided: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WorkloadArg {
    Range,
    Join,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, value_enum, default_value = "range")]
    pub workload: WorkloadArg,
    /// Comma-separated subset of a,b,c,d.
    #[arg(long, default_value = "a,b,c,d")]
    pub methods: String,
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub transform: TransformArgs,
    /// Number of range queries, drawn from the stored series.
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, env = "TSQUERY_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub index: PathBuf,
}

fn parse_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound '{hi}'"))?;
    if !(lo <= hi) {
        return Err(format!("empty interval {lo}:{hi}"));
    }
    Ok((lo, hi))
}

/// Process exit code for an error; argument errors from clap use 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => 3,
        Error::UnknownTransform(_) => 4,
        Error::UnsafeTransformation { .. } => 5,
        Error::Parse { .. } | Error::DuplicateId(_) | Error::RaggedRows { .. } | Error::DegenerateSeries { .. } => 6,
        Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 7,
        Error::Io { .. } => 8,
        Error::BadMagic
        | Error::VersionMismatch { .. }
        | Error::ChecksumMismatch { .. }
        | Error::Truncated(_)
        | Error::Corrupt(_) => 9,
        Error::NumericConsistency(_) => 10,
    }
}

/// Runs one command. Tables go to `--out` when given, otherwise to
/// `stdout`; progress notes go to `stderr`.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let rel = generate_synthetic(a.count, a.length, a.seed, a.uniform_start)?;
            with_output(a.out.as_deref(), stdout, |w| write_wide_csv(&rel, w))
        }
        Command::Ingest(a) => {
            let rel = ingest_csv(&a.input, a.format.into())?;
            note(stderr, format_args!("{} series of length {}", rel.len(), rel.series_len().unwrap_or(0)));
            with_output(a.out.as_deref(), stdout, |w| write_wide_csv(&rel, w))
        }
        Command::Build(a) => {
            let rel = ingest_csv(&a.input, a.format.into())?;
            let mode = match a.mode {
                ModeArg::Raw => SpaceMode::Raw(a.k),
                ModeArg::Normal => SpaceMode::NormalForm(a.k),
            };
            let tree = RTree::build(&rel, mode, a.capacity)?;
            save_index(&tree, &a.out)?;
            note(
                stderr,
                format_args!(
                    "indexed {} series in {} dimensions ({} skipped as constant); height {}, {} nodes",
                    tree.len(),
                    mode.dims(),
                    tree.skipped().len(),
                    tree.height(),
                    tree.node_count()
                ),
            );
            Ok(())
        }
        Command::Range(a) => {
            let tree = open_index(&a.query.index)?;
            let query = load_query(&tree, &a.query)?;
            let t = resolve_transform(&a.transform, &tree)?;
            let (hits, stats) = match t {
                None => {
                    let q = bounded(RangeQuery::new(query, a.epsilon, identity_for(&tree)?)?, &a);
                    tree.range_search(&q)?
                }
                Some(t) => {
                    let mut q = bounded(RangeQuery::new(query, a.epsilon, t)?, &a);
                    if a.transform_query {
                        q = q.transform_query(tree.mode())?;
                    }
                    tree.transformed_range_search(&q)?
                }
            };
            note(
                stderr,
                format_args!(
                    "{} answers, {} candidates, {} nodes visited",
                    stats.answers, stats.candidates, stats.nodes_visited
                ),
            );
            let format = a.output.format.into();
            with_output(a.output.out.as_deref(), stdout, |w| emit_hits(&hits, format, w))
        }
        Command::Knn(a) => {
            let tree = open_index(&a.query.index)?;
            let mut query = load_query(&tree, &a.query)?;
            let t = match resolve_transform(&a.transform, &tree)? {
                Some(t) => t,
                None => identity_for(&tree)?,
            };
            if a.transform_query {
                query = transform_prepared(&t, &query, tree.mode())?;
            }
            let (hits, _) = tree.transformed_knn(&KnnQuery::new(query, a.k, t)?)?;
            let format = a.output.format.into();
            with_output(a.output.out.as_deref(), stdout, |w| emit_hits(&hits, format, w))
        }
        Command::Join(a) => {
            let tree = open_index(&a.index)?;
            let t = match resolve_transform(&a.transform, &tree)? {
                Some(t) => t,
                None => identity_for(&tree)?,
            };
            let mut q = JoinQuery::new(a.epsilon, t)?.raw_pairs(a.raw_pairs);
            if a.one_sided {
                q = q.one_sided();
            }
            let (pairs, stats) = tree.transformed_join(&q)?;
            note(
                stderr,
                format_args!("{} pairs, {} nodes visited", pairs.len(), stats.nodes_visited),
            );
            let format = a.output.format.into();
            with_output(a.output.out.as_deref(), stdout, |w| emit_pairs(&pairs, format, w))
        }
        Command::Bench(a) => {
            let tree = open_index(&a.index)?;
            let methods = Method::parse_list(&a.methods)?;
            let t = match resolve_transform(&a.transform, &tree)? {
                Some(t) => t,
                None => identity_for(&tree)?,
            };
            let workload = match a.workload {
                WorkloadArg::Range => Workload::Range {
                    queries: sample_queries(&tree, a.queries, a.seed)?,
                    epsilon: a.epsilon,
                    transform: t,
                },
                WorkloadArg::Join => Workload::Join {
                    epsilon: a.epsilon,
                    transform: t,
                },
            };
            let report = run_bench(&tree, &workload, &methods)?;
            with_output(a.out.as_deref(), stdout, |w| report.write_csv(w))?;
            if !report.answers_agree() {
                return Err(Error::NumericConsistency("benchmark methods returned different answers".into()));
            }
            Ok(())
        }
        Command::Audit(a) => {
            let tree = open_index(&a.index)?;
            let r = tree.audit();
            let _ = writeln!(
                stdout,
                "mode={:?} dims={} capacity={} min_fill={} height={} nodes={} leaves={} entries={} skipped={} violations={}",
                tree.mode(),
                tree.mode().dims(),
                tree.capacity(),
                tree.min_fill(),
                r.height,
                r.nodes,
                r.leaves,
                r.entries,
                tree.skipped().len(),
                r.violations.len()
            );
            for v in &r.violations {
                let _ = writeln!(stdout, "violation: {v}");
            }
            if r.is_ok() {
                Ok(())
            } else {
                Err(Error::Corrupt(format!("{} structural violations", r.violations.len())))
            }
        }
    }
}

fn note(stderr: &mut dyn Write, args: std::fmt::Arguments<'_>) {
    let _ = writeln!(stderr, "{args}");
}

fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p).map_err(|e| Error::io(p, e))?);
            f(&mut file).and_then(|_| file.flush()).map_err(|e| Error::io(p, e))
        }
        None => f(stdout).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn open_index(path: &Path) -> Result<RTree> {
    load_index(path)
}

fn identity_for(tree: &RTree) -> Result<Transformation> {
    Transformation::identity(tree.series_len().unwrap_or(1))
}

fn bounded(mut q: RangeQuery, a: &RangeArgs) -> RangeQuery {
    q.mean_bounds = a.mean_bounds;
    q.std_bounds = a.std_bounds;
    q
}

fn load_query(tree: &RTree, a: &QueryArgs) -> Result<Prepared> {
    if let Some(id) = &a.query_id {
        return tree
            .record(id)
            .map(|r| r.clone_prepared())
            .ok_or_else(|| Error::invalid(format!("no stored series with id '{id}'")));
    }
    let path = a.query_file.as_ref().expect("clap requires a query source");
    let rel = ingest_csv(path, CsvLayout::Wide)?;
    let first = rel
        .iter()
        .next()
        .ok_or_else(|| Error::invalid(format!("{} holds no series", path.display())))?;
    tree.prepare_query(&Signal::new(first.values.values().to_vec())?)
}

/// `None` when no transformation was named.
fn resolve_transform(a: &TransformArgs, tree: &RTree) -> Result<Option<Transformation>> {
    let Some(name) = &a.transform else {
        return Ok(None);
    };
    let n = tree
        .series_len()
        .ok_or_else(|| Error::invalid("the index is empty"))?;
    if let Some(path) = &a.registry {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Some(entry) = parse_registry(&text)?.into_iter().find(|e| &e.name == name) {
            return entry.build(n).map(Some);
        }
    }
    name.parse::<TransformSpec>()?.build(n).map(Some)
}

fn sample_queries(tree: &RTree, count: usize, seed: u64) -> Result<Vec<Prepared>> {
    if tree.is_empty() {
        return Err(Error::invalid("the index is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, tree.len(), count.min(tree.len()));
    Ok(picks.iter().map(|i| tree.records()[i].clone_prepared()).collect())
}
