//! R-tree over polar DFT features, searchable under a transformation.
//!
//! The tree is built once over the untransformed features. A query that
//! carries a transformation `T` walks the same nodes but maps every node box
//! and every leaf point through `T` before testing it, which is equivalent to
//! searching an index built over `T(data)` with the same topology. Because
//! `T` is polar-safe, a box that does not overlap the search box after
//! mapping cannot hold any answer, so nothing is dismissed.
//!
//! Candidates that survive the feature filter are checked against the full
//! stored spectrum; the reported distances are always exact.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::feature::{
    coefficient_distance, mindist_coefficients, point_in_rect, prepare, rect_overlap, search_rectangle,
    transform_point, transform_rect, DimKind, FeaturePoint, FeatureRect, Prepared, SpaceMode,
};
use crate::series::{Relation, TimeSeries};
use crate::spectral::{angle, wrap_angle, Complex, Signal};
use crate::transform::Transformation;

pub const DEFAULT_CAPACITY: usize = 16;

/// Relative widening applied to search boxes and feature distances so
/// that rounding can only add candidates, never remove them.
const FILTER_SLACK: f64 = 1e-9;

/// A stored series: raw values, the full spectrum used for verification, and
/// its feature point.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub raw: Vec<f64>,
    pub spectrum: Vec<Complex>,
    pub point: FeaturePoint,
}

impl Record {
    pub fn from_series(s: &TimeSeries, mode: SpaceMode) -> Result<Self> {
        let Prepared { point, spectrum } = prepare(&s.values, mode).map_err(|e| match e {
            Error::DegenerateSeries { mean, .. } => Error::DegenerateSeries {
                id: Some(s.id.clone()),
                mean,
            },
            other => other,
        })?;
        Ok(Record {
            id: s.id.clone(),
            raw: s.values.values().to_vec(),
            spectrum,
            point,
        })
    }

    fn stats(&self, mode: SpaceMode) -> Option<(f64, f64)> {
        mode.has_stats().then(|| (self.point.dims[0], self.point.dims[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Child node id for inner nodes, record index for leaves.
    pub child: usize,
}

impl Entry {
    fn rect(&self, mode: SpaceMode) -> FeatureRect {
        FeatureRect::from_bounds(&self.lo, &self.hi, mode)
    }

    fn point(record: usize, p: &FeaturePoint) -> Self {
        Entry {
            lo: p.dims.clone(),
            hi: p.dims.clone(),
            child: record,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub leaf: bool,
    pub entries: Vec<Entry>,
}

/// Height-balanced R-tree with R*-style subtree choice and splits (no
/// forced reinsertion, so builds are deterministic).
#[derive(Debug, Clone, PartialEq)]
pub struct RTree {
    pub(crate) mode: SpaceMode,
    pub(crate) capacity: usize,
    pub(crate) min_fill: usize,
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: usize,
    pub(crate) height: usize,
    pub(crate) records: Vec<Record>,
    pub(crate) series_len: Option<usize>,
    pub(crate) skipped: Vec<String>,
    /// Name of the transformation baked in by [`RTree::materialize`].
    pub(crate) materialized: Option<String>,
    pub(crate) ids: HashMap<String, usize>,
}

/// Work counters for one query (or a whole join).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub nodes_visited: usize,
    pub candidates: usize,
    pub postprocessed: usize,
    /// Stored coefficient values read: `k` per leaf point examined, one per
    /// spectrum coefficient compared during verification or scanning.
    pub coefficients_touched: usize,
    pub answers: usize,
    /// Ids of visited nodes in visiting order.
    pub visited: Vec<usize>,
}

impl QueryStats {
    pub fn absorb(&mut self, other: &QueryStats) {
        self.nodes_visited += other.nodes_visited;
        self.candidates += other.candidates;
        self.postprocessed += other.postprocessed;
        self.coefficients_touched += other.coefficients_touched;
        self.answers += other.answers;
        self.visited.extend_from_slice(&other.visited);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairHit {
    pub id_a: String,
    pub id_b: String,
    pub distance: f64,
}

fn cmp_hits(a: &Hit, b: &Hit) -> Ordering {
    a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id))
}

fn cmp_pairs(a: &PairHit, b: &PairHit) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.id_a.cmp(&b.id_a))
        .then_with(|| a.id_b.cmp(&b.id_b))
}

/// Range query: every stored `o` with `D(T(o), q) < epsilon`.
#[derive(Debug, Clone)]
pub struct RangeQuery {
    pub query: Prepared,
    pub epsilon: f64,
    pub transform: Transformation,
    /// Optional bounds on the (transformed) mean and std; unconstrained
    /// when `None`. Ignored in raw mode.
    pub mean_bounds: Option<(f64, f64)>,
    pub std_bounds: Option<(f64, f64)>,
}

impl RangeQuery {
    pub fn new(query: Prepared, epsilon: f64, transform: Transformation) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon}")));
        }
        Ok(RangeQuery {
            query,
            epsilon,
            transform,
            mean_bounds: None,
            std_bounds: None,
        })
    }

    /// Query by signal, prepared for the feature space `mode`.
    pub fn from_signal(q: &Signal, mode: SpaceMode, epsilon: f64, transform: Transformation) -> Result<Self> {
        RangeQuery::new(prepare(q, mode)?, epsilon, transform)
    }

    pub fn with_mean_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.mean_bounds = Some((lo, hi));
        self
    }

    pub fn with_std_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.std_bounds = Some((lo, hi));
        self
    }

    /// Applies the query's own transformation to the query object too, so
    /// the search compares `T(o)` with `T(q)`.
    pub fn transform_query(mut self, mode: SpaceMode) -> Result<Self> {
        self.query = transform_prepared(&self.transform, &self.query, mode)?;
        Ok(self)
    }
}

/// `T` applied to a prepared object: full spectrum and feature point.
pub fn transform_prepared(t: &Transformation, p: &Prepared, mode: SpaceMode) -> Result<Prepared> {
    Ok(Prepared {
        point: transform_point(t, &p.point, mode)?,
        spectrum: t.apply_to_prefix(&p.spectrum)?,
    })
}

#[derive(Debug, Clone)]
pub struct KnnQuery {
    pub query: Prepared,
    pub count: usize,
    pub transform: Transformation,
}

impl KnnQuery {
    pub fn new(query: Prepared, count: usize, transform: Transformation) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("neighbour count must be at least 1"));
        }
        Ok(KnnQuery {
            query,
            count,
            transform,
        })
    }
}

/// Which objects a join transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JoinSide {
    /// Pairs with `D(T(a), T(b)) < epsilon`.
    #[default]
    Both,
    /// `r` joined with `T(r)`: pairs where `D(T(a), b) < epsilon` for
    /// either ordering of `a` and `b`.
    OneSided,
}

#[derive(Debug, Clone)]
pub struct JoinQuery {
    pub epsilon: f64,
    pub transform: Transformation,
    pub side: JoinSide,
    /// Report every ordered hit instead of each unordered pair once.
    pub raw_pairs: bool,
}

impl JoinQuery {
    pub fn new(epsilon: f64, transform: Transformation) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon}")));
        }
        Ok(JoinQuery {
            epsilon,
            transform,
            side: JoinSide::Both,
            raw_pairs: false,
        })
    }

    pub fn one_sided(mut self) -> Self {
        self.side = JoinSide::OneSided;
        self
    }

    pub fn raw_pairs(mut self, raw: bool) -> Self {
        self.raw_pairs = raw;
        self
    }
}

/// Outcome of a structural audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub nodes: usize,
    pub leaves: usize,
    pub height: usize,
    pub entries: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `sum_f |a_f X_f + b_f - Q_f|^2`, optionally abandoned once it reaches
/// `limit`. Returns the partial sum and the number of coefficients read.
fn transformed_sq_distance(
    t: &Transformation,
    x: &[Complex],
    q: &[Complex],
    limit: Option<f64>,
) -> (f64, usize) {
    let mut sum = 0.0;
    for f in 0..x.len() {
        sum += (t.apply_coeff(f, x[f]) - q[f]).norm_sqr();
        if let Some(l) = limit {
            if sum >= l {
                return (sum, f + 1);
            }
        }
    }
    (sum, x.len())
}

fn in_bounds(v: f64, b: Option<(f64, f64)>) -> bool {
    b.map_or(true, |(lo, hi)| lo <= v && v <= hi)
}

impl RTree {
    pub fn new(mode: SpaceMode, capacity: usize) -> Result<Self> {
        mode.validate()?;
        if capacity < 4 {
            return Err(Error::invalid(format!("node capacity must be at least 4, got {capacity}")));
        }
        Ok(RTree {
            mode,
            capacity,
            min_fill: (capacity * 2).div_ceil(5),
            nodes: vec![Node {
                leaf: true,
                entries: Vec::new(),
            }],
            root: 0,
            height: 1,
            records: Vec::new(),
            series_len: None,
            skipped: Vec::new(),
            materialized: None,
            ids: HashMap::new(),
        })
    }

    /// Inserts every series of `rel` in order. Constant series cannot be
    /// normalized; in normal-form mode they are left out and listed in
    /// [`RTree::skipped`].
    pub fn build(rel: &Relation, mode: SpaceMode, capacity: usize) -> Result<Self> {
        let mut tree = RTree::new(mode, capacity)?;
        for s in rel {
            match tree.insert(s) {
                Ok(()) => {}
                Err(Error::DegenerateSeries { .. }) => tree.skipped.push(s.id.clone()),
                Err(e) => return Err(e),
            }
        }
        Ok(tree)
    }

    pub fn mode(&self) -> SpaceMode {
        self.mode
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_fill(&self) -> usize {
        self.min_fill
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn series_len(&self) -> Option<usize> {
        self.series_len
    }

    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, id: &str) -> Option<&Record> {
        self.ids.get(id).map(|&i| &self.records[i])
    }

    pub fn materialized_with(&self) -> Option<&str> {
        self.materialized.as_deref()
    }

    /// Prepares an arbitrary signal for querying this tree.
    pub fn prepare_query(&self, q: &Signal) -> Result<Prepared> {
        if let Some(n) = self.series_len {
            if q.len() != n {
                return Err(Error::invalid(format!(
                    "query has length {}, indexed series have length {n}",
                    q.len()
                )));
            }
        }
        prepare(q, self.mode)
    }

    pub fn insert(&mut self, s: &TimeSeries) -> Result<()> {
        if self.materialized.is_some() {
            return Err(Error::invalid("a materialized index is read-only"));
        }
        if let Some(n) = self.series_len {
            if s.len() != n {
                return Err(Error::invalid(format!(
                    "series '{}' has length {}, index holds length {n}",
                    s.id,
                    s.len()
                )));
            }
        }
        if self.ids.contains_key(&s.id) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
        let record = Record::from_series(s, self.mode)?;
        self.series_len = Some(s.len());
        let idx = self.records.len();
        let entry = Entry::point(idx, &record.point);
        self.ids.insert(record.id.clone(), idx);
        self.records.push(record);
        if let Some(sibling) = self.insert_entry(self.root, entry, 1) {
            let old = self.root;
            let old_entry = self.entry_for(old);
            self.nodes.push(Node {
                leaf: false,
                entries: vec![old_entry, sibling],
            });
            self.root = self.nodes.len() - 1;
            self.height += 1;
        }
        Ok(())
    }

    fn entry_for(&self, node: usize) -> Entry {
        let (lo, hi) = union_bounds(&self.nodes[node].entries);
        Entry { lo, hi, child: node }
    }

    /// Inserts a point entry below `node` (at `depth`, root is 1); returns a
    /// new sibling entry when `node` had to split.
    fn insert_entry(&mut self, node: usize, entry: Entry, depth: usize) -> Option<Entry> {
        if self.nodes[node].leaf {
            self.nodes[node].entries.push(entry);
        } else {
            let children_are_leaves = depth + 1 == self.height;
            let slot = choose_subtree(&self.nodes[node].entries, &entry, children_are_leaves);
            let child = self.nodes[node].entries[slot].child;
            let sibling = self.insert_entry(child, entry, depth + 1);
            let updated = self.entry_for(child);
            self.nodes[node].entries[slot] = updated;
            if let Some(s) = sibling {
                self.nodes[node].entries.push(s);
            }
        }
        if self.nodes[node].entries.len() > self.capacity {
            let entries = std::mem::take(&mut self.nodes[node].entries);
            let (a, b) = split_entries(entries, self.min_fill);
            let leaf = self.nodes[node].leaf;
            self.nodes[node].entries = a;
            self.nodes.push(Node { leaf, entries: b });
            let new_id = self.nodes.len() - 1;
            return Some(self.entry_for(new_id));
        }
        None
    }

    fn check_query_transform(&self, t: &Transformation) -> Result<()> {
        self.mode.check_transformation(t)?;
        if let Some(n) = self.series_len {
            if t.len() != n {
                return Err(Error::invalid(format!(
                    "transformation '{}' has {} coefficients, indexed series have length {n}",
                    t.name(),
                    t.len()
                )));
            }
        }
        Ok(())
    }

    fn check_query_object(&self, q: &Prepared) -> Result<()> {
        if q.point.len() != self.mode.dims() {
            return Err(Error::invalid(format!(
                "query has {} feature dimensions, index has {}",
                q.point.len(),
                self.mode.dims()
            )));
        }
        if let Some(n) = self.series_len {
            if q.spectrum.len() != n {
                return Err(Error::invalid(format!(
                    "query spectrum has {} coefficients, indexed series have length {n}",
                    q.spectrum.len()
                )));
            }
        }
        Ok(())
    }

    /// Range search without a transformation.
    pub fn range_search(&self, q: &RangeQuery) -> Result<(Vec<Hit>, QueryStats)> {
        self.range_impl(q, None)
    }

    /// Range search under `q.transform`, mapping node boxes and leaf points
    /// on the fly.
    pub fn transformed_range_search(&self, q: &RangeQuery) -> Result<(Vec<Hit>, QueryStats)> {
        self.check_query_transform(&q.transform)?;
        self.range_impl(q, Some(&q.transform))
    }

    /// Ids that survive the feature filter of a transformed range search,
    /// before verification against the full spectra.
    pub fn transformed_candidates(&self, q: &RangeQuery) -> Result<Vec<String>> {
        self.check_query_transform(&q.transform)?;
        self.check_query_object(&q.query)?;
        let mut stats = QueryStats::default();
        let idx = self.filter(q, Some(&q.transform), &mut stats)?;
        Ok(idx.into_iter().map(|i| self.records[i].id.clone()).collect())
    }

    fn range_impl(&self, q: &RangeQuery, t: Option<&Transformation>) -> Result<(Vec<Hit>, QueryStats)> {
        self.check_query_object(&q.query)?;
        if !(q.epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be non-negative, got {}", q.epsilon)));
        }
        let mut stats = QueryStats::default();
        let candidates = self.filter(q, t, &mut stats)?;
        let mut hits = Vec::new();
        let eps_sq = q.epsilon * q.epsilon;
        // Verification abandons a candidate as soon as it is out of range;
        // answers are always summed in full.
        let limit = q.epsilon.is_finite().then_some(eps_sq);
        let identity;
        let verify_t = match t {
            Some(t) => t,
            None => {
                identity = Transformation::identity(q.query.spectrum.len())?;
                &identity
            }
        };
        for idx in candidates {
            let rec = &self.records[idx];
            stats.postprocessed += 1;
            let (sq, touched) = transformed_sq_distance(verify_t, &rec.spectrum, &q.query.spectrum, limit);
            stats.coefficients_touched += touched;
            if sq < eps_sq && self.stats_ok(rec, verify_t, q) {
                hits.push(Hit {
                    id: rec.id.clone(),
                    distance: sq.sqrt(),
                });
            }
        }
        hits.sort_by(cmp_hits);
        stats.answers = hits.len();
        Ok((hits, stats))
    }

    fn stats_ok(&self, rec: &Record, t: &Transformation, q: &RangeQuery) -> bool {
        match rec.stats(self.mode) {
            None => true,
            Some((mean, std)) => {
                in_bounds(t.mean_action().apply(mean), q.mean_bounds)
                    && in_bounds(t.std_action().apply(std), q.std_bounds)
            }
        }
    }

    /// Index descent: record indexes of all leaf points whose (transformed)
    /// features fall in the search box and within `epsilon` on the retained
    /// coefficients.
    fn filter(&self, q: &RangeQuery, t: Option<&Transformation>, stats: &mut QueryStats) -> Result<Vec<usize>> {
        let mode = self.mode;
        let qrect = search_rectangle(&q.query.point, q.epsilon, mode)?
            .with_stats_bounds(mode, q.mean_bounds, q.std_bounds)
            .inflate(FILTER_SLACK);
        let eps_limit = q.epsilon * (1.0 + FILTER_SLACK) + FILTER_SLACK;
        let mut out = Vec::new();
        if self.records.is_empty() {
            return Ok(out);
        }
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            stats.nodes_visited += 1;
            stats.visited.push(id);
            let node = &self.nodes[id];
            for e in &node.entries {
                if node.leaf {
                    let rec = &self.records[e.child];
                    let p = match t {
                        Some(t) => transform_point(t, &rec.point, mode)?,
                        None => rec.point.clone(),
                    };
                    stats.coefficients_touched += mode.k();
                    if point_in_rect(&p, &qrect)? && coefficient_distance(&p, &q.query.point, mode) <= eps_limit {
                        stats.candidates += 1;
                        out.push(e.child);
                    }
                } else {
                    let r = match t {
                        Some(t) => transform_rect(t, &e.rect(mode), mode)?,
                        None => e.rect(mode),
                    };
                    if rect_overlap(&r, &qrect)? {
                        stack.push(e.child);
                    }
                }
            }
        }
        Ok(out)
    }

    /// The `count` stored objects closest to the query after transforming
    /// them, ascending by distance then id.
    pub fn transformed_knn(&self, q: &KnnQuery) -> Result<(Vec<Hit>, QueryStats)> {
        self.check_query_transform(&q.transform)?;
        self.check_query_object(&q.query)?;
        if q.count == 0 || q.count > self.records.len() {
            return Err(Error::invalid(format!(
                "neighbour count {} outside 1..={}",
                q.count,
                self.records.len()
            )));
        }
        let mode = self.mode;
        let t = &q.transform;
        let mut stats = QueryStats::default();

        #[derive(PartialEq, Eq, PartialOrd, Ord)]
        enum Item {
            Node(usize),
            Record(usize),
        }
        struct Queued(f64, Item);
        impl PartialEq for Queued {
            fn eq(&self, o: &Self) -> bool {
                self.cmp(o) == Ordering::Equal
            }
        }
        impl Eq for Queued {}
        impl PartialOrd for Queued {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Queued {
            fn cmp(&self, o: &Self) -> Ordering {
                self.0.total_cmp(&o.0).then_with(|| self.1.cmp(&o.1))
            }
        }

        // Lower bounds are shaved slightly so rounding never prunes a tie.
        let shave = |d: f64| (d * (1.0 - FILTER_SLACK) - FILTER_SLACK).max(0.0);
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Queued(0.0, Item::Node(self.root))));
        let mut best: Vec<Hit> = Vec::with_capacity(q.count + 1);
        while let Some(Reverse(Queued(lb, item))) = heap.pop() {
            if best.len() == q.count && lb > best[q.count - 1].distance {
                break;
            }
            match item {
                Item::Node(id) => {
                    stats.nodes_visited += 1;
                    stats.visited.push(id);
                    let node = &self.nodes[id];
                    for e in &node.entries {
                        if node.leaf {
                            let p = transform_point(t, &self.records[e.child].point, mode)?;
                            stats.coefficients_touched += mode.k();
                            let d = coefficient_distance(&p, &q.query.point, mode);
                            heap.push(Reverse(Queued(shave(d), Item::Record(e.child))));
                        } else {
                            let r = transform_rect(t, &e.rect(mode), mode)?;
                            let d = mindist_coefficients(&q.query.point, &r, mode)?;
                            heap.push(Reverse(Queued(shave(d), Item::Node(e.child))));
                        }
                    }
                }
                Item::Record(idx) => {
                    let rec = &self.records[idx];
                    stats.candidates += 1;
                    stats.postprocessed += 1;
                    let (sq, touched) = transformed_sq_distance(t, &rec.spectrum, &q.query.spectrum, None);
                    stats.coefficients_touched += touched;
                    let hit = Hit {
                        id: rec.id.clone(),
                        distance: sq.sqrt(),
                    };
                    let pos = best.partition_point(|h| cmp_hits(h, &hit) == Ordering::Less);
                    best.insert(pos, hit);
                    best.truncate(q.count);
                }
            }
        }
        stats.answers = best.len();
        Ok((best, stats))
    }

    /// All pairs of stored objects within `epsilon` of each other under the
    /// join's transformation. Every object probes the transformed index with
    /// its own search box.
    pub fn transformed_join(&self, q: &JoinQuery) -> Result<(Vec<PairHit>, QueryStats)> {
        self.join_impl(q, true)
    }

    /// Join that probes the index without applying the transformation to
    /// node boxes. Only meaningful for trees materialized under the join
    /// transformation (or for the identity).
    pub(crate) fn join_impl(&self, q: &JoinQuery, on_the_fly: bool) -> Result<(Vec<PairHit>, QueryStats)> {
        let t = &q.transform;
        self.check_query_transform(t)?;
        let mut stats = QueryStats::default();
        let mut raw: Vec<PairHit> = Vec::new();
        for (pi, probe) in self.records.iter().enumerate() {
            let base = Prepared {
                point: probe.point.clone(),
                spectrum: probe.spectrum.clone(),
            };
            let query = match (q.side, on_the_fly) {
                (JoinSide::Both, true) => transform_prepared(t, &base, self.mode)?,
                _ => base,
            };
            let rq = RangeQuery::new(query, q.epsilon, t.clone())?;
            let (hits, s) = if on_the_fly {
                self.range_impl(&rq, Some(t))?
            } else {
                self.range_impl(&rq, None)?
            };
            stats.absorb(&s);
            for h in hits {
                if self.ids[&h.id] == pi {
                    continue;
                }
                raw.push(PairHit {
                    id_a: h.id,
                    id_b: probe.id.clone(),
                    distance: h.distance,
                });
            }
        }
        let mut out = if q.raw_pairs {
            raw
        } else {
            let mut dedup: BTreeMap<(String, String), f64> = BTreeMap::new();
            for p in raw {
                let key = if p.id_a < p.id_b {
                    (p.id_a, p.id_b)
                } else {
                    (p.id_b, p.id_a)
                };
                dedup
                    .entry(key)
                    .and_modify(|d| *d = d.min(p.distance))
                    .or_insert(p.distance);
            }
            dedup
                .into_iter()
                .map(|((id_a, id_b), distance)| PairHit { id_a, id_b, distance })
                .collect()
        };
        out.sort_by(cmp_pairs);
        stats.answers = out.len();
        Ok((out, stats))
    }

    /// A standalone tree over `T(data)`: same nodes and entry order, with
    /// every node box, leaf point and stored spectrum mapped through `T`.
    pub fn materialize(&self, t: &Transformation) -> Result<RTree> {
        self.check_query_transform(t)?;
        let mode = self.mode;
        let mut out = self.clone();
        for rec in &mut out.records {
            rec.point = transform_point(t, &rec.point, mode)?;
            rec.spectrum = t.apply_to_prefix(&rec.spectrum)?;
        }
        for node in &mut out.nodes {
            for e in &mut node.entries {
                if node.leaf {
                    let p = &out.records[e.child].point;
                    e.lo = p.dims.clone();
                    e.hi = p.dims.clone();
                } else {
                    transform_bounds(t, &mut e.lo, &mut e.hi, mode);
                }
            }
        }
        out.materialized = Some(t.name().to_string());
        Ok(out)
    }

    /// Checks fill bounds, tight bounding boxes and uniform leaf depth.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport {
            nodes: 0,
            leaves: 0,
            height: self.height,
            entries: 0,
            violations: Vec::new(),
        };
        let mut leaf_depths = Vec::new();
        let mut stack = vec![(self.root, 1usize)];
        while let Some((id, depth)) = stack.pop() {
            report.nodes += 1;
            let node = &self.nodes[id];
            let n = node.entries.len();
            if id == self.root {
                if !node.leaf && n < 2 {
                    report.violations.push(format!("inner root {id} has {n} entries"));
                }
                if n > self.capacity {
                    report.violations.push(format!("root {id} overflows with {n} entries"));
                }
            } else if n < self.min_fill || n > self.capacity {
                report.violations.push(format!(
                    "node {id} has {n} entries, allowed {}..={}",
                    self.min_fill, self.capacity
                ));
            }
            if node.leaf {
                report.leaves += 1;
                report.entries += n;
                leaf_depths.push(depth);
                for e in &node.entries {
                    let p = &self.records[e.child].point;
                    if e.lo != p.dims || e.hi != p.dims {
                        report.violations.push(format!("leaf {id} entry for record {} is stale", e.child));
                    }
                }
            } else {
                for e in &node.entries {
                    let child = &self.nodes[e.child].entries;
                    if child.is_empty() {
                        report.violations.push(format!("node {} is empty", e.child));
                        continue;
                    }
                    if let Some(msg) = self.check_tight(e, child) {
                        report.violations.push(format!("node {id} -> {}: {msg}", e.child));
                    }
                    stack.push((e.child, depth + 1));
                }
            }
        }
        if leaf_depths.iter().any(|&d| d != self.height) {
            report
                .violations
                .push(format!("leaves at depths {leaf_depths:?}, height {}", self.height));
        }
        if report.entries != self.records.len() {
            report.violations.push(format!(
                "{} leaf entries for {} records",
                report.entries,
                self.records.len()
            ));
        }
        if report.nodes != self.nodes.len() {
            report
                .violations
                .push(format!("{} reachable nodes of {}", report.nodes, self.nodes.len()));
        }
        report
    }

    fn check_tight(&self, e: &Entry, children: &[Entry]) -> Option<String> {
        const TOL: f64 = 1e-9;
        for d in 0..self.mode.dims() {
            if self.mode.dim_kind(d) == DimKind::Angle {
                let width = e.hi[d] - e.lo[d];
                let mut min_off = f64::INFINITY;
                let mut max_end = f64::NEG_INFINITY;
                for c in children {
                    let mut off = (c.lo[d] - e.lo[d]).rem_euclid(std::f64::consts::TAU);
                    if off > std::f64::consts::TAU - TOL {
                        off -= std::f64::consts::TAU;
                    }
                    min_off = min_off.min(off);
                    max_end = max_end.max(off + (c.hi[d] - c.lo[d]));
                }
                if min_off < -TOL || max_end > width + TOL {
                    return Some(format!("dim {d} arc does not contain its children"));
                }
                if min_off > TOL || max_end < width - TOL {
                    return Some(format!("dim {d} arc is not tight"));
                }
            } else {
                let lo = children.iter().map(|c| c.lo[d]).fold(f64::INFINITY, f64::min);
                let hi = children.iter().map(|c| c.hi[d]).fold(f64::NEG_INFINITY, f64::max);
                if lo != e.lo[d] || hi != e.hi[d] {
                    return Some(format!(
                        "dim {d} bounds [{}, {}] but children span [{lo}, {hi}]",
                        e.lo[d], e.hi[d]
                    ));
                }
            }
        }
        None
    }
}

/// Maps stored node bounds through `T`. Angle bounds become
/// `[wrap(lo + phi), wrap(lo + phi) + width]`.
fn transform_bounds(t: &Transformation, lo: &mut [f64], hi: &mut [f64], mode: SpaceMode) {
    let off = mode.coeff_offset();
    for d in 0..lo.len() {
        match mode.dim_kind(d) {
            DimKind::Mean | DimKind::Std => {
                let action = if mode.dim_kind(d) == DimKind::Mean {
                    t.mean_action()
                } else {
                    t.std_action()
                };
                let (a, b) = if action.scale == 0.0 {
                    (action.offset, action.offset)
                } else {
                    action.apply_interval(lo[d], hi[d])
                };
                lo[d] = a;
                hi[d] = b;
            }
            DimKind::Magnitude => {
                let s = t.multipliers()[mode.spectrum_index((d - off) / 2)].norm();
                lo[d] *= s;
                hi[d] *= s;
            }
            DimKind::Angle => {
                let phi = angle(t.multipliers()[mode.spectrum_index((d - off) / 2)]);
                if phi == 0.0 {
                    continue;
                }
                let width = hi[d] - lo[d];
                lo[d] = wrap_angle(lo[d] + phi);
                hi[d] = lo[d] + width;
            }
        }
    }
}

fn union_bounds(entries: &[Entry]) -> (Vec<f64>, Vec<f64>) {
    let dims = entries[0].lo.len();
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for e in entries {
        for d in 0..dims {
            lo[d] = lo[d].min(e.lo[d]);
            hi[d] = hi[d].max(e.hi[d]);
        }
    }
    (lo, hi)
}

fn area(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(l, h)| h - l).product()
}

fn margin(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(l, h)| h - l).sum()
}

fn overlap_area(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64]) -> f64 {
    let mut v = 1.0;
    for d in 0..alo.len() {
        let w = ahi[d].min(bhi[d]) - alo[d].max(blo[d]);
        if w <= 0.0 {
            return 0.0;
        }
        v *= w;
    }
    v
}

fn enlarged(e: &Entry, add: &Entry) -> (Vec<f64>, Vec<f64>) {
    let lo = e.lo.iter().zip(&add.lo).map(|(a, b)| a.min(*b)).collect();
    let hi = e.hi.iter().zip(&add.hi).map(|(a, b)| a.max(*b)).collect();
    (lo, hi)
}

/// R* subtree choice: least overlap enlargement just above the leaves,
/// least area enlargement higher up; ties go to the smaller area, then the
/// smaller margin, then the earlier slot.
fn choose_subtree(entries: &[Entry], add: &Entry, children_are_leaves: bool) -> usize {
    let mut best = 0;
    let mut best_key = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for (i, e) in entries.iter().enumerate() {
        let (lo, hi) = enlarged(e, add);
        let base_area = area(&e.lo, &e.hi);
        let area_growth = area(&lo, &hi) - base_area;
        let overlap_growth = if children_are_leaves {
            entries
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| {
                    overlap_area(&lo, &hi, &o.lo, &o.hi) - overlap_area(&e.lo, &e.hi, &o.lo, &o.hi)
                })
                .sum()
        } else {
            0.0
        };
        let key = (overlap_growth, area_growth, base_area, margin(&lo, &hi) - margin(&e.lo, &e.hi));
        if key < best_key {
            best_key = key;
            best = i;
        }
    }
    best
}

/// R* split: pick the axis whose candidate distributions have the smallest
/// total margin, then the distribution on it with the least overlap (ties:
/// least total area).
fn split_entries(entries: Vec<Entry>, min_fill: usize) -> (Vec<Entry>, Vec<Entry>) {
    let total = entries.len();
    let dims = entries[0].lo.len();
    let sorted_by = |d: usize, by_hi: bool| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.sort_by(|&a, &b| {
            let (ea, eb) = (&entries[a], &entries[b]);
            let (ka, kb) = if by_hi {
                ((ea.hi[d], ea.lo[d]), (eb.hi[d], eb.lo[d]))
            } else {
                ((ea.lo[d], ea.hi[d]), (eb.lo[d], eb.hi[d]))
            };
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
        });
        idx
    };
    let group_bounds = |order: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let es: Vec<Entry> = order.iter().map(|&i| entries[i].clone()).collect();
        union_bounds(&es)
    };
    // Prefix/suffix bounds for every split point of one ordering.
    let distributions = |order: &[usize]| -> Vec<(usize, (Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
        (min_fill..=total - min_fill)
            .map(|cut| (cut, group_bounds(&order[..cut]), group_bounds(&order[cut..])))
            .collect()
    };

    let mut best_axis = 0;
    let mut best_margin = f64::INFINITY;
    for d in 0..dims {
        let mut m = 0.0;
        for by_hi in [false, true] {
            for (_, (alo, ahi), (blo, bhi)) in distributions(&sorted_by(d, by_hi)) {
                m += margin(&alo, &ahi) + margin(&blo, &bhi);
            }
        }
        if m < best_margin {
            best_margin = m;
            best_axis = d;
        }
    }

    let mut best: Option<(f64, f64, Vec<usize>, usize)> = None;
    for by_hi in [false, true] {
        let order = sorted_by(best_axis, by_hi);
        for (cut, (alo, ahi), (blo, bhi)) in distributions(&order) {
            let ov = overlap_area(&alo, &ahi, &blo, &bhi);
            let ar = area(&alo, &ahi) + area(&blo, &bhi);
            let better = match &best {
                None => true,
                Some((bo, ba, _, _)) => (ov, ar) < (*bo, *ba),
            };
            if better {
                best = Some((ov, ar, order.clone(), cut));
            }
        }
    }
    let (_, _, order, cut) = best.expect("at least one distribution");
    let mut slots: Vec<Option<Entry>> = entries.into_iter().map(Some).collect();
    let a = order[..cut].iter().map(|&i| slots[i].take().unwrap()).collect();
    let b = order[cut..].iter().map(|&i| slots[i].take().unwrap()).collect();
    (a, b)
}

/// Sequential scan over the stored spectra, no index. With `early_abandon`
/// each comparison stops as soon as the running squared distance reaches
/// `epsilon^2`. Works for any transformation, safe or not.
pub fn sequential_scan(
    records: &[Record],
    mode: SpaceMode,
    q: &RangeQuery,
    early_abandon: bool,
) -> Result<(Vec<Hit>, QueryStats)> {
    if !(q.epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {}", q.epsilon)));
    }
    let t = &q.transform;
    let mut stats = QueryStats::default();
    let eps_sq = q.epsilon * q.epsilon;
    let limit = (early_abandon && q.epsilon.is_finite()).then_some(eps_sq);
    let mut hits = Vec::new();
    for rec in records {
        if rec.spectrum.len() != q.query.spectrum.len() || t.len() != rec.spectrum.len() {
            return Err(Error::invalid(format!(
                "scan over length {} with query length {} and transformation length {}",
                rec.spectrum.len(),
                q.query.spectrum.len(),
                t.len()
            )));
        }
        stats.postprocessed += 1;
        let (sq, touched) = transformed_sq_distance(t, &rec.spectrum, &q.query.spectrum, limit);
        stats.coefficients_touched += touched;
        let stats_ok = match rec.stats(mode) {
            None => true,
            Some((mean, std)) => {
                in_bounds(t.mean_action().apply(mean), q.mean_bounds)
                    && in_bounds(t.std_action().apply(std), q.std_bounds)
            }
        };
        if sq < eps_sq && stats_ok {
            hits.push(Hit {
                id: rec.id.clone(),
                distance: sq.sqrt(),
            });
        }
    }
    hits.sort_by(cmp_hits);
    stats.candidates = records.len();
    stats.answers = hits.len();
    Ok((hits, stats))
}

/// Self-join by sequential scan: every record against every later record,
/// transforming both sides. Returns each unordered pair once.
pub fn scan_join(
    records: &[Record],
    transform: &Transformation,
    epsilon: f64,
    early_abandon: bool,
) -> Result<(Vec<PairHit>, QueryStats)> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let mut stats = QueryStats::default();
    let transformed: Vec<Vec<Complex>> = records
        .iter()
        .map(|r| transform.apply_to_prefix(&r.spectrum))
        .collect::<Result<_>>()?;
    let eps_sq = epsilon * epsilon;
    let limit = (early_abandon && epsilon.is_finite()).then_some(eps_sq);
    let mut out = Vec::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            stats.postprocessed += 1;
            let (a, b) = (&transformed[i], &transformed[j]);
            let mut sum = 0.0;
            let mut touched = 0;
            for f in 0..a.len() {
                sum += (a[f] - b[f]).norm_sqr();
                touched += 1;
                if limit.is_some_and(|l| sum >= l) {
                    break;
                }
            }
            stats.coefficients_touched += touched;
            if sum < eps_sq {
                let (x, y) = (&records[i].id, &records[j].id);
                let (id_a, id_b) = if x < y { (x, y) } else { (y, x) };
                out.push(PairHit {
                    id_a: id_a.clone(),
                    id_b: id_b.clone(),
                    distance: sum.sqrt(),
                });
            }
        }
    }
    out.sort_by(cmp_pairs);
    stats.answers = out.len();
    Ok((out, stats))
}


impl Record {
    /// The record as a query object.
    pub fn clone_prepared(&self) -> Prepared {
        Prepared {
            point: self.point.clone(),
            spectrum: self.spectrum.clone(),
        }
    }
}
