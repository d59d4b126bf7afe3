//! Brute-force oracles, seeded generators, and an adversarial selector.
//!
//! Everything here exists to check the production code against independent
//! recomputation: the graph oracles work on reachability matrices and full
//! path enumeration instead of the algorithms under test, the snapshot
//! statistics walker parses raw snapshot text without the store, and the
//! generators produce seeded random taxonomies, graphs, and tasks. Gated
//! behind the `testkit` feature; nothing in the shipping pipeline uses it.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::descriptions::{Description, DescriptionProvider};
use crate::node::NodeId;
use crate::pruning::{disambiguate, DisambiguationTask, PipelineOptions};
use crate::selector::{
    parse_response, ChoiceQuery, QueryContext, QueryKind, Selection, Selector, SelectorError,
};
use crate::subgraph::{self, CandidateDag, GraphError, NodeKind};
use crate::taxonomy::{SnapshotStats, TaxonomyStore};

type AdjacencyMap = BTreeMap<NodeId, BTreeSet<NodeId>>;

// ---------------------------------------------------------------------------
// Matrix-based graph oracles
// ---------------------------------------------------------------------------

/// A graph on integer indices with label names, for oracle computations.
#[derive(Debug, Clone)]
pub struct RawDag {
    pub labels: Vec<NodeId>,
    /// `adj[u][v]` is the edge u -> v.
    pub adj: Vec<Vec<bool>>,
}

impl RawDag {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &NodeId) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Strict reachability matrix (Warshall).
    #[allow(clippy::needless_range_loop)]
    pub fn closure(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        let mut reach = self.adj.clone();
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    pub fn has_cycle(&self) -> bool {
        let reach = self.closure();
        (0..self.node_count()).any(|i| reach[i][i])
    }

    /// The unique transitive reduction, derived from the reachability
    /// matrix: an edge survives exactly when no intermediate node connects
    /// its endpoints.
    pub fn reduction_from_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        let reach = self.closure();
        let mut out = vec![vec![false; n]; n];
        for u in 0..n {
            for v in 0..n {
                if !self.adj[u][v] || u == v {
                    continue;
                }
                let redundant = (0..n).any(|w| w != u && w != v && reach[u][w] && reach[w][v]);
                out[u][v] = !redundant;
            }
        }
        out
    }

    /// Longest root-to-node path lengths by enumerating every path.
    pub fn depths_by_path_enumeration(&self, root: usize) -> Vec<Option<usize>> {
        let n = self.node_count();
        let mut best: Vec<Option<usize>> = vec![None; n];
        let mut stack = vec![(root, 0usize)];
        while let Some((node, len)) = stack.pop() {
            if best[node].is_none_or(|b| len > b) {
                best[node] = Some(len);
            }
            for next in 0..n {
                if self.adj[node][next] {
                    stack.push((next, len + 1));
                }
            }
        }
        best
    }

    pub fn to_adjacency(&self) -> AdjacencyMap {
        let mut out: AdjacencyMap = self
            .labels
            .iter()
            .map(|l| (l.clone(), BTreeSet::new()))
            .collect();
        for (u, row) in self.adj.iter().enumerate() {
            for (v, &edge) in row.iter().enumerate() {
                if edge {
                    out.get_mut(&self.labels[u])
                        .expect("all labels present")
                        .insert(self.labels[v].clone());
                }
            }
        }
        out
    }

    /// Builds the production graph value; sinks become candidate entities.
    pub fn to_candidate_dag(&self, root: usize) -> Result<CandidateDag, GraphError> {
        let n = self.node_count();
        let sinks: Vec<usize> = (0..n)
            .filter(|&i| (0..n).all(|j| !self.adj[i][j]))
            .collect();
        let kinds: BTreeMap<NodeId, NodeKind> = (0..n)
            .map(|i| {
                let kind = if sinks.contains(&i) {
                    NodeKind::Entity
                } else {
                    NodeKind::Class
                };
                (self.labels[i].clone(), kind)
            })
            .collect();
        let edges: Vec<(NodeId, NodeId)> = (0..n)
            .flat_map(|u| (0..n).filter(move |&v| self.adj[u][v]).map(move |v| (u, v)))
            .map(|(u, v)| (self.labels[u].clone(), self.labels[v].clone()))
            .collect();
        CandidateDag::from_parts(
            self.labels[root].clone(),
            edges,
            kinds,
            sinks.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }
}

/// Brute-force lowest common ancestor: intersect ancestor-or-self sets via
/// the reachability matrix, then take the deepest by path enumeration with
/// the smallest label winning ties. Returns `(winner, ties)`.
pub fn brute_lca(dag: &RawDag, root: usize, leaves: &[usize]) -> (usize, BTreeSet<usize>) {
    let reach = dag.closure();
    let depths = dag.depths_by_path_enumeration(root);
    let common: Vec<usize> = (0..dag.node_count())
        .filter(|&a| depths[a].is_some())
        .filter(|&a| leaves.iter().all(|&l| a == l || reach[a][l]))
        .collect();
    let best = common
        .iter()
        .map(|&a| depths[a].expect("reachable"))
        .max()
        .expect("root is always common");
    let mut deepest: Vec<usize> = common
        .into_iter()
        .filter(|&a| depths[a] == Some(best))
        .collect();
    deepest.sort_by(|&a, &b| dag.labels[a].cmp(&dag.labels[b]));
    let winner = deepest[0];
    (winner, deepest.into_iter().skip(1).collect())
}

/// Strict reachability restricted to a node subset.
#[allow(clippy::needless_range_loop)]
fn closure_within(dag: &RawDag, keep: &BTreeSet<usize>) -> Vec<Vec<bool>> {
    let n = dag.node_count();
    let mut reach = vec![vec![false; n]; n];
    for u in 0..n {
        for v in 0..n {
            reach[u][v] = dag.adj[u][v] && keep.contains(&u) && keep.contains(&v);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Brute-force prune: delete the nodes, then repeatedly keep only nodes
/// reachable from the root that are entities or can still reach one.
/// `None` when no entity survives.
pub fn brute_prune(
    dag: &RawDag,
    root: usize,
    entity: &[bool],
    remove: &BTreeSet<usize>,
) -> Option<BTreeSet<usize>> {
    let n = dag.node_count();
    let mut keep: BTreeSet<usize> = (0..n).filter(|i| !remove.contains(i)).collect();
    loop {
        let reach = closure_within(dag, &keep);
        let next: BTreeSet<usize> = keep
            .iter()
            .copied()
            .filter(|&v| v == root || reach[root][v])
            .collect();
        let reach = closure_within(dag, &next);
        let mut next2: BTreeSet<usize> = next
            .iter()
            .copied()
            .filter(|&v| entity[v] || v == root || next.iter().any(|&w| entity[w] && reach[v][w]))
            .collect();
        next2.insert(root);
        if next2 == keep {
            break;
        }
        keep = next2;
    }
    keep.iter().any(|&v| entity[v] && v != root).then_some(keep)
}

// ---------------------------------------------------------------------------
// Independent snapshot statistics
// ---------------------------------------------------------------------------

/// Recomputes the four snapshot statistics straight from raw snapshot text,
/// sharing no code with the store: its own line parser, its own BFS.
pub fn raw_snapshot_stats(snapshot: &str) -> SnapshotStats {
    let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut children: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut classes: BTreeSet<&str> = BTreeSet::new();
    let mut typings: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for line in snapshot.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "SC" => {
                classes.insert(fields[1]);
                classes.insert(fields[2]);
                parents.entry(fields[1]).or_default().insert(fields[2]);
                children.entry(fields[2]).or_default().insert(fields[1]);
            }
            "TY" => {
                classes.insert(fields[2]);
                typings.entry(fields[1]).or_default().insert(fields[2]);
            }
            "EC" => {}
            other => panic!("oracle fed malformed snapshot record `{other}`"),
        }
    }

    let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
    depth.insert("Thing", 0);
    let mut frontier = vec!["Thing"];
    while let Some(current) = frontier.pop() {
        let d = depth[current];
        for &child in children.get(current).into_iter().flatten() {
            if !depth.contains_key(child) || depth[child] > d + 1 {
                depth.insert(child, d + 1);
                frontier.push(child);
            }
        }
    }

    let mut depth_sum = 0usize;
    let mut typed = 0usize;
    for classes_of_entity in typings.values() {
        if let Some(min) = classes_of_entity.iter().filter_map(|c| depth.get(c)).min() {
            depth_sum += *min;
            typed += 1;
        }
    }
    let branchings: Vec<usize> = children.values().map(BTreeSet::len).collect();

    SnapshotStats {
        instance_count: typings.len() as u64,
        class_count: classes.len() as u64,
        avg_tree_depth: if typed == 0 {
            0.0
        } else {
            depth_sum as f64 / typed as f64
        },
        avg_branching_factor: if branchings.is_empty() {
            0.0
        } else {
            branchings.iter().sum::<usize>() as f64 / branchings.len() as f64
        },
    }
}

/// Ancestor set by plain breadth-first search over `(child, parent)` pairs.
pub fn brute_ancestors(edges: &[(NodeId, NodeId)], class: &NodeId) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut frontier = vec![class.clone()];
    while let Some(current) = frontier.pop() {
        for (child, parent) in edges {
            if *child == current && out.insert(parent.clone()) {
                frontier.push(parent.clone());
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Brute-force subgraph construction
// ---------------------------------------------------------------------------

type EdgeSet = BTreeSet<(NodeId, NodeId)>;

fn pair_closure(edges: &EdgeSet) -> EdgeSet {
    let mut reach = edges.clone();
    loop {
        let mut grew = false;
        let snapshot: Vec<(NodeId, NodeId)> = reach.iter().cloned().collect();
        for (a, b) in &snapshot {
            for (c, d) in &snapshot {
                if b == c && reach.insert((a.clone(), d.clone())) {
                    grew = true;
                }
            }
        }
        if !grew {
            return reach;
        }
    }
}

/// Pair-set transitive reduction: drop every edge shadowed by a longer
/// path through some third node.
fn reduce_pairs(edges: &EdgeSet, universe: &BTreeSet<NodeId>) -> EdgeSet {
    let reach = pair_closure(edges);
    edges
        .iter()
        .filter(|(u, v)| {
            !universe.iter().any(|w| {
                w != u
                    && w != v
                    && reach.contains(&(u.clone(), w.clone()))
                    && reach.contains(&(w.clone(), v.clone()))
            })
        })
        .cloned()
        .collect()
}

/// Independent re-derivation of the published four-step construction,
/// entirely on edge-pair sets. The chain collapse deliberately picks
/// removable nodes in the opposite order from the implementation, so
/// agreement also confirms the collapse is order-independent.
pub fn brute_build(
    store: &TaxonomyStore,
    candidates: &[NodeId],
) -> Result<(EdgeSet, Vec<NodeId>), String> {
    let root = NodeId::root();
    let candidate_set: BTreeSet<&NodeId> = candidates.iter().collect();
    let sc: Vec<(NodeId, NodeId)> = store
        .subclass_edges()
        .map(|(c, p)| (c.clone(), p.clone()))
        .collect();

    // Step 1: typing edges plus all subclass edges under pulled ancestors.
    let mut pulled: BTreeSet<NodeId> = BTreeSet::new();
    let mut edges: EdgeSet = BTreeSet::new();
    for candidate in candidates {
        let types = store.classes_of(candidate);
        if types.is_empty() {
            edges.insert((root.clone(), candidate.clone()));
            continue;
        }
        for t in types {
            edges.insert((t.clone(), candidate.clone()));
            pulled.insert(t.clone());
            pulled.extend(brute_ancestors(&sc, &t));
        }
    }
    for (child, parent) in &sc {
        if pulled.contains(child) && pulled.contains(parent) {
            edges.insert((parent.clone(), child.clone()));
        }
    }

    let nodes = |edges: &EdgeSet| -> BTreeSet<NodeId> {
        edges
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .chain([root.clone()])
            .chain(candidates.iter().cloned())
            .collect()
    };

    // Step 2: classes must still lead to a candidate.
    let reach = pair_closure(&edges);
    let keep: BTreeSet<NodeId> = nodes(&edges)
        .into_iter()
        .filter(|n| {
            *n == root
                || candidate_set.contains(n)
                || candidates
                    .iter()
                    .any(|c| reach.contains(&(n.clone(), c.clone())))
        })
        .collect();
    edges.retain(|(a, b)| keep.contains(a) && keep.contains(b));

    // Step 3: self-loops out, then the matrix-style reduction.
    edges.retain(|(a, b)| a != b);
    let reach = pair_closure(&edges);
    if keep.iter().any(|n| reach.contains(&(n.clone(), n.clone()))) {
        return Err("cycle".to_string());
    }
    edges = reduce_pairs(&edges, &keep);

    // Entity-as-class normalization, in candidate order, followed by a
    // fresh reduction (splices can shadow longer paths).
    for candidate in candidates {
        let succs: Vec<NodeId> = edges
            .iter()
            .filter(|(a, _)| a == candidate)
            .map(|(_, b)| b.clone())
            .collect();
        if succs.is_empty() {
            continue;
        }
        let preds: Vec<NodeId> = edges
            .iter()
            .filter(|(_, b)| b == candidate)
            .map(|(a, _)| a.clone())
            .collect();
        edges.retain(|(a, _)| a != candidate);
        for p in &preds {
            for s in &succs {
                edges.insert((p.clone(), s.clone()));
            }
        }
    }
    edges = reduce_pairs(&edges, &nodes(&edges));

    // Step 4 collapse, largest label first (implementation goes smallest),
    // alternating with reduction to the same joint fixed point.
    loop {
        loop {
            let node_set = nodes(&edges);
            let target = node_set
                .iter()
                .rev()
                .filter(|n| **n != root && !candidate_set.contains(*n))
                .find(|n| {
                    let succs: Vec<&NodeId> = edges
                        .iter()
                        .filter(|(a, _)| a == *n)
                        .map(|(_, b)| b)
                        .collect();
                    succs.len() == 1 && !candidate_set.contains(succs[0])
                })
                .cloned();
            let Some(node) = target else { break };
            let succ = edges
                .iter()
                .find(|(a, _)| *a == node)
                .map(|(_, b)| b.clone())
                .expect("has exactly one successor");
            let preds: Vec<NodeId> = edges
                .iter()
                .filter(|(_, b)| *b == node)
                .map(|(a, _)| a.clone())
                .collect();
            edges.retain(|(a, b)| *a != node && *b != node);
            for p in preds {
                edges.insert((p, succ.clone()));
            }
        }
        let reduced = reduce_pairs(&edges, &nodes(&edges));
        if reduced == edges {
            break;
        }
        edges = reduced;
    }

    // Leaves in candidate order.
    let final_nodes = nodes(&edges);
    let leaves: Vec<NodeId> = candidates
        .iter()
        .filter(|c| final_nodes.contains(*c))
        .filter(|c| !edges.iter().any(|(a, _)| a == *c))
        .cloned()
        .collect();
    Ok((edges, leaves))
}

// ---------------------------------------------------------------------------
// Seeded generators
// ---------------------------------------------------------------------------

fn shuffle<T>(rng: &mut StdRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// A random single-source DAG as both the oracle and production shapes.
/// Node 0 is the root; every other node has at least one lower-index
/// parent, so the graph is acyclic with one source. Sinks are entities.
#[allow(clippy::needless_range_loop)]
pub fn random_rooted_dag(rng: &mut StdRng, max_nodes: usize) -> RawDag {
    let n = rng.random_range(2..=max_nodes.max(2));
    let labels: Vec<NodeId> = (0..n)
        .map(|i| {
            if i == 0 {
                NodeId::root()
            } else {
                NodeId::new(format!("n{i:02}"))
            }
        })
        .collect();
    let mut adj = vec![vec![false; n]; n];
    for j in 1..n {
        let forced = rng.random_range(0..j);
        adj[forced][j] = true;
        for i in 0..j {
            if i != forced && rng.random_bool((1.5 / j as f64).min(0.5)) {
                adj[i][j] = true;
            }
        }
    }
    RawDag { labels, adj }
}

/// A random DAG that need not be rooted or connected; edges only point from
/// lower to higher index.
#[allow(clippy::needless_range_loop)]
pub fn random_dag(rng: &mut StdRng, max_nodes: usize) -> RawDag {
    let n = rng.random_range(1..=max_nodes.max(1));
    let labels: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("n{i:02}"))).collect();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.3) {
                adj[i][j] = true;
            }
        }
    }
    RawDag { labels, adj }
}

/// Every DAG on `n` labeled nodes with edges from lower to higher index —
/// each isomorphism class of DAGs appears under this ordering.
pub fn enumerate_dags(n: usize, mut visit: impl FnMut(&RawDag)) {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let labels: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("n{i:02}"))).collect();
    for mask in 0u64..(1 << pairs.len()) {
        let mut adj = vec![vec![false; n]; n];
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                adj[i][j] = true;
            }
        }
        visit(&RawDag {
            labels: labels.clone(),
            adj,
        });
    }
}

/// True when node 0 is the unique source and reaches every node.
pub fn is_rooted_at_zero(dag: &RawDag) -> bool {
    let n = dag.node_count();
    if n == 0 {
        return false;
    }
    if (0..n).any(|i| dag.adj[i][0]) {
        return false;
    }
    if !(1..n).all(|j| (0..n).any(|i| dag.adj[i][j])) {
        return false;
    }
    let reach = dag.closure();
    (1..n).all(|j| reach[0][j])
}

/// A generated taxonomy plus its raw snapshot text and entity pool.
pub struct StoreSpec {
    pub snapshot: String,
    pub store: TaxonomyStore,
    pub entities: Vec<NodeId>,
}

/// Random taxonomy snapshot: a class DAG rooted at `Thing`, typed entities,
/// and optionally entity-as-class records (including occasional
/// self-typings, which the subgraph build must tolerate).
pub fn random_store(
    rng: &mut StdRng,
    max_classes: usize,
    max_entities: usize,
    with_entity_as_class: bool,
) -> StoreSpec {
    let n_classes = rng.random_range(2..=max_classes.max(2));
    let class_label = |i: usize| {
        if i == 0 {
            NodeId::root()
        } else {
            NodeId::new(format!("K{i:02}"))
        }
    };
    let mut lines: Vec<String> = Vec::new();
    for j in 1..n_classes {
        let forced = rng.random_range(0..j);
        lines.push(format!("SC\t{}\t{}", class_label(j), class_label(forced)));
        if j > 1 && rng.random_bool(0.3) {
            let extra = rng.random_range(0..j);
            if extra != forced {
                lines.push(format!("SC\t{}\t{}", class_label(j), class_label(extra)));
            }
        }
    }

    let mut entities: Vec<NodeId> = Vec::new();
    if with_entity_as_class && n_classes > 1 {
        let ec_count = rng.random_range(0..=usize::min(2, n_classes - 1));
        let mut picked: BTreeSet<usize> = BTreeSet::new();
        for _ in 0..ec_count {
            picked.insert(rng.random_range(1..n_classes));
        }
        for j in picked {
            let label = class_label(j);
            lines.push(format!("EC\t{label}"));
            // Type the class-entity under one of its lower-index classes,
            // which keeps the combined graph acyclic.
            lines.push(format!(
                "TY\t{label}\t{}",
                class_label(rng.random_range(0..j))
            ));
            if rng.random_bool(0.25) {
                lines.push(format!("TY\t{label}\t{label}"));
            }
            entities.push(label);
        }
    }

    let n_entities = rng.random_range(1..=max_entities.max(1));
    for e in 0..n_entities {
        let label = NodeId::new(format!("e{e:02}"));
        let typings = rng.random_range(1..=3usize);
        let mut seen = BTreeSet::new();
        for _ in 0..typings {
            let class = rng.random_range(0..n_classes);
            if seen.insert(class) {
                lines.push(format!("TY\t{label}\t{}", class_label(class)));
            }
        }
        entities.push(label);
    }

    let snapshot = lines.join("\n") + "\n";
    let store = TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "generated")
        .expect("generated snapshots are valid");
    StoreSpec {
        snapshot,
        store,
        entities,
    }
}

/// Random candidate list over a store's entity pool, salted with labels the
/// store has never seen.
pub fn random_candidates(rng: &mut StdRng, spec: &StoreSpec, k_max: usize) -> Vec<NodeId> {
    let mut pool = spec.entities.clone();
    shuffle(rng, &mut pool);
    let k = rng.random_range(1..=k_max.max(1));
    let mut out: Vec<NodeId> = Vec::new();
    for i in 0..k {
        if rng.random_bool(0.1) {
            out.push(NodeId::new(format!("unknown{i:02}")));
        } else if let Some(e) = pool.pop() {
            out.push(e);
        }
    }
    if out.is_empty() {
        out.push(NodeId::new("unknown00"));
    }
    out
}

/// Random disambiguation task against a generated store.
pub fn random_task(
    rng: &mut StdRng,
    spec: &StoreSpec,
    id: &str,
    k_max: usize,
) -> DisambiguationTask {
    let candidates = random_candidates(rng, spec, k_max);
    let gold = if rng.random_bool(0.85) {
        Some(candidates[rng.random_range(0..candidates.len())].clone())
    } else {
        spec.entities.first().cloned()
    };
    DisambiguationTask {
        id: id.to_string(),
        mention: "thing-x".to_string(),
        document: "An article that talks about thing-x at length, with context.".to_string(),
        candidates,
        gold,
    }
}

// ---------------------------------------------------------------------------
// Adversarial selector
// ---------------------------------------------------------------------------

/// Answers queries with seeded random junk: valid indices, option labels,
/// sentinel phrases, verdicts, and outright garbage. Useful for checking
/// that the loop terminates within its query bounds no matter what the
/// backend says.
pub struct AdversarialSelector {
    rng: Mutex<StdRng>,
}

impl AdversarialSelector {
    pub fn seeded(seed: u64) -> Self {
        AdversarialSelector {
            rng: Mutex::new(StdRng::seed_from_u64(seed)),
        }
    }
}

impl Selector for AdversarialSelector {
    fn select(
        &self,
        _ctx: &QueryContext<'_>,
        query: &ChoiceQuery,
    ) -> Result<Selection, SelectorError> {
        let mut rng = self.rng.lock().expect("rng lock");
        let raw = match rng.random_range(0..6u8) {
            0 => rng.random_range(1..=query.selectable_count()).to_string(),
            1 => "absolutely no idea, sorry".to_string(),
            2 => {
                let i = rng.random_range(0..query.options.len());
                format!("It must be {}.", query.options[i].label)
            }
            3 => "none of the above".to_string(),
            4 => "other".to_string(),
            _ => {
                if query.kind == QueryKind::Assessment && rng.random_bool(0.5) {
                    "No".to_string()
                } else {
                    "Yes".to_string()
                }
            }
        };
        Ok(parse_response(&raw, query))
    }
}

/// Descriptions synthesized on demand; handy wherever test runs need the
/// description path exercised without fixtures.
pub struct SyntheticDescriptions;

impl DescriptionProvider for SyntheticDescriptions {
    fn describe(&self, entity: &NodeId) -> Option<Description> {
        Some(Description {
            entity: entity.clone(),
            text: format!("{entity}: a generated reference entry for testing."),
            fetched_at: 0,
            source: "synthetic".to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// Verification drivers
// ---------------------------------------------------------------------------

fn adjacency_to_pairs(adj: &AdjacencyMap) -> EdgeSet {
    adj.iter()
        .flat_map(|(p, cs)| cs.iter().map(move |c| (p.clone(), c.clone())))
        .collect()
}

fn matrix_to_pairs(dag: &RawDag, matrix: &[Vec<bool>]) -> EdgeSet {
    let mut out = EdgeSet::new();
    for (u, row) in matrix.iter().enumerate() {
        for (v, &e) in row.iter().enumerate() {
            if e {
                out.insert((dag.labels[u].clone(), dag.labels[v].clone()));
            }
        }
    }
    out
}

fn check_reduction_case(dag: &RawDag) -> Result<(), String> {
    let got = subgraph::transitive_reduction(&dag.to_adjacency())
        .map_err(|e| format!("reduction failed on a DAG: {e}"))?;
    let expected = matrix_to_pairs(dag, &dag.reduction_from_matrix());
    let got_pairs = adjacency_to_pairs(&got);
    if got_pairs != expected {
        return Err(format!(
            "reduction mismatch on {:?}: got {got_pairs:?}, expected {expected:?}",
            dag.adj
        ));
    }
    // Reachability must be preserved exactly, checked against the matrix.
    if pair_closure(&got_pairs) != pair_closure(&adjacency_to_pairs(&dag.to_adjacency())) {
        return Err(format!("reduction changed reachability on {:?}", dag.adj));
    }
    Ok(())
}

/// Transitive reduction against the matrix oracle on every DAG (up to
/// relabeling) with at most `max_nodes` nodes. Returns the case count.
pub fn check_reduction_exhaustive(max_nodes: usize) -> Result<usize, String> {
    let mut cases = 0usize;
    let mut failure: Option<String> = None;
    for n in 1..=max_nodes {
        enumerate_dags(n, |dag| {
            if failure.is_some() {
                return;
            }
            cases += 1;
            if let Err(e) = check_reduction_case(dag) {
                failure = Some(e);
            }
        });
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(cases),
    }
}

/// Transitive reduction against the matrix oracle on random DAGs.
pub fn check_reduction_random(seed: u64, cases: usize, max_nodes: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..cases {
        let dag = random_dag(&mut rng, max_nodes);
        check_reduction_case(&dag)?;
    }
    Ok(cases)
}

fn check_rooted_case(dag: &RawDag, rng: Option<&mut StdRng>) -> Result<(), String> {
    let n = dag.node_count();
    let cd = dag
        .to_candidate_dag(0)
        .map_err(|e| format!("rooted dag rejected: {e}"))?;

    // Depth of every node against path enumeration.
    let depths = dag.depths_by_path_enumeration(0);
    for (i, label) in dag.labels.iter().enumerate() {
        let got = cd.depth(label).map_err(|e| e.to_string())?;
        let expected = depths[i].ok_or_else(|| format!("{label} unreachable"))?;
        if got != expected {
            return Err(format!(
                "depth mismatch at {label}: got {got}, expected {expected} on {:?}",
                dag.adj
            ));
        }
    }

    let sinks: Vec<usize> = (0..n).filter(|&i| (0..n).all(|j| !dag.adj[i][j])).collect();
    let entity: Vec<bool> = (0..n).map(|i| sinks.contains(&i)).collect();

    // Leaf subsets for the LCA check: exhaustive when small, sampled when
    // a generator is supplied.
    let subsets: Vec<Vec<usize>> = match rng {
        None => (1u32..(1 << sinks.len()))
            .map(|mask| {
                sinks
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &s)| s)
                    .collect()
            })
            .collect(),
        Some(rng) => (0..3)
            .map(|_| {
                let count = rng.random_range(1..=sinks.len());
                let mut pool = sinks.clone();
                shuffle(rng, &mut pool);
                pool.truncate(count);
                pool
            })
            .collect(),
    };

    for subset in &subsets {
        let leaves: Vec<NodeId> = subset.iter().map(|&i| dag.labels[i].clone()).collect();
        let (got, got_ties) = cd.lca_with_ties(&leaves).map_err(|e| e.to_string())?;
        let (want, want_ties) = brute_lca(dag, 0, subset);
        if got != dag.labels[want] {
            return Err(format!(
                "lca mismatch for {leaves:?}: got {got}, expected {} on {:?}",
                dag.labels[want], dag.adj
            ));
        }
        let want_tie_labels: BTreeSet<NodeId> =
            want_ties.iter().map(|&i| dag.labels[i].clone()).collect();
        if got_ties != want_tie_labels {
            return Err(format!(
                "lca tie mismatch for {leaves:?}: got {got_ties:?}, expected {want_tie_labels:?}"
            ));
        }
        // Definitional invariants: ancestor of all leaves, none deeper.
        let reach = dag.closure();
        let got_idx = dag.index_of(&got).expect("lca is a node");
        for &leaf in subset {
            if got_idx != leaf && !reach[got_idx][leaf] {
                return Err(format!(
                    "lca {got} does not reach leaf {}",
                    dag.labels[leaf]
                ));
            }
        }
    }

    // Prune random or exhaustive subsets of non-root nodes.
    let prune_sets: Vec<BTreeSet<usize>> = if n <= 5 {
        (0u32..(1 << (n - 1)))
            .map(|mask| {
                (1..n)
                    .filter(|&i| mask & (1 << (i - 1)) != 0)
                    .collect::<BTreeSet<usize>>()
            })
            .collect()
    } else {
        let mut rng = StdRng::seed_from_u64(n as u64 * 7919);
        (0..4)
            .map(|_| {
                (1..n)
                    .filter(|_| rng.random_bool(0.25))
                    .collect::<BTreeSet<usize>>()
            })
            .collect()
    };
    for remove in &prune_sets {
        let remove_ids: BTreeSet<NodeId> = remove.iter().map(|&i| dag.labels[i].clone()).collect();
        let got = cd.prune(&remove_ids);
        let want = brute_prune(dag, 0, &entity, remove);
        match (got, want) {
            (Ok(got), Some(want)) => {
                let got_nodes: BTreeSet<NodeId> = got.nodes().cloned().collect();
                let want_nodes: BTreeSet<NodeId> =
                    want.iter().map(|&i| dag.labels[i].clone()).collect();
                if got_nodes != want_nodes {
                    return Err(format!(
                        "prune mismatch removing {remove_ids:?}: got {got_nodes:?}, expected {want_nodes:?} on {:?}",
                        dag.adj
                    ));
                }
                // Surviving edges must be exactly the ones induced by the
                // surviving nodes: pruning deletes nodes, never rewires.
                let got_edges: EdgeSet = got.edges().map(|(p, c)| (p.clone(), c.clone())).collect();
                let mut want_edges = EdgeSet::new();
                for &u in &want {
                    for &v in &want {
                        if dag.adj[u][v] {
                            want_edges.insert((dag.labels[u].clone(), dag.labels[v].clone()));
                        }
                    }
                }
                if got_edges != want_edges {
                    return Err(format!(
                        "prune edge mismatch removing {remove_ids:?}: got {got_edges:?}, expected {want_edges:?}"
                    ));
                }
            }
            (Err(GraphError::NoLeavesLeft), None) => {}
            (got, want) => {
                return Err(format!(
                    "prune disagreement removing {remove_ids:?}: impl {got:?}, oracle ok={}",
                    want.is_some()
                ));
            }
        }
    }
    Ok(())
}

/// Depth, LCA, and prune against brute force on every rooted DAG (up to
/// relabeling) with at most `max_nodes` nodes.
pub fn check_rooted_ops_exhaustive(max_nodes: usize) -> Result<usize, String> {
    let mut cases = 0usize;
    let mut failure: Option<String> = None;
    for n in 2..=max_nodes {
        enumerate_dags(n, |dag| {
            if failure.is_some() || !is_rooted_at_zero(dag) {
                return;
            }
            cases += 1;
            if let Err(e) = check_rooted_case(dag, None) {
                failure = Some(e);
            }
        });
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(cases),
    }
}

/// Depth, LCA, and prune against brute force on random rooted DAGs.
pub fn check_rooted_ops_random(seed: u64, cases: usize, max_nodes: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..cases {
        let dag = random_rooted_dag(&mut rng, max_nodes);
        let mut subset_rng = StdRng::seed_from_u64(rng.random::<u64>());
        check_rooted_case(&dag, Some(&mut subset_rng))?;
    }
    Ok(cases)
}

/// Full subgraph construction against the four-step brute pipeline on
/// random stores and candidate sets.
pub fn check_build_pipeline(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..cases {
        let spec = random_store(&mut rng, 30, 12, true);
        let candidates = random_candidates(&mut rng, &spec, 10);
        let got = CandidateDag::build_subgraph(&spec.store, &candidates);
        let want = brute_build(&spec.store, &candidates);
        match (got, want) {
            (Ok(got), Ok((want_edges, want_leaves))) => {
                let got_edges: EdgeSet = got.edges().map(|(p, c)| (p.clone(), c.clone())).collect();
                if got_edges != want_edges {
                    return Err(format!(
                        "build mismatch (case {case}) for candidates {candidates:?} over\n{}\ngot  {got_edges:?}\nwant {want_edges:?}",
                        spec.snapshot
                    ));
                }
                if got.leaves() != want_leaves {
                    return Err(format!(
                        "leaf mismatch (case {case}): got {:?}, want {want_leaves:?}",
                        got.leaves()
                    ));
                }
            }
            (Err(GraphError::CyclicInput(_)), Err(_)) => {}
            (got, want) => {
                return Err(format!(
                    "build disagreement (case {case}): impl {:?}, oracle ok={} for candidates {candidates:?} over\n{}",
                    got.map(|d| d.export_edges()),
                    want.is_ok(),
                    spec.snapshot
                ));
            }
        }
    }
    Ok(cases)
}

/// Aggregate bounds observed while hammering the loop with the adversarial
/// selector.
#[derive(Debug, Default)]
pub struct BoundsSummary {
    pub runs: usize,
    pub max_iterations: usize,
    pub max_entity_queries: u32,
    pub max_total_calls: u32,
}

/// Runs `cases` random tasks against the adversarial selector and checks,
/// per run: termination, iterations <= k, entity-eliminating queries <= k,
/// and total selector calls <= 3k.
pub fn check_termination_bounds(
    seed: u64,
    cases: usize,
    k_max: usize,
) -> Result<BoundsSummary, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut summary = BoundsSummary::default();
    let opts = PipelineOptions::default();
    for case in 0..cases {
        let spec = random_store(&mut rng, 20, 10, true);
        let task = random_task(&mut rng, &spec, &format!("t{case}"), k_max);
        let selector = AdversarialSelector::seeded(rng.random::<u64>());
        let (result, trace) =
            disambiguate(&task, &spec.store, &selector, &SyntheticDescriptions, &opts)
                .map_err(|e| format!("case {case} failed: {e}"))?;
        let k = task.candidates.len() as u32;
        if !task.candidates.contains(&result) {
            return Err(format!("case {case}: result `{result}` not a candidate"));
        }
        if trace.iterations.len() as u32 > k {
            return Err(format!(
                "case {case}: {} iterations exceeds k={k}",
                trace.iterations.len()
            ));
        }
        if trace.entity_query_calls > k {
            return Err(format!(
                "case {case}: {} entity queries exceeds k={k}",
                trace.entity_query_calls
            ));
        }
        if trace.total_selector_calls > 3 * k {
            return Err(format!(
                "case {case}: {} total calls exceeds 3k={}",
                trace.total_selector_calls,
                3 * k
            ));
        }
        summary.runs += 1;
        summary.max_iterations = summary.max_iterations.max(trace.iterations.len());
        summary.max_entity_queries = summary.max_entity_queries.max(trace.entity_query_calls);
        summary.max_total_calls = summary.max_total_calls.max(trace.total_selector_calls);
    }
    Ok(summary)
}
