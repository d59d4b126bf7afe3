//! Per-mention candidate DAGs.
//!
//! For a candidate set, a DAG is cut out of the taxonomy with `Thing` as the
//! only source and the candidate entities as the only sinks. Construction
//! runs four steps in order: attach candidates to their typing classes and
//! pull every class ancestor up to the root; drop classes that are not
//! ancestors of any candidate; transitively reduce and drop self-loops, then
//! turn candidates that still have successors into leaves (entities can act
//! as classes in some KGs); finally collapse class-only single-successor
//! chains so the remaining levels carry actual distinctions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;
use crate::taxonomy::TaxonomyStore;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("candidate `{0}` appears more than once")]
    DuplicateCandidate(NodeId),
    #[error("input graph contains a cycle involving `{0}`")]
    CyclicInput(NodeId),
    #[error("node `{0}` is not in the graph")]
    UnknownNode(NodeId),
    #[error("node `{0}` is a leaf and has no successors to classify")]
    LeafNode(NodeId),
    #[error("the root cannot be pruned")]
    PruneRoot,
    #[error("pruning would remove every leaf")]
    NoLeavesLeft,
    #[error("graph invariant violated: {0}")]
    InvariantViolation(String),
}

/// Whether a DAG node is a taxonomy class or a candidate entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Class,
    Entity,
}

/// Classification of a node's direct successors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessorCaseKind {
    AllClasses,
    AllEntities,
    Mixed,
}

/// Direct successors of a node split by kind, in deterministic order:
/// classes by label, entities by original candidate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessorCase {
    pub kind: SuccessorCaseKind,
    pub class_successors: Vec<NodeId>,
    pub entity_successors: Vec<NodeId>,
}

type AdjacencyMap = BTreeMap<NodeId, BTreeSet<NodeId>>;

/// The pruning DAG for one mention.
///
/// Invariants, maintained by every operation:
/// - acyclic, with exactly one source: the root `Thing`;
/// - every sink is an entity drawn from the mention's candidate set;
/// - every node lies on some root-to-leaf path.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDag {
    root: NodeId,
    children: AdjacencyMap,
    parents: AdjacencyMap,
    kinds: BTreeMap<NodeId, NodeKind>,
    candidate_order: Vec<NodeId>,
}

impl CandidateDag {
    /// Builds the DAG for `candidates` against a taxonomy.
    ///
    /// Candidates without any typing in the store are attached directly
    /// under the root rather than dropped: the pipeline must still be able
    /// to return them.
    pub fn build_subgraph(
        store: &TaxonomyStore,
        candidates: &[NodeId],
    ) -> Result<Self, GraphError> {
        if candidates.is_empty() {
            return Err(GraphError::EmptyCandidates);
        }
        let mut seen = BTreeSet::new();
        for candidate in candidates {
            if !seen.insert(candidate.clone()) {
                return Err(GraphError::DuplicateCandidate(candidate.clone()));
            }
        }

        let candidate_set: BTreeSet<NodeId> = candidates.iter().cloned().collect();
        let root = NodeId::root();

        // Step 1: typing edges plus every class ancestor up to the root.
        let mut children = step_attach(store, candidates, &root);

        // Step 2: drop classes that are not ancestors of any candidate.
        step_drop_non_ancestors(&mut children, &root, &candidate_set);

        // Step 3: transitive reduction; also removes self-loops.
        children = transitive_reduction(&children)?;

        // Entity-as-class normalization: candidates must end up as leaves.
        // Re-reduce afterwards: splicing a candidate's successors onto its
        // predecessors can shadow an existing longer path, and a redundant
        // edge would let a node sit under the LCA both as a direct
        // successor and as a descendant of one, which breaks the successor
        // classification the pruning cases rely on.
        step_normalize_entity_candidates(&mut children, candidates);
        children = transitive_reduction(&children)?;

        // Step 4: collapse class-only single-successor chains. Collapse
        // splices edges too, so alternate with reduction to a joint fixed
        // point; each round removes a node or an edge, so it terminates.
        loop {
            step_collapse_chains(&mut children, &root, &candidate_set);
            let reduced = transitive_reduction(&children)?;
            if reduced == children {
                break;
            }
            children = reduced;
        }

        let kinds = children
            .keys()
            .map(|n| {
                let kind = if candidate_set.contains(n) {
                    NodeKind::Entity
                } else {
                    NodeKind::Class
                };
                (n.clone(), kind)
            })
            .collect();
        let order = candidates
            .iter()
            .filter(|c| children.contains_key(*c))
            .cloned()
            .collect();

        let dag = CandidateDag {
            root,
            parents: invert(&children),
            children,
            kinds,
            candidate_order: order,
        };
        debug_assert!(dag.validate().is_ok(), "{:?}", dag.validate());
        Ok(dag)
    }

    /// Assembles a DAG from raw parts, validating every invariant. Useful
    /// for fixtures and for replaying exported edge lists.
    pub fn from_parts(
        root: NodeId,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        kinds: BTreeMap<NodeId, NodeKind>,
        candidate_order: Vec<NodeId>,
    ) -> Result<Self, GraphError> {
        let mut children: AdjacencyMap = BTreeMap::new();
        for node in kinds.keys() {
            children.entry(node.clone()).or_default();
        }
        children.entry(root.clone()).or_default();
        for (parent, child) in edges {
            children.entry(child.clone()).or_default();
            children.entry(parent.clone()).or_default().insert(child);
        }
        let dag = CandidateDag {
            root,
            parents: invert(&children),
            children,
            kinds,
            candidate_order,
        };
        dag.validate()?;
        Ok(dag)
    }

    fn validate(&self) -> Result<(), GraphError> {
        toposort(&self.children)?;
        let sources: Vec<&NodeId> = self
            .children
            .keys()
            .filter(|n| self.parents.get(*n).is_none_or(BTreeSet::is_empty))
            .collect();
        match sources.as_slice() {
            [only] if **only == self.root => {}
            _ => {
                return Err(GraphError::InvariantViolation(format!(
                    "expected `{}` as the only source, found {:?}",
                    self.root, sources
                )));
            }
        }
        let candidate_set: BTreeSet<&NodeId> = self.candidate_order.iter().collect();
        for (node, succ) in &self.children {
            let kind = self
                .kinds
                .get(node)
                .ok_or_else(|| GraphError::InvariantViolation(format!("`{node}` has no kind")))?;
            if succ.is_empty() && (*kind != NodeKind::Entity || !candidate_set.contains(node)) {
                return Err(GraphError::InvariantViolation(format!(
                    "leaf `{node}` is not a candidate entity"
                )));
            }
        }
        // Every node on a root-to-leaf path: reachable from the root and
        // able to reach some leaf. Reachability from the root follows from
        // the unique-source check on an acyclic graph only for connected
        // graphs, so check it explicitly.
        let from_root = reachable_from(&self.children, &self.root);
        for node in self.children.keys() {
            if !from_root.contains(node) {
                return Err(GraphError::InvariantViolation(format!(
                    "`{node}` is not reachable from the root"
                )));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.children.contains_key(node)
    }

    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn kind(&self, node: &NodeId) -> Option<NodeKind> {
        self.kinds.get(node).copied()
    }

    pub fn successors(&self, node: &NodeId) -> Option<&BTreeSet<NodeId>> {
        self.children.get(node)
    }

    pub fn predecessors(&self, node: &NodeId) -> Option<&BTreeSet<NodeId>> {
        self.parents.get(node)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.children
            .iter()
            .flat_map(|(p, cs)| cs.iter().map(move |c| (p, c)))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.children.keys()
    }

    /// Transitive predecessors of a node, excluding the node itself.
    pub fn ancestors(&self, node: &NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.contains(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        Ok(ancestors_of(&self.parents, node))
    }

    /// Sinks of the DAG in original candidate order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.candidate_order
            .iter()
            .filter(|c| self.children.get(*c).is_some_and(BTreeSet::is_empty))
            .cloned()
            .collect()
    }

    /// Length of the longest root-to-node path. The longest path is what
    /// "furthest from the root" means in a multi-parent DAG; a shortest-path
    /// reading would contradict it whenever a node has both a short and a
    /// long route.
    pub fn depth(&self, node: &NodeId) -> Result<usize, GraphError> {
        if !self.contains(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        Ok(self.longest_depths()[node])
    }

    fn longest_depths(&self) -> BTreeMap<NodeId, usize> {
        let order = toposort(&self.children).expect("invariant: dag is acyclic");
        let mut depths: BTreeMap<NodeId, usize> = BTreeMap::new();
        depths.insert(self.root.clone(), 0);
        for node in order {
            let Some(&d) = depths.get(&node) else {
                continue;
            };
            for child in &self.children[&node] {
                let entry = depths.entry(child.clone()).or_insert(0);
                *entry = (*entry).max(d + 1);
            }
        }
        depths
    }

    /// The deepest node that is an ancestor of every given leaf (a node
    /// counts as its own ancestor). Ties on depth are broken towards the
    /// lexicographically smallest label so traces replay deterministically.
    pub fn lca(&self, leaves: &[NodeId]) -> Result<NodeId, GraphError> {
        self.lca_with_ties(leaves).map(|(node, _)| node)
    }

    /// Like [`CandidateDag::lca`], also returning the equally deep
    /// alternatives that lost the tie-break.
    pub fn lca_with_ties(
        &self,
        leaves: &[NodeId],
    ) -> Result<(NodeId, BTreeSet<NodeId>), GraphError> {
        if leaves.is_empty() {
            return Err(GraphError::InvariantViolation(
                "lca of an empty leaf set".to_string(),
            ));
        }
        let mut common: Option<BTreeSet<NodeId>> = None;
        for leaf in leaves {
            if !self.contains(leaf) {
                return Err(GraphError::UnknownNode(leaf.clone()));
            }
            let mut up = ancestors_of(&self.parents, leaf);
            up.insert(leaf.clone());
            common = Some(match common {
                None => up,
                Some(acc) => acc.intersection(&up).cloned().collect(),
            });
        }
        let common = common.expect("leaves is non-empty");
        let depths = self.longest_depths();
        let best_depth = common
            .iter()
            .map(|n| depths[n])
            .max()
            .expect("root is always a common ancestor");
        let mut deepest = common.into_iter().filter(|n| depths[n] == best_depth);
        let chosen = deepest.next().expect("at least one deepest ancestor");
        Ok((chosen, deepest.collect()))
    }

    /// Splits a node's direct successors by kind.
    pub fn successor_case(&self, node: &NodeId) -> Result<SuccessorCase, GraphError> {
        let succ = self
            .children
            .get(node)
            .ok_or_else(|| GraphError::UnknownNode(node.clone()))?;
        if succ.is_empty() {
            return Err(GraphError::LeafNode(node.clone()));
        }
        let mut class_successors: Vec<NodeId> = Vec::new();
        let mut entity_set: BTreeSet<&NodeId> = BTreeSet::new();
        for child in succ {
            match self.kinds[child] {
                NodeKind::Class => class_successors.push(child.clone()),
                NodeKind::Entity => {
                    entity_set.insert(child);
                }
            }
        }
        let entity_successors: Vec<NodeId> = self
            .candidate_order
            .iter()
            .filter(|c| entity_set.contains(c))
            .cloned()
            .collect();
        let kind = match (class_successors.is_empty(), entity_successors.is_empty()) {
            (false, true) => SuccessorCaseKind::AllClasses,
            (true, false) => SuccessorCaseKind::AllEntities,
            (false, false) => SuccessorCaseKind::Mixed,
            (true, true) => unreachable!("successor set verified non-empty"),
        };
        Ok(SuccessorCase {
            kind,
            class_successors,
            entity_successors,
        })
    }

    /// Removes `nodes`, then iteratively removes everything that is no
    /// longer on a root-to-leaf path: nodes unreachable from the root and
    /// classes that stopped being ancestors of any surviving entity.
    pub fn prune(&self, nodes: &BTreeSet<NodeId>) -> Result<CandidateDag, GraphError> {
        if nodes.contains(&self.root) {
            return Err(GraphError::PruneRoot);
        }
        for node in nodes {
            if !self.contains(node) {
                return Err(GraphError::UnknownNode(node.clone()));
            }
        }
        let mut keep: BTreeSet<NodeId> = self
            .children
            .keys()
            .filter(|n| !nodes.contains(*n))
            .cloned()
            .collect();

        loop {
            let restricted = restrict(&self.children, &keep);
            let from_root = reachable_from(&restricted, &self.root);
            let mut next: BTreeSet<NodeId> = keep.intersection(&from_root).cloned().collect();
            // Classes must still lead to an entity leaf.
            let again = restrict(&self.children, &next);
            let reaches_entity = nodes_reaching_entities(&again, &self.kinds);
            next.retain(|n| self.kinds[n] == NodeKind::Entity || reaches_entity.contains(n));
            next.insert(self.root.clone());
            if next == keep {
                break;
            }
            keep = next;
        }

        let has_leaf = keep
            .iter()
            .any(|n| !n.is_root() && self.kinds[n] == NodeKind::Entity);
        if !has_leaf {
            return Err(GraphError::NoLeavesLeft);
        }

        let children = restrict(&self.children, &keep);
        let dag = CandidateDag {
            root: self.root.clone(),
            parents: invert(&children),
            children,
            kinds: self
                .kinds
                .iter()
                .filter(|(n, _)| keep.contains(*n))
                .map(|(n, k)| (n.clone(), *k))
                .collect(),
            candidate_order: self
                .candidate_order
                .iter()
                .filter(|c| keep.contains(*c))
                .cloned()
                .collect(),
        };
        debug_assert!(dag.validate().is_ok(), "{:?}", dag.validate());
        Ok(dag)
    }

    /// Returns a copy with every redundant edge removed: no edge survives if
    /// the same pair is connected by a longer path. Self-loops are dropped.
    pub fn transitive_reduce(&self) -> Result<CandidateDag, GraphError> {
        let children = transitive_reduction(&self.children)?;
        Ok(CandidateDag {
            root: self.root.clone(),
            parents: invert(&children),
            children,
            kinds: self.kinds.clone(),
            candidate_order: self.candidate_order.clone(),
        })
    }

    /// Line-oriented edge list (`parent<TAB>child<TAB>child-kind`) with
    /// parents sorted, then children, for fixture comparison.
    pub fn export_edges(&self) -> String {
        let mut out = String::new();
        for (parent, child) in self.edges() {
            let kind = match self.kinds[child] {
                NodeKind::Class => "class",
                NodeKind::Entity => "entity",
            };
            writeln!(out, "{parent}\t{child}\t{kind}").expect("write to string");
        }
        out
    }
}

/// Step 1: typing edges for each candidate plus all class ancestors.
fn step_attach(store: &TaxonomyStore, candidates: &[NodeId], root: &NodeId) -> AdjacencyMap {
    let mut children: AdjacencyMap = BTreeMap::new();
    children.entry(root.clone()).or_default();
    let mut pulled: BTreeSet<NodeId> = BTreeSet::new();
    for candidate in candidates {
        children.entry(candidate.clone()).or_default();
        let types = store.classes_of(candidate);
        if types.is_empty() {
            // Not in the KG: keep it selectable directly under the root.
            children
                .entry(root.clone())
                .or_default()
                .insert(candidate.clone());
            continue;
        }
        for class in types {
            children
                .entry(class.clone())
                .or_default()
                .insert(candidate.clone());
            pull_ancestors(store, &class, &mut children, &mut pulled);
        }
    }
    children
}

fn pull_ancestors(
    store: &TaxonomyStore,
    class: &NodeId,
    children: &mut AdjacencyMap,
    pulled: &mut BTreeSet<NodeId>,
) {
    if !pulled.insert(class.clone()) {
        return;
    }
    children.entry(class.clone()).or_default();
    for parent in store.class_parents(class) {
        children
            .entry(parent.clone())
            .or_default()
            .insert(class.clone());
        pull_ancestors(store, &parent, children, pulled);
    }
}

/// Step 2: keep the root, the candidates, and classes that can still reach
/// a candidate.
fn step_drop_non_ancestors(
    children: &mut AdjacencyMap,
    root: &NodeId,
    candidates: &BTreeSet<NodeId>,
) {
    let reaching = nodes_reaching(children, candidates);
    let keep: BTreeSet<NodeId> = children
        .keys()
        .filter(|n| *n == root || candidates.contains(*n) || reaching.contains(*n))
        .cloned()
        .collect();
    *children = restrict(children, &keep);
}

/// Entity-as-class normalization: a candidate that still has successors is
/// turned into a leaf by dropping its outgoing edges and linking its former
/// successors to its predecessors. One pass suffices: once cleared, a
/// candidate has no outgoing edge left through which it could regain any.
fn step_normalize_entity_candidates(children: &mut AdjacencyMap, candidates: &[NodeId]) {
    for candidate in candidates {
        let succ = match children.get(candidate) {
            Some(s) if !s.is_empty() => s.clone(),
            _ => continue,
        };
        let preds: Vec<NodeId> = children
            .iter()
            .filter(|(_, cs)| cs.contains(candidate))
            .map(|(p, _)| p.clone())
            .collect();
        children.get_mut(candidate).expect("present").clear();
        for pred in preds {
            let set = children.get_mut(&pred).expect("present");
            for s in &succ {
                set.insert(s.clone());
            }
        }
    }
}

/// Step 4: iteratively remove non-root nodes whose single direct successor
/// is a class, linking that successor to the node's predecessors. The node
/// count strictly decreases, so the fixed point exists.
fn step_collapse_chains(children: &mut AdjacencyMap, root: &NodeId, candidates: &BTreeSet<NodeId>) {
    loop {
        let target = children
            .iter()
            .find(|(node, succ)| {
                *node != root
                    && !candidates.contains(*node)
                    && succ.len() == 1
                    && !candidates.contains(succ.iter().next().expect("len is 1"))
            })
            .map(|(node, succ)| (node.clone(), succ.iter().next().expect("len is 1").clone()));
        let Some((node, successor)) = target else {
            return;
        };
        children.remove(&node);
        for succ_set in children.values_mut() {
            if succ_set.remove(&node) {
                succ_set.insert(successor.clone());
            }
        }
    }
}

/// Unique transitive reduction of a DAG, as raw adjacency. Self-loops are
/// dropped up front; any remaining cycle is an error since the reduction is
/// only well-defined for acyclic graphs.
pub(crate) fn transitive_reduction(children: &AdjacencyMap) -> Result<AdjacencyMap, GraphError> {
    let mut clean: AdjacencyMap = BTreeMap::new();
    for (node, succ) in children {
        let filtered: BTreeSet<NodeId> = succ.iter().filter(|s| *s != node).cloned().collect();
        for s in &filtered {
            clean.entry(s.clone()).or_default();
        }
        clean.insert(node.clone(), filtered);
    }
    toposort(&clean)?;

    let mut reach: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for node in clean.keys() {
        let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
        let mut stack: Vec<&NodeId> = clean[node].iter().collect();
        while let Some(current) = stack.pop() {
            if seen.insert(current) {
                stack.extend(clean[current].iter());
            }
        }
        reach.insert(node, seen);
    }

    let mut reduced: AdjacencyMap = BTreeMap::new();
    for (node, succ) in &clean {
        let kept: BTreeSet<NodeId> = succ
            .iter()
            .filter(|v| {
                // Drop (u, v) when some other successor of u reaches v.
                !succ.iter().any(|w| w != *v && reach[w].contains(v))
            })
            .cloned()
            .collect();
        reduced.insert(node.clone(), kept);
    }
    Ok(reduced)
}

pub(crate) fn toposort(children: &AdjacencyMap) -> Result<Vec<NodeId>, GraphError> {
    let mut in_degree: BTreeMap<&NodeId, usize> = children.keys().map(|n| (n, 0)).collect();
    for succ in children.values() {
        for child in succ {
            *in_degree.get_mut(child).expect("child has an entry") += 1;
        }
    }
    let mut queue: VecDeque<&NodeId> = in_degree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut order = Vec::with_capacity(children.len());
    while let Some(node) = queue.pop_front() {
        order.push(node.clone());
        for child in &children[node] {
            let d = in_degree.get_mut(child).expect("child has an entry");
            *d -= 1;
            if *d == 0 {
                queue.push_back(child);
            }
        }
    }
    if order.len() == children.len() {
        Ok(order)
    } else {
        let stuck = in_degree
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&n, _)| n.clone())
            .next()
            .expect("a cycle leaves nodes with positive in-degree");
        Err(GraphError::CyclicInput(stuck))
    }
}

fn invert(children: &AdjacencyMap) -> AdjacencyMap {
    let mut parents: AdjacencyMap = children
        .keys()
        .map(|n| (n.clone(), BTreeSet::new()))
        .collect();
    for (parent, succ) in children {
        for child in succ {
            parents
                .entry(child.clone())
                .or_default()
                .insert(parent.clone());
        }
    }
    parents
}

fn restrict(children: &AdjacencyMap, keep: &BTreeSet<NodeId>) -> AdjacencyMap {
    children
        .iter()
        .filter(|(n, _)| keep.contains(*n))
        .map(|(n, succ)| {
            let kept: BTreeSet<NodeId> = succ.intersection(keep).cloned().collect();
            (n.clone(), kept)
        })
        .collect()
}

fn reachable_from(children: &AdjacencyMap, start: &NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    if !children.contains_key(start) {
        return seen;
    }
    seen.insert(start.clone());
    let mut stack = vec![start.clone()];
    while let Some(current) = stack.pop() {
        for child in &children[&current] {
            if seen.insert(child.clone()) {
                stack.push(child.clone());
            }
        }
    }
    seen
}

fn ancestors_of(parents: &AdjacencyMap, node: &NodeId) -> BTreeSet<NodeId> {
    reachable_from(parents, node)
        .into_iter()
        .filter(|n| n != node)
        .collect()
}

/// Nodes from which at least one member of `targets` is reachable
/// (excluding the targets themselves unless they reach another target).
fn nodes_reaching(children: &AdjacencyMap, targets: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let parents = invert(children);
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut stack: Vec<NodeId> = Vec::new();
    for t in targets {
        if parents.contains_key(t) {
            stack.push(t.clone());
        }
    }
    while let Some(current) = stack.pop() {
        for parent in parents.get(&current).into_iter().flatten() {
            if seen.insert(parent.clone()) {
                stack.push(parent.clone());
            }
        }
    }
    seen
}

fn nodes_reaching_entities(
    children: &AdjacencyMap,
    kinds: &BTreeMap<NodeId, NodeKind>,
) -> BTreeSet<NodeId> {
    let entities: BTreeSet<NodeId> = children
        .keys()
        .filter(|n| kinds.get(*n) == Some(&NodeKind::Entity))
        .cloned()
        .collect();
    let mut result = nodes_reaching(children, &entities);
    result.extend(entities);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyStore;

    fn store(snapshot: &str) -> TaxonomyStore {
        TaxonomyStore::parse_snapshot(snapshot.as_bytes(), "test").unwrap()
    }

    fn ids(labels: &[&str]) -> Vec<NodeId> {
        labels.iter().map(NodeId::new).collect()
    }

    fn id_set(labels: &[&str]) -> BTreeSet<NodeId> {
        labels.iter().map(NodeId::new).collect()
    }

    #[test]
    fn deep_chain_collapses_to_direct_class() {
        let snapshot = "SC\tSpecies\tThing\nSC\tEukaryote\tSpecies\nSC\tPerson\tEukaryote\n\
                        SC\tArtist\tPerson\nSC\tMusician\tArtist\nTY\tMusician_X\tMusician\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["Musician_X"])).unwrap();
        assert_eq!(
            dag.export_edges(),
            "Musician\tMusician_X\tentity\nThing\tMusician\tclass\n"
        );
    }

    #[test]
    fn candidate_directly_under_root() {
        let snapshot = "SC\tPerson\tThing\nTY\te\tThing\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["e"])).unwrap();
        assert_eq!(dag.export_edges(), "Thing\te\tentity\n");
        assert_eq!(dag.node_count(), 2);
    }

    #[test]
    fn unknown_candidate_attaches_under_root() {
        let snapshot = "SC\tPerson\tThing\nTY\tknown\tPerson\n";
        let dag =
            CandidateDag::build_subgraph(&store(snapshot), &ids(&["known", "mystery"])).unwrap();
        assert_eq!(dag.leaves(), ids(&["known", "mystery"]));
        assert!(dag
            .successors(&NodeId::root())
            .unwrap()
            .contains(&NodeId::new("mystery")));
    }

    #[test]
    fn empty_candidates_rejected() {
        let snapshot = "SC\tPerson\tThing\n";
        assert!(matches!(
            CandidateDag::build_subgraph(&store(snapshot), &[]),
            Err(GraphError::EmptyCandidates)
        ));
    }

    #[test]
    fn duplicate_candidates_rejected() {
        let snapshot = "SC\tPerson\tThing\nTY\te\tPerson\n";
        assert!(matches!(
            CandidateDag::build_subgraph(&store(snapshot), &ids(&["e", "e"])),
            Err(GraphError::DuplicateCandidate(_))
        ));
    }

    #[test]
    fn entity_as_class_candidate_becomes_leaf() {
        let snapshot = "EC\tGovernor\nSC\tPosition\tThing\nSC\tGovernor\tPosition\n\
                        TY\tGovernor\tPosition\nTY\tGovernorOfCalifornia\tGovernor\n";
        let dag = CandidateDag::build_subgraph(
            &store(snapshot),
            &ids(&["Governor", "GovernorOfCalifornia"]),
        )
        .unwrap();
        let gov = NodeId::new("Governor");
        assert!(dag.successors(&gov).unwrap().is_empty());
        assert_eq!(dag.leaves(), ids(&["Governor", "GovernorOfCalifornia"]));
        // The inner entity's children were re-attached to its predecessors.
        let parents = dag
            .predecessors(&NodeId::new("GovernorOfCalifornia"))
            .unwrap();
        assert!(!parents.contains(&gov));
    }

    #[test]
    fn typing_self_loop_is_dropped() {
        let snapshot = "EC\tX\nSC\tX\tThing\nTY\tX\tX\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["X"])).unwrap();
        assert_eq!(dag.leaves(), ids(&["X"]));
        assert!(!dag
            .successors(&NodeId::new("X"))
            .unwrap()
            .contains(&NodeId::new("X")));
    }

    #[test]
    fn textbook_reduction() {
        let edges = vec![
            (NodeId::new("A"), NodeId::new("B")),
            (NodeId::new("B"), NodeId::new("C")),
            (NodeId::new("A"), NodeId::new("C")),
        ];
        let mut adj: AdjacencyMap = BTreeMap::new();
        for (p, c) in edges {
            adj.entry(c.clone()).or_default();
            adj.entry(p).or_default().insert(c);
        }
        let reduced = transitive_reduction(&adj).unwrap();
        assert!(reduced[&NodeId::new("A")].contains(&NodeId::new("B")));
        assert!(!reduced[&NodeId::new("A")].contains(&NodeId::new("C")));
        assert!(reduced[&NodeId::new("B")].contains(&NodeId::new("C")));
        // Idempotence.
        assert_eq!(transitive_reduction(&reduced).unwrap(), reduced);
    }

    #[test]
    fn reduction_rejects_cycles() {
        let mut adj: AdjacencyMap = BTreeMap::new();
        adj.entry(NodeId::new("A"))
            .or_default()
            .insert(NodeId::new("B"));
        adj.entry(NodeId::new("B"))
            .or_default()
            .insert(NodeId::new("A"));
        assert!(matches!(
            transitive_reduction(&adj),
            Err(GraphError::CyclicInput(_))
        ));
    }

    fn diamond() -> CandidateDag {
        // Thing -> A -> C, Thing -> C, C -> e
        let kinds = BTreeMap::from([
            (NodeId::root(), NodeKind::Class),
            (NodeId::new("A"), NodeKind::Class),
            (NodeId::new("C"), NodeKind::Class),
            (NodeId::new("e"), NodeKind::Entity),
        ]);
        CandidateDag::from_parts(
            NodeId::root(),
            vec![
                (NodeId::root(), NodeId::new("A")),
                (NodeId::new("A"), NodeId::new("C")),
                (NodeId::root(), NodeId::new("C")),
                (NodeId::new("C"), NodeId::new("e")),
            ],
            kinds,
            ids(&["e"]),
        )
        .unwrap()
    }

    #[test]
    fn depth_uses_longest_path() {
        let dag = diamond();
        assert_eq!(dag.depth(&NodeId::root()).unwrap(), 0);
        assert_eq!(dag.depth(&NodeId::new("C")).unwrap(), 2);
        assert_eq!(dag.depth(&NodeId::new("e")).unwrap(), 3);
        assert!(matches!(
            dag.depth(&NodeId::new("missing")),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn lca_of_single_leaf_is_itself() {
        let dag = diamond();
        let (lca, ties) = dag.lca_with_ties(&ids(&["e"])).unwrap();
        assert_eq!(lca, NodeId::new("e"));
        assert!(ties.is_empty());
    }

    #[test]
    fn lca_two_musicians() {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\nSC\tPolitician\tPerson\n\
                        TY\tJustinBieber\tMusician\nTY\tJustinTimberlake\tMusician\n\
                        TY\tJustinTrudeau\tPolitician\n";
        let dag = CandidateDag::build_subgraph(
            &store(snapshot),
            &ids(&["JustinBieber", "JustinTimberlake", "JustinTrudeau"]),
        )
        .unwrap();
        let lca = dag
            .lca(&ids(&["JustinBieber", "JustinTimberlake"]))
            .unwrap();
        assert_eq!(lca, NodeId::new("Musician"));
        let all = dag
            .lca(&ids(&["JustinBieber", "JustinTimberlake", "JustinTrudeau"]))
            .unwrap();
        assert_eq!(all, NodeId::new("Person"));
    }

    #[test]
    fn lca_tie_breaks_lexicographically() {
        // Two equally deep common ancestors B and C of both leaves.
        let kinds = BTreeMap::from([
            (NodeId::root(), NodeKind::Class),
            (NodeId::new("B"), NodeKind::Class),
            (NodeId::new("C"), NodeKind::Class),
            (NodeId::new("x"), NodeKind::Entity),
            (NodeId::new("y"), NodeKind::Entity),
        ]);
        let dag = CandidateDag::from_parts(
            NodeId::root(),
            vec![
                (NodeId::root(), NodeId::new("B")),
                (NodeId::root(), NodeId::new("C")),
                (NodeId::new("B"), NodeId::new("x")),
                (NodeId::new("B"), NodeId::new("y")),
                (NodeId::new("C"), NodeId::new("x")),
                (NodeId::new("C"), NodeId::new("y")),
            ],
            kinds,
            ids(&["x", "y"]),
        )
        .unwrap();
        let (lca, ties) = dag.lca_with_ties(&ids(&["x", "y"])).unwrap();
        assert_eq!(lca, NodeId::new("B"));
        assert_eq!(ties, id_set(&["C"]));
    }

    #[test]
    fn successor_case_classification() {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\nSC\tPolitician\tPerson\n\
                        TY\tJB\tMusician\nTY\tJT\tPolitician\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["JB", "JT"])).unwrap();
        let case = dag.successor_case(&NodeId::new("Person")).unwrap();
        assert_eq!(case.kind, SuccessorCaseKind::AllClasses);
        assert_eq!(case.class_successors, ids(&["Musician", "Politician"]));

        let case = dag.successor_case(&NodeId::new("Musician")).unwrap();
        assert_eq!(case.kind, SuccessorCaseKind::AllEntities);
        assert_eq!(case.entity_successors, ids(&["JB"]));

        assert!(matches!(
            dag.successor_case(&NodeId::new("JB")),
            Err(GraphError::LeafNode(_))
        ));
    }

    #[test]
    fn mixed_successors_order() {
        // Person -> Musician (class), Person -> e2 (entity)
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\n\
                        TY\te1\tMusician\nTY\te2\tPerson\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["e2", "e1"])).unwrap();
        let case = dag.successor_case(&NodeId::new("Person")).unwrap();
        assert_eq!(case.kind, SuccessorCaseKind::Mixed);
        assert_eq!(case.class_successors, ids(&["Musician"]));
        assert_eq!(case.entity_successors, ids(&["e2"]));
    }

    #[test]
    fn prune_removes_childless_classes() {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\nSC\tPolitician\tPerson\n\
                        TY\tJB\tMusician\nTY\tJT\tPolitician\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["JB", "JT"])).unwrap();
        let pruned = dag.prune(&id_set(&["JT"])).unwrap();
        assert!(!pruned.contains(&NodeId::new("Politician")));
        assert_eq!(pruned.leaves(), ids(&["JB"]));
    }

    #[test]
    fn prune_nothing_is_identity() {
        let snapshot = "SC\tPerson\tThing\nTY\te\tPerson\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["e"])).unwrap();
        let same = dag.prune(&BTreeSet::new()).unwrap();
        assert_eq!(dag, same);
    }

    #[test]
    fn prune_root_is_rejected() {
        let snapshot = "SC\tPerson\tThing\nTY\te\tPerson\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["e"])).unwrap();
        assert!(matches!(
            dag.prune(&BTreeSet::from([NodeId::root()])),
            Err(GraphError::PruneRoot)
        ));
    }

    #[test]
    fn prune_all_leaves_is_rejected() {
        let snapshot = "SC\tPerson\tThing\nTY\te\tPerson\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["e"])).unwrap();
        assert!(matches!(
            dag.prune(&id_set(&["e"])),
            Err(GraphError::NoLeavesLeft)
        ));
    }

    #[test]
    fn leaves_preserve_candidate_order() {
        let snapshot = "SC\tPerson\tThing\nSC\tMusician\tPerson\n\
                        TY\tzeta\tMusician\nTY\talpha\tMusician\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["zeta", "alpha"])).unwrap();
        assert_eq!(dag.leaves(), ids(&["zeta", "alpha"]));
    }

    #[test]
    fn barcelona_style_multi_typing_keeps_both_branches() {
        let snapshot = "SC\tPlace\tThing\nSC\tCity\tPlace\nSC\tOrganization\tThing\n\
                        SC\tSportsClub\tOrganization\nTY\tBarcelona\tCity\nTY\tBarcelona\tSportsClub\n";
        let dag = CandidateDag::build_subgraph(&store(snapshot), &ids(&["Barcelona"])).unwrap();
        let parents = dag.predecessors(&NodeId::new("Barcelona")).unwrap();
        assert_eq!(parents.len(), 2);
        assert_eq!(dag.leaves(), ids(&["Barcelona"]));
    }
}
