//! Chain decomposition of the precedence order.
//!
//! A chain is a set of pairwise comparable tasks; a decomposition partitions
//! every task into chains. At any instant a scheduler only has to look at the
//! least unfinished element of each chain: a task whose dependencies are all
//! done is necessarily the head of its chain, because every earlier member
//! of its chain is one of its predecessors.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::taskgraph::{CompletedSet, TaskGraph, TaskId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("task {task} is not the least element of its chain")]
    NotLeastElement { task: TaskId },
    #[error("task {task} appears in more than one chain position")]
    Duplicate { task: TaskId },
    #[error("task {task} is not covered by any chain")]
    Uncovered { task: TaskId },
    #[error("task {task} out of range")]
    UnknownTask { task: TaskId },
    #[error("tasks {first} and {second} are adjacent in a chain but not ordered")]
    Unordered { first: TaskId, second: TaskId },
}

/// Partition of the tasks into chains ordered consistently with precedence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainDecomposition {
    chains: Vec<Vec<TaskId>>,
    /// task -> (chain, position in chain)
    position: Vec<(usize, usize)>,
}

impl ChainDecomposition {
    /// Validates an explicit decomposition against `graph`.
    pub fn new(graph: &TaskGraph, chains: Vec<Vec<TaskId>>) -> Result<Self, ChainError> {
        let n = graph.len();
        let mut position = vec![None; n];
        for (c, chain) in chains.iter().enumerate() {
            for (i, &t) in chain.iter().enumerate() {
                let slot = position.get_mut(t).ok_or(ChainError::UnknownTask { task: t })?;
                if slot.replace((c, i)).is_some() {
                    return Err(ChainError::Duplicate { task: t });
                }
            }
        }
        let position = position
            .into_iter()
            .enumerate()
            .map(|(t, p)| p.ok_or(ChainError::Uncovered { task: t }))
            .collect::<Result<Vec<_>, _>>()?;
        let reach = Reachability::new(graph);
        for chain in &chains {
            for pair in chain.windows(2) {
                if !reach.precedes(pair[0], pair[1]) {
                    return Err(ChainError::Unordered {
                        first: pair[0],
                        second: pair[1],
                    });
                }
            }
        }
        Ok(Self { chains, position })
    }

    /// One chain per task, in id order. Dispatching from this decomposition
    /// amounts to per-task readiness enumeration.
    pub fn singletons(graph: &TaskGraph) -> Self {
        Self {
            chains: (0..graph.len()).map(|t| vec![t]).collect(),
            position: (0..graph.len()).map(|t| (t, 0)).collect(),
        }
    }

    pub fn chains(&self) -> &[Vec<TaskId>] {
        &self.chains
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn chain(&self, index: usize) -> &[TaskId] {
        &self.chains[index]
    }

    /// `(chain index, position within chain)` of `task`.
    pub fn position(&self, task: TaskId) -> (usize, usize) {
        self.position[task]
    }

    pub fn cursor(&self) -> ChainCursor<'_> {
        ChainCursor {
            chains: self,
            index: vec![0; self.chains.len()],
        }
    }
}

/// Computes a chain cover with the fewest-predecessors heuristic.
///
/// Tasks are visited in topological order. Each chain starts at the first
/// unplaced task and is extended one successor at a time: placing a task
/// decrements the predecessor count of all its successors, and the chain
/// continues with the unplaced successor of smallest remaining count (ties
/// to the smallest id). Runs in `O(V^2)`.
pub fn chain_cover(graph: &TaskGraph) -> ChainDecomposition {
    let n = graph.len();
    let mut pred_count: Vec<usize> = graph.tasks().iter().map(|t| t.predecessors.len()).collect();
    let mut placed = vec![false; n];
    let mut chains = Vec::new();
    let mut position = vec![(0, 0); n];

    for &start in graph.topological_order() {
        if placed[start] {
            continue;
        }
        let c = chains.len();
        let mut chain = Vec::new();
        let mut node = Some(start);
        while let Some(t) = node {
            placed[t] = true;
            position[t] = (c, chain.len());
            chain.push(t);
            for &s in graph.successors(t) {
                pred_count[s] -= 1;
            }
            node = graph
                .successors(t)
                .iter()
                .copied()
                .filter(|&s| !placed[s])
                .min_by_key(|&s| (pred_count[s], s));
        }
        chains.push(chain);
    }
    ChainDecomposition { chains, position }
}

/// Per-chain progress: `index[i]` is the position of the next unfinished
/// element of chain `i`; `index[i] == len` means the chain is exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainCursor<'a> {
    chains: &'a ChainDecomposition,
    index: Vec<usize>,
}

impl<'a> ChainCursor<'a> {
    pub fn decomposition(&self) -> &'a ChainDecomposition {
        self.chains
    }

    pub fn indices(&self) -> &[usize] {
        &self.index
    }

    /// Current least element of chain `c`, if any.
    pub fn head(&self, c: usize) -> Option<TaskId> {
        self.chains.chains[c].get(self.index[c]).copied()
    }

    pub fn least_elements(&self) -> BTreeSet<TaskId> {
        (0..self.index.len()).filter_map(|c| self.head(c)).collect()
    }

    pub fn is_exhausted(&self) -> bool {
        (0..self.index.len()).all(|c| self.head(c).is_none())
    }

    pub fn advance(&self, task: TaskId) -> Result<Self, ChainError> {
        let mut next = self.clone();
        next.advance_in_place(task)?;
        Ok(next)
    }

    pub(crate) fn advance_in_place(&mut self, task: TaskId) -> Result<(), ChainError> {
        let (c, _) = *self.chains.position.get(task).ok_or(ChainError::UnknownTask { task })?;
        if self.head(c) != Some(task) {
            return Err(ChainError::NotLeastElement { task });
        }
        self.index[c] += 1;
        Ok(())
    }
}

/// Every task before the cursor position of its chain is complete.
impl CompletedSet for ChainCursor<'_> {
    fn is_completed(&self, task: TaskId) -> bool {
        let (c, i) = self.chains.position[task];
        i < self.index[c]
    }
}

/// Transitive closure as dense bit rows; `O(V^2 / 64)` memory.
pub(crate) struct Reachability {
    words: usize,
    bits: Vec<u64>,
}

impl Reachability {
    pub(crate) fn new(graph: &TaskGraph) -> Self {
        let n = graph.len();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        // Descendants, filled in reverse topological order.
        for &t in graph.topological_order().iter().rev() {
            for &s in graph.successors(t) {
                bits[t * words + s / 64] |= 1 << (s % 64);
                for w in 0..words {
                    let v = bits[s * words + w];
                    bits[t * words + w] |= v;
                }
            }
        }
        Self { words, bits }
    }

    /// `a` strictly precedes `b`.
    pub(crate) fn precedes(&self, a: TaskId, b: TaskId) -> bool {
        self.bits[a * self.words + b / 64] & (1 << (b % 64)) != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::tests::example_graph;

    #[test]
    fn example_cover_matches_expected_partition() {
        let d = chain_cover(&example_graph());
        assert_eq!(d.chains(), &[vec![0, 1, 3], vec![2, 4, 6], vec![5]]);
    }

    #[test]
    fn trivial_covers() {
        let single = TaskGraph::new(vec![3], &[]).unwrap();
        assert_eq!(chain_cover(&single).chains(), &[vec![0]]);
        let independent = TaskGraph::new(vec![1; 5], &[]).unwrap();
        assert_eq!(chain_cover(&independent).len(), 5);
    }

    #[test]
    fn least_elements_follow_the_cursor() {
        let d = chain_cover(&example_graph());
        let cursor = d.cursor();
        assert_eq!(cursor.least_elements(), [0, 2, 5].into());
        let after = cursor.advance(0).unwrap();
        assert_eq!(after.indices(), &[1, 0, 0]);
        assert_eq!(after.least_elements(), [1, 2, 5].into());
        assert_eq!(cursor.advance(3), Err(ChainError::NotLeastElement { task: 3 }));
        let no_p6 = cursor.advance(5).unwrap();
        assert_eq!(no_p6.least_elements(), [0, 2].into());
    }

    #[test]
    fn exhausted_cursor_has_no_least_elements() {
        let d = chain_cover(&example_graph());
        let mut cursor = d.cursor();
        for t in [0, 1, 3, 2, 4, 6, 5] {
            cursor = cursor.advance(t).unwrap();
        }
        assert!(cursor.least_elements().is_empty());
        assert!(cursor.is_exhausted());
    }

    #[test]
    fn validates_explicit_decompositions() {
        let g = example_graph();
        assert!(ChainDecomposition::new(&g, vec![vec![0, 1, 3], vec![2, 4, 6], vec![5]]).is_ok());
        // P1 < P7 through P3, so the chain is fine even without a direct edge.
        assert!(ChainDecomposition::new(&g, vec![vec![0, 6], vec![1], vec![2], vec![3], vec![4], vec![5]]).is_ok());
        assert_eq!(
            ChainDecomposition::new(&g, vec![vec![1, 2], vec![0], vec![3], vec![4], vec![5], vec![6]]),
            Err(ChainError::Unordered { first: 1, second: 2 })
        );
        assert_eq!(
            ChainDecomposition::new(&g, vec![vec![0, 1, 3], vec![2, 4, 6]]),
            Err(ChainError::Uncovered { task: 5 })
        );
    }

    #[test]
    fn cover_is_at_least_a_witnessed_antichain() {
        // {P2, P5, P6} are pairwise incomparable.
        let g = example_graph();
        let reach = Reachability::new(&g);
        let antichain = [1, 4, 5];
        for &a in &antichain {
            for &b in &antichain {
                assert!(!reach.precedes(a, b));
            }
        }
        assert!(chain_cover(&g).len() >= antichain.len());
    }
}
