//! Undirected tree topologies and their oriented incidence matrices.
//!
//! Nodes are 0-based inside the library. Edges are stored canonically as
//! `(i, j)` with `i < j`, sorted lexicographically, and oriented so that the
//! incidence row of edge `(i, j)` carries `+1` at column `i` and `-1` at
//! column `j`. With that orientation the edge error of `(i, j)` reads
//! `x_i - x_j - d_ij`.

use nalgebra::DMatrix;
use thiserror::Error;

/// Relative singular-value cutoff used by [`Graph::incidence_rank`].
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must have at least one agent")]
    Empty,
    #[error("invalid edge ({0}, {1}): {2}")]
    InvalidEdge(usize, usize, &'static str),
    #[error("graph is not a tree: {0}")]
    NotATree(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
    adjacency: DMatrix<u8>,
    incidence: DMatrix<i8>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a tree graph from 0-based node pairs in any order or orientation.
    pub fn new(n_agents: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(a, b) in edge_list {
            if a >= n_agents || b >= n_agents {
                return Err(GraphError::InvalidEdge(a, b, "node index out of range"));
            }
            if a == b {
                return Err(GraphError::InvalidEdge(a, b, "self-loop"));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::InvalidEdge(w[0].0, w[0].1, "duplicate edge"));
        }
        if edges.len() + 1 != n_agents {
            return Err(GraphError::NotATree(if edges.len() + 1 > n_agents {
                "contains a cycle"
            } else {
                "disconnected"
            }));
        }
        if !connected(n_agents, &edges) {
            return Err(GraphError::NotATree("disconnected"));
        }

        let mut adjacency = DMatrix::zeros(n_agents, n_agents);
        let mut incidence = DMatrix::zeros(edges.len(), n_agents);
        let mut neighbors = vec![Vec::new(); n_agents];
        for (k, &(i, j)) in edges.iter().enumerate() {
            adjacency[(i, j)] = 1;
            adjacency[(j, i)] = 1;
            incidence[(k, i)] = 1;
            incidence[(k, j)] = -1;
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            n_agents,
            edges,
            adjacency,
            incidence,
            neighbors,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edges `l_1..l_{N_E}` as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &DMatrix<u8> {
        &self.adjacency
    }

    pub fn incidence(&self) -> &DMatrix<i8> {
        &self.incidence
    }

    pub fn incidence_f64(&self) -> DMatrix<f64> {
        self.incidence.map(f64::from)
    }

    /// Sorted neighbour list of `agent`.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.neighbors[agent].len()
    }

    /// Label of the edge joining `a` and `b`, if any.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// Numerical rank of the incidence matrix from its singular values.
    pub fn incidence_rank(&self) -> usize {
        if self.edges.is_empty() {
            return 0;
        }
        let sv = self.incidence_f64().singular_values();
        let max = sv.iter().copied().fold(0.0_f64, f64::max);
        if max == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
    }
}

/// True iff the (0-based) edge list forms a spanning tree on `n_agents` nodes.
///
/// Malformed lists (self-loops, out-of-range nodes, duplicates) are not trees.
pub fn is_tree(n_agents: usize, edge_list: &[(usize, usize)]) -> bool {
    Graph::new(n_agents, edge_list).is_ok()
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut components = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

/// Decodes a Prüfer sequence (entries in `0..n`, length `n - 2`) into the
/// edge list of the corresponding labelled tree on `n` nodes.
pub fn prufer_to_edges(n: usize, sequence: &[usize]) -> Vec<(usize, usize)> {
    assert!(n >= 2 && sequence.len() + 2 == n, "Prüfer sequence must have length n - 2");
    let mut degree = vec![1usize; n];
    for &v in sequence {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in sequence {
        let leaf = (0..n).find(|&u| degree[u] == 1).expect("a leaf always exists");
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_robot_path() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let b = g.incidence();
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![1, -1, 0]);
        assert_eq!(b.row(1).iter().copied().collect::<Vec<_>>(), vec![0, 1, -1]);
        assert_eq!(g.degree(1), 2);
        assert_eq!(g.incidence_rank(), 2);
        let a = g.adjacency();
        assert_eq!(a, &DMatrix::from_row_slice(3, 3, &[0, 1, 0, 1, 0, 1, 0, 1, 0]));
    }

    #[test]
    fn single_edge() {
        let g = Graph::new(2, &[(1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.incidence(), &DMatrix::from_row_slice(1, 2, &[1, -1]));
        assert_eq!(g.adjacency(), &DMatrix::from_row_slice(2, 2, &[0, 1, 1, 0]));
        assert_eq!(g.incidence_rank(), 1);
    }

    #[test]
    fn triangle_rejected() {
        assert!(matches!(
            Graph::new(3, &[(0, 1), (1, 2), (0, 2)]),
            Err(GraphError::NotATree(_))
        ));
    }

    #[test]
    fn invalid_edges() {
        assert!(matches!(Graph::new(3, &[(0, 0), (1, 2)]), Err(GraphError::InvalidEdge(..))));
        assert!(matches!(Graph::new(3, &[(0, 3), (1, 2)]), Err(GraphError::InvalidEdge(..))));
        assert!(matches!(
            Graph::new(3, &[(0, 1), (1, 0)]),
            Err(GraphError::InvalidEdge(_, _, "duplicate edge"))
        ));
        assert_eq!(Graph::new(0, &[]), Err(GraphError::Empty));
    }

    #[test]
    fn tree_predicate() {
        assert!(is_tree(3, &[(0, 1), (1, 2)]));
        assert!(!is_tree(4, &[(0, 1), (2, 3)]));
        assert!(is_tree(1, &[]));
        // right edge count but disconnected with a cycle
        assert!(!is_tree(4, &[(0, 1), (1, 2), (0, 2)]));
    }

    #[test]
    fn edges_sorted_lexicographically() {
        let g = Graph::new(4, &[(3, 1), (0, 2), (1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 3)]);
        assert_eq!(g.edge_index(3, 1), Some(2));
        assert_eq!(g.edge_index(2, 3), None);
    }

    #[test]
    fn prufer_decoding() {
        // star centred at 0
        let mut e: Vec<_> = prufer_to_edges(4, &[0, 0]).into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        e.sort_unstable();
        assert_eq!(e, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(prufer_to_edges(2, &[]), vec![(0, 1)]);
    }
}
