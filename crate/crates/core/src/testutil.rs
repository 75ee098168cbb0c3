//! Shared graph constructors for unit tests.

use crate::graph::{Edge, Graph};

/// Feed-forward edges of the nine-node layered test graph: node 1 fans out
/// through intermediate layers and everything drains into node 9.
pub(crate) fn base_nine_node_edges() -> Vec<Edge> {
    [
        (1, 2),
        (1, 3),
        (1, 4),
        (2, 3),
        (2, 5),
        (2, 7),
        (3, 8),
        (4, 8),
        (5, 6),
        (5, 7),
        (6, 9),
        (7, 9),
        (8, 9),
    ]
    .iter()
    .map(|&(a, b)| Edge::new(a, b))
    .collect()
}

/// Nine-node test graph with a self-loop on every node and a closing edge
/// from node 9 back to node 1: strongly connected and aperiodic.
pub(crate) fn nine_node_closed() -> Graph {
    let mut edges = base_nine_node_edges();
    for i in 1..=9 {
        edges.push(Edge::new(i, i));
    }
    edges.push(Edge::new(9, 1));
    Graph::new(9, &edges).unwrap()
}

/// Complete directed graph on `n` nodes including all self-loops.
pub(crate) fn complete_with_loops(n: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            edges.push(Edge::new(i, j));
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// Directed cycle 1 -> 2 -> ... -> n -> 1.
pub(crate) fn cycle(n: usize) -> Graph {
    let edges: Vec<Edge> = (1..=n)
        .map(|i| Edge::new(i, if i == n { 1 } else { i + 1 }))
        .collect();
    Graph::new(n, &edges).unwrap()
}
