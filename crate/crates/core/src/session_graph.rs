//! Conversion of a click sequence into a weighted directed session graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which portion of the stream a session belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChunkTag {
    Train,
    Test(usize),
}

/// One user's time-ordered clicks, the unit of arrival in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: usize,
    pub items: Vec<usize>,
    /// Position in the global stream.
    pub arrival_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_tag: Option<ChunkTag>,
    /// Unix timestamp of the last click; 0 when unknown.
    #[serde(default)]
    pub end_time: i64,
}

impl Session {
    pub fn new(user_id: usize, items: Vec<usize>, arrival_index: u64) -> Self {
        Session {
            user_id,
            items,
            arrival_index,
            chunk_tag: None,
            end_time: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub sender: usize,
    pub receiver: usize,
    pub weight: u32,
}

/// Weighted directed graph over the unique items of a session.
///
/// Nodes are kept in first-occurrence order. Edge weights count how many
/// times a transition occurs; degrees are weighted (sums of incident edge
/// weights) and a self-loop contributes to both degrees of its node.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionGraph {
    pub user_id: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
    pub last_node: usize,
    pub in_degree: Vec<u32>,
    pub out_degree: Vec<u32>,
}

impl SessionGraph {
    /// Builds a graph from a raw click list. `catalog_size` bounds valid item ids.
    pub fn from_items(user_id: usize, items: &[usize], catalog_size: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Contract(
                "session must contain at least one item".into(),
            ));
        }
        if let Some(&bad) = items.iter().find(|&&i| i >= catalog_size) {
            return Err(Error::CatalogViolation {
                kind: "item",
                id: bad,
                size: catalog_size,
            });
        }

        let mut nodes: Vec<usize> = Vec::new();
        let mut index_of = std::collections::HashMap::with_capacity(items.len());
        let node_indices: Vec<usize> = items
            .iter()
            .map(|&item| {
                *index_of.entry(item).or_insert_with(|| {
                    nodes.push(item);
                    nodes.len() - 1
                })
            })
            .collect();

        let mut edges: Vec<Edge> = Vec::new();
        for pair in node_indices.windows(2) {
            let (sender, receiver) = (pair[0], pair[1]);
            match edges
                .iter_mut()
                .find(|e| e.sender == sender && e.receiver == receiver)
            {
                Some(edge) => edge.weight += 1,
                None => edges.push(Edge {
                    sender,
                    receiver,
                    weight: 1,
                }),
            }
        }

        let (in_degree, out_degree) = degrees(nodes.len(), &edges);
        Ok(SessionGraph {
            user_id,
            last_node: *node_indices.last().expect("non-empty"),
            nodes,
            edges,
            in_degree,
            out_degree,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// The shared degree normaliser of an edge, `sqrt(N_in(receiver) * N_out(sender))`.
    ///
    /// The incoming aggregate of the receiver and the outgoing aggregate of
    /// the sender divide by the same quantity.
    pub fn edge_norm(&self, edge: &Edge) -> f64 {
        (f64::from(self.in_degree[edge.receiver]) * f64::from(self.out_degree[edge.sender])).sqrt()
    }
}

/// Builds the session graph of `session`.
pub fn build_session_graph(session: &Session, catalog_size: usize) -> Result<SessionGraph> {
    SessionGraph::from_items(session.user_id, &session.items, catalog_size)
}

/// Weighted in/out degrees per node.
pub fn node_degrees(graph: &SessionGraph) -> (Vec<u32>, Vec<u32>) {
    degrees(graph.num_nodes(), &graph.edges)
}

fn degrees(num_nodes: usize, edges: &[Edge]) -> (Vec<u32>, Vec<u32>) {
    let mut in_degree = vec![0; num_nodes];
    let mut out_degree = vec![0; num_nodes];
    for edge in edges {
        in_degree[edge.receiver] += edge.weight;
        out_degree[edge.sender] += edge.weight;
    }
    (in_degree, out_degree)
}
