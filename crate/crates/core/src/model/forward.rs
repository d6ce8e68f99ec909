use serde::{Deserialize, Serialize};

use super::params::{axpy, dot, GagModel, LayerWeights};
use crate::error::{Error, Result};
use crate::session_graph::SessionGraph;

/// Scores and softmax probabilities over the whole catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

impl PredictionDistribution {
    /// Max-subtracted softmax of `scores`.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = scores.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        PredictionDistribution { scores, probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Per-edge messages in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMessage {
    pub incoming: Vec<f64>,
    pub outgoing: Vec<f64>,
}

/// Node aggregates and updated node features.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeUpdate {
    pub v_in: Vec<Vec<f64>>,
    pub v_out: Vec<Vec<f64>>,
    pub updated: Vec<Vec<f64>>,
}

/// Attention weights, session readout and the new global attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalUpdate {
    pub alpha: Vec<f64>,
    pub readout: Vec<f64>,
    pub global: Vec<f64>,
}

/// Everything one layer computed, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub node_inputs: Vec<Vec<f64>>,
    pub global_input: Vec<f64>,
    pub messages: Vec<EdgeMessage>,
    pub nodes: NodeUpdate,
    pub global: GlobalUpdate,
}

/// A forward pass together with the activations needed to differentiate it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub graph: SessionGraph,
    pub layers: Vec<LayerActivations>,
    pub prediction: PredictionDistribution,
    pub(crate) version: u64,
}

impl ForwardTrace {
    pub fn final_global(&self) -> &[f64] {
        &self
            .layers
            .last()
            .expect("at least one layer")
            .global
            .global
    }
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn check_dims(node_feats: &[Vec<f64>], graph: &SessionGraph, u: &[f64], d: usize) -> Result<()> {
    if node_feats.len() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} node features for {} nodes",
            node_feats.len(),
            graph.num_nodes()
        )));
    }
    if u.len() != d || node_feats.iter().any(|f| f.len() != d) {
        return Err(Error::Shape(format!(
            "feature vectors must have length {d}"
        )));
    }
    Ok(())
}

/// Edge messages `w_k * MLP([x_sender ; u])` for both directions, with
/// separate maps per direction.
pub fn edge_messages(
    graph: &SessionGraph,
    node_feats: &[Vec<f64>],
    u: &[f64],
    layer: &LayerWeights,
    edge_out_uses_receiver: bool,
) -> Result<Vec<EdgeMessage>> {
    let d = layer.node.out_dim();
    check_dims(node_feats, graph, u, d)?;
    Ok(graph
        .edges
        .iter()
        .map(|edge| {
            let w = f64::from(edge.weight);
            let sender_input = concat(&[&node_feats[edge.sender], u]);
            let mut incoming = layer.edge_in.apply(&sender_input);
            let mut outgoing = if edge_out_uses_receiver {
                layer
                    .edge_out
                    .apply(&concat(&[&node_feats[edge.receiver], u]))
            } else {
                layer.edge_out.apply(&sender_input)
            };
            incoming.iter_mut().for_each(|x| *x *= w);
            outgoing.iter_mut().for_each(|x| *x *= w);
            EdgeMessage { incoming, outgoing }
        })
        .collect())
}

/// Degree-normalised aggregation of edge messages followed by the node map.
pub fn aggregate_nodes(
    graph: &SessionGraph,
    messages: &[EdgeMessage],
    layer: &LayerWeights,
) -> Result<NodeUpdate> {
    if messages.len() != graph.edges.len() {
        return Err(Error::Shape(format!(
            "{} messages for {} edges",
            messages.len(),
            graph.edges.len()
        )));
    }
    let d = layer.node.out_dim();
    let n = graph.num_nodes();
    let mut v_in = vec![vec![0.0; d]; n];
    let mut v_out = vec![vec![0.0; d]; n];
    for (edge, msg) in graph.edges.iter().zip(messages) {
        let norm = graph.edge_norm(edge);
        axpy(1.0 / norm, &msg.outgoing, &mut v_in[edge.receiver]);
        axpy(1.0 / norm, &msg.incoming, &mut v_out[edge.sender]);
    }
    let updated = v_in
        .iter()
        .zip(&v_out)
        .map(|(a, b)| layer.node.apply(&concat(&[a, b])))
        .collect();
    Ok(NodeUpdate {
        v_in,
        v_out,
        updated,
    })
}

/// Attention readout anchored on the last node, plus the residual to `u`.
/// Attention weights are used as produced, without normalisation.
pub fn global_update(
    node_feats: &[Vec<f64>],
    last_node: usize,
    u: &[f64],
    layer: &LayerWeights,
) -> Result<GlobalUpdate> {
    if node_feats.is_empty() {
        return Err(Error::Contract(
            "global update needs at least one node".into(),
        ));
    }
    if last_node >= node_feats.len() {
        return Err(Error::Shape(format!("last node {last_node} out of range")));
    }
    let d = u.len();
    let last = &node_feats[last_node];
    let alpha: Vec<f64> = node_feats
        .iter()
        .map(|v| layer.att.apply(&concat(&[last, v, u]))[0])
        .collect();
    let mut readout = vec![0.0; d];
    for (a, v) in alpha.iter().zip(node_feats) {
        axpy(*a, v, &mut readout);
    }
    let global = readout.iter().zip(u).map(|(s, x)| s + x).collect();
    Ok(GlobalUpdate {
        alpha,
        readout,
        global,
    })
}

impl GagModel {
    /// Runs every GAG layer on `graph` and scores the full catalog.
    pub fn forward(&self, graph: &SessionGraph) -> Result<ForwardTrace> {
        let m = self.num_items();
        if graph.user_id >= self.num_users() {
            return Err(Error::CatalogViolation {
                kind: "user",
                id: graph.user_id,
                size: self.num_users(),
            });
        }
        if let Some(&bad) = graph.nodes.iter().find(|&&i| i >= m) {
            return Err(Error::CatalogViolation {
                kind: "item",
                id: bad,
                size: m,
            });
        }
        let w = &self.weights;
        let mut node_feats: Vec<Vec<f64>> = graph
            .nodes
            .iter()
            .map(|&i| w.items.row(i).to_vec())
            .collect();
        let mut u = w.users.row(graph.user_id).to_vec();
        let mut layers = Vec::with_capacity(w.layers.len());
        for layer in &w.layers {
            let messages = edge_messages(
                graph,
                &node_feats,
                &u,
                layer,
                self.config.edge_out_uses_receiver,
            )?;
            let nodes = aggregate_nodes(graph, &messages, layer)?;
            let global = global_update(&nodes.updated, graph.last_node, &u, layer)?;
            let next_feats = nodes.updated.clone();
            let next_u = global.global.clone();
            layers.push(LayerActivations {
                node_inputs: std::mem::replace(&mut node_feats, next_feats),
                global_input: std::mem::replace(&mut u, next_u),
                messages,
                nodes,
                global,
            });
        }
        let scores: Vec<f64> = (0..m).map(|j| dot(&u, w.items.row(j))).collect();
        let prediction = PredictionDistribution::from_scores(scores);
        if !prediction.probs.iter().all(|p| p.is_finite()) {
            return Err(Error::Numeric("non-finite prediction".into()));
        }
        Ok(ForwardTrace {
            graph: graph.clone(),
            layers,
            prediction,
            version: self.version,
        })
    }

    /// Convenience wrapper: prediction for a click prefix of `user`.
    pub fn predict(&self, user: usize, items: &[usize]) -> Result<PredictionDistribution> {
        let graph = SessionGraph::from_items(user, items, self.num_items())?;
        Ok(self.forward(&graph)?.prediction)
    }
}
