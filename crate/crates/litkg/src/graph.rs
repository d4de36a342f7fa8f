//! The knowledge-graph store: deduplicated typed nodes, evidence-bearing
//! typed edges, statistics, and three file formats.
//!
//! Node identity is the pair (lowercased canonical name, node type) — no
//! fuzzy matching. Edge identity is (head, edge type, tail); duplicate
//! candidates merge by concatenating evidence and keeping the maximum
//! confidence. GraphML and JSONL are full-fidelity formats; the TSV edge
//! list keeps only node keys, edge types, and confidences (evidence is
//! synthesized on import), which is enough for diffing and spreadsheet
//! work. Exports are deterministic byte-for-byte given the same graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{CandidateTriple, EdgeType, Evidence, NodeType};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("node surface is empty")]
    EmptySurface,
    #[error("edge endpoint {key:?} is not in the graph")]
    DanglingEndpoint { key: String },
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("unknown graph format {0:?} (expected graphml, jsonl, or tsv)")]
    UnknownFormat(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Default edge acceptance threshold.
pub const DEFAULT_TAU: f64 = 0.5;

/// A deduplicated typed entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
    pub provenance: BTreeSet<String>,
}

/// A typed, evidence-bearing edge between node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub head: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    pub tail: String,
    pub confidence: f64,
    pub evidence: Vec<Evidence>,
}

/// The four-field statistics record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub node_type_count: usize,
    pub edge_count: usize,
    pub edge_type_count: usize,
}

/// Graph file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Graphml,
    Jsonl,
    Tsv,
}

impl FromStr for GraphFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<GraphFormat, GraphError> {
        match s {
            "graphml" => Ok(GraphFormat::Graphml),
            "jsonl" => Ok(GraphFormat::Jsonl),
            "tsv" => Ok(GraphFormat::Tsv),
            other => Err(GraphError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for GraphFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphFormat::Graphml => "graphml",
            GraphFormat::Jsonl => "jsonl",
            GraphFormat::Tsv => "tsv",
        })
    }
}

/// Single-writer in-memory graph with deterministic iteration order
/// (insertion order for nodes and edges).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// (lowercased name or alias, type) → node index.
    name_index: BTreeMap<(String, NodeType), usize>,
    /// node id → node index.
    id_index: BTreeMap<String, usize>,
    /// (head idx, edge ordinal, tail idx) → edge index.
    edge_index: BTreeMap<(usize, usize, usize), usize>,
}

impl KnowledgeGraph {
    pub fn new() -> KnowledgeGraph {
        KnowledgeGraph::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_by_id(&self, id: &str) -> Option<&Node> {
        self.id_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_by_key(&self, name: &str, node_type: NodeType) -> Option<&Node> {
        self.name_index.get(&(name.to_lowercase(), node_type)).map(|&i| &self.nodes[i])
    }

    /// Inserts or merges a node. Identity is (lowercased surface, type);
    /// a surface matching an existing node's canonical name or any alias
    /// merges into it, unioning aliases and provenance.
    pub fn upsert_node(
        &mut self,
        surface: &str,
        node_type: NodeType,
        doc_id: &str,
    ) -> Result<String, GraphError> {
        let trimmed = surface.trim();
        if trimmed.is_empty() {
            return Err(GraphError::EmptySurface);
        }
        let key = (trimmed.to_lowercase(), node_type);
        if let Some(&idx) = self.name_index.get(&key) {
            let node = &mut self.nodes[idx];
            node.aliases.insert(trimmed.to_string());
            if !doc_id.is_empty() {
                node.provenance.insert(doc_id.to_string());
            }
            return Ok(node.id.clone());
        }
        let id = format!("n{}", self.nodes.len());
        let mut aliases = BTreeSet::new();
        aliases.insert(trimmed.to_string());
        let mut provenance = BTreeSet::new();
        if !doc_id.is_empty() {
            provenance.insert(doc_id.to_string());
        }
        let node =
            Node { id: id.clone(), node_type, canonical_name: key.0.clone(), aliases, provenance };
        let idx = self.nodes.len();
        self.nodes.push(node);
        self.name_index.insert(key, idx);
        self.id_index.insert(id.clone(), idx);
        Ok(id)
    }

    fn insert_node_record(&mut self, node: Node, line: usize) -> Result<(), GraphError> {
        if node.canonical_name.is_empty() {
            return Err(GraphError::Parse {
                line,
                reason: "node with empty canonical_name".to_string(),
            });
        }
        if self.id_index.contains_key(&node.id) {
            return Err(GraphError::Parse {
                line,
                reason: format!("duplicate node id {:?}", node.id),
            });
        }
        let key = (node.canonical_name.to_lowercase(), node.node_type);
        if self.name_index.contains_key(&key) {
            return Err(GraphError::Parse {
                line,
                reason: format!("duplicate node key ({}, {})", key.0, node.node_type),
            });
        }
        let idx = self.nodes.len();
        self.name_index.insert(key, idx);
        for alias in &node.aliases {
            self.name_index.entry((alias.to_lowercase(), node.node_type)).or_insert(idx);
        }
        self.id_index.insert(node.id.clone(), idx);
        self.nodes.push(node);
        Ok(())
    }

    fn insert_edge_record(&mut self, edge: Edge, line: usize) -> Result<(), GraphError> {
        let head_idx = *self
            .id_index
            .get(&edge.head)
            .ok_or(GraphError::DanglingEndpoint { key: edge.head.clone() })?;
        let tail_idx = *self
            .id_index
            .get(&edge.tail)
            .ok_or(GraphError::DanglingEndpoint { key: edge.tail.clone() })?;
        if !(0.0..=1.0).contains(&edge.confidence) {
            return Err(GraphError::BadConfidence(edge.confidence));
        }
        if edge.evidence.is_empty() {
            return Err(GraphError::Parse { line, reason: "edge with empty evidence".to_string() });
        }
        let identity = (head_idx, edge.edge_type.ordinal(), tail_idx);
        if let Some(&eidx) = self.edge_index.get(&identity) {
            let existing = &mut self.edges[eidx];
            existing.evidence.extend(edge.evidence);
            existing.confidence = existing.confidence.max(edge.confidence);
            return Ok(());
        }
        self.edge_index.insert(identity, self.edges.len());
        self.edges.push(edge);
        Ok(())
    }

    /// Adds a candidate triple as an edge. Returns whether it was
    /// accepted: candidates below `tau` are rejected; duplicates merge
    /// evidence and keep the maximum confidence. Both endpoints must have
    /// been upserted already.
    pub fn add_edge(&mut self, triple: &CandidateTriple, tau: f64) -> Result<bool, GraphError> {
        if !(0.0..=1.0).contains(&triple.confidence) {
            return Err(GraphError::BadConfidence(triple.confidence));
        }
        let head_key = (triple.head.canonical_key(), triple.head.node_type);
        let tail_key = (triple.tail.canonical_key(), triple.tail.node_type);
        let head_idx = *self.name_index.get(&head_key).ok_or(GraphError::DanglingEndpoint {
            key: format!("{}:{}", head_key.1, head_key.0),
        })?;
        let tail_idx = *self.name_index.get(&tail_key).ok_or(GraphError::DanglingEndpoint {
            key: format!("{}:{}", tail_key.1, tail_key.0),
        })?;
        if triple.confidence < tau {
            return Ok(false);
        }
        let identity = (head_idx, triple.edge.ordinal(), tail_idx);
        if let Some(&eidx) = self.edge_index.get(&identity) {
            let existing = &mut self.edges[eidx];
            existing.evidence.push(triple.evidence.clone());
            existing.confidence = existing.confidence.max(triple.confidence);
            return Ok(true);
        }
        let edge = Edge {
            head: self.nodes[head_idx].id.clone(),
            edge_type: triple.edge,
            tail: self.nodes[tail_idx].id.clone(),
            confidence: triple.confidence,
            evidence: vec![triple.evidence.clone()],
        };
        self.edge_index.insert(identity, self.edges.len());
        self.edges.push(edge);
        Ok(true)
    }

    /// Recomputed counts.
    pub fn stats(&self) -> GraphStats {
        let node_types: BTreeSet<NodeType> = self.nodes.iter().map(|n| n.node_type).collect();
        let edge_types: BTreeSet<EdgeType> = self.edges.iter().map(|e| e.edge_type).collect();
        GraphStats {
            node_count: self.nodes.len(),
            node_type_count: node_types.len(),
            edge_count: self.edges.len(),
            edge_type_count: edge_types.len(),
        }
    }
}

/// Computes the statistics record for a graph.
pub fn graph_stats(graph: &KnowledgeGraph) -> GraphStats {
    graph.stats()
}

// ---------------------------------------------------------------------------
// GraphML.

fn xml_escape(text: &str) -> String {
    quick_xml::escape::escape(text).into_owned()
}

fn graphml_export(graph: &KnowledgeGraph) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    out.push_str("  <key id=\"d0\" for=\"node\" attr.name=\"type\" attr.type=\"string\"/>\n");
    out.push_str(
        "  <key id=\"d1\" for=\"node\" attr.name=\"canonical_name\" attr.type=\"string\"/>\n",
    );
    out.push_str("  <key id=\"d2\" for=\"node\" attr.name=\"aliases\" attr.type=\"string\"/>\n");
    out.push_str("  <key id=\"d3\" for=\"node\" attr.name=\"provenance\" attr.type=\"string\"/>\n");
    out.push_str("  <key id=\"d4\" for=\"edge\" attr.name=\"type\" attr.type=\"string\"/>\n");
    out.push_str("  <key id=\"d5\" for=\"edge\" attr.name=\"confidence\" attr.type=\"double\"/>\n");
    out.push_str("  <key id=\"d6\" for=\"edge\" attr.name=\"evidence\" attr.type=\"string\"/>\n");
    out.push_str("  <graph id=\"G\" edgedefault=\"directed\">\n");
    for node in &graph.nodes {
        out.push_str(&format!("    <node id=\"{}\">\n", xml_escape(&node.id)));
        out.push_str(&format!(
            "      <data key=\"d0\">{}</data>\n",
            xml_escape(node.node_type.name())
        ));
        out.push_str(&format!(
            "      <data key=\"d1\">{}</data>\n",
            xml_escape(&node.canonical_name)
        ));
        let aliases = serde_json::to_string(&node.aliases).expect("serializable");
        out.push_str(&format!("      <data key=\"d2\">{}</data>\n", xml_escape(&aliases)));
        let provenance = serde_json::to_string(&node.provenance).expect("serializable");
        out.push_str(&format!("      <data key=\"d3\">{}</data>\n", xml_escape(&provenance)));
        out.push_str("    </node>\n");
    }
    for (i, edge) in graph.edges.iter().enumerate() {
        out.push_str(&format!(
            "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\">\n",
            xml_escape(&edge.head),
            xml_escape(&edge.tail)
        ));
        out.push_str(&format!(
            "      <data key=\"d4\">{}</data>\n",
            xml_escape(edge.edge_type.name())
        ));
        out.push_str(&format!("      <data key=\"d5\">{}</data>\n", edge.confidence));
        let evidence = serde_json::to_string(&edge.evidence).expect("serializable");
        out.push_str(&format!("      <data key=\"d6\">{}</data>\n", xml_escape(&evidence)));
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

fn graphml_import(text: &str) -> Result<KnowledgeGraph, GraphError> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(text);
    reader.config_mut().trim_text(true);

    #[derive(Default)]
    struct PendingNode {
        id: String,
        node_type: Option<NodeType>,
        canonical_name: String,
        aliases: BTreeSet<String>,
        provenance: BTreeSet<String>,
    }
    #[derive(Default)]
    struct PendingEdge {
        source: String,
        target: String,
        edge_type: Option<EdgeType>,
        confidence: Option<f64>,
        evidence: Vec<Evidence>,
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut node: Option<PendingNode> = None;
    let mut edge: Option<PendingEdge> = None;
    let mut data_key: Option<String> = None;
    let mut data_text = String::new();

    let parse_err = |reader: &quick_xml::Reader<&[u8]>, reason: String| GraphError::Parse {
        line: text[..reader.buffer_position() as usize].lines().count().max(1),
        reason,
    };

    loop {
        match reader.read_event() {
            Err(e) => return Err(parse_err(&reader, e.to_string())),
            Ok(Event::Eof) => break,
            Ok(Event::Start(ref e)) | Ok(Event::Empty(ref e)) => {
                let name = e.name();
                let attr = |key: &str| -> Option<String> {
                    e.attributes().flatten().find_map(|a| {
                        if a.key.as_ref() == key.as_bytes() {
                            a.unescape_value().ok().map(|v| v.into_owned())
                        } else {
                            None
                        }
                    })
                };
                match name.as_ref() {
                    b"node" => {
                        let id = attr("id")
                            .ok_or_else(|| parse_err(&reader, "node without id".to_string()))?;
                        node = Some(PendingNode { id, ..Default::default() });
                    }
                    b"edge" => {
                        let source = attr("source")
                            .ok_or_else(|| parse_err(&reader, "edge without source".to_string()))?;
                        let target = attr("target")
                            .ok_or_else(|| parse_err(&reader, "edge without target".to_string()))?;
                        edge = Some(PendingEdge { source, target, ..Default::default() });
                    }
                    b"data" => {
                        data_key = attr("key");
                        data_text.clear();
                    }
                    _ => {}
                }
            }
            Ok(Event::Text(t)) => {
                if data_key.is_some() {
                    data_text
                        .push_str(&t.unescape().map_err(|e| parse_err(&reader, e.to_string()))?);
                }
            }
            Ok(Event::End(ref e)) => match e.name().as_ref() {
                b"data" => {
                    let key = data_key.take().unwrap_or_default();
                    let value = std::mem::take(&mut data_text);
                    if let Some(n) = node.as_mut() {
                        match key.as_str() {
                            "d0" => {
                                n.node_type = Some(NodeType::parse(&value).ok_or_else(|| {
                                    parse_err(&reader, format!("unknown node type {value:?}"))
                                })?)
                            }
                            "d1" => n.canonical_name = value,
                            "d2" => {
                                n.aliases = serde_json::from_str(&value)
                                    .map_err(|e| parse_err(&reader, format!("bad aliases: {e}")))?
                            }
                            "d3" => {
                                n.provenance = serde_json::from_str(&value).map_err(|e| {
                                    parse_err(&reader, format!("bad provenance: {e}"))
                                })?
                            }
                            _ => {}
                        }
                    } else if let Some(ed) = edge.as_mut() {
                        match key.as_str() {
                            "d4" => {
                                ed.edge_type = Some(EdgeType::parse(&value).ok_or_else(|| {
                                    parse_err(&reader, format!("unknown edge type {value:?}"))
                                })?)
                            }
                            "d5" => {
                                ed.confidence = Some(value.parse().map_err(|_| {
                                    parse_err(&reader, format!("bad confidence {value:?}"))
                                })?)
                            }
                            "d6" => {
                                ed.evidence = serde_json::from_str(&value)
                                    .map_err(|e| parse_err(&reader, format!("bad evidence: {e}")))?
                            }
                            _ => {}
                        }
                    }
                }
                b"node" => {
                    let n = node
                        .take()
                        .ok_or_else(|| parse_err(&reader, "unmatched </node>".to_string()))?;
                    let node_type = n.node_type.ok_or_else(|| {
                        parse_err(&reader, format!("node {:?} missing type", n.id))
                    })?;
                    nodes.push(Node {
                        id: n.id,
                        node_type,
                        canonical_name: n.canonical_name,
                        aliases: n.aliases,
                        provenance: n.provenance,
                    });
                }
                b"edge" => {
                    let ed = edge
                        .take()
                        .ok_or_else(|| parse_err(&reader, "unmatched </edge>".to_string()))?;
                    let edge_type = ed
                        .edge_type
                        .ok_or_else(|| parse_err(&reader, "edge missing type".to_string()))?;
                    edges.push(Edge {
                        head: ed.source,
                        edge_type,
                        tail: ed.target,
                        confidence: ed.confidence.unwrap_or(1.0),
                        evidence: ed.evidence,
                    });
                }
                _ => {}
            },
            Ok(_) => {}
        }
    }

    let mut graph = KnowledgeGraph::new();
    for (i, n) in nodes.into_iter().enumerate() {
        graph.insert_node_record(n, i + 1)?;
    }
    for (i, e) in edges.into_iter().enumerate() {
        graph.insert_edge_record(e, i + 1)?;
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// JSONL.

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum JsonlRecord {
    Node(Node),
    Edge(Edge),
}

fn jsonl_export(graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for node in &graph.nodes {
        let record = JsonlRecord::Node(node.clone());
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    for edge in &graph.edges {
        let record = JsonlRecord::Edge(edge.clone());
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    out
}

fn jsonl_import(text: &str) -> Result<KnowledgeGraph, GraphError> {
    let mut nodes: Vec<(usize, Node)> = Vec::new();
    let mut edges: Vec<(usize, Edge)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(trimmed)
            .map_err(|e| GraphError::Parse { line: line_no, reason: e.to_string() })?;
        match record {
            JsonlRecord::Node(n) => nodes.push((line_no, n)),
            JsonlRecord::Edge(e) => edges.push((line_no, e)),
        }
    }
    let mut graph = KnowledgeGraph::new();
    for (line, n) in nodes {
        graph.insert_node_record(n, line)?;
    }
    for (line, e) in edges {
        graph.insert_edge_record(e, line)?;
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// TSV edge list.

fn node_key(node: &Node) -> String {
    format!("{}:{}", node.node_type, node.canonical_name)
}

fn tsv_export(graph: &KnowledgeGraph) -> String {
    let mut out = String::from("head\ttype\ttail\tconfidence\n");
    for edge in &graph.edges {
        let head = graph.node_by_id(&edge.head).expect("endpoints exist");
        let tail = graph.node_by_id(&edge.tail).expect("endpoints exist");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            node_key(head),
            edge.edge_type.name(),
            node_key(tail),
            edge.confidence
        ));
    }
    out
}

fn parse_node_key(text: &str, line: usize) -> Result<(NodeType, String), GraphError> {
    let (type_name, name) = text.split_once(':').ok_or_else(|| GraphError::Parse {
        line,
        reason: format!("node key {text:?} is not Type:name"),
    })?;
    let node_type = NodeType::parse(type_name).ok_or_else(|| GraphError::Parse {
        line,
        reason: format!("unknown node type {type_name:?}"),
    })?;
    if name.is_empty() {
        return Err(GraphError::Parse { line, reason: "empty node name".to_string() });
    }
    Ok((node_type, name.to_string()))
}

/// TSV import synthesizes a placeholder evidence entry per edge; the
/// format does not carry evidence.
fn tsv_import(text: &str) -> Result<KnowledgeGraph, GraphError> {
    let mut graph = KnowledgeGraph::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end_matches('\n');
        if trimmed.is_empty() || trimmed == "head\ttype\ttail\tconfidence" {
            continue;
        }
        let parts: Vec<&str> = trimmed.split('\t').collect();
        if parts.len() != 4 {
            return Err(GraphError::Parse {
                line: line_no,
                reason: format!("expected 4 tab-separated fields, got {}", parts.len()),
            });
        }
        let (head_type, head_name) = parse_node_key(parts[0], line_no)?;
        let edge_type = EdgeType::parse(parts[1]).ok_or_else(|| GraphError::Parse {
            line: line_no,
            reason: format!("unknown edge type {:?}", parts[1]),
        })?;
        let (tail_type, tail_name) = parse_node_key(parts[2], line_no)?;
        let confidence: f64 = parts[3].parse().map_err(|_| GraphError::Parse {
            line: line_no,
            reason: format!("bad confidence {:?}", parts[3]),
        })?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GraphError::BadConfidence(confidence));
        }
        let head_id = graph.upsert_node(&head_name, head_type, "")?;
        let tail_id = graph.upsert_node(&tail_name, tail_type, "")?;
        graph.insert_edge_record(
            Edge {
                head: head_id,
                edge_type,
                tail: tail_id,
                confidence,
                evidence: vec![Evidence { doc_id: "tsv-import".to_string(), sentence: 0 }],
            },
            line_no,
        )?;
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// Format dispatch.

/// Serializes the graph in the requested format.
pub fn export_graph(graph: &KnowledgeGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Graphml => graphml_export(graph),
        GraphFormat::Jsonl => jsonl_export(graph),
        GraphFormat::Tsv => tsv_export(graph),
    }
}

/// Parses a graph from text in the requested format.
pub fn import_graph_str(text: &str, format: GraphFormat) -> Result<KnowledgeGraph, GraphError> {
    match format {
        GraphFormat::Graphml => graphml_import(text),
        GraphFormat::Jsonl => jsonl_import(text),
        GraphFormat::Tsv => tsv_import(text),
    }
}

/// Writes the graph to a file.
pub fn save_graph(
    graph: &KnowledgeGraph,
    path: impl AsRef<Path>,
    format: GraphFormat,
) -> Result<(), GraphError> {
    let path = path.as_ref();
    fs::write(path, export_graph(graph, format))
        .map_err(|source| GraphError::Io { path: path.display().to_string(), source })
}

/// Reads a graph from a file.
pub fn import_graph(
    path: impl AsRef<Path>,
    format: GraphFormat,
) -> Result<KnowledgeGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| GraphError::Io { path: path.display().to_string(), source })?;
    import_graph_str(&text, format)
}

/// A node reduced to (type, canonical name, aliases, provenance),
/// independent of its assigned id.
pub type NodeContent = (String, String, Vec<String>, Vec<String>);

/// An edge reduced to (head key, type, tail key, confidence, evidence),
/// independent of node ids.
pub type EdgeContent = (String, String, String, String, Vec<(String, usize)>);

/// Canonical content view for isomorphism checks, with ids erased.
pub fn canonical_content(
    graph: &KnowledgeGraph,
) -> (BTreeSet<NodeContent>, BTreeSet<EdgeContent>) {
    let nodes = graph
        .nodes()
        .iter()
        .map(|n| {
            (
                n.node_type.name().to_string(),
                n.canonical_name.clone(),
                n.aliases.iter().cloned().collect(),
                n.provenance.iter().cloned().collect(),
            )
        })
        .collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| {
            let head = graph.node_by_id(&e.head).expect("endpoints exist");
            let tail = graph.node_by_id(&e.tail).expect("endpoints exist");
            let mut evidence: Vec<(String, usize)> =
                e.evidence.iter().map(|ev| (ev.doc_id.clone(), ev.sentence)).collect();
            evidence.sort();
            (
                node_key(head),
                e.edge_type.name().to_string(),
                node_key(tail),
                format!("{}", e.confidence),
                evidence,
            )
        })
        .collect();
    (nodes, edges)
}
