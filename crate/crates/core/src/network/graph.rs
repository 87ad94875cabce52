//! Typed network graph and its TOML file format.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Reservoir,
    Junction,
    Tank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Pipe,
    Pump,
    Valve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Initial stored volume in litres; tanks only.
    pub initial_volume_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub kind: LinkKind,
    /// Index of the upstream node in file orientation.
    pub from: usize,
    /// Index of the downstream node in file orientation.
    pub to: usize,
    /// Pipe length in metres; pipes only.
    pub length_m: Option<f64>,
    /// Pipe radius in metres; pipes only.
    pub radius_m: Option<f64>,
}

/// Validated network topology.
///
/// Nodes and links keep file order; every consumer derives its deterministic
/// state ordering from that.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub name: String,
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_by_id: HashMap<String, usize>,
    link_by_id: HashMap<String, usize>,
}

impl NetworkGraph {
    pub fn new(name: &str, nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, NetworkError> {
        let mut node_by_id = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_by_id.insert(n.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId { id: n.id.clone() });
            }
        }
        let mut link_by_id = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if node_by_id.contains_key(&l.id) || link_by_id.insert(l.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateId { id: l.id.clone() });
            }
        }
        let graph = Self {
            name: name.to_string(),
            nodes,
            links,
            node_by_id,
            link_by_id,
        };
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<(), NetworkError> {
        if !self
            .nodes
            .iter()
            .any(|n| matches!(n.kind, NodeKind::Reservoir | NodeKind::Tank))
        {
            return Err(NetworkError::NoSource);
        }
        for n in &self.nodes {
            match n.kind {
                NodeKind::Tank => {
                    let v = n
                        .initial_volume_l
                        .ok_or_else(|| NetworkError::MissingTankVolume { node: n.id.clone() })?;
                    if v <= 0.0 {
                        return Err(NetworkError::MissingTankVolume { node: n.id.clone() });
                    }
                }
                _ => {
                    if n.initial_volume_l.is_some() {
                        return Err(NetworkError::TankMismatch { node: n.id.clone() });
                    }
                }
            }
        }
        for l in &self.links {
            if l.from == l.to {
                return Err(NetworkError::SelfLoop {
                    link: l.id.clone(),
                    node: self.nodes[l.from].id.clone(),
                });
            }
            if l.kind == LinkKind::Pipe {
                if l.length_m.is_none_or(|v| v <= 0.0) {
                    return Err(NetworkError::NonpositiveGeometry {
                        link: l.id.clone(),
                        what: "length",
                    });
                }
                if l.radius_m.is_none_or(|v| v <= 0.0) {
                    return Err(NetworkError::NonpositiveGeometry {
                        link: l.id.clone(),
                        what: "radius",
                    });
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_index(&self, id: &str) -> Result<usize, NetworkError> {
        self.node_by_id
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownElement { id: id.to_string() })
    }

    pub fn link_index(&self, id: &str) -> Result<usize, NetworkError> {
        self.link_by_id
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownElement { id: id.to_string() })
    }

    pub fn element_exists(&self, id: &str) -> bool {
        self.node_by_id.contains_key(id) || self.link_by_id.contains_key(id)
    }

    pub fn count_nodes(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn count_links(&self, kind: LinkKind) -> usize {
        self.links.iter().filter(|l| l.kind == kind).count()
    }

    /// Pipe position among pipes in file order, if the link is a pipe.
    pub fn pipe_ordinal(&self, link: usize) -> Option<usize> {
        if self.links[link].kind != LinkKind::Pipe {
            return None;
        }
        Some(
            self.links[..link]
                .iter()
                .filter(|l| l.kind == LinkKind::Pipe)
                .count(),
        )
    }

    /// Tank position among tanks in file order, if the node is a tank.
    pub fn tank_ordinal(&self, node: usize) -> Option<usize> {
        if self.nodes[node].kind != NodeKind::Tank {
            return None;
        }
        Some(
            self.nodes[..node]
                .iter()
                .filter(|n| n.kind == NodeKind::Tank)
                .count(),
        )
    }

    /// Links incident to each node, as `(link index, node is the link's `to` end)`.
    pub fn incident_links(&self) -> Vec<Vec<(usize, bool)>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, l) in self.links.iter().enumerate() {
            out[l.from].push((i, false));
            out[l.to].push((i, true));
        }
        out
    }

    /// Serialize back to the network file format.
    pub fn to_toml_string(&self) -> String {
        let file = NetworkFile {
            meta: Meta {
                name: self.name.clone(),
                units: "si".to_string(),
            },
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.clone(),
                    kind: n.kind,
                })
                .collect(),
            tanks: self
                .nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Tank)
                .map(|n| TankEntry {
                    node: n.id.clone(),
                    initial_volume_m3: n.initial_volume_l.unwrap_or(0.0) / 1000.0,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkEntry {
                    id: l.id.clone(),
                    kind: l.kind,
                    from: self.nodes[l.from].id.clone(),
                    to: self.nodes[l.to].id.clone(),
                    length_m: l.length_m,
                    radius_m: l.radius_m,
                })
                .collect(),
        };
        toml::to_string_pretty(&file).expect("network file serialization")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    #[serde(default = "default_units")]
    units: String,
}

fn default_units() -> String {
    "si".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeEntry {
    id: String,
    kind: NodeKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct TankEntry {
    node: String,
    initial_volume_m3: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkEntry {
    id: String,
    kind: LinkKind,
    from: String,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    meta: Meta,
    #[serde(default)]
    nodes: Vec<NodeEntry>,
    #[serde(default)]
    tanks: Vec<TankEntry>,
    #[serde(default)]
    links: Vec<LinkEntry>,
}

/// Parse and validate a network file.
pub fn parse_network(text: &str) -> Result<NetworkGraph, NetworkError> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| syntax_error(text, e))?;

    let mut volumes: HashMap<&str, f64> = HashMap::new();
    for t in &file.tanks {
        volumes.insert(t.node.as_str(), t.initial_volume_m3 * 1000.0);
    }

    let nodes: Vec<Node> = file
        .nodes
        .iter()
        .map(|n| Node {
            id: n.id.clone(),
            kind: n.kind,
            initial_volume_l: volumes.get(n.id.as_str()).copied(),
        })
        .collect();
    for t in &file.tanks {
        let node = file.nodes.iter().find(|n| n.id == t.node);
        match node {
            None => return Err(NetworkError::TankMismatch { node: t.node.clone() }),
            Some(n) if n.kind != NodeKind::Tank => {
                return Err(NetworkError::TankMismatch { node: t.node.clone() })
            }
            _ => {}
        }
    }

    let mut node_pos: HashMap<&str, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        node_pos.entry(n.id.as_str()).or_insert(i);
    }
    let links = file
        .links
        .iter()
        .map(|l| {
            let from = *node_pos
                .get(l.from.as_str())
                .ok_or_else(|| NetworkError::DanglingNode {
                    link: l.id.clone(),
                    node: l.from.clone(),
                })?;
            let to = *node_pos
                .get(l.to.as_str())
                .ok_or_else(|| NetworkError::DanglingNode {
                    link: l.id.clone(),
                    node: l.to.clone(),
                })?;
            Ok(Link {
                id: l.id.clone(),
                kind: l.kind,
                from,
                to,
                length_m: l.length_m,
                radius_m: l.radius_m,
            })
        })
        .collect::<Result<Vec<_>, NetworkError>>()?;

    NetworkGraph::new(&file.meta.name, nodes, links)
}

fn syntax_error(text: &str, err: toml::de::Error) -> NetworkError {
    let line = err
        .span()
        .map(|span| text[..span.start.min(text.len())].lines().count().max(1))
        .unwrap_or(1);
    NetworkError::Syntax {
        line,
        message: err.message().to_string(),
    }
}
