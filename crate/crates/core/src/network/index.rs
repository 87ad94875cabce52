//! Deterministic bijection between state indices and network elements.

use super::graph::{LinkKind, NetworkGraph, NodeKind};
use super::segments::SegmentationPlan;

/// One per-species state: a network element or a pipe segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateElement {
    Reservoir { node: usize },
    Junction { node: usize },
    Tank { node: usize },
    Pump { link: usize },
    Valve { link: usize },
    /// Segment `seg` (0-based, oriented from the link's `from` end).
    PipeSegment { link: usize, seg: usize },
}

/// States of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStates {
    Single(usize),
    Segments { first: usize, count: usize },
}

/// A bilinear-reaction site (tank or pipe segment) by per-species state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReactionSite {
    pub state: usize,
    pub element: StateElement,
}

/// Per-species state ordering: reservoirs, junctions, tanks, pumps, valves,
/// then pipe segments, each group in file order. The two-species model
/// stacks species one at offset zero and species two at offset `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateIndexMap {
    elements: Vec<StateElement>,
    node_state: Vec<usize>,
    link_states: Vec<LinkStates>,
    reaction_sites: Vec<ReactionSite>,
}

impl StateIndexMap {
    /// Per-species state count.
    pub fn n(&self) -> usize {
        self.elements.len()
    }

    /// Stacked two-species dimension.
    pub fn n_stacked(&self) -> usize {
        2 * self.elements.len()
    }

    pub fn element(&self, state: usize) -> StateElement {
        self.elements[state]
    }

    pub fn elements(&self) -> &[StateElement] {
        &self.elements
    }

    pub fn node_state(&self, node: usize) -> usize {
        self.node_state[node]
    }

    pub fn link_states(&self, link: usize) -> LinkStates {
        self.link_states[link]
    }

    /// Tanks then pipe segments, in state order.
    pub fn reaction_sites(&self) -> &[ReactionSite] {
        &self.reaction_sites
    }

    /// Human-readable label, e.g. `R1`, `P1:17`.
    pub fn label(&self, graph: &NetworkGraph, state: usize) -> String {
        match self.elements[state] {
            StateElement::Reservoir { node }
            | StateElement::Junction { node }
            | StateElement::Tank { node } => graph.nodes()[node].id.clone(),
            StateElement::Pump { link } | StateElement::Valve { link } => {
                graph.links()[link].id.clone()
            }
            StateElement::PipeSegment { link, seg } => {
                format!("{}:{}", graph.links()[link].id, seg)
            }
        }
    }

    /// State index for a label produced by [`StateIndexMap::label`].
    pub fn state_of_label(&self, graph: &NetworkGraph, label: &str) -> Option<usize> {
        if let Some((link_id, seg)) = label.split_once(':') {
            let link = graph.link_index(link_id).ok()?;
            let seg: usize = seg.parse().ok()?;
            match self.link_states[link] {
                LinkStates::Segments { first, count } if seg < count => Some(first + seg),
                _ => None,
            }
        } else if let Ok(node) = graph.node_index(label) {
            Some(self.node_state[node])
        } else if let Ok(link) = graph.link_index(label) {
            match self.link_states[link] {
                LinkStates::Single(s) => Some(s),
                LinkStates::Segments { first, .. } => Some(first),
            }
        } else {
            None
        }
    }
}

/// Build the state ordering for a segmented network.
pub fn state_index_map(graph: &NetworkGraph, plan: &SegmentationPlan) -> StateIndexMap {
    let mut elements = Vec::new();
    let mut node_state = vec![usize::MAX; graph.nodes().len()];
    let mut link_states = vec![LinkStates::Single(usize::MAX); graph.links().len()];

    for kind in [NodeKind::Reservoir, NodeKind::Junction, NodeKind::Tank] {
        for (i, node) in graph.nodes().iter().enumerate() {
            if node.kind != kind {
                continue;
            }
            node_state[i] = elements.len();
            elements.push(match kind {
                NodeKind::Reservoir => StateElement::Reservoir { node: i },
                NodeKind::Junction => StateElement::Junction { node: i },
                NodeKind::Tank => StateElement::Tank { node: i },
            });
        }
    }
    for kind in [LinkKind::Pump, LinkKind::Valve] {
        for (i, link) in graph.links().iter().enumerate() {
            if link.kind != kind {
                continue;
            }
            link_states[i] = LinkStates::Single(elements.len());
            elements.push(match kind {
                LinkKind::Pump => StateElement::Pump { link: i },
                LinkKind::Valve => StateElement::Valve { link: i },
                LinkKind::Pipe => unreachable!(),
            });
        }
    }
    for seg in &plan.pipes {
        link_states[seg.link] = LinkStates::Segments {
            first: elements.len(),
            count: seg.count,
        };
        for s in 0..seg.count {
            elements.push(StateElement::PipeSegment { link: seg.link, seg: s });
        }
    }

    let reaction_sites = elements
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e, StateElement::Tank { .. } | StateElement::PipeSegment { .. }))
        .map(|(state, &element)| ReactionSite { state, element })
        .collect();

    StateIndexMap {
        elements,
        node_state,
        link_states,
        reaction_sites,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::graph::{parse_network, tests::THREE_NODE};
    use crate::network::hydraulics::constant_profile;
    use crate::network::segments::segmentize;
    use nalgebra::DVector;

    fn three_node_map(dt: f64) -> (crate::network::NetworkGraph, StateIndexMap) {
        let g = parse_network(THREE_NODE).unwrap();
        let profile = constant_profile(
            &g,
            600.0,
            1,
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::from_vec(vec![145.664, 125.664]),
            &DVector::from_vec(vec![0.0, 20.0, 0.0]),
        );
        let plan = segmentize(&g, &profile, dt).unwrap();
        let map = state_index_map(&g, &plan);
        (g, map)
    }

    #[test]
    fn three_node_dimension_matches_segment_count() {
        // dt = 1000/150 fixes 150 segments: n = 1+1+1+1+150.
        let (_, map) = three_node_map(1000.0 / 150.0);
        assert_eq!(map.n(), 154);

        // dt = 5 s at 1 m/s over 1000 m fixes 200 segments: n = 204 per
        // species, 408 stacked.
        let (_, map) = three_node_map(5.0);
        assert_eq!(map.n(), 204);
        assert_eq!(map.n_stacked(), 408);
    }

    #[test]
    fn zero_pipe_network_counts_nodes_and_valves() {
        let text = r#"
[meta]
name = "no-pipes"
[[nodes]]
id = "R1"
kind = "reservoir"
[[nodes]]
id = "J1"
kind = "junction"
[[links]]
id = "V1"
kind = "valve"
from = "R1"
to = "J1"
"#;
        let g = parse_network(text).unwrap();
        let profile = constant_profile(
            &g,
            600.0,
            1,
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![10.0]),
            &DVector::from_vec(vec![0.0, 10.0]),
        );
        let plan = segmentize(&g, &profile, 5.0).unwrap();
        let map = state_index_map(&g, &plan);
        assert_eq!(map.n(), 3);
    }

    #[test]
    fn index_map_is_a_bijection() {
        let (g, map) = three_node_map(5.0);
        for state in 0..map.n() {
            let label = map.label(&g, state);
            assert_eq!(map.state_of_label(&g, &label), Some(state), "label {label}");
        }
    }

    #[test]
    fn reaction_sites_are_tanks_then_segments() {
        let (_, map) = three_node_map(5.0);
        let sites = map.reaction_sites();
        assert_eq!(sites.len(), 201);
        assert!(matches!(sites[0].element, StateElement::Tank { .. }));
        assert!(matches!(sites[1].element, StateElement::PipeSegment { seg: 0, .. }));
    }
}
