//! Spatial segmentation of pipes for the fixed water-quality grid.

use tracing::warn;

use super::graph::{LinkKind, NetworkGraph};
use super::hydraulics::HydraulicProfile;
use super::NetworkError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipeSegmentation {
    pub link: usize,
    pub count: usize,
    pub dx_m: f64,
    /// Reference velocity the count was fixed from (max |v| over the profile).
    pub v_ref_m_s: f64,
    pub stagnant: bool,
}

/// Fixed segment counts for every pipe plus the global water-quality step.
///
/// Counts stay constant for a whole simulation so the state dimension is
/// constant; the reference velocity is the profile maximum, which keeps the
/// Courant number at or below one at every hydraulic step.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationPlan {
    pub dt_s: f64,
    /// Per pipe ordinal (pipes in file order).
    pub pipes: Vec<PipeSegmentation>,
}

impl SegmentationPlan {
    pub fn total_segments(&self) -> usize {
        self.pipes.iter().map(|p| p.count).sum()
    }

    pub fn for_link(&self, link: usize) -> Option<&PipeSegmentation> {
        self.pipes.iter().find(|p| p.link == link)
    }
}

/// Fix `s_i = floor(L_i / (v_ref_i * dt))`, clamped to at least one segment.
///
/// A pipe with zero velocity throughout the profile gets a single segment
/// and a warning (stagnant pipe).
pub fn segmentize(
    graph: &NetworkGraph,
    profile: &HydraulicProfile,
    dt_s: f64,
) -> Result<SegmentationPlan, NetworkError> {
    if dt_s <= 0.0 {
        return Err(NetworkError::Segmentation {
            message: "water-quality step must be positive".to_string(),
        });
    }
    if profile.steps.is_empty() {
        return Err(NetworkError::Segmentation {
            message: "hydraulic profile covers no steps".to_string(),
        });
    }
    let mut pipes = Vec::new();
    for (i, link) in graph.links().iter().enumerate() {
        if link.kind != LinkKind::Pipe {
            continue;
        }
        let length = link.length_m.expect("validated pipe length");
        let v_ref = profile
            .steps
            .iter()
            .map(|s| s.velocity_m_s[i].abs())
            .fold(0.0f64, f64::max);
        let stagnant = v_ref == 0.0;
        let count = if stagnant {
            warn!(pipe = %link.id, "stagnant pipe: zero velocity across the profile, using one segment");
            1
        } else {
            ((length / (v_ref * dt_s)).floor() as usize).max(1)
        };
        pipes.push(PipeSegmentation {
            link: i,
            count,
            dx_m: length / count as f64,
            v_ref_m_s: v_ref,
            stagnant,
        });
    }
    Ok(SegmentationPlan { dt_s, pipes })
}
