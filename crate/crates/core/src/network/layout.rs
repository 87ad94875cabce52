//! Booster, intrusion, and sensor placement.

use super::graph::NetworkGraph;
use super::NetworkError;

/// Actuator and sensor locations, as node indices.
///
/// Reactant sensors are evaluation-only: they exist to score reduced models
/// against the full-order model and are never visible to the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceLayout {
    pub boosters: Vec<usize>,
    pub intrusion_points: Vec<usize>,
    pub chlorine_sensors: Vec<usize>,
    pub reactant_sensors: Vec<usize>,
}

impl DeviceLayout {
    pub fn from_ids(
        graph: &NetworkGraph,
        boosters: &[String],
        intrusion_points: &[String],
        chlorine_sensors: &[String],
        reactant_sensors: &[String],
    ) -> Result<Self, NetworkError> {
        let resolve = |ids: &[String]| -> Result<Vec<usize>, NetworkError> {
            ids.iter().map(|id| graph.node_index(id)).collect()
        };
        Ok(Self {
            boosters: resolve(boosters)?,
            intrusion_points: resolve(intrusion_points)?,
            chlorine_sensors: resolve(chlorine_sensors)?,
            reactant_sensors: resolve(reactant_sensors)?,
        })
    }

    /// Chlorine input channels.
    pub fn n_u1(&self) -> usize {
        self.boosters.len()
    }

    /// Reactant input channels.
    pub fn n_u2(&self) -> usize {
        self.intrusion_points.len()
    }

    /// Chlorine sensor channels.
    pub fn n_y1(&self) -> usize {
        self.chlorine_sensors.len()
    }

    /// Evaluation-only reactant sensor channels.
    pub fn n_y2(&self) -> usize {
        self.reactant_sensors.len()
    }

    /// Controlled scenarios need at least one booster and one chlorine sensor.
    pub fn require_controllable(&self) -> Result<(), NetworkError> {
        if self.boosters.is_empty() || self.chlorine_sensors.is_empty() {
            return Err(NetworkError::Scenario {
                message: "controlled scenario needs a booster and a chlorine sensor".to_string(),
            });
        }
        Ok(())
    }
}
