//! McCormick envelopes for the bilinear product `z = x1 * x2` over a box.

use nalgebra::DVector;

use crate::network::StateIndexMap;

use super::ControlError;

/// Box and the four affine over/underestimators for one bilinear element.
///
/// For `(x1, x2)` inside the box, `z = x1 x2` satisfies:
///
/// ```text
/// z >= x1_min x2 + x1 x2_min - x1_min x2_min
/// z >= x1_max x2 + x1 x2_max - x1_max x2_max
/// z <= x1_max x2 + x1 x2_min - x1_max x2_min
/// z <= x1_min x2 + x1 x2_max - x1_min x2_max
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCormickEnvelope {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl McCormickEnvelope {
    pub fn new(x1_min: f64, x1_max: f64, x2_min: f64, x2_max: f64) -> Result<Self, ControlError> {
        if x1_min > x1_max || x2_min > x2_max {
            return Err(ControlError::InvertedBox {
                x1_min,
                x1_max,
                x2_min,
                x2_max,
            });
        }
        Ok(Self {
            x1_min,
            x1_max,
            x2_min,
            x2_max,
        })
    }

    /// Envelope interval for `z` at a point: `[max of underestimators,
    /// min of overestimators]`.
    pub fn z_interval(&self, x1: f64, x2: f64) -> (f64, f64) {
        let lo1 = self.x1_min * x2 + x1 * self.x2_min - self.x1_min * self.x2_min;
        let lo2 = self.x1_max * x2 + x1 * self.x2_max - self.x1_max * self.x2_max;
        let hi1 = self.x1_max * x2 + x1 * self.x2_min - self.x1_max * self.x2_min;
        let hi2 = self.x1_min * x2 + x1 * self.x2_max - self.x1_min * self.x2_max;
        (lo1.max(lo2), hi1.min(hi2))
    }

    /// All four inequalities hold for `z` at `(x1, x2)` within `tol`.
    pub fn admits(&self, x1: f64, x2: f64, z: f64, tol: f64) -> bool {
        let (lo, hi) = self.z_interval(x1, x2);
        z >= lo - tol && z <= hi + tol
    }

    /// Soundness: the true product is inside the envelope for box points.
    pub fn sound_at(&self, x1: f64, x2: f64, tol: f64) -> bool {
        self.admits(x1, x2, x1 * x2, tol)
    }
}

/// Per-element reactant ceilings under the tightening rule: the detected
/// intrusion concentration while an event is in progress, the current
/// estimate once the plume decays, never negative.
pub fn tighten_x2_caps(
    map: &StateIndexMap,
    x_estimate: &DVector<f64>,
    detected_mg_l: f64,
    regulatory_cap: Option<f64>,
) -> Vec<f64> {
    let n = map.n();
    map.reaction_sites()
        .iter()
        .map(|site| {
            let current = x_estimate[n + site.state].max(0.0);
            let cap = current.max(detected_mg_l);
            match regulatory_cap {
                Some(r) => cap.min(r),
                None => cap,
            }
        })
        .collect()
}

/// One envelope per reaction site (tanks then pipe segments), with the
/// chlorine box `[0, x1_max]` and the per-element reactant ceiling.
pub fn build_envelopes(
    x1_max: f64,
    x2_caps: &[f64],
) -> Result<Vec<McCormickEnvelope>, ControlError> {
    x2_caps
        .iter()
        .map(|&cap| McCormickEnvelope::new(0.0, x1_max, 0.0, cap))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box_interval_contains_the_product() {
        let env = McCormickEnvelope::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let (lo, hi) = env.z_interval(0.5, 0.5);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 0.5);
        assert!(env.sound_at(0.5, 0.5, 0.0));
        assert!(lo < 0.25 && 0.25 < hi);
    }

    #[test]
    fn corners_force_the_product() {
        let env = McCormickEnvelope::new(0.2, 4.0, 0.0, 0.1).unwrap();
        for (x1, x2) in [(0.2, 0.0), (0.2, 0.1), (4.0, 0.0), (4.0, 0.1)] {
            let (lo, hi) = env.z_interval(x1, x2);
            assert!((lo - x1 * x2).abs() < 1e-15);
            assert!((hi - x1 * x2).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_reactant_box_forces_zero() {
        let env = McCormickEnvelope::new(0.0, 4.0, 0.0, 0.0).unwrap();
        let (lo, hi) = env.z_interval(2.0, 0.0);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn inverted_box_is_rejected() {
        assert!(McCormickEnvelope::new(1.0, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn soundness_over_random_boxes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let x1_min = rng.gen_range(0.0..2.0);
            let x1_max = x1_min + rng.gen_range(0.0..3.0);
            let x2_min = rng.gen_range(0.0..1.0);
            let x2_max = x2_min + rng.gen_range(0.0..1.0);
            let env = McCormickEnvelope::new(x1_min, x1_max, x2_min, x2_max).unwrap();
            let x1 = rng.gen_range(x1_min..=x1_max);
            let x2 = rng.gen_range(x2_min..=x2_max);
            assert!(env.sound_at(x1, x2, 1e-12));
        }
    }
}
