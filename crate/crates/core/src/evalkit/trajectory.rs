use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    Rotation,
    Translation,
    Combined,
}

impl TrajectoryMode {
    pub const ALL: [TrajectoryMode; 3] = [
        TrajectoryMode::Rotation,
        TrajectoryMode::Translation,
        TrajectoryMode::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryMode::Rotation => "rotation",
            TrajectoryMode::Translation => "translation",
            TrajectoryMode::Combined => "combined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub mode: TrajectoryMode,
    pub count: usize,
    pub seed: u64,
    /// Pitch is drawn from `[-max_pitch, max_pitch]`.
    pub max_pitch: f64,
    /// Positions are drawn along this fraction of the pose chain, from its start.
    pub translation_fraction: f64,
    pub fov: f64,
    /// Translated cameras are displaced off the pose chain by up to this
    /// distance (world units), uniformly over a disk across the chain.
    pub lateral_offset: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            mode: TrajectoryMode::Combined,
            count: 20,
            seed: 0,
            max_pitch: FRAC_PI_4,
            translation_fraction: 0.8,
            fov: FRAC_PI_2,
            lateral_offset: 0.0,
        }
    }
}

impl TrajectorySpec {
    pub fn new(mode: TrajectoryMode, count: usize, seed: u64) -> Self {
        TrajectorySpec {
            mode,
            count,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("trajectory count must be positive"));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.max_pitch) {
            return Err(Error::invalid("max pitch must lie in [0, pi/2]"));
        }
        if !(0.0..=1.0).contains(&self.translation_fraction) {
            return Err(Error::invalid("translation fraction must lie in [0, 1]"));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::invalid("fov must lie in (0, pi)"));
        }
        if !(self.lateral_offset >= 0.0 && self.lateral_offset.is_finite()) {
            return Err(Error::invalid(
                "lateral offset must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Draws evaluation cameras around a world whose panoramas sit at `poses`.
/// The first pose is the reference for position (rotation mode) and
/// orientation (translation mode).
pub fn sample_trajectories(spec: &TrajectorySpec, poses: &[Pose]) -> Result<Vec<Pose>> {
    spec.validate()?;
    let first = poses
        .first()
        .ok_or_else(|| Error::invalid("need at least one world pose"))?;
    let last = poses.last().unwrap();
    let start = first.translation;
    let span: Vec3 = last.translation - start;
    let mode_salt = match spec.mode {
        TrajectoryMode::Rotation => 0x0001,
        TrajectoryMode::Translation => 0x0002,
        TrajectoryMode::Combined => 0x0003,
    };
    let (across_a, across_b) = across_chain(&span);
    let mut rng =
        ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mode_salt);
    let out = (0..spec.count)
        .map(|_| {
            let rotate = matches!(
                spec.mode,
                TrajectoryMode::Rotation | TrajectoryMode::Combined
            );
            let translate = matches!(
                spec.mode,
                TrajectoryMode::Translation | TrajectoryMode::Combined
            );
            let (yaw, pitch) = if rotate {
                (
                    rng.random_range(0.0..TAU),
                    rng.random_range(-spec.max_pitch..=spec.max_pitch),
                )
            } else {
                (0.0, 0.0)
            };
            let mut pos = if translate {
                start + span * (spec.translation_fraction * rng.random_range(0.0..=1.0))
            } else {
                start
            };
            if translate && spec.lateral_offset > 0.0 {
                let r = spec.lateral_offset * rng.random_range(0.0..=1.0f64).sqrt();
                let t = rng.random_range(0.0..TAU);
                pos += (across_a * t.cos() + across_b * t.sin()) * r;
            }
            let local = Pose::from_yaw_pitch(yaw, pitch, Vec3::zeros());
            Pose::new(first.rotation * local.rotation, pos).expect("product of rotations")
        })
        .collect();
    Ok(out)
}

/// Orthonormal pair spanning the plane across `span`; for a degenerate span
/// the horizontal plane.
fn across_chain(span: &Vec3) -> (Vec3, Vec3) {
    let n = span.norm();
    if !(n > 0.0) {
        return (Vec3::x(), Vec3::z());
    }
    let d = span / n;
    let helper = if d.y.abs() < 0.9 {
        Vec3::y()
    } else {
        Vec3::x()
    };
    let a = d.cross(&helper).normalize();
    (a, d.cross(&a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Vec<Pose> {
        (0..3)
            .map(|i| Pose::from_translation(Vec3::new(2.0 * i as f64, 0.0, 0.0)))
            .collect()
    }

    #[test]
    fn rotation_poses_share_the_reference_position() {
        let p = sample_trajectories(
            &TrajectorySpec::new(TrajectoryMode::Rotation, 20, 3),
            &chain(),
        )
        .unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|q| q.translation == Vec3::zeros()));
    }

    #[test]
    fn translation_poses_keep_orientation_and_stay_on_segment() {
        let p = sample_trajectories(
            &TrajectorySpec::new(TrajectoryMode::Translation, 20, 3),
            &chain(),
        )
        .unwrap();
        for q in &p {
            assert_eq!(q.rotation, Pose::identity().rotation);
            assert!(q.translation.x >= 0.0 && q.translation.x <= 0.8 * 4.0 + 1e-12);
            assert_eq!((q.translation.y, q.translation.z), (0.0, 0.0));
        }
    }

    #[test]
    fn offset_cameras_stay_within_the_disk() {
        let spec = TrajectorySpec {
            lateral_offset: 0.5,
            ..TrajectorySpec::new(TrajectoryMode::Translation, 50, 4)
        };
        let p = sample_trajectories(&spec, &chain()).unwrap();
        assert!(p
            .iter()
            .all(|q| q.translation.x >= 0.0 && q.translation.x <= 3.2 + 1e-12));
        assert!(p
            .iter()
            .all(|q| q.translation.y.hypot(q.translation.z) <= 0.5 + 1e-12));
        assert!(p
            .iter()
            .any(|q| q.translation.y.hypot(q.translation.z) > 0.1));
        let rot = TrajectorySpec {
            lateral_offset: 0.5,
            ..TrajectorySpec::new(TrajectoryMode::Rotation, 5, 4)
        };
        assert!(sample_trajectories(&rot, &chain())
            .unwrap()
            .iter()
            .all(|q| q.translation == Vec3::zeros()));
    }

    #[test]
    fn sampling_is_seeded() {
        let s = TrajectorySpec::new(TrajectoryMode::Combined, 20, 11);
        assert_eq!(
            sample_trajectories(&s, &chain()).unwrap(),
            sample_trajectories(&s, &chain()).unwrap()
        );
        let t = TrajectorySpec {
            seed: 12,
            ..s.clone()
        };
        assert_ne!(
            sample_trajectories(&s, &chain()).unwrap(),
            sample_trajectories(&t, &chain()).unwrap()
        );
        assert!(sample_trajectories(&TrajectorySpec { count: 0, ..s }, &chain()).is_err());
    }
}
