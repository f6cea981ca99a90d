//! Obstacle layouts: JSON files, seeded random fields and obstacle lines.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OalError, Result};

pub const DEFAULT_OBSTACLE_RADIUS: f64 = 0.02;
pub const SPARSE_MIN_SPACING: f64 = 0.4;
pub const DENSE_SPACING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Walls {
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    Sparse,
    Dense,
    Walls,
    Custom,
}

/// Axis-aligned region `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walls: Option<Walls>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<EnvMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Environment {
    pub fn empty() -> Self {
        Self {
            obstacles: vec![],
            walls: None,
            bounds: None,
            mode: None,
            seed: None,
        }
    }

    pub fn parallel_walls(gap: f64) -> Self {
        Self {
            walls: Some(Walls { gap }),
            mode: Some(EnvMode::Walls),
            ..Self::empty()
        }
    }

    pub fn mode(&self) -> EnvMode {
        match (self.mode, self.walls) {
            (Some(m), _) => m,
            (None, Some(_)) => EnvMode::Walls,
            (None, None) => EnvMode::Custom,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, o) in self.obstacles.iter().enumerate() {
            if !(o.x.is_finite() && o.y.is_finite()) {
                return Err(OalError::InvalidConfig(format!(
                    "obstacle {k} has a non-finite position"
                )));
            }
            if !(o.r.is_finite() && o.r > 0.0) {
                return Err(OalError::InvalidConfig(format!(
                    "obstacle {k} radius must be positive, got {}",
                    o.r
                )));
            }
        }
        if let Some(w) = self.walls {
            if !(w.gap.is_finite() && w.gap > 0.0) {
                return Err(OalError::InvalidConfig(format!(
                    "wall gap must be positive, got {}",
                    w.gap
                )));
            }
        }
        if let Some(b) = self.bounds {
            let ok = [b.x_min, b.x_max, b.y_min, b.y_max].iter().all(|v| v.is_finite())
                && b.x_min < b.x_max
                && b.y_min < b.y_max;
            if !ok {
                return Err(OalError::InvalidConfig("bounds must be finite with min < max".into()));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let env: Environment =
            serde_json::from_str(s).map_err(|e| OalError::InvalidConfig(format!("environment: {e}")))?;
        env.validate()?;
        Ok(env)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let s =
            std::fs::read_to_string(path).map_err(|e| OalError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    /// Mirror image across the world `x` axis.
    pub fn mirrored(&self) -> Self {
        Self {
            obstacles: self.obstacles.iter().map(|o| Obstacle { y: -o.y, ..*o }).collect(),
            bounds: self.bounds.map(|b| Bounds {
                y_min: -b.y_max,
                y_max: -b.y_min,
                ..b
            }),
            ..self.clone()
        }
    }

    /// Drop obstacles whose centers lie within `clearance` of any segment.
    pub fn without_overlap(
        mut self,
        segments: &[(nalgebra::Vector2<f64>, nalgebra::Vector2<f64>)],
        clearance: f64,
    ) -> Self {
        self.obstacles.retain(|o| {
            let p = nalgebra::Vector2::new(o.x, o.y);
            segments
                .iter()
                .all(|(a, b)| point_segment_distance(p, *a, *b) > o.r + clearance)
        });
        self
    }
}

pub fn point_segment_distance(p: nalgebra::Vector2<f64>, a: nalgebra::Vector2<f64>, b: nalgebra::Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (a + t * ab - p).norm()
}

/// Region in front of a robot starting at the origin and heading along `+x`.
pub fn default_bounds() -> Bounds {
    Bounds {
        x_min: -0.6,
        x_max: 6.0,
        y_min: -0.8,
        y_max: 0.8,
    }
}

/// Poisson-disk field by dart throwing: no two centers closer than `min_spacing`.
pub fn sparse_environment(seed: u64, bounds: Bounds, min_spacing: f64, radius: f64) -> Environment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = (bounds.x_max - bounds.x_min) * (bounds.y_max - bounds.y_min);
    let target = (area / (min_spacing * min_spacing)).ceil() as usize;
    let mut pts: Vec<Obstacle> = Vec::new();
    let mut misses = 0;
    while misses < 30 * target.max(1) {
        let x = rng.gen_range(bounds.x_min..bounds.x_max);
        let y = rng.gen_range(bounds.y_min..bounds.y_max);
        if pts.iter().all(|o| (o.x - x).hypot(o.y - y) >= min_spacing) {
            pts.push(Obstacle { x, y, r: radius });
            misses = 0;
        } else {
            misses += 1;
        }
    }
    Environment {
        obstacles: pts,
        walls: None,
        bounds: Some(bounds),
        mode: Some(EnvMode::Sparse),
        seed: Some(seed),
    }
}

/// Randomly shifted square lattice of posts with spacing `spacing`.
pub fn dense_environment(seed: u64, bounds: Bounds, spacing: f64, radius: f64) -> Environment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ox = rng.gen_range(0.0..spacing);
    let oy = rng.gen_range(0.0..spacing);
    let mut pts = Vec::new();
    let mut x = bounds.x_min + ox;
    while x <= bounds.x_max {
        let mut y = bounds.y_min + oy;
        while y <= bounds.y_max {
            pts.push(Obstacle { x, y, r: radius });
            y += spacing;
        }
        x += spacing;
    }
    Environment {
        obstacles: pts,
        walls: None,
        bounds: Some(bounds),
        mode: Some(EnvMode::Dense),
        seed: Some(seed),
    }
}

/// Posts at `(x0 + k spacing, y)` for `k = 0..count`.
pub fn obstacle_line(x0: f64, y: f64, spacing: f64, count: usize, radius: f64) -> Environment {
    Environment {
        obstacles: (0..count)
            .map(|k| Obstacle {
                x: x0 + k as f64 * spacing,
                y,
                r: radius,
            })
            .collect(),
        mode: Some(EnvMode::Custom),
        ..Environment::empty()
    }
}
