use crate::error::{Error, Result};

/// Rectangular factory hall with a regular BS grid on the ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyConfig {
    /// Hall length along x (m).
    pub length: f64,
    /// Hall width along y (m).
    pub width: f64,
    pub height: f64,
    /// Inter-BS spacing (m).
    pub bs_spacing: f64,
    pub bs_height: f64,
    pub ue_height: f64,
    pub n_bs: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            length: 120.0,
            width: 60.0,
            height: 10.0,
            bs_spacing: 20.0,
            bs_height: 8.0,
            ue_height: 1.5,
            n_bs: 18,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.length, self.width, self.height, self.bs_spacing, self.bs_height, self.ue_height]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("topology values must be finite"));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::config("hall dimensions must be positive"));
        }
        if self.bs_spacing <= 0.0 {
            return Err(Error::config("bs_spacing must be positive"));
        }
        if self.bs_height >= self.height {
            return Err(Error::config("bs_height must be below the ceiling"));
        }
        if self.ue_height <= 0.0 || self.ue_height >= self.bs_height {
            return Err(Error::config("ue_height must lie between the floor and bs_height"));
        }
        if self.n_bs == 0 || self.n_bs > 32 {
            return Err(Error::config("n_bs must be in 1..=32"));
        }
        Ok(())
    }

    /// Volume-to-surface ratio of the hall, used by the delay-spread law.
    pub fn volume_to_surface(&self) -> f64 {
        let (l, w, h) = (self.length, self.width, self.height);
        (l * w * h) / (2.0 * (l * w + l * h + w * h))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.length).contains(&x) && (0.0..=self.width).contains(&y)
    }
}

/// 3-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Lays the BS out on a grid with `bs_spacing` pitch, centered in the hall.
///
/// Ordering is x-fastest: index `i` sits in column `i % nx`, row `i / nx`.
/// For the default hall this is a 6 x 3 grid inset 10 m from every wall.
pub fn build_topology(cfg: &TopologyConfig) -> Result<Vec<Point3>> {
    cfg.validate()?;
    let nx = (cfg.length / cfg.bs_spacing + 1e-9).floor() as usize;
    let ny = (cfg.width / cfg.bs_spacing + 1e-9).floor() as usize;
    if nx * ny < cfg.n_bs {
        return Err(Error::config(format!(
            "{} BS at {} m spacing do not fit in {} x {} m ({} x {} slots)",
            cfg.n_bs, cfg.bs_spacing, cfg.length, cfg.width, nx, ny
        )));
    }
    let x0 = (cfg.length - (nx as f64 - 1.0) * cfg.bs_spacing) / 2.0;
    let y0 = (cfg.width - (ny as f64 - 1.0) * cfg.bs_spacing) / 2.0;
    Ok((0..cfg.n_bs)
        .map(|i| Point3 {
            x: x0 + (i % nx) as f64 * cfg.bs_spacing,
            y: y0 + (i / nx) as f64 * cfg.bs_spacing,
            z: cfg.bs_height,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hall_has_eighteen_bs_inset_ten_meters() {
        let bs = build_topology(&TopologyConfig::default()).unwrap();
        assert_eq!(bs.len(), 18);
        assert_eq!(bs[0], Point3 { x: 10.0, y: 10.0, z: 8.0 });
        assert_eq!(bs[1].x - bs[0].x, 20.0);
        assert_eq!(bs[6].y - bs[0].y, 20.0);
        assert_eq!(bs[17], Point3 { x: 110.0, y: 50.0, z: 8.0 });
        for p in &bs {
            assert!(p.x > 0.0 && p.x < 120.0 && p.y > 0.0 && p.y < 60.0);
        }
    }

    #[test]
    fn rejects_grid_that_does_not_fit() {
        let cfg = TopologyConfig { bs_spacing: 30.0, ..Default::default() };
        assert!(build_topology(&cfg).is_err());
        let cfg = TopologyConfig { bs_height: 12.0, ..Default::default() };
        assert!(build_topology(&cfg).is_err());
    }

    #[test]
    fn volume_to_surface_of_default_hall() {
        assert!((TopologyConfig::default().volume_to_surface() - 4.0).abs() < 1e-12);
    }
}
