//! Configuration spaces, workspace obstacles and the instrumented collision
//! oracle.
//!
//! Two world families are supported: a point robot moving in an
//! axis-aligned box (`PointWorld`), and a planar serial-link arm whose links
//! are line segments tested against rectangular workspace obstacles
//! (`ArmWorld`). Every collision query goes through a [`CollisionCounter`] so
//! planners can be compared by the number of checks they spend.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box obstacle given by its center and half-extents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vec<f64>,
    pub half_extent: Vec<f64>,
}

impl BoxObstacle {
    pub fn new(center: Vec<f64>, half_extent: Vec<f64>) -> Result<Self> {
        if center.len() != half_extent.len() {
            return Err(Error::Input(format!(
                "obstacle center dim {} != half_extent dim {}",
                center.len(),
                half_extent.len()
            )));
        }
        if half_extent.iter().any(|&h| h <= 0.0) {
            return Err(Error::Input("obstacle half extents must be positive".into()));
        }
        Ok(Self { center, half_extent })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-box membership: boundary contact counts as inside.
    pub fn contains(&self, p: &[f64]) -> bool {
        self.center
            .iter()
            .zip(&self.half_extent)
            .zip(p)
            .all(|((&c, &h), &x)| (x - c).abs() <= h)
    }

    pub fn min_corner(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.half_extent)
            .map(|(c, h)| c - h)
            .collect()
    }

    pub fn max_corner(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.half_extent)
            .map(|(c, h)| c + h)
            .collect()
    }

    /// Segment-vs-box test via the slab method on the closed box.
    pub fn intersects_segment(&self, a: &[f64], b: &[f64]) -> bool {
        let mut t_min = 0.0_f64;
        let mut t_max = 1.0_f64;
        for k in 0..self.dim() {
            let lo = self.center[k] - self.half_extent[k];
            let hi = self.center[k] + self.half_extent[k];
            let d = b[k] - a[k];
            if d.abs() < 1e-300 {
                if a[k] < lo || a[k] > hi {
                    return false;
                }
            } else {
                let mut t0 = (lo - a[k]) / d;
                let mut t1 = (hi - a[k]) / d;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_min = t_min.max(t0);
                t_max = t_max.min(t1);
                if t_min > t_max {
                    return false;
                }
            }
        }
        true
    }
}

/// World description: the state space, its obstacles and the map from a
/// state to workspace geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorldModel {
    Point {
        dim: usize,
        /// Per-axis [lower, upper] bounds of the state space.
        bounds: Vec<[f64; 2]>,
        obstacles: Vec<BoxObstacle>,
    },
    Arm {
        link_lengths: Vec<f64>,
        /// Per-joint [lower, upper] limits in radians.
        joint_limits: Vec<[f64; 2]>,
        base: [f64; 2],
        obstacles: Vec<BoxObstacle>,
    },
}

impl WorldModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            WorldModel::Point { dim, bounds, obstacles } => {
                if *dim == 0 || bounds.len() != *dim {
                    return Err(Error::Input("point world bounds must match dim".into()));
                }
                if bounds.iter().any(|b| b[0] >= b[1]) {
                    return Err(Error::Input("empty state-space bounds".into()));
                }
                for o in obstacles {
                    if o.dim() != *dim {
                        return Err(Error::Input("obstacle dim != world dim".into()));
                    }
                }
            }
            WorldModel::Arm { link_lengths, joint_limits, obstacles, .. } => {
                if link_lengths.is_empty() || link_lengths.len() != joint_limits.len() {
                    return Err(Error::Input("arm links and joint limits must match".into()));
                }
                if link_lengths.iter().any(|&l| l <= 0.0) {
                    return Err(Error::Input("link lengths must be positive".into()));
                }
                if joint_limits.iter().any(|j| j[0] >= j[1]) {
                    return Err(Error::Input("empty joint interval".into()));
                }
                for o in obstacles {
                    if o.dim() != 2 {
                        return Err(Error::Input("arm obstacles must be 2D".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Dimension of the state space (joint count for arms).
    pub fn state_dim(&self) -> usize {
        match self {
            WorldModel::Point { dim, .. } => *dim,
            WorldModel::Arm { link_lengths, .. } => link_lengths.len(),
        }
    }

    /// Per-axis state-space bounds (joint limits for arms).
    pub fn state_bounds(&self) -> Vec<[f64; 2]> {
        match self {
            WorldModel::Point { bounds, .. } => bounds.clone(),
            WorldModel::Arm { joint_limits, .. } => joint_limits.clone(),
        }
    }

    /// Workspace dimension: where the obstacles live (2 for arms).
    pub fn workspace_dim(&self) -> usize {
        match self {
            WorldModel::Point { dim, .. } => *dim,
            WorldModel::Arm { .. } => 2,
        }
    }

    /// Bounding box of the workspace; the occupancy grid covers this exactly.
    /// For arms it is the reachable square around the base.
    pub fn workspace_bounds(&self) -> Vec<[f64; 2]> {
        match self {
            WorldModel::Point { bounds, .. } => bounds.clone(),
            WorldModel::Arm { link_lengths, base, .. } => {
                let reach: f64 = link_lengths.iter().sum();
                vec![
                    [base[0] - reach, base[0] + reach],
                    [base[1] - reach, base[1] + reach],
                ]
            }
        }
    }

    pub fn obstacles(&self) -> &[BoxObstacle] {
        match self {
            WorldModel::Point { obstacles, .. } | WorldModel::Arm { obstacles, .. } => obstacles,
        }
    }

    pub fn obstacles_mut(&mut self) -> &mut Vec<BoxObstacle> {
        match self {
            WorldModel::Point { obstacles, .. } | WorldModel::Arm { obstacles, .. } => obstacles,
        }
    }

    /// Euclidean length of the state-space diagonal; the default edge-check
    /// resolution is a fraction of this.
    pub fn state_diagonal(&self) -> f64 {
        self.state_bounds()
            .iter()
            .map(|b| (b[1] - b[0]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check_state_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Input(format!(
                "state dim {} != world state dim {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }
}

/// One planning problem: a world plus start, goal and goal tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub world: WorldModel,
    pub x_init: Vec<f64>,
    pub x_goal: Vec<f64>,
    pub goal_radius: f64,
}

/// Per-trial tally of collision queries. One `edge_checks` unit is one
/// segment query regardless of interpolation density; `point_checks` counts
/// individual state queries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionCounter {
    pub edge_checks: u64,
    pub point_checks: u64,
}

impl CollisionCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn read(&self) -> (u64, u64) {
        (self.edge_checks, self.point_checks)
    }
}

/// Forward kinematics of the planar arm: one segment per link, angles
/// accumulate from the base.
pub fn fk_links(link_lengths: &[f64], base: [f64; 2], q: &[f64]) -> Result<Vec<[[f64; 2]; 2]>> {
    if q.len() != link_lengths.len() {
        return Err(Error::Input(format!(
            "joint vector len {} != link count {}",
            q.len(),
            link_lengths.len()
        )));
    }
    let mut segments = Vec::with_capacity(q.len());
    let mut pos = base;
    let mut theta = 0.0;
    for (len, angle) in link_lengths.iter().zip(q) {
        theta += angle;
        let next = [pos[0] + len * theta.cos(), pos[1] + len * theta.sin()];
        segments.push([pos, next]);
        pos = next;
    }
    Ok(segments)
}

/// Membership test in the obstacle space. Increments `point_checks` once.
pub fn point_in_collision(
    world: &WorldModel,
    x: &[f64],
    counter: &mut CollisionCounter,
) -> Result<bool> {
    world.check_state_dim(x)?;
    counter.point_checks += 1;
    match world {
        WorldModel::Point { obstacles, .. } => Ok(obstacles.iter().any(|o| o.contains(x))),
        WorldModel::Arm { link_lengths, base, obstacles, .. } => {
            let segments = fk_links(link_lengths, *base, x)?;
            Ok(segments.iter().any(|s| {
                obstacles.iter().any(|o| o.intersects_segment(&s[0], &s[1]))
            }))
        }
    }
}

/// Feasibility of the straight segment from `a` to `b`, discretized at
/// `resolution`. Increments `edge_checks` once; `point_checks` once per
/// interpolated sample.
pub fn segment_free(
    world: &WorldModel,
    a: &[f64],
    b: &[f64],
    resolution: f64,
    counter: &mut CollisionCounter,
) -> Result<bool> {
    world.check_state_dim(a)?;
    world.check_state_dim(b)?;
    if resolution <= 0.0 {
        return Err(Error::Input("resolution must be positive".into()));
    }
    counter.edge_checks += 1;
    let dist = euclidean(a, b);
    let steps = (dist / resolution).ceil() as usize;
    let mut x = vec![0.0; a.len()];
    for s in 0..=steps {
        let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
        for (k, xv) in x.iter_mut().enumerate() {
            *xv = a[k] + t * (b[k] - a[k]);
        }
        if point_in_collision(world, &x, counter)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Binary occupancy grid of the workspace bounding box: `m` cells per axis,
/// a cell is 1 iff its interior intersects an obstacle's interior.
pub fn occupancy_grid(world: &WorldModel, m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::Input("grid resolution m must be >= 2".into()));
    }
    let bounds = world.workspace_bounds();
    let w = bounds.len();
    let total = m.pow(w as u32);
    let mut grid = vec![0.0; total];
    let cell_size: Vec<f64> = bounds.iter().map(|b| (b[1] - b[0]) / m as f64).collect();
    let obstacles = world.obstacles();
    for (idx, cell) in grid.iter_mut().enumerate() {
        // row-major: last axis fastest
        let mut rem = idx;
        let mut cell_min = vec![0.0; w];
        let mut cell_max = vec![0.0; w];
        for axis in (0..w).rev() {
            let i = rem % m;
            rem /= m;
            cell_min[axis] = bounds[axis][0] + i as f64 * cell_size[axis];
            cell_max[axis] = bounds[axis][0] + (i + 1) as f64 * cell_size[axis];
        }
        let hit = obstacles.iter().any(|o| {
            (0..w).all(|k| {
                let lo = o.center[k] - o.half_extent[k];
                let hi = o.center[k] + o.half_extent[k];
                lo < cell_max[k] && hi > cell_min[k]
            })
        });
        if hit {
            *cell = 1.0;
        }
    }
    Ok(grid)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Serialize a world description to the on-disk JSON schema.
pub fn serialize_world(world: &WorldModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(world)?)
}

/// Parse a world description; `parse(serialize(w)) == w` bit-exactly.
pub fn parse_world(text: &str) -> Result<WorldModel> {
    let world: WorldModel = serde_json::from_str(text)?;
    world.validate()?;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box_world() -> WorldModel {
        WorldModel::Point {
            dim: 2,
            bounds: vec![[-5.0, 5.0], [-5.0, 5.0]],
            obstacles: vec![BoxObstacle::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()],
        }
    }

    #[test]
    fn point_collision_inside_and_outside() {
        let world = unit_box_world();
        let mut c = CollisionCounter::new();
        assert!(point_in_collision(&world, &[0.0, 0.0], &mut c).unwrap());
        assert!(!point_in_collision(&world, &[5.0, 5.0], &mut c).unwrap());
        assert_eq!(c.read(), (0, 2));
    }

    #[test]
    fn point_collision_dim_mismatch() {
        let world = unit_box_world();
        let mut c = CollisionCounter::new();
        assert!(point_in_collision(&world, &[0.0], &mut c).is_err());
    }

    #[test]
    fn fk_zero_angles() {
        let segs = fk_links(&[1.0, 1.0], [0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(segs, vec![[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]]]);
    }

    #[test]
    fn fk_quarter_turn() {
        let segs = fk_links(&[1.0, 1.0], [0.0, 0.0], &[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        let tip = segs[1][1];
        assert!((tip[0]).abs() < 1e-12);
        assert!((tip[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fk_cumulative_angles() {
        let q = [std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4];
        let segs = fk_links(&[1.0, 1.0], [0.0, 0.0], &q).unwrap();
        let tip = segs[1][1];
        let s2 = 2.0_f64.sqrt() / 2.0;
        assert!((tip[0] - s2).abs() < 1e-12);
        assert!((tip[1] - (s2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fk_length_mismatch() {
        assert!(fk_links(&[1.0, 1.0], [0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn arm_collision_matches_dense_sampling_oracle() {
        let world = WorldModel::Arm {
            link_lengths: vec![1.0, 1.0],
            joint_limits: vec![[-std::f64::consts::PI, std::f64::consts::PI]; 2],
            base: [0.0, 0.0],
            obstacles: vec![BoxObstacle::new(vec![1.5, 0.0], vec![0.1, 0.1]).unwrap()],
        };
        let mut c = CollisionCounter::new();
        // arm along +x passes through the obstacle
        assert!(point_in_collision(&world, &[0.0, 0.0], &mut c).unwrap());
        // dense-sampling oracle agreement over random configurations
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut agree = 0;
        let trials = 2000;
        for _ in 0..trials {
            let q = [
                (next() * 2.0 - 1.0) * std::f64::consts::PI,
                (next() * 2.0 - 1.0) * std::f64::consts::PI,
            ];
            let exact = point_in_collision(&world, &q, &mut c).unwrap();
            let segs = fk_links(&[1.0, 1.0], [0.0, 0.0], &q).unwrap();
            let sampled = segs.iter().any(|s| {
                (0..=1000).any(|i| {
                    let t = i as f64 / 1000.0;
                    let p = [
                        s[0][0] + t * (s[1][0] - s[0][0]),
                        s[0][1] + t * (s[1][1] - s[0][1]),
                    ];
                    world.obstacles()[0].contains(&p)
                })
            });
            if exact == sampled {
                agree += 1;
            }
        }
        assert!(agree as f64 / trials as f64 >= 0.99, "agreement {agree}/{trials}");
    }

    #[test]
    fn segment_through_box_blocked() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[-5.0, 5.0], [-5.0, 5.0]],
            obstacles: vec![BoxObstacle::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap()],
        };
        let mut c = CollisionCounter::new();
        assert!(!segment_free(&world, &[-1.0, 0.0], &[1.0, 0.0], 0.01, &mut c).unwrap());
        assert_eq!(c.edge_checks, 1);
    }

    #[test]
    fn segment_clearing_box_free() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[-5.0, 5.0], [-5.0, 5.0]],
            obstacles: vec![BoxObstacle::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap()],
        };
        let mut c = CollisionCounter::new();
        // min distance from the segment y=1 to the box is 0.5
        assert!(segment_free(&world, &[-1.0, 1.0], &[1.0, 1.0], 0.001, &mut c).unwrap());
    }

    #[test]
    fn segment_empty_world_free() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        let mut c = CollisionCounter::new();
        assert!(segment_free(&world, &[0.1, 0.1], &[0.9, 0.9], 0.01, &mut c).unwrap());
    }

    #[test]
    fn counter_semantics() {
        let world = unit_box_world();
        let mut c = CollisionCounter::new();
        assert_eq!(c.read(), (0, 0));
        for n in 1..=5u64 {
            segment_free(&world, &[2.0, 2.0], &[3.0, 3.0], 0.1, &mut c).unwrap();
            assert_eq!(c.edge_checks, n);
        }
        c.reset();
        assert_eq!(c.read(), (0, 0));
    }

    #[test]
    fn occupancy_grid_empty_and_full() {
        let empty = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        assert!(occupancy_grid(&empty, 4).unwrap().iter().all(|&v| v == 0.0));
        let full = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![BoxObstacle::new(vec![0.5, 0.5], vec![0.6, 0.6]).unwrap()],
        };
        assert!(occupancy_grid(&full, 4).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn occupancy_grid_left_half() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![BoxObstacle::new(vec![0.25, 0.5], vec![0.25, 0.5]).unwrap()],
        };
        let grid = occupancy_grid(&world, 4).unwrap();
        let mut ones = 0;
        for i in 0..4 {
            for j in 0..4 {
                let v = grid[i * 4 + j];
                // axis 0 is x; obstacle spans x in [0, 0.5] = first two rows of axis 0
                let expect = if i < 2 { 1.0 } else { 0.0 };
                assert_eq!(v, expect, "cell ({i},{j})");
                ones += v as usize;
            }
        }
        assert_eq!(ones, 8);
    }

    #[test]
    fn occupancy_grid_monotone_under_added_obstacle() {
        let mut world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![BoxObstacle::new(vec![0.2, 0.2], vec![0.1, 0.1]).unwrap()],
        };
        let before = occupancy_grid(&world, 8).unwrap();
        world
            .obstacles_mut()
            .push(BoxObstacle::new(vec![0.7, 0.7], vec![0.15, 0.15]).unwrap());
        let after = occupancy_grid(&world, 8).unwrap();
        for (b, a) in before.iter().zip(&after) {
            assert!(a >= b);
        }
    }

    #[test]
    fn world_file_round_trip() {
        let world = WorldModel::Arm {
            link_lengths: vec![0.5; 7],
            joint_limits: vec![[-std::f64::consts::PI, std::f64::consts::PI]; 7],
            base: [0.0, 0.0],
            obstacles: vec![BoxObstacle::new(vec![1.0, 0.3], vec![0.2, 0.4]).unwrap()],
        };
        let text = serialize_world(&world).unwrap();
        assert_eq!(parse_world(&text).unwrap(), world);
    }

    proptest! {
        #[test]
        fn segment_free_symmetric(ax in -4.0..4.0f64, ay in -4.0..4.0f64,
                                  bx in -4.0..4.0f64, by in -4.0..4.0f64) {
            let world = unit_box_world();
            let mut c = CollisionCounter::new();
            let fwd = segment_free(&world, &[ax, ay], &[bx, by], 0.05, &mut c).unwrap();
            let rev = segment_free(&world, &[bx, by], &[ax, ay], 0.05, &mut c).unwrap();
            prop_assert_eq!(fwd, rev);
        }

        #[test]
        fn degenerate_segment_matches_point(ax in -4.0..4.0f64, ay in -4.0..4.0f64) {
            let world = unit_box_world();
            let mut c = CollisionCounter::new();
            let seg = segment_free(&world, &[ax, ay], &[ax, ay], 0.05, &mut c).unwrap();
            let pt = point_in_collision(&world, &[ax, ay], &mut c).unwrap();
            prop_assert_eq!(seg, !pt);
        }
    }
}
