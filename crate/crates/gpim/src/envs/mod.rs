//! 2D environment family with perceptual relabeling.
//!
//! Each environment is a pure function of (state, action, rng stream): fixed
//! horizon, fixed initial state by default, positions clipped to bounds after
//! every step. The relabeling function maps a visited state to the goal an
//! agent would have to be conditioned on to reproduce it: identity coordinates
//! for the navigation family, descriptor bits for color-shape scenes, room
//! codes for the four-room grid, or a rasterized scene image when image goals
//! are enabled.

pub mod goal;
pub mod raster;

pub use goal::Goal;

use crate::error::{Error, Result};
use crate::rng::SplitRng;
use raster::{Canvas, AGENT, PALETTE, WALL};

/// Flat environment state; layout is kind-specific and documented on
/// [`EnvKind`].
pub type StateVec = Vec<f64>;

/// One logged interaction. `condition` is the flat encoding of whatever the
/// acting policy was conditioned on (a latent or a goal).
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    pub condition: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// State layouts:
/// - `Nav2dXy`, `Nav2dStochastic`, `ObstacleNav`, `MazeBottleneck`: `[x, y]`
/// - `Gridworld4`: `[col, row]` integer cell indices stored as floats
/// - `Archery`: `[x, y]` arrow position (origin before the shot)
/// - `Nav2dColorShape`: agent `[x, y]` then per object `[x, y, 4 descriptor bits]`
/// - `ObjectManip`: same layout with draggable blocks
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Archery,
    Gridworld4,
    Nav2dXy,
    Nav2dColorShape,
    ObjectManip,
    MazeBottleneck,
    ObstacleNav,
    Nav2dStochastic,
}

impl EnvKind {
    pub const ALL: [EnvKind; 8] = [
        EnvKind::Archery,
        EnvKind::Gridworld4,
        EnvKind::Nav2dXy,
        EnvKind::Nav2dColorShape,
        EnvKind::ObjectManip,
        EnvKind::MazeBottleneck,
        EnvKind::ObstacleNav,
        EnvKind::Nav2dStochastic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Archery => "archery",
            EnvKind::Gridworld4 => "gridworld4",
            EnvKind::Nav2dXy => "nav2d_xy",
            EnvKind::Nav2dColorShape => "nav2d_colorshape",
            EnvKind::ObjectManip => "object_manip",
            EnvKind::MazeBottleneck => "maze_bottleneck",
            EnvKind::ObstacleNav => "obstacle_nav",
            EnvKind::Nav2dStochastic => "nav2d_stochastic",
        }
    }

    pub fn from_name(name: &str) -> Result<EnvKind> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::ConfigGeneral(format!("unknown environment kind '{name}'")))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Color {
    Red,
    Blue,
    Green,
    Orange,
    Magenta,
}

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        PALETTE[self as usize]
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Square,
    Circle,
}

/// A colored object in a scene. Descriptor bits are a one-hot over the
/// environment's two colors followed by a one-hot over {square, circle}.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub x: f64,
    pub y: f64,
    pub color: Color,
    pub shape: Shape,
}

impl SceneObject {
    pub fn bits(&self, colors: &[Color; 2]) -> Vec<f64> {
        let ci = if self.color == colors[0] { 0 } else { 1 };
        let si = if self.shape == Shape::Square { 0 } else { 1 };
        let mut bits = vec![0.0; 4];
        bits[ci] = 1.0;
        bits[2 + si] = 1.0;
        bits
    }
}

/// Axis-aligned wall; points strictly inside are blocked.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ActionSpace {
    /// `n` labeled actions.
    Discrete(usize),
    /// `dim` components, each in [-1, 1].
    Continuous(usize),
}

impl ActionSpace {
    pub fn dim(self) -> usize {
        match self {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous(d) => d,
        }
    }

    pub fn sample(self, rng: &mut SplitRng) -> Action {
        match self {
            ActionSpace::Discrete(n) => Action::Discrete(rng.gen_range(n)),
            ActionSpace::Continuous(d) => {
                Action::Continuous((0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Shape of the goals an environment produces.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GoalKind {
    Coordinate(usize),
    OneHot(usize),
    Descriptor { bits: usize, coord: usize },
    Image { width: usize, height: usize },
}

impl GoalKind {
    pub fn dim(self) -> usize {
        match self {
            GoalKind::Coordinate(d) => d,
            GoalKind::OneHot(d) => d,
            GoalKind::Descriptor { bits, coord } => bits + coord,
            GoalKind::Image { width, height } => width * height * 3,
        }
    }
}

#[derive(Copy, Clone, Debug)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub goal: GoalKind,
    pub path_length: usize,
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// (xmin, xmax, ymin, ymax)
    pub bounds: (f64, f64, f64, f64),
    pub path_length: usize,
    /// Stochasticity knob: action-noise scale for `nav2d_stochastic`,
    /// mirror-shot probability switch (> 0 enables) for archery.
    pub delta: f64,
    /// World units moved per unit action component.
    pub step_scale: f64,
    /// Distance within which an object counts as touched or dragged.
    pub contact_radius: f64,
    pub walls: Vec<Rect>,
    /// When set, relabeling returns rasterized scene images instead of the
    /// kind's native goal encoding.
    pub image_goals: bool,
    pub image_size: (usize, usize),
    /// Optional initial-state set sampled uniformly at reset; empty means the
    /// kind's fixed default start.
    pub initial_states: Vec<Vec<f64>>,
    /// Archery target directions in radians over the half-disc.
    pub target_angles: Vec<f64>,
    /// The two colors descriptor bits can encode.
    pub colors: [Color; 2],
    pub objects: Vec<SceneObject>,
}

impl EnvConfig {
    pub fn defaults(kind: EnvKind) -> EnvConfig {
        let base = EnvConfig {
            kind,
            bounds: (0.0, 10.0, 0.0, 10.0),
            path_length: 20,
            delta: 0.0,
            step_scale: 0.5,
            contact_radius: 1.0,
            walls: Vec::new(),
            image_goals: false,
            image_size: (50, 50),
            initial_states: Vec::new(),
            target_angles: Vec::new(),
            colors: [Color::Red, Color::Blue],
            objects: Vec::new(),
        };
        match kind {
            EnvKind::Nav2dXy => EnvConfig {
                bounds: (-5.0, 5.0, -5.0, 5.0),
                ..base
            },
            EnvKind::Nav2dStochastic => EnvConfig {
                bounds: (-5.0, 5.0, -5.0, 5.0),
                delta: 0.5,
                ..base
            },
            EnvKind::ObstacleNav => EnvConfig {
                walls: vec![
                    Rect {
                        x0: 1.5,
                        x1: 4.5,
                        y0: 4.0,
                        y1: 10.0,
                    },
                    Rect {
                        x0: 5.5,
                        x1: 8.5,
                        y0: 0.0,
                        y1: 6.0,
                    },
                ],
                ..base
            },
            EnvKind::MazeBottleneck => EnvConfig {
                path_length: 30,
                step_scale: 0.6,
                walls: vec![Rect {
                    x0: 0.0,
                    x1: 8.0,
                    y0: 4.7,
                    y1: 5.3,
                }],
                ..base
            },
            EnvKind::Gridworld4 => EnvConfig {
                bounds: (0.0, 6.0, 0.0, 6.0),
                path_length: 8,
                ..base
            },
            EnvKind::Archery => EnvConfig {
                bounds: (-1.0, 1.0, 0.0, 1.0),
                path_length: 1,
                target_angles: vec![
                    std::f64::consts::PI / 6.0,
                    std::f64::consts::PI / 2.0,
                    5.0 * std::f64::consts::PI / 6.0,
                ],
                ..base
            },
            EnvKind::Nav2dColorShape => EnvConfig {
                objects: vec![
                    SceneObject {
                        x: 2.0,
                        y: 8.0,
                        color: Color::Red,
                        shape: Shape::Square,
                    },
                    SceneObject {
                        x: 8.0,
                        y: 8.0,
                        color: Color::Red,
                        shape: Shape::Circle,
                    },
                    SceneObject {
                        x: 5.0,
                        y: 2.0,
                        color: Color::Blue,
                        shape: Shape::Square,
                    },
                ],
                ..base
            },
            EnvKind::ObjectManip => EnvConfig {
                contact_radius: 0.5,
                colors: [Color::Green, Color::Red],
                objects: vec![
                    SceneObject {
                        x: 4.0,
                        y: 4.0,
                        color: Color::Green,
                        shape: Shape::Square,
                    },
                    SceneObject {
                        x: 6.0,
                        y: 6.0,
                        color: Color::Red,
                        shape: Shape::Circle,
                    },
                ],
                ..base
            },
        }
    }

    fn has_objects(&self) -> bool {
        matches!(self.kind, EnvKind::Nav2dColorShape | EnvKind::ObjectManip)
    }
}

pub struct EnvInstance {
    cfg: EnvConfig,
    rng: SplitRng,
    state: StateVec,
    t: usize,
}

impl EnvInstance {
    pub fn new(cfg: EnvConfig, rng: SplitRng) -> Result<EnvInstance> {
        if cfg.has_objects() && cfg.objects.is_empty() {
            return Err(Error::ConfigGeneral(format!(
                "{} requires at least one scene object",
                cfg.kind.name()
            )));
        }
        if cfg.kind == EnvKind::Archery && cfg.target_angles.is_empty() {
            return Err(Error::ConfigGeneral(
                "archery requires at least one target angle".into(),
            ));
        }
        let mut env = EnvInstance {
            cfg,
            rng,
            state: Vec::new(),
            t: 0,
        };
        env.reset(None)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn spec(&self) -> EnvSpec {
        let (w, h) = self.cfg.image_size;
        let native = match self.cfg.kind {
            EnvKind::Gridworld4 => GoalKind::OneHot(2),
            EnvKind::Nav2dColorShape => GoalKind::OneHot(4),
            EnvKind::ObjectManip => GoalKind::Descriptor { bits: 4, coord: 2 },
            _ => GoalKind::Coordinate(2),
        };
        EnvSpec {
            state_dim: self.state_dim(),
            action_space: self.action_space(),
            goal: if self.cfg.image_goals {
                GoalKind::Image {
                    width: w,
                    height: h,
                }
            } else {
                native
            },
            path_length: self.cfg.path_length,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self.cfg.kind {
            EnvKind::Gridworld4 => ActionSpace::Discrete(4),
            EnvKind::Archery => ActionSpace::Continuous(1),
            _ => ActionSpace::Continuous(2),
        }
    }

    /// Per-component range of the flattened goal space: arena bounds for
    /// coordinates, [0, 1] for descriptor bits and pixel channels.
    pub fn goal_bounds(&self) -> Vec<(f64, f64)> {
        let (xmin, xmax, ymin, ymax) = self.cfg.bounds;
        let coord = [(xmin, xmax), (ymin, ymax)];
        match self.spec().goal {
            GoalKind::Coordinate(d) => (0..d).map(|i| coord[i % 2]).collect(),
            GoalKind::OneHot(d) => vec![(0.0, 1.0); d],
            GoalKind::Descriptor { bits, coord: c } => {
                let mut out = vec![(0.0, 1.0); bits];
                out.extend((0..c).map(|i| coord[i % 2]));
                out
            }
            GoalKind::Image { width, height } => vec![(0.0, 1.0); width * height * 3],
        }
    }

    fn state_dim(&self) -> usize {
        match self.cfg.kind {
            EnvKind::Nav2dColorShape | EnvKind::ObjectManip => 2 + 6 * self.cfg.objects.len(),
            _ => 2,
        }
    }

    /// Start a new episode. `goal_context` is accepted only by kinds whose
    /// scene must contain an object matching the goal's descriptor; for those
    /// kinds the closest-matching scene slot is re-instantiated so the goal is
    /// realizable this episode.
    pub fn reset(&mut self, goal_context: Option<&Goal>) -> Result<StateVec> {
        self.t = 0;
        let mut objects = self.cfg.objects.clone();
        if let Some(goal) = goal_context {
            if !self.cfg.has_objects() {
                return Err(Error::ConfigGeneral(format!(
                    "{} does not take a goal context at reset",
                    self.cfg.kind.name()
                )));
            }
            let bits = match goal {
                Goal::OneHot(b) if b.len() == 4 => b.clone(),
                Goal::Descriptor { bits, .. } if bits.len() == 4 => bits.clone(),
                _ => {
                    return Err(Error::ConfigGeneral(
                        "goal context must carry a 4-bit color-shape descriptor".into(),
                    ))
                }
            };
            if !objects.iter().any(|o| o.bits(&self.cfg.colors) == bits) {
                // Re-instantiate the last slot with the requested descriptor,
                // keeping its position.
                let colors = self.cfg.colors;
                let slot = objects
                    .last_mut()
                    .expect("non-empty checked at construction");
                slot.color = if bits[0] == 1.0 { colors[0] } else { colors[1] };
                slot.shape = if bits[2] == 1.0 {
                    Shape::Square
                } else {
                    Shape::Circle
                };
            }
        }

        let agent = if !self.cfg.initial_states.is_empty() {
            let i = self.rng.gen_range(self.cfg.initial_states.len());
            self.cfg.initial_states[i].clone()
        } else {
            match self.cfg.kind {
                EnvKind::Nav2dXy | EnvKind::Nav2dStochastic | EnvKind::Archery => vec![0.0, 0.0],
                EnvKind::ObstacleNav | EnvKind::MazeBottleneck => vec![5.0, 2.0],
                EnvKind::Gridworld4 => vec![3.0, 3.0],
                EnvKind::Nav2dColorShape | EnvKind::ObjectManip => vec![5.0, 5.0],
            }
        };
        if agent.len() != 2 {
            return Err(Error::ConfigGeneral(
                "initial states must be 2-dimensional".into(),
            ));
        }

        let mut state = agent;
        if self.cfg.has_objects() {
            for o in &objects {
                state.push(o.x);
                state.push(o.y);
                state.extend(o.bits(&self.cfg.colors));
            }
        }
        self.state = state;
        Ok(self.state.clone())
    }

    fn clip(&self, x: f64, y: f64) -> (f64, f64) {
        let (xmin, xmax, ymin, ymax) = self.cfg.bounds;
        (x.clamp(xmin, xmax), y.clamp(ymin, ymax))
    }

    fn blocked(&self, x: f64, y: f64) -> bool {
        self.cfg.walls.iter().any(|w| w.contains(x, y))
    }

    /// Axis-separated move with wall sliding: each axis advances only if the
    /// resulting point is not inside a wall.
    fn slide(&self, x: f64, y: f64, dx: f64, dy: f64) -> (f64, f64) {
        let (mut px, mut py) = (x, y);
        let (nx, _) = self.clip(px + dx, py);
        if !self.blocked(nx, py) {
            px = nx;
        }
        let (_, ny) = self.clip(px, py + dy);
        if !self.blocked(px, ny) {
            py = ny;
        }
        (px, py)
    }

    fn continuous(action: &Action, dim: usize) -> Result<Vec<f64>> {
        match action {
            Action::Continuous(a) if a.len() == dim => {
                Ok(a.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
            }
            Action::Continuous(a) => Err(Error::shape(&[dim], &[a.len()], "action width")),
            Action::Discrete(_) => Err(Error::contract(
                "discrete action sent to a continuous environment",
            )),
        }
    }

    /// Advance one step. Returns the next state and whether the fixed horizon
    /// was reached.
    pub fn step(&mut self, action: &Action) -> Result<(StateVec, bool)> {
        if self.t >= self.cfg.path_length {
            return Err(Error::contract("episode already finished; call reset"));
        }
        match self.cfg.kind {
            EnvKind::Gridworld4 => {
                let idx = match action {
                    Action::Discrete(i) if *i < 4 => *i,
                    Action::Discrete(i) => {
                        return Err(Error::contract(format!(
                            "action index {i} out of range 0..4"
                        )))
                    }
                    Action::Continuous(_) => {
                        return Err(Error::contract(
                            "continuous action sent to a discrete environment",
                        ))
                    }
                };
                let (dx, dy) = [(0.0, 1.0), (0.0, -1.0), (-1.0, 0.0), (1.0, 0.0)][idx];
                let (x, y) = self.clip(self.state[0] + dx, self.state[1] + dy);
                if !self.blocked(x, y) {
                    self.state[0] = x;
                    self.state[1] = y;
                }
            }
            EnvKind::Archery => {
                let a = Self::continuous(action, 1)?[0];
                let mut theta = (a + 1.0) / 2.0 * std::f64::consts::PI;
                if self.cfg.delta > 0.0 && self.rng.next_f64() < 0.5 {
                    theta = std::f64::consts::PI - theta;
                }
                // Landing on the unit arc, snapped to the nearest target.
                let snapped = self
                    .cfg
                    .target_angles
                    .iter()
                    .copied()
                    .min_by(|p, q| (p - theta).abs().partial_cmp(&(q - theta).abs()).unwrap())
                    .expect("non-empty checked at construction");
                self.state[0] = snapped.cos();
                self.state[1] = snapped.sin();
            }
            _ => {
                let a = Self::continuous(action, 2)?;
                let mut dx = a[0] * self.cfg.step_scale;
                let mut dy = a[1] * self.cfg.step_scale;
                if self.cfg.kind == EnvKind::Nav2dStochastic && self.cfg.delta > 0.0 {
                    dx += self.rng.uniform(-1.0, 1.0) * self.cfg.delta * self.cfg.step_scale;
                    dy += self.rng.uniform(-1.0, 1.0) * self.cfg.delta * self.cfg.step_scale;
                }
                let (ax, ay) = (self.state[0], self.state[1]);
                let (nx, ny) = self.slide(ax, ay, dx, dy);
                if self.cfg.kind == EnvKind::ObjectManip {
                    let r = self.cfg.contact_radius;
                    for i in 0..self.cfg.objects.len() {
                        let base = 2 + 6 * i;
                        let (ox, oy) = (self.state[base], self.state[base + 1]);
                        if (ox - ax).hypot(oy - ay) <= r {
                            let (cx, cy) = self.clip(ox + (nx - ax), oy + (ny - ay));
                            self.state[base] = cx;
                            self.state[base + 1] = cy;
                        }
                    }
                }
                self.state[0] = nx;
                self.state[1] = ny;
            }
        }
        self.t += 1;
        Ok((self.state.clone(), self.t == self.cfg.path_length))
    }

    /// Nearest scene object (index, distance) to the agent position in
    /// `state`.
    fn nearest_object(&self, state: &[f64]) -> Option<(usize, f64)> {
        (0..self.cfg.objects.len())
            .map(|i| {
                let base = 2 + 6 * i;
                let d = (state[base] - state[0]).hypot(state[base + 1] - state[1]);
                (i, d)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }

    /// The perceptual relabeling f: which goal this state realizes.
    pub fn relabel(&self, state: &[f64]) -> Result<Goal> {
        if state.len() != self.state_dim() {
            return Err(Error::shape(
                &[self.state_dim()],
                &[state.len()],
                "relabel state",
            ));
        }
        if self.cfg.image_goals {
            return self.rasterize(state);
        }
        match self.cfg.kind {
            EnvKind::Gridworld4 => {
                let (x, y) = (state[0], state[1]);
                if x == 3.0 || y == 3.0 {
                    return Err(Error::Unlabelable); // hallway, no room color
                }
                let code = match (x < 3.0, y > 3.0) {
                    (true, true) => [1.0, 0.0],   // blue
                    (false, true) => [0.0, 0.0],  // green
                    (true, false) => [0.0, 1.0],  // orange
                    (false, false) => [1.0, 1.0], // magenta
                };
                Ok(Goal::OneHot(code.to_vec()))
            }
            EnvKind::Nav2dColorShape => match self.nearest_object(state) {
                Some((i, d)) if d <= self.cfg.contact_radius => {
                    let base = 2 + 6 * i;
                    Ok(Goal::OneHot(state[base + 2..base + 6].to_vec()))
                }
                _ => Err(Error::Unlabelable),
            },
            EnvKind::ObjectManip => match self.nearest_object(state) {
                Some((i, d)) if d <= self.cfg.contact_radius => {
                    let base = 2 + 6 * i;
                    Ok(Goal::Descriptor {
                        bits: state[base + 2..base + 6].to_vec(),
                        coord: state[base..base + 2].to_vec(),
                    })
                }
                _ => Err(Error::Unlabelable),
            },
            _ => Ok(Goal::Coordinate(state[..2].to_vec())),
        }
    }

    /// Deterministic image of the scene at `state`.
    pub fn rasterize(&self, state: &[f64]) -> Result<Goal> {
        if state.len() != self.state_dim() {
            return Err(Error::shape(
                &[self.state_dim()],
                &[state.len()],
                "rasterize state",
            ));
        }
        let (w, h) = self.cfg.image_size;
        let (xmin, xmax, ymin, ymax) = self.cfg.bounds;
        let mut canvas = Canvas::new(w, h, (xmin, xmax, ymin, ymax));
        let unit = (xmax - xmin).min(ymax - ymin) / 20.0;

        if self.cfg.kind == EnvKind::Gridworld4 {
            // Quadrant room colors; the middle row/column stays background.
            canvas.fill_rect(xmin, 2.5, 3.5, ymax, Color::Blue.rgb());
            canvas.fill_rect(3.5, xmax, 3.5, ymax, Color::Green.rgb());
            canvas.fill_rect(xmin, 2.5, ymin, 2.5, Color::Orange.rgb());
            canvas.fill_rect(3.5, xmax, ymin, 2.5, Color::Magenta.rgb());
        }
        for wall in &self.cfg.walls {
            canvas.fill_rect(wall.x0, wall.x1, wall.y0, wall.y1, WALL);
        }
        if self.cfg.kind == EnvKind::Archery {
            for (i, &angle) in self.cfg.target_angles.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                canvas.fill_circle(angle.cos(), angle.sin(), unit, color);
            }
        }
        if self.cfg.has_objects() {
            for i in 0..self.cfg.objects.len() {
                let base = 2 + 6 * i;
                let color = if state[base + 2] == 1.0 {
                    self.cfg.colors[0].rgb()
                } else {
                    self.cfg.colors[1].rgb()
                };
                if state[base + 4] == 1.0 {
                    canvas.fill_square(state[base], state[base + 1], unit, color);
                } else {
                    canvas.fill_circle(state[base], state[base + 1], unit, color);
                }
            }
        }
        canvas.fill_circle(state[0], state[1], unit * 0.75, AGENT);
        Ok(Goal::Image {
            width: w,
            height: h,
            pixels: canvas.pixels,
        })
    }

    /// RNG stream position, for checkpointing.
    pub fn rng_state(&self) -> (u64, u64, u128) {
        self.rng.state()
    }

    pub fn restore_rng(&mut self, seed: u64, stream: u64, word_pos: u128) {
        self.rng = SplitRng::restore(seed, stream, word_pos);
    }

    /// Overwrite the current state vector, e.g. when restoring a checkpoint.
    /// The next `reset` rebuilds the episode scene as usual.
    pub fn restore_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::shape(
                &[self.state.len()],
                &[state.len()],
                "restored state",
            ));
        }
        self.state = state.to_vec();
        Ok(())
    }
}
