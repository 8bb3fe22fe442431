//! Controlled Markov processes used for training and verification.
//!
//! Two families are provided: 4-connected gridworlds (enumerable, with walls
//! and one-way doors) and a point mass confined to an ellipse (continuous).
//! All dynamics are deterministic.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Skill;

/// Grid cell as `(x, y)`; `y = 0` is the top row of an ASCII map.
pub type Cell = (usize, usize);

pub const GRID_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridMove {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl GridMove {
    pub const ALL: [GridMove; GRID_ACTIONS] = [
        GridMove::Up,
        GridMove::Down,
        GridMove::Left,
        GridMove::Right,
        GridMove::Stay,
    ];

    pub fn from_index(i: usize) -> Option<GridMove> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            GridMove::Up => (0, -1),
            GridMove::Down => (0, 1),
            GridMove::Left => (-1, 0),
            GridMove::Right => (1, 0),
            GridMove::Stay => (0, 0),
        }
    }

    fn glyph(self) -> char {
        match self {
            GridMove::Up => '^',
            GridMove::Down => 'v',
            GridMove::Left => '<',
            GridMove::Right => '>',
            GridMove::Stay => '.',
        }
    }

    fn from_glyph(c: char) -> Option<GridMove> {
        match c {
            '^' => Some(GridMove::Up),
            'v' => Some(GridMove::Down),
            '<' => Some(GridMove::Left),
            '>' => Some(GridMove::Right),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    walls: BTreeSet<Cell>,
    /// `(from, to)`: the edge between the two cells may only be crossed from `from` to `to`.
    doors: BTreeSet<(Cell, Cell)>,
    start: Cell,
    free: Vec<Cell>,
    index: Vec<Option<usize>>,
}

impl GridWorld {
    /// Builds a grid with the start at the center cell.
    pub fn new(
        width: usize,
        height: usize,
        walls: impl IntoIterator<Item = Cell>,
        one_way_doors: impl IntoIterator<Item = (Cell, Cell)>,
    ) -> Result<Self> {
        Self::with_start(
            width,
            height,
            walls,
            one_way_doors,
            ((width.max(1) - 1) / 2, (height.max(1) - 1) / 2),
        )
    }

    pub fn with_start(
        width: usize,
        height: usize,
        walls: impl IntoIterator<Item = Cell>,
        one_way_doors: impl IntoIterator<Item = (Cell, Cell)>,
        start: Cell,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width * height < 2 {
            return Err(Error::InvalidEnv(format!(
                "grid {width}x{height} must contain at least two cells"
            )));
        }
        let walls: BTreeSet<Cell> = walls.into_iter().collect();
        let doors: BTreeSet<(Cell, Cell)> = one_way_doors.into_iter().collect();
        let in_bounds = |c: Cell| c.0 < width && c.1 < height;
        if !in_bounds(start) {
            return Err(Error::InvalidEnv(format!("start {start:?} outside the grid")));
        }
        if walls.contains(&start) {
            return Err(Error::InvalidEnv(format!("wall covers the start cell {start:?}")));
        }
        for w in &walls {
            if !in_bounds(*w) {
                return Err(Error::InvalidEnv(format!("wall {w:?} outside the grid")));
            }
        }
        for &(a, b) in &doors {
            let manhattan = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            if !in_bounds(a) || !in_bounds(b) || manhattan != 1 {
                return Err(Error::InvalidEnv(format!(
                    "door {a:?}->{b:?} must join two adjacent cells"
                )));
            }
            if walls.contains(&a) || walls.contains(&b) {
                return Err(Error::InvalidEnv(format!("door {a:?}->{b:?} touches a wall")));
            }
            if doors.contains(&(b, a)) {
                return Err(Error::InvalidEnv(format!(
                    "doors {a:?}->{b:?} and {b:?}->{a:?} seal the edge in both directions"
                )));
            }
        }
        let mut free = Vec::new();
        let mut index = vec![None; width * height];
        for y in 0..height {
            for x in 0..width {
                if !walls.contains(&(x, y)) {
                    index[y * width + x] = Some(free.len());
                    free.push((x, y));
                }
            }
        }
        let grid = GridWorld {
            width,
            height,
            walls,
            doors,
            start,
            free,
            index,
        };
        let s0 = grid.cell_index(start).expect("start is free");
        let mut seen = vec![false; grid.free.len()];
        let mut queue = VecDeque::from([s0]);
        seen[s0] = true;
        let mut reached = 0;
        while let Some(s) = queue.pop_front() {
            for n in grid.successors(s) {
                if !seen[n] {
                    seen[n] = true;
                    reached += 1;
                    queue.push_back(n);
                }
            }
        }
        if reached == 0 {
            return Err(Error::InvalidEnv(
                "walls disconnect the start cell from every other cell".into(),
            ));
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn walls(&self) -> &BTreeSet<Cell> {
        &self.walls
    }

    pub fn doors(&self) -> &BTreeSet<(Cell, Cell)> {
        &self.doors
    }

    pub fn num_states(&self) -> usize {
        self.free.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.free
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.free[state]
    }

    pub fn cell_index(&self, c: Cell) -> Option<usize> {
        if c.0 < self.width && c.1 < self.height {
            self.index[c.1 * self.width + c.0]
        } else {
            None
        }
    }

    pub fn step(&self, state: usize, mv: GridMove) -> usize {
        let (x, y) = self.free[state];
        let (dx, dy) = mv.delta();
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 {
            return state;
        }
        let target = (nx as usize, ny as usize);
        match self.cell_index(target) {
            Some(next) if !self.doors.contains(&(target, (x, y))) => next,
            _ => state,
        }
    }

    /// Distinct one-step successors, including `state` itself via `Stay`.
    pub fn successors(&self, state: usize) -> Vec<usize> {
        let mut out: Vec<usize> = GridMove::ALL.iter().map(|m| self.step(state, *m)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Parses `#` wall, `.` free, `S` start and `>`/`<`/`^`/`v` doors.
    ///
    /// A door glyph at cell `c` pointing in direction `d` means the edge between `c` and
    /// `c + d` can only be crossed from `c` toward `c + d`.
    pub fn from_ascii(map: &str) -> Result<Self> {
        let rows: Vec<&str> = map
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim().is_empty())
            .map(str::trim_start)
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidEnv("empty ascii map".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::new();
        let mut doors = Vec::new();
        let mut start = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidEnv(format!(
                    "ascii map row {} has width {}, expected {width}",
                    y + 1,
                    row.chars().count()
                )));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '#' => walls.push((x, y)),
                    '.' => {}
                    'S' => {
                        if start.replace((x, y)).is_some() {
                            return Err(Error::InvalidEnv("ascii map has two start cells".into()));
                        }
                    }
                    other => match GridMove::from_glyph(other) {
                        Some(mv) => {
                            let (dx, dy) = mv.delta();
                            let tx = x as isize + dx;
                            let ty = y as isize + dy;
                            if tx < 0 || ty < 0 || tx as usize >= width || ty as usize >= height {
                                return Err(Error::InvalidEnv(format!(
                                    "door at ({x}, {y}) points outside the map"
                                )));
                            }
                            doors.push(((x, y), (tx as usize, ty as usize)));
                        }
                        None => {
                            return Err(Error::InvalidEnv(format!(
                                "unknown map glyph {other:?} at ({x}, {y})"
                            )))
                        }
                    },
                }
            }
        }
        match start {
            Some(s) => Self::with_start(width, height, walls, doors, s),
            None => Self::new(width, height, walls, doors),
        }
    }

    pub fn to_ascii(&self) -> Result<String> {
        let mut glyphs = vec![vec!['.'; self.width]; self.height];
        for &(x, y) in &self.walls {
            glyphs[y][x] = '#';
        }
        for &((ax, ay), (bx, by)) in &self.doors {
            if glyphs[ay][ax] != '.' {
                return Err(Error::InvalidEnv(format!(
                    "cell ({ax}, {ay}) carries more than one door and has no ascii form"
                )));
            }
            let mv = GridMove::ALL
                .iter()
                .find(|m| {
                    let (dx, dy) = m.delta();
                    (ax as isize + dx, ay as isize + dy) == (bx as isize, by as isize)
                })
                .copied()
                .expect("doors join adjacent cells");
            glyphs[ay][ax] = mv.glyph();
        }
        let (sx, sy) = self.start;
        if glyphs[sy][sx] != '.' {
            return Err(Error::InvalidEnv("start cell carries a door".into()));
        }
        glyphs[sy][sx] = 'S';
        let mut out = String::new();
        for row in glyphs {
            let _ = writeln!(out, "{}", row.into_iter().collect::<String>());
        }
        Ok(out)
    }
}

/// Point mass in `{x : x^T A^{-1} x <= 1}` moving at most `step_size` per step.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    step_size: f64,
}

impl PointMass {
    pub fn new(a: DMatrix<f64>, step_size: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::NotPositiveDefinite);
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidEnv(format!("step size {step_size} must be positive")));
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let a_inv = chol.inverse();
        Ok(PointMass {
            a,
            a_inv,
            step_size,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// `x^T A^{-1} x`; at most 1 inside the ellipse.
    pub fn ellipse_norm_sq(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (v.transpose() * &self.a_inv * &v)[(0, 0)]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.ellipse_norm_sq(x) <= 1.0 + 1e-12
    }

    pub fn project(&self, x: &mut [f64]) {
        let q = self.ellipse_norm_sq(x);
        if q > 1.0 {
            let s = q.sqrt();
            x.iter_mut().for_each(|v| *v /= s);
        }
    }

    pub fn step(&self, x: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
                context: "point-mass action",
            });
        }
        if !action.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("point-mass action"));
        }
        let norm = action.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        let mut next: Vec<f64> = x
            .iter()
            .zip(action)
            .map(|(s, a)| s + self.step_size * a * scale)
            .collect();
        self.project(&mut next);
        Ok(next)
    }

    /// Points of the `step_size` lattice that lie inside the ellipse.
    pub fn lattice(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let radii: Vec<usize> = (0..dim)
            .map(|i| (self.a[(i, i)].sqrt() / self.step_size).floor() as usize)
            .collect();
        let mut out = Vec::new();
        let mut idx: Vec<isize> = radii.iter().map(|r| -(*r as isize)).collect();
        loop {
            let p: Vec<f64> = idx.iter().map(|k| *k as f64 * self.step_size).collect();
            if self.contains(&p) {
                out.push(p);
            }
            let mut d = 0;
            loop {
                if d == dim {
                    return out;
                }
                idx[d] += 1;
                if idx[d] > radii[d] as isize {
                    idx[d] = -(radii[d] as isize);
                    d += 1;
                } else {
                    break;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Grid(GridWorld),
    PointMass(PointMass),
}

#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Cell(usize),
    Point(Vec<f64>),
}

impl State {
    pub fn cell_index(&self) -> Option<usize> {
        match self {
            State::Cell(i) => Some(*i),
            State::Point(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// `[-1, 1]^dim`, further clipped to the unit ball by the dynamics.
    Box(usize),
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Box(d) => *d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateSpace {
    Finite(usize),
    Box { dim: usize, bounds: Vec<(f64, f64)> },
}

/// How a state's coordinate vector is turned into the observation fed to networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EncodingSpec {
    RawCoordinates,
    RandomProjection { dim: usize, seed: u64 },
    Scrambled { seed: u64 },
}

impl Default for EncodingSpec {
    fn default() -> Self {
        EncodingSpec::RawCoordinates
    }
}

#[derive(Clone, Debug, PartialEq)]
enum EncoderImpl {
    Identity,
    Linear(DMatrix<f64>),
    Affine {
        perm: Vec<usize>,
        scale: Vec<f64>,
        offset: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    spec: EncodingSpec,
    input_dim: usize,
    inner: EncoderImpl,
}

impl Encoder {
    pub fn new(spec: EncodingSpec, input_dim: usize) -> Result<Self> {
        let inner = match &spec {
            EncodingSpec::RawCoordinates => EncoderImpl::Identity,
            EncodingSpec::RandomProjection { dim, seed } => {
                if *dim < input_dim {
                    return Err(Error::InvalidEnv(format!(
                        "projection to {dim} < {input_dim} dimensions is not injective"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let g = DMatrix::from_fn(*dim, input_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                // Orthonormal columns.
                let q = g.qr().q();
                EncoderImpl::Linear(q.columns(0, input_dim).into_owned())
            }
            EncodingSpec::Scrambled { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut perm: Vec<usize> = (0..input_dim).collect();
                perm.shuffle(&mut rng);
                let scale = (0..input_dim)
                    .map(|_| {
                        let m: f64 = rng.random_range(0.5..2.0);
                        if rng.random_bool(0.5) {
                            m
                        } else {
                            -m
                        }
                    })
                    .collect();
                let offset = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                EncoderImpl::Affine {
                    perm,
                    scale,
                    offset,
                }
            }
        };
        Ok(Encoder {
            spec,
            input_dim,
            inner,
        })
    }

    pub fn spec(&self) -> &EncodingSpec {
        &self.spec
    }

    pub fn output_dim(&self) -> usize {
        match &self.inner {
            EncoderImpl::Linear(m) => m.nrows(),
            _ => self.input_dim,
        }
    }

    pub fn encode(&self, coords: &[f64]) -> Vec<f64> {
        match &self.inner {
            EncoderImpl::Identity => coords.to_vec(),
            EncoderImpl::Linear(m) => (m * DVector::from_column_slice(coords)).as_slice().to_vec(),
            EncoderImpl::Affine {
                perm,
                scale,
                offset,
            } => perm
                .iter()
                .enumerate()
                .map(|(i, &p)| scale[i] * coords[p] + offset[i])
                .collect(),
        }
    }
}

/// Deterministic dynamics plus a fixed observation encoding and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub dynamics: Dynamics,
    pub encoder: Encoder,
    pub horizon: usize,
    pub id: String,
}

impl Mdp {
    pub fn grid(grid: GridWorld, horizon: usize, encoding: EncodingSpec) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidEnv("horizon must be positive".into()));
        }
        let id = format!(
            "grid{}x{}-w{}-d{}",
            grid.width(),
            grid.height(),
            grid.walls().len(),
            grid.doors().len()
        );
        let mdp = Mdp {
            dynamics: Dynamics::Grid(grid),
            encoder: Encoder::new(encoding, 2)?,
            horizon,
            id,
        };
        mdp.check_injective()?;
        Ok(mdp)
    }

    pub fn point_mass(pm: PointMass, horizon: usize, encoding: EncodingSpec) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidEnv("horizon must be positive".into()));
        }
        let dim = pm.dim();
        Ok(Mdp {
            id: format!("pointmass{dim}-h{horizon}"),
            dynamics: Dynamics::PointMass(pm),
            encoder: Encoder::new(encoding, dim)?,
            horizon,
        })
    }

    pub fn as_grid(&self) -> Option<&GridWorld> {
        match &self.dynamics {
            Dynamics::Grid(g) => Some(g),
            Dynamics::PointMass(_) => None,
        }
    }

    pub fn as_point_mass(&self) -> Option<&PointMass> {
        match &self.dynamics {
            Dynamics::PointMass(p) => Some(p),
            Dynamics::Grid(_) => None,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        matches!(self.dynamics, Dynamics::Grid(_))
    }

    pub fn num_states(&self) -> Option<usize> {
        self.as_grid().map(GridWorld::num_states)
    }

    pub fn state_space(&self) -> StateSpace {
        match &self.dynamics {
            Dynamics::Grid(g) => StateSpace::Finite(g.num_states()),
            Dynamics::PointMass(p) => StateSpace::Box {
                dim: p.dim(),
                bounds: (0..p.dim())
                    .map(|i| {
                        let r = p.shape()[(i, i)].sqrt();
                        (-r, r)
                    })
                    .collect(),
            },
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.dynamics {
            Dynamics::Grid(_) => ActionSpace::Discrete(GRID_ACTIONS),
            Dynamics::PointMass(p) => ActionSpace::Box(p.dim()),
        }
    }

    pub fn initial_state(&self) -> State {
        match &self.dynamics {
            Dynamics::Grid(g) => State::Cell(g.cell_index(g.start()).expect("start is free")),
            Dynamics::PointMass(p) => State::Point(vec![0.0; p.dim()]),
        }
    }

    pub fn transition(&self, state: &State, action: &Action) -> Result<State> {
        match (&self.dynamics, state, action) {
            (Dynamics::Grid(g), State::Cell(s), Action::Discrete(a)) => {
                if *s >= g.num_states() {
                    return Err(Error::InvalidArgument(format!("state {s} out of range")));
                }
                let mv = GridMove::from_index(*a)
                    .ok_or_else(|| Error::InvalidArgument(format!("grid action {a} out of range")))?;
                Ok(State::Cell(g.step(*s, mv)))
            }
            (Dynamics::PointMass(p), State::Point(x), Action::Continuous(a)) => {
                Ok(State::Point(p.step(x, a)?))
            }
            _ => Err(Error::InvalidArgument(
                "state/action kind does not match the environment".into(),
            )),
        }
    }

    /// Geometric coordinates of a state: cell position relative to the grid
    /// center, or the point-mass position.
    pub fn coords(&self, state: &State) -> Vec<f64> {
        match (&self.dynamics, state) {
            (Dynamics::Grid(g), State::Cell(s)) => {
                let (x, y) = g.cell(*s);
                let (cx, cy) = g.center();
                vec![x as f64 - cx, y as f64 - cy]
            }
            (_, State::Point(x)) => x.clone(),
            (Dynamics::PointMass(p), State::Cell(_)) => vec![0.0; p.dim()],
        }
    }

    pub fn observe(&self, state: &State) -> Vec<f64> {
        self.encoder.encode(&self.coords(state))
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Directed pairs `(s, s')` with `s'` reachable from `s` in one step, including `(s, s)`.
    pub fn adjacency(&self) -> Result<Vec<(usize, usize)>> {
        let g = self.as_grid().ok_or(Error::NotEnumerable)?;
        Ok((0..g.num_states())
            .flat_map(|s| g.successors(s).into_iter().map(move |n| (s, n)))
            .collect())
    }

    /// Fails if two distinct states share an observation vector.
    pub fn check_injective(&self) -> Result<()> {
        let Some(n) = self.num_states() else {
            return Ok(());
        };
        let mut obs: Vec<(Vec<u64>, usize)> = (0..n)
            .map(|s| {
                let o = self.observe(&State::Cell(s));
                // Quantize to absorb round-off in projected encodings.
                (o.iter().map(|v| (v * 1e9).round() as i64 as u64).collect(), s)
            })
            .collect();
        obs.sort();
        for w in obs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidEnv(format!(
                    "encoding maps states {} and {} to the same observation",
                    w[0].1, w[1].1
                )));
            }
        }
        Ok(())
    }
}

/// A latent-conditioned action source.
pub trait Controller {
    fn act(&self, obs: &[f64], z: &[f64], stochastic: bool, rng: &mut dyn RngCore) -> Result<Action>;

    /// Skill dimension the controller expects, if it conditions on one.
    fn latent_dim(&self) -> Option<usize> {
        None
    }
}

/// Uniformly random actions; continuous actions are drawn from `[-1, 1]^d`.
pub struct UniformRandom(pub ActionSpace);

impl Controller for UniformRandom {
    fn act(&self, _obs: &[f64], _z: &[f64], _stochastic: bool, rng: &mut dyn RngCore) -> Result<Action> {
        Ok(match self.0 {
            ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
            ActionSpace::Box(d) => Action::Continuous((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()),
        })
    }
}

/// Always emits the same action.
pub struct ConstantAction(pub Action);

impl Controller for ConstantAction {
    fn act(&self, _obs: &[f64], _z: &[f64], _stochastic: bool, _rng: &mut dyn RngCore) -> Result<Action> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub skill: Skill,
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub observations: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Rolls out one episode of `mdp.horizon` steps with the skill held fixed.
pub fn rollout(
    mdp: &Mdp,
    controller: &dyn Controller,
    skill: &Skill,
    stochastic: bool,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    rollout_from(mdp, controller, skill, mdp.initial_state(), mdp.horizon, stochastic, rng)
}

pub fn rollout_from(
    mdp: &Mdp,
    controller: &dyn Controller,
    skill: &Skill,
    start: State,
    steps: usize,
    stochastic: bool,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    if let Some(d) = controller.latent_dim() {
        if d != skill.z.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: skill.z.len(),
                context: "skill dimension",
            });
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut s = start;
    observations.push(mdp.observe(&s));
    states.push(s.clone());
    for _ in 0..steps {
        let a = controller.act(observations.last().unwrap(), &skill.z, stochastic, rng)?;
        s = mdp.transition(&s, &a)?;
        observations.push(mdp.observe(&s));
        states.push(s.clone());
        actions.push(a);
    }
    Ok(Trajectory {
        skill: skill.clone(),
        states,
        actions,
        observations,
    })
}
