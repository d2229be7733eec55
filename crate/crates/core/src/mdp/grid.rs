use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::GenParams;
use super::{merge_outcomes, Environment, MdpError, Outcome, StateId, Transition};
use super::{DOWN, LEFT, MOVEMENT_ACTIONS, RIGHT, UP};

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_P_TERM: f64 = 0.01;

/// 1-based grid coordinate: `i` is the column (1 = left), `j` the row
/// (1 = bottom). `U` increases `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub i: usize,
    pub j: usize,
}

impl Coord {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Wall,
    Free { reward: f64, terminal: bool },
}

impl Cell {
    pub const EMPTY: Cell = Cell::Free { reward: 0.0, terminal: false };

    pub fn is_wall(&self) -> bool {
        matches!(self, Cell::Wall)
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Cell::Free { terminal: true, .. })
    }

    pub fn reward(&self) -> f64 {
        match self {
            Cell::Wall => 0.0,
            Cell::Free { reward, .. } => *reward,
        }
    }

    /// Map token: `#` wall, `.` empty, `-1` a non-terminal reward, `+10T` a
    /// terminal reward.
    pub fn token(&self) -> String {
        match *self {
            Cell::Wall => "#".to_string(),
            Cell::Free { reward: 0.0, terminal: false } => ".".to_string(),
            Cell::Free { reward, terminal } => {
                let reward = if reward == 0.0 { 0.0 } else { reward };
                format!("{:+}{}", reward, if terminal { "T" } else { "" })
            }
        }
    }

    pub fn parse_token(token: &str) -> Result<Cell, MdpError> {
        match token {
            "#" => Ok(Cell::Wall),
            "." => Ok(Cell::EMPTY),
            _ => {
                let (body, terminal) = match token.strip_suffix('T') {
                    Some(b) => (b, true),
                    None => (token, false),
                };
                let reward: f64 = body
                    .parse()
                    .map_err(|_| MdpError::Malformed(format!("bad cell token {token:?}")))?;
                if !reward.is_finite() {
                    return Err(MdpError::Malformed(format!("non-finite reward in {token:?}")));
                }
                Ok(Cell::Free { reward, terminal })
            }
        }
    }
}

/// Provenance of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenProvenance {
    pub seed: u64,
    pub params: GenParams,
    /// Number of grids drawn, including the accepted one.
    pub attempts: usize,
}

/// Exact movement distribution for one (state, action) pair, before rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    /// Destination cells with their probabilities (merged, summing to one).
    pub moves: Vec<(Coord, f64)>,
    /// Probability that the episode is cut after the move resolves. Applies
    /// only when the destination is not itself terminal.
    pub p_term: f64,
}

/// Immutable W x H grid MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct GridWorld {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    initial: Coord,
    eta: f64,
    p_term: f64,
    extra_actions: usize,
    provenance: Option<GenProvenance>,
}

impl GridWorld {
    /// Builds a world from cells indexed `(j - 1) * width + (i - 1)`.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        eta: f64,
        p_term: f64,
    ) -> Result<Self, MdpError> {
        if width == 0 || height == 0 {
            return Err(MdpError::Malformed("grid dimensions must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(MdpError::Malformed(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&p_term) {
            return Err(MdpError::Malformed("eta and p_term must lie in [0, 1]".into()));
        }
        let initial = Coord::new(width.div_ceil(2), height.div_ceil(2));
        let world = Self {
            width,
            height,
            cells,
            initial,
            eta,
            p_term,
            extra_actions: 0,
            provenance: None,
        };
        match world.cell(initial) {
            Cell::Free { terminal: false, .. } => Ok(world),
            _ => Err(MdpError::Malformed("initial cell must be free and non-terminal".into())),
        }
    }

    /// Wall-free, reward-free grid with default noise and termination.
    pub fn open(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![Cell::EMPTY; width * height], DEFAULT_ETA, DEFAULT_P_TERM)
            .expect("open grid is always valid")
    }

    pub fn with_cell(mut self, at: Coord, cell: Cell) -> Result<Self, MdpError> {
        let idx = self
            .index(at)
            .ok_or_else(|| MdpError::Malformed(format!("{at:?} outside the grid")))?;
        if at == self.initial && !matches!(cell, Cell::Free { terminal: false, .. }) {
            return Err(MdpError::Malformed("initial cell must stay free and non-terminal".into()));
        }
        self.cells[idx] = cell;
        Ok(self)
    }

    pub fn with_dynamics(mut self, eta: f64, p_term: f64) -> Result<Self, MdpError> {
        if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&p_term) {
            return Err(MdpError::Malformed("eta and p_term must lie in [0, 1]".into()));
        }
        self.eta = eta;
        self.p_term = p_term;
        Ok(self)
    }

    /// Total action count: the four moves followed by no-op actions.
    pub fn with_action_count(mut self, total: usize) -> Result<Self, MdpError> {
        if total < MOVEMENT_ACTIONS {
            return Err(MdpError::Malformed(format!(
                "at least {MOVEMENT_ACTIONS} actions required, got {total}"
            )));
        }
        self.extra_actions = total - MOVEMENT_ACTIONS;
        Ok(self)
    }

    pub(crate) fn with_provenance(mut self, provenance: GenProvenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn p_term(&self) -> f64 {
        self.p_term
    }

    pub fn initial(&self) -> Coord {
        self.initial
    }

    pub fn provenance(&self) -> Option<&GenProvenance> {
        self.provenance.as_ref()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn index(&self, c: Coord) -> Option<usize> {
        if c.i == 0 || c.j == 0 || c.i > self.width || c.j > self.height {
            None
        } else {
            Some((c.j - 1) * self.width + (c.i - 1))
        }
    }

    pub fn coord(&self, state: StateId) -> Coord {
        Coord::new(state % self.width + 1, state / self.width + 1)
    }

    /// Cell content; anything outside the grid reads as a wall.
    pub fn cell(&self, c: Coord) -> Cell {
        self.index(c).map_or(Cell::Wall, |idx| self.cells[idx])
    }

    /// Cell content at signed coordinates, walls outside the grid.
    pub fn cell_at(&self, i: isize, j: isize) -> Cell {
        if i < 1 || j < 1 {
            Cell::Wall
        } else {
            self.cell(Coord::new(i as usize, j as usize))
        }
    }

    /// z(s, a): the intended neighbour, or `s` itself when the move is blocked.
    pub fn resolve_move(&self, c: Coord, action: usize) -> Coord {
        let target = match action {
            LEFT => (c.i as isize - 1, c.j as isize),
            RIGHT => (c.i as isize + 1, c.j as isize),
            UP => (c.i as isize, c.j as isize + 1),
            DOWN => (c.i as isize, c.j as isize - 1),
            _ => return c,
        };
        if self.cell_at(target.0, target.1).is_wall() {
            c
        } else {
            Coord::new(target.0 as usize, target.1 as usize)
        }
    }

    fn check_decision(&self, c: Coord) -> Result<StateId, MdpError> {
        match self.index(c) {
            Some(idx) if matches!(self.cells[idx], Cell::Free { terminal: false, .. }) => Ok(idx),
            Some(idx) => Err(MdpError::InvalidState(idx)),
            None => Err(MdpError::InvalidState(usize::MAX)),
        }
    }

    fn check_action(&self, action: usize) -> Result<(), MdpError> {
        if action >= self.action_count() {
            Err(MdpError::InvalidAction { action, count: self.action_count() })
        } else {
            Ok(())
        }
    }

    /// Exact movement distribution: the intended move with probability 1 - eta
    /// and each of the four directions with eta / 4, blocked moves staying put.
    /// No-op actions never move.
    pub fn transition_distribution(
        &self,
        at: Coord,
        action: usize,
    ) -> Result<TransitionDistribution, MdpError> {
        self.check_decision(at)?;
        self.check_action(action)?;
        let mut moves: Vec<(Coord, f64)> = Vec::with_capacity(5);
        let mut push = |c: Coord, p: f64| {
            if p == 0.0 {
                return;
            }
            match moves.iter_mut().find(|(m, _)| *m == c) {
                Some((_, q)) => *q += p,
                None => moves.push((c, p)),
            }
        };
        if action >= MOVEMENT_ACTIONS {
            push(at, 1.0);
        } else {
            push(self.resolve_move(at, action), 1.0 - self.eta);
            for dir in [LEFT, RIGHT, UP, DOWN] {
                push(self.resolve_move(at, dir), self.eta / 4.0);
            }
        }
        Ok(TransitionDistribution { moves, p_term: self.p_term })
    }

    /// Samples one step from a coordinate.
    pub fn step<R: Rng + ?Sized>(
        &self,
        at: Coord,
        action: usize,
        rng: &mut R,
    ) -> Result<(Option<Coord>, f64, bool), MdpError> {
        let state = self.check_decision(at)?;
        let t = self.sample(state, action, rng)?;
        // When the coin fires the agent still arrived somewhere; report it.
        Ok(match t.next {
            Some(s) => (Some(self.coord(s)), t.reward, false),
            None => (None, t.reward, true),
        })
    }

    /// ASCII map, top row first: `#` walls, `S` the initial cell, `.` empty,
    /// bare signed rewards for non-terminal cells and bracketed ones for
    /// terminals.
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for j in (1..=self.height).rev() {
            let row: Vec<String> = (1..=self.width)
                .map(|i| {
                    let c = Coord::new(i, j);
                    let tok = if c == self.initial {
                        "S".to_string()
                    } else {
                        match self.cell(c) {
                            Cell::Wall => "#".to_string(),
                            Cell::Free { reward, terminal: true } => format!("[{reward:+}]"),
                            Cell::Free { reward: 0.0, .. } => ".".to_string(),
                            Cell::Free { reward, .. } => format!("{reward:+}"),
                        }
                    };
                    format!("{tok:>5}")
                })
                .collect();
            out.push_str(row.join("").trim_end());
            out.push('\n');
        }
        out
    }

    /// Position of the agent after a move to `dest`: either the episode ended
    /// at a terminal cell or the agent continues subject to the coin.
    fn arrival(&self, dest: Coord, no_op: bool) -> (f64, bool) {
        let cell = self.cell(dest);
        let reward = if no_op { 0.0 } else { cell.reward() };
        (reward, cell.is_terminal())
    }
}

impl Environment for GridWorld {
    fn state_count(&self) -> usize {
        self.width * self.height
    }

    fn action_count(&self) -> usize {
        MOVEMENT_ACTIONS + self.extra_actions
    }

    fn initial_state(&self) -> StateId {
        self.index(self.initial).expect("initial cell is inside the grid")
    }

    fn is_decision_state(&self, state: StateId) -> bool {
        matches!(self.cells.get(state), Some(Cell::Free { terminal: false, .. }))
    }

    fn outcomes(&self, state: StateId, action: usize) -> Result<Vec<Outcome>, MdpError> {
        if !self.is_decision_state(state) {
            return Err(MdpError::InvalidState(state));
        }
        let dist = self.transition_distribution(self.coord(state), action)?;
        let no_op = action >= MOVEMENT_ACTIONS;
        let mut raw = Vec::with_capacity(dist.moves.len() * 2);
        for (dest, p) in dist.moves {
            let (reward, terminal) = self.arrival(dest, no_op);
            let idx = self.index(dest).expect("moves stay inside the grid");
            if terminal {
                raw.push(Outcome { next: None, reward, prob: p });
            } else {
                raw.push(Outcome { next: Some(idx), reward, prob: p * (1.0 - self.p_term) });
                raw.push(Outcome { next: None, reward, prob: p * self.p_term });
            }
        }
        Ok(merge_outcomes(raw))
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        state: StateId,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, MdpError> {
        if !self.is_decision_state(state) {
            return Err(MdpError::InvalidState(state));
        }
        self.check_action(action)?;
        let at = self.coord(state);
        let no_op = action >= MOVEMENT_ACTIONS;
        let dest = if no_op {
            at
        } else {
            let u: f64 = rng.gen();
            let dir = if u < 1.0 - self.eta { action } else { rng.gen_range(0..MOVEMENT_ACTIONS) };
            self.resolve_move(at, dir)
        };
        let (reward, terminal) = self.arrival(dest, no_op);
        if terminal {
            return Ok(Transition { next: None, reward });
        }
        let cut = self.p_term > 0.0 && rng.gen::<f64>() < self.p_term;
        let next = if cut { None } else { self.index(dest) };
        Ok(Transition { next, reward })
    }
}

impl fmt::Display for GridWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ascii())
    }
}

/// JSON document form of a grid: rows of space-separated cell tokens, top row
/// first.
#[derive(Serialize, Deserialize)]
struct GridDoc {
    width: usize,
    height: usize,
    eta: f64,
    p_term: f64,
    #[serde(default)]
    extra_actions: usize,
    initial: Coord,
    rows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<GenProvenance>,
}

impl From<GridWorld> for GridDoc {
    fn from(w: GridWorld) -> Self {
        let rows = (1..=w.height)
            .rev()
            .map(|j| {
                (1..=w.width)
                    .map(|i| w.cell(Coord::new(i, j)).token())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        GridDoc {
            width: w.width,
            height: w.height,
            eta: w.eta,
            p_term: w.p_term,
            extra_actions: w.extra_actions,
            initial: w.initial,
            rows,
            provenance: w.provenance,
        }
    }
}

impl TryFrom<GridDoc> for GridWorld {
    type Error = MdpError;

    fn try_from(doc: GridDoc) -> Result<Self, Self::Error> {
        if doc.rows.len() != doc.height {
            return Err(MdpError::Malformed(format!(
                "expected {} rows, got {}",
                doc.height,
                doc.rows.len()
            )));
        }
        let mut cells = vec![Cell::Wall; doc.width * doc.height];
        for (r, row) in doc.rows.iter().enumerate() {
            let j = doc.height - r;
            let tokens: Vec<&str> = row.split_whitespace().collect();
            if tokens.len() != doc.width {
                return Err(MdpError::Malformed(format!("row {r} has {} cells", tokens.len())));
            }
            for (k, tok) in tokens.iter().enumerate() {
                cells[(j - 1) * doc.width + k] = Cell::parse_token(tok)?;
            }
        }
        let mut world = GridWorld::new(doc.width, doc.height, cells, doc.eta, doc.p_term)?;
        if world.initial != doc.initial {
            return Err(MdpError::Malformed("initial cell must be the grid centre".into()));
        }
        world.extra_actions = doc.extra_actions;
        world.provenance = doc.provenance;
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prob_of(d: &TransitionDistribution, c: Coord) -> f64 {
        d.moves.iter().filter(|(m, _)| *m == c).map(|(_, p)| p).sum()
    }

    #[test]
    fn interior_move_right_with_noise() {
        let w = GridWorld::open(5, 5);
        let at = Coord::new(3, 3);
        let d = w.transition_distribution(at, RIGHT).unwrap();
        assert!((prob_of(&d, Coord::new(4, 3)) - 0.925).abs() < 1e-12);
        for c in [Coord::new(2, 3), Coord::new(3, 4), Coord::new(3, 2)] {
            assert!((prob_of(&d, c) - 0.025).abs() < 1e-12);
        }
        assert_eq!(d.p_term, DEFAULT_P_TERM);
    }

    #[test]
    fn noiseless_move_is_deterministic() {
        let w = GridWorld::open(5, 5).with_dynamics(0.0, 0.01).unwrap();
        let d = w.transition_distribution(Coord::new(3, 3), UP).unwrap();
        assert_eq!(d.moves, vec![(Coord::new(3, 4), 1.0)]);
    }

    #[test]
    fn boxed_in_cell_always_stays() {
        let mut w = GridWorld::open(3, 3);
        for c in [Coord::new(1, 2), Coord::new(3, 2), Coord::new(2, 1), Coord::new(2, 3)] {
            w = w.with_cell(c, Cell::Wall).unwrap();
        }
        for a in 0..4 {
            let d = w.transition_distribution(Coord::new(2, 2), a).unwrap();
            assert_eq!(d.moves, vec![(Coord::new(2, 2), 1.0)]);
        }
    }

    #[test]
    fn walls_and_terminals_are_invalid_states() {
        let w = GridWorld::open(3, 3)
            .with_cell(Coord::new(1, 1), Cell::Wall)
            .unwrap()
            .with_cell(Coord::new(3, 3), Cell::Free { reward: 10.0, terminal: true })
            .unwrap();
        assert!(matches!(
            w.transition_distribution(Coord::new(1, 1), LEFT),
            Err(MdpError::InvalidState(_))
        ));
        assert!(matches!(
            w.transition_distribution(Coord::new(3, 3), LEFT),
            Err(MdpError::InvalidState(_))
        ));
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let w = GridWorld::open(4, 4)
            .with_cell(Coord::new(1, 1), Cell::Wall)
            .unwrap()
            .with_cell(Coord::new(4, 4), Cell::Free { reward: 10.0, terminal: true })
            .unwrap()
            .with_action_count(6)
            .unwrap();
        for s in w.decision_states() {
            for a in 0..w.action_count() {
                let total: f64 = w.outcomes(s, a).unwrap().iter().map(|o| o.prob).sum();
                assert!((total - 1.0).abs() < 1e-12, "state {s} action {a}: {total}");
            }
        }
    }

    #[test]
    fn arriving_at_goal_pays_and_ends() {
        let w = GridWorld::open(3, 3)
            .with_dynamics(0.0, 0.0)
            .unwrap()
            .with_cell(Coord::new(3, 2), Cell::Free { reward: 10.0, terminal: true })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (next, r, done) = w.step(Coord::new(2, 2), RIGHT, &mut rng).unwrap();
        assert_eq!((next, r, done), (None, 10.0, true));
    }

    #[test]
    fn minus_one_cell_does_not_end_episode() {
        let w = GridWorld::open(3, 3)
            .with_dynamics(0.0, 0.0)
            .unwrap()
            .with_cell(Coord::new(3, 2), Cell::Free { reward: -1.0, terminal: false })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (next, r, done) = w.step(Coord::new(2, 2), RIGHT, &mut rng).unwrap();
        assert_eq!((next, r, done), (Some(Coord::new(3, 2)), -1.0, false));
    }

    #[test]
    fn forced_termination_ends_every_step() {
        let w = GridWorld::open(5, 5).with_dynamics(0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for a in 0..4 {
            let (_, _, done) = w.step(w.initial(), a, &mut rng).unwrap();
            assert!(done);
        }
    }

    #[test]
    fn no_op_stays_and_pays_nothing() {
        let w = GridWorld::open(3, 3)
            .with_cell(Coord::new(2, 2), Cell::Free { reward: -1.0, terminal: false })
            .unwrap()
            .with_action_count(10)
            .unwrap();
        let out = w.outcomes(w.initial_state(), 7).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|o| o.reward == 0.0));
        assert_eq!(out[0].next, Some(w.initial_state()));
    }

    #[test]
    fn json_round_trip_preserves_world() {
        let w = GridWorld::open(4, 3)
            .with_cell(Coord::new(1, 3), Cell::Wall)
            .unwrap()
            .with_cell(Coord::new(4, 1), Cell::Free { reward: -5.0, terminal: true })
            .unwrap()
            .with_cell(Coord::new(3, 3), Cell::Free { reward: -1.0, terminal: false })
            .unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: GridWorld = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn ascii_marks_walls_start_and_terminals() {
        let w = GridWorld::open(3, 3)
            .with_cell(Coord::new(1, 3), Cell::Wall)
            .unwrap()
            .with_cell(Coord::new(3, 1), Cell::Free { reward: 10.0, terminal: true })
            .unwrap();
        let art = w.ascii();
        let lines: Vec<&str> = art.lines().collect();
        assert!(lines[0].trim_start().starts_with('#'));
        assert!(lines[1].contains('S'));
        assert!(lines[2].ends_with("[+10]"));
    }
}
