use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Cell, Coord, GenProvenance, GridWorld, DEFAULT_ETA, DEFAULT_P_TERM};
use super::MdpError;

const GOAL_REWARD: f64 = 10.0;

/// Per-cell modification probabilities, tried in field order for every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub p_w: f64,
    pub p_plus10: f64,
    pub p_plus5: f64,
    pub p_minus1: f64,
    pub p_minus5: f64,
    pub p_minus10: f64,
    pub max_regeneration_attempts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            p_w: 0.1,
            p_plus10: 0.01,
            p_plus5: 0.02,
            p_minus1: 0.1,
            p_minus5: 0.01,
            p_minus10: 0.01,
            max_regeneration_attempts: 1000,
        }
    }
}

impl GenParams {
    fn ordered(&self) -> [(f64, Cell); 6] {
        [
            (self.p_w, Cell::Wall),
            (self.p_plus10, Cell::Free { reward: 10.0, terminal: true }),
            (self.p_plus5, Cell::Free { reward: 5.0, terminal: true }),
            (self.p_minus1, Cell::Free { reward: -1.0, terminal: false }),
            (self.p_minus5, Cell::Free { reward: -5.0, terminal: true }),
            (self.p_minus10, Cell::Free { reward: -10.0, terminal: true }),
        ]
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let probs = self.ordered().map(|(p, _)| p);
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(MdpError::InvalidParams("probabilities must lie in [0, 1]".into()));
        }
        if probs.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(MdpError::InvalidParams("probabilities sum above one".into()));
        }
        if self.p_plus10 <= 0.0 {
            return Err(MdpError::InvalidParams("p_plus10 must be positive".into()));
        }
        if self.max_regeneration_attempts == 0 {
            return Err(MdpError::InvalidParams("max_regeneration_attempts must be positive".into()));
        }
        Ok(())
    }

    /// Probability that a single cell ends up as each modification, before
    /// the solvability filter: first-success rates of the sequential draws.
    pub fn first_success_rates(&self) -> [f64; 6] {
        let mut rates = [0.0; 6];
        let mut untouched = 1.0;
        for (k, (p, _)) in self.ordered().iter().enumerate() {
            rates[k] = untouched * p;
            untouched *= 1.0 - p;
        }
        rates
    }
}

/// Draws a random solvable grid. Cells are visited from the top-left corner,
/// left to right and then downwards; each gets at most one modification, the
/// first of the six draws that succeeds. The initial cell is never modified.
/// Unsolvable grids are redrawn from the same stream.
pub fn generate_random_mdp(
    seed: u64,
    params: &GenParams,
    width: usize,
    height: usize,
) -> Result<GridWorld, MdpError> {
    params.validate()?;
    if width < 2 || height < 2 {
        return Err(MdpError::InvalidParams("width and height must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = GridWorld::open(width, height);
    let initial = base.initial();
    let ordered = params.ordered();
    for attempt in 1..=params.max_regeneration_attempts {
        let mut cells = vec![Cell::EMPTY; width * height];
        for j in (1..=height).rev() {
            for i in 1..=width {
                let c = Coord::new(i, j);
                if c == initial {
                    continue;
                }
                for (p, cell) in ordered {
                    if rng.gen::<f64>() < p {
                        cells[(j - 1) * width + (i - 1)] = cell;
                        break;
                    }
                }
            }
        }
        let world = GridWorld::new(width, height, cells, DEFAULT_ETA, DEFAULT_P_TERM)?;
        if path_exists(&world) {
            return Ok(world.with_provenance(GenProvenance {
                seed,
                params: *params,
                attempts: attempt,
            }));
        }
    }
    Err(MdpError::GenerationExhausted { attempts: params.max_regeneration_attempts })
}

/// Whether some +10 terminal cell is reachable from the initial cell through
/// free non-terminal cells (4-connectivity). Other terminals block the path.
pub fn path_exists(world: &GridWorld) -> bool {
    let start = world.initial();
    let mut seen = vec![false; world.width() * world.height()];
    let mut queue = VecDeque::from([start]);
    seen[world.index(start).expect("initial inside grid")] = true;
    while let Some(c) = queue.pop_front() {
        let neighbours = [
            (c.i as isize - 1, c.j as isize),
            (c.i as isize + 1, c.j as isize),
            (c.i as isize, c.j as isize - 1),
            (c.i as isize, c.j as isize + 1),
        ];
        for (i, j) in neighbours {
            let cell = world.cell_at(i, j);
            if cell.is_wall() {
                continue;
            }
            let n = Coord::new(i as usize, j as usize);
            let idx = world.index(n).expect("non-wall cells are inside the grid");
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            match cell {
                Cell::Free { reward, terminal: true } if reward == GOAL_REWARD => return true,
                Cell::Free { terminal: true, .. } => {}
                _ => queue.push_back(n),
            }
        }
    }
    false
}
