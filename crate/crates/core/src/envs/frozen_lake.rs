use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAP_4X4: &str = "SFFF\nFHFH\nFFFH\nHFFG";
pub const DEFAULT_MAP_8X8: &str =
    "SFFFFFFF\nFFFFFFFF\nFFFHFFFF\nFFFFFHFF\nFFFHFFFF\nFHHFFFHF\nFHFFHFHF\nFFFHFFFG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Cell {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Cell::Start),
            'F' => Some(Cell::Frozen),
            'H' => Some(Cell::Hole),
            'G' => Some(Cell::Goal),
            _ => None,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Cell::Hole | Cell::Goal)
    }

    pub fn label(self) -> &'static str {
        match self {
            Cell::Start => "start",
            Cell::Frozen => "frozen",
            Cell::Hole => "hole",
            Cell::Goal => "goal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrozenLakeAction {
    Left = 0,
    Down = 1,
    Right = 2,
    Up = 3,
}

impl FrozenLakeAction {
    pub const ALL: [FrozenLakeAction; 4] =
        [FrozenLakeAction::Left, FrozenLakeAction::Down, FrozenLakeAction::Right, FrozenLakeAction::Up];

    pub fn from_index(a: usize) -> Option<Self> {
        Self::ALL.get(a).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            FrozenLakeAction::Left => "left",
            FrozenLakeAction::Down => "down",
            FrozenLakeAction::Right => "right",
            FrozenLakeAction::Up => "up",
        }
    }
}

/// One entry of a tabular transition distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct FrozenLake {
    cells: Vec<Cell>,
    nrow: usize,
    ncol: usize,
    start: usize,
    slippery: bool,
}

impl FrozenLake {
    /// Parse a newline-delimited grid. Exactly one `S` and at least one `G`
    /// are required; all rows must have the same width.
    pub fn from_map(map: &str, slippery: bool) -> Result<Self> {
        let rows: Vec<&str> = map.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::config("frozen lake map is empty"));
        }
        let ncol = rows[0].chars().count();
        let mut cells = Vec::with_capacity(rows.len() * ncol);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != ncol {
                return Err(Error::config(format!("frozen lake map row {r} has inconsistent width")));
            }
            for c in row.chars() {
                let cell = Cell::from_char(c)
                    .ok_or_else(|| Error::config(format!("frozen lake map has unknown cell '{c}'")))?;
                cells.push(cell);
            }
        }
        let starts: Vec<usize> = cells.iter().enumerate().filter(|(_, c)| **c == Cell::Start).map(|(i, _)| i).collect();
        if starts.len() != 1 {
            return Err(Error::config(format!("frozen lake map needs exactly one start cell, found {}", starts.len())));
        }
        if !cells.contains(&Cell::Goal) {
            return Err(Error::config("frozen lake map needs at least one goal cell"));
        }
        Ok(Self { cells, nrow: rows.len(), ncol, start: starts[0], slippery })
    }

    pub fn state_count(&self) -> usize {
        self.cells.len()
    }

    pub fn nrow(&self) -> usize {
        self.nrow
    }

    pub fn ncol(&self) -> usize {
        self.ncol
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_slippery(&self) -> bool {
        self.slippery
    }

    pub fn cell(&self, s: usize) -> Cell {
        self.cells[s]
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.ncol, s % self.ncol)
    }

    /// Deterministic move with walls clamping at the grid border.
    pub fn move_from(&self, s: usize, action: FrozenLakeAction) -> usize {
        let (mut r, mut c) = self.coords(s);
        match action {
            FrozenLakeAction::Left => c = c.saturating_sub(1),
            FrozenLakeAction::Down => r = (r + 1).min(self.nrow - 1),
            FrozenLakeAction::Right => c = (c + 1).min(self.ncol - 1),
            FrozenLakeAction::Up => r = r.saturating_sub(1),
        }
        r * self.ncol + c
    }

    /// Whether any 4-neighbour of `s` is a hole.
    pub fn adjacent_to_hole(&self, s: usize) -> bool {
        FrozenLakeAction::ALL.iter().any(|&a| {
            let n = self.move_from(s, a);
            n != s && self.cells[n] == Cell::Hole
        })
    }

    /// Manhattan distance to the nearest goal.
    pub fn goal_distance(&self, s: usize) -> usize {
        let (r, c) = self.coords(s);
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, cell)| **cell == Cell::Goal)
            .map(|(g, _)| {
                let (gr, gc) = self.coords(g);
                r.abs_diff(gr) + c.abs_diff(gc)
            })
            .min()
            .unwrap_or(usize::MAX)
    }

    /// Full categorical distribution over next states. Slippery ice moves in
    /// the intended direction or either perpendicular one, each with
    /// probability 1/3. Terminal cells are absorbing with zero reward.
    pub fn transition_distribution(&self, s: usize, action: usize) -> Vec<TransitionOutcome> {
        if self.cells[s].is_terminal() {
            return vec![TransitionOutcome { next: s, prob: 1.0, reward: 0.0, terminated: true }];
        }
        let directions: Vec<usize> = if self.slippery {
            vec![(action + 3) % 4, action, (action + 1) % 4]
        } else {
            vec![action]
        };
        let p = 1.0 / directions.len() as f64;
        let mut out: Vec<TransitionOutcome> = Vec::with_capacity(3);
        for d in directions {
            let next = self.move_from(s, FrozenLakeAction::from_index(d).expect("direction in 0..4"));
            let cell = self.cells[next];
            if let Some(existing) = out.iter_mut().find(|o| o.next == next) {
                existing.prob += p;
            } else {
                out.push(TransitionOutcome {
                    next,
                    prob: p,
                    reward: if cell == Cell::Goal { 1.0 } else { 0.0 },
                    terminated: cell.is_terminal(),
                });
            }
        }
        out
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, s: usize, action: usize, rng: &mut R) -> (usize, f64, bool) {
        let dist = self.transition_distribution(s, action);
        let u: f64 = if dist.len() == 1 { 0.0 } else { rng.random() };
        let mut acc = 0.0;
        for o in &dist {
            acc += o.prob;
            if u < acc {
                return (o.next, o.reward, o.terminated);
            }
        }
        let last = dist.last().expect("nonempty distribution");
        (last.next, last.reward, last.terminated)
    }
}
