use rand::Rng;

use crate::error::{Error, Result};

pub const TAXI_STATE_COUNT: usize = 500;

/// Pickup/dropoff stations R, G, Y, B as (row, col).
pub const TAXI_LOCATIONS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

const TAXI_MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

/// Passenger location 4 means "in the taxi".
pub const IN_TAXI: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiState {
    pub row: usize,
    pub col: usize,
    pub passenger: usize,
    pub destination: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaxiAction {
    South = 0,
    North = 1,
    East = 2,
    West = 3,
    Pickup = 4,
    Dropoff = 5,
}

impl TaxiAction {
    pub fn from_index(a: usize) -> Option<Self> {
        [Self::South, Self::North, Self::East, Self::West, Self::Pickup, Self::Dropoff].get(a).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            TaxiAction::South => "south",
            TaxiAction::North => "north",
            TaxiAction::East => "east",
            TaxiAction::West => "west",
            TaxiAction::Pickup => "pickup",
            TaxiAction::Dropoff => "dropoff",
        }
    }
}

pub fn taxi_encode(row: usize, col: usize, passenger: usize, destination: usize) -> Result<usize> {
    if row > 4 || col > 4 || passenger > 4 || destination > 3 {
        return Err(Error::contract(format!(
            "taxi state component out of range: ({row}, {col}, {passenger}, {destination})"
        )));
    }
    Ok(((row * 5 + col) * 5 + passenger) * 4 + destination)
}

pub fn taxi_decode(index: usize) -> Result<TaxiState> {
    if index >= TAXI_STATE_COUNT {
        return Err(Error::contract(format!("taxi state index {index} out of range")));
    }
    let destination = index % 4;
    let rest = index / 4;
    let passenger = rest % 5;
    let rest = rest / 5;
    Ok(TaxiState { row: rest / 5, col: rest % 5, passenger, destination })
}

impl TaxiState {
    pub fn encode(&self) -> usize {
        ((self.row * 5 + self.col) * 5 + self.passenger) * 4 + self.destination
    }

    pub fn taxi_at_station(&self) -> Option<usize> {
        TAXI_LOCATIONS.iter().position(|&l| l == (self.row, self.col))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Taxi;

impl Taxi {
    pub fn new() -> Self {
        Taxi
    }

    fn wall_free(row: usize, col_char: usize) -> bool {
        TAXI_MAP[1 + row].as_bytes()[col_char] == b':'
    }

    /// Uniform over states whose passenger waits at a station other than
    /// the destination.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let row = rng.random_range(0..5);
        let col = rng.random_range(0..5);
        let destination = rng.random_range(0..4);
        let mut passenger = rng.random_range(0..3);
        if passenger >= destination {
            passenger += 1;
        }
        TaxiState { row, col, passenger, destination }.encode()
    }

    /// Deterministic transition: (next index, reward, terminated).
    pub fn step_index(&self, index: usize, action: usize) -> (usize, f64, bool) {
        let s = taxi_decode(index).expect("valid taxi state");
        let mut next = s;
        let mut reward = -1.0;
        let mut terminated = false;
        match TaxiAction::from_index(action).expect("validated action") {
            TaxiAction::South => next.row = (s.row + 1).min(4),
            TaxiAction::North => next.row = s.row.saturating_sub(1),
            TaxiAction::East => {
                if Self::wall_free(s.row, 2 * s.col + 2) {
                    next.col = (s.col + 1).min(4);
                }
            }
            TaxiAction::West => {
                if Self::wall_free(s.row, 2 * s.col) {
                    next.col = s.col.saturating_sub(1);
                }
            }
            TaxiAction::Pickup => {
                if s.passenger < IN_TAXI && TAXI_LOCATIONS[s.passenger] == (s.row, s.col) {
                    next.passenger = IN_TAXI;
                } else {
                    reward = -10.0;
                }
            }
            TaxiAction::Dropoff => {
                let station = s.taxi_at_station();
                if s.passenger == IN_TAXI && station == Some(s.destination) {
                    next.passenger = s.destination;
                    terminated = true;
                    reward = 20.0;
                } else if s.passenger == IN_TAXI && station.is_some() {
                    next.passenger = station.expect("checked");
                } else {
                    reward = -10.0;
                }
            }
        }
        (next.encode(), reward, terminated)
    }
}
