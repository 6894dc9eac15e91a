//! Grid geometry, the pheromone field and the shared world state.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest coordinate magnitude the simulator accepts.
pub const COORD_LIMIT: i64 = 1 << 31;

/// A cell of the infinite grid. The nest sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Position {
    pub x: i64,
    pub y: i64,
}

impl Position {
    pub const NEST: Position = Position { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Position { x, y }
    }

    /// Manhattan distance from the nest.
    pub fn distance(self) -> u64 {
        self.x.unsigned_abs() + self.y.unsigned_abs()
    }

    /// Moves one cell in `dir`, or `None` if the result leaves the supported
    /// coordinate range.
    pub fn step(self, dir: Direction) -> Option<Position> {
        let (dx, dy) = dir.delta();
        let next = Position::new(self.x + dx, self.y + dy);
        (next.x.abs() <= COORD_LIMIT && next.y.abs() <= COORD_LIMIT).then_some(next)
    }

    pub fn offset(self, dx: i64, dy: i64) -> Position {
        Position::new(self.x + dx, self.y + dy)
    }
}

impl From<[i64; 2]> for Position {
    fn from([x, y]: [i64; 2]) -> Self {
        Position::new(x, y)
    }
}

impl From<Position> for [i64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Manhattan distance of `p` from the nest.
pub fn manhattan_distance(p: Position) -> u64 {
    p.distance()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    East,
    South,
    West,
    Hold,
}

impl Direction {
    pub const fn delta(self) -> (i64, i64) {
        match self {
            Direction::North => (0, 1),
            Direction::East => (1, 0),
            Direction::South => (0, -1),
            Direction::West => (-1, 0),
            Direction::Hold => (0, 0),
        }
    }

    pub const fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::East => Direction::West,
            Direction::South => Direction::North,
            Direction::West => Direction::East,
            Direction::Hold => Direction::Hold,
        }
    }
}

/// All cells at Manhattan distance `l` from the nest, in clockwise order
/// starting at `(0, l)`.
pub fn layer_cells(l: u64) -> Vec<Position> {
    if l == 0 {
        return vec![Position::NEST];
    }
    let l = l as i64;
    let mut cells = Vec::with_capacity(4 * l as usize);
    for i in 0..l {
        cells.push(Position::new(i, l - i));
    }
    for i in 0..l {
        cells.push(Position::new(l - i, -i));
    }
    for i in 0..l {
        cells.push(Position::new(-i, -(l - i)));
    }
    for i in 0..l {
        cells.push(Position::new(-(l - i), i));
    }
    cells
}

/// The single pheromone type. Marks are permanent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PheromoneMap {
    cells: HashSet<Position>,
    emit_count: u64,
}

impl PheromoneMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, p: Position) -> bool {
        self.cells.contains(&p)
    }

    /// Records an emission at `p`. Returns `true` if the cell was newly marked.
    pub fn emit(&mut self, p: Position) -> bool {
        self.emit_count += 1;
        self.cells.insert(p)
    }

    /// Total emissions, including repeats on already-marked cells.
    pub fn emit_count(&self) -> u64 {
        self.emit_count
    }

    pub fn distinct_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = Position> + '_ {
        self.cells.iter().copied()
    }
}

/// Grid contents for one simulation: pheromones, the treasure and the set of
/// cells any ant has stood on.
#[derive(Debug, Clone)]
pub struct WorldState {
    pheromones: PheromoneMap,
    treasure: Position,
    visited: HashSet<Position>,
    found: bool,
}

impl WorldState {
    /// Creates a world with every ant at the nest. Panics if the treasure is
    /// placed on the nest; callers validate that beforehand.
    pub fn new(treasure: Position) -> Self {
        assert!(treasure != Position::NEST, "treasure must not be at the nest");
        let mut visited = HashSet::new();
        visited.insert(Position::NEST);
        WorldState {
            pheromones: PheromoneMap::new(),
            treasure,
            visited,
            found: false,
        }
    }

    pub fn nest(&self) -> Position {
        Position::NEST
    }

    pub fn treasure(&self) -> Position {
        self.treasure
    }

    pub fn pheromones(&self) -> &PheromoneMap {
        &self.pheromones
    }

    pub fn visited(&self) -> &HashSet<Position> {
        &self.visited
    }

    pub fn found(&self) -> bool {
        self.found
    }

    pub fn sense(&self, p: Position) -> bool {
        self.pheromones.contains(p)
    }

    pub fn emit(&mut self, p: Position) -> bool {
        self.pheromones.emit(p)
    }

    pub fn visit(&mut self, p: Position) {
        self.visited.insert(p);
        if p == self.treasure {
            self.found = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distances() {
        assert_eq!(manhattan_distance(Position::new(0, 0)), 0);
        assert_eq!(manhattan_distance(Position::new(2, -3)), 5);
        assert_eq!(manhattan_distance(Position::new(0, 4)), 4);
    }

    #[test]
    fn small_layers() {
        assert_eq!(layer_cells(0), vec![Position::NEST]);
        let one: HashSet<_> = layer_cells(1).into_iter().collect();
        let expected: HashSet<_> = [(1, 0), (0, 1), (-1, 0), (0, -1)]
            .into_iter()
            .map(|(x, y)| Position::new(x, y))
            .collect();
        assert_eq!(one, expected);
        assert_eq!(layer_cells(7).len(), 28);
    }

    #[test]
    fn layers_partition_the_diamond() {
        let radius = 9i64;
        let mut seen = HashSet::new();
        for l in 0..=radius as u64 {
            for c in layer_cells(l) {
                assert_eq!(c.distance(), l);
                assert!(seen.insert(c), "{c} listed twice");
            }
        }
        let mut count = 0;
        for x in -radius..=radius {
            for y in -radius..=radius {
                if x.abs() + y.abs() <= radius {
                    count += 1;
                    assert!(seen.contains(&Position::new(x, y)));
                }
            }
        }
        assert_eq!(count, seen.len());
    }

    #[test]
    fn emission_counts_repeats() {
        let mut m = PheromoneMap::new();
        assert!(m.emit(Position::new(1, 0)));
        assert!(!m.emit(Position::new(1, 0)));
        assert_eq!(m.distinct_cells(), 1);
        assert_eq!(m.emit_count(), 2);
        // the primitive itself does not protect the nest
        m.emit(Position::NEST);
        assert!(m.contains(Position::NEST));
    }

    #[test]
    fn sense_and_visit() {
        let mut w = WorldState::new(Position::new(2, 1));
        assert!(!w.sense(Position::new(3, 0)));
        w.emit(Position::new(0, -1));
        assert!(w.sense(Position::new(0, -1)));
        w.visit(Position::NEST);
        assert!(!w.found());
        w.visit(Position::new(1, 2));
        assert!(!w.found());
        w.visit(Position::new(2, 1));
        assert!(w.found());
        assert!(w.visited().contains(&Position::NEST));
    }

    #[test]
    fn steps_refuse_to_leave_supported_range() {
        let edge = Position::new(COORD_LIMIT, 0);
        assert_eq!(edge.step(Direction::East), None);
        assert_eq!(edge.step(Direction::West), Some(Position::new(COORD_LIMIT - 1, 0)));
    }

    proptest! {
        #[test]
        fn emit_then_sense(x in -1000i64..1000, y in -1000i64..1000, extra in prop::collection::vec((-20i64..20, -20i64..20), 0..30)) {
            let mut m = PheromoneMap::new();
            let mut before: Vec<Position> = Vec::new();
            for (a, b) in extra {
                m.emit(Position::new(a, b));
                before.push(Position::new(a, b));
            }
            m.emit(Position::new(x, y));
            prop_assert!(m.contains(Position::new(x, y)));
            for p in before {
                prop_assert!(m.contains(p));
            }
            prop_assert!(m.emit_count() >= m.distinct_cells() as u64);
        }

        #[test]
        fn direction_deltas_are_unit(d in prop::sample::select(vec![Direction::North, Direction::East, Direction::South, Direction::West])) {
            let p = Position::new(3, -4).step(d).unwrap();
            prop_assert_eq!(Position::new(3, -4).distance().abs_diff(p.distance()), 1);
            prop_assert_eq!(p.step(d.opposite()).unwrap(), Position::new(3, -4));
        }
    }
}
