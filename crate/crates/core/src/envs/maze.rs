use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use super::{EnvError, TabularBuilder, TabularCMDP};

/// Row/column offsets of the four actions: north, south, west, east.
pub const MAZE_ACTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
    Goal,
}

/// Rectangular grid with exactly one goal; every free cell reaches the goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    height: usize,
    width: usize,
    cells: Vec<Cell>,
}

impl MazeLayout {
    pub fn new(height: usize, width: usize, cells: Vec<Cell>) -> Result<Self, EnvError> {
        if height == 0 || width == 0 {
            return Err(EnvError::Layout("empty grid".into()));
        }
        if cells.len() != height * width {
            return Err(EnvError::Layout(format!("{} cells for a {height}x{width} grid", cells.len())));
        }
        let goals = cells.iter().filter(|&&c| c == Cell::Goal).count();
        if goals != 1 {
            return Err(EnvError::Layout(format!("expected exactly one goal, found {goals}")));
        }
        if !cells.contains(&Cell::Free) {
            return Err(EnvError::Layout("no free cells".into()));
        }
        let layout = Self { height, width, cells };
        layout.check_reachability()?;
        Ok(layout)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    pub fn goal(&self) -> (usize, usize) {
        let k = self.cells.iter().position(|&c| c == Cell::Goal).expect("validated");
        (k / self.width, k % self.width)
    }

    /// Cell reached from `(row, col)` by `action`; walls and the border block.
    pub fn moved(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        let (dr, dc) = MAZE_ACTIONS[action];
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            return (row, col);
        }
        let (r, c) = (r as usize, c as usize);
        if self.cell(r, c) == Cell::Wall {
            (row, col)
        } else {
            (r, c)
        }
    }

    /// Breadth-first step counts to the goal; `None` for walls.
    pub fn goal_distances(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cells.len()];
        let (gr, gc) = self.goal();
        dist[gr * self.width + gc] = Some(0);
        let mut queue = VecDeque::from([(gr, gc)]);
        while let Some((r, c)) = queue.pop_front() {
            let d = dist[r * self.width + c].expect("queued cells have distances");
            for a in 0..MAZE_ACTIONS.len() {
                let (nr, nc) = self.moved(r, c, a);
                let k = nr * self.width + nc;
                if dist[k].is_none() {
                    dist[k] = Some(d + 1);
                    queue.push_back((nr, nc));
                }
            }
        }
        dist
    }

    fn check_reachability(&self) -> Result<(), EnvError> {
        let dist = self.goal_distances();
        for (k, cell) in self.cells.iter().enumerate() {
            if *cell == Cell::Free && dist[k].is_none() {
                return Err(EnvError::Unreachable { row: k / self.width, col: k % self.width });
            }
        }
        Ok(())
    }
}

impl FromStr for MazeLayout {
    type Err = EnvError;

    /// One row per line using `.` (free), `#` (wall) and `G` (goal).
    fn from_str(s: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = s.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Layout(format!(
                    "row {i} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for (j, ch) in row.chars().enumerate() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Wall,
                    'G' => Cell::Goal,
                    other => return Err(EnvError::Layout(format!("unknown cell {other:?} at row {i}, col {j}"))),
                });
            }
        }
        Self::new(rows.len(), width, cells)
    }
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = match self.cell(r, c) {
                    Cell::Free => '.',
                    Cell::Wall => '#',
                    Cell::Goal => 'G',
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MazeParams {
    pub gamma: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    /// Whether the goal cell is itself a start context.
    pub goal_is_start: bool,
}

impl Default for MazeParams {
    fn default() -> Self {
        Self { gamma: 0.99, step_reward: -1.0, goal_reward: 0.0, goal_is_start: false }
    }
}

/// A maze layout compiled to a tabular model.
///
/// States are the non-wall cells in row-major order (goal included); contexts
/// are the start cells in the same order.
#[derive(Clone, Debug)]
pub struct Maze {
    layout: MazeLayout,
    cmdp: TabularCMDP,
    cells: Vec<(usize, usize)>,
    state_index: Vec<Option<usize>>,
    goal_state: usize,
}

impl Maze {
    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn cmdp(&self) -> &TabularCMDP {
        &self.cmdp
    }

    pub fn goal_state(&self) -> usize {
        self.goal_state
    }

    /// Grid position of a state.
    pub fn cell_of(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.layout.height || col >= self.layout.width {
            return None;
        }
        self.state_index[row * self.layout.width + col]
    }

    /// Start state of every context.
    pub fn context_states(&self) -> &[usize] {
        self.cmdp.context_states().expect("maze contexts are start cells")
    }

    pub fn context_at(&self, row: usize, col: usize) -> Option<usize> {
        let s = self.state_at(row, col)?;
        self.context_states().iter().position(|&t| t == s)
    }

    /// Shortest-path step counts to the goal for every context.
    pub fn context_goal_distances(&self) -> Vec<usize> {
        let dist = self.layout.goal_distances();
        self.context_states()
            .iter()
            .map(|&s| {
                let (r, c) = self.cells[s];
                dist[r * self.layout.width + c].expect("validated reachable")
            })
            .collect()
    }
}

/// Compiles a layout into a deterministic tabular model with one context per
/// start cell.
pub fn maze_from_layout(layout: &MazeLayout, params: &MazeParams) -> Result<Maze, EnvError> {
    let (h, w) = (layout.height(), layout.width());
    let mut cells = Vec::new();
    let mut state_index = vec![None; h * w];
    for r in 0..h {
        for c in 0..w {
            if layout.cell(r, c) != Cell::Wall {
                state_index[r * w + c] = Some(cells.len());
                cells.push((r, c));
            }
        }
    }
    let (gr, gc) = layout.goal();
    let goal_state = state_index[gr * w + gc].expect("goal is not a wall");

    let mut builder = TabularBuilder::new(cells.len(), MAZE_ACTIONS.len(), params.gamma).terminal(goal_state);
    for (s, &(r, c)) in cells.iter().enumerate() {
        if s == goal_state {
            continue;
        }
        for a in 0..MAZE_ACTIONS.len() {
            let (nr, nc) = layout.moved(r, c, a);
            let next = state_index[nr * w + nc].expect("moves land on non-wall cells");
            let reward = if next == goal_state { params.goal_reward } else { params.step_reward };
            builder = builder.transition(s, a, vec![(next, 1.0)], reward);
        }
    }
    for s in 0..cells.len() {
        if s != goal_state || params.goal_is_start {
            builder = builder.context_at(s);
        }
    }
    let cmdp = builder.build()?;
    Ok(Maze { layout: layout.clone(), cmdp, cells, state_index, goal_state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{enumerate_contexts, step};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corridor(goal_is_start: bool) -> Maze {
        let layout: MazeLayout = "..G".parse().unwrap();
        maze_from_layout(&layout, &MazeParams { goal_is_start, ..MazeParams::default() }).unwrap()
    }

    #[test]
    fn corridor_is_a_three_state_chain() {
        let m = corridor(false);
        assert_eq!(m.cmdp().n_states(), 3);
        assert_eq!(m.goal_state(), 2);
        assert_eq!(enumerate_contexts(m.cmdp()), vec![0, 1]);
        assert_eq!(enumerate_contexts(corridor(true).cmdp()), vec![0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(step(m.cmdp(), 0, 3, 0, &mut rng).unwrap(), (1, -1.0));
        assert_eq!(step(m.cmdp(), 1, 3, 0, &mut rng).unwrap(), (2, 0.0));
        assert_eq!(step(m.cmdp(), 2, 2, 0, &mut rng).unwrap(), (2, 0.0));
    }

    #[test]
    fn walls_and_border_block() {
        let layout: MazeLayout = ".#\n.G".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let top = m.state_at(0, 0).unwrap();
        assert_eq!(step(m.cmdp(), top, 3, 0, &mut rng).unwrap(), (top, -1.0));
        assert_eq!(step(m.cmdp(), top, 0, 0, &mut rng).unwrap(), (top, -1.0));
        assert_eq!(step(m.cmdp(), top, 1, 0, &mut rng).unwrap().0, m.state_at(1, 0).unwrap());
    }

    #[test]
    fn enclosed_cell_rejected() {
        let err = "..#.\n.G#.\n###.".parse::<MazeLayout>().unwrap_err();
        assert!(matches!(err, EnvError::Unreachable { row: 0, col: 3 }));
    }

    #[test]
    fn malformed_layouts_rejected() {
        assert!(matches!("..\n.".parse::<MazeLayout>(), Err(EnvError::Layout(_))));
        assert!(matches!("...".parse::<MazeLayout>(), Err(EnvError::Layout(_))));
        assert!(matches!("G.G".parse::<MazeLayout>(), Err(EnvError::Layout(_))));
        assert!(matches!("G#".parse::<MazeLayout>(), Err(EnvError::Layout(_))));
        assert!(matches!(".x.G".parse::<MazeLayout>(), Err(EnvError::Layout(_))));
    }

    #[test]
    fn display_round_trips() {
        let text = "#..\n.#G\n...\n";
        let layout: MazeLayout = text.parse().unwrap();
        assert_eq!(layout.to_string(), text);
    }

    #[test]
    fn goal_distances_follow_corridors() {
        let layout: MazeLayout = "G.#\n#..\n...".parse().unwrap();
        let m = maze_from_layout(&layout, &MazeParams::default()).unwrap();
        assert_eq!(m.context_goal_distances(), vec![1, 2, 3, 4, 3, 4]);
    }
}
