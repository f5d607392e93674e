//! Deterministic decision-bounded gridworlds and an exact dynamic-programming
//! oracle over the (cell, decisions-remaining) product space.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{
    Action, ActionSpec, Environment, ExhaustionRule, Observation, StepOutcome, StreamRng,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Direction::ALL.get(i).copied()
    }
}

/// Straight corridor: 30 moves from start to goal.
pub const STRAIGHT_LAYOUT: &str = "S.............................G";

/// Default Slalom: three horizontal corridors joined by two-move turns, with
/// dead-end pockets past the start and the goal. Shortest path 15, equal to
/// the decision limit.
pub const SLALOM_LAYOUT: &str = "\
..S.....
#######.
........
####.###
.G......";

/// Default Combined: a straight into the Slalom switchback, then a straight
/// back out to the goal. Shortest path 66 against a limit of 60 decisions.
pub const COMBINED_LAYOUT: &str = "\
S.................................
#################################.
##########################........
##############################.###
####G.............................";

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    name: String,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: Cell,
    goal: Cell,
    step_reward: f64,
    exhaustion_penalty: f64,
    decision_limit: usize,
}

impl GridWorld {
    /// Parses a layout (`#` wall, `S` start, `G` goal, `.` floor). Short
    /// rows are padded with walls.
    pub fn from_text(
        name: &str,
        text: &str,
        step_reward: f64,
        exhaustion_penalty: f64,
        decision_limit: usize,
    ) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.trim_end().chars().count()).max().unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(Error::Layout("empty layout".into()));
        }
        let mut walls = vec![true; width * height];
        let (mut start, mut goal) = (None, None);
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.trim_end().chars().enumerate() {
                let idx = r * width + c;
                match ch {
                    '#' => {}
                    '.' => walls[idx] = false,
                    'S' => {
                        walls[idx] = false;
                        if start.replace(Cell::new(r, c)).is_some() {
                            return Err(Error::Layout("more than one start".into()));
                        }
                    }
                    'G' => {
                        walls[idx] = false;
                        if goal.replace(Cell::new(r, c)).is_some() {
                            return Err(Error::Layout("more than one goal".into()));
                        }
                    }
                    other => return Err(Error::Layout(format!("unknown cell `{other}`"))),
                }
            }
        }
        let start = start.ok_or_else(|| Error::Layout("no start".into()))?;
        let goal = goal.ok_or_else(|| Error::Layout("no goal".into()))?;
        let world = GridWorld {
            name: name.to_string(),
            width,
            height,
            walls,
            start,
            goal,
            step_reward,
            exhaustion_penalty,
            decision_limit,
        };
        if decision_limit == 0 {
            return Err(Error::Layout("decision limit must be >= 1".into()));
        }
        if world.shortest_path_len().is_none() {
            return Err(Error::Layout("goal unreachable from start".into()));
        }
        Ok(world)
    }

    pub fn straight() -> Self {
        Self::from_text("straight", STRAIGHT_LAYOUT, -1.0, -50.0, 15).expect("built-in layout")
    }

    pub fn slalom() -> Self {
        Self::from_text("slalom", SLALOM_LAYOUT, -1.0, -50.0, 15).expect("built-in layout")
    }

    pub fn combined() -> Self {
        Self::from_text("combined", COMBINED_LAYOUT, -1.0, -100.0, 60).expect("built-in layout")
    }

    /// Serpentine of `turns + 1` horizontal corridors, each `corridor_len`
    /// moves long, joined by two-move vertical turns through a wall row.
    pub fn slalom_with(
        corridor_len: usize,
        turns: usize,
        decision_limit: usize,
        exhaustion_penalty: f64,
    ) -> Result<Self> {
        if corridor_len == 0 {
            return Err(Error::Layout("corridor length must be >= 1".into()));
        }
        let width = corridor_len + 1;
        let mut rows = Vec::new();
        for k in 0..=turns {
            let mut row = vec!['.'; width];
            if k == 0 {
                row[0] = 'S';
            }
            if k == turns {
                row[if k % 2 == 0 { width - 1 } else { 0 }] = 'G';
            }
            rows.push(row.into_iter().collect::<String>());
            if k < turns {
                let mut wall = vec!['#'; width];
                wall[if k % 2 == 0 { width - 1 } else { 0 }] = '.';
                rows.push(wall.into_iter().collect());
            }
        }
        Self::from_text("slalom", &rows.join("\n"), -1.0, exhaustion_penalty, decision_limit)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn step_reward(&self) -> f64 {
        self.step_reward
    }

    pub fn exhaustion_penalty(&self) -> f64 {
        self.exhaustion_penalty
    }

    pub fn decision_limit(&self) -> usize {
        self.decision_limit
    }

    pub fn with_decision_limit(mut self, limit: usize) -> Self {
        self.decision_limit = limit.max(1);
        self
    }

    pub fn cell_id(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_from_id(&self, id: usize) -> Cell {
        Cell::new(id / self.width, id % self.width)
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        cell.row >= self.height || cell.col >= self.width || self.walls[self.cell_id(cell)]
    }

    /// Deterministic move; bumping a wall or the border leaves the agent in
    /// place and still costs `step_reward`.
    fn moved(&self, cell: Cell, dir: Direction) -> Cell {
        let next = match dir {
            Direction::Up if cell.row > 0 => Cell::new(cell.row - 1, cell.col),
            Direction::Down => Cell::new(cell.row + 1, cell.col),
            Direction::Left if cell.col > 0 => Cell::new(cell.row, cell.col - 1),
            Direction::Right => Cell::new(cell.row, cell.col + 1),
            _ => return cell,
        };
        if self.is_wall(next) {
            cell
        } else {
            next
        }
    }

    /// One transition: `(next cell, reward, reached goal)`.
    pub fn step(&self, cell: Cell, dir: Direction) -> Result<(Cell, f64, bool)> {
        if self.is_wall(cell) {
            return Err(Error::contract(format!("cell {cell:?} is not a floor cell")));
        }
        if cell == self.goal {
            return Err(Error::contract("stepping from the goal of a terminated episode"));
        }
        let next = self.moved(cell, dir);
        Ok((next, self.step_reward, next == self.goal))
    }

    pub fn shortest_path_len(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.n_cells()];
        let mut queue = VecDeque::from([self.start]);
        dist[self.cell_id(self.start)] = 0;
        while let Some(c) = queue.pop_front() {
            if c == self.goal {
                return Some(dist[self.cell_id(c)]);
            }
            for dir in Direction::ALL {
                let n = self.moved(c, dir);
                if dist[self.cell_id(n)] == usize::MAX {
                    dist[self.cell_id(n)] = dist[self.cell_id(c)] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                out.push(if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'G'
                } else if self.is_wall(cell) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Gridworld as an [`Environment`]: the observation is `[cell id]`.
#[derive(Debug, Clone)]
pub struct GridEnv {
    world: Arc<GridWorld>,
    cell: Cell,
    done: bool,
    spec: ActionSpec,
    bounded: bool,
    max_steps: usize,
}

impl GridEnv {
    pub fn new(world: Arc<GridWorld>) -> Self {
        let cell = world.start();
        GridEnv {
            world,
            cell,
            done: false,
            spec: ActionSpec::Discrete { n: 4 },
            bounded: true,
            max_steps: 10_000,
        }
    }

    /// Same world without the decision limit (plain episodic MDP).
    pub fn unbounded(world: Arc<GridWorld>, max_steps: usize) -> Self {
        GridEnv {
            bounded: false,
            max_steps,
            ..Self::new(world)
        }
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    fn observe(&self) -> Observation {
        Observation(vec![self.world.cell_id(self.cell) as f64])
    }
}

impl Environment for GridEnv {
    fn observation_dim(&self) -> usize {
        1
    }

    fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn decision_limit(&self) -> Option<usize> {
        self.bounded.then(|| self.world.decision_limit())
    }

    fn exhaustion_rule(&self) -> ExhaustionRule {
        ExhaustionRule {
            penalty: self.world.exhaustion_penalty(),
            terminal: true,
        }
    }

    fn reset(&mut self, _rng: &mut StreamRng) -> Observation {
        self.cell = self.world.start();
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::contract("step on a terminated gridworld episode"));
        }
        let dir = match action {
            Action::Discrete(i) => Direction::from_index(*i)
                .ok_or_else(|| Error::contract(format!("grid action {i} out of range")))?,
            Action::Continuous(_) => return Err(Error::contract("gridworld takes discrete actions")),
        };
        let (next, reward, done) = self.world.step(self.cell, dir)?;
        self.cell = next;
        self.done = done;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminated: done,
            truncated: false,
        })
    }
}

/// Committed action sequences available to an agent, for [`oracle_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroSet {
    /// One move per decision.
    OneStep,
    /// Each decision repeats one direction `k` times.
    Repeat(usize),
    /// `OneStep` and `Repeat(k)` freely interleaved.
    Union(usize),
    /// Layered agent with window `tau`: each window is either one repeated
    /// direction (one decision) or `tau` individually chosen moves (one
    /// decision per move). Windows are aligned to multiples of `tau`.
    LayeredWindows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Charge {
    Once,
    PerStep,
}

#[derive(Debug, Clone)]
struct Plan {
    moves: Vec<Direction>,
    charge: Charge,
    fast: bool,
}

impl MacroSet {
    fn plans(self) -> Vec<Plan> {
        let repeat = |k: usize| {
            Direction::ALL.iter().map(move |&d| Plan {
                moves: vec![d; k],
                charge: Charge::Once,
                fast: false,
            })
        };
        match self {
            MacroSet::OneStep => repeat(1).collect(),
            MacroSet::Repeat(k) => repeat(k.max(1)).collect(),
            MacroSet::Union(k) => repeat(1).chain(repeat(k.max(1))).collect(),
            MacroSet::LayeredWindows(tau) => {
                let tau = tau.max(1);
                let mut plans: Vec<Plan> = repeat(tau).collect();
                for code in 0..4usize.pow(tau as u32) {
                    let mut c = code;
                    let moves = (0..tau)
                        .map(|_| {
                            let d = Direction::ALL[c % 4];
                            c /= 4;
                            d
                        })
                        .collect();
                    plans.push(Plan {
                        moves,
                        charge: Charge::PerStep,
                        fast: true,
                    });
                }
                plans
            }
        }
    }
}

/// Best achievable outcome from the start state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSolution {
    pub optimal_return: f64,
    /// Fewest decisions among plans achieving `optimal_return`.
    pub min_decisions: usize,
    pub reaches_goal: bool,
    /// Objective actually maximised (equals `optimal_return` unless a
    /// fast-step penalty was given).
    pub shaped_value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Value {
    shaped: f64,
    ret: f64,
    decisions: usize,
    reached: bool,
}

impl Value {
    fn better_than(&self, other: &Value) -> bool {
        (self.shaped, self.ret, std::cmp::Reverse(self.decisions))
            .partial_cmp(&(other.shaped, other.ret, std::cmp::Reverse(other.decisions)))
            .is_some_and(|o| o.is_gt())
    }
}

/// Exact optimum over `(cell, decisions remaining)`: maximises return, then
/// minimises decisions. A plan that cuts off at the goal stops there; running
/// out of decisions away from the goal yields the exhaustion penalty.
pub fn oracle_solve(world: &GridWorld, macros: MacroSet) -> OracleSolution {
    oracle_solve_shaped(world, macros, 0.0)
}

/// As [`oracle_solve`], but every move made inside a per-step ("fast")
/// window additionally costs `fast_step_penalty` in the maximised objective.
/// With the energy penalty `p` this predicts what a converged layered agent
/// trades off; the reported return is the unshaped one.
pub fn oracle_solve_shaped(world: &GridWorld, macros: MacroSet, fast_step_penalty: f64) -> OracleSolution {
    let plans = macros.plans();
    let limit = world.decision_limit();
    let n = world.n_cells();
    let exhausted = Value {
        shaped: world.exhaustion_penalty(),
        ret: world.exhaustion_penalty(),
        decisions: 0,
        reached: false,
    };
    // table[d][cell]
    let mut table: Vec<Vec<Value>> = vec![vec![exhausted; n]];
    for d in 1..=limit {
        let mut row = vec![exhausted; n];
        for (id, slot) in row.iter_mut().enumerate() {
            let cell = world.cell_from_id(id);
            if world.is_wall(cell) || cell == world.goal() {
                continue;
            }
            let mut best: Option<Value> = None;
            for plan in &plans {
                let v = simulate(world, &table, cell, d, plan, fast_step_penalty);
                if best.as_ref().is_none_or(|b| v.better_than(b)) {
                    best = Some(v);
                }
            }
            *slot = best.expect("non-empty macro set");
        }
        table.push(row);
    }
    let v = table[limit][world.cell_id(world.start())];
    OracleSolution {
        optimal_return: v.ret,
        min_decisions: v.decisions,
        reaches_goal: v.reached,
        shaped_value: v.shaped,
    }
}

fn simulate(
    world: &GridWorld,
    table: &[Vec<Value>],
    start: Cell,
    mut left: usize,
    plan: &Plan,
    fast_penalty: f64,
) -> Value {
    let mut acc = Value {
        shaped: 0.0,
        ret: 0.0,
        decisions: 0,
        reached: false,
    };
    if plan.charge == Charge::Once {
        left -= 1;
        acc.decisions += 1;
    }
    let mut cell = start;
    for &dir in &plan.moves {
        if plan.charge == Charge::PerStep {
            if left == 0 {
                return join(acc, table[0][0]);
            }
            left -= 1;
            acc.decisions += 1;
        }
        cell = world.moved(cell, dir);
        acc.ret += world.step_reward();
        acc.shaped += world.step_reward() - if plan.fast { fast_penalty } else { 0.0 };
        if cell == world.goal() {
            acc.reached = true;
            return acc;
        }
    }
    join(acc, table[left][world.cell_id(cell)])
}

fn join(head: Value, tail: Value) -> Value {
    Value {
        shaped: head.shaped + tail.shaped,
        ret: head.ret + tail.ret,
        decisions: head.decisions + tail.decisions,
        reached: tail.reached,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RngStream;

    #[test]
    fn built_in_parameters() {
        let s = GridWorld::straight();
        assert_eq!(s.shortest_path_len(), Some(30));
        assert_eq!(s.decision_limit(), 15);
        assert_eq!(s.exhaustion_penalty(), -50.0);
        let sl = GridWorld::slalom();
        assert_eq!(sl.shortest_path_len(), Some(15));
        assert_eq!(sl.decision_limit(), 15);
        assert_eq!(sl.exhaustion_penalty(), -50.0);
        let c = GridWorld::combined();
        assert_eq!(c.shortest_path_len(), Some(66));
        assert_eq!(c.decision_limit(), 60);
        assert_eq!(c.exhaustion_penalty(), -100.0);
    }

    #[test]
    fn grid_step_examples() {
        let s = GridWorld::straight();
        let c0 = s.start();
        assert_eq!(s.step(c0, Direction::Right).unwrap(), (Cell::new(0, 1), -1.0, false));
        assert_eq!(s.step(c0, Direction::Left).unwrap(), (c0, -1.0, false));
        assert_eq!(s.step(c0, Direction::Up).unwrap(), (c0, -1.0, false));
        let before_goal = Cell::new(0, 29);
        assert_eq!(s.step(before_goal, Direction::Right).unwrap(), (s.goal(), -1.0, true));
        assert!(s.step(s.goal(), Direction::Left).is_err());
    }

    #[test]
    fn text_round_trip() {
        for w in [GridWorld::straight(), GridWorld::slalom(), GridWorld::combined()] {
            let back = GridWorld::from_text(
                w.name(),
                &w.to_text(),
                w.step_reward(),
                w.exhaustion_penalty(),
                w.decision_limit(),
            )
            .unwrap();
            assert_eq!(back, w);
        }
    }

    #[test]
    fn layout_errors() {
        assert!(GridWorld::from_text("x", "S#G", -1.0, -50.0, 5).is_err());
        assert!(GridWorld::from_text("x", "S..", -1.0, -50.0, 5).is_err());
        assert!(GridWorld::from_text("x", "SSG", -1.0, -50.0, 5).is_err());
        assert!(GridWorld::from_text("x", "S?G", -1.0, -50.0, 5).is_err());
    }

    #[test]
    fn parameterized_slalom() {
        let w = GridWorld::slalom_with(4, 2, 15, -50.0).unwrap();
        assert_eq!(w.shortest_path_len(), Some(4 * 3 + 2 * 2));
        let w = GridWorld::slalom_with(6, 1, 15, -50.0).unwrap();
        assert_eq!(w.shortest_path_len(), Some(6 * 2 + 2));
    }

    #[test]
    fn oracle_straight() {
        let s = GridWorld::straight();
        let u = oracle_solve(&s, MacroSet::Union(4));
        assert_eq!((u.optimal_return, u.min_decisions, u.reaches_goal), (-30.0, 8, true));
        let one = oracle_solve(&s, MacroSet::OneStep);
        assert_eq!((one.optimal_return, one.reaches_goal), (-65.0, false));
        let rep = oracle_solve(&s, MacroSet::Repeat(4));
        assert_eq!((rep.optimal_return, rep.min_decisions), (-30.0, 8));
        let tla = oracle_solve(&s, MacroSet::LayeredWindows(4));
        assert_eq!((tla.optimal_return, tla.min_decisions), (-30.0, 8));
    }

    #[test]
    fn oracle_slalom() {
        let s = GridWorld::slalom();
        let one = oracle_solve(&s, MacroSet::OneStep);
        assert_eq!((one.optimal_return, one.min_decisions, one.reaches_goal), (-15.0, 15, true));
        let rep = oracle_solve(&s, MacroSet::Repeat(4));
        assert_eq!((rep.optimal_return, rep.reaches_goal), (-31.0, true));
        let tla = oracle_solve(&s, MacroSet::LayeredWindows(4));
        assert_eq!(tla.optimal_return, -15.0);
        // The shortest path stays optimal once fast steps are charged.
        for pen in [0.5, 1.0, 1.5] {
            let shaped = oracle_solve_shaped(&s, MacroSet::LayeredWindows(4), pen);
            assert_eq!(shaped.optimal_return, -15.0, "fast penalty {pen}");
        }
    }

    #[test]
    fn oracle_combined() {
        let c = GridWorld::combined();
        let one = oracle_solve(&c, MacroSet::OneStep);
        assert!(!one.reaches_goal);
        assert_eq!(one.optimal_return, -160.0);
        let rep = oracle_solve(&c, MacroSet::Repeat(4));
        assert_eq!((rep.optimal_return, rep.reaches_goal), (-82.0, true));
        let tla = oracle_solve(&c, MacroSet::LayeredWindows(4));
        assert_eq!((tla.optimal_return, tla.min_decisions), (-66.0, 23));
        let shaped = oracle_solve_shaped(&c, MacroSet::LayeredWindows(4), 1.0);
        assert_eq!((shaped.optimal_return, shaped.min_decisions), (-66.0, 23));
    }

    #[test]
    fn env_wraps_world() {
        let mut env = GridEnv::new(Arc::new(GridWorld::straight()));
        let mut rng = RngStream::new(0).env();
        let obs = env.reset(&mut rng);
        assert_eq!(obs.values(), &[0.0]);
        assert_eq!(env.decision_limit(), Some(15));
        let out = env.step(&Action::Discrete(Direction::Right.index())).unwrap();
        assert_eq!(out.observation.values(), &[1.0]);
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }
}
