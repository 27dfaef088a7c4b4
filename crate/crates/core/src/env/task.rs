//! Synthetic navigation tasks: screen graphs, task specs, and the pool generator.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub type ScreenId = usize;
pub type ActionIndex = usize;

/// Directed graph of screens with a uniform action set per screen.
///
/// Every non-terminal `(screen, action)` pair has exactly one successor. The
/// terminal action ends the episode and has no successor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct ScreenGraph {
    screens: usize,
    actions: usize,
    terminal: ActionIndex,
    // row-major [screen][action]; the terminal slot holds the screen itself
    next: Vec<ScreenId>,
}

/// Explicit edge-list form used on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    screens: usize,
    actions_per_screen: usize,
    terminal_action_index: usize,
    /// `[from, action, to]` for every non-terminal pair.
    edges: Vec<[usize; 3]>,
}

impl From<ScreenGraph> for GraphDoc {
    fn from(g: ScreenGraph) -> Self {
        let mut edges = Vec::with_capacity(g.screens * (g.actions - 1));
        for s in 0..g.screens {
            for a in 0..g.actions {
                if a != g.terminal {
                    edges.push([s, a, g.next[s * g.actions + a]]);
                }
            }
        }
        GraphDoc {
            screens: g.screens,
            actions_per_screen: g.actions,
            terminal_action_index: g.terminal,
            edges,
        }
    }
}

impl TryFrom<GraphDoc> for ScreenGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let (n, a) = (doc.screens, doc.actions_per_screen);
        let mut next: Vec<Option<ScreenId>> = vec![None; n * a];
        for [from, action, to] in doc.edges {
            if from >= n || to >= n || action >= a || action == doc.terminal_action_index {
                return Err(Error::config(format!("bad edge [{from}, {action}, {to}]")));
            }
            if next[from * a + action].replace(to).is_some() {
                return Err(Error::config(format!(
                    "duplicate edge for ({from}, {action})"
                )));
            }
        }
        let next = next
            .into_iter()
            .enumerate()
            .map(|(i, to)| {
                if i % a == doc.terminal_action_index {
                    Ok(i / a)
                } else {
                    to.ok_or_else(|| {
                        Error::config(format!("missing edge for ({}, {})", i / a, i % a))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ScreenGraph::from_successors(n, a, doc.terminal_action_index, next)
    }
}

impl ScreenGraph {
    /// Builds a graph from a row-major successor table. Terminal slots are
    /// ignored.
    pub fn from_successors(
        screens: usize,
        actions: usize,
        terminal: ActionIndex,
        mut next: Vec<ScreenId>,
    ) -> Result<Self> {
        if screens == 0 || actions < 2 || terminal >= actions {
            return Err(Error::config(format!(
                "graph needs screens >= 1, actions >= 2, terminal < actions (got {screens}, {actions}, {terminal})"
            )));
        }
        if next.len() != screens * actions {
            return Err(Error::config("successor table has the wrong size"));
        }
        for (i, to) in next.iter_mut().enumerate() {
            if i % actions == terminal {
                *to = i / actions;
            } else if *to >= screens {
                return Err(Error::config(format!("successor {to} out of range")));
            }
        }
        Ok(Self {
            screens,
            actions,
            terminal,
            next,
        })
    }

    pub fn screens(&self) -> usize {
        self.screens
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn terminal_action(&self) -> ActionIndex {
        self.terminal
    }

    /// Successor of a non-terminal action.
    pub fn successor(&self, screen: ScreenId, action: ActionIndex) -> Option<ScreenId> {
        (action != self.terminal && action < self.actions && screen < self.screens)
            .then(|| self.next[screen * self.actions + action])
    }

    /// BFS distance (in navigation steps) from every screen to `goal`.
    pub fn distances_to(&self, goal: ScreenId) -> Vec<Option<usize>> {
        let mut preds: Vec<Vec<ScreenId>> = vec![Vec::new(); self.screens];
        for s in 0..self.screens {
            for a in 0..self.actions {
                if let Some(t) = self.successor(s, a) {
                    preds[t].push(s);
                }
            }
        }
        let mut dist = vec![None; self.screens];
        dist[goal] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(t) = queue.pop_front() {
            let d = dist[t].unwrap_or(0);
            for &p in &preds[t] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }
}

/// One navigation task. `task_id` plays the role of the instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: u64,
    /// Tasks of one family share the graph and goal and differ in start screen.
    pub family: u32,
    pub graph: ScreenGraph,
    pub start_screen: ScreenId,
    pub goal_screen: ScreenId,
    pub max_steps: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn actions(&self) -> usize {
        self.graph.actions()
    }

    /// Checks the task invariants: valid screens and a shortest path that
    /// leaves room for the final terminal action.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.screens();
        if self.start_screen >= n || self.goal_screen >= n {
            return Err(Error::config(format!(
                "task {}: screen out of range",
                self.task_id
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::config(format!(
                "task {}: max_steps must be positive",
                self.task_id
            )));
        }
        match self.shortest_path_len() {
            Some(d) if d < self.max_steps => Ok(()),
            Some(d) => Err(Error::config(format!(
                "task {}: shortest path {d} does not fit in {} steps",
                self.task_id, self.max_steps
            ))),
            None => Err(Error::config(format!(
                "task {}: goal unreachable",
                self.task_id
            ))),
        }
    }

    pub fn shortest_path_len(&self) -> Option<usize> {
        self.graph.distances_to(self.goal_screen)[self.start_screen]
    }

    /// Oracle-optimal action per screen: terminal at the goal, otherwise the
    /// lowest-index action that moves one step closer. `None` where the goal
    /// is unreachable.
    pub fn oracle_actions(&self) -> Vec<Option<ActionIndex>> {
        let dist = self.graph.distances_to(self.goal_screen);
        (0..self.graph.screens())
            .map(|s| {
                if s == self.goal_screen {
                    return Some(self.graph.terminal_action());
                }
                let d = dist[s]?;
                (0..self.graph.actions()).find(|&a| {
                    self.graph
                        .successor(s, a)
                        .is_some_and(|t| dist[t] == Some(d - 1))
                })
            })
            .collect()
    }

    /// Screens visited by the oracle from start to goal, inclusive.
    pub fn oracle_path(&self) -> Vec<ScreenId> {
        let oracle = self.oracle_actions();
        let mut path = vec![self.start_screen];
        let mut s = self.start_screen;
        while s != self.goal_screen {
            match oracle[s].and_then(|a| self.graph.successor(s, a)) {
                Some(t) if path.len() <= self.graph.screens() => {
                    path.push(t);
                    s = t;
                }
                _ => break,
            }
        }
        path
    }
}

/// Ranges for the pool generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolParams {
    pub min_screens: usize,
    pub max_screens: usize,
    pub actions: usize,
    pub terminal_action: Option<ActionIndex>,
    pub max_steps: usize,
    pub tasks_per_family: usize,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            min_screens: 4,
            max_screens: 8,
            actions: 6,
            terminal_action: None,
            max_steps: 25,
            tasks_per_family: 3,
        }
    }
}

impl PoolParams {
    pub fn terminal(&self) -> ActionIndex {
        self.terminal_action
            .unwrap_or(self.actions.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_screens < 3 {
            return Err(Error::config(format!(
                "pool.min_screens must be >= 3, got {}",
                self.min_screens
            )));
        }
        if self.max_screens < self.min_screens {
            return Err(Error::config(
                "pool.max_screens must be >= pool.min_screens",
            ));
        }
        if self.actions < 2 {
            return Err(Error::config(format!(
                "pool.actions must be >= 2, got {}",
                self.actions
            )));
        }
        if self.terminal() >= self.actions {
            return Err(Error::config("pool.terminal_action must be < pool.actions"));
        }
        // one navigation step plus the terminal action is the least a task needs
        if self.max_steps < 2 {
            return Err(Error::config(format!(
                "pool.max_steps must be >= 2 for a connected task to exist, got {}",
                self.max_steps
            )));
        }
        if self.tasks_per_family == 0 || self.tasks_per_family >= self.min_screens {
            return Err(Error::config(format!(
                "pool.tasks_per_family must lie in [1, min_screens - 1], got {}",
                self.tasks_per_family
            )));
        }
        Ok(())
    }
}

/// Generates `count` tasks deterministically from `pool_seed`.
///
/// Each family draws a fresh graph and goal, wires a random in-tree towards the
/// goal (depth at most `max_steps - 1`, so every start fits the step budget),
/// then picks distinct start screens for its tasks.
pub fn generate_task_pool(
    pool_seed: u64,
    count: usize,
    params: &PoolParams,
) -> Result<Vec<TaskSpec>> {
    if count == 0 {
        return Err(Error::config("pool.count must be >= 1"));
    }
    params.validate()?;
    let families = count.div_ceil(params.tasks_per_family);
    let mut tasks = Vec::with_capacity(count);
    for family in 0..families {
        let mut rng = rng::stream(pool_seed, &[domain::POOL, family as u64]);
        let (graph, goal) = random_graph(&mut rng, params);
        let mut starts: Vec<ScreenId> = (0..graph.screens()).filter(|&s| s != goal).collect();
        starts.shuffle(&mut rng);
        for &start in starts.iter().take(params.tasks_per_family) {
            if tasks.len() == count {
                break;
            }
            let task_id = tasks.len() as u64;
            let task = TaskSpec {
                task_id,
                family: family as u32,
                graph: graph.clone(),
                start_screen: start,
                goal_screen: goal,
                max_steps: params.max_steps,
                seed: rng::derive_seed(pool_seed, &[domain::POOL, family as u64, task_id]),
            };
            task.validate()?;
            tasks.push(task);
        }
    }
    Ok(tasks)
}

fn random_graph<R: Rng>(rng: &mut R, params: &PoolParams) -> (ScreenGraph, ScreenId) {
    let n = rng.random_range(params.min_screens..=params.max_screens);
    let a = params.actions;
    let terminal = params.terminal();
    let mut next: Vec<ScreenId> = (0..n * a).map(|_| rng.random_range(0..n)).collect();
    let goal = rng.random_range(0..n);

    let nav: Vec<ActionIndex> = (0..a).filter(|&x| x != terminal).collect();
    let max_depth = params.max_steps - 1;
    let mut order: Vec<ScreenId> = (0..n).filter(|&s| s != goal).collect();
    order.shuffle(rng);
    let mut depth = vec![usize::MAX; n];
    depth[goal] = 0;
    let mut attached = vec![goal];
    for s in order {
        let parents: Vec<ScreenId> = attached
            .iter()
            .copied()
            .filter(|&p| depth[p] < max_depth)
            .collect();
        let parent = *parents
            .choose(rng)
            .expect("goal always qualifies as a parent");
        let slot = *nav.choose(rng).expect("at least one navigation action");
        next[s * a + slot] = parent;
        depth[s] = depth[parent] + 1;
        attached.push(s);
    }
    let graph = ScreenGraph::from_successors(n, a, terminal, next)
        .expect("generator respects graph bounds");
    (graph, goal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: usize) -> PoolParams {
        PoolParams {
            actions: a,
            ..PoolParams::default()
        }
    }

    #[test]
    fn pool_is_deterministic() {
        let a = generate_task_pool(7, 100, &params(4)).unwrap();
        let b = generate_task_pool(7, 100, &params(4)).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_task_pool_repeats() {
        let a = generate_task_pool(7, 1, &params(4)).unwrap();
        let b = generate_task_pool(7, 1, &params(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_give_different_pools() {
        let a = generate_task_pool(7, 100, &params(4)).unwrap();
        let b = generate_task_pool(8, 100, &params(4)).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| x.graph != y.graph));
    }

    #[test]
    fn generated_tasks_satisfy_invariants() {
        let pool = generate_task_pool(11, 60, &PoolParams::default()).unwrap();
        let mut ids: Vec<u64> = pool.iter().map(|t| t.task_id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 60);
        for t in &pool {
            t.validate().unwrap();
            assert_ne!(t.start_screen, t.goal_screen);
            assert!(t
                .graph
                .distances_to(t.goal_screen)
                .iter()
                .all(Option::is_some));
            let path = t.oracle_path();
            assert_eq!(*path.last().unwrap(), t.goal_screen);
            assert_eq!(path.len() - 1, t.shortest_path_len().unwrap());
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        let bad = [
            PoolParams {
                min_screens: 2,
                ..PoolParams::default()
            },
            PoolParams {
                actions: 1,
                ..PoolParams::default()
            },
            PoolParams {
                max_steps: 1,
                ..PoolParams::default()
            },
            PoolParams {
                max_screens: 3,
                ..PoolParams::default()
            },
        ];
        for p in bad {
            assert!(
                matches!(generate_task_pool(1, 5, &p), Err(Error::InvalidConfig(_))),
                "{p:?}"
            );
        }
        assert!(generate_task_pool(1, 0, &PoolParams::default()).is_err());
    }

    #[test]
    fn tight_step_budget_still_fits() {
        let p = PoolParams {
            max_steps: 2,
            ..PoolParams::default()
        };
        for t in generate_task_pool(3, 30, &p).unwrap() {
            assert_eq!(t.shortest_path_len(), Some(1));
        }
    }

    #[test]
    fn graph_json_round_trip_uses_edge_list() {
        let t = &generate_task_pool(5, 1, &PoolParams::default()).unwrap()[0];
        let json = serde_json::to_value(t).unwrap();
        let edges = json["graph"]["edges"].as_array().unwrap();
        assert_eq!(edges.len(), t.graph.screens() * (t.actions() - 1));
        let back: TaskSpec = serde_json::from_value(json).unwrap();
        assert_eq!(&back, t);
    }
}
