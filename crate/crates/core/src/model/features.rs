use std::collections::{BTreeMap, HashMap};

use ndarray::Array1;

use crate::env::{ScreenId, TaskSpec};
use crate::error::{Error, Result};

/// One-hot encoding over `(task family, screen)` pairs.
///
/// Tasks of one family share a graph and a goal, so a held-out task from a
/// known family reuses the features of its training siblings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    // family -> (offset, screens)
    families: BTreeMap<u32, (usize, usize)>,
    task_family: HashMap<u64, u32>,
}

impl FeatureMap {
    pub fn one_hot(tasks: &[TaskSpec]) -> Self {
        let mut screens: BTreeMap<u32, usize> = BTreeMap::new();
        let mut task_family = HashMap::with_capacity(tasks.len());
        for t in tasks {
            let n = screens.entry(t.family).or_insert(0);
            *n = (*n).max(t.graph.screens());
            task_family.insert(t.task_id, t.family);
        }
        let mut dim = 0;
        let families = screens
            .into_iter()
            .map(|(f, n)| {
                let entry = (f, (dim, n));
                dim += n;
                entry
            })
            .collect();
        Self {
            dim,
            families,
            task_family,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of the single non-zero coordinate.
    pub fn index(&self, task_id: u64, screen: ScreenId) -> Result<usize> {
        let family = self
            .task_family
            .get(&task_id)
            .ok_or_else(|| Error::config(format!("task {task_id} has no feature encoding")))?;
        let (offset, n) = self.families[family];
        if screen >= n {
            return Err(Error::config(format!(
                "screen {screen} out of range for task {task_id}"
            )));
        }
        Ok(offset + screen)
    }

    pub fn encode(&self, task_id: u64, screen: ScreenId) -> Result<Array1<f64>> {
        let mut v = Array1::zeros(self.dim);
        v[self.index(task_id, screen)?] = 1.0;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_task_pool, PoolParams};

    #[test]
    fn encoding_is_unit_norm_and_shared_within_family() {
        let pool = generate_task_pool(3, 12, &PoolParams::default()).unwrap();
        let map = FeatureMap::one_hot(&pool);
        for t in &pool {
            let v = map.encode(t.task_id, t.start_screen).unwrap();
            assert_eq!(v.dot(&v), 1.0);
        }
        let (a, b) = (&pool[0], &pool[1]);
        assert_eq!(a.family, b.family);
        assert_eq!(
            map.encode(a.task_id, 0).unwrap(),
            map.encode(b.task_id, 0).unwrap()
        );
        assert!(map.encode(999, 0).is_err());
    }
}
