//! Small reference instances and a random tree-instance generator.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::Result;
use crate::matrix::CoefficientMatrix;
use crate::partition::AgentPartition;

/// A coefficient matrix together with its agent decomposition.
#[derive(Debug, Clone)]
pub struct Instance {
    pub matrix: CoefficientMatrix,
    pub partition: AgentPartition,
}

impl Instance {
    /// Builds an instance from `(row, col, weight, owner)` quadruples.
    pub fn from_owned_entries(
        n: usize,
        entries: &[(usize, usize, f64, usize)],
        sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let matrix = CoefficientMatrix::new(n, entries.iter().map(|&(j, l, w, _)| (j, l, w)))?;
        let owners = entries.iter().map(|e| e.3).collect();
        let partition = AgentPartition::build(&matrix, sets, owners)?;
        Ok(Self { matrix, partition })
    }

    /// Whole problem held by one agent.
    pub fn centralized(matrix: CoefficientMatrix) -> Result<Self> {
        let partition = AgentPartition::single(&matrix)?;
        Ok(Self { matrix, partition })
    }
}

/// Unit-weight triangle held by one agent.
pub fn triangle() -> Instance {
    let m = CoefficientMatrix::new(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
    Instance::centralized(m).unwrap()
}

/// Two nodes joined by one edge of weight `w`, held by one agent.
pub fn single_edge(w: f64) -> Instance {
    Instance::centralized(CoefficientMatrix::new(2, [(0, 1, w)]).unwrap()).unwrap()
}

/// The eight-node, five-agent network: `J_1 = {1,2,4}`, `J_2 = {1,3,4}`,
/// `J_3 = {4,5}`, `J_4 = {3,6,7}`, `J_5 = {3,8}` (1-based), with weights drawn
/// from `weight` in entry order.
pub fn example_one(mut weight: impl FnMut() -> f64) -> Instance {
    // (row, col, owner), 0-based.
    const PATTERN: [(usize, usize, usize); 9] = [
        (0, 1, 0),
        (0, 3, 0),
        (1, 3, 0),
        (0, 2, 1),
        (2, 3, 1),
        (3, 4, 2),
        (2, 5, 3),
        (2, 6, 3),
        (5, 6, 3),
    ];
    let mut entries: Vec<(usize, usize, f64, usize)> = PATTERN
        .iter()
        .map(|&(j, l, o)| (j, l, weight(), o))
        .collect();
    entries.push((2, 7, weight(), 4));
    let sets = vec![
        vec![0, 1, 3],
        vec![0, 2, 3],
        vec![3, 4],
        vec![2, 5, 6],
        vec![2, 7],
    ];
    Instance::from_owned_entries(8, &entries, sets).unwrap()
}

/// Random tree-structured instance: 2 to 6 agents, at most 24 indices,
/// U[0, 1] weights, random index labels.
///
/// Every agent shares a nonempty subset of its parent's indices and adds one
/// to four fresh ones; each pair inside an agent becomes an entry with
/// probability 1/2, owned by a random agent holding both endpoints.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    let m = rng.random_range(2..=6);
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut next = 0;
    for k in 0..m {
        let mut set = Vec::new();
        if k > 0 {
            let parent = &sets[rng.random_range(0..k)];
            let take = rng.random_range(1..=parent.len().min(3));
            set.extend(parent.choose_multiple(rng, take).copied());
        }
        let fresh = rng.random_range(1..=4);
        set.extend(next..next + fresh);
        next += fresh;
        set.sort_unstable();
        sets.push(set);
    }
    let n = next;

    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let sets: Vec<Vec<usize>> = sets
        .into_iter()
        .map(|s| s.into_iter().map(|j| label[j]).collect())
        .collect();

    let mut pairs: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for set in &sets {
        for (a, &x) in set.iter().enumerate() {
            for &y in &set[a + 1..] {
                let key = (x.min(y), x.max(y));
                if pairs.contains_key(&key) || !rng.random_bool(0.5) {
                    continue;
                }
                let holders: Vec<usize> = (0..m)
                    .filter(|&k| sets[k].contains(&x) && sets[k].contains(&y))
                    .collect();
                let owner = *holders.choose(rng).unwrap();
                pairs.insert(key, (rng.random::<f64>(), owner));
            }
        }
    }
    let entries: Vec<(usize, usize, f64, usize)> = pairs
        .into_iter()
        .map(|((j, l), (w, o))| (j, l, w, o))
        .collect();
    Instance::from_owned_entries(n, &entries, sets)
        .expect("generator produces valid tree instances")
}
