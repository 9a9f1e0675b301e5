use std::collections::HashMap;
use std::hash::Hash;

/// State-action values with lazily created zero rows.
#[derive(Debug, Clone)]
pub struct QTable<S> {
    actions: usize,
    rows: HashMap<S, Vec<f64>>,
}

impl<S: Hash + Eq + Clone> QTable<S> {
    pub fn new(actions: usize) -> Self {
        QTable {
            actions,
            rows: HashMap::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, state: &S, action: usize) -> f64 {
        self.rows.get(state).map_or(0.0, |r| r[action])
    }

    /// Row of values, zeros for an unseen state.
    pub fn row(&self, state: &S) -> Vec<f64> {
        self.rows
            .get(state)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.actions])
    }

    pub fn set(&mut self, state: &S, action: usize, value: f64) {
        let actions = self.actions;
        self.rows
            .entry(state.clone())
            .or_insert_with(|| vec![0.0; actions])[action] = value;
    }

    /// Largest value among `actions` in `state`; 0 when there are none.
    pub fn max_over(&self, state: &S, actions: &[usize]) -> f64 {
        actions
            .iter()
            .map(|&a| self.get(state, a))
            .fold(None, |m: Option<f64>, q| Some(m.map_or(q, |m| m.max(q))))
            .unwrap_or(0.0)
    }
}

/// Which bootstrap value a tabular update uses.
#[derive(Debug, Clone, Copy)]
pub enum Bootstrap<'a> {
    /// Off-policy: best value over the given next actions.
    Max(&'a [usize]),
    /// On-policy: value of the action actually chosen next.
    Action(usize),
    Terminal,
}

/// `Q(s,a) += lr * (r + gamma * bootstrap - Q(s,a))`; returns the TD error.
pub fn tabular_update<S: Hash + Eq + Clone>(
    table: &mut QTable<S>,
    state: &S,
    action: usize,
    reward: f64,
    next_state: &S,
    bootstrap: Bootstrap<'_>,
    learning_rate: f64,
    gamma: f64,
) -> f64 {
    let next = match bootstrap {
        Bootstrap::Max(actions) => table.max_over(next_state, actions),
        Bootstrap::Action(a) => table.get(next_state, a),
        Bootstrap::Terminal => 0.0,
    };
    let q = table.get(state, action);
    let td = reward + gamma * next - q;
    table.set(state, action, q + learning_rate * td);
    td
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_update_with_unit_rate() {
        let mut t: QTable<u8> = QTable::new(2);
        tabular_update(&mut t, &0, 1, 5.0, &1, Bootstrap::Terminal, 1.0, 0.9);
        assert_eq!(t.get(&0, 1), 5.0);
        assert_eq!(t.get(&0, 0), 0.0);
    }

    #[test]
    fn q_learning_bootstraps_on_the_max() {
        let mut t: QTable<u8> = QTable::new(2);
        t.set(&1, 0, 2.0);
        t.set(&1, 1, 4.0);
        tabular_update(&mut t, &0, 0, 1.0, &1, Bootstrap::Max(&[0, 1]), 0.5, 0.5);
        // 0 + 0.5 * (1 + 0.5 * 4 - 0)
        assert_eq!(t.get(&0, 0), 1.5);
        let mut s = t.clone();
        tabular_update(&mut s, &0, 1, 1.0, &1, Bootstrap::Action(0), 1.0, 0.5);
        assert_eq!(s.get(&0, 1), 2.0);
    }

    #[test]
    fn max_over_masks_actions() {
        let mut t: QTable<u8> = QTable::new(3);
        t.set(&0, 2, 9.0);
        t.set(&0, 1, -1.0);
        assert_eq!(t.max_over(&0, &[1]), -1.0);
        assert_eq!(t.max_over(&0, &[]), 0.0);
    }
}
