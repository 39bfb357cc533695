use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_SHUFFLE_SEED: u64 = 1993;

/// How classes are split into tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncrementSchedule {
    /// Tasks of `k` classes; a remainder smaller than `k` joins the last task.
    Uniform(usize),
    Explicit(Vec<usize>),
}

impl IncrementSchedule {
    pub fn increments(&self, n_classes: usize) -> Result<Vec<usize>> {
        let inc = match self {
            IncrementSchedule::Uniform(k) => {
                if *k == 0 || *k > n_classes {
                    return Err(Error::BadSchedule(format!("increment {k} for {n_classes} classes")));
                }
                let mut v = vec![*k; n_classes / k];
                *v.last_mut().expect("k <= n_classes") += n_classes % k;
                v
            }
            IncrementSchedule::Explicit(v) => v.clone(),
        };
        if inc.contains(&0) {
            return Err(Error::BadSchedule("empty task".into()));
        }
        let total: usize = inc.iter().sum();
        if total != n_classes {
            return Err(Error::BadSchedule(format!("schedule sums to {total}, dataset has {n_classes} classes")));
        }
        Ok(inc)
    }
}

/// Ordered class partition. Positions in `class_order` double as head
/// column indices: task `t` owns positions `offsets[t]..offsets[t + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    pub class_order: Vec<usize>,
    pub increments: Vec<usize>,
    pub shuffle_seed: u64,
}

impl TaskStream {
    pub fn n_tasks(&self) -> usize {
        self.increments.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_order.len()
    }

    fn offset(&self, task: usize) -> usize {
        self.increments[..task].iter().sum()
    }

    /// Dataset class IDs of task `t`.
    pub fn task_classes(&self, task: usize) -> &[usize] {
        let o = self.offset(task);
        &self.class_order[o..o + self.increments[task]]
    }

    /// Dataset class IDs of tasks `0..=task`.
    pub fn seen_classes(&self, task: usize) -> &[usize] {
        &self.class_order[..self.offset(task + 1)]
    }

    /// Position (head column) of a dataset class.
    pub fn position(&self, class: usize) -> Option<usize> {
        self.class_order.iter().position(|&c| c == class)
    }

    pub fn task_of_class(&self, class: usize) -> Option<usize> {
        let p = self.position(class)?;
        let mut acc = 0;
        for (t, &k) in self.increments.iter().enumerate() {
            acc += k;
            if p < acc {
                return Some(t);
            }
        }
        None
    }
}

pub fn build_stream(n_classes: usize, schedule: &IncrementSchedule, shuffle_seed: u64) -> Result<TaskStream> {
    let increments = schedule.increments(n_classes)?;
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    class_order.shuffle(&mut seed::rng(shuffle_seed));
    Ok(TaskStream {
        class_order,
        increments,
        shuffle_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let s = build_stream(40, &IncrementSchedule::Uniform(4), DEFAULT_SHUFFLE_SEED).unwrap();
        assert_eq!(s.increments, vec![4; 10]);
        let s = build_stream(55, &IncrementSchedule::Uniform(6), DEFAULT_SHUFFLE_SEED).unwrap();
        assert_eq!(s.n_tasks(), 9);
        assert_eq!(s.increments[..8], [6; 8]);
        assert_eq!(s.increments[8], 7);
        let again = build_stream(55, &IncrementSchedule::Uniform(6), DEFAULT_SHUFFLE_SEED).unwrap();
        assert_eq!(s.class_order, again.class_order);
        assert_ne!(build_stream(55, &IncrementSchedule::Uniform(6), 1).unwrap().class_order, s.class_order);
    }

    #[test]
    fn bad_schedules() {
        for sched in [
            IncrementSchedule::Uniform(0),
            IncrementSchedule::Uniform(9),
            IncrementSchedule::Explicit(vec![3, 3]),
            IncrementSchedule::Explicit(vec![8, 0]),
        ] {
            assert!(matches!(build_stream(8, &sched, 0), Err(Error::BadSchedule(_))), "{sched:?}");
        }
    }

    #[test]
    fn partition_lookups() {
        let s = build_stream(8, &IncrementSchedule::Explicit(vec![2, 3, 3]), 5).unwrap();
        assert_eq!(s.task_classes(1), &s.class_order[2..5]);
        assert_eq!(s.seen_classes(1), &s.class_order[..5]);
        for (p, &c) in s.class_order.iter().enumerate() {
            assert_eq!(s.position(c), Some(p));
            let t = s.task_of_class(c).unwrap();
            assert!(s.task_classes(t).contains(&c));
        }
        assert_eq!(s.position(8), None);
    }
}
