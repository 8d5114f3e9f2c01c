//! Best-neighbor descent over bit-vector policies, forced along a snake.
//!
//! A snake is an induced path in the `T`-dimensional hypercube: no two of
//! its vertices are adjacent unless consecutive. With cost decreasing along
//! the snake and maximal elsewhere, descent that always moves to the
//! cheapest one-bit neighbor walks the whole snake before stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SNAKE_T: usize = 7;

/// Renders vertex `v` with bit `T - 1` first.
pub fn bits_to_string(v: u32, t: usize) -> String {
    (0..t).rev().map(|b| if v >> b & 1 == 1 { '1' } else { '0' }).collect()
}

struct Search {
    t: usize,
    /// `blocked[v]` counts path vertices adjacent to or equal to `v`.
    blocked: Vec<u32>,
    path: Vec<u32>,
    best: Vec<u32>,
}

impl Search {
    fn mark(&mut self, v: u32, delta: i32) {
        self.blocked[v as usize] = (self.blocked[v as usize] as i32 + delta) as u32;
        for b in 0..self.t {
            let u = (v ^ (1 << b)) as usize;
            self.blocked[u] = (self.blocked[u] as i32 + delta) as u32;
        }
    }

    fn extend(&mut self, dims_used: usize) {
        if self.path.len() > self.best.len() {
            self.best = self.path.clone();
        }
        let head = *self.path.last().expect("path starts at 0");
        // a new dimension may only be the lowest unused one
        let limit = (dims_used + 1).min(self.t);
        for b in 0..limit {
            let v = head ^ (1 << b);
            // v is adjacent to head; it must touch no other path vertex
            if self.blocked[v as usize] != 1 {
                continue;
            }
            self.mark(v, 1);
            self.path.push(v);
            self.extend(dims_used.max(b + 1));
            self.path.pop();
            self.mark(v, -1);
        }
    }
}

/// A longest snake starting at 0, found by exhaustive search with the
/// hypercube's coordinate symmetry factored out.
pub fn longest_snake(t: usize) -> Result<Vec<u32>> {
    if t > MAX_SNAKE_T {
        return Err(Error::TooLarge(t));
    }
    if t == 0 {
        return Ok(vec![0]);
    }
    let mut s = Search {
        t,
        blocked: vec![0; 1 << t],
        path: vec![0],
        best: Vec::new(),
    };
    s.mark(0, 1);
    s.extend(0);
    Ok(s.best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnakeReport {
    pub t: usize,
    pub snake_edges: usize,
    /// Policies visited by descent, as bit strings.
    pub path: Vec<String>,
    pub updates: usize,
    pub costs: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Every visited policy's neighbors off the snake cost more than it does.
    pub off_path_neighbors_higher: bool,
    pub locally_optimal: bool,
}

/// Builds the snake cost function and runs best-neighbor descent from the
/// snake's start.
pub fn snake_lower_bound(t: usize) -> Result<SnakeReport> {
    let snake = longest_snake(t)?;
    let len = snake.len() - 1;
    let mut cost = vec![2.0; 1 << t];
    for (i, &v) in snake.iter().enumerate() {
        cost[v as usize] = 1.0 - i as f64 / (len as f64 + 1.0);
    }
    let on_snake = |v: u32| snake.contains(&v);
    let neighbors = |v: u32| (0..t).map(move |b| v ^ (1 << b));

    let mut current = snake[0];
    let mut visited = vec![current];
    let mut off_path_higher = true;
    loop {
        for u in neighbors(current).filter(|&u| !on_snake(u)) {
            off_path_higher &= cost[u as usize] > cost[current as usize];
        }
        let best = neighbors(current)
            .min_by(|a, b| cost[*a as usize].total_cmp(&cost[*b as usize]))
            .filter(|&u| cost[u as usize] < cost[current as usize]);
        match best {
            Some(u) => {
                current = u;
                visited.push(u);
            }
            None => break,
        }
    }
    let costs: Vec<f64> = visited.iter().map(|&v| cost[v as usize]).collect();
    Ok(SnakeReport {
        t,
        snake_edges: len,
        path: visited.iter().map(|&v| bits_to_string(v, t)).collect(),
        updates: visited.len() - 1,
        strictly_decreasing: costs.windows(2).all(|w| w[1] < w[0]),
        costs,
        off_path_neighbors_higher: off_path_higher,
        locally_optimal: neighbors(current).all(|u| cost[u as usize] >= cost[current as usize]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain depth-first search over induced paths from 0, no symmetry pruning.
    fn brute_force_longest(t: usize) -> usize {
        fn adjacent(a: u32, b: u32) -> bool {
            (a ^ b).count_ones() == 1
        }
        fn go(t: usize, path: &mut Vec<u32>, best: &mut usize) {
            *best = (*best).max(path.len() - 1);
            let head = *path.last().unwrap();
            for b in 0..t {
                let v = head ^ (1 << b);
                let ok = path[..path.len() - 1].iter().all(|&p| p != v && !adjacent(p, v));
                if ok {
                    path.push(v);
                    go(t, path, best);
                    path.pop();
                }
            }
        }
        let mut best = 0;
        go(t, &mut vec![0], &mut best);
        best
    }

    fn is_induced_path(p: &[u32]) -> bool {
        p.iter().enumerate().all(|(i, &a)| {
            p.iter().enumerate().all(|(j, &b)| {
                let d = (a ^ b).count_ones();
                if i == j {
                    true
                } else if i.abs_diff(j) == 1 {
                    d == 1
                } else {
                    d >= 2
                }
            })
        })
    }

    #[test]
    fn three_cube_path() {
        let r = snake_lower_bound(3).unwrap();
        assert_eq!(r.path, ["000", "001", "011", "111", "110"]);
        assert_eq!(r.updates, 4);
        assert!(r.strictly_decreasing && r.locally_optimal && r.off_path_neighbors_higher);
    }

    #[test]
    fn one_cube() {
        assert_eq!(snake_lower_bound(1).unwrap().updates, 1);
    }

    #[test]
    fn matches_unpruned_search() {
        for t in 1..=5 {
            let s = longest_snake(t).unwrap();
            assert!(is_induced_path(&s));
            assert_eq!(s.len() - 1, brute_force_longest(t), "T = {t}");
        }
    }

    #[test]
    fn guard() {
        assert!(matches!(longest_snake(8), Err(Error::TooLarge(8))));
    }
}
