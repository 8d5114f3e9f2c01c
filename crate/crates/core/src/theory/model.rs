//! Explicit finite search spaces and their text format.
//!
//! ```text
//! # comments start with '#'
//! horizon 2
//! param eps 0.1
//! state s1 0
//! state s2 1
//! state e1 2
//! action s1 a s2 fa        # state, action label, next state, feature id
//! loss e1 1+eps
//! reference s1 a
//! group s2 s3              # assert that s2 and s3 share features
//! ```
//!
//! Actions at a state are numbered in declaration order. Each distinct
//! feature id is one coordinate of a one-hot feature space, so a linear
//! policy acts identically on states whose per-action feature ids agree.
//! Those states form a feature group.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseFeatures;
use crate::rng::{stream, Stream};
use crate::search::SearchTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub label: String,
    pub next: usize,
    pub feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactModel {
    labels: Vec<String>,
    depths: Vec<usize>,
    edges: Vec<Vec<Edge>>,
    losses: Vec<f64>,
    reference: Vec<usize>,
    feature_names: Vec<String>,
    horizon: usize,
    start: usize,
    group_of: Vec<Option<usize>>,
    groups: Vec<Vec<usize>>,
}

/// Raw declarations, validated by [`ExactModel::build`].
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    pub horizon: Option<usize>,
    pub states: Vec<(String, usize)>,
    /// `(state, label, next, feature)`
    pub actions: Vec<(String, String, String, String)>,
    pub losses: Vec<(String, f64)>,
    pub reference: Vec<(String, String)>,
    pub groups: Vec<Vec<String>>,
}

pub const HIDDEN_BRANCH: &str = include_str!("../../fixtures/hidden_branch.model");
pub const TIED_ROOT: &str = include_str!("../../fixtures/tied_root.model");
pub const SHARED_FEATURE: &str = include_str!("../../fixtures/shared_feature.model");

fn eval_expr(expr: &str, params: &HashMap<String, f64>, line: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut sign = 1.0;
    let mut term = String::new();
    let flush = |term: &str, sign: f64, total: &mut f64| -> Result<()> {
        if term.is_empty() {
            return Err(Error::parse(line, format!("malformed expression '{expr}'")));
        }
        let mut product = 1.0;
        for factor in term.split('*') {
            product *= match factor.parse::<f64>() {
                Ok(v) => v,
                Err(_) => *params
                    .get(factor)
                    .ok_or_else(|| Error::parse(line, format!("unknown parameter '{factor}'")))?,
            };
        }
        *total += sign * product;
        Ok(())
    };
    for (i, ch) in expr.char_indices() {
        let exponent = i > 0
            && matches!(expr.as_bytes()[i - 1], b'e' | b'E')
            && term[..term.len() - 1].parse::<f64>().is_ok();
        if (ch == '+' || ch == '-') && !term.is_empty() && !exponent {
            flush(&term, sign, &mut total)?;
            term.clear();
            sign = if ch == '+' { 1.0 } else { -1.0 };
        } else if (ch == '+' || ch == '-') && term.is_empty() {
            sign *= if ch == '+' { 1.0 } else { -1.0 };
        } else {
            term.push(ch);
        }
    }
    flush(&term, sign, &mut total)?;
    Ok(total)
}

impl ExactModel {
    /// Parses the text format. `overrides` replace `param` values by name.
    pub fn parse(text: &str, overrides: &[(&str, f64)]) -> Result<Self> {
        let mut params: HashMap<String, f64> = HashMap::new();
        let mut b = ModelBuilder::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let want = |n: usize| -> Result<()> {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(Error::parse(line, format!("'{}' takes {} fields", fields[0], n - 1)))
                }
            };
            let num = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::parse(line, format!("expected an integer, got '{s}'")))
            };
            match fields[0] {
                "horizon" => {
                    want(2)?;
                    b.horizon = Some(num(fields[1])?);
                }
                "param" => {
                    want(3)?;
                    let v = match overrides.iter().find(|(k, _)| *k == fields[1]) {
                        Some(&(_, v)) => v,
                        None => eval_expr(fields[2], &params, line)?,
                    };
                    params.insert(fields[1].to_string(), v);
                }
                "state" => {
                    want(3)?;
                    b.states.push((fields[1].to_string(), num(fields[2])?));
                }
                "action" => {
                    want(5)?;
                    b.actions.push((
                        fields[1].to_string(),
                        fields[2].to_string(),
                        fields[3].to_string(),
                        fields[4].to_string(),
                    ));
                }
                "loss" => {
                    want(3)?;
                    b.losses.push((fields[1].to_string(), eval_expr(fields[2], &params, line)?));
                }
                "reference" => {
                    want(3)?;
                    b.reference.push((fields[1].to_string(), fields[2].to_string()));
                }
                "group" => {
                    if fields.len() < 3 {
                        return Err(Error::parse(line, "'group' needs at least two states"));
                    }
                    b.groups.push(fields[1..].iter().map(|s| s.to_string()).collect());
                }
                other => return Err(Error::parse(line, format!("unknown directive '{other}'"))),
            }
        }
        b.build()
    }

    pub fn hidden_branch() -> Self {
        Self::parse(HIDDEN_BRANCH, &[]).expect("fixture parses")
    }

    pub fn tied_root() -> Self {
        Self::parse(TIED_ROOT, &[]).expect("fixture parses")
    }

    pub fn shared_feature(eps: f64) -> Self {
        Self::parse(SHARED_FEATURE, &[("eps", eps)]).expect("fixture parses")
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn label(&self, s: usize) -> &str {
        &self.labels[s]
    }

    pub fn state_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn depth_of(&self, s: usize) -> usize {
        self.depths[s]
    }

    pub fn edges(&self, s: usize) -> &[Edge] {
        &self.edges[s]
    }

    pub fn action_id(&self, s: usize, label: &str) -> Option<usize> {
        self.edges[s].iter().position(|e| e.label == label)
    }

    pub fn next(&self, s: usize, a: usize) -> usize {
        self.edges[s][a].next
    }

    pub fn terminal_loss_of(&self, s: usize) -> f64 {
        self.losses[s]
    }

    pub fn reference_action(&self, s: usize) -> usize {
        self.reference[s]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.depths[s] == self.horizon
    }

    pub fn feature_name(&self, f: usize) -> &str {
        &self.feature_names[f]
    }

    pub fn feature_id(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Feature ids of the actions at `s`, in action order.
    pub fn signature(&self, s: usize) -> Vec<usize> {
        self.edges[s].iter().map(|e| e.feature).collect()
    }

    /// Feature group of a non-terminal state.
    pub fn group_of(&self, s: usize) -> Option<usize> {
        self.group_of[s]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Actions available to every member of group `g`.
    pub fn group_arity(&self, g: usize) -> usize {
        self.edges[self.groups[g][0]].len()
    }

    pub fn states_at(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(move |&s| self.depths[s] == depth)
    }

    /// Finds the group whose members present exactly these per-action features.
    pub fn group_matching(&self, per_action: &[SparseFeatures]) -> Option<usize> {
        let ids: Option<Vec<usize>> = per_action
            .iter()
            .map(|f| match f.pairs() {
                [(i, v)] if *v == 1.0 => Some(*i),
                _ => None,
            })
            .collect();
        let ids = ids?;
        (0..self.groups.len()).find(|&g| self.signature(self.groups[g][0]) == ids)
    }

    /// Copy with every loss divided by the largest absolute loss, so losses lie in `[0, 1]`
    /// when they are non-negative.
    pub fn normalized(&self) -> Self {
        let max = self.losses.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        let mut out = self.clone();
        if max > 0.0 {
            for l in &mut out.losses {
                *l /= max;
            }
        }
        out
    }

    /// Tree-shaped random model: depth `1..=max_depth`, `1..=max_branch`
    /// actions per state, losses uniform in `[0, 1]`, a random reference,
    /// and some same-depth states merged into shared feature groups.
    pub fn random(seed: u64, max_depth: usize, max_branch: usize) -> Self {
        let mut rng = stream(seed, Stream::Models);
        let horizon = rng.random_range(1..=max_depth.max(1));
        let mut b = ModelBuilder {
            horizon: Some(horizon),
            ..Default::default()
        };
        let mut frontier = vec![("n0".to_string(), 0usize)];
        b.states.push(("n0".into(), 0));
        // (depth, arity) -> groups created so far; each group is its feature prefix
        let mut shared: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
        let mut next_id = 1;
        let mut next_group = 0;
        while let Some((name, depth)) = frontier.pop() {
            if depth == horizon {
                b.losses.push((name, rng.random::<f64>()));
                continue;
            }
            let arity = rng.random_range(1..=max_branch.max(1));
            let existing = shared.entry((depth, arity)).or_default();
            let prefix = if !existing.is_empty() && rng.random_bool(0.4) {
                existing[rng.random_range(0..existing.len())].clone()
            } else {
                let p = format!("g{next_group}");
                next_group += 1;
                existing.push(p.clone());
                p
            };
            for a in 0..arity {
                let child = format!("n{next_id}");
                next_id += 1;
                b.states.push((child.clone(), depth + 1));
                b.actions
                    .push((name.clone(), format!("a{a}"), child.clone(), format!("{prefix}_{a}")));
                frontier.push((child, depth + 1));
            }
            b.reference.push((name, format!("a{}", rng.random_range(0..arity))));
        }
        b.build().expect("generated models are well formed")
    }
}

impl ModelBuilder {
    pub fn build(self) -> Result<ExactModel> {
        let bad = |m: String| Error::Format(m);
        let horizon = self.horizon.ok_or_else(|| bad("missing 'horizon'".into()))?;
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, (name, _)) in self.states.iter().enumerate() {
            if index.insert(name, i).is_some() {
                return Err(bad(format!("state '{name}' declared twice")));
            }
        }
        let n = self.states.len();
        let lookup = |name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| bad(format!("unknown state '{name}'")))
        };
        let depths: Vec<usize> = self.states.iter().map(|(_, d)| *d).collect();
        if let Some(s) = depths.iter().position(|&d| d > horizon) {
            return Err(bad(format!("state '{}' is deeper than the horizon", self.states[s].0)));
        }
        let starts: Vec<usize> = (0..n).filter(|&s| depths[s] == 0).collect();
        if starts.len() != 1 {
            return Err(bad(format!("expected one depth-0 state, found {}", starts.len())));
        }

        let mut feature_names: Vec<String> = Vec::new();
        let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for (from, label, to, feature) in &self.actions {
            let (s, t) = (lookup(from)?, lookup(to)?);
            if depths[t] != depths[s] + 1 {
                return Err(bad(format!("action {from}/{label} must lead one level deeper")));
            }
            if edges[s].iter().any(|e| &e.label == label) {
                return Err(bad(format!("action {from}/{label} declared twice")));
            }
            let f = match feature_names.iter().position(|x| x == feature) {
                Some(f) => f,
                None => {
                    feature_names.push(feature.clone());
                    feature_names.len() - 1
                }
            };
            edges[s].push(Edge {
                label: label.clone(),
                next: t,
                feature: f,
            });
        }

        let mut losses = vec![f64::NAN; n];
        for (name, l) in &self.losses {
            let s = lookup(name)?;
            if depths[s] != horizon {
                return Err(bad(format!("loss given for non-terminal state '{name}'")));
            }
            if !l.is_finite() {
                return Err(Error::NonFinite(*l));
            }
            losses[s] = *l;
        }
        let mut reference = vec![usize::MAX; n];
        for (name, label) in &self.reference {
            let s = lookup(name)?;
            reference[s] = edges[s]
                .iter()
                .position(|e| &e.label == label)
                .ok_or_else(|| bad(format!("reference action {name}/{label} does not exist")))?;
        }
        for s in 0..n {
            let name = &self.states[s].0;
            if depths[s] == horizon {
                if !edges[s].is_empty() {
                    return Err(bad(format!("terminal state '{name}' has actions")));
                }
                if losses[s].is_nan() {
                    return Err(bad(format!("terminal state '{name}' has no loss")));
                }
            } else {
                if edges[s].is_empty() {
                    return Err(bad(format!("state '{name}' has no actions")));
                }
                if reference[s] == usize::MAX {
                    return Err(bad(format!("state '{name}' has no reference action")));
                }
            }
        }

        let mut group_of = vec![None; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut by_signature: HashMap<Vec<usize>, usize> = HashMap::new();
        for s in 0..n {
            if depths[s] == horizon {
                continue;
            }
            let sig: Vec<usize> = edges[s].iter().map(|e| e.feature).collect();
            let g = *by_signature.entry(sig).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(s);
            group_of[s] = Some(g);
        }
        for members in &self.groups {
            let ids = members.iter().map(|m| lookup(m)).collect::<Result<Vec<_>>>()?;
            let first = group_of[ids[0]];
            if first.is_none() || ids.iter().any(|&s| group_of[s] != first) {
                return Err(bad(format!("states {} do not share features", members.join(" "))));
            }
        }

        Ok(ExactModel {
            labels: self.states.into_iter().map(|(l, _)| l).collect(),
            depths,
            edges,
            losses,
            reference,
            feature_names,
            horizon,
            start: starts[0],
            group_of,
            groups,
        })
    }
}

impl SearchTask for ExactModel {
    type State = usize;

    fn start(&self) -> usize {
        self.start
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn depth(&self, s: &usize) -> usize {
        self.depths[*s]
    }

    fn num_actions(&self, s: &usize) -> usize {
        self.edges[*s].len()
    }

    fn transition(&self, s: &usize, a: usize) -> usize {
        self.edges[*s][a].next
    }

    fn action_features(&self, s: &usize) -> Vec<SparseFeatures> {
        let dim = self.num_features();
        self.edges[*s]
            .iter()
            .map(|e| SparseFeatures::unit(dim, e.feature).expect("feature id below dim"))
            .collect()
    }

    fn terminal_loss(&self, s: &usize) -> f64 {
        self.losses[*s]
    }

    fn reference(&self, s: &usize) -> Result<usize> {
        Ok(self.reference[*s])
    }

    fn dim(&self) -> usize {
        self.num_features()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse() {
        for m in [ExactModel::hidden_branch(), ExactModel::tied_root(), ExactModel::shared_feature(0.1)] {
            assert_eq!(m.num_states(), 7);
            assert_eq!(m.horizon(), 2);
        }
    }

    #[test]
    fn shared_features_form_one_group() {
        let m = ExactModel::shared_feature(0.1);
        let (s2, s3) = (m.state_id("s2").unwrap(), m.state_id("s3").unwrap());
        assert_eq!(m.group_of(s2), m.group_of(s3));
        assert_eq!(m.num_groups(), 2);
        assert_eq!(ExactModel::hidden_branch().num_groups(), 3);
    }

    #[test]
    fn parameters_and_overrides() {
        let m = ExactModel::shared_feature(0.25);
        let e3 = m.state_id("e3").unwrap();
        assert_eq!(m.terminal_loss_of(e3), 1.25);
        let e2 = m.state_id("e2").unwrap();
        assert_eq!(m.terminal_loss_of(e2), 0.75);
    }

    #[test]
    fn expressions() {
        let p: HashMap<String, f64> = [("eps".to_string(), 0.5)].into_iter().collect();
        assert_eq!(eval_expr("1+eps", &p, 1).unwrap(), 1.5);
        assert_eq!(eval_expr("-2*eps+3", &p, 1).unwrap(), 2.0);
        assert_eq!(eval_expr("1e-3", &p, 1).unwrap(), 1e-3);
        assert!(eval_expr("1+", &p, 1).is_err());
        assert!(eval_expr("x", &p, 1).is_err());
    }

    #[test]
    fn malformed_models_are_rejected() {
        let base = "horizon 1\nstate r 0\nstate x 1\nstate y 1\naction r a x f\naction r b y g\nloss x 0\nloss y 1\nreference r a\n";
        assert!(ExactModel::parse(base, &[]).is_ok());
        let missing_loss = base.replace("loss y 1\n", "");
        assert!(matches!(ExactModel::parse(&missing_loss, &[]), Err(Error::Format(_))));
        let bad_group = format!("{base}group r x\n");
        assert!(ExactModel::parse(&bad_group, &[]).is_err());
        let unknown = format!("{base}frobnicate\n");
        assert!(matches!(ExactModel::parse(&unknown, &[]), Err(Error::Parse { line: 10, .. })));
    }

    #[test]
    fn random_models_are_well_formed() {
        for seed in 0..30 {
            let m = ExactModel::random(seed, 5, 3);
            assert!(m.horizon() >= 1 && m.horizon() <= 5);
            for s in 0..m.num_states() {
                if m.is_terminal(s) {
                    let l = m.terminal_loss_of(s);
                    assert!((0.0..=1.0).contains(&l));
                } else {
                    assert!((1..=3).contains(&m.edges(s).len()));
                }
            }
        }
    }
}
