use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Directed edge `from -> to` between model variables (indices into `variables`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

/// What a free parameter in `theta` stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Index into `PathModel::edges`.
    Edge(usize),
    /// Intercept of an endogenous variable.
    Intercept(usize),
    /// Disturbance variance of an endogenous variable.
    Variance(usize),
}

/// Recursive observed-variable path model.
///
/// Variables without incoming edges are exogenous: their means and covariances
/// are taken from the data rather than estimated. Endogenous variables get an
/// intercept and an uncorrelated disturbance variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModel {
    pub variables: Vec<String>,
    pub edges: Vec<Edge>,
    /// Edge index -> fixed coefficient.
    pub fixed: BTreeMap<usize, f64>,
    /// Free parameters in `theta` order: free edges, then intercepts, then variances.
    pub params: Vec<ParamKind>,
    /// Variables in a topological order.
    pub order: Vec<usize>,
}

impl PathModel {
    /// Builds a model from named edges and fixed edge values.
    /// Variables are ordered by first appearance in `edges`, then `extra_variables`.
    pub fn new(
        edges: &[(&str, &str)],
        fixed: &[((&str, &str), f64)],
        extra_variables: &[&str],
    ) -> Result<PathModel> {
        let mut variables: Vec<String> = Vec::new();
        let index = |name: &str, vars: &mut Vec<String>| -> usize {
            match vars.iter().position(|v| v == name) {
                Some(i) => i,
                None => {
                    vars.push(name.to_string());
                    vars.len() - 1
                }
            }
        };
        let mut edge_list: Vec<Edge> = Vec::new();
        for &(from, to) in edges.iter().chain(fixed.iter().map(|(e, _)| e)) {
            if from.is_empty() || to.is_empty() {
                return Err(Error::PathModel("empty variable name".into()));
            }
            if from == to {
                return Err(Error::CyclicModel(format!("self-loop on {from}")));
            }
            let f = index(from, &mut variables);
            let t = index(to, &mut variables);
            let e = Edge { from: f, to: t };
            if !edge_list.contains(&e) {
                edge_list.push(e);
            }
        }
        for v in extra_variables {
            index(v, &mut variables);
        }
        let mut fixed_map = BTreeMap::new();
        for &((from, to), value) in fixed {
            if !value.is_finite() {
                return Err(Error::PathModel(format!("fixed value for {from} -> {to} is not finite")));
            }
            let f = variables.iter().position(|v| v == from).unwrap();
            let t = variables.iter().position(|v| v == to).unwrap();
            let idx = edge_list.iter().position(|e| e.from == f && e.to == t).unwrap();
            if fixed_map.insert(idx, value).is_some() {
                return Err(Error::PathModel(format!("{from} -> {to} fixed twice")));
            }
        }
        let order = topological_order(variables.len(), &edge_list)
            .ok_or_else(|| Error::CyclicModel("edge graph contains a cycle".into()))?;

        let k = variables.len();
        let endogenous: Vec<bool> = (0..k).map(|v| edge_list.iter().any(|e| e.to == v)).collect();
        let mut params: Vec<ParamKind> = (0..edge_list.len())
            .filter(|i| !fixed_map.contains_key(i))
            .map(ParamKind::Edge)
            .collect();
        params.extend((0..k).filter(|&v| endogenous[v]).map(ParamKind::Intercept));
        params.extend((0..k).filter(|&v| endogenous[v]).map(ParamKind::Variance));
        Ok(PathModel {
            variables,
            edges: edge_list,
            fixed: fixed_map,
            params,
            order,
        })
    }

    pub fn k(&self) -> usize {
        self.variables.len()
    }

    pub fn n_free(&self) -> usize {
        self.params.len()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn is_endogenous(&self, v: usize) -> bool {
        self.edges.iter().any(|e| e.to == v)
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.to == v).map(|e| e.from).collect()
    }

    pub fn edge_index(&self, from: &str, to: &str) -> Result<usize> {
        let f = self.var_index(from)?;
        let t = self.var_index(to)?;
        self.edges
            .iter()
            .position(|e| e.from == f && e.to == t)
            .ok_or_else(|| Error::MissingEdge {
                from: from.to_string(),
                to: to.to_string(),
            })
    }

    /// Position in `theta` of a free edge, or `None` when the edge is fixed.
    pub fn edge_param(&self, from: &str, to: &str) -> Result<Option<usize>> {
        let e = self.edge_index(from, to)?;
        Ok(self.params.iter().position(|p| *p == ParamKind::Edge(e)))
    }

    /// Human-readable label of parameter `j`.
    pub fn param_label(&self, j: usize) -> String {
        match self.params[j] {
            ParamKind::Edge(e) => {
                let ed = self.edges[e];
                format!("{} -> {}", self.variables[ed.from], self.variables[ed.to])
            }
            ParamKind::Intercept(v) => format!("{} ~ 1", self.variables[v]),
            ParamKind::Variance(v) => format!("{0} ~~ {0}", self.variables[v]),
        }
    }
}

fn topological_order(k: usize, edges: &[Edge]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; k];
    for e in edges {
        indeg[e.to] += 1;
    }
    let mut ready: Vec<usize> = (0..k).filter(|&v| indeg[v] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(k);
    while let Some(v) = ready.pop() {
        order.push(v);
        let mut next: Vec<usize> = Vec::new();
        for e in edges.iter().filter(|e| e.from == v) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                next.push(e.to);
            }
        }
        next.sort_unstable_by(|a, b| b.cmp(a));
        ready.extend(next);
    }
    (order.len() == k).then_some(order)
}

/// Parses the line format:
///
/// ```text
/// # comment
/// M ~ A + W
/// Y ~ A + M + W
/// Y ~~ Y
/// A -> Y = 0.5
/// ```
pub fn parse_path_model(text: &str) -> Result<PathModel> {
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut fixed: Vec<((String, String), f64)> = Vec::new();
    let mut extra: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::PathModel(format!("line {}: {msg}: `{line}`", lineno + 1));
        let ident = |s: &str| -> Result<String> {
            let s = s.trim();
            let ok = !s.is_empty()
                && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
                && !s.starts_with(|c: char| c.is_ascii_digit());
            if ok {
                Ok(s.to_string())
            } else {
                Err(bad("bad variable name"))
            }
        };
        if let Some((lhs, rhs)) = line.split_once("~~") {
            let (l, r) = (ident(lhs)?, ident(rhs)?);
            if l != r {
                return Err(bad("correlated disturbances are not supported"));
            }
            extra.push(l);
        } else if let Some((lhs, rhs)) = line.split_once("->") {
            let (to, value) = rhs.split_once('=').ok_or_else(|| bad("expected `FROM -> TO = VALUE`"))?;
            let value: f64 = value.trim().parse().map_err(|_| bad("fixed value is not a number"))?;
            fixed.push(((ident(lhs)?, ident(to)?), value));
        } else if let Some((lhs, rhs)) = line.split_once('~') {
            let to = ident(lhs)?;
            for term in rhs.split('+') {
                edges.push((ident(term)?, to.clone()));
            }
        } else {
            return Err(bad("unrecognised line"));
        }
    }
    if edges.is_empty() && fixed.is_empty() {
        return Err(Error::PathModel("model has no equations".into()));
    }
    let e: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let f: Vec<((&str, &str), f64)> = fixed.iter().map(|((a, b), v)| ((a.as_str(), b.as_str()), *v)).collect();
    let x: Vec<&str> = extra.iter().map(String::as_str).collect();
    PathModel::new(&e, &f, &x)
}

impl fmt::Display for PathModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.order {
            let parents: Vec<usize> = self
                .edges
                .iter()
                .enumerate()
                .filter(|(i, e)| e.to == v && !self.fixed.contains_key(i))
                .map(|(_, e)| e.from)
                .collect();
            if !parents.is_empty() {
                let names: Vec<&str> = parents.iter().map(|&p| self.variables[p].as_str()).collect();
                writeln!(f, "{} ~ {}", self.variables[v], names.join(" + "))?;
            }
        }
        for (&i, value) in &self.fixed {
            let e = self.edges[i];
            writeln!(f, "{} -> {} = {value}", self.variables[e.from], self.variables[e.to])?;
        }
        Ok(())
    }
}
