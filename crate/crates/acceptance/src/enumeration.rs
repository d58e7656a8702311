//! Random all-discrete models and their exact output probabilities.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value as Json};

#[derive(Debug, Clone)]
pub enum Op {
    Bernoulli(f64),
    Categorical(Vec<f64>),
    And(Vec<usize>),
    Or(Vec<usize>),
    Not(usize),
    /// Bool parents, most significant first; P(true) per row.
    Table(Vec<usize>, Vec<f64>),
    InCategory(usize, Vec<usize>),
    /// prior, then (parent, P(e|H), P(e|not H)) per item.
    Classifier(f64, Vec<(usize, f64, f64)>),
}

#[derive(Debug, Clone)]
pub struct RandomModel {
    pub ops: Vec<Op>,
    pub output: usize,
}

fn name(i: usize) -> String {
    format!("n{i}")
}

fn labels(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Nonempty subset of 0..k.
fn label_subset(rng: &mut StdRng, k: usize) -> Vec<usize> {
    let set: Vec<usize> = (0..k).filter(|_| rng.gen_bool(0.5)).collect();
    if set.is_empty() {
        vec![rng.gen_range(0..k)]
    } else {
        set
    }
}

impl RandomModel {
    /// Up to `max_nodes` nodes in topological order; the last one is the Bool output.
    pub fn generate(rng: &mut StdRng, max_nodes: usize) -> Self {
        let n = rng.gen_range(3..=max_nodes);
        let roots = rng.gen_range(1..=(n - 1).min(5));
        let mut ops = Vec::with_capacity(n);
        for _ in 0..roots {
            if rng.gen_bool(0.25) {
                let k = rng.gen_range(2..=4);
                let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                ops.push(Op::Categorical(w.iter().map(|x| x / s).collect()));
            } else {
                ops.push(Op::Bernoulli(rng.gen_range(0.05..0.95)));
            }
        }
        while ops.len() < n {
            let bools: Vec<usize> = (0..ops.len()).filter(|i| !matches!(ops[*i], Op::Categorical(_))).collect();
            let cats: Vec<usize> = (0..ops.len()).filter(|i| matches!(ops[*i], Op::Categorical(_))).collect();
            let pick = |rng: &mut StdRng, max: usize| -> Vec<usize> {
                let k = rng.gen_range(1..=max);
                let mut v = bools.clone();
                v.shuffle(rng);
                v.truncate(k.min(bools.len()));
                v
            };
            let op = match rng.gen_range(0..6) {
                _ if bools.is_empty() => {
                    let c = cats[rng.gen_range(0..cats.len())];
                    let k = match &ops[c] {
                        Op::Categorical(p) => p.len(),
                        _ => unreachable!(),
                    };
                    Op::InCategory(c, label_subset(rng, k))
                }
                0 => Op::And(pick(rng, 3)),
                1 => Op::Or(pick(rng, 3)),
                2 => Op::Not(pick(rng, 1)[0]),
                3 => {
                    let ps = pick(rng, 3);
                    let rows = (0..1 << ps.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
                    Op::Table(ps, rows)
                }
                4 if !cats.is_empty() => {
                    let c = cats[rng.gen_range(0..cats.len())];
                    let k = match &ops[c] {
                        Op::Categorical(p) => p.len(),
                        _ => unreachable!(),
                    };
                    Op::InCategory(c, label_subset(rng, k))
                }
                _ => {
                    let ps = pick(rng, 2);
                    let items = ps.into_iter().map(|p| (p, rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95))).collect();
                    Op::Classifier(rng.gen_range(0.1..0.9), items)
                }
            };
            ops.push(op);
        }
        RandomModel { output: n - 1, ops }
    }

    pub fn document(&self) -> String {
        let nodes: Vec<Json> = self
            .ops
            .iter()
            .enumerate()
            .map(|(i, op)| {
                let id = name(i);
                let ids = |ps: &[usize]| ps.iter().map(|p| name(*p)).collect::<Vec<_>>();
                let mut node = match op {
                    Op::Bernoulli(p) => json!({"kind": "chance", "value_kind": "bool",
                        "distribution": {"type": "bernoulli", "p": p}}),
                    Op::Categorical(p) => json!({"kind": "chance",
                        "value_kind": {"type": "category", "labels": labels(p.len())},
                        "distribution": {"type": "categorical", "labels": labels(p.len()), "probs": p}}),
                    Op::And(ps) => json!({"kind": "formula", "builtin": "AND", "parents": ids(ps), "value_kind": "bool"}),
                    Op::Or(ps) => json!({"kind": "formula", "builtin": "OR", "parents": ids(ps), "value_kind": "bool"}),
                    Op::Not(p) => json!({"kind": "formula", "builtin": "NOT", "parents": [name(*p)], "value_kind": "bool"}),
                    Op::Table(ps, rows) => json!({"kind": "formula", "builtin": "BOOL_TABLE", "parents": ids(ps),
                        "params": {"probs": rows}, "value_kind": "bool"}),
                    Op::InCategory(c, set) => {
                        let chosen: Vec<String> = set.iter().map(|j| format!("c{j}")).collect();
                        json!({"kind": "formula", "builtin": "IN_CATEGORY", "parents": [name(*c)],
                            "params": {"labels": chosen}, "value_kind": "bool"})
                    }
                    Op::Classifier(prior, items) => {
                        let ev: Vec<Json> = items
                            .iter()
                            .enumerate()
                            .map(|(k, (p, h, nh))| json!({"name": format!("e{k}"), "p_given_h": h, "p_given_not_h": nh, "source": name(*p)}))
                            .collect();
                        let parents: Vec<String> = items.iter().map(|(p, _, _)| name(*p)).collect();
                        json!({"kind": "classifier", "prior": prior, "evidence": ev, "parents": parents, "value_kind": "bool"})
                    }
                };
                node["id"] = json!(id);
                node["module"] = json!("m");
                node
            })
            .collect();
        json!({
            "format_version": 1,
            "meta": {"title": "random", "horizon_start": 2022, "horizon_end": 2030},
            "modules": [{"id": "m"}],
            "nodes": nodes,
            "outputs": [name(self.output)],
            "cruxes": []
        })
        .to_string()
    }

    pub fn output_id(&self) -> String {
        name(self.output)
    }

    /// Exact P(output = true), summing over every joint assignment.
    pub fn exact(&self) -> f64 {
        let mut values = vec![0usize; self.ops.len()];
        self.walk(0, 1.0, &mut values)
    }

    fn walk(&self, i: usize, weight: f64, values: &mut Vec<usize>) -> f64 {
        if weight == 0.0 {
            return 0.0;
        }
        if i == self.ops.len() {
            return if values[self.output] == 1 { weight } else { 0.0 };
        }
        let truth = |v: &Vec<usize>, p: usize| v[p] == 1;
        // Distribution of node i given its already-assigned parents.
        let dist: Vec<(usize, f64)> = match &self.ops[i] {
            Op::Bernoulli(p) => vec![(1, *p), (0, 1.0 - p)],
            Op::Categorical(p) => p.iter().copied().enumerate().collect(),
            Op::And(ps) => vec![(ps.iter().all(|p| truth(values, *p)) as usize, 1.0)],
            Op::Or(ps) => vec![(ps.iter().any(|p| truth(values, *p)) as usize, 1.0)],
            Op::Not(p) => vec![(!truth(values, *p) as usize, 1.0)],
            Op::Table(ps, rows) => {
                let row = ps.iter().fold(0usize, |acc, p| acc << 1 | values[*p]);
                vec![(1, rows[row]), (0, 1.0 - rows[row])]
            }
            Op::InCategory(c, set) => vec![(set.contains(&values[*c]) as usize, 1.0)],
            Op::Classifier(prior, items) => {
                let mut odds = prior / (1.0 - prior);
                for (p, h, nh) in items {
                    odds *= if truth(values, *p) { h / nh } else { (1.0 - h) / (1.0 - nh) };
                }
                let post = odds / (1.0 + odds);
                vec![(1, post), (0, 1.0 - post)]
            }
        };
        let mut total = 0.0;
        for (v, p) in dist {
            values[i] = v;
            total += self.walk(i + 1, weight * p, values);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn not_chain_is_exact() {
        let m = RandomModel {
            ops: vec![Op::Bernoulli(0.3), Op::Not(0)],
            output: 1,
        };
        assert!((m.exact() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn classifier_hand_sum() {
        // Evidence is a fair coin; the posteriors are 0.75 and 0.125.
        let m = RandomModel {
            ops: vec![Op::Bernoulli(0.5), Op::Classifier(0.5, vec![(0, 0.9, 0.3)])],
            output: 1,
        };
        assert!((m.exact() - (0.5 * 0.75 + 0.5 * 0.125)).abs() < 1e-15);
    }

    #[test]
    fn generated_documents_have_bounded_size() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let m = RandomModel::generate(&mut rng, 12);
            assert!(m.ops.len() <= 12 && m.ops.len() >= 3);
            let p = m.exact();
            assert!((0.0..=1.0 + 1e-12).contains(&p));
        }
    }
}
