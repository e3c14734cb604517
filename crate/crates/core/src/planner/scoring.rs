//! Candidate scores and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::env_graph::GraphNode;
use crate::scalar::Real;
use crate::script::{ActionStep, Plan};

/// The five per-candidate scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components<F = f64> {
    pub p_a: F,
    pub p_am: F,
    pub p_o: F,
    pub p_om: F,
    pub p_od: F,
}

/// Score weights and repetition penalty rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<F = f64> {
    pub w_a: F,
    pub w_am: F,
    pub w_o: F,
    pub w_om: F,
    pub w_od: F,
    pub action_repeat: F,
    pub pair_repeat: F,
}

impl<F: Real> Weights<F> {
    pub fn scaled(&self, c: F) -> Self {
        Weights {
            w_a: self.w_a * c,
            w_am: self.w_am * c,
            w_o: self.w_o * c,
            w_om: self.w_om * c,
            w_od: self.w_od * c,
            action_repeat: self.action_repeat * c,
            pair_repeat: self.pair_repeat * c,
        }
    }

    /// Combined penalty for the given repetition counts.
    pub fn penalty(&self, action_repeats: usize, pair_repeats: usize) -> F {
        repetition_penalty(action_repeats, self.action_repeat) + repetition_penalty(pair_repeats, self.pair_repeat)
    }

    pub fn total(&self, c: &Components<F>, penalty: F) -> F {
        self.w_a * c.p_a + self.w_am * c.p_am + self.w_o * c.p_o + self.w_om * c.p_om + self.w_od * c.p_od + penalty
    }
}

/// `exp(-d/10)/10` for a mean distance `d` in meters.
pub fn disambiguation_from_distance<F: Real>(d: F) -> F {
    let ten = F::lit(10.0);
    (-d / ten).exp() / ten
}

/// Proximity of a candidate node to the previous step's nodes. Zero when
/// there is no previous step or any position is unknown.
pub fn disambiguation_score(candidate: &GraphNode, previous: &[&GraphNode]) -> f64 {
    let previous: Vec<Option<[f64; 3]>> = previous.iter().map(|n| n.position).collect();
    disambiguation_at(candidate.position, &previous)
}

/// [`disambiguation_score`] over bare positions.
pub fn disambiguation_at(candidate: Option<[f64; 3]>, previous: &[Option<[f64; 3]>]) -> f64 {
    let Some(c) = candidate else { return 0.0 };
    if previous.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for p in previous {
        let Some(p) = p else { return 0.0 };
        sum += c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    disambiguation_from_distance(sum / previous.len() as f64)
}

/// `log(1 / perplexity)`.
pub fn object_relevance<F: Real>(perplexity: F) -> F {
    -perplexity.ln()
}

pub fn repetition_penalty<F: Real>(count: usize, rate: F) -> F {
    -(rate * F::count(count))
}

/// Previous steps with the same verb and object names.
pub fn action_repeats(step: &ActionStep, plan: &Plan) -> usize {
    let key = step.key();
    plan.steps.iter().filter(|s| s.key() == key).count()
}

/// Previous steps with the same verb bound to the same node ids.
pub fn pair_repeats(step: &ActionStep, plan: &Plan) -> usize {
    plan.steps
        .iter()
        .filter(|s| s.verb() == step.verb() && s.object_ids.is_some() && s.object_ids == step.object_ids)
        .count()
}

pub fn action_repetition_penalty<F: Real>(step: &ActionStep, plan: &Plan, per_repeat: F) -> F {
    repetition_penalty(action_repeats(step, plan), per_repeat)
}

pub fn pair_repetition_penalty<F: Real>(step: &ActionStep, plan: &Plan, per_repeat: F) -> F {
    repetition_penalty(pair_repeats(step, plan), per_repeat)
}

/// Index of the first maximal total.
pub fn argmax<F: Real>(totals: &[F]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in totals.iter().enumerate() {
        if best.is_none_or(|b| *t > totals[b]) {
            best = Some(i);
        }
    }
    best
}

/// Violations of the declared score ranges and of the weighted-sum identity.
pub fn range_violations<F: Real>(c: &Components<F>, penalty: F, total: F, weights: &Weights<F>) -> Vec<String> {
    let mut out = Vec::new();
    let one = F::one();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            out.push(what.to_string());
        }
    };
    check(c.p_a <= F::zero() && c.p_a.is_finite(), "p_a must be finite and <= 0");
    check(c.p_am >= -one && c.p_am <= one, "p_am outside [-1, 1]");
    check(c.p_o <= F::zero() && c.p_o.is_finite(), "p_o must be finite and <= 0");
    check(c.p_om >= -one && c.p_om <= one, "p_om outside [-1, 1]");
    check(c.p_od >= F::zero() && c.p_od <= F::lit(0.1), "p_od outside [0, 0.1]");
    check(penalty <= F::zero(), "penalty must be <= 0");
    let recomputed = weights.total(c, penalty);
    let tol = F::lit(1e-12) * (F::one() + recomputed.abs());
    check((recomputed - total).abs() <= tol, "total does not match its components");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{parse_script_line, TemplateRegistry};
    use proptest::prelude::*;

    fn plan(lines: &[&str]) -> Plan {
        let r = TemplateRegistry::builtin();
        Plan {
            task: "t".into(),
            steps: lines.iter().map(|l| parse_script_line(l, &r).unwrap()).collect(),
        }
    }

    #[test]
    fn closed_forms() {
        assert_eq!(disambiguation_from_distance(0.0f64), 0.1);
        assert!((disambiguation_from_distance(10.0f64) - (-1.0f64).exp() / 10.0).abs() < 1e-12);
        assert_eq!(object_relevance(1.0f64), 0.0);
        assert!((object_relevance(std::f64::consts::E) + 1.0).abs() < 1e-12);
        assert!((object_relevance(std::f32::consts::E) + 1.0).abs() < 1e-6);

        let table = GraphNode::new(1, "table").at(0.0, 0.0, 0.0);
        let near = GraphNode::new(2, "plate").at(1.0, 0.0, 0.0);
        let far = GraphNode::new(3, "plate").at(0.0, 20.0, 0.0);
        let floating = GraphNode::new(4, "plate");
        assert!((disambiguation_score(&near, &[&table]) - (-0.1f64).exp() / 10.0).abs() < 1e-12);
        assert!((disambiguation_score(&far, &[&table]) - (-2.0f64).exp() / 10.0).abs() < 1e-12);
        assert_eq!(disambiguation_score(&floating, &[&table]), 0.0);
        assert_eq!(disambiguation_score(&near, &[]), 0.0);
        // mean distance over several previous nodes
        let other = GraphNode::new(5, "sink").at(3.0, 0.0, 0.0);
        assert!((disambiguation_score(&near, &[&table, &other]) - (-0.15f64).exp() / 10.0).abs() < 1e-12);
    }

    #[test]
    fn penalties() {
        let done = plan(&["[Grab] <plate> (7)", "[Grab] <plate> (7)", "[Walk] <table> (3)"]);
        let grab7 = &done.steps[0];
        assert_eq!(action_repetition_penalty(grab7, &plan(&[]), 0.3), 0.0);
        assert!((action_repetition_penalty(grab7, &done, 0.3f64) + 0.6).abs() < 1e-12);
        assert_eq!(action_repetition_penalty(grab7, &done, 0.0), 0.0);

        let once = plan(&["[Grab] <plate> (7)"]);
        let fresh = plan(&["[Grab] <plate> (8)"]);
        assert_eq!(pair_repetition_penalty(&fresh.steps[0], &once, 0.5), 0.0);
        assert_eq!(pair_repetition_penalty(grab7, &once, 0.5), -0.5);
        let thrice = plan(&["[Grab] <plate> (7)", "[Grab] <plate> (7)", "[Grab] <plate> (7)"]);
        assert_eq!(pair_repetition_penalty(grab7, &thrice, 0.5), -1.5);
        // a different verb on the same node is not a repeated pair
        let put = plan(&["[Touch] <plate> (7)"]);
        assert_eq!(pair_repetition_penalty(grab7, &put, 0.5), 0.0);
    }

    #[test]
    fn degenerate_weights() {
        let zero = Weights {
            w_a: 0.0,
            w_am: 0.0,
            w_o: 0.0,
            w_om: 0.0,
            w_od: 0.0,
            action_repeat: 0.0,
            pair_repeat: 0.0,
        };
        let c = Components {
            p_a: -1.0,
            p_am: 0.5,
            p_o: -2.0,
            p_om: 0.9,
            p_od: 0.05,
        };
        assert_eq!(zero.total(&c, zero.penalty(3, 2)), 0.0);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(argmax::<f64>(&[]), None);
        assert!(range_violations(&c, 0.0, 0.0, &zero).is_empty());
        assert_eq!(range_violations(&c, 0.0, 1.0, &zero).len(), 1);
    }

    fn components() -> impl Strategy<Value = Components<f64>> {
        (-5.0f64..0.0, -1.0f64..1.0, -9.0f64..0.0, -1.0f64..1.0, 0.0f64..0.1).prop_map(|(p_a, p_am, p_o, p_om, p_od)| {
            Components {
                p_a,
                p_am,
                p_o,
                p_om,
                p_od,
            }
        })
    }

    proptest! {
        #[test]
        fn positive_scaling_keeps_argmax(
            cands in prop::collection::vec((components(), 0usize..4, 0usize..4), 1..20),
            w in prop::array::uniform7(0.0f64..4.0),
            c in 0.01f64..100.0,
        ) {
            let weights = Weights { w_a: w[0], w_am: w[1], w_o: w[2], w_om: w[3], w_od: w[4], action_repeat: w[5], pair_repeat: w[6] };
            let scaled = weights.scaled(c);
            let totals: Vec<f64> = cands.iter().map(|(s, a, p)| weights.total(s, weights.penalty(*a, *p))).collect();
            let scaled_totals: Vec<f64> = cands.iter().map(|(s, a, p)| scaled.total(s, scaled.penalty(*a, *p))).collect();
            let i = argmax(&totals).unwrap();
            let j = argmax(&scaled_totals).unwrap();
            prop_assert!(i == j || (totals[i] - totals[j]).abs() <= 1e-9 * (1.0 + totals[i].abs()));
        }
    }
}
