//! Single-pass dual update rules. Each rule turns an edge sequence into a
//! feasible solution of the matching dual, whose objective upper-bounds the
//! optimum matching weight. The smallest such bound gives an a-posteriori
//! quality estimate for any matching on the same input.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedEdge;
use crate::streams::rng_for;

const ARGRAND_STREAM: u64 = 0xA5;

/// How the deficit of an uncovered edge is distributed over its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DualRule {
    /// Full deficit to both endpoints.
    UniRelaxed,
    /// Half the deficit to each endpoint.
    UniTight,
    /// Full deficit to the endpoint with the larger dual (ties: smaller id).
    ArgMax,
    /// Full deficit to the endpoint with the smaller dual (ties: smaller id).
    ArgMin,
    /// Full deficit to a uniformly random endpoint.
    ArgRand { seed: u64 },
}

impl DualRule {
    /// The five rules, with `seed` for the randomized one.
    pub fn all(seed: u64) -> [DualRule; 5] {
        [
            DualRule::UniRelaxed,
            DualRule::UniTight,
            DualRule::ArgMax,
            DualRule::ArgMin,
            DualRule::ArgRand { seed },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            DualRule::UniRelaxed => "uni-relaxed",
            DualRule::UniTight => "uni-tight",
            DualRule::ArgMax => "arg-max",
            DualRule::ArgMin => "arg-min",
            DualRule::ArgRand { .. } => "arg-rand",
        }
    }
}

impl fmt::Display for DualRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DualRule::ArgRand { seed } => write!(f, "arg-rand:{seed}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for DualRule {
    type Err = Error;

    /// Accepts the kebab-case names; `arg-rand` takes an optional `:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s.as_str(), None),
        };
        let rule = match name {
            "uni-relaxed" | "unirelaxed" => DualRule::UniRelaxed,
            "uni-tight" | "unitight" => DualRule::UniTight,
            "arg-max" | "argmax" => DualRule::ArgMax,
            "arg-min" | "argmin" => DualRule::ArgMin,
            "arg-rand" | "argrand" => {
                let seed = match arg {
                    Some(x) => x.parse().map_err(|_| Error::Config(format!("bad arg-rand seed {x:?}")))?,
                    None => 0,
                };
                return Ok(DualRule::ArgRand { seed });
            }
            other => return Err(Error::Config(format!("unknown dual rule {other:?}"))),
        };
        if arg.is_some() {
            return Err(Error::Config(format!("rule {name} takes no argument")));
        }
        Ok(rule)
    }
}

impl From<DualRule> for String {
    fn from(r: DualRule) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for DualRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Dual vector produced by one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub y: Vec<f64>,
    pub rule: Option<DualRule>,
    pub objective: f64,
}

impl DualSolution {
    pub fn from_vector(y: Vec<f64>, rule: Option<DualRule>) -> Self {
        let objective = y.iter().sum();
        DualSolution { y, rule, objective }
    }

    /// `(1 + eps)` times the engine's post-streaming duals.
    pub fn scaled_engine_duals(alpha: &[f64], epsilon: f64) -> Self {
        DualSolution::from_vector(alpha.iter().map(|a| (1.0 + epsilon) * a).collect(), None)
    }
}

/// Runs `rule` over `edges` in order. Edges already covered are ignored;
/// otherwise the deficit `w - (y_u + y_v)` is distributed per the rule.
pub fn apply_rule<'a>(rule: DualRule, n: usize, edges: impl IntoIterator<Item = &'a WeightedEdge>) -> DualSolution {
    let mut y = vec![0.0f64; n];
    let mut rng = match rule {
        DualRule::ArgRand { seed } => Some(rng_for(seed, ARGRAND_STREAM)),
        _ => None,
    };
    for e in edges {
        let (u, v) = (e.u.index(), e.v.index());
        let covered = y[u] + y[v];
        if e.w <= covered {
            continue;
        }
        let delta = e.w - covered;
        let (lo, hi) = if e.u <= e.v { (u, v) } else { (v, u) };
        match rule {
            DualRule::UniRelaxed => {
                y[u] += delta;
                y[v] += delta;
            }
            DualRule::UniTight => {
                y[u] += delta / 2.0;
                y[v] += delta / 2.0;
            }
            DualRule::ArgMax => {
                let x = if y[hi] > y[lo] { hi } else { lo };
                y[x] += delta;
            }
            DualRule::ArgMin => {
                let x = if y[hi] < y[lo] { hi } else { lo };
                y[x] += delta;
            }
            DualRule::ArgRand { .. } => {
                let pick_u = rng.as_mut().expect("seeded").gen_bool(0.5);
                y[if pick_u { u } else { v }] += delta;
            }
        }
    }
    DualSolution::from_vector(y, Some(rule))
}

/// Runs several rules over the concatenation of `streams`.
pub fn audit_streams(rules: &[DualRule], n: usize, streams: &[Vec<WeightedEdge>]) -> Vec<DualSolution> {
    rules
        .iter()
        .map(|&r| apply_rule(r, n, streams.iter().flatten()))
        .collect()
}

/// Smallest objective among `solutions`.
pub fn min_bound(solutions: &[DualSolution]) -> Result<f64> {
    solutions
        .iter()
        .map(|s| s.objective)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Audit("no dual solutions to take a minimum over".into()))
}

/// `100 * w_M / y_min`; a zero bound only arises on edgeless inputs and is
/// reported as 100.
pub fn min_opt_percent(w_m: f64, y_min: f64) -> f64 {
    if y_min <= 0.0 {
        return 100.0;
    }
    100.0 * w_m / y_min
}

/// Relative slack allowed by [`check_feasibility`].
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// True iff every edge is covered: `y_u + y_v >= w_e`, up to relative 1e-9.
pub fn check_feasibility<'a>(edges: impl IntoIterator<Item = &'a WeightedEdge>, y: &[f64]) -> bool {
    first_violation(edges, y).is_none()
}

/// First uncovered edge, if any.
pub fn first_violation<'a>(edges: impl IntoIterator<Item = &'a WeightedEdge>, y: &[f64]) -> Option<WeightedEdge> {
    edges
        .into_iter()
        .find(|e| y[e.u.index()] + y[e.v.index()] < e.w * (1.0 - FEASIBILITY_RTOL))
        .copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(u: u32, v: u32, w: f64) -> WeightedEdge {
        WeightedEdge::new(u, v, w)
    }

    fn triangle() -> Vec<WeightedEdge> {
        vec![e(0, 1, 10.0), e(1, 2, 12.0), e(0, 2, 8.0)]
    }

    #[test]
    fn single_edge() {
        let one = [e(0, 1, 10.0)];
        let t = apply_rule(DualRule::UniTight, 2, &one);
        assert_eq!(t.y, vec![5.0, 5.0]);
        assert_eq!(t.objective, 10.0);
        let r = apply_rule(DualRule::UniRelaxed, 2, &one);
        assert_eq!(r.y, vec![10.0, 10.0]);
        assert_eq!(r.objective, 20.0);
    }

    #[test]
    fn triangle_uni_tight() {
        // (5,5,0) then delta 7 on (b,c): (5, 8.5, 3.5); (a,c): 8.5 >= 8 covered
        let s = apply_rule(DualRule::UniTight, 3, &triangle());
        assert_eq!(s.y, vec![5.0, 8.5, 3.5]);
        assert_eq!(s.objective, 17.0);
        assert!(check_feasibility(&triangle(), &s.y));
    }

    #[test]
    fn arg_rules_tie_break_to_smaller_id() {
        let s = apply_rule(DualRule::ArgMax, 3, &[e(2, 1, 4.0)]);
        assert_eq!(s.y, vec![0.0, 4.0, 0.0]);
        let s = apply_rule(DualRule::ArgMin, 3, &[e(2, 1, 4.0)]);
        assert_eq!(s.y, vec![0.0, 4.0, 0.0]);
        let s = apply_rule(DualRule::ArgMax, 3, &[e(0, 1, 4.0), e(1, 2, 6.0)]);
        assert_eq!(s.y, vec![4.0, 6.0, 0.0]);
        let s = apply_rule(DualRule::ArgMin, 3, &[e(0, 1, 4.0), e(1, 2, 6.0)]);
        assert_eq!(s.y, vec![4.0, 6.0, 0.0]);
        let s = apply_rule(DualRule::ArgMin, 3, &[e(0, 1, 4.0), e(0, 2, 6.0)]);
        // deficit 6 - 4 goes to the smaller dual at vertex 2
        assert_eq!(s.y, vec![4.0, 0.0, 2.0]);
    }

    #[test]
    fn min_bound_examples() {
        let a = DualSolution::from_vector(vec![20.0], None);
        let b = DualSolution::from_vector(vec![17.0], None);
        assert_eq!(min_bound(&[a.clone(), b]).unwrap(), 17.0);
        assert_eq!(min_bound(&[a]).unwrap(), 20.0);
        assert!(min_bound(&[]).is_err());
        let sols = audit_streams(&DualRule::all(3), 3, &[triangle()]);
        assert!(min_bound(&sols).unwrap() <= 17.0);
    }

    #[test]
    fn percent_examples() {
        assert!((min_opt_percent(12.0, 17.0) - 70.588_235_294).abs() < 1e-6);
        assert_eq!(min_opt_percent(10.0, 10.0), 100.0);
        assert_eq!(min_opt_percent(0.0, 3.0), 0.0);
        assert_eq!(min_opt_percent(0.0, 0.0), 100.0);
    }

    #[test]
    fn feasibility_examples() {
        for rule in DualRule::all(9) {
            let s = apply_rule(rule, 3, &triangle());
            assert!(check_feasibility(&triangle(), &s.y), "{rule}");
        }
        assert!(!check_feasibility(&triangle(), &[0.0; 3]));
        assert_eq!(first_violation(&triangle(), &[0.0; 3]), Some(e(0, 1, 10.0)));
    }

    #[test]
    fn rule_names_roundtrip() {
        for rule in DualRule::all(42) {
            assert_eq!(rule.to_string().parse::<DualRule>().unwrap(), rule);
        }
        assert_eq!("ArgMax".parse::<DualRule>().unwrap(), DualRule::ArgMax);
        assert!("nope".parse::<DualRule>().is_err());
        assert!("arg-max:3".parse::<DualRule>().is_err());
    }

    #[test]
    fn argrand_seeded() {
        let edges: Vec<_> = (0..50).map(|i| e(i % 7, 7 + i % 5, 1.0 + f64::from(i))).collect();
        let a = apply_rule(DualRule::ArgRand { seed: 1 }, 12, &edges);
        let b = apply_rule(DualRule::ArgRand { seed: 1 }, 12, &edges);
        assert_eq!(a, b);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn every_rule_feasible(raw in prop::collection::vec((0u32..15, 0u32..15, 1.0f64..1e4), 0..80), seed in any::<u64>()) {
            let edges: Vec<_> = raw.into_iter().filter(|(a, b, _)| a != b).map(|(a, b, w)| e(a, b, w)).collect();
            for rule in DualRule::all(seed) {
                let s = apply_rule(rule, 15, &edges);
                prop_assert!(s.y.iter().all(|&x| x >= 0.0));
                prop_assert!(check_feasibility(&edges, &s.y));
            }
        }
    }
}
