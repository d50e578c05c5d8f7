//! Fairness criteria as linear expectation constraints over the pair universe.
//!
//! A constraint `c` owns a set of member pairs and requires
//! `F_c = sum_{ij in members(c)} p_ij(1)` to equal a target `d_c`. Member sets
//! are disjoint, so each pair is governed by at most one constraint.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GroupPair, PairUniverse};
use crate::models::{marginals, DyadicModel};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    None,
    Dp,
    Eo,
    Custom,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::None => "none",
            Criterion::Dp => "dp",
            Criterion::Eo => "eo",
            Criterion::Custom => "custom",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Criterion::None),
            "dp" => Ok(Criterion::Dp),
            "eo" => Ok(Criterion::Eo),
            other => Err(Error::Config(format!("unknown fairness criterion `{other}`"))),
        }
    }
}

/// Pairs whose mean probability defines the shared density `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Every pair in the universe (DP).
    Universe,
    /// The union of all member sets (EO: the train edges).
    Members,
}

/// How `d_c` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// `d_c = d * |members(c)|` with `d` the model's mean over `averaging`.
    SharedDensity { averaging: Averaging },
    /// Caller-supplied constants.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: String,
    pub group_pair: Option<GroupPair>,
    /// Universe indices, ascending.
    pub members: Vec<usize>,
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    criterion: Criterion,
    constraints: Vec<Constraint>,
    pair_constraint: Vec<u32>,
    rule: TargetRule,
    skipped: Vec<GroupPair>,
    averaging_size: usize,
}

/// Evaluated targets: the shared density (when the rule has one) and `d_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub density: Option<f64>,
    pub values: Vec<f64>,
}

impl ConstraintSystem {
    /// Demographic parity: one constraint per non-empty group-pair block,
    /// members `U_st`, target `d |U_st|`.
    pub fn build_dp(universe: &PairUniverse) -> Self {
        let mut members = vec![Vec::new(); universe.blocks().len()];
        for k in 0..universe.len() {
            members[universe.block_of(k)].push(k);
        }
        let constraints = universe
            .blocks()
            .iter()
            .zip(members)
            .map(|(&gp, members)| Constraint {
                label: format!("{}-{}", gp.0, gp.1),
                group_pair: Some(gp),
                members,
            })
            .collect();
        Self::assemble(
            Criterion::Dp,
            universe.len(),
            constraints,
            TargetRule::SharedDensity {
                averaging: Averaging::Universe,
            },
            Vec::new(),
        )
        .expect("blocks partition the universe")
    }

    /// Equalized opportunity: one constraint per block with train edges,
    /// members `E ∩ U_st`, target `d |E ∩ U_st|`. Blocks without train edges
    /// are skipped and listed in [`Self::skipped`].
    pub fn build_eo(universe: &PairUniverse, train_graph: &Graph) -> Self {
        let mut members = vec![Vec::new(); universe.blocks().len()];
        let mut edges = universe.edge_indices(train_graph);
        edges.sort_unstable();
        for k in edges {
            members[universe.block_of(k)].push(k);
        }
        let mut constraints = Vec::new();
        let mut skipped = Vec::new();
        for (&gp, members) in universe.blocks().iter().zip(members) {
            if members.is_empty() {
                skipped.push(gp);
            } else {
                constraints.push(Constraint {
                    label: format!("{}-{}", gp.0, gp.1),
                    group_pair: Some(gp),
                    members,
                });
            }
        }
        if !skipped.is_empty() {
            log::info!("EO skips {} block(s) without train edges: {:?}", skipped.len(), skipped);
        }
        Self::assemble(
            Criterion::Eo,
            universe.len(),
            constraints,
            TargetRule::SharedDensity {
                averaging: Averaging::Members,
            },
            skipped,
        )
        .expect("edge blocks are disjoint")
    }

    /// Any family of disjoint binary-membership constraints.
    pub fn custom(universe_len: usize, constraints: Vec<Constraint>, rule: TargetRule) -> Result<Self> {
        if let TargetRule::Fixed(v) = &rule {
            if v.len() != constraints.len() {
                return Err(Error::Config(format!(
                    "{} fixed targets for {} constraints",
                    v.len(),
                    constraints.len()
                )));
            }
        }
        Self::assemble(Criterion::Custom, universe_len, constraints, rule, Vec::new())
    }

    fn assemble(
        criterion: Criterion,
        universe_len: usize,
        mut constraints: Vec<Constraint>,
        rule: TargetRule,
        skipped: Vec<GroupPair>,
    ) -> Result<Self> {
        let mut pair_constraint = vec![NONE; universe_len];
        for (c, con) in constraints.iter_mut().enumerate() {
            con.members.sort_unstable();
            for &k in &con.members {
                if k >= universe_len {
                    return Err(Error::Config(format!(
                        "constraint {c} references pair {k} outside the universe"
                    )));
                }
                if pair_constraint[k] != NONE {
                    return Err(Error::Config(format!(
                        "pair {k} belongs to constraints {} and {c}",
                        pair_constraint[k]
                    )));
                }
                pair_constraint[k] = c as u32;
            }
        }
        let averaging_size = match rule {
            TargetRule::SharedDensity {
                averaging: Averaging::Universe,
            } => universe_len,
            _ => constraints.iter().map(|c| c.members.len()).sum(),
        };
        Ok(ConstraintSystem {
            criterion,
            constraints,
            pair_constraint,
            rule,
            skipped,
            averaging_size,
        })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn rule(&self) -> &TargetRule {
        &self.rule
    }

    pub fn skipped(&self) -> &[GroupPair] {
        &self.skipped
    }

    pub fn universe_len(&self) -> usize {
        self.pair_constraint.len()
    }

    /// Constraint governing pair `k`, if any.
    pub fn constraint_of(&self, k: usize) -> Option<usize> {
        match self.pair_constraint[k] {
            NONE => None,
            c => Some(c as usize),
        }
    }

    /// Number of pairs averaged to obtain the shared density.
    pub fn averaging_size(&self) -> usize {
        self.averaging_size
    }

    /// Whether pair `k` contributes to the shared density.
    pub fn in_averaging_set(&self, k: usize) -> bool {
        match self.rule {
            TargetRule::SharedDensity {
                averaging: Averaging::Universe,
            } => true,
            _ => self.pair_constraint[k] != NONE,
        }
    }

    /// `d_c` for the given per-pair marginals `p_ij(1)`.
    pub fn targets_from_marginals(&self, marginals: &[f64]) -> Targets {
        assert_eq!(marginals.len(), self.universe_len());
        match &self.rule {
            TargetRule::Fixed(v) => Targets {
                density: None,
                values: v.clone(),
            },
            TargetRule::SharedDensity { averaging } => {
                let mut acc = CompensatedSum::default();
                match averaging {
                    Averaging::Universe => marginals.iter().for_each(|&p| acc.add(p)),
                    Averaging::Members => self
                        .constraints
                        .iter()
                        .flat_map(|c| &c.members)
                        .for_each(|&k| acc.add(marginals[k])),
                }
                let d = acc.value() / self.averaging_size.max(1) as f64;
                Targets {
                    density: Some(d),
                    values: self
                        .constraints
                        .iter()
                        .map(|c| d * c.members.len() as f64)
                        .collect(),
                }
            }
        }
    }

    /// `d_c` for the model's current marginals.
    pub fn constraint_targets(&self, model: &dyn DyadicModel, universe: &PairUniverse) -> Targets {
        self.targets_from_marginals(&marginals(model, universe))
    }

    /// `F_c = sum over members of p_ij(1)` for each constraint.
    pub fn eval_constraint(&self, marginals: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let mut acc = CompensatedSum::default();
                for &k in &c.members {
                    acc.add(marginals[k]);
                }
                acc.value()
            })
            .collect()
    }

    /// Audit rows for JSON output.
    pub fn report(&self, marginals: &[f64], targets: &Targets) -> ConstraintReport {
        let values = self.eval_constraint(marginals);
        ConstraintReport {
            criterion: self.criterion,
            density: targets.density,
            constraints: self
                .constraints
                .iter()
                .zip(values)
                .zip(&targets.values)
                .map(|((c, value), &target)| ConstraintRow {
                    label: c.label.clone(),
                    group_pair: c.group_pair,
                    members: c.members.len(),
                    value,
                    target,
                })
                .collect(),
            skipped: self.skipped.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub label: String,
    pub group_pair: Option<GroupPair>,
    pub members: usize,
    pub value: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub criterion: Criterion,
    pub density: Option<f64>,
    pub constraints: Vec<ConstraintRow>,
    pub skipped: Vec<GroupPair>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{SensitivePartition, Side};

    fn k4() -> (Graph, PairUniverse) {
        let edges = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = Graph::new(4, edges, None).unwrap();
        let p = SensitivePartition::from_ids(vec![0, 0, 1, 1]).unwrap();
        let u = PairUniverse::new(&g, &p);
        (g, u)
    }

    #[test]
    fn dp_has_one_constraint_per_unordered_block() {
        let (_, u) = k4();
        let sys = ConstraintSystem::build_dp(&u);
        assert_eq!(sys.len(), 3);
        let labels: Vec<_> = sys.constraints().iter().map(|c| c.group_pair.unwrap()).collect();
        assert_eq!(labels, vec![(0, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn eo_on_k4_counts_edges_per_block() {
        let (g, u) = k4();
        let sys = ConstraintSystem::build_eo(&u, &g);
        let counts: Vec<_> = sys.constraints().iter().map(|c| c.members.len()).collect();
        assert_eq!(counts, vec![1, 4, 1]);
    }

    #[test]
    fn eo_skips_blocks_without_edges() {
        let g = Graph::new(4, vec![(0, 1)], None).unwrap();
        let p = SensitivePartition::from_ids(vec![0, 0, 1, 1]).unwrap();
        let u = PairUniverse::new(&g, &p);
        let sys = ConstraintSystem::build_eo(&u, &g);
        assert_eq!(sys.len(), 1);
        assert_eq!(sys.constraints()[0].group_pair, Some((0, 0)));
        assert_eq!(sys.skipped(), &[(0, 1), (1, 1)]);
    }

    #[test]
    fn bipartite_with_unlabeled_side_gives_one_constraint_per_group() {
        // 7 user bins on the left, one "movie" group on the right.
        let n_users = 14;
        let n_items = 3;
        let mut sides = vec![Side::Left; n_users];
        sides.extend(vec![Side::Right; n_items]);
        let g = Graph::new(n_users + n_items, vec![], Some(sides)).unwrap();
        let mut groups: Vec<usize> = (0..n_users).map(|u| u % 7).collect();
        groups.extend(vec![7; n_items]);
        let p = SensitivePartition::from_ids(groups).unwrap();
        let u = PairUniverse::new(&g, &p);
        let sys = ConstraintSystem::build_dp(&u);
        assert_eq!(sys.len(), 7);
        assert!(sys.constraints().iter().all(|c| c.group_pair.unwrap().1 == 7));
    }

    #[test]
    fn dp_targets_use_universe_mean() {
        let g = Graph::new(3, vec![], None).unwrap();
        let p = SensitivePartition::from_ids(vec![0, 1, 1]).unwrap();
        let u = PairUniverse::new(&g, &p);
        // blocks: (0,1) has pairs 0-1, 0-2; (1,1) has 1-2
        let sys = ConstraintSystem::build_dp(&u);
        let t = sys.targets_from_marginals(&[0.5, 0.5, 0.5]);
        assert_eq!(t.density, Some(0.5));
        assert_eq!(t.values, vec![1.0, 0.5]);
    }

    #[test]
    fn two_unit_blocks_average_marginals() {
        let sys = ConstraintSystem::custom(
            2,
            vec![
                Constraint {
                    label: "a".into(),
                    group_pair: None,
                    members: vec![0],
                },
                Constraint {
                    label: "b".into(),
                    group_pair: None,
                    members: vec![1],
                },
            ],
            TargetRule::SharedDensity {
                averaging: Averaging::Universe,
            },
        )
        .unwrap();
        let t = sys.targets_from_marginals(&[0.2, 0.6]);
        assert!((t.density.unwrap() - 0.4).abs() < 1e-15);
        assert!((t.values[0] - 0.4).abs() < 1e-15 && (t.values[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn eo_target_is_mean_over_edges() {
        let g = Graph::new(3, vec![(0, 1)], None).unwrap();
        let p = SensitivePartition::from_ids(vec![0, 0, 1]).unwrap();
        let u = PairUniverse::new(&g, &p);
        let sys = ConstraintSystem::build_eo(&u, &g);
        let mut m = vec![0.1; u.len()];
        m[u.index_of(0, 1).unwrap()] = 0.7;
        let t = sys.targets_from_marginals(&m);
        assert!((t.density.unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(t.values.len(), 1);
        assert!((t.values[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn eval_sums_member_marginals() {
        let sys = ConstraintSystem::custom(
            4,
            vec![Constraint {
                label: "blk".into(),
                group_pair: None,
                members: vec![0, 2, 3],
            }],
            TargetRule::Fixed(vec![0.6]),
        )
        .unwrap();
        assert_eq!(sys.eval_constraint(&[0.0; 4]), vec![0.0]);
        let f = sys.eval_constraint(&[0.1, 0.9, 0.2, 0.3]);
        assert!((f[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn overlapping_custom_constraints_are_rejected() {
        let c = |m: Vec<usize>| Constraint {
            label: String::new(),
            group_pair: None,
            members: m,
        };
        let err = ConstraintSystem::custom(
            3,
            vec![c(vec![0, 1]), c(vec![1, 2])],
            TargetRule::Fixed(vec![0.5, 0.5]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
