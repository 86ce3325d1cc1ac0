//! Exhaustive interleavings of concurrent claim/free/deactivate scripts
//! against the registry, checked step by step against a tiny reference model.

use std::collections::{BTreeMap, BTreeSet};

use mosaic_core::registry::{FreeOutcome, PoiRegistry};
use mosaic_core::{Actor, PoiId, PoiType, Pose2, RobotId};

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Claim(u64),
    Free(u64, bool),
    Deactivate(u64),
    Reactivate(u64),
}

/// One actor's script; `None` is the operator.
pub type Script = (Option<&'static str>, Vec<Op>);

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    pub interleavings: usize,
    pub steps: usize,
    pub double_assignments: usize,
    pub lost_claims: usize,
    pub model_mismatches: usize,
    pub replay_mismatches: usize,
}

#[derive(Default, Clone)]
struct ModelPoi {
    holder: Option<&'static str>,
    active: bool,
    attempts: usize,
}

pub fn scenarios() -> Vec<Vec<Script>> {
    use Op::*;
    vec![
        vec![
            (Some("a"), vec![Claim(1), Free(1, true), Claim(2)]),
            (Some("b"), vec![Claim(1), Deactivate(1), Claim(2)]),
            (None, vec![Deactivate(2), Reactivate(2), Deactivate(1)]),
        ],
        vec![
            (Some("a"), vec![Claim(1), Free(1, false), Claim(1)]),
            (Some("b"), vec![Claim(1), Free(1, false), Claim(1)]),
            (Some("c"), vec![Claim(1), Deactivate(1), Claim(2)]),
        ],
        vec![
            (Some("a"), vec![Claim(2), Deactivate(2), Claim(1)]),
            (Some("b"), vec![Claim(2), Claim(1), Free(1, true)]),
            (None, vec![Deactivate(1), Reactivate(1), Reactivate(2)]),
        ],
    ]
}

/// Every merge of the scripts that preserves each script's own order.
fn interleavings(lengths: &[usize]) -> Vec<Vec<usize>> {
    fn rec(remaining: &mut Vec<usize>, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.iter().all(|r| *r == 0) {
            out.push(prefix.clone());
            return;
        }
        for i in 0..remaining.len() {
            if remaining[i] > 0 {
                remaining[i] -= 1;
                prefix.push(i);
                rec(remaining, prefix, out);
                prefix.pop();
                remaining[i] += 1;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut lengths.to_vec(), &mut Vec::new(), &mut out);
    out
}

pub fn run_exhaustive() -> Report {
    let mut report = Report::default();
    for scripts in scenarios() {
        let lengths: Vec<usize> = scripts.iter().map(|(_, ops)| ops.len()).collect();
        for order in interleavings(&lengths) {
            run_one(&scripts, &order, &mut report);
        }
    }
    report
}

fn run_one(scripts: &[Script], order: &[usize], report: &mut Report) {
    report.interleavings += 1;
    let mut reg = PoiRegistry::new();
    let mut model: BTreeMap<u64, ModelPoi> = BTreeMap::new();
    for id in 1..=2u64 {
        let poi = reg
            .create_poi(Pose2::new(id as f64, 0.0, 0.0), PoiType::Exploration, 1.0)
            .unwrap();
        assert_eq!(poi.id, PoiId(id));
        model.insert(
            id,
            ModelPoi {
                active: true,
                ..ModelPoi::default()
            },
        );
    }
    // Claims a robot was granted and has not given up or had revoked.
    let mut valid: BTreeSet<(u64, &'static str)> = BTreeSet::new();
    let mut cursor = vec![0usize; scripts.len()];

    for (step, &who) in order.iter().enumerate() {
        let (actor, ops) = &scripts[who];
        let op = ops[cursor[who]];
        cursor[who] += 1;
        report.steps += 1;
        reg.set_time(step as f64 + 1.0).unwrap();

        let (got_ok, expect_ok) = match (op, actor) {
            (Op::Claim(p), Some(r)) => {
                let ok = reg.claim_poi(PoiId(p), &RobotId::new(*r)).is_ok();
                let m = model.get_mut(&p).unwrap();
                let expect = m.active && m.holder.is_none();
                if expect {
                    m.holder = Some(r);
                    valid.insert((p, r));
                }
                (ok, expect)
            }
            (Op::Free(p, success), Some(r)) => {
                let outcome = if success {
                    FreeOutcome::Success
                } else {
                    FreeOutcome::Failed
                };
                let ok = reg.free_poi(PoiId(p), &RobotId::new(*r), outcome).is_ok();
                let m = model.get_mut(&p).unwrap();
                let expect = m.holder == Some(*r);
                if expect {
                    m.holder = None;
                    m.attempts += 1;
                    valid.remove(&(p, r));
                }
                (ok, expect)
            }
            (Op::Deactivate(p), _) => {
                let a = match actor {
                    Some(r) => Actor::robot(*r),
                    None => Actor::Operator,
                };
                let ok = reg.deactivate_poi(PoiId(p), a).is_ok();
                let m = model.get_mut(&p).unwrap();
                let expect =
                    m.active && (actor.is_none() || m.holder.is_none() || m.holder == *actor);
                if expect {
                    m.active = false;
                    m.holder = None;
                    valid.retain(|(q, _)| *q != p);
                }
                (ok, expect)
            }
            (Op::Reactivate(p), _) => {
                let ok = reg.reactivate_poi(PoiId(p)).is_ok();
                let m = model.get_mut(&p).unwrap();
                let expect = !m.active;
                if expect {
                    m.active = true;
                }
                (ok, expect)
            }
            (op, None) => panic!("operator cannot {op:?}"),
        };
        if got_ok != expect_ok {
            report.model_mismatches += 1;
        }

        for (id, m) in &model {
            let poi = reg.get(PoiId(*id)).unwrap();
            let holders = valid.iter().filter(|(p, _)| p == id).count();
            if holders > 1 {
                report.double_assignments += 1;
            }
            for (_, r) in valid.iter().filter(|(p, _)| p == id) {
                if poi.robot.as_ref().map(RobotId::as_str) != Some(*r) {
                    report.lost_claims += 1;
                }
            }
            if poi.robot.as_ref().map(RobotId::as_str) != m.holder
                || poi.active != m.active
                || poi.robot_attempts.len() != m.attempts
            {
                report.model_mismatches += 1;
            }
        }
    }

    let mut bytes = Vec::new();
    reg.write_journal(&mut bytes).unwrap();
    let entries = PoiRegistry::read_journal(bytes.as_slice()).unwrap();
    match PoiRegistry::replay(&entries) {
        Ok(replayed) if replayed.all().eq(reg.all()) && replayed.journal() == reg.journal() => {}
        _ => report.replay_mismatches += 1,
    }
}
