//! Mission KPIs computed from an event log.
//!
//! Every function here is a pure reduction over `&[MissionEvent]` (plus the
//! scenario's target catalogue for resource identification), so recomputing a
//! report from the same log always gives the same numbers. Percentages are
//! kept unrounded in the structs; rounding happens only when formatting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::ChannelStats;
use crate::events::{roster, EventKind, MissionEvent, RobotActivity, RobotRole, TargetKind};
use crate::poi::{PoiId, PoiType, RobotId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KpiError {
    #[error("log contains no interaction or neglect time")]
    EmptyLog,
    #[error("invalid log: {0}")]
    InvalidLog(String),
}

/// A counted ratio, e.g. 6 of 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub hits: usize,
    pub total: usize,
}

impl Ratio {
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.hits as f64 / self.total as f64)
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.hits += 1;
        }
    }
}

impl std::ops::AddAssign for Ratio {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.total += rhs.total;
    }
}

/// Scenario target as seen by the KPI engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub id: u64,
    pub kind: TargetKind,
}

/// Rounds to `decimals` places, ties to even.
pub fn round_half_even(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let x = value * scale;
    let floor = x.floor();
    let diff = x - floor;
    let r = if (diff - 0.5).abs() < 1e-9 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        x.round()
    };
    r / scale
}

/// Mission start and end. Uses the `mission_start`/`mission_end` events when
/// present, otherwise the first and last timestamps.
pub fn mission_interval(log: &[MissionEvent]) -> Option<(f64, f64)> {
    let start = log
        .iter()
        .find(|e| matches!(e.kind, EventKind::MissionStart { .. }))
        .map(|e| e.t)
        .or_else(|| log.iter().map(|e| e.t).reduce(f64::min))?;
    let end = log
        .iter()
        .rev()
        .find(|e| matches!(e.kind, EventKind::MissionEnd { .. }))
        .map(|e| e.t)
        .or_else(|| log.iter().map(|e| e.t).reduce(f64::max))?;
    Some((start, end))
}

pub fn mission_duration(log: &[MissionEvent]) -> f64 {
    mission_interval(log).map_or(0.0, |(s, e)| (e - s).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutonomyBreakdown {
    /// Interaction effort: operator teleoperation plus troubleshooting, s.
    pub interaction_effort: f64,
    /// Neglect tolerance: robot time spent planning or autonomously executing, s, summed over robots.
    pub neglect_tolerance: f64,
    /// Robot attention demand, `IE / (IE + NT)`.
    pub rad: f64,
    /// `100 * (1 - RAD)`.
    pub autonomy_ratio: f64,
}

pub fn autonomy_ratio(log: &[MissionEvent]) -> Result<AutonomyBreakdown, KpiError> {
    let mut ie = 0.0;
    let mut nt = 0.0;
    for e in log {
        match e.kind {
            EventKind::TeleopSpan { start, end } | EventKind::TroubleshootSpan { start, end } => {
                ie += end - start
            }
            EventKind::StateSpan {
                state: RobotActivity::Planning | RobotActivity::Executing,
                start,
                end,
            } => nt += end - start,
            _ => {}
        }
    }
    if ie + nt <= 0.0 {
        return Err(KpiError::EmptyLog);
    }
    let rad = ie / (ie + nt);
    Ok(AutonomyBreakdown {
        interaction_effort: ie,
        neglect_tolerance: nt,
        rad,
        autonomy_ratio: 100.0 * (1.0 - rad),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryReport {
    /// Failed attempts over total attempts, per robot.
    pub per_robot: BTreeMap<RobotId, Ratio>,
    /// Mean of the per-robot percentages (robots without attempts excluded).
    pub mean: Option<f64>,
    /// All failed attempts over all attempts.
    pub pooled: Option<f64>,
}

pub fn retry_ratio(log: &[MissionEvent]) -> RetryReport {
    let mut per_robot: BTreeMap<RobotId, Ratio> = BTreeMap::new();
    for e in log {
        if let EventKind::Free { success, .. } = e.kind {
            let Some(robot) = &e.robot else { continue };
            per_robot.entry(robot.clone()).or_default().add(!success);
        }
    }
    let ratios: Vec<f64> = per_robot.values().filter_map(Ratio::percent).collect();
    let mean = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    let mut pooled = Ratio::default();
    for r in per_robot.values() {
        pooled += *r;
    }
    RetryReport {
        per_robot,
        mean,
        pooled: pooled.percent(),
    }
}

/// Tracks the type of each POI through create and convert events.
#[derive(Default)]
struct PoiTypes(BTreeMap<PoiId, PoiType>);

impl PoiTypes {
    fn observe(&mut self, e: &MissionEvent) {
        match e.kind {
            EventKind::Create {
                poi_id, poi_type, ..
            } => {
                self.0.insert(poi_id, poi_type);
            }
            EventKind::Convert { poi_id, to, .. } => {
                self.0.insert(poi_id, to);
            }
            _ => {}
        }
    }

    fn get(&self, id: PoiId) -> Option<PoiType> {
        self.0.get(&id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuccessReport {
    /// Distinct measurement POIs attempted and eventually completed, per robot and type.
    pub per_robot: BTreeMap<RobotId, BTreeMap<PoiType, Ratio>>,
    /// Distinct measurement POIs completed by anyone over distinct POIs attempted.
    pub combined: Ratio,
}

impl TaskSuccessReport {
    pub fn robot_total(&self, robot: &RobotId) -> Ratio {
        let mut r = Ratio::default();
        for v in self
            .per_robot
            .get(robot)
            .into_iter()
            .flat_map(|m| m.values())
        {
            r += *v;
        }
        r
    }
}

pub fn task_success_ratio(log: &[MissionEvent]) -> TaskSuccessReport {
    let mut types = PoiTypes::default();
    // (robot, poi) -> (type, succeeded)
    let mut attempts: BTreeMap<(RobotId, PoiId), (PoiType, bool)> = BTreeMap::new();
    let mut pois: BTreeMap<PoiId, bool> = BTreeMap::new();
    for e in log {
        types.observe(e);
        let (poi_id, success) = match e.kind {
            EventKind::Free {
                poi_id, success, ..
            } => (poi_id, success),
            _ => continue,
        };
        let (Some(robot), Some(poi_type)) = (&e.robot, types.get(poi_id)) else {
            continue;
        };
        if !poi_type.is_measurement() {
            continue;
        }
        let entry = attempts
            .entry((robot.clone(), poi_id))
            .or_insert((poi_type, false));
        entry.1 |= success;
        *pois.entry(poi_id).or_default() |= success;
    }
    let mut per_robot: BTreeMap<RobotId, BTreeMap<PoiType, Ratio>> = BTreeMap::new();
    for ((robot, _), (poi_type, ok)) in attempts {
        per_robot
            .entry(robot)
            .or_default()
            .entry(poi_type)
            .or_default()
            .add(ok);
    }
    let combined = Ratio {
        hits: pois.values().filter(|ok| **ok).count(),
        total: pois.len(),
    };
    TaskSuccessReport {
        per_robot,
        combined,
    }
}

/// Seconds per activity for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActivityTimes {
    pub idle: f64,
    pub planning: f64,
    pub executing: f64,
    pub teleop: f64,
}

impl ActivityTimes {
    pub fn total(&self) -> f64 {
        self.idle + self.planning + self.executing + self.teleop
    }

    fn add(&mut self, state: RobotActivity, dt: f64) {
        match state {
            RobotActivity::Idle => self.idle += dt,
            RobotActivity::Planning => self.planning += dt,
            RobotActivity::Executing => self.executing += dt,
            RobotActivity::Teleop => self.teleop += dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DowntimeSummary {
    /// Percent of robot-time spent idle or planning.
    pub downtime: f64,
    pub idle: f64,
    pub planning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DowntimeReport {
    pub duration: f64,
    pub per_robot: BTreeMap<RobotId, ActivityTimes>,
    pub overall: DowntimeSummary,
}

impl DowntimeReport {
    /// Downtime recomputed over all robots except `excluded`.
    pub fn excluding(&self, excluded: &[RobotId]) -> Option<DowntimeSummary> {
        summarize(
            self.per_robot
                .iter()
                .filter(|(r, _)| !excluded.contains(r))
                .map(|(_, t)| t),
            self.duration,
        )
    }

    /// Percent of the mission each robot spent in each activity.
    pub fn fractions(&self, robot: &RobotId) -> Option<ActivityTimes> {
        let t = self.per_robot.get(robot)?;
        let d = self.duration;
        Some(ActivityTimes {
            idle: 100.0 * t.idle / d,
            planning: 100.0 * t.planning / d,
            executing: 100.0 * t.executing / d,
            teleop: 100.0 * t.teleop / d,
        })
    }
}

fn summarize<'a>(
    times: impl Iterator<Item = &'a ActivityTimes>,
    duration: f64,
) -> Option<DowntimeSummary> {
    let (mut idle, mut planning, mut n) = (0.0, 0.0, 0usize);
    for t in times {
        idle += t.idle;
        planning += t.planning;
        n += 1;
    }
    if n == 0 || duration <= 0.0 {
        return None;
    }
    let robot_time = duration * n as f64;
    Some(DowntimeSummary {
        downtime: 100.0 * (idle + planning) / robot_time,
        idle: 100.0 * idle / robot_time,
        planning: 100.0 * planning / robot_time,
    })
}

type Spans = BTreeMap<RobotId, Vec<(RobotActivity, f64, f64)>>;

/// Per-robot activity spans, validated to be non-overlapping.
fn robot_spans(log: &[MissionEvent]) -> Result<Spans, KpiError> {
    let mut spans = Spans::new();
    for e in log {
        if let EventKind::StateSpan { state, start, end } = e.kind {
            let robot = e.robot.clone().ok_or_else(|| {
                KpiError::InvalidLog(format!("state span at t={} without robot", e.t))
            })?;
            if end < start {
                return Err(KpiError::InvalidLog(format!(
                    "span for {robot} ends before it starts"
                )));
            }
            spans.entry(robot).or_default().push((state, start, end));
        }
    }
    for (robot, list) in spans.iter_mut() {
        list.sort_by(|a, b| a.1.total_cmp(&b.1));
        for w in list.windows(2) {
            if w[1].1 < w[0].2 - 1e-9 {
                return Err(KpiError::InvalidLog(format!(
                    "overlapping state spans for {robot} at t={}",
                    w[1].1
                )));
            }
        }
    }
    Ok(spans)
}

pub fn downtime(log: &[MissionEvent]) -> Result<DowntimeReport, KpiError> {
    let duration = mission_duration(log);
    let mut per_robot = BTreeMap::new();
    for (robot, spans) in robot_spans(log)? {
        let mut times = ActivityTimes::default();
        for (state, start, end) in spans {
            times.add(state, end - start);
        }
        per_robot.insert(robot, times);
    }
    let overall = summarize(per_robot.values(), duration).unwrap_or(DowntimeSummary {
        downtime: 0.0,
        idle: 0.0,
        planning: 0.0,
    });
    Ok(DowntimeReport {
        duration,
        per_robot,
        overall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualOpsReport {
    /// Percent of mission time each robot spent under teleoperation.
    pub per_robot: BTreeMap<RobotId, f64>,
    pub mean: Option<f64>,
}

pub fn unscheduled_manual_ops(log: &[MissionEvent]) -> Result<ManualOpsReport, KpiError> {
    let report = downtime(log)?;
    let per_robot: BTreeMap<RobotId, f64> = report
        .per_robot
        .iter()
        .filter(|_| report.duration > 0.0)
        .map(|(r, t)| (r.clone(), 100.0 * t.teleop / report.duration))
        .collect();
    let mean =
        (!per_robot.is_empty()).then(|| per_robot.values().sum::<f64>() / per_robot.len() as f64);
    Ok(ManualOpsReport { per_robot, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingMetrics {
    /// m²
    pub area: f64,
    /// Distance walked by scouts, m.
    pub scout_distance: f64,
    /// m²/m, absent when scouts did not move.
    pub efficiency: Option<f64>,
    /// m²/s
    pub rate: Option<f64>,
}

pub fn mapping_metrics(log: &[MissionEvent], duration: f64) -> MappingMetrics {
    let roles = roster(log);
    let mut area = 0.0;
    let mut scout_distance = 0.0;
    for e in log {
        match e.kind {
            EventKind::CoverageDelta { area: a } => area += a,
            EventKind::DistanceDelta { distance } => {
                let is_scout = e
                    .robot
                    .as_ref()
                    .and_then(|r| roles.get(r))
                    .is_some_and(|role| *role == RobotRole::Scout);
                if is_scout {
                    scout_distance += distance;
                }
            }
            _ => {}
        }
    }
    MappingMetrics {
        area,
        scout_distance,
        efficiency: (scout_distance > 0.0).then(|| area / scout_distance),
        rate: (duration > 0.0).then(|| area / duration),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedResources {
    pub rocks: Ratio,
    pub sand_patches: Ratio,
    pub overall: Ratio,
    pub identified: BTreeSet<u64>,
}

/// A target counts as identified once a POI linked to it was confirmed
/// (converted to a rock measurement), created by the operator as a measurement
/// objective, or measured successfully.
pub fn identified_resources_ratio(
    log: &[MissionEvent],
    targets: &[TargetRef],
) -> IdentifiedResources {
    let mut link: BTreeMap<PoiId, u64> = BTreeMap::new();
    let mut identified = BTreeSet::new();
    for e in log {
        match e.kind {
            EventKind::Create {
                poi_id,
                poi_type,
                target_id: Some(target),
                ..
            } => {
                link.insert(poi_id, target);
                if e.is_operator() && poi_type.is_measurement() {
                    identified.insert(target);
                }
            }
            EventKind::Convert {
                poi_id,
                to: PoiType::RockMeasurement,
                ..
            }
            | EventKind::Measurement {
                poi_id,
                success: true,
                ..
            } => {
                if let Some(target) = link.get(&poi_id) {
                    identified.insert(*target);
                }
            }
            _ => {}
        }
    }
    let mut rocks = Ratio::default();
    let mut sand_patches = Ratio::default();
    for t in targets {
        let hit = identified.contains(&t.id);
        match t.kind {
            TargetKind::Rock => rocks.add(hit),
            TargetKind::SandPatch => sand_patches.add(hit),
        }
    }
    let mut overall = rocks;
    overall += sand_patches;
    identified.retain(|id| targets.iter().any(|t| t.id == *id));
    IdentifiedResources {
        rocks,
        sand_patches,
        overall,
        identified,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    /// Union of all operator activity spans over the mission duration, percent.
    pub workload: f64,
    pub monitoring: f64,
    pub teleoperation: f64,
    pub troubleshooting: f64,
}

fn union_length(mut spans: Vec<(f64, f64)>) -> f64 {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (s, e) in spans {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

pub fn operator_workload(log: &[MissionEvent], duration: f64) -> WorkloadReport {
    let mut all = Vec::new();
    let (mut monitoring, mut teleoperation, mut troubleshooting) = (0.0, 0.0, 0.0);
    for e in log {
        match e.kind {
            EventKind::MonitorSpan { start, end } => {
                monitoring += end - start;
                all.push((start, end));
            }
            EventKind::TeleopSpan { start, end } => {
                teleoperation += end - start;
                all.push((start, end));
            }
            EventKind::TroubleshootSpan { start, end } => {
                troubleshooting += end - start;
                all.push((start, end));
            }
            _ => {}
        }
    }
    let pct = |v: f64| {
        if duration > 0.0 {
            100.0 * v / duration
        } else {
            0.0
        }
    };
    WorkloadReport {
        workload: pct(union_length(all)),
        monitoring: pct(monitoring),
        teleoperation: pct(teleoperation),
        troubleshooting: pct(troubleshooting),
    }
}

/// The full KPI suite for one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub duration: f64,
    pub total_explored_area: f64,
    pub mapping_efficiency: Option<f64>,
    pub mapping_rate: Option<f64>,
    pub task_success_ratio: Option<f64>,
    pub operator_workload: f64,
    pub robot_downtime: f64,
    pub autonomy_ratio: Option<f64>,
    pub unscheduled_manual_ops: Option<f64>,
    pub retry_ratio: Option<f64>,
    pub identified_resources_ratio: Option<f64>,
    pub details: KpiDetails,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comms: Vec<ChannelStats>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiDetails {
    pub mapping: MappingMetrics,
    pub task_success: TaskSuccessReport,
    pub workload: WorkloadReport,
    pub downtime: DowntimeReport,
    pub autonomy: Option<AutonomyBreakdown>,
    pub manual_ops: ManualOpsReport,
    pub retry: RetryReport,
    pub identified: IdentifiedResources,
}

impl KpiReport {
    pub fn from_log(log: &[MissionEvent], targets: &[TargetRef]) -> Result<Self, KpiError> {
        if log.is_empty() {
            return Err(KpiError::EmptyLog);
        }
        let duration = mission_duration(log);
        let mapping = mapping_metrics(log, duration);
        let task_success = task_success_ratio(log);
        let workload = operator_workload(log, duration);
        let downtime = downtime(log)?;
        let autonomy = match autonomy_ratio(log) {
            Ok(a) => Some(a),
            Err(KpiError::EmptyLog) => None,
            Err(e) => return Err(e),
        };
        let manual_ops = unscheduled_manual_ops(log)?;
        let retry = retry_ratio(log);
        let identified = identified_resources_ratio(log, targets);

        let mut notes = vec![
            "Neglect tolerance sums planning and autonomous execution time over robots.".to_owned(),
            "Retry ratio is the mean of per-robot ratios.".to_owned(),
        ];
        if let Some(pooled) = retry.pooled {
            notes.push(format!(
                "Pooled retry ratio: {:.1}%",
                round_half_even(pooled, 1)
            ));
        }

        Ok(KpiReport {
            duration,
            total_explored_area: mapping.area,
            mapping_efficiency: mapping.efficiency,
            mapping_rate: mapping.rate,
            task_success_ratio: task_success.combined.percent(),
            operator_workload: workload.workload,
            robot_downtime: downtime.overall.downtime,
            autonomy_ratio: autonomy.as_ref().map(|a| a.autonomy_ratio),
            unscheduled_manual_ops: manual_ops.mean,
            retry_ratio: retry.mean,
            identified_resources_ratio: identified.overall.percent(),
            details: KpiDetails {
                mapping,
                task_success,
                workload,
                downtime,
                autonomy,
                manual_ops,
                retry,
                identified,
            },
            comms: Vec::new(),
            notes,
        })
    }

    /// Rows of (category, KPI, unit, formatted value).
    pub fn rows(&self) -> Vec<(&'static str, &'static str, &'static str, String)> {
        fn fmt(v: Option<f64>, decimals: u32) -> String {
            match v {
                Some(x) => format!("{:.*}", decimals as usize, round_half_even(x, decimals)),
                None => "n/a".to_owned(),
            }
        }
        vec![
            (
                "Efficiency",
                "Total Explored Area",
                "m^2",
                fmt(Some(self.total_explored_area), 1),
            ),
            (
                "Efficiency",
                "Mapping Efficiency",
                "m^2/m",
                fmt(self.mapping_efficiency, 2),
            ),
            (
                "Efficiency",
                "Mapping Rate",
                "m^2/s",
                fmt(self.mapping_rate, 3),
            ),
            (
                "Efficiency",
                "Task Success Ratio",
                "%",
                fmt(self.task_success_ratio, 1),
            ),
            (
                "Efficiency",
                "Quantitative Operator Workload",
                "%",
                fmt(Some(self.operator_workload), 1),
            ),
            (
                "Robustness",
                "Robot Downtime",
                "%",
                fmt(Some(self.robot_downtime), 1),
            ),
            (
                "Robustness",
                "Autonomy Ratio",
                "%",
                fmt(self.autonomy_ratio, 1),
            ),
            (
                "Robustness",
                "Time in Unscheduled Manual Robot Operations",
                "%",
                fmt(self.unscheduled_manual_ops, 2),
            ),
            ("Robustness", "Retry Ratio", "%", fmt(self.retry_ratio, 1)),
            (
                "Precision",
                "Ratio of Identified Resources",
                "%",
                fmt(self.identified_resources_ratio, 1),
            ),
        ]
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let w_cat = rows
            .iter()
            .map(|r| r.0.len())
            .max()
            .unwrap_or(8)
            .max("Category".len());
        let w_kpi = rows
            .iter()
            .map(|r| r.1.len())
            .max()
            .unwrap_or(3)
            .max("KPI".len());
        let w_unit = rows
            .iter()
            .map(|r| r.2.len())
            .max()
            .unwrap_or(4)
            .max("Unit".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w_cat$}  {:<w_kpi$}  {:<w_unit$}  Value",
            "Category", "KPI", "Unit"
        );
        let _ = writeln!(out, "{}", "-".repeat(w_cat + w_kpi + w_unit + 13));
        for (cat, kpi, unit, value) in rows {
            let _ = writeln!(
                out,
                "{cat:<w_cat$}  {kpi:<w_kpi$}  {unit:<w_unit$}  {value}"
            );
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for note in &self.notes {
                let _ = writeln!(out, "* {note}");
            }
        }
        if !self.comms.is_empty() {
            let _ = writeln!(out, "\nChannel statistics");
            for c in &self.comms {
                let _ = writeln!(
                    out,
                    "  {:<28} sent {:>7}  delivered {:>7}  dropped {:>6}  mean latency {:.4} s",
                    c.channel,
                    c.sent,
                    c.delivered,
                    c.dropped,
                    c.mean_latency().unwrap_or(0.0)
                );
            }
        }
        out
    }
}
