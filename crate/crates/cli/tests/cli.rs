use std::path::Path;
use std::process::{Command, Output};

use mosaic_core::events::read_jsonl;
use mosaic_core::registry::JournalEntry;
use mosaic_core::PoiRegistry;

fn mosaic_sim(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mosaic-sim"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn kpi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpi"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn headless_run_writes_log_report_and_journal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mosaic_sim(d, &["scenario", "--out", "field.json"]);
    let out = mosaic_sim(
        d,
        &[
            "run",
            "field.json",
            "--seed",
            "4",
            "--duration",
            "400",
            "--headless",
            "--journal",
            "journal.jsonl",
        ],
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("Category"), "{table}");

    let log = read_jsonl(read(d, "mission.jsonl").as_slice()).unwrap();
    assert!(log.last().unwrap().t <= 400.0);
    let report: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
    assert!(report["task_success_ratio"].is_number());

    let journal: Vec<JournalEntry> =
        PoiRegistry::read_journal(read(d, "journal.jsonl").as_slice()).unwrap();
    assert!(PoiRegistry::replay(&journal).is_ok());

    mosaic_sim(
        d,
        &[
            "run",
            "default",
            "--seed",
            "4",
            "--duration",
            "400",
            "--log",
            "again.jsonl",
        ],
    );
    assert_eq!(read(d, "mission.jsonl"), read(d, "again.jsonl"));
}

#[test]
fn kpi_report_matches_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = mosaic_sim(d, &["run", "default", "--seed", "2", "--duration", "300"]);
    let table = kpi(d, &["report", "mission.jsonl", "--scenario", "default"]);
    assert!(table.status.success());
    // the run adds the channel appendix, which only the live network knows
    let table = String::from_utf8(table.stdout).unwrap();
    let run = String::from_utf8(run.stdout).unwrap();
    assert!(run.starts_with(table.trim_end()), "{table}\n---\n{run}");
    let json = kpi(
        d,
        &[
            "report",
            "mission.jsonl",
            "--scenario",
            "default",
            "--format",
            "json",
        ],
    );
    let mut from_cli: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let mut from_run: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
    assert!(from_run["comms"].as_array().is_some_and(|c| !c.is_empty()));
    from_cli.as_object_mut().unwrap().remove("comms");
    from_run.as_object_mut().unwrap().remove("comms");
    assert_eq!(from_cli, from_run);
}

#[test]
fn recorded_script_replays_to_the_same_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("ops.jsonl"),
        concat!(
            r#"{"t":0.0,"type":"create_poi","pose":[12.0,8.0,0.0],"poi_type":"EXPLORATION","mission_value":3.0}"#,
            "\n",
            r#"{"t":20.0,"type":"twist","robot":"dodo","vx":1.0,"wz":0.0}"#,
            "\n",
            r#"{"t":30.0,"type":"set_autonomy_level","robot":"dodo","level":"DRIVER"}"#,
            "\n",
        ),
    )
    .unwrap();
    let args = [
        "run",
        "default",
        "--seed",
        "9",
        "--duration",
        "200",
        "--replay",
        "ops.jsonl",
    ];
    mosaic_sim(
        d,
        &[
            &args[..],
            &["--log", "a.jsonl", "--record", "applied.jsonl"],
        ]
        .concat(),
    );
    // the MISSION-level twist is rejected and not recorded
    let applied = String::from_utf8(read(d, "applied.jsonl")).unwrap();
    assert_eq!(applied.lines().count(), 2);
    assert!(!applied.contains("twist"));
    mosaic_sim(
        d,
        &[
            "run",
            "default",
            "--seed",
            "9",
            "--duration",
            "200",
            "--replay",
            "applied.jsonl",
            "--log",
            "b.jsonl",
        ],
    );
    assert_eq!(read(d, "a.jsonl"), read(d, "b.jsonl"));
}

#[test]
fn weights_file_overrides_one_robot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("w.toml"),
        "[dodo]\neuclidean = 2.0\n[dodo.type_rewards]\nEXPLORATION = 40.0\n",
    )
    .unwrap();
    mosaic_sim(
        d,
        &[
            "run",
            "default",
            "--seed",
            "1",
            "--duration",
            "200",
            "--log",
            "base.jsonl",
        ],
    );
    mosaic_sim(
        d,
        &[
            "run",
            "default",
            "--seed",
            "1",
            "--duration",
            "200",
            "--weights",
            "w.toml",
            "--log",
            "tuned.jsonl",
        ],
    );
    assert_ne!(read(d, "base.jsonl"), read(d, "tuned.jsonl"));

    std::fs::write(d.join("bad.toml"), "[nobody]\neuclidean = 1.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mosaic-sim"))
        .current_dir(d)
        .args(["run", "default", "--weights", "bad.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn kpi_rejects_a_missing_or_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        !kpi(d, &["report", "absent.jsonl", "--scenario", "default"])
            .status
            .success()
    );
    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    let out = kpi(d, &["report", "empty.jsonl", "--scenario", "default"]);
    assert!(!out.status.success());
}

#[test]
fn shipped_scenario_file_is_the_built_in_one() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/field.json");
    let shipped = mosaic_cli::load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(shipped, mosaic_sim::Scenario::field_default());
}
