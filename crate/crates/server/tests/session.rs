use std::time::Instant;

use serde_json::{json, Value};

use desksim_core::imitation::train::DEFAULT_LAYERS;
use desksim_core::imitation::{
    course_of, HumanDriver, HumanParams, MinMax, Mlp, ModelDoc, ModelMetadata, Policy,
};
use desksim_core::rng::{Channel, NoiseStream};
use desksim_core::world::{preset, square_room};
use desksim_server::protocol::ServerMessage;
use desksim_server::recorder::{load_rows, RecordLine};
use desksim_server::session::{replay, Output, Session, SessionConfig};

const ME: u64 = 1;

fn session(scene: &str) -> Session {
    let mut cfg = SessionConfig::new(preset(scene).unwrap(), 3);
    cfg.realtime_factor = 0.0;
    let mut s = Session::new(cfg).unwrap();
    s.connect(ME);
    s
}

fn parse(out: &[Output]) -> Vec<Value> {
    out.iter()
        .map(|o| serde_json::from_str(&o.text).unwrap())
        .collect()
}

fn reply(s: &mut Session, client: u64, msg: Value) -> Value {
    let out = s.handle(client, &msg.to_string());
    assert_eq!(out[0].to, Some(client));
    serde_json::from_str(&out[0].text).unwrap()
}

fn events(out: &[Output], kind: &str) -> Vec<Value> {
    parse(out)
        .into_iter()
        .filter(|v| v["type"] == "event" && v["kind"] == kind)
        .collect()
}

fn run(s: &mut Session, steps: usize) -> Vec<Output> {
    (0..steps).flat_map(|_| s.tick()).collect()
}

fn telemetry(out: &[Output]) -> Vec<Value> {
    parse(out)
        .into_iter()
        .filter(|v| v["type"] == "telemetry")
        .collect()
}

#[test]
fn headless_ten_seconds_is_five_thousand_ticks() {
    let mut s = session("driving_school");
    let wall = Instant::now();
    let out = run(&mut s, 5000);
    let tel = telemetry(&out);
    assert_eq!(tel.len(), 5000);
    assert_eq!(tel.last().unwrap()["tick"], 5000);
    assert!((s.sim().time() - 10.0).abs() < 1e-9);
    assert!(wall.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn telemetry_time_advances_by_dt() {
    let mut s = session("driving_school");
    let tel = telemetry(&run(&mut s, 700));
    for (k, v) in tel.iter().enumerate() {
        let t = v["t"].as_f64().unwrap();
        assert_eq!(t, (k + 1) as f64 * 0.002);
    }
    // one scan per 1/7 s
    let scans = tel
        .iter()
        .filter(|v| !v["frame"]["lidar"].is_null())
        .count();
    assert_eq!(scans, 9);
}

#[test]
fn out_of_range_command_is_clamped_with_warning() {
    let mut s = session("driving_school");
    let r = reply(
        &mut s,
        ME,
        json!({"type": "cmd", "throttle": 2.0, "steering": 0.0, "id": 11}),
    );
    assert_eq!(r["type"], "ack");
    assert_eq!(r["ref"], 11);
    assert_eq!(r["warning"], "throttle clamped to 1");
    let tel = telemetry(&s.tick());
    assert_eq!(tel[0]["command"], json!([1.0, 0.0]));
}

#[test]
fn unknown_and_malformed_messages_get_errors() {
    let mut s = session("driving_school");
    let r = reply(&mut s, ME, json!({"type": "warp", "id": "x"}));
    assert_eq!(r["type"], "err");
    assert_eq!(r["ref"], "x");
    assert_eq!(r["detail"], "unknown message type `warp`");
    let out = s.handle(ME, "{not json");
    assert_eq!(parse(&out)[0]["type"], "err");
    let r = reply(
        &mut s,
        ME,
        json!({"type": "cmd", "throttle": null, "steering": 0}),
    );
    assert_eq!(r["type"], "err");
    assert_eq!(r["of"], "cmd");
}

#[test]
fn garbage_input_never_breaks_the_loop() {
    let mut s = session("driving_school");
    let mut rng = NoiseStream::new(5, Channel::Teleop);
    let pieces = [
        "{",
        "}",
        "\"type\"",
        ":",
        "\"cmd\"",
        ",",
        "\"throttle\"",
        "1e308",
        "-0",
        "null",
        "[",
        "]",
        "\"reset\"",
        "\"pose\"",
        "\"set_goal\"",
        "\"x\"",
        "\"record\"",
        "\"state\"",
        "\"on\"",
        "NaN",
        "\"\\u0000\"",
        "true",
    ];
    for _ in 0..2000 {
        let n = (rng.uniform(0.0, 12.0)) as usize;
        let text: String = (0..n)
            .map(|_| pieces[rng.uniform(0.0, pieces.len() as f64) as usize % pieces.len()])
            .collect();
        let out = s.handle(ME, &text);
        assert!(matches!(
            parse(&out)[0]["type"].as_str(),
            Some("ack" | "err")
        ));
        s.tick();
    }
    assert!(!s.is_frozen());
    assert!(s.sim().state.is_finite());
}

#[test]
fn dead_man_zeroes_stale_commands() {
    let mut s = session("driving_school");
    reply(
        &mut s,
        ME,
        json!({"type": "cmd", "throttle": 0.7, "steering": 0.2}),
    );
    let tel = telemetry(&run(&mut s, 400));
    // 0.5 s at 2 ms: commands of ticks 1..=250 are live
    assert_eq!(tel[249]["command"], json!([0.7, 0.2]));
    assert_eq!(tel[250]["command"], json!([0.0, 0.0]));
    assert!(tel[250..].iter().all(|v| v["command"] == json!([0.0, 0.0])));
}

#[test]
fn collision_is_reported_once_per_onset() {
    let mut s = session("square_room");
    let mut hits = Vec::new();
    for _ in 0..6000 {
        if s.sim().tick.is_multiple_of(100) {
            reply(
                &mut s,
                ME,
                json!({"type": "cmd", "throttle": 1.0, "steering": 0.0}),
            );
        }
        hits.extend(events(&s.tick(), "collision"));
    }
    // spawn faces +x at the room center; pushing into the wall keeps one contact
    assert_eq!(hits.len(), 1, "{hits:?}");
    assert_eq!(hits[0]["detail"]["contact"], "walls[1]");
}

#[test]
fn goal_inside_obstacle_is_rejected_by_name() {
    let mut s = session("parking_school");
    let o = s.sim().scene().obstacles[0].center;
    let r = reply(
        &mut s,
        ME,
        json!({"type": "set_goal", "x": o[0], "y": o[1], "yaw": 0.0}),
    );
    assert_eq!(r["type"], "err");
    assert_eq!(r["detail"], "goal lies inside obstacles[0]");
    let r = reply(
        &mut s,
        ME,
        json!({"type": "set_goal", "x": -5.0, "y": 1.0, "yaw": 0.0}),
    );
    assert_eq!(r["type"], "err");
}

#[test]
fn reset_returns_to_spawn_and_clears_the_mission() {
    let mut s = session("parking_school");
    reply(&mut s, ME, json!({"type": "set_mode", "mode": "parking"}));
    let tel = telemetry(&run(&mut s, 1500));
    assert_eq!(tel.last().unwrap()["stage"], "MAPPING");
    let r = reply(&mut s, ME, json!({"type": "reset"}));
    assert_eq!(r["type"], "ack");
    assert_eq!(s.sim().time(), 0.0);
    let spawn = s.sim().scene().spawn_pose();
    assert_eq!(s.sim().state.pose, spawn);
    let tel = telemetry(&s.tick());
    assert_eq!(tel[0]["mode"], "manual");
    assert!(tel[0].get("stage").is_none() && tel[0].get("goal").is_none());
    assert_eq!(tel[0]["epoch"], 1);
    assert_eq!(tel[0]["t"], 0.002);
}

#[test]
fn control_token_is_exclusive_and_released_on_disconnect() {
    let mut s = session("driving_school");
    s.connect(2);
    let r = reply(
        &mut s,
        ME,
        json!({"type": "cmd", "throttle": 0.1, "steering": 0}),
    );
    assert_eq!(r["detail"], "control acquired");
    let r = reply(
        &mut s,
        2,
        json!({"type": "cmd", "throttle": 0.1, "steering": 0}),
    );
    assert_eq!(r["type"], "err");
    assert_eq!(r["detail"], "control token is held by client 1");
    let r = reply(&mut s, 2, json!({"type": "control", "action": "release"}));
    assert_eq!(r["type"], "err");
    s.disconnect(ME);
    let r = reply(&mut s, 2, json!({"type": "control", "action": "acquire"}));
    assert_eq!(r["type"], "ack");
    assert_eq!(s.controller(), Some(2));
}

fn recording_session(scene: &str, path: &std::path::Path) -> Session {
    let mut cfg = SessionConfig::new(preset(scene).unwrap(), 3);
    cfg.realtime_factor = 0.0;
    cfg.record = Some(path.to_path_buf());
    let mut s = Session::new(cfg).unwrap();
    s.connect(ME);
    s
}

fn read_records(path: &std::path::Path) -> Vec<RecordLine> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn two_seconds_of_recording_is_fourteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.jsonl");
    let mut s = recording_session("driving_school", &path);
    let r = reply(&mut s, ME, json!({"type": "record", "state": "on"}));
    assert_eq!(r["type"], "ack");
    for _ in 0..1000 {
        if s.sim().tick.is_multiple_of(10) {
            reply(
                &mut s,
                ME,
                json!({"type": "cmd", "throttle": 0.5, "steering": 0.1}),
            );
        }
        s.tick();
    }
    let out = s.handle(ME, r#"{"type":"record","state":"off"}"#);
    let ev = events(&out, "recording");
    assert_eq!(ev[0]["detail"]["rows"], 14);
    assert_eq!(ev[0]["detail"]["telemetry"], 1000);
    let recs = read_records(&path);
    let rows = recs
        .iter()
        .filter(|r| matches!(r, RecordLine::Row { .. }))
        .count();
    let tel = recs
        .iter()
        .filter(|r| matches!(r, RecordLine::Telemetry { .. }))
        .count();
    assert_eq!((rows, tel), (14, 1000));
    match recs.last().unwrap() {
        RecordLine::Summary { rows, duration, .. } => {
            assert_eq!(*rows, 14);
            assert!((duration - 2.0).abs() < 1e-9);
        }
        other => panic!("last record {other:?}"),
    }
    let ds = load_rows(&path).unwrap();
    assert_eq!(ds.rows.len(), 14);
    assert_eq!(ds.rows[0].label_throttle, 0.5);
}

#[test]
fn toggling_gives_two_well_formed_segments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.jsonl");
    let mut s = recording_session("driving_school", &path);
    for _ in 0..2 {
        s.handle(ME, r#"{"type":"record","state":"on"}"#);
        run(&mut s, 300);
        s.handle(ME, r#"{"type":"record","state":"off"}"#);
        run(&mut s, 100);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with('\n'));
    let recs = read_records(&path);
    let kinds: Vec<&str> = recs
        .iter()
        .map(|r| match r {
            RecordLine::Segment { .. } => "segment",
            RecordLine::Summary { .. } => "summary",
            _ => "tick",
        })
        .collect();
    let starts: Vec<usize> = (0..kinds.len())
        .filter(|&i| kinds[i] == "segment")
        .collect();
    let ends: Vec<usize> = (0..kinds.len())
        .filter(|&i| kinds[i] == "summary")
        .collect();
    assert_eq!(starts.len(), 2);
    assert_eq!(ends.len(), 2);
    assert!(
        starts[0] == 0 && starts[0] < ends[0] && ends[0] + 1 == starts[1] && starts[1] < ends[1]
    );
    assert_eq!(ends[1], recs.len() - 1);
    for (a, b) in starts.iter().zip(&ends) {
        let tel = kinds[*a..*b].iter().filter(|k| **k == "tick").count();
        // 300 telemetry lines plus the rows on scan ticks
        assert!((300..=306).contains(&tel), "{tel}");
    }
}

#[test]
fn write_failure_stops_recording_but_not_the_sim() {
    let mut s = recording_session("driving_school", std::path::Path::new("/dev/full"));
    let r = reply(&mut s, ME, json!({"type": "record", "state": "on"}));
    assert_eq!(r["type"], "ack");
    let out = run(&mut s, 400);
    let failures = events(&out, "failure");
    assert_eq!(failures.len(), 1);
    assert!(failures[0]["detail"]["detail"]
        .as_str()
        .unwrap()
        .starts_with("recording failed"));
    assert!(!s.is_recording());
    assert_eq!(telemetry(&out).len(), 400);
    assert!(!s.is_frozen());
}

#[test]
fn integration_fault_freezes_until_reset() {
    let mut s = session("driving_school");
    run(&mut s, 10);
    s.sim_mut().state.velocity.vx = f64::NAN;
    let out = s.tick();
    let f = events(&out, "failure");
    assert_eq!(f.len(), 1);
    assert_eq!(f[0]["detail"]["frozen"], true);
    assert!(s.is_frozen());
    assert!(s.tick().is_empty());
    reply(&mut s, ME, json!({"type": "reset"}));
    assert!(!s.is_frozen());
    assert_eq!(telemetry(&s.tick()).len(), 1);
}

/// Independent lap count: signed crossings of the start gate, a short
/// segment through the spawn point across the direction of travel.
fn gate_crossings(poses: &[[f64; 2]], spawn: [f64; 3]) -> i32 {
    let (s, c) = spawn[2].sin_cos();
    let side = |p: [f64; 2]| (p[0] - spawn[0]) * c + (p[1] - spawn[1]) * s;
    let lateral = |p: [f64; 2]| (-(p[0] - spawn[0]) * s + (p[1] - spawn[1]) * c).abs();
    let mut n = 0;
    for w in poses.windows(2) {
        let (a, b) = (side(w[0]), side(w[1]));
        if lateral(w[1]) < 0.3 {
            if a < 0.0 && b >= 0.0 {
                n += 1;
            } else if a >= 0.0 && b < 0.0 {
                n -= 1;
            }
        }
    }
    n
}

#[test]
fn one_scripted_loop_counts_one_lap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lap.jsonl");
    let mut s = recording_session("driving_school", &path);
    let scene = s.sim().scene().clone();
    let g = s.sim().vehicle.config.geometry;
    let mut human = HumanDriver::new(
        HumanParams::default(),
        course_of(&scene).unwrap(),
        g.wheelbase,
        g.max_steer,
        NoiseStream::new(1, Channel::Teleop),
    );
    s.handle(ME, r#"{"type":"record","state":"on"}"#);
    let mut poses = Vec::new();
    let mut laps = 0;
    // a lap takes about 75 s at the scripted speed
    for k in 0..50_000 {
        if k % 10 == 0 {
            let cmd = human.command(&s.sim().state.pose, s.sim().time());
            s.handle(
                ME,
                &json!({"type": "cmd", "throttle": cmd.throttle, "steering": cmd.steering})
                    .to_string(),
            );
        }
        let out = s.tick();
        let p = s.sim().state.pose;
        poses.push([p.x, p.y]);
        laps += events(&out, "lap").len();
        if laps == 1 {
            break;
        }
    }
    let out = s.handle(ME, r#"{"type":"record","state":"off"}"#);
    let ev = events(&out, "recording");
    assert_eq!(ev[0]["detail"]["laps"], 1);
    let spawn = scene.spawn.unwrap();
    let mut with_start = vec![[spawn[0], spawn[1]]];
    with_start.extend(poses);
    assert_eq!(gate_crossings(&with_start, spawn), 1);
}

#[test]
fn parking_mode_parks_without_noise() {
    let mut s = session("parking_school");
    reply(&mut s, ME, json!({"type": "set_mode", "mode": "parking"}));
    let mut parked = Vec::new();
    let mut stages = Vec::new();
    for _ in 0..100_000 {
        let out = s.tick();
        parked.extend(events(&out, "parked"));
        if let Some(v) = telemetry(&out).first() {
            let st = v["stage"].as_str().unwrap().to_string();
            if stages.last() != Some(&st) {
                stages.push(st);
            }
        }
        if !parked.is_empty() {
            break;
        }
    }
    assert_eq!(parked.len(), 1, "stages {stages:?}");
    assert_eq!(parked[0]["detail"]["success"], true);
    assert_eq!(
        &stages[..4],
        &["MAPPING", "LOCALIZING", "PLANNING", "TRACKING"]
    );
}

#[test]
fn bc_drive_needs_a_model() {
    let mut s = session("driving_school");
    let r = reply(&mut s, ME, json!({"type": "set_mode", "mode": "bc_drive"}));
    assert_eq!(r["type"], "err");

    let layers = DEFAULT_LAYERS;
    let policy = Policy {
        net: Mlp::zeros(&layers).unwrap(),
        scale: MinMax::identity(layers[0]),
    };
    let meta = ModelMetadata {
        seed: 0,
        epochs: 0,
        batch: 1,
        lr: 1e-3,
        rows: 0,
        loss_curve: vec![],
    };
    let mut cfg = SessionConfig::new(preset("driving_school").unwrap(), 3);
    cfg.model = Some(ModelDoc::new(&policy, Default::default(), meta));
    let mut s = Session::new(cfg).unwrap();
    s.connect(ME);
    let r = reply(&mut s, ME, json!({"type": "set_mode", "mode": "bc_drive"}));
    assert_eq!(r["type"], "ack");
    let tel = telemetry(&run(&mut s, 200));
    assert!(tel
        .iter()
        .all(|v| v["mode"] == "bc_drive" && v["command"] == json!([0.0, 0.0])));
}

#[test]
fn replaying_the_log_reproduces_every_frame() {
    let mut cfg = SessionConfig::new(preset("parking_school").unwrap(), 9);
    cfg.noise = desksim_core::sensors::NoiseConfig::paper(9);
    cfg.realtime_factor = 0.0;
    let mut s = Session::new(cfg.clone()).unwrap();
    let mut live = s.connect(ME);
    let script: Vec<(u64, String)> = vec![
        (
            0,
            json!({"type": "cmd", "throttle": 0.6, "steering": 0.3}).to_string(),
        ),
        (
            120,
            json!({"type": "cmd", "throttle": 0.2, "steering": -1.0}).to_string(),
        ),
        (
            300,
            json!({"type": "set_mode", "mode": "parking"}).to_string(),
        ),
        (900, json!({"type": "reset"}).to_string()),
        (901, "{bad".to_string()),
        (
            1000,
            json!({"type": "cmd", "throttle": -0.4, "steering": 0.0}).to_string(),
        ),
    ];
    let steps = 1500;
    let mut next = 0;
    for k in 0..steps {
        while next < script.len() && script[next].0 == k {
            live.extend(s.handle(ME, &script[next].1));
            next += 1;
        }
        live.extend(s.tick());
    }
    live.extend(s.finish());
    let replayed = replay(cfg, s.command_log(), steps).unwrap();
    assert_eq!(live.len(), replayed.len());
    assert!(live == replayed);
}

#[test]
fn square_room_scene_has_no_laps() {
    let mut cfg = SessionConfig::new(square_room(2.0, false), 0);
    cfg.realtime_factor = 0.0;
    let mut s = Session::new(cfg).unwrap();
    let tel = telemetry(&s.tick());
    assert!(tel[0].get("laps").is_none());
    let _ = ServerMessage::from_json(&s.tick()[0].text).unwrap();
}
