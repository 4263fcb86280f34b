//! Wire messages. One JSON object per WebSocket text frame, discriminated by `type`.
//!
//! Clients may attach an `id` (any JSON value) to a message; the matching
//! `ack` or `err` echoes it as `ref`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use desksim_core::autonomy::Stage;
use desksim_core::sensors::SensorFrame;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Manual,
    Parking,
    BcDrive,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "manual" => Ok(Mode::Manual),
            "parking" => Ok(Mode::Parking),
            "bc_drive" => Ok(Mode::BcDrive),
            other => Err(format!(
                "unknown mode `{other}` (expected manual, parking or bc_drive)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Acquire,
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cmd {
        throttle: f64,
        steering: f64,
    },
    Reset {
        #[serde(default)]
        pose: Option<[f64; 3]>,
    },
    LoadScene {
        name: String,
    },
    SetGoal {
        x: f64,
        y: f64,
        yaw: f64,
    },
    SetMode {
        mode: Mode,
    },
    Record {
        state: Switch,
    },
    Control {
        action: ControlAction,
    },
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Cmd { .. } => "cmd",
            ClientMessage::Reset { .. } => "reset",
            ClientMessage::LoadScene { .. } => "load_scene",
            ClientMessage::SetGoal { .. } => "set_goal",
            ClientMessage::SetMode { .. } => "set_mode",
            ClientMessage::Record { .. } => "record",
            ClientMessage::Control { .. } => "control",
        }
    }
}

/// A parsed frame: the message, the client's `id` and the `type` it claimed.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub id: Value,
    pub message: ClientMessage,
}

/// Rejected frame with whatever could be recovered for the `err` reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseFailure {
    pub id: Value,
    pub of: Option<String>,
    pub detail: String,
}

pub fn parse_client(text: &str) -> Result<Envelope, ParseFailure> {
    let fail = |id: Value, of: Option<String>, detail: String| ParseFailure { id, of, detail };
    let mut v: Value = serde_json::from_str(text)
        .map_err(|e| fail(Value::Null, None, format!("malformed JSON: {e}")))?;
    let Some(obj) = v.as_object_mut() else {
        return Err(fail(
            Value::Null,
            None,
            "message must be a JSON object".into(),
        ));
    };
    let id = obj.remove("id").unwrap_or(Value::Null);
    let of = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(fail(id, None, "`type` must be a string".into())),
        None => return Err(fail(id, None, "missing `type`".into())),
    };
    match serde_json::from_value::<ClientMessage>(v) {
        Ok(message) => Ok(Envelope { id, message }),
        Err(e) => {
            let msg = e.to_string();
            let detail = if msg.starts_with("unknown variant") {
                format!("unknown message type `{of}`")
            } else {
                format!("bad `{of}` message: {msg}")
            };
            Err(fail(id, Some(of), detail))
        }
    }
}

/// Ground truth, not visible to the vehicle's own stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub pose: [f64; 3],
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub steer_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    pub t: f64,
    /// Increments on every reset or scene load; `t` restarts from 0.
    pub epoch: u32,
    pub frame: SensorFrame,
    pub truth: Truth,
    /// Command applied this tick before actuator noise, `[throttle, steering]`.
    pub command: [f64; 2],
    pub mode: Mode,
    pub scene: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<[f64; 2]>>,
    /// Subsampled particle cloud, on scan ticks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<String>,
    pub recording: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Collision,
    Parked,
    Failure,
    Recording,
    Lap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub tick: u64,
    pub t: f64,
    pub epoch: u32,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol: u32,
        client: u64,
        dt: f64,
        scene: String,
        mode: Mode,
        /// Whether some client currently holds the control token.
        controlled: bool,
    },
    Telemetry(Box<Telemetry>),
    Event(Event),
    Ack {
        #[serde(rename = "ref")]
        reference: Value,
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warning: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Err {
        #[serde(rename = "ref")]
        reference: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        of: Option<String>,
        detail: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_client_type() {
        let cases = [
            (r#"{"type":"cmd","throttle":0.5,"steering":-1}"#, "cmd"),
            (r#"{"type":"reset"}"#, "reset"),
            (r#"{"type":"reset","pose":[1,2,0.5]}"#, "reset"),
            (
                r#"{"type":"load_scene","name":"driving_school"}"#,
                "load_scene",
            ),
            (r#"{"type":"set_goal","x":1,"y":2,"yaw":0}"#, "set_goal"),
            (r#"{"type":"set_mode","mode":"bc_drive"}"#, "set_mode"),
            (r#"{"type":"record","state":"off"}"#, "record"),
            (r#"{"type":"control","action":"acquire","id":7}"#, "control"),
        ];
        for (text, kind) in cases {
            let env = parse_client(text).unwrap();
            assert_eq!(env.message.kind(), kind);
        }
        assert_eq!(
            parse_client(r#"{"type":"reset","id":"a"}"#).unwrap().id,
            Value::from("a")
        );
    }

    #[test]
    fn rejections_keep_the_id() {
        let e = parse_client(r#"{"type":"fly","id":3}"#).unwrap_err();
        assert_eq!(e.id, Value::from(3));
        assert_eq!(e.detail, "unknown message type `fly`");
        let e = parse_client(r#"{"type":"cmd","throttle":"x","steering":0}"#).unwrap_err();
        assert_eq!(e.of.as_deref(), Some("cmd"));
        assert!(parse_client("[1,2]").is_err());
        assert!(parse_client("{").is_err());
        assert!(parse_client(r#"{"throttle":1}"#).is_err());
        assert!(parse_client(r#"{"type":"cmd","throttle":1,"steering":0,"extra":1}"#).is_err());
    }

    #[test]
    fn server_messages_round_trip() {
        let msgs = [
            ServerMessage::Ack {
                reference: Value::from(1),
                of: "cmd".into(),
                warning: Some("w".into()),
                detail: None,
            },
            ServerMessage::Err {
                reference: Value::Null,
                of: None,
                detail: "d".into(),
            },
            ServerMessage::Event(Event {
                kind: EventKind::Collision,
                tick: 4,
                t: 0.008,
                epoch: 0,
                detail: serde_json::json!({"contact": "walls[3]"}),
            }),
        ];
        for m in msgs {
            assert_eq!(ServerMessage::from_json(&m.to_json()).unwrap(), m);
        }
    }
}
