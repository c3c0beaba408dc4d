//! Wire format between coordinator and workers: one JSON object per line,
//! tagged by a `kind` field.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::farm::task::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    /// Worker → coordinator, first message on a connection.
    Hello { worker_id: String, slots: usize },
    /// Coordinator → worker. Paths inside are absolute.
    Task { task: Task },
    /// Worker → coordinator.
    Result {
        id: String,
        cpu_seconds: f64,
        ok: bool,
        #[serde(default)]
        message: String,
    },
    /// Worker → coordinator, periodically.
    Heartbeat { worker_id: String },
    /// Coordinator → worker: the batch is complete, disconnect.
    Done {},
}

impl Message {
    pub fn encode(&self) -> String {
        let mut line = serde_json::to_string(self).expect("message serializes");
        line.push('\n');
        line
    }

    pub fn decode(line: &str) -> Result<Message> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(format!("{e}: {line:?}")))
    }
}

pub fn send(writer: &mut impl Write, msg: &Message) -> std::io::Result<()> {
    writer.write_all(msg.encode().as_bytes())?;
    writer.flush()
}

/// Reads the next message; `Ok(None)` at end of stream.
pub fn recv(reader: &mut impl BufRead) -> Result<Option<Message>> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
        if n == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            return Message::decode(&line).map(Some);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldKind;

    #[test]
    fn kinds_on_the_wire() {
        assert_eq!(Message::Done {}.encode(), "{\"kind\":\"DONE\"}\n");
        let hello = Message::Hello {
            worker_id: "w1".into(),
            slots: 2,
        };
        assert_eq!(
            hello.encode(),
            "{\"kind\":\"HELLO\",\"worker_id\":\"w1\",\"slots\":2}\n"
        );
        let task = Message::Task {
            task: Task::new("a", "/p.pgm", FieldKind::Visual, 1.0, "/a.f32"),
        };
        let line = task.encode();
        assert!(line.starts_with("{\"kind\":\"TASK\",\"task\":{\"id\":\"a\""));
        assert_eq!(Message::decode(&line).unwrap(), task);
    }

    #[test]
    fn recv_handles_eof_and_garbage() {
        let mut input = std::io::Cursor::new(
            b"\n{\"kind\":\"HEARTBEAT\",\"worker_id\":\"w\"}\nnot json\n".to_vec(),
        );
        assert_eq!(
            recv(&mut input).unwrap(),
            Some(Message::Heartbeat {
                worker_id: "w".into()
            })
        );
        assert!(matches!(recv(&mut input), Err(Error::Protocol(_))));
        assert_eq!(recv(&mut input).unwrap(), None);
    }
}
