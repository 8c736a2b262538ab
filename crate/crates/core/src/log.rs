//! Newline-delimited structured event log.
//!
//! One JSON object per line: integer-nanosecond time, node, event kind,
//! packet identity, position, and an optional reason. The writer is
//! deterministic, so identical runs produce byte-identical logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::NodeId;

#[derive(serde::Serialize, Debug, Clone, Copy)]
pub struct EventRecord {
    /// Simulation time in nanoseconds.
    pub t: u64,
    pub node: NodeId,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seq: Option<u16>,
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hops: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'static str>,
}

enum Sink {
    Null,
    Memory(Vec<String>),
    File(BufWriter<File>),
}

/// Event sink; disabled by default so the hot path costs one branch.
pub struct EventLog {
    sink: Sink,
    pub lines_written: u64,
}

impl EventLog {
    pub fn disabled() -> Self {
        EventLog { sink: Sink::Null, lines_written: 0 }
    }

    pub fn in_memory() -> Self {
        EventLog { sink: Sink::Memory(Vec::new()), lines_written: 0 }
    }

    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        Ok(EventLog {
            sink: Sink::File(BufWriter::new(File::create(path)?)),
            lines_written: 0,
        })
    }

    pub fn enabled(&self) -> bool {
        !matches!(self.sink, Sink::Null)
    }

    pub fn record(&mut self, rec: &EventRecord) {
        match &mut self.sink {
            Sink::Null => return,
            Sink::Memory(lines) => {
                lines.push(serde_json::to_string(rec).expect("event serializes"))
            }
            Sink::File(w) => {
                serde_json::to_writer(&mut *w, rec).expect("event serializes");
                w.write_all(b"\n").expect("event log write");
            }
        }
        self.lines_written += 1;
    }

    /// Lines captured by an in-memory sink (empty otherwise).
    pub fn lines(&self) -> &[String] {
        match &self.sink {
            Sink::Memory(lines) => lines,
            _ => &[],
        }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        if let Sink::File(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }
}
