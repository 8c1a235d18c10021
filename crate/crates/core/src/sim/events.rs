//! Event-stream dump: `channel,time_ns,origin`, one record per line.

use std::io::{ BufRead, Write };
use super::{ Channel, DetectionRecord, Origin, SimError, SimResultT };

pub const EVENTS_HEADER: &str = "channel,time_ns,origin";

/// Write records in the given order. Callers usually merge both channels
/// by time first.
pub fn write_events_csv<W: Write>(mut w: W, records: &[DetectionRecord]) -> std::io::Result<()> {
    w.write_all(EVENTS_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        writeln!(w, "{},{},{}", r.channel, r.time_ns, r.origin)?;
    }
    w.flush()
}

pub fn read_events_csv<R: BufRead>(r: R) -> SimResultT<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if i == 0 {
            if line.trim_end() != EVENTS_HEADER {
                return Err(SimError::Parse { line: 1, msg: format!("expected header '{EVENTS_HEADER}'") });
            }
            continue;
        }
        if line.is_empty() { continue; }
        let bad = |msg: String| SimError::Parse { line: line_no, msg };
        let mut fields = line.split(',');
        let (Some(ch), Some(t), Some(origin), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad("expected three fields".into()));
        };
        let channel = match ch {
            "trigger" => Channel::Trigger,
            "analyzer" => Channel::Analyzer,
            other => return Err(bad(format!("unknown channel '{other}'"))),
        };
        let origin = match origin {
            "pair" => Origin::Pair,
            "dark" => Origin::Dark,
            "background" => Origin::Background,
            other => return Err(bad(format!("unknown origin '{other}'"))),
        };
        let time_ns: f64 = t.parse().map_err(|_| bad(format!("bad time '{t}'")))?;
        out.push(DetectionRecord { channel, time_ns, origin });
    }
    Ok(out)
}
