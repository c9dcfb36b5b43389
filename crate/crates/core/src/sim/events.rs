use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, ScheduleKind, VehicleId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventPayload {
    TookOff {
        port: NodeId,
        destination: NodeId,
        due: u32,
        battery: f64,
    },
    Landed {
        port: NodeId,
        /// Due time of the landing schedule, if one was pending.
        due: Option<u32>,
        battery: f64,
        forced: bool,
    },
    StartedCharge {
        port: NodeId,
        battery: f64,
    },
    CollisionOccurred {
        other: VehicleId,
        distance: f64,
    },
    ScheduleIssued {
        kind: ScheduleKind,
        due: u32,
        reference: u32,
        destination: NodeId,
    },
    AvoidanceExecuted {
        d_min: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: u32,
    pub vehicle: VehicleId,
    pub payload: EventPayload,
}

impl SimEvent {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            EventPayload::TookOff { .. } => "TookOff",
            EventPayload::Landed { .. } => "Landed",
            EventPayload::StartedCharge { .. } => "StartedCharge",
            EventPayload::CollisionOccurred { .. } => "CollisionOccurred",
            EventPayload::ScheduleIssued { .. } => "ScheduleIssued",
            EventPayload::AvoidanceExecuted { .. } => "AvoidanceExecuted",
        }
    }
}

/// One line of the event log: `minute,vehicle,kind,key=value,...`.
impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.time, self.vehicle, self.kind())?;
        match &self.payload {
            EventPayload::TookOff {
                port,
                destination,
                due,
                battery,
            } => write!(f, ",port={port},destination={destination},due={due},battery={battery}"),
            EventPayload::Landed {
                port,
                due,
                battery,
                forced,
            } => {
                write!(f, ",port={port},due=")?;
                match due {
                    Some(d) => write!(f, "{d}")?,
                    None => f.write_str("none")?,
                }
                write!(f, ",battery={battery},forced={forced}")
            }
            EventPayload::StartedCharge { port, battery } => write!(f, ",port={port},battery={battery}"),
            EventPayload::CollisionOccurred { other, distance } => write!(f, ",other={other},distance={distance}"),
            EventPayload::ScheduleIssued {
                kind,
                due,
                reference,
                destination,
            } => write!(f, ",kind={kind},due={due},reference={reference},destination={destination}"),
            EventPayload::AvoidanceExecuted { d_min } => match d_min {
                Some(d) => write!(f, ",d_min={d}"),
                None => f.write_str(",d_min=none"),
            },
        }
    }
}

pub fn write_event_log<W: Write>(mut out: W, events: &[SimEvent]) -> io::Result<()> {
    for e in events {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

pub fn render_event_log(events: &[SimEvent]) -> String {
    let mut buf = Vec::new();
    write_event_log(&mut buf, events).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("event log is ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let e = SimEvent {
            time: 12,
            vehicle: 1,
            payload: EventPayload::TookOff {
                port: 0,
                destination: 8,
                due: 14,
                battery: 87.5,
            },
        };
        assert_eq!(e.to_string(), "12,1,TookOff,port=0,destination=8,due=14,battery=87.5");
        let e = SimEvent {
            time: 3,
            vehicle: 0,
            payload: EventPayload::Landed {
                port: 2,
                due: None,
                battery: 0.0,
                forced: true,
            },
        };
        assert_eq!(e.to_string(), "3,0,Landed,port=2,due=none,battery=0,forced=true");
    }
}
