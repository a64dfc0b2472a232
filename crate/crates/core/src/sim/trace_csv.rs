//! Trace CSV. Columns: `step,time`, states `x1..`, inputs `u1..`, demand
//! (`u_hat`, or `u_hat1..` with several channels), effective slow bounds
//! `x{i}_bound_eff`, slacks `slack_x{i}`, then `sched_solve,qp_iters`. The
//! final row leaves inputs, demand and slacks empty. A failed run ends with a
//! `# failure: ...` comment line.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{SimTrace, TraceLayout, TraceRecord};
use crate::error::{Error, Result};

const FAILURE_PREFIX: &str = "# failure: ";

fn header(layout: &TraceLayout) -> Vec<String> {
    let mut h = vec!["step".to_string(), "time".to_string()];
    h.extend((1..=layout.n_states).map(|i| format!("x{i}")));
    h.extend((1..=layout.n_inputs).map(|i| format!("u{i}")));
    if layout.n_demands == 1 {
        h.push("u_hat".into());
    } else {
        h.extend((1..=layout.n_demands).map(|i| format!("u_hat{i}")));
    }
    h.extend(layout.bound_axes.iter().map(|a| format!("x{}_bound_eff", a + 1)));
    h.extend(layout.slack_axes.iter().map(|a| format!("slack_x{}", a + 1)));
    h.push("sched_solve".into());
    h.push("qp_iters".into());
    h
}

pub fn write_trace<W: Write>(trace: &SimTrace, mut out: W) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header(&trace.layout)).map_err(csv_io)?;
        let n_in = trace.layout.n_inputs;
        let n_d = trace.layout.n_demands;
        for r in &trace.records {
            let mut row = vec![r.step.to_string(), r.time.to_string()];
            row.extend(r.state.iter().map(f64::to_string));
            let optional = |v: &Option<DVector<f64>>, n: usize| match v {
                Some(v) => v.iter().map(f64::to_string).collect(),
                None => vec![String::new(); n],
            };
            row.extend(optional(&r.input, n_in));
            row.extend(optional(&r.demand, n_d));
            row.extend(r.bounds_eff.iter().map(f64::to_string));
            if r.input.is_some() {
                row.extend(r.slacks.iter().map(f64::to_string));
            } else {
                row.extend(std::iter::repeat_n(String::new(), r.slacks.len()));
            }
            row.push(u8::from(r.sched_solve).to_string());
            row.push(r.qp_iters.to_string());
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
    }
    if let Some(msg) = &trace.failure {
        writeln!(out, "{FAILURE_PREFIX}{}", msg.replace('\n', " "))?;
    }
    Ok(())
}

pub fn write_trace_file(trace: &SimTrace, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::TraceFormat {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Columns recovered from a header.
struct Columns {
    layout: TraceLayout,
}

fn parse_header(h: &csv::StringRecord) -> Result<Columns> {
    let bad = |message: String| Error::TraceFormat { line: 1, message };
    let names: Vec<&str> = h.iter().collect();
    let mut i = 0;
    let expect = |name: &str, i: &mut usize| -> Result<()> {
        if names.get(*i) != Some(&name) {
            return Err(bad(format!("expected column `{name}` at position {}", *i + 1)));
        }
        *i += 1;
        Ok(())
    };
    expect("step", &mut i)?;
    expect("time", &mut i)?;
    let count = |prefix: &str, i: &mut usize| {
        let mut n = 0;
        while names.get(*i).is_some_and(|c| *c == format!("{prefix}{}", n + 1)) {
            n += 1;
            *i += 1;
        }
        n
    };
    let n_states = count("x", &mut i);
    let n_inputs = count("u", &mut i);
    let n_demands = if names.get(i) == Some(&"u_hat") {
        i += 1;
        1
    } else {
        count("u_hat", &mut i)
    };
    if n_states == 0 || n_inputs == 0 || n_demands == 0 {
        return Err(bad("header needs state, input and demand columns".into()));
    }
    let axis = |s: &str| s.parse::<usize>().ok().filter(|&a| a >= 1 && a <= n_states).map(|a| a - 1);
    let mut bound_axes = Vec::new();
    while let Some(a) = names.get(i).and_then(|c| c.strip_prefix('x')?.strip_suffix("_bound_eff")).and_then(axis) {
        bound_axes.push(a);
        i += 1;
    }
    let mut slack_axes = Vec::new();
    while let Some(a) = names.get(i).and_then(|c| c.strip_prefix("slack_x")).and_then(axis) {
        slack_axes.push(a);
        i += 1;
    }
    expect("sched_solve", &mut i)?;
    expect("qp_iters", &mut i)?;
    if i != names.len() {
        return Err(bad(format!("unexpected column `{}`", names[i])));
    }
    Ok(Columns {
        layout: TraceLayout {
            n_states,
            n_inputs,
            n_demands,
            bound_axes,
            slack_axes,
        },
    })
}

pub fn read_trace<R: Read>(mut input: R) -> Result<SimTrace> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let failure = text
        .lines()
        .filter_map(|l| l.strip_prefix(FAILURE_PREFIX))
        .last()
        .map(str::to_string);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_io)?.clone();
    let Columns { layout } = parse_header(&header)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_io)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        records.push(parse_row(&row, &layout, line)?);
    }
    Ok(SimTrace {
        layout,
        records,
        failure,
    })
}

pub fn read_trace_file(path: &Path) -> Result<SimTrace> {
    read_trace(BufReader::new(File::open(path)?))
}

fn parse_row(row: &csv::StringRecord, layout: &TraceLayout, line: usize) -> Result<TraceRecord> {
    let err = |message: String| Error::TraceFormat { line, message };
    let mut fields = row.iter();
    let mut next = |what: &str| fields.next().ok_or_else(|| err(format!("missing `{what}`")));
    let num = |s: &str, what: &str| -> Result<f64> { s.parse().map_err(|_| err(format!("bad {what} `{s}`"))) };

    let step = next("step")?.parse().map_err(|_| err("bad step".into()))?;
    let time = num(next("time")?, "time")?;
    let mut block = |n: usize, what: &str, optional: bool| -> Result<Option<Vec<f64>>> {
        let raw: Vec<&str> = (0..n).map(|_| next(what)).collect::<Result<_>>()?;
        if optional && raw.iter().all(|s| s.is_empty()) {
            return Ok(None);
        }
        raw.iter().map(|s| num(s, what)).collect::<Result<Vec<_>>>().map(Some)
    };
    let state = block(layout.n_states, "state", false)?.unwrap_or_default();
    let input = block(layout.n_inputs, "input", true)?;
    let demand = block(layout.n_demands, "demand", true)?;
    let bounds_eff = block(layout.bound_axes.len(), "bound", false)?.unwrap_or_default();
    let slacks = block(layout.slack_axes.len(), "slack", true)?.unwrap_or_else(|| vec![0.0; layout.slack_axes.len()]);
    let sched_solve = match next("sched_solve")? {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("bad sched_solve `{other}`"))),
    };
    let qp_iters = next("qp_iters")?.parse().map_err(|_| err("bad qp_iters".into()))?;
    if input.is_some() != demand.is_some() {
        return Err(err("input and demand must both be present or both empty".into()));
    }
    Ok(TraceRecord {
        step,
        time,
        state: DVector::from_vec(state),
        input: input.map(DVector::from_vec),
        demand: demand.map(DVector::from_vec),
        bounds_eff,
        slacks,
        sched_solve,
        qp_iters,
    })
}
