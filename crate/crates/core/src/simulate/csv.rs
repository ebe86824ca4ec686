//! CSV export of closed-loop and variational traces.

use std::io::{self, Write};

use nalgebra::DVector;

use super::{SimulationTrace, VariationalTrace};

fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

/// `t,x1..xn,u1..um,y1..ym,vdot1..vdotm,V,Vd,storage_residual,vd_residual`
pub fn trace_csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("x", n));
    cols.extend(indexed("u", m));
    cols.extend(indexed("y", m));
    cols.extend(indexed("vdot", m));
    cols.extend(["V", "Vd", "storage_residual", "vd_residual"].map(String::from));
    cols.join(",")
}

/// `t,x1..xn,u1..um,dx1..dxn,dy1..dym,dv1..dvm,dS,dS_residual`
pub fn variational_csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("x", n));
    cols.extend(indexed("u", m));
    cols.extend(indexed("dx", n));
    cols.extend(indexed("dy", m));
    cols.extend(indexed("dv", m));
    cols.extend(["dS", "dS_residual"].map(String::from));
    cols.join(",")
}

struct Row(String);

impl Row {
    fn new(t: f64) -> Self {
        Row(format!("{t:.16e}"))
    }

    fn push(&mut self, v: f64) {
        self.0.push_str(&format!(",{v:.16e}"));
    }

    fn extend(&mut self, v: &DVector<f64>) {
        for e in v.iter() {
            self.push(*e);
        }
    }
}

/// Writes the header and one row per record. `n` and `m` size the header of
/// an empty trace.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, n: usize, m: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", trace_csv_header(n, m))?;
    for r in &trace.records {
        let mut row = Row::new(r.t);
        row.extend(&r.x);
        row.extend(&r.u);
        row.extend(&r.y);
        row.extend(&r.vdot);
        for v in [r.v, r.vd, r.storage_residual, r.vd_residual] {
            row.push(v);
        }
        writeln!(out, "{}", row.0)?;
    }
    out.flush()
}

pub fn write_variational_csv<W: Write>(
    trace: &VariationalTrace,
    n: usize,
    m: usize,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "{}", variational_csv_header(n, m))?;
    for r in &trace.records {
        let mut row = Row::new(r.t);
        row.extend(&r.x);
        row.extend(&r.u);
        row.extend(&r.dx);
        row.extend(&r.dy);
        row.extend(&r.dv);
        row.push(r.d_storage);
        row.push(r.residual);
        writeln!(out, "{}", row.0)?;
    }
    out.flush()
}
