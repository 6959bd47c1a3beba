//! CSV output of run records.

use std::io::Write;

use crate::runner::{conditioning_report, RunRecord};

pub const HEADER: [&str; 9] = [
    "run_id",
    "seed",
    "t",
    "mechanism",
    "exact",
    "released",
    "bound",
    "violated",
    "conditioned",
];

/// Write all checkpoint rows. The whole table is built in memory first so a
/// failure never leaves a partial file behind.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> csv::Result<()> {
    let mut buf = csv::Writer::from_writer(Vec::new());
    buf.write_record(HEADER)?;
    for r in records {
        let cond = conditioning_report(r);
        for row in &r.rows {
            buf.write_record([
                r.run_id.to_string(),
                r.seed.to_string(),
                row.t.to_string(),
                r.mechanism.to_string(),
                row.exact.to_string(),
                row.released.to_string(),
                row.bound.to_string(),
                row.violated.to_string(),
                cond.to_string(),
            ])?;
        }
    }
    let bytes = buf.into_inner().map_err(|e| e.into_error())?;
    let mut out = out;
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}
