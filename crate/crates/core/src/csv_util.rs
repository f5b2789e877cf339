use std::io::Write;

use crate::Result;

/// Writes a header row followed by numeric rows.
pub(crate) fn write_table<W: Write>(
    writer: W,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
