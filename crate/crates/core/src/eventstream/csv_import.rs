use super::{FormatError, RawHit};

/// Reads `x,y,toa_ticks,tot` rows. A header row is accepted only on the
/// first line and is recognised by a non-numeric first field.
pub fn import_csv(text: &str) -> Result<Vec<RawHit>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut hits = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FormatError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(row as u64 + 1, |p| p.line());
        if row == 0 && record.get(0).is_some_and(|f| f.parse::<u64>().is_err() && f.eq_ignore_ascii_case("x")) {
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(FormatError::MalformedRow {
                line,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<u64, FormatError> {
            record[i].parse::<u64>().map_err(|_| FormatError::MalformedRow {
                line,
                reason: format!("{name} is not an unsigned integer: {:?}", &record[i]),
            })
        };
        let narrow = |v: u64, name: &str| -> Result<u16, FormatError> {
            u16::try_from(v)
                .map_err(|_| FormatError::MalformedRow { line, reason: format!("{name} {v} exceeds 65535") })
        };
        hits.push(RawHit {
            x: narrow(field(0, "x")?, "x")?,
            y: narrow(field(1, "y")?, "y")?,
            toa_ticks: field(2, "toa_ticks")?,
            tot: narrow(field(3, "tot")?, "tot")?,
        });
    }
    Ok(hits)
}
