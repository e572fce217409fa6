use anyhow::Context;
use std::path::Path;

pub fn num(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `header` and `rows` to `path` as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the named columns of a CSV file with a header row.
pub fn read_columns(path: &Path, names: &[&str]) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let idx = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == *n)
                .with_context(|| format!("{}: no column named \"{n}\"", path.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (col, &i) in cols.iter_mut().zip(&idx) {
            let field = rec.get(i).unwrap_or("").trim();
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field
                    .parse()
                    .with_context(|| format!("{}:{}: not a number: \"{field}\"", path.display(), line + 2))?
            };
            col.push(v);
        }
    }
    Ok(cols)
}
