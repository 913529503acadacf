//! Delimited input tables: assets, weights, correlation.

use super::IngestError;

/// Parsed asset table. Percent columns are already fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTable {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

const ASSET_HEADER: [&str; 4] = ["asset", "weight_pct", "return_pct", "volatility_pct"];
const WEIGHT_HEADER: [&str; 2] = ["asset", "weight_pct"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes())
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(source: &str, e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    IngestError::parse(source, line, None, e.to_string())
}

fn check_header(source: &str, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), IngestError> {
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let got: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(g, e)| g != e) {
        return Err(IngestError::parse(
            source,
            1,
            None,
            format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn number(source: &str, record: &csv::StringRecord, col: usize) -> Result<f64, IngestError> {
    let raw = &record[col];
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::parse(source, line_of(record), Some(col + 1), format!("`{raw}` is not a finite number"))),
    }
}

fn name(source: &str, record: &csv::StringRecord) -> Result<String, IngestError> {
    let n = record[0].to_string();
    if n.is_empty() {
        return Err(IngestError::parse(source, line_of(record), Some(1), "empty asset name"));
    }
    Ok(n)
}

pub fn parse_assets(source: &str, text: &str) -> Result<AssetTable, IngestError> {
    let mut rdr = reader(text);
    check_header(source, &mut rdr, &ASSET_HEADER)?;
    let mut t = AssetTable { names: Vec::new(), weights: Vec::new(), mu: Vec::new(), sigma: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let n = name(source, &rec)?;
        if t.names.contains(&n) {
            return Err(IngestError::parse(source, line_of(&rec), Some(1), format!("duplicate asset `{n}`")));
        }
        t.names.push(n);
        t.weights.push(number(source, &rec, 1)? / 100.0);
        t.mu.push(number(source, &rec, 2)? / 100.0);
        t.sigma.push(number(source, &rec, 3)? / 100.0);
    }
    if t.names.is_empty() {
        return Err(IngestError::parse(source, 1, None, "no asset rows"));
    }
    Ok(t)
}

/// Weights keyed by asset name, as fractions in universe order. Assets the
/// file does not list get weight zero.
pub fn parse_weights(source: &str, text: &str, names: &[String]) -> Result<Vec<f64>, IngestError> {
    let mut rdr = reader(text);
    check_header(source, &mut rdr, &WEIGHT_HEADER)?;
    let mut w = vec![0.0; names.len()];
    let mut seen = vec![false; names.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let n = name(source, &rec)?;
        let Some(i) = names.iter().position(|a| *a == n) else {
            return Err(IngestError::parse(source, line_of(&rec), Some(1), format!("unknown asset `{n}`")));
        };
        if seen[i] {
            return Err(IngestError::parse(source, line_of(&rec), Some(1), format!("duplicate asset `{n}`")));
        }
        seen[i] = true;
        w[i] = number(source, &rec, 1)? / 100.0;
    }
    Ok(w)
}

/// Square correlation matrix whose header repeats the asset names in order.
pub fn parse_correlation(source: &str, text: &str, names: &[String]) -> Result<Vec<Vec<f64>>, IngestError> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let n = names.len();
    if header.len() != n {
        return Err(IngestError::parse(
            source,
            1,
            None,
            format!("correlation matrix has {} columns for {n} assets", header.len()),
        ));
    }
    for (col, (h, a)) in header.iter().zip(names).enumerate() {
        if h != a {
            return Err(IngestError::parse(source, 1, Some(col + 1), format!("expected asset `{a}`, found `{h}`")));
        }
    }
    let mut rho = Vec::with_capacity(n);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        if rec.len() != n {
            return Err(IngestError::parse(
                source,
                line_of(&rec),
                None,
                format!("row has {} entries, expected {n}", rec.len()),
            ));
        }
        rho.push((0..n).map(|c| number(source, &rec, c)).collect::<Result<Vec<_>, _>>()?);
    }
    if rho.len() != n {
        return Err(IngestError::parse(source, 0, None, format!("correlation matrix has {} rows for {n} assets", rho.len())));
    }
    Ok(rho)
}
