//! Number lists and ranges as typed on the command line: `1,2,5` or
//! `0.05:0.30:0.05` (inclusive stop).

use crate::error::{Error, Result};

const MAX_RANGE_POINTS: usize = 100_000;

fn number(token: &str) -> Result<f64> {
    let t = token.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| Error::invalid(format!("'{t}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::invalid(format!("'{t}' is not finite")));
    }
    Ok(v)
}

/// Comma-separated numbers. Empty items are rejected.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::invalid("empty list"));
    }
    text.split(',').map(number).collect()
}

/// `start:stop:step`, stop included when it lands on the grid (to within
/// a millionth of a step). Points are rounded to 12 decimals so that
/// `0.05:0.30:0.05` yields 0.15 rather than 0.15000000000000002.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(Error::invalid(format!("range '{text}' must look like start:stop:step")));
    };
    let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
    if step <= 0.0 {
        return Err(Error::invalid("range step must be positive"));
    }
    if stop < start {
        return Err(Error::invalid("range stop is below its start"));
    }
    let span = (stop - start) / step;
    if !(span < MAX_RANGE_POINTS as f64) {
        return Err(Error::invalid(format!("range has more than {MAX_RANGE_POINTS} points")));
    }
    let last = (span + 1e-6).floor() as usize;
    Ok((0..=last)
        .map(|i| {
            let v = start + i as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

/// A range if the text contains `:`, a list otherwise.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        parse_range(text)
    } else {
        parse_list(text)
    }
}
