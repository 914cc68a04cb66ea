//! Flag value syntax: rate ranges, comma lists, seed ranges.

use std::str::FromStr;

use crate::error::{CliError, Result};

/// `0.2:0.8:0.1` (inclusive) or a comma list `0.2,0.5`. Every rate must lie
/// in `(0, 1)`.
pub fn parse_rates(s: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| CliError::Usage(format!("rates `{s}`: {msg}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(format!("`{t}` {e}")));
    let rates = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step".into()));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // rounding keeps 0.1 steps from drifting into 0.30000000000000004
        (0..count)
            .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
            .collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<f64>>>()?
    };
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(bad(format!("rate {r} outside (0, 1)")));
    }
    Ok(rates)
}

/// Comma list of values parsed with `FromStr`.
pub fn parse_list<T>(s: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(CliError::Usage(format!("empty list `{s}`")))
            } else {
                Ok(v)
            }
        })
}

/// `a..b` (exclusive), a count `n` meaning `0..n`, or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |e: std::num::ParseIntError| CliError::Usage(format!("seeds `{s}`: {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().map_err(bad)?, b.trim().parse::<u64>().map_err(bad)?);
        if b <= a {
            return Err(CliError::Usage(format!("seeds `{s}`: empty range")));
        }
        return Ok((a..b).collect());
    }
    if s.contains(',') {
        return parse_list(s);
    }
    let n = s.trim().parse::<u64>().map_err(bad)?;
    if n == 0 {
        return Err(CliError::Usage("need at least one seed".into()));
    }
    Ok((0..n).collect())
}

/// Keeps the first occurrence of each item; returns the dropped repeats.
pub fn dedup<T: PartialEq + Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let mut kept: Vec<T> = Vec::new();
    let mut dropped = Vec::new();
    for it in items {
        if kept.contains(it) {
            dropped.push(it.clone());
        } else {
            kept.push(it.clone());
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_range() {
        assert_eq!(
            parse_rates("0.2:0.8:0.1").unwrap(),
            vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
        );
        assert_eq!(parse_rates("0.25,0.5").unwrap(), vec![0.25, 0.5]);
        assert!(parse_rates("0.2:1.0:0.4").is_err());
        assert!(parse_rates("0.2:0.8").is_err());
        assert!(parse_rates("0.5:0.2:0.1").is_err());
    }

    #[test]
    fn seeds_forms() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5..7").unwrap(), vec![5, 6]);
        assert_eq!(parse_seeds("4,1").unwrap(), vec![4, 1]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn dedup_keeps_first() {
        let (kept, dropped) = dedup(&["a", "b", "a", "c", "b"]);
        assert_eq!(kept, vec!["a", "b", "c"]);
        assert_eq!(dropped, vec!["a", "b"]);
    }
}
