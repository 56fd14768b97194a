//! Compact text encoding for sorted index sets: `0-5,9,12-14`.
//!
//! An empty set is written as `-`.

use std::fmt::Write;

/// Encodes a strictly increasing index list as comma-separated ranges.
pub fn format_ranges(indices: &[usize]) -> String {
    if indices.is_empty() {
        return "-".to_string();
    }
    let mut out = String::new();
    let mut start = indices[0];
    let mut prev = indices[0];
    let flush = |out: &mut String, a: usize, b: usize| {
        if !out.is_empty() {
            out.push(',');
        }
        if a == b {
            write!(out, "{a}").unwrap();
        } else {
            write!(out, "{a}-{b}").unwrap();
        }
    };
    for &i in &indices[1..] {
        if i == prev + 1 {
            prev = i;
            continue;
        }
        flush(&mut out, start, prev);
        start = i;
        prev = i;
    }
    flush(&mut out, start, prev);
    out
}

/// Inverse of [`format_ranges`]. Rejects unsorted or overlapping input.
pub fn parse_ranges(text: &str) -> Result<Vec<usize>, String> {
    let text = text.trim();
    if text == "-" {
        return Ok(Vec::new());
    }
    let mut out: Vec<usize> = Vec::new();
    for part in text.split(',') {
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (parse_index(a)?, parse_index(b)?),
            None => {
                let a = parse_index(part)?;
                (a, a)
            }
        };
        if b < a {
            return Err(format!("descending range `{part}`"));
        }
        if let Some(&last) = out.last() {
            if a <= last {
                return Err(format!("range `{part}` is not increasing"));
            }
        }
        out.extend(a..=b);
    }
    Ok(out)
}

fn parse_index(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|_| format!("bad index `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_runs() {
        assert_eq!(format_ranges(&[0, 1, 2, 5, 7, 8]), "0-2,5,7-8");
        assert_eq!(format_ranges(&[]), "-");
        assert!(parse_ranges("3,2").is_err());
        assert!(parse_ranges("4-1").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(set in proptest::collection::btree_set(0usize..500, 0..80)) {
            let v: Vec<usize> = set.into_iter().collect();
            prop_assert_eq!(parse_ranges(&format_ranges(&v)).unwrap(), v);
        }
    }
}
