//! Plain-text target files.
//!
//! Histograms: one `bin_index value` line per bin, where `bin_index` runs over
//! all channels (`channel * bins + bin`), preceded by a
//! `# bins <k> channels <c> normalized <0|1>` header. Moments: one
//! `p q m_pq` line per target. Blank lines and other `#` lines are ignored.

use std::fmt::Write as _;

use super::MomentTarget;
use crate::error::{Result, SegError};
use crate::grid::Histogram;

pub fn histogram_to_text(h: &Histogram) -> String {
    let mut out = format!(
        "# bins {} channels {} normalized {}\n",
        h.bins(),
        h.channels(),
        u8::from(h.is_normalized())
    );
    for (i, v) in h.counts().iter().enumerate() {
        writeln!(out, "{i} {v}").unwrap();
    }
    out
}

pub fn histogram_from_text(text: &str) -> Result<Histogram> {
    let mut header: Option<(usize, usize, bool)> = None;
    let mut entries = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix('#') {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if let ["bins", k, "channels", c, "normalized", n] = parts.as_slice() {
                header = Some((
                    parse(k, line)?,
                    parse(c, line)?,
                    parse::<u8>(n, line)? != 0,
                ));
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(SegError::Format(format!("bad histogram line {line:?}")));
        };
        entries.push((parse::<usize>(i, line)?, parse::<f64>(v, line)?));
    }
    let (bins, channels, normalized) = match header {
        Some(h) => h,
        None => {
            let k = entries.iter().map(|(i, _)| i + 1).max().unwrap_or(0);
            (k, 1, false)
        }
    };
    let mut counts = vec![0.0; bins * channels];
    for (i, v) in entries {
        let slot = counts
            .get_mut(i)
            .ok_or_else(|| SegError::Format(format!("bin index {i} out of range")))?;
        *slot = v;
    }
    Histogram::new(bins, channels, counts, normalized)
}

pub fn moments_to_text(targets: &[MomentTarget]) -> String {
    let mut out = String::new();
    for t in targets {
        writeln!(out, "{} {} {}", t.p, t.q, t.value).unwrap();
    }
    out
}

pub fn moments_from_text(text: &str) -> Result<Vec<MomentTarget>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [p, q, m] => Ok(MomentTarget {
                    p: parse(p, line)?,
                    q: parse(q, line)?,
                    value: parse(m, line)?,
                }),
                _ => Err(SegError::Format(format!("bad moment line {line:?}"))),
            }
        })
        .collect()
}

fn parse<T: std::str::FromStr>(token: &str, line: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| SegError::Format(format!("bad number {token:?} in {line:?}")))
}
