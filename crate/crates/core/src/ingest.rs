//! Frequency-of-frequencies data: parsing, tabulation and empirical summaries.
//!
//! Two text formats are accepted. The frequency format holds one `x n_x`
//! pair per line; the raw-count format holds one positive count per line.
//! In both, blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse table `x -> n_x` of how many classes were seen exactly `x` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyData {
    counts: BTreeMap<u64, u64>,
    n: u64,
    s: u64,
}

impl FrequencyData {
    /// Builds from `(x, n_x)` pairs. Zero counts are dropped; keys must be
    /// distinct and at least 1.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut counts = BTreeMap::new();
        for (i, (x, nx)) in pairs.into_iter().enumerate() {
            if x == 0 {
                return Err(Error::InvalidArgument(format!(
                    "frequency x must be >= 1 (pair {})",
                    i + 1
                )));
            }
            if counts.contains_key(&x) {
                return Err(Error::DuplicateFrequency { x, line: i + 1 });
            }
            if nx > 0 {
                counts.insert(x, nx);
            }
        }
        Self::from_map(counts)
    }

    fn from_map(counts: BTreeMap<u64, u64>) -> Result<Self> {
        let n: u64 = counts.values().sum();
        if n == 0 {
            return Err(Error::Empty);
        }
        let s = counts.iter().map(|(x, nx)| x * nx).sum();
        Ok(Self { counts, n, s })
    }

    /// Number of detected classes, `Σ n_x`.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of individuals, `Σ x n_x`.
    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn x_max(&self) -> u64 {
        *self.counts.keys().next_back().expect("nonempty by construction")
    }

    pub fn count(&self, x: u64) -> u64 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// Number of distinct observed frequencies.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// `f̂(x) = n_x / n`.
    pub fn pmf(&self, x: u64) -> f64 {
        self.count(x) as f64 / self.n as f64
    }

    /// `F̂(x) = Σ_{i<=x} f̂(i)`; exactly 1 for `x >= x_max`.
    pub fn cdf(&self, x: u64) -> f64 {
        if x >= self.x_max() {
            return 1.0;
        }
        let below: u64 = self.counts.range(..=x).map(|(_, nx)| nx).sum();
        below as f64 / self.n as f64
    }

    /// Empirical cdf at `x = 1..=x_max`.
    pub fn cdf_values(&self) -> Vec<f64> {
        (1..=self.x_max()).map(|x| self.cdf(x)).collect()
    }

    /// Empirical moment `μ̂(x) = x! f̂(x)`.
    pub fn moment(&self, x: u64) -> Result<f64> {
        Ok(factorial(x)? * self.pmf(x))
    }

    /// `(x, f̂(x))` over observed frequencies.
    pub fn pmf_entries(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        let n = self.n as f64;
        self.counts.iter().map(move |(&x, &nx)| (x, nx as f64 / n))
    }

    /// Expands back to one count per detected class, in ascending order.
    pub fn expand(&self) -> Vec<u64> {
        self.counts
            .iter()
            .flat_map(|(&x, &nx)| std::iter::repeat_n(x, nx as usize))
            .collect()
    }
}

/// Parses the `x n_x` frequency format.
pub fn parse_frequencies(text: &str) -> Result<FrequencyData> {
    let mut counts = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let Some(body) = content(raw) else { continue };
        let mut fields = body.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line,
                reason: format!("expected two integers \"x n_x\", got {body:?}"),
            });
        };
        let x = parse_u64(a, line)?;
        let nx = parse_u64(b, line)?;
        if x == 0 {
            return Err(Error::Parse {
                line,
                reason: "frequency x must be >= 1".into(),
            });
        }
        if counts.insert(x, nx).is_some() {
            return Err(Error::DuplicateFrequency { x, line });
        }
    }
    counts.retain(|_, nx| *nx > 0);
    FrequencyData::from_map(counts)
}

/// Parses one positive count per line and tabulates it.
pub fn parse_raw_counts(text: &str) -> Result<FrequencyData> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let Some(body) = content(raw) else { continue };
        let v = parse_u64(body, idx + 1)?;
        if v == 0 {
            return Err(Error::Parse {
                line: idx + 1,
                reason: "counts must be >= 1".into(),
            });
        }
        values.push(v);
    }
    from_raw_counts(&values)
}

/// Tabulates per-class counts `X_1..X_n` into frequencies of frequencies.
pub fn from_raw_counts(values: &[u64]) -> Result<FrequencyData> {
    let mut counts = BTreeMap::new();
    for &v in values {
        if v == 0 {
            return Err(Error::InvalidArgument("counts must be >= 1".into()));
        }
        *counts.entry(v).or_insert(0) += 1;
    }
    FrequencyData::from_map(counts)
}

/// `s_i = Σ x^i p(x)` over a finitely supported pmf given as `(x, p(x))`.
pub fn s_moment<I>(pmf: I, i: u32) -> f64
where
    I: IntoIterator<Item = (u64, f64)>,
{
    if i == 0 {
        return 1.0;
    }
    pmf.into_iter().map(|(x, p)| (x as f64).powi(i as i32) * p).sum()
}

/// `x!` as `f64`; exact for `x <= 22`, correctly rounded products beyond.
pub fn factorial(x: u64) -> Result<f64> {
    if x > 170 {
        return Err(Error::FactorialOverflow(x));
    }
    Ok((2..=x).fold(1.0, |acc, i| acc * i as f64))
}

fn content(raw: &str) -> Option<&str> {
    let body = raw.trim();
    if body.is_empty() || body.starts_with('#') {
        None
    } else {
        Some(body)
    }
}

fn parse_u64(field: &str, line: usize) -> Result<u64> {
    field.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("{field:?} is not a nonnegative integer"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHOLERA: &str = "1 32\n2 16\n3 6\n4 1";

    #[test]
    fn cholera_totals() {
        let d = parse_frequencies(CHOLERA).unwrap();
        assert_eq!((d.n(), d.s(), d.x_max()), (55, 86, 4));
    }

    #[test]
    fn single_class() {
        let d = parse_frequencies("5 1").unwrap();
        assert_eq!((d.n(), d.s(), d.x_max()), (1, 5, 5));
    }

    #[test]
    fn zero_entries_and_comments() {
        let d = parse_frequencies("1 3\n2 0\n# note\n3 2").unwrap();
        assert_eq!(
            d.counts().iter().map(|(&a, &b)| (a, b)).collect::<Vec<_>>(),
            vec![(1, 3), (3, 2)]
        );
        assert_eq!((d.n(), d.s()), (5, 9));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_frequencies("1 3\n2 x\n"),
            Err(Error::Parse {
                line: 2,
                reason: "\"x\" is not a nonnegative integer".into()
            })
        );
        assert!(matches!(parse_frequencies("1 3 4"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_frequencies("0 3"), Err(Error::Parse { line: 1, .. })));
        assert_eq!(
            parse_frequencies("1 3\n1 4"),
            Err(Error::DuplicateFrequency { x: 1, line: 2 })
        );
        assert_eq!(parse_frequencies("# nothing\n"), Err(Error::Empty));
        assert_eq!(parse_frequencies("2 0"), Err(Error::Empty));
    }

    #[test]
    fn raw_counts() {
        let d = from_raw_counts(&[1, 1, 2]).unwrap();
        assert_eq!((d.count(1), d.count(2), d.n(), d.s()), (2, 1, 3, 4));
        let d = from_raw_counts(&[4, 4, 4, 4]).unwrap();
        assert_eq!((d.count(4), d.n(), d.s()), (4, 4, 16));
        assert_eq!(from_raw_counts(&[]), Err(Error::Empty));
        assert!(from_raw_counts(&[1, 0]).is_err());
        assert!(parse_raw_counts("3\n-1\n").is_err());
    }

    #[test]
    fn raw_tabulation_matches_cholera_file() {
        let mut values = vec![1; 32];
        values.extend([2; 16]);
        values.extend([3; 6]);
        values.push(4);
        // independent tabulation
        let mut expected = BTreeMap::new();
        for &v in &values {
            *expected.entry(v).or_insert(0u64) += 1;
        }
        let d = from_raw_counts(&values).unwrap();
        assert_eq!(d.counts(), &expected);
        assert_eq!(d, parse_frequencies(CHOLERA).unwrap());
        let text: String = values.iter().map(|v| format!("{v}\n")).collect();
        assert_eq!(parse_raw_counts(&format!("# raw\n{text}")).unwrap(), d);
    }

    #[test]
    fn pmf_and_moments() {
        let d = parse_frequencies(CHOLERA).unwrap();
        assert!((d.pmf(1) - 32.0 / 55.0).abs() < 1e-15);
        assert_eq!(d.pmf(7), 0.0);
        assert!((d.moment(2).unwrap() - 32.0 / 55.0).abs() < 1e-15);
        assert!((d.moment(4).unwrap() - 24.0 / 55.0).abs() < 1e-15);
        assert_eq!(d.moment(9).unwrap(), 0.0);
        assert_eq!(d.moment(171), Err(Error::FactorialOverflow(171)));
        assert!((s_moment(d.pmf_entries(), 1) - 86.0 / 55.0).abs() < 1e-14);
        assert!((s_moment(d.pmf_entries(), 2) - 166.0 / 55.0).abs() < 1e-14);
        assert_eq!(s_moment(d.pmf_entries(), 0), 1.0);

        let est = parse_frequencies(
            "1 1434\n2 253\n3 71\n4 33\n5 11\n6 6\n7 2\n8 3\n9 1\n10 2\n11 2\n12 1\n13 1\n14 1\n16 2\n23 1\n27 1",
        )
        .unwrap();
        assert!((est.pmf(2) - 253.0 / 1825.0).abs() < 1e-15);
        assert_eq!((est.n(), est.s()), (1825, 2586));
    }

    #[test]
    fn cdf_steps() {
        let d = parse_frequencies(CHOLERA).unwrap();
        let cdf = d.cdf_values();
        assert_eq!(cdf.len(), 4);
        assert!((cdf[0] - 32.0 / 55.0).abs() < 1e-15);
        assert!((cdf[2] - 54.0 / 55.0).abs() < 1e-15);
        assert_eq!(cdf[3], 1.0);
        assert_eq!(d.cdf(40), 1.0);
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0).unwrap(), 1.0);
        assert_eq!(factorial(5).unwrap(), 120.0);
        assert!(factorial(170).unwrap().is_finite());
    }
}
