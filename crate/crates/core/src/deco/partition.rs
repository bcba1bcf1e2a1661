use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DecoError, Result};
use crate::rng::{Stage, Stream};

/// Disjoint, exhaustive assignment of the `p` column indices to `m` workers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    p: usize,
    groups: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(DecoError::InvalidPartition("no groups".into()));
        }
        let mut seen = vec![false; p];
        for (g, cols) in groups.iter().enumerate() {
            if cols.is_empty() {
                return Err(DecoError::InvalidPartition(format!("group {g} is empty")));
            }
            for &j in cols {
                if j >= p {
                    return Err(DecoError::InvalidPartition(format!(
                        "column {j} out of range for p={p}"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(DecoError::InvalidPartition(format!("column {j} appears twice")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(DecoError::InvalidPartition(format!("column {j} is unassigned")));
        }
        Ok(Partition { p, groups })
    }

    /// Everything on one worker.
    pub fn single(p: usize) -> Self {
        Partition {
            p,
            groups: vec![(0..p).collect()],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Widest group, the per-worker column count `q`.
    pub fn max_width(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// One line per group, 0-based column indices separated by spaces,
    /// after a `# p=.. m=..` header.
    pub fn to_text(&self) -> String {
        let mut s = format!("# p={} m={}\n", self.p, self.m());
        for g in &self.groups {
            let line: Vec<String> = g.iter().map(usize::to_string).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| DecoError::InvalidPartition("empty partition file".into()))?;
        let p = header
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("p="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| DecoError::InvalidPartition(format!("bad header `{header}`")))?;
        let groups = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|t| {
                        t.parse::<usize>().map_err(|_| {
                            DecoError::InvalidPartition(format!("bad column index `{t}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(p, groups)
    }
}

/// Seeded random partition with group sizes differing by at most one.
/// Indices inside each group are sorted.
pub fn partition_columns(p: usize, m: usize, seed: u64) -> Result<Partition> {
    if m == 0 || m > p {
        return Err(DecoError::InvalidM { m, p });
    }
    let mut cols: Vec<usize> = (0..p).collect();
    if m > 1 {
        Stream::new(seed, Stage::Partition, 0).shuffle(&mut cols);
    }
    let (base, extra) = (p / m, p % m);
    let mut groups = Vec::with_capacity(m);
    let mut start = 0;
    for g in 0..m {
        let width = base + usize::from(g < extra);
        let mut group = cols[start..start + width].to_vec();
        group.sort_unstable();
        groups.push(group);
        start += width;
    }
    Ok(Partition { p, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split() {
        let part = partition_columns(6, 3, 1).unwrap();
        assert_eq!(part.m(), 3);
        assert!(part.groups().iter().all(|g| g.len() == 2));
        let mut all: Vec<usize> = part.groups().concat();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn single_group() {
        let part = partition_columns(5, 1, 99).unwrap();
        assert_eq!(part.groups(), &[vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = partition_columns(100, 7, 12).unwrap();
        let b = partition_columns(100, 7, 12).unwrap();
        assert_eq!(a, b);
        let sizes: Vec<usize> = a.groups().iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(a.max_width(), 15);
        assert_ne!(a, partition_columns(100, 7, 13).unwrap());
    }

    #[test]
    fn invalid_m() {
        assert_eq!(partition_columns(5, 0, 0), Err(DecoError::InvalidM { m: 0, p: 5 }));
        assert_eq!(partition_columns(5, 6, 0), Err(DecoError::InvalidM { m: 6, p: 5 }));
    }

    #[test]
    fn text_round_trip() {
        let part = partition_columns(23, 4, 5).unwrap();
        assert_eq!(Partition::from_text(&part.to_text()).unwrap(), part);
    }

    #[test]
    fn rejects_broken_partitions() {
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
        assert!(Partition::from_text("# p=3 m=1\n0 x 2\n").is_err());
    }
}
