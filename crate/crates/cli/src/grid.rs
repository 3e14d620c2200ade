use anyhow::{bail, Context, Result};

/// One axis `lo:hi:count`; a single point when `count` is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.lo + h * i as f64).collect()
    }
}

pub fn parse(spec: &str) -> Result<Vec<Axis>> {
    spec.split(',')
        .map(|a| {
            let parts: Vec<&str> = a.trim().split(':').collect();
            let [lo, hi, count] = parts[..] else {
                bail!("grid axis {a:?} is not lo:hi:count");
            };
            let axis = Axis {
                lo: lo.parse().with_context(|| format!("grid axis {a:?}"))?,
                hi: hi.parse().with_context(|| format!("grid axis {a:?}"))?,
                count: count.parse().with_context(|| format!("grid axis {a:?}"))?,
            };
            if axis.count == 0 || axis.lo.partial_cmp(&axis.hi).is_none_or(|o| o.is_gt()) {
                bail!("grid axis {a:?} is empty");
            }
            Ok(axis)
        })
        .collect()
}

/// Cartesian product, last axis varying fastest.
pub fn points(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        let vals = axis.values();
        acc.into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect()
    })
}
