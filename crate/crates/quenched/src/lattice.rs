//! Boxes and sites on Z^d.
//!
//! Direction convention used across the crate: direction index `2j` is the
//! unit step `+e_{j+1}`, index `2j+1` is `-e_{j+1}`. Kernel probability
//! vectors follow the same order.

use crate::{Error, Result};

pub type Site = Vec<i64>;

/// Unit vector for a direction index under the crate convention.
pub fn direction_vector(dim: usize, dir: usize) -> Site {
    let mut v = vec![0i64; dim];
    v[dir / 2] = if dir % 2 == 0 { 1 } else { -1 };
    v
}

/// Apply a direction index to a site in place.
#[inline(always)]
pub fn step(site: &mut [i64], dir: usize) {
    site[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c.abs()).sum()
}

pub fn l1_norm_int(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).sum()
}

/// Nearest lattice point in l1 distance. Rounding is per coordinate; exact
/// half-integer ties go down, which selects the lexicographically smallest
/// of the nearest points.
pub fn nearest_lattice(x: &[f64]) -> Site {
    x.iter()
        .map(|&c| {
            let f = c.floor();
            if c - f > 0.5 {
                f as i64 + 1
            } else {
                f as i64
            }
        })
        .collect()
}

/// An axis-aligned box of lattice sites with inclusive corners.
///
/// Site order (and the flat index) is lexicographic with the first coordinate
/// slowest; solver sweeps rely on this.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidArgument(
                "box corners must be nonempty and of equal dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidArgument(format!(
                "box corners out of order: lo {lo:?}, hi {hi:?}"
            )));
        }
        Ok(LatticeBox { lo, hi })
    }

    /// Smallest box containing all given points.
    pub fn bounding(points: &[&[i64]]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("bounding box of no points".into()))?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in points {
            for (i, &c) in p.iter().enumerate() {
                lo[i] = lo[i].min(c);
                hi[i] = hi[i].max(c);
            }
        }
        LatticeBox::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    /// Number of sites; errors out on overflow-sized requests at construction
    /// sites that call `checked_len`.
    pub fn len(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a + 1) as usize)
            .product()
    }

    pub fn checked_len(&self, cap: usize) -> Result<usize> {
        let mut n: usize = 1;
        for (a, b) in self.lo.iter().zip(&self.hi) {
            let side = (b - a + 1) as usize;
            n = n
                .checked_mul(side)
                .filter(|&m| m <= cap)
                .ok_or_else(|| Error::InvalidArgument(format!("box exceeds {cap} sites")))?;
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (a, b))| a <= c && c <= b)
    }

    /// True when the site sits on the box's outer frame.
    pub fn is_boundary(&self, site: &[i64]) -> bool {
        self.contains(site)
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .any(|(c, (a, b))| c == a || c == b)
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for (i, &c) in site.iter().enumerate() {
            let side = (self.hi[i] - self.lo[i] + 1) as usize;
            idx = idx * side + (c - self.lo[i]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let d = self.dim();
        let mut site = vec![0i64; d];
        for i in (0..d).rev() {
            let side = (self.hi[i] - self.lo[i] + 1) as usize;
            site[i] = self.lo[i] + (idx % side) as i64;
            idx /= side;
        }
        site
    }

    pub fn iter_sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(|i| self.site_at(i))
    }

    /// Grow the box by `margin` sites on every face.
    pub fn inflate(&self, margin: i64) -> Result<Self> {
        LatticeBox::new(
            self.lo.iter().map(|c| c - margin).collect(),
            self.hi.iter().map(|c| c + margin).collect(),
        )
    }

    /// Grow by per-axis margins `(below, above)`.
    pub fn inflate_axes(&self, margins: &[(i64, i64)]) -> Result<Self> {
        LatticeBox::new(
            self.lo.iter().zip(margins).map(|(c, m)| c - m.0).collect(),
            self.hi.iter().zip(margins).map(|(c, m)| c + m.1).collect(),
        )
    }
}
