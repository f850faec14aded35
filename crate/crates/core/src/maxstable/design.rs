use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// Site coordinates with cached Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDesign {
    sites: Vec<Site>,
    distances: Vec<f64>,
}

impl SpatialDesign {
    pub fn new(sites: Vec<Site>) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::Schema(format!(
                "a design needs at least 2 sites, got {}",
                sites.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &sites {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicated site id '{}'", s.id)));
            }
            if !s.x.is_finite() || !s.y.is_finite() {
                return Err(Error::Schema(format!(
                    "site '{}' has non-finite coordinates",
                    s.id
                )));
            }
        }
        let d = sites.len();
        let mut distances = vec![0.0; d * d];
        for j in 0..d {
            for k in (j + 1)..d {
                let h = (sites[j].x - sites[k].x).hypot(sites[j].y - sites[k].y);
                distances[j * d + k] = h;
                distances[k * d + j] = h;
            }
        }
        Ok(Self { sites, distances })
    }

    /// Sites named `S1..SD`, from raw coordinates.
    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Site {
                    id: format!("S{}", i + 1),
                    x,
                    y,
                })
                .collect(),
        )
    }

    /// `d` sites drawn uniformly on `[0, side]²`.
    pub fn uniform_square<R: Rng + ?Sized>(d: usize, side: f64, rng: &mut R) -> Result<Self> {
        let coords: Vec<(f64, f64)> = (0..d)
            .map(|_| (rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect();
        Self::from_coords(&coords)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sites.iter().map(|s| s.id.as_str())
    }

    #[inline]
    pub fn distance(&self, j: usize, k: usize) -> f64 {
        self.distances[j * self.sites.len() + k]
    }

    /// Largest pairwise distance (the design diameter).
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().cloned().fold(0.0, f64::max)
    }

    /// Unordered pairs `(j, k)`, `j < k`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.len();
        (0..d).flat_map(move |j| ((j + 1)..d).map(move |k| (j, k)))
    }

    /// All `C(D, 3)` triplets `j < k < l` in lexicographic order.
    pub fn triplets(&self) -> Vec<[usize; 3]> {
        let d = self.len();
        let mut out = Vec::with_capacity(d * (d - 1) * d.saturating_sub(2) / 6);
        for j in 0..d {
            for k in (j + 1)..d {
                for l in (k + 1)..d {
                    out.push([j, k, l]);
                }
            }
        }
        out
    }

    /// Side lengths of the triangle spanned by a triplet.
    pub fn triangle(&self, t: [usize; 3]) -> [f64; 3] {
        [
            self.distance(t[0], t[1]),
            self.distance(t[0], t[2]),
            self.distance(t[1], t[2]),
        ]
    }
}
