//! Highest-density credible regions for three-component etiology vectors.
//!
//! Draws are mapped to the plane by the additive log-ratio transform
//! `(log(pi_a / pi_r), log(pi_b / pi_r))` with reference component `r`. A
//! Gaussian kernel density estimate with normal-reference bandwidth matrix
//! `H = n^(-1/3) S` (S the sample covariance) is fitted there, and the region
//! is the upper level set of the density holding `level` of the draws.
//! Contours are traced by marching squares on a grid over the simplex and
//! reported in barycentric coordinates.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summary::quantile_sorted;
use crate::error::{PlcmError, Result};

pub const MIN_REGION_DRAWS: usize = 100;
const RIDGE: f64 = 1e-10;
// exp(-25) relative to the kernel peak
const CUTOFF_Q: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionOptions {
    pub level: f64,
    /// Reference component of the log-ratio transform (0-based).
    pub reference: usize,
    /// Draws beyond this are thinned evenly before fitting the density.
    pub max_points: usize,
    /// Grid cells per axis for area and contours.
    pub grid: usize,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            level: 0.95,
            reference: 2,
            max_points: 1500,
            grid: 128,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Kde {
    points: Vec<[f64; 2]>,
    hinv: [[f64; 2]; 2],
    norm: f64,
}

impl Kde {
    fn density(&self, y: [f64; 2]) -> f64 {
        let h = &self.hinv;
        let mut acc = 0.0;
        for p in &self.points {
            let (u, v) = (y[0] - p[0], y[1] - p[1]);
            let q = h[0][0] * u * u + 2.0 * h[0][1] * u * v + h[1][1] * v * v;
            if q < CUTOFF_Q {
                acc += (-0.5 * q).exp();
            }
        }
        acc * self.norm / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub level: f64,
    pub reference: usize,
    pub n_draws: usize,
    /// Draws used in the density estimate.
    pub n_kde_points: usize,
    pub bandwidth: [[f64; 2]; 2],
    pub threshold: f64,
    /// Region area as a fraction of the simplex area.
    pub area: f64,
    /// Closed polylines (first vertex repeated at the end) in barycentric
    /// coordinates.
    pub contours: Vec<Vec<[f64; 3]>>,
    #[serde(skip)]
    kde: Kde,
}

impl CredibleRegion {
    /// Whether an etiology vector lies inside the region.
    pub fn contains(&self, pi: &[f64]) -> bool {
        if pi.len() != 3 {
            return false;
        }
        match alr(pi, self.reference) {
            Some(y) => self.kde.density(y) >= self.threshold,
            None => false,
        }
    }

    pub fn density_at(&self, pi: &[f64]) -> f64 {
        alr(pi, self.reference).map_or(0.0, |y| self.kde.density(y))
    }
}

fn alr(pi: &[f64], reference: usize) -> Option<[f64; 2]> {
    if pi.iter().any(|&p| !(p > 0.0)) {
        return None;
    }
    let r = pi[reference].ln();
    let mut out = [0.0; 2];
    for (slot, k) in (0..3).filter(|&k| k != reference).enumerate() {
        out[slot] = pi[k].ln() - r;
    }
    Some(out)
}

fn fit_kde(points: Vec<[f64; 2]>) -> (Kde, [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut s = [[0.0; 2]; 2];
    for p in &points {
        let (u, v) = (p[0] - mx, p[1] - my);
        s[0][0] += u * u;
        s[0][1] += u * v;
        s[1][1] += v * v;
    }
    let f = n.powf(-1.0 / 3.0) / (n - 1.0);
    let h00 = s[0][0] * f + RIDGE;
    let h01 = s[0][1] * f;
    let h11 = s[1][1] * f + RIDGE;
    let det = (h00 * h11 - h01 * h01).max(RIDGE * RIDGE);
    let kde = Kde {
        points,
        hinv: [[h11 / det, -h01 / det], [-h01 / det, h00 / det]],
        norm: 1.0 / (2.0 * std::f64::consts::PI * det.sqrt()),
    };
    (kde, [[h00, h01], [h01, h11]])
}

struct Grid {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    n: usize,
    /// `v[i][j]` at `(x0 + i dx, y0 + j dy)`: density minus threshold.
    v: Vec<Vec<f64>>,
}

impl Grid {
    fn eval(kde: &Kde, reference: usize, threshold: f64, bbox: [f64; 4], n: usize) -> Grid {
        let [x0, x1, y0, y1] = bbox;
        let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
        let v = (0..=n)
            .into_par_iter()
            .map(|i| {
                let x = x0 + i as f64 * dx;
                (0..=n)
                    .map(|j| {
                        let y = y0 + j as f64 * dy;
                        let z = 1.0 - x - y;
                        let mut pi = [x, y, z];
                        // keep vertices on the simplex edges outside
                        if x <= 0.0 || y <= 0.0 || z <= 0.0 {
                            return -threshold - f64::MIN_POSITIVE;
                        }
                        pi.iter_mut().for_each(|p| *p = p.max(f64::MIN_POSITIVE));
                        alr(&pi, reference).map_or(-threshold, |a| kde.density(a)) - threshold
                    })
                    .collect()
            })
            .collect();
        Grid { x0, y0, dx, dy, n, v }
    }

    fn inside(&self, i: usize, j: usize) -> bool {
        self.v[i][j] >= 0.0
    }

    fn touches_border(&self) -> bool {
        let n = self.n;
        (0..=n).any(|k| self.inside(0, k) || self.inside(n, k) || self.inside(k, 0) || self.inside(k, n))
    }

    fn area_fraction(&self) -> f64 {
        let count = self.v.iter().flatten().filter(|&&x| x >= 0.0).count();
        count as f64 * self.dx * self.dy / 0.5
    }

    fn edge_point(&self, e: Edge) -> [f64; 3] {
        let (a, b) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (va, vb) = (self.v[a.0][a.1], self.v[b.0][b.1]);
        let t = if va == vb { 0.5 } else { va / (va - vb) };
        let x = self.x0 + (a.0 as f64 + t * (b.0 as f64 - a.0 as f64)) * self.dx;
        let y = self.y0 + (a.1 as f64 + t * (b.1 as f64 - a.1 as f64)) * self.dy;
        [x, y, 1.0 - x - y]
    }

    fn segments(&self) -> Vec<(Edge, Edge)> {
        let mut segs = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let b = [
                    self.inside(i, j),
                    self.inside(i + 1, j),
                    self.inside(i + 1, j + 1),
                    self.inside(i, j + 1),
                ];
                let bottom = Edge::H(i, j);
                let right = Edge::V(i + 1, j);
                let top = Edge::H(i, j + 1);
                let left = Edge::V(i, j);
                let crossed: Vec<Edge> = [(0, 1, bottom), (1, 2, right), (3, 2, top), (0, 3, left)]
                    .into_iter()
                    .filter(|&(p, q, _)| b[p] != b[q])
                    .map(|(_, _, e)| e)
                    .collect();
                match crossed.len() {
                    2 => segs.push((crossed[0], crossed[1])),
                    4 => {
                        let center = (self.v[i][j] + self.v[i + 1][j] + self.v[i + 1][j + 1] + self.v[i][j + 1]) / 4.0;
                        if b[0] != (center >= 0.0) {
                            segs.push((left, bottom));
                            segs.push((right, top));
                        } else {
                            segs.push((bottom, right));
                            segs.push((top, left));
                        }
                    }
                    _ => {}
                }
            }
        }
        segs
    }

    fn contours(&self) -> Vec<Vec<[f64; 3]>> {
        let segs = self.segments();
        let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (k, (a, b)) in segs.iter().enumerate() {
            by_edge.entry(*a).or_default().push(k);
            by_edge.entry(*b).or_default().push(k);
        }
        let mut used = vec![false; segs.len()];
        let next = |from: Edge, used: &mut Vec<bool>| -> Option<Edge> {
            let k = *by_edge.get(&from)?.iter().find(|&&k| !used[k])?;
            used[k] = true;
            let (a, b) = segs[k];
            Some(if a == from { b } else { a })
        };
        let mut out = Vec::new();
        for k in 0..segs.len() {
            if used[k] {
                continue;
            }
            used[k] = true;
            let (a, b) = segs[k];
            let mut chain = VecDeque::from([a, b]);
            let mut tail = b;
            while let Some(e) = next(tail, &mut used) {
                chain.push_back(e);
                tail = e;
            }
            if chain.front() != chain.back() {
                let mut head = a;
                while let Some(e) = next(head, &mut used) {
                    chain.push_front(e);
                    head = e;
                }
            }
            out.push(chain.into_iter().map(|e| self.edge_point(e)).collect());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Highest-density credible region of three-component etiology draws.
pub fn credible_region_simplex(pi_draws: &[Vec<f64>], opts: &RegionOptions) -> Result<CredibleRegion> {
    if pi_draws.iter().any(|d| d.len() != 3) {
        return Err(PlcmError::usage(
            "simplex credible regions are drawn for three pathogens only; use marginal intervals instead",
        ));
    }
    if pi_draws.len() < MIN_REGION_DRAWS {
        return Err(PlcmError::usage(format!(
            "a credible region needs at least {MIN_REGION_DRAWS} draws, got {}",
            pi_draws.len()
        )));
    }
    if opts.reference > 2 || !(opts.level > 0.0 && opts.level < 1.0) || opts.grid < 4 || opts.max_points < 2 {
        return Err(PlcmError::usage("invalid credible region options"));
    }
    let n_all = pi_draws.len();
    let n = n_all.min(opts.max_points);
    let clamp = |d: &Vec<f64>| -> [f64; 3] { [d[0], d[1], d[2]].map(|p| p.max(1e-300)) };
    let sub: Vec<[f64; 3]> = (0..n).map(|r| clamp(&pi_draws[r * n_all / n])).collect();
    let points: Vec<[f64; 2]> = sub.iter().map(|p| alr(p, opts.reference).expect("positive")).collect();
    let (kde, bandwidth) = fit_kde(points);

    let mut dens: Vec<f64> = kde.points.par_iter().map(|&p| kde.density(p)).collect();
    dens.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&dens, 1.0 - opts.level);

    let (mut xmin, mut xmax, mut ymin, mut ymax) = (1.0f64, 0.0f64, 1.0f64, 0.0f64);
    for p in &sub {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let mut margin = (0.25 * (xmax - xmin).max(ymax - ymin)).max(1e-6);
    let mut grid;
    loop {
        let bbox = [
            (xmin - margin).max(0.0),
            (xmax + margin).min(1.0),
            (ymin - margin).max(0.0),
            (ymax + margin).min(1.0),
        ];
        grid = Grid::eval(&kde, opts.reference, threshold, bbox, opts.grid);
        let clipped = bbox[0] == 0.0 && bbox[1] == 1.0 && bbox[2] == 0.0 && bbox[3] == 1.0;
        if !grid.touches_border() || clipped {
            break;
        }
        margin *= 2.0;
    }

    Ok(CredibleRegion {
        level: opts.level,
        reference: opts.reference,
        n_draws: n_all,
        n_kde_points: n,
        bandwidth,
        threshold,
        area: grid.area_fraction(),
        contours: grid.contours(),
        kde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::sampler::draw_dirichlet;

    fn dirichlet(a: [f64; 3], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| draw_dirichlet(&a, &mut rng)).collect()
    }

    #[test]
    fn usage_errors() {
        let d = dirichlet([2.0; 3], 50, 1);
        assert!(credible_region_simplex(&d, &RegionOptions::default()).is_err());
        let four: Vec<Vec<f64>> = (0..200).map(|_| vec![0.25; 4]).collect();
        let e = credible_region_simplex(&four, &RegionOptions::default()).unwrap_err();
        assert!(e.to_string().contains("marginal"));
    }

    #[test]
    fn point_mass_gives_tiny_region() {
        let p = vec![0.5, 0.3, 0.2];
        let d = vec![p.clone(); 300];
        let r = credible_region_simplex(&d, &RegionOptions::default()).unwrap();
        assert!(r.contains(&p));
        assert!(r.area < 1e-4, "{}", r.area);
        assert!(!r.contains(&[0.45, 0.35, 0.2]));
    }

    #[test]
    fn dirichlet_self_coverage() {
        let fit = dirichlet([2.0; 3], 2000, 3);
        let held = dirichlet([2.0; 3], 2000, 4);
        let r = credible_region_simplex(&fit, &RegionOptions::default()).unwrap();
        let cov = held.iter().filter(|p| r.contains(p)).count() as f64 / 2000.0;
        assert!((0.92..=0.985).contains(&cov), "{cov}");
        assert!(r.area > 0.3 && r.area < 1.0, "{}", r.area);
        assert!(!r.contours.is_empty());
        for c in &r.contours {
            assert_eq!(c.first(), c.last());
            for v in c {
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(v.iter().all(|&x| x >= -1e-12));
            }
        }
    }

    #[test]
    fn contour_encloses_mass() {
        let d = dirichlet([60.0, 30.0, 10.0], 3000, 5);
        let r = credible_region_simplex(&d, &RegionOptions::default()).unwrap();
        assert!(r.contains(&[0.6, 0.3, 0.1]));
        assert!(!r.contains(&[0.2, 0.2, 0.6]));
        assert_eq!(r.contours.len(), 1);
        // region contours for other references give similar areas
        let r0 = credible_region_simplex(&d, &RegionOptions { reference: 0, ..Default::default() }).unwrap();
        assert!((r0.area / r.area - 1.0).abs() < 0.25, "{} {}", r0.area, r.area);
    }
}
