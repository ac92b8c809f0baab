//! Nearest-neighbour regression of rollout cost, used only to partition the
//! state box for binned verification.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::rollout::batch_cost;
use crate::sampling::uniform_states;
use crate::valuefn::ValueFunctionHandle;

pub const DEFAULT_NEIGHBOURS: usize = 16;

/// Substream reserved for predictor training draws.
const TRAINING_TAG: u64 = 0x7EA1_0000;

/// Points per kd-tree leaf.
const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct CostPredictor {
    points: Vec<Vec<f64>>,
    costs: Vec<f64>,
    k: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    periodic: Vec<bool>,
    tree: KdTree,
}

/// Exact nearest-neighbour index over box-normalized coordinates. Used only
/// for pruning; reported distances always come from `distance2`.
#[derive(Clone, Debug, PartialEq)]
struct KdTree {
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// `order[start..end]` for leaves.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

impl KdTree {
    fn build(unit: &[Vec<f64>]) -> Self {
        let mut tree = KdTree {
            order: (0..unit.len()).collect(),
            nodes: Vec::new(),
        };
        tree.split(unit, 0, unit.len());
        tree
    }

    fn split(&mut self, unit: &[Vec<f64>], start: usize, end: usize) -> usize {
        let dim = unit[0].len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for d in 0..dim {
                lo[d] = lo[d].min(unit[i][d]);
                hi[d] = hi[d].max(unit[i][d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
            let mid = start + (end - start) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                unit[a][axis].total_cmp(&unit[b][axis]).then(a.cmp(&b))
            });
            let left = self.split(unit, start, mid);
            let right = self.split(unit, mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }
}

impl CostPredictor {
    /// Predictor over `(state, cost)` pairs living in `system`'s box.
    pub fn from_points(system: &SystemModel, points: Vec<Vec<f64>>, costs: Vec<f64>, k: usize) -> Result<Self> {
        if points.is_empty() || points.len() != costs.len() {
            return Err(Error::InvalidParameter(format!(
                "predictor needs matching, non-empty points and costs ({} vs {})",
                points.len(),
                costs.len()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("predictor needs k ≥ 1".into()));
        }
        let n = system.state_dim();
        if let Some(bad) = points.iter().find(|p| p.len() != n) {
            return Err(Error::InvalidParameter(format!(
                "predictor point has {} coordinates, expected {n}",
                bad.len()
            )));
        }
        if costs.iter().any(|c| c.is_nan()) {
            return Err(Error::InvalidParameter("predictor costs contain NaN".into()));
        }
        let lower = system.state_lower().to_vec();
        let upper = system.state_upper().to_vec();
        let unit: Vec<Vec<f64>> = points
            .iter()
            .map(|p| (0..n).map(|d| (p[d] - lower[d]) / (upper[d] - lower[d])).collect())
            .collect();
        Ok(Self {
            tree: KdTree::build(&unit),
            points,
            costs,
            k,
            lower,
            upper,
            periodic: (0..n).map(|d| system.is_periodic(d)).collect(),
        })
    }

    /// Trains on `samples` uniform states labelled with their rollout cost.
    pub fn train(system: &SystemModel, vf: &ValueFunctionHandle, samples: usize, seed: u64, dt: f64) -> Result<Self> {
        let rng = CounterRng::new(seed).substream(TRAINING_TAG);
        let points = uniform_states(system, &rng, samples);
        let costs = batch_cost(system, vf, &points, dt)?
            .iter()
            .map(|c| c.j)
            .collect();
        Self::from_points(system, points, costs, DEFAULT_NEIGHBOURS)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn neighbours(&self) -> usize {
        self.k
    }

    fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..a.len() {
            let w = self.upper[d] - self.lower[d];
            let mut z = (a[d] - b[d]).abs() / w;
            if self.periodic[d] && z > 0.5 {
                z = 1.0 - z;
            }
            s += z * z;
        }
        s
    }

    /// Lower bound on the squared normalized distance from `q` to a node box.
    fn box_gap2(&self, q: &[f64], node: &Node) -> f64 {
        let mut s = 0.0;
        for d in 0..q.len() {
            let (lo, hi) = (node.lo[d], node.hi[d]);
            let gap = if q[d] >= lo && q[d] <= hi {
                0.0
            } else if self.periodic[d] {
                let circ = |z: f64| {
                    let z = z.abs();
                    z.min(1.0 - z).max(0.0)
                };
                circ(q[d] - lo).min(circ(q[d] - hi))
            } else {
                (lo - q[d]).max(q[d] - hi)
            };
            s += gap * gap;
        }
        s
    }

    /// Mean cost over the `k` nearest training points. Ties in distance go to
    /// the earlier training point.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let k = self.k.min(self.points.len());
        let q: Vec<f64> = (0..x.len())
            .map(|d| (x[d] - self.lower[d]) / (self.upper[d] - self.lower[d]))
            .collect();
        // sorted by (distance², index), at most k entries
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.tree.nodes[id];
            // slack keeps boxes whose bound is within rounding of the k-th distance
            if best.len() == k && self.box_gap2(&q, node) > best[k - 1].0 + 1e-9 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    let (gl, gr) = (self.box_gap2(&q, &self.tree.nodes[l]), self.box_gap2(&q, &self.tree.nodes[r]));
                    // visit the nearer child first
                    if gl <= gr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for &i in &self.tree.order[node.start..node.end] {
                        let cand = (self.distance2(x, &self.points[i]), i);
                        if best.len() == k && !lex_less(cand, best[k - 1]) {
                            continue;
                        }
                        let at = best.partition_point(|&b| lex_less(b, cand));
                        best.insert(at, cand);
                        best.truncate(k);
                    }
                }
            }
        }
        best.iter().map(|&(_, i)| self.costs[i]).sum::<f64>() / best.len() as f64
    }

    /// Brute-force reference for [`Self::predict`].
    #[cfg(test)]
    fn predict_scan(&self, x: &[f64]) -> f64 {
        let k = self.k.min(self.points.len());
        let mut all: Vec<(f64, usize)> = self.points.iter().enumerate().map(|(i, p)| (self.distance2(x, p), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all[..k].iter().map(|&(_, i)| self.costs[i]).sum::<f64>() / k as f64
    }

    /// Loads a scored-points CSV: a header line, then `x0,…,x{n-1},cost` rows.
    pub fn load_csv(system: &SystemModel, path: impl AsRef<Path>, k: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let n = system.state_dim();
        let mut points = Vec::new();
        let mut costs = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = fields.map_err(|e| Error::malformed(path, format!("line {}: {e}", line_no + 1)))?;
            if fields.len() != n + 1 {
                return Err(Error::malformed(
                    path,
                    format!("line {}: expected {} fields, found {}", line_no + 1, n + 1, fields.len()),
                ));
            }
            costs.push(fields[n]);
            points.push(fields[..n].to_vec());
        }
        Self::from_points(system, points, costs, k).map_err(|e| Error::malformed(path, e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let n = self.lower.len();
        let mut out = String::new();
        let header: Vec<String> = (0..n).map(|d| format!("x{d}")).chain(["cost".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (p, c) in self.points.iter().zip(&self.costs) {
            for v in p {
                write!(out, "{v:?},").unwrap();
            }
            writeln!(out, "{c:?}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn lex_less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_search_matches_the_scan() {
        let sys = line();
        let rng = CounterRng::new(4);
        let pts = uniform_states(&sys, &rng.substream(0), 3000);
        let costs: Vec<f64> = (0..pts.len()).map(|i| rng.substream(1).draw(i as u64).next_f64()).collect();
        // coarse duplicates exercise distance ties
        let (lo, hi) = (sys.state_lower(), sys.state_upper());
        let mut snapped: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| (0..3).map(|d| ((p[d] * 4.0).round() / 4.0).clamp(lo[d], hi[d])).collect())
            .collect();
        snapped.truncate(500);
        for (points, k) in [(pts.clone(), 16), (pts, 1), (snapped.clone(), 16), (snapped, 7)] {
            let c = costs[..points.len()].to_vec();
            let p = CostPredictor::from_points(&sys, points, c, k).unwrap();
            for x in uniform_states(&sys, &rng.substream(2), 2000) {
                assert_eq!(p.predict(&x).to_bits(), p.predict_scan(&x).to_bits(), "{x:?}");
            }
        }
    }

    fn line() -> SystemModel {
        SystemModel::dubins3d(0.6, -1.1, 1.1, 0.25).unwrap()
    }

    #[test]
    fn averages_nearest_points() {
        let sys = line();
        let pts = vec![vec![0.0, 0.0, 0.0], vec![0.1, 0.0, 0.0], vec![0.9, 0.9, 0.0]];
        let p = CostPredictor::from_points(&sys, pts, vec![1.0, 3.0, 100.0], 2).unwrap();
        assert_eq!(p.predict(&[0.05, 0.0, 0.0]), 2.0);
        let one = CostPredictor::from_points(&sys, vec![vec![0.0; 3]], vec![4.0], 16).unwrap();
        assert_eq!(one.predict(&[0.5, 0.5, 0.5]), 4.0);
    }

    #[test]
    fn heading_distance_wraps() {
        let sys = line();
        let pi = std::f64::consts::PI;
        let pts = vec![vec![0.0, 0.0, -pi + 0.01], vec![0.0, 0.0, 0.5]];
        let p = CostPredictor::from_points(&sys, pts, vec![1.0, 2.0], 1).unwrap();
        assert_eq!(p.predict(&[0.0, 0.0, pi - 0.01]), 1.0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let sys = line();
        let p = CostPredictor::from_points(&sys, vec![vec![0.1, -0.2, 0.3], vec![0.4, 0.5, -0.6]], vec![0.7, -0.8], 16)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.save_csv(&path).unwrap();
        assert_eq!(CostPredictor::load_csv(&sys, &path, 16).unwrap(), p);
        std::fs::write(&path, "x0,x1,x2,cost\n1,2\n").unwrap();
        assert!(matches!(CostPredictor::load_csv(&sys, &path, 16), Err(Error::Malformed { .. })));
        assert!(CostPredictor::from_points(&sys, vec![], vec![], 16).is_err());
    }
}
