//! Forward sampling: RRT branched expansion of the tree and the parallel-chain baseline.

use log::debug;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{ChebyshevBasis, ValueModel};
use crate::error::{Error, Result};
use crate::problem::SocProblem;
use crate::rng::{Purpose, Streams};
use crate::tree::{BranchTree, EdgeData, NodeId};

/// Samples farther than this many ROI half-widths from the ROI centre count as diverged
/// and are redrawn.
pub const ESCAPE_RADIUS: f64 = 10.0;
/// Draws per node before a forward pass gives up on a diverging sample.
pub const MAX_ATTEMPTS: usize = 1000;

/// How the forward pass builds the tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Branched RRT sampling with erosion between iterations.
    #[default]
    #[serde(alias = "rrt_branched")]
    Rrt,
    /// Independent chains resampled from scratch each iteration.
    #[serde(alias = "parallel_baseline")]
    Parallel,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rrt" | "rrt_branched" => Ok(SamplingMode::Rrt),
            "parallel" | "parallel_baseline" => Ok(SamplingMode::Parallel),
            other => Err(Error::Config(format!("unknown sampling mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::Rrt => "rrt",
            SamplingMode::Parallel => "parallel",
        })
    }
}

/// Axis-aligned region of interest, used for RRT targets, the nearest-neighbour
/// metric and basis normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    min: DVector<f64>,
    max: DVector<f64>,
}

impl Roi {
    pub fn new(min: DVector<f64>, max: DVector<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Dimension {
                what: "roi bounds",
                expected: min.len(),
                actual: max.len(),
            });
        }
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("roi bounds"));
        }
        if min.iter().zip(max.iter()).any(|(lo, hi)| lo >= hi) {
            return Err(Error::Config(
                "roi_min must be strictly below roi_max".into(),
            ));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &DVector<f64> {
        &self.min
    }

    pub fn max(&self) -> &DVector<f64> {
        &self.max
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn half_widths(&self) -> DVector<f64> {
        (&self.max - &self.min) * 0.5
    }

    pub fn basis(&self) -> ChebyshevBasis {
        ChebyshevBasis::from_bounds(&self.min, &self.max).expect("roi is ordered")
    }

    /// Finite and within `ESCAPE_RADIUS` half-widths of the centre in every coordinate.
    pub fn admits(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(j, v)| {
                let centre = 0.5 * (self.min[j] + self.max[j]);
                let half = 0.5 * (self.max[j] - self.min[j]);
                v.is_finite() && (v - centre).abs() <= ESCAPE_RADIUS * half
            })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |j, _| {
            rng.random_range(self.min[j]..self.max[j])
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardConfig {
    pub eps_rrt: f64,
    pub eps_opt: f64,
    pub roi: Roi,
    pub mode: SamplingMode,
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("eps_rrt", self.eps_rrt), ("eps_opt", self.eps_opt)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Node closest to `query` under the ROI-scaled Euclidean metric. Brute force; the
/// first node wins ties.
pub fn nearest<'a, I>(
    nodes: I,
    query: &DVector<f64>,
    half_widths: &DVector<f64>,
) -> Result<(NodeId, f64)>
where
    I: IntoIterator<Item = (NodeId, &'a DVector<f64>)>,
{
    let mut best: Option<(NodeId, f64)> = None;
    for (id, x) in nodes {
        let d2: f64 = x
            .iter()
            .zip(query.iter())
            .zip(half_widths.iter())
            .map(|((a, b), h)| {
                let d = (a - b) / h;
                d * d
            })
            .sum();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((id, d2));
        }
    }
    best.map(|(id, d2)| (id, d2.sqrt()))
        .ok_or(Error::EmptyNodeSet)
}

/// Counters from one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardStats {
    pub added: usize,
    /// Candidate children redrawn because they left the escape region.
    pub rejected: usize,
    pub rrt_parents: usize,
    pub exploit_controls: usize,
}

pub(crate) fn noise_sample<R: Rng + ?Sized>(rng: &mut R, n: usize, dt: f64) -> DVector<f64> {
    let sd = dt.sqrt();
    DVector::from_fn(n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * sd
    })
}

fn random_control<R: Rng + ?Sized>(problem: &SocProblem, rng: &mut R) -> DVector<f64> {
    let set = problem.exploration_controls();
    set[rng.random_range(0..set.len())].clone()
}

/// Target-policy control `mu_i(x; alpha_{i+1})`, or `None` when `alpha_{i+1}` is missing.
pub(crate) fn target_control(
    problem: &SocProblem,
    model: &ValueModel,
    i: usize,
    x: &DVector<f64>,
) -> Result<Option<DVector<f64>>> {
    if !model.is_defined(i + 1) {
        return Ok(None);
    }
    let grad = model.gradient(i + 1, x)?;
    let t = i as f64 * problem.horizon() / model.steps() as f64;
    problem.argmin_policy(t, x, &grad).map(Some)
}

fn step_edge<R: Rng + ?Sized>(
    problem: &SocProblem,
    t: f64,
    dt: f64,
    x: &DVector<f64>,
    u: DVector<f64>,
    rng: &mut R,
) -> (EdgeData, DVector<f64>, f64) {
    let drift = problem.drift(t, x, &u);
    let noise = noise_sample(rng, problem.state_dim(), dt);
    let child = problem.euler_step(t, x, &drift, &noise, dt);
    let cost = problem.running_cost(t, x, &u);
    (
        EdgeData {
            drift,
            noise,
            control: u,
        },
        child,
        cost,
    )
}

/// States of one depth scaled by the ROI half-widths, stored contiguously for the
/// nearest-node scan. Order matches `BranchTree::ids_at`.
struct ScaledLevel {
    ids: Vec<NodeId>,
    coords: Vec<f64>,
}

impl ScaledLevel {
    fn build(tree: &BranchTree, depth: usize, half_widths: &DVector<f64>) -> Self {
        let mut level = ScaledLevel {
            ids: Vec::with_capacity(tree.width(depth)),
            coords: Vec::with_capacity(tree.width(depth) * half_widths.len()),
        };
        for (id, node) in tree.nodes_at(depth) {
            level.push(id, &node.state, half_widths);
        }
        level
    }

    fn push(&mut self, id: NodeId, state: &DVector<f64>, half_widths: &DVector<f64>) {
        self.ids.push(id);
        self.coords
            .extend(state.iter().zip(half_widths.iter()).map(|(x, h)| x / h));
    }

    /// First node with the smallest scaled distance to `query`.
    fn nearest(&self, query: &[f64]) -> Option<NodeId> {
        let n = query.len();
        let mut best = (f64::INFINITY, None);
        for (k, row) in self.coords.chunks_exact(n).enumerate() {
            let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.1.is_none() || d2 < best.0 {
                best = (d2, Some(k));
            }
        }
        best.1.map(|k| self.ids[k])
    }
}

fn choose_parent<R: Rng + ?Sized>(
    tree: &BranchTree,
    i: usize,
    config: &ForwardConfig,
    level: &ScaledLevel,
    half_widths: &DVector<f64>,
    rng: &mut R,
) -> Result<(NodeId, bool)> {
    if config.eps_rrt > rng.random::<f64>() {
        let target = config.roi.sample(rng);
        let query: Vec<f64> = target
            .iter()
            .zip(half_widths.iter())
            .map(|(x, h)| x / h)
            .collect();
        let id = level.nearest(&query).ok_or(Error::EmptyNodeSet)?;
        Ok((id, true))
    } else {
        let width = tree.width(i);
        if width == 0 {
            return Err(Error::EmptyDepth(i));
        }
        let j = rng.random_range(0..width);
        Ok((tree.id_at(i, j).expect("index within width"), false))
    }
}

/// Grow every depth `1..=N` of `tree` to `width` nodes.
///
/// Each sweep walks the depths in order and adds at most one node per depth, so a node
/// added at depth `i` can already serve as a parent at depth `i + 1` in the same sweep.
/// Parents come from the nearest neighbour of a uniform ROI sample with probability
/// `eps_rrt` and are drawn uniformly otherwise; controls come from the target policy
/// with probability `eps_opt` and from the exploration set otherwise.
pub fn forward_pass<R: Rng + ?Sized>(
    tree: &mut BranchTree,
    model: Option<&ValueModel>,
    problem: &SocProblem,
    config: &ForwardConfig,
    width: usize,
    rng: &mut R,
) -> Result<ForwardStats> {
    config.validate()?;
    if config.roi.dim() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "roi",
            expected: problem.state_dim(),
            actual: config.roi.dim(),
        });
    }
    if model.is_none() && config.eps_opt > 0.0 {
        return Err(Error::ModelRequired);
    }
    let steps = tree.steps();
    let dt = tree.dt();
    let half_widths = config.roi.half_widths();
    let mut stats = ForwardStats::default();
    let mut levels: Vec<ScaledLevel> = (0..steps)
        .map(|i| ScaledLevel::build(tree, i, &half_widths))
        .collect();
    loop {
        let mut added = false;
        for i in 0..steps {
            if tree.width(i + 1) >= width || tree.width(i) == 0 {
                continue;
            }
            let t = i as f64 * dt;
            let mut attempt = 0;
            let (parent, edge, child, cost) = loop {
                let (parent, by_rrt) =
                    choose_parent(tree, i, config, &levels[i], &half_widths, rng)?;
                let x = tree.node(parent).expect("live parent").state.clone();
                let exploit = config.eps_opt > rng.random::<f64>();
                let (u, exploited) = match (exploit, model) {
                    (true, Some(model)) => match target_control(problem, model, i, &x)? {
                        Some(u) => (u, true),
                        None => (random_control(problem, rng), false),
                    },
                    _ => (random_control(problem, rng), false),
                };
                let (edge, child, cost) = step_edge(problem, t, dt, &x, u, rng);
                if config.roi.admits(&child) && cost.is_finite() {
                    stats.rrt_parents += by_rrt as usize;
                    stats.exploit_controls += exploited as usize;
                    break (parent, edge, child, cost);
                }
                stats.rejected += 1;
                attempt += 1;
                if attempt >= MAX_ATTEMPTS {
                    return Err(Error::non_finite(format!(
                        "forward sample at depth {}: {MAX_ATTEMPTS} draws diverged",
                        i + 1
                    )));
                }
            };
            let id = tree.add_edge(i, parent, edge, child, cost)?;
            if i + 1 < steps {
                let state = &tree.node(id).expect("just added").state;
                levels[i + 1].push(id, state, &half_widths);
            }
            stats.added += 1;
            added = true;
        }
        if !added {
            break;
        }
    }
    if stats.rejected > 0 {
        debug!("forward pass redrew {} diverged samples", stats.rejected);
    }
    Ok(stats)
}

/// Baseline forward pass: `particles` independent chains from the initial state.
///
/// Each chain follows the target policy where `alpha_{i+1}` exists and random
/// exploration controls elsewhere. Particle `p` draws from its own stream of `streams`.
/// A step that leaves the escape region of `roi` is redrawn with fresh noise.
pub fn parallel_forward_pass(
    problem: &SocProblem,
    model: Option<&ValueModel>,
    roi: &Roi,
    particles: usize,
    steps: usize,
    streams: Streams,
) -> Result<BranchTree> {
    let dt = problem.horizon() / steps as f64;
    let chains: Vec<Vec<(EdgeData, DVector<f64>, f64)>> = (0..particles)
        .into_par_iter()
        .map(|p| {
            let mut rng = streams.rng(Purpose::Parallel, p as u64);
            let mut x = problem.initial_state().clone();
            let mut chain = Vec::with_capacity(steps);
            for i in 0..steps {
                let t = i as f64 * dt;
                let u = match model {
                    Some(m) => target_control(problem, m, i, &x)?,
                    None => None,
                }
                .unwrap_or_else(|| random_control(problem, &mut rng));
                let mut attempt = 1;
                let (edge, child, cost) = loop {
                    let (edge, child, cost) = step_edge(problem, t, dt, &x, u.clone(), &mut rng);
                    if roi.admits(&child) && cost.is_finite() {
                        break (edge, child, cost);
                    }
                    if attempt >= MAX_ATTEMPTS {
                        return Err(Error::non_finite(format!(
                            "parallel chain {p} at depth {}: {MAX_ATTEMPTS} draws diverged",
                            i + 1
                        )));
                    }
                    attempt += 1;
                };
                x = child.clone();
                chain.push((edge, child, cost));
            }
            Ok(chain)
        })
        .collect::<Result<_>>()?;

    let mut tree = BranchTree::new(problem.initial_state().clone(), steps, dt);
    for chain in chains {
        let mut parent = tree.root();
        for (i, (edge, child, cost)) in chain.into_iter().enumerate() {
            parent = tree.add_edge(i, parent, edge, child, cost)?;
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_double_integrator, make_scalar_lqr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn di_config(eps_rrt: f64, eps_opt: f64) -> ForwardConfig {
        ForwardConfig {
            eps_rrt,
            eps_opt,
            roi: Roi::new(v(&[-3.0, -3.0]), v(&[3.0, 3.0])).unwrap(),
            mode: SamplingMode::Rrt,
        }
    }

    #[test]
    fn escape_region() {
        let roi = Roi::new(
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        assert!(roi.admits(&DVector::from_vec(vec![11.0, -10.0])));
        assert!(!roi.admits(&DVector::from_vec(vec![11.5, 0.0])));
        assert!(!roi.admits(&DVector::from_vec(vec![f64::NAN, 0.0])));
        assert!(!roi.admits(&DVector::from_vec(vec![1.0])));
    }

    #[test]
    fn nearest_basic_cases() {
        let hw = v(&[1.0, 1.0]);
        let states = [v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[-2.0, 0.5])];
        let ids: Vec<NodeId> = {
            let mut t = BranchTree::new(v(&[0.0, 0.0]), 1, 0.1);
            let r = t.root();
            states
                .iter()
                .map(|s| {
                    t.add_edge(
                        0,
                        r,
                        EdgeData {
                            drift: v(&[0.0, 0.0]),
                            noise: v(&[0.0, 0.0]),
                            control: v(&[0.0]),
                        },
                        s.clone(),
                        0.0,
                    )
                    .unwrap()
                })
                .collect()
        };
        let nodes = || ids.iter().copied().zip(states.iter());
        let (id, d) = nearest(nodes().take(1), &v(&[5.0, 5.0]), &hw).unwrap();
        assert_eq!(id, ids[0]);
        assert!(d > 0.0);
        let (id, d) = nearest(nodes(), &v(&[-2.0, 0.5]), &hw).unwrap();
        assert_eq!((id, d), (ids[2], 0.0));
        // scaling changes the winner
        let (id, _) = nearest(nodes(), &v(&[0.6, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(id, ids[0]);
        let (id, _) = nearest(nodes(), &v(&[0.6, 0.0]), &v(&[1.0, 100.0])).unwrap();
        assert_eq!(id, ids[1]);
        assert!(matches!(
            nearest(std::iter::empty(), &v(&[0.0, 0.0]), &hw),
            Err(Error::EmptyNodeSet)
        ));
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let roi = Roi::new(v(&[-1.0, -5.0, 0.0]), v(&[1.0, 5.0, 2.0])).unwrap();
        let hw = roi.half_widths();
        let mut t = BranchTree::new(v(&[0.0, 0.0, 0.0]), 1, 0.1);
        let r = t.root();
        for _ in 0..100 {
            let s = roi.sample(&mut rng);
            let e = EdgeData {
                drift: s.clone(),
                noise: s.clone(),
                control: v(&[0.0]),
            };
            t.add_edge(0, r, e, s, 0.0).unwrap();
        }
        let nodes: Vec<(NodeId, DVector<f64>)> =
            t.nodes_at(1).map(|(id, n)| (id, n.state.clone())).collect();
        for _ in 0..100 {
            let q = roi.sample(&mut rng);
            let (id, _) = nearest(nodes.iter().map(|(i, s)| (*i, s)), &q, &hw).unwrap();
            // independent oracle: argmin over explicit scaled distances
            let dists: Vec<f64> = nodes
                .iter()
                .map(|(_, s)| (0..3).map(|j| ((s[j] - q[j]) / hw[j]).powi(2)).sum::<f64>())
                .collect();
            let best = dists
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(id, nodes[best].0);
        }
    }

    #[test]
    fn hand_euler_step() {
        let p = make_double_integrator();
        let dt = 1.0 / 64.0;
        let x = v(&[1.0, 2.0]);
        let u = v(&[-1.0]);
        let k = p.drift(0.0, &x, &u);
        let child = p.euler_step(0.0, &x, &k, &v(&[0.0, 0.0]), dt);
        assert_eq!(child, v(&[1.0 + 2.0 / 64.0, 2.0 - 1.0 / 64.0]));
        let still = p.euler_step(0.0, &x, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), dt);
        assert_eq!(still, x);
    }

    #[test]
    fn forward_pass_fills_every_depth() {
        let p = make_double_integrator();
        let mut tree = BranchTree::new(p.initial_state().clone(), 8, 5.0 / 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats = forward_pass(&mut tree, None, &p, &di_config(1.0, 0.0), 20, &mut rng).unwrap();
        assert_eq!(stats.added, 8 * 20);
        assert_eq!(stats.rrt_parents, 8 * 20);
        assert_eq!(&tree.widths()[1..], &[20; 8]);
        for d in 1..=8 {
            for (_, node) in tree.nodes_at(d) {
                assert_eq!(node.parent.unwrap().depth(), d - 1);
            }
        }
    }

    #[test]
    fn exploitation_without_model_is_rejected() {
        let p = make_double_integrator();
        let mut tree = BranchTree::new(p.initial_state().clone(), 4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            forward_pass(&mut tree, None, &p, &di_config(1.0, 0.5), 4, &mut rng),
            Err(Error::ModelRequired)
        ));
    }

    #[test]
    fn stored_drift_replays() {
        let p = make_double_integrator();
        let mut tree = BranchTree::new(p.initial_state().clone(), 6, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        forward_pass(&mut tree, None, &p, &di_config(0.5, 0.0), 30, &mut rng).unwrap();
        for d in 1..=6 {
            for (_, node) in tree.nodes_at(d) {
                let parent = tree.node(node.parent.unwrap()).unwrap();
                let edge = node.edge.as_ref().unwrap();
                let t = (d - 1) as f64 * 0.1;
                assert_eq!(edge.drift, p.drift(t, &parent.state, &edge.control));
            }
        }
    }

    #[test]
    fn exploitation_uses_target_policy() {
        let (p, _) = make_scalar_lqr();
        let mut model = ValueModel::new(
            ChebyshevBasis::from_bounds(&v(&[-2.0]), &v(&[2.0])).unwrap(),
            4,
        );
        for i in 1..=4 {
            // V = x^2 / 2 -> z = x / 2, x^2 = 4 z^2 = 2 (2 z^2 - 1) + 2
            model.set(i, v(&[1.0, 0.0, 1.0])).unwrap();
        }
        let roi = Roi::new(v(&[-2.0]), v(&[2.0])).unwrap();
        let cfg = ForwardConfig {
            eps_rrt: 0.0,
            eps_opt: 1.0,
            roi,
            mode: SamplingMode::Rrt,
        };
        let mut tree = BranchTree::new(p.initial_state().clone(), 4, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stats = forward_pass(&mut tree, Some(&model), &p, &cfg, 10, &mut rng).unwrap();
        assert_eq!(stats.exploit_controls, stats.added);
        for d in 1..=4 {
            for (_, node) in tree.nodes_at(d) {
                let parent = tree.node(node.parent.unwrap()).unwrap();
                let u = node.edge.as_ref().unwrap().control[0];
                assert!((u + parent.state[0]).abs() < 1e-12, "u = -V'(x) = -x");
            }
        }
    }

    #[test]
    fn scaled_level_matches_nearest() {
        let p = make_double_integrator();
        let cfg = di_config(1.0, 0.0);
        let mut tree = BranchTree::new(p.initial_state().clone(), 3, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        forward_pass(&mut tree, None, &p, &cfg, 200, &mut rng).unwrap();
        let hw = cfg.roi.half_widths();
        let level = ScaledLevel::build(&tree, 2, &hw);
        for _ in 0..200 {
            let q = cfg.roi.sample(&mut rng);
            let (expect, _) =
                nearest(tree.nodes_at(2).map(|(id, n)| (id, &n.state)), &q, &hw).unwrap();
            let scaled: Vec<f64> = q.iter().zip(hw.iter()).map(|(x, h)| x / h).collect();
            assert_eq!(level.nearest(&scaled), Some(expect));
        }
    }

    #[test]
    fn uniform_parent_selection_frequencies() {
        let p = make_double_integrator();
        let parents = 10;
        let draws = 10_000;
        let cfg = di_config(0.0, 0.0);
        let mut tree = BranchTree::new(p.initial_state().clone(), 2, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        forward_pass(&mut tree, None, &p, &cfg, parents, &mut rng).unwrap();
        let ids: Vec<NodeId> = tree.ids_at(1).collect();
        let mut counts = vec![0usize; parents];
        let hw = cfg.roi.half_widths();
        let level = ScaledLevel::build(&tree, 1, &hw);
        for _ in 0..draws {
            let (id, by_rrt) = choose_parent(&tree, 1, &cfg, &level, &hw, &mut rng).unwrap();
            assert!(!by_rrt);
            counts[ids.iter().position(|x| *x == id).unwrap()] += 1;
        }
        let q = 1.0 / parents as f64;
        let expect = draws as f64 * q;
        let sd = (draws as f64 * q * (1.0 - q)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - expect).abs() < 5.0 * sd,
                "{c} vs {expect} ± {sd}"
            );
        }
    }

    #[test]
    fn parallel_increments_are_gaussian() {
        let p = make_double_integrator();
        let m = 2000;
        let steps = 4;
        let dt = p.horizon() / steps as f64;
        let tree = parallel_forward_pass(
            &p,
            None,
            &di_config(0.0, 0.0).roi,
            m,
            steps,
            Streams::new(3),
        )
        .unwrap();
        for d in 1..=steps {
            let w: Vec<f64> = tree
                .nodes_at(d)
                .flat_map(|(_, n)| {
                    n.edge
                        .as_ref()
                        .unwrap()
                        .noise
                        .iter()
                        .copied()
                        .collect::<Vec<_>>()
                })
                .collect();
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 5.0 * (dt / n).sqrt(), "mean {mean}");
            // var of the sample variance is about 2 dt^2 / n
            assert!(
                (var - dt).abs() < 5.0 * dt * (2.0 / n).sqrt(),
                "var {var} vs {dt}"
            );
        }
    }

    #[test]
    fn forward_pass_is_deterministic() {
        let p = make_double_integrator();
        let run = || {
            let mut tree = BranchTree::new(p.initial_state().clone(), 10, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            forward_pass(&mut tree, None, &p, &di_config(0.7, 0.0), 40, &mut rng).unwrap();
            let mut buf = Vec::new();
            tree.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parallel_chains_have_no_branching() {
        let p = make_double_integrator();
        let tree = parallel_forward_pass(&p, None, &di_config(0.0, 0.0).roi, 3, 2, Streams::new(5))
            .unwrap();
        assert_eq!(tree.widths(), vec![1, 3, 3]);
        assert_eq!(tree.node(tree.root()).unwrap().child_count, 3);
        for d in 1..=2 {
            for (_, n) in tree.nodes_at(d) {
                assert!(n.child_count <= 1);
            }
        }
        let leaves: Vec<_> = tree.ids_at(2).collect();
        let mut firsts: Vec<_> = leaves.iter().map(|l| tree.path(*l).unwrap()[1]).collect();
        firsts.dedup();
        assert_eq!(firsts.len(), 3, "paths are disjoint below the root");
        let again =
            parallel_forward_pass(&p, None, &di_config(0.0, 0.0).roi, 3, 2, Streams::new(5))
                .unwrap();
        for d in 0..=2 {
            let a: Vec<_> = tree.nodes_at(d).map(|(_, n)| n.state.clone()).collect();
            let b: Vec<_> = again.nodes_at(d).map(|(_, n)| n.state.clone()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn roi_validation() {
        assert!(Roi::new(v(&[0.0]), v(&[0.0])).is_err());
        assert!(Roi::new(v(&[0.0, 1.0]), v(&[1.0])).is_err());
        let cfg = ForwardConfig {
            eps_rrt: 1.5,
            ..di_config(0.0, 0.0)
        };
        assert!(cfg.validate().is_err());
        assert_eq!(
            "parallel_baseline".parse::<SamplingMode>().unwrap(),
            SamplingMode::Parallel
        );
        assert_eq!("rrt".parse::<SamplingMode>().unwrap(), SamplingMode::Rrt);
    }
}
