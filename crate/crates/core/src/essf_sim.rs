//! Event-driven simulation of the block genealogy on the homogeneous clock,
//! and the per-block time change to a self-similar index.
//!
//! A live block of `b` integers proposes events at rate `b·c + |Λ|`. An
//! erosion proposal detaches a uniform member as a frozen singleton (or
//! freezes the block when `b = 1`); an atom proposal draws a paintbox over the
//! members. A one-block paintbox outcome is a mark jump (or a freeze when its
//! mark is 0, and nothing at all when its mark is 1); any other outcome
//! splits the block. Between events the log mark follows the effective drift
//! plus a Brownian part.
//!
//! Besides the restriction to `{1..n}`, the same engine runs a tracked
//! particle system ([`simulate_tracked`]) in which every positive-mark block
//! keeps exactly `n` tracked integers, or infinitely many. Its additive
//! statistic grows at the level-n cumulant rate, which the martingale
//! diagnostics rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dislocation::{
    effective_drift, erosion_atom, sample_paintbox, Characteristics,
};
use crate::error::{arg, precondition, EssfError, Result};
use crate::levy_mark::{
    evolve_mark_until, lamperti_integral_path, lamperti_inverse, MarkPathSegment,
};
use crate::marked_partition::MarkedPartition;

/// RNG for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Dislocated,
    Frozen,
    AliveAtHorizon,
}

/// One block of the genealogy.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Sorted 0-based integer indices; empty for tracked particles.
    pub members: Vec<usize>,
    pub birth: f64,
    /// Equal to the horizon for blocks alive at the horizon.
    pub death: f64,
    pub initial_mark: f64,
    pub segments: Vec<MarkPathSegment>,
    pub termination: Termination,
    pub children: Vec<usize>,
}

impl BlockNode {
    /// True when this node is the block holding its members at time `t`.
    pub fn represents(&self, t: f64) -> bool {
        self.birth <= t && (t < self.death || self.termination != Termination::Dislocated)
    }

    /// Log mark at `t` (right-continuous), `None` for a frozen block or when a
    /// diffusive path was not sampled at `t`. Assumes `represents(t)`.
    pub fn log_mark_at(&self, t: f64) -> Option<f64> {
        if self.termination == Termination::Frozen && t >= self.death {
            return None;
        }
        let i = self
            .segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len().checked_sub(1)?);
        self.segments[i].log_mark_at(t)
    }

    /// Mark at `t`, with frozen blocks at 0.
    pub fn mark_at(&self, t: f64) -> Option<f64> {
        if self.termination == Termination::Frozen && t >= self.death {
            return Some(0.0);
        }
        self.log_mark_at(t).map(f64::exp)
    }

    fn log_mark_interpolated(&self, t: f64) -> Option<f64> {
        let last = self.segments.len().checked_sub(1)?;
        let i = self.segments.partition_point(|s| s.t_end <= t).min(last);
        self.segments[i].log_mark_interpolated(t)
    }
}

/// Simulation horizon, declared query times and numerical settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    /// Sorted homogeneous times at which diffusive marks are sampled.
    pub query_times: Vec<f64>,
    /// Trapezoid grid for diffusive marks; needed for time changes when `β > 0`.
    pub grid_step: Option<f64>,
    pub initial_mark: f64,
    /// Abort with [`EssfError::Limit`] beyond this many nodes.
    pub max_nodes: usize,
}

impl SimOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            query_times: Vec::new(),
            grid_step: None,
            initial_mark: 1.0,
            max_nodes: 1_000_000,
        }
    }

    pub fn with_query_times(mut self, times: Vec<f64>) -> Self {
        self.query_times = times;
        self
    }

    pub fn with_grid_step(mut self, h: Option<f64>) -> Self {
        self.grid_step = h;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return arg(format!("horizon {} must be finite and > 0", self.horizon));
        }
        if self
            .query_times
            .iter()
            .any(|&q| !(0.0..=self.horizon).contains(&q))
        {
            return arg("query times must lie in [0, horizon]");
        }
        if self.query_times.windows(2).any(|w| w[0] >= w[1]) {
            return arg("query times must be strictly increasing");
        }
        if let Some(h) = self.grid_step {
            if !(h > 0.0 && h.is_finite()) {
                return arg(format!("grid step {h} must be finite and > 0"));
            }
        }
        if !(self.initial_mark >= 0.0 && self.initial_mark.is_finite()) {
            return arg("initial mark must be finite and >= 0");
        }
        Ok(())
    }
}

/// Outcome of one Poisson proposal on a block.
#[derive(Debug, Clone, PartialEq)]
enum BlockEvent {
    Null,
    /// Additive jump of the log mark.
    Jump(f64),
    Freeze,
    /// Dislocation given as a partition of the block's positions.
    Split(MarkedPartition),
    /// Dislocation of an untracked block into children with these factors.
    SplitFactors(Vec<f64>),
}

fn classify_mark(v: f64) -> BlockEvent {
    if v == 0.0 {
        BlockEvent::Freeze
    } else if v == 1.0 {
        BlockEvent::Null
    } else {
        BlockEvent::Jump(v.ln())
    }
}

fn classify(x: MarkedPartition) -> BlockEvent {
    if x.is_single_block() {
        classify_mark(x.marks()[0])
    } else {
        BlockEvent::Split(x)
    }
}

struct Kernel<'a> {
    ch: &'a Characteristics,
    drift: f64,
}

impl Kernel<'_> {
    /// Proposal rate of a block tracking `size` integers (`None` = all).
    fn rate(&self, size: Option<usize>) -> f64 {
        size.map_or(0.0, |b| b as f64 * self.ch.c()) + self.ch.lambda().total_mass()
    }

    fn propose<R: Rng + ?Sized>(&self, size: Option<usize>, rng: &mut R) -> BlockEvent {
        let erosion = size.map_or(0.0, |b| b as f64 * self.ch.c());
        let total = erosion + self.ch.lambda().total_mass();
        if rng.random::<f64>() * total < erosion {
            let b = size.expect("erosion needs a finite block");
            let i = rng.random_range(0..b);
            return if b == 1 {
                BlockEvent::Freeze
            } else {
                BlockEvent::Split(erosion_atom(b, i).expect("index in range"))
            };
        }
        let lambda = self.ch.lambda();
        let z = &lambda.atoms()[lambda.pick_atom(rng)].1;
        match size {
            Some(b) => classify(sample_paintbox(z, b, rng)),
            None => match z.pairs() {
                [] => BlockEvent::Freeze,
                [(_, v)] => classify_mark(*v),
                pairs => BlockEvent::SplitFactors(pairs.iter().map(|p| p.1).collect()),
            },
        }
    }
}

enum Ending {
    Horizon,
    Frozen(f64),
    Split(f64, BlockEvent),
}

/// Runs one block from `(t0, l0)` until it freezes, splits, or meets the horizon.
fn live_block<R: Rng + ?Sized>(
    kernel: &Kernel<'_>,
    size: Option<usize>,
    t0: f64,
    l0: f64,
    opts: &SimOptions,
    rng: &mut R,
) -> (Vec<MarkPathSegment>, Ending) {
    let rate = kernel.rate(size);
    let clock = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
    let beta = kernel.ch.beta();
    let mut segments = Vec::new();
    let mut current: Option<MarkPathSegment> = None;
    let (mut t, mut l) = (t0, l0);
    loop {
        let t_next = match &clock {
            Some(e) => t + e.sample(rng),
            None => f64::INFINITY,
        };
        let reached = t_next >= opts.horizon;
        let t_end = if reached { opts.horizon } else { t_next };
        let piece = evolve_mark_until(
            (t, l),
            t_end,
            kernel.drift,
            beta,
            rng,
            &opts.query_times,
            opts.grid_step,
        );
        l = piece.log_mark_end;
        t = t_end;
        match &mut current {
            Some(seg) => seg.extend(piece),
            None => current = Some(piece),
        }
        if reached {
            segments.extend(current);
            return (segments, Ending::Horizon);
        }
        match kernel.propose(size, rng) {
            BlockEvent::Null => {}
            BlockEvent::Jump(y) => {
                segments.extend(current.take());
                l += y;
            }
            BlockEvent::Freeze => {
                segments.extend(current);
                return (segments, Ending::Frozen(t));
            }
            split => {
                segments.extend(current);
                return (segments, Ending::Split(t, split));
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Mode {
    /// Restriction to the first `n` integers.
    Restricted,
    /// Every positive-mark block tracks `n` integers.
    Tracked(usize),
    /// Untracked blocks; only marks matter.
    Unbounded,
}

fn grow<R: Rng + ?Sized>(
    ch: &Characteristics,
    n: usize,
    mode: Mode,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<Vec<BlockNode>> {
    opts.validate()?;
    let kernel = Kernel {
        ch,
        drift: effective_drift(ch),
    };
    let root_members = match mode {
        Mode::Restricted => (0..n).collect(),
        _ => Vec::new(),
    };
    let mut nodes = vec![BlockNode {
        id: 0,
        parent: None,
        members: root_members,
        birth: 0.0,
        death: 0.0,
        initial_mark: opts.initial_mark,
        segments: Vec::new(),
        termination: Termination::Frozen,
        children: Vec::new(),
    }];
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let node = &nodes[id];
        let birth = node.birth;
        if node.initial_mark == 0.0 {
            nodes[id].death = birth;
            continue;
        }
        let size = match mode {
            Mode::Restricted => Some(node.members.len()),
            Mode::Tracked(n) => Some(n),
            Mode::Unbounded => None,
        };
        let (segments, ending) = live_block(&kernel, size, birth, node.initial_mark.ln(), opts, rng);
        let last_log = segments.last().map_or(node.initial_mark.ln(), |s| s.log_mark_end);
        let parent_members = node.members.clone();
        let node = &mut nodes[id];
        node.segments = segments;
        let (t, factors_members): (f64, Vec<(f64, Vec<usize>)>) = match ending {
            Ending::Horizon => {
                node.death = opts.horizon;
                node.termination = Termination::AliveAtHorizon;
                continue;
            }
            Ending::Frozen(t) => {
                node.death = t;
                node.termination = Termination::Frozen;
                continue;
            }
            Ending::Split(t, BlockEvent::Split(x)) => {
                let blocks = x.blocks();
                let members = blocks
                    .into_iter()
                    .zip(x.marks())
                    .map(|(positions, &v)| {
                        let m = match mode {
                            Mode::Restricted => {
                                positions.iter().map(|&p| parent_members[p]).collect()
                            }
                            _ => Vec::new(),
                        };
                        (v, m)
                    })
                    .collect();
                (t, members)
            }
            Ending::Split(t, BlockEvent::SplitFactors(f)) => {
                (t, f.into_iter().map(|v| (v, Vec::new())).collect())
            }
            Ending::Split(..) => unreachable!("only splits end a block this way"),
        };
        node.death = t;
        node.termination = Termination::Dislocated;
        let first_child = nodes.len();
        if first_child + factors_members.len() > opts.max_nodes {
            return Err(EssfError::Limit(format!(
                "more than {} nodes; lower the horizon or max_nodes",
                opts.max_nodes
            )));
        }
        for (k, (factor, members)) in factors_members.into_iter().enumerate() {
            let initial_mark = if factor == 0.0 {
                0.0
            } else {
                (last_log + factor.ln()).exp()
            };
            nodes.push(BlockNode {
                id: first_child + k,
                parent: Some(id),
                members,
                birth: t,
                death: t,
                initial_mark,
                segments: Vec::new(),
                termination: Termination::Frozen,
                children: Vec::new(),
            });
        }
        let last = nodes.len();
        nodes[id].children = (first_child..last).collect();
        stack.extend((first_child..last).rev());
    }
    Ok(nodes)
}

/// A simulated genealogy of the restriction to `{1..n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenealogyTree {
    pub level: usize,
    pub horizon: f64,
    pub characteristics: Characteristics,
    pub query_times: Vec<f64>,
    pub nodes: Vec<BlockNode>,
    /// `(seed, replicate)` when built through [`simulate_replicate`].
    pub seed: Option<(u64, u64)>,
}

/// Simulates the restriction to `{1..n}` on the homogeneous clock.
pub fn simulate_homogeneous<R: Rng + ?Sized>(
    ch: &Characteristics,
    n: usize,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<GenealogyTree> {
    if ch.alpha() != 0.0 {
        return precondition("simulate with alpha = 0 and apply time_change afterwards");
    }
    if n == 0 {
        return arg("level must be >= 1");
    }
    let nodes = grow(ch, n, Mode::Restricted, opts, rng)?;
    Ok(GenealogyTree {
        level: n,
        horizon: opts.horizon,
        characteristics: ch.clone(),
        query_times: opts.query_times.clone(),
        nodes,
        seed: None,
    })
}

/// [`simulate_homogeneous`] driven by the stream of replicate `index`.
pub fn simulate_replicate(
    ch: &Characteristics,
    n: usize,
    opts: &SimOptions,
    seed: u64,
    index: u64,
) -> Result<GenealogyTree> {
    let mut rng = replicate_rng(seed, index);
    let mut tree = simulate_homogeneous(ch, n, opts, &mut rng)?;
    tree.seed = Some((seed, index));
    Ok(tree)
}

impl GenealogyTree {
    pub fn root(&self) -> &BlockNode {
        &self.nodes[0]
    }

    /// Time of the first event visible at this level, if before the horizon.
    pub fn first_event_time(&self) -> Option<f64> {
        (self.root().termination != Termination::AliveAtHorizon).then(|| self.root().death)
    }

    /// Whether the first event of this tree changes the restriction to
    /// `{1..m}`, i.e. is not a pure mark change of the block holding `{1..m}`.
    pub fn first_event_visible_at(&self, m: usize) -> Option<bool> {
        let root = self.root();
        match root.termination {
            Termination::AliveAtHorizon => None,
            Termination::Frozen => Some(true),
            Termination::Dislocated => Some(!root.children.iter().any(|&c| {
                let child = &self.nodes[c];
                child.initial_mark > 0.0
                    && child.members.len() >= m
                    && child.members[..m].iter().copied().eq(0..m)
            })),
        }
    }

    pub fn is_diffusive(&self) -> bool {
        self.characteristics.beta() > 0.0
    }

    /// Times at which [`snapshot`](Self::snapshot) is defined for diffusive
    /// trees: declared query times and event times.
    fn is_queryable(&self, t: f64) -> bool {
        if !self.is_diffusive() || t == 0.0 || self.query_times.binary_search_by(|q| q.total_cmp(&t)).is_ok() {
            return true;
        }
        self.nodes.iter().any(|n| {
            n.birth == t
                || n.death == t
                || n.segments.iter().any(|s| s.t_start == t || s.t_end == t)
        })
    }

    /// The marked partition of `{1..n}` at homogeneous time `t`.
    pub fn snapshot(&self, t: f64) -> Result<MarkedPartition> {
        if !(0.0..=self.horizon).contains(&t) {
            return arg(format!("time {t} is outside [0, {}]", self.horizon));
        }
        if !self.is_queryable(t) {
            return arg(format!("time {t} was not declared as a query time"));
        }
        let mut labels = vec![0usize; self.level];
        let mut marks = Vec::new();
        for node in self.nodes.iter().filter(|n| n.represents(t)) {
            let v = node
                .mark_at(t)
                .ok_or_else(|| EssfError::Argument(format!("mark at {t} was not sampled")))?;
            for &i in &node.members {
                labels[i] = marks.len();
            }
            marks.push(v);
        }
        MarkedPartition::from_labels(&labels, &marks)
    }

    /// Every homogeneous time at which some block is born, dies or jumps.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .nodes
            .iter()
            .flat_map(|n| {
                let seg = n.segments.iter().flat_map(|s| [s.t_start, s.t_end]);
                [n.birth, n.death].into_iter().chain(seg)
            })
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// `sup_t e^{−κt}·S_θ(X(t))` over the simulated path. Needs `β = 0`, in
    /// which case every term is monotone between events.
    pub fn sup_normalized_additive(&self, theta: f64, kappa: f64) -> Result<f64> {
        if self.is_diffusive() {
            return precondition("the supremum is only exact without a Gaussian part");
        }
        let times = self.event_times();
        let mut best = f64::NEG_INFINITY;
        for w in times.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let mid = 0.5 * (a + b);
            let (mut sa, mut sb) = (0.0, 0.0);
            for node in self.nodes.iter().filter(|n| n.represents(mid)) {
                if let Some(seg) = node.segments.iter().find(|s| s.t_start <= mid && mid < s.t_end) {
                    let at = |t: f64| seg.log_mark_start + seg.drift * (t - seg.t_start);
                    sa += (theta * at(a)).exp();
                    sb += (theta * at(b)).exp();
                }
            }
            best = best.max(sa * (-kappa * a).exp()).max(sb * (-kappa * b).exp());
        }
        if best == f64::NEG_INFINITY {
            best = crate::diagnostics::additive_statistic(&self.snapshot(0.0)?, theta);
        }
        Ok(best)
    }
}

/// Homogeneous-to-self-similar clock conversion for a whole tree.
#[derive(Debug, Clone)]
pub struct TimeChange<'a> {
    tree: &'a GenealogyTree,
    alpha: f64,
    ss_birth: Vec<f64>,
    ss_death: Vec<f64>,
}

/// Attaches self-similar birth and death times with index `alpha` to `tree`.
/// Each block's clock runs at rate `V^{−α}`.
pub fn time_change(tree: &GenealogyTree, alpha: f64) -> Result<TimeChange<'_>> {
    let mut ss_birth = vec![0.0; tree.nodes.len()];
    let mut ss_death = vec![0.0; tree.nodes.len()];
    for node in &tree.nodes {
        if node.segments.iter().any(|s| s.is_diffusive() && s.grid_step.is_none()) && alpha != 0.0 {
            return precondition("time change with beta > 0 needs a grid step");
        }
        let b = node.parent.map_or(0.0, |p| ss_death[p]);
        ss_birth[node.id] = b;
        ss_death[node.id] = b + lamperti_integral_path(&node.segments, -alpha)?;
    }
    Ok(TimeChange {
        tree,
        alpha,
        ss_birth,
        ss_death,
    })
}

impl TimeChange<'_> {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn birth(&self, id: usize) -> f64 {
        self.ss_birth[id]
    }

    pub fn death(&self, id: usize) -> f64 {
        self.ss_death[id]
    }

    /// Homogeneous time at which block `id` reaches self-similar time `t`.
    pub fn homogeneous_time(&self, id: usize, t: f64) -> Result<f64> {
        let node = &self.tree.nodes[id];
        let u = lamperti_inverse(&node.segments, -self.alpha, (t - self.ss_birth[id]).max(0.0))?;
        Ok(u.min(node.death).max(node.birth))
    }

    /// The marked partition at self-similar time `t`.
    pub fn snapshot(&self, t: f64) -> Result<MarkedPartition> {
        if !(t >= 0.0) {
            return arg(format!("time {t} must be >= 0"));
        }
        let tree = self.tree;
        let mut labels = vec![0usize; tree.level];
        let mut marks = Vec::new();
        for node in &tree.nodes {
            let (b, d) = (self.ss_birth[node.id], self.ss_death[node.id]);
            let alive = b <= t && (t < d || node.termination != Termination::Dislocated);
            if !alive {
                continue;
            }
            if node.termination == Termination::AliveAtHorizon && t > d {
                return precondition(format!(
                    "self-similar time {t} lies beyond the simulated horizon"
                ));
            }
            let v = if node.termination == Termination::Frozen && t >= d {
                0.0
            } else {
                let u = self.homogeneous_time(node.id, t)?;
                node.log_mark_interpolated(u).map_or(0.0, f64::exp)
            };
            for &i in &node.members {
                labels[i] = marks.len();
            }
            marks.push(v);
        }
        MarkedPartition::from_labels(&labels, &marks)
    }
}

/// Self-similar absorption time of a tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Absorption {
    Absorbed(f64),
    NotAbsorbedByHorizon,
}

/// Latest self-similar freezing time when every block froze before the horizon.
pub fn absorption_time(tree: &GenealogyTree, alpha: f64) -> Result<Absorption> {
    if tree
        .nodes
        .iter()
        .any(|n| n.termination == Termination::AliveAtHorizon)
    {
        return Ok(Absorption::NotAbsorbedByHorizon);
    }
    let tc = time_change(tree, alpha)?;
    let t = tree
        .nodes
        .iter()
        .filter(|n| n.termination == Termination::Frozen)
        .map(|n| tc.death(n.id))
        .fold(0.0, f64::max);
    Ok(Absorption::Absorbed(t))
}

/// Total self-similar length of the genealogy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TotalLength {
    Finite(f64),
    InfiniteByHorizon,
}

/// `Σ_blocks ∫ V(s)^{−α} ds` over the homogeneous lifespans.
pub fn total_length(tree: &GenealogyTree, alpha: f64) -> Result<TotalLength> {
    if tree
        .nodes
        .iter()
        .any(|n| n.termination == Termination::AliveAtHorizon)
    {
        return Ok(TotalLength::InfiniteByHorizon);
    }
    let mut total = 0.0;
    for node in &tree.nodes {
        total += lamperti_integral_path(&node.segments, -alpha)?;
    }
    Ok(TotalLength::Finite(total))
}

/// Level of a tracked particle system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Finite(usize),
    Infinite,
}

/// Genealogy of a tracked particle system; nodes carry no members.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPopulation {
    pub level: Level,
    pub horizon: f64,
    pub nodes: Vec<BlockNode>,
}

/// Simulates marks only, with every positive-mark block tracking `level`
/// integers: at a finite level this is the block holding `{1..n}` with its
/// restriction re-seeded after each split, at the infinite level each block
/// splits into one child per positive-size pair of the chosen atom.
pub fn simulate_tracked<R: Rng + ?Sized>(
    ch: &Characteristics,
    level: Level,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<TrackedPopulation> {
    if ch.alpha() != 0.0 {
        return precondition("simulate with alpha = 0");
    }
    let mode = match level {
        Level::Finite(0) => return arg("level must be >= 1"),
        Level::Finite(n) => Mode::Tracked(n),
        Level::Infinite => Mode::Unbounded,
    };
    let nodes = grow(ch, 0, mode, opts, rng)?;
    Ok(TrackedPopulation {
        level,
        horizon: opts.horizon,
        nodes,
    })
}

impl TrackedPopulation {
    /// `S_θ` of the population at time `t`.
    pub fn additive_statistic_at(&self, t: f64, theta: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return arg(format!("time {t} is outside [0, {}]", self.horizon));
        }
        let mut s = 0.0;
        for node in self.nodes.iter().filter(|n| n.represents(t)) {
            if node.termination == Termination::Frozen && t >= node.death {
                continue;
            }
            let l = node
                .log_mark_at(t)
                .ok_or_else(|| EssfError::Argument(format!("mark at {t} was not sampled")))?;
            s += (theta * l).exp();
        }
        Ok(s)
    }

    /// Number of blocks with positive mark at `t`.
    pub fn live_count(&self, t: f64) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.represents(t) && !(n.termination == Termination::Frozen && t >= n.death))
            .count()
    }
}

/// Header line of a tree dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpHeader {
    pub config_hash: String,
    pub seed: u64,
    pub replicate: u64,
    pub level: usize,
    pub horizon: f64,
}

/// One line of a tree dump. Members are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub members: Vec<usize>,
    pub birth: f64,
    pub death: f64,
    pub init_mark: f64,
    pub termination: Termination,
    pub marks_at_queries: Vec<(f64, f64)>,
}

impl GenealogyTree {
    pub fn node_records(&self) -> Vec<NodeRecord> {
        self.nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                parent: n.parent,
                members: n.members.iter().map(|i| i + 1).collect(),
                birth: n.birth,
                death: n.death,
                init_mark: n.initial_mark,
                termination: n.termination,
                marks_at_queries: self
                    .query_times
                    .iter()
                    .filter(|&&q| n.represents(q))
                    .filter_map(|&q| n.mark_at(q).map(|v| (q, v)))
                    .collect(),
            })
            .collect()
    }

    /// One JSON object per node, each terminated by a newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.node_records() {
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// A parsed tree dump: optional headers and the node lines in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeDump {
    pub headers: Vec<DumpHeader>,
    pub nodes: Vec<NodeRecord>,
}

/// Parses and sanity-checks a JSON-lines tree dump.
pub fn parse_tree_dump(s: &str) -> Result<TreeDump> {
    let mut dump = TreeDump::default();
    for (lineno, line) in s.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Ok(node) = serde_json::from_str::<NodeRecord>(line) {
            check_record(&node).map_err(|e| EssfError::Parse(format!("line {}: {e}", lineno + 1)))?;
            dump.nodes.push(node);
        } else {
            let header = serde_json::from_str::<DumpHeader>(line)
                .map_err(|e| EssfError::Parse(format!("line {}: {e}", lineno + 1)))?;
            dump.headers.push(header);
        }
    }
    Ok(dump)
}

fn check_record(r: &NodeRecord) -> std::result::Result<(), String> {
    if r.members.contains(&0) {
        return Err("members are 1-based".into());
    }
    if r.members.windows(2).any(|w| w[0] >= w[1]) {
        return Err("members must be strictly increasing".into());
    }
    if !(r.birth <= r.death) {
        return Err("birth must not exceed death".into());
    }
    if !(r.init_mark >= 0.0) {
        return Err("init_mark must be >= 0".into());
    }
    if r.parent.is_some_and(|p| p >= r.id) {
        return Err("parent id must precede the node id".into());
    }
    Ok(())
}
