//! Output-set over-approximation of an MLP by simulation-guided bisection.
//!
//! A cloud of simulated outputs gives an inner estimate (the envelope) of
//! the output set. Input boxes whose interval extension already fits inside
//! the envelope are accepted as they are; the rest are bisected until the
//! input width drops to the tolerance. The returned union of output boxes
//! always contains the true output set, the envelope only steers the work.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};
use crate::nn::MlpNetwork;

/// Upper limit on the number of cells the uniform baseline may create.
pub const MAX_UNIFORM_CELLS: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachOptions {
    pub tolerance: f64,
    pub n_sims: usize,
    pub seed: u64,
    /// Worker threads for the bisection loop; `1` runs single-threaded.
    pub threads: usize,
}

impl Default for ReachOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            n_sims: 1000,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachStats {
    pub interval_count: usize,
    pub bisection_count: usize,
    /// Wall-clock time; informational only.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachNnResult {
    /// Output boxes whose union contains the output set.
    pub boxes: Vec<IntervalBox>,
    /// Input cell that produced each entry of `boxes`.
    pub inputs: Vec<IntervalBox>,
    /// Hull of the simulated outputs; absent for the uniform baseline.
    pub envelope: Option<IntervalBox>,
    /// Single-box cover of `boxes`.
    pub hull: IntervalBox,
    pub stats: ReachStats,
}

/// A pending input cell together with its output enclosure.
#[derive(Debug, Clone)]
struct WorkItem {
    input: IntervalBox,
    output: IntervalBox,
    width: f64,
}

impl WorkItem {
    fn new(net: &MlpNetwork, input: IntervalBox) -> Result<Self> {
        let output = net.interval_ext(&input)?;
        let width = input.width();
        Ok(Self {
            input,
            output,
            width,
        })
    }
}

fn cmp_lower_corner(a: &IntervalBox, b: &IntervalBox) -> Ordering {
    a.dims()
        .iter()
        .zip(b.dims())
        .map(|(x, y)| x.lo().total_cmp(&y.lo()).then(x.hi().total_cmp(&y.hi())))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

// Widest input first; ties go to the lexicographically smallest lower
// corner, so pop order depends only on the cells, never on insertion order.
impl Ord for WorkItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.width
            .total_cmp(&other.width)
            .then_with(|| cmp_lower_corner(&other.input, &self.input))
    }
}

impl PartialOrd for WorkItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for WorkItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for WorkItem {}

fn check_tolerance(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(eps))
    }
}

/// Sample points inside `input`: a regular grid for the first half of the
/// budget, seeded uniform draws for the rest.
pub fn sample_inputs(input: &IntervalBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = input.dim();
    let n_grid = n / 2;
    let mut points = Vec::with_capacity(n);
    if n_grid > 0 {
        let mut per_axis = 1usize;
        while per_axis.saturating_pow(d as u32) < n_grid {
            per_axis += 1;
        }
        let coord = |iv: &Interval, i: usize| -> f64 {
            if per_axis == 1 {
                iv.mid()
            } else if i + 1 == per_axis {
                iv.hi()
            } else {
                iv.lo() + iv.width() * (i as f64) / ((per_axis - 1) as f64)
            }
        };
        for k in 0..n_grid {
            let mut rem = k;
            let mut p = vec![0.0; d];
            for j in (0..d).rev() {
                p[j] = coord(&input[j], rem % per_axis);
                rem /= per_axis;
            }
            points.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in n_grid..n {
        points.push(
            input
                .dims()
                .iter()
                .map(|iv| rng.gen_range(iv.lo()..=iv.hi()))
                .collect(),
        );
    }
    points
}

/// Evaluates the network on `n` sample points of `input`.
pub fn simulate(net: &MlpNetwork, input: &IntervalBox, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if input.dim() != net.input_dim() {
        return Err(Error::dims(net.input_dim(), input.dim()));
    }
    sample_inputs(input, n, seed)
        .iter()
        .map(|p| net.eval(p))
        .collect()
}

/// Hull of simulated outputs.
pub fn sim_envelope(points: &[Vec<f64>]) -> Result<IntervalBox> {
    IntervalBox::hull_of_points(points)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

enum Step {
    Accept(WorkItem),
    Split(WorkItem, WorkItem),
}

fn process(net: &MlpNetwork, envelope: &IntervalBox, item: WorkItem) -> Result<Step> {
    if item.output.is_subset_of(envelope)? {
        return Ok(Step::Accept(item));
    }
    let (a, b) = item.input.bisect()?;
    Ok(Step::Split(WorkItem::new(net, a)?, WorkItem::new(net, b)?))
}

fn finish(
    mut accepted: Vec<WorkItem>,
    envelope: Option<IntervalBox>,
    bisection_count: usize,
    start: Instant,
) -> Result<ReachNnResult> {
    accepted.sort_by(|a, b| cmp_lower_corner(&a.input, &b.input));
    let hull = IntervalBox::hull_of_boxes(accepted.iter().map(|w| &w.output))?;
    let (inputs, boxes): (Vec<_>, Vec<_>) = accepted.into_iter().map(|w| (w.input, w.output)).unzip();
    Ok(ReachNnResult {
        stats: ReachStats {
            interval_count: boxes.len(),
            bisection_count,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
        boxes,
        inputs,
        envelope,
        hull,
    })
}

/// Simulation-guided bisection.
///
/// Cells are processed widest first. A cell whose output box lies inside
/// the simulation envelope is accepted; otherwise it is bisected while its
/// input width exceeds the tolerance. The first cell that is neither
/// absorbed nor splittable ends the loop, and it and every cell still
/// pending are accepted as they are. Widest-first order guarantees those
/// pending cells are all within tolerance as well.
///
/// With `threads > 1` the cells wider than the tolerance are processed in
/// parallel batches. Which cells end up accepted does not depend on the
/// batching, and results are sorted by input cell, so the output is the
/// same for every thread count.
pub fn reach_mlp(net: &MlpNetwork, input: &IntervalBox, opts: &ReachOptions) -> Result<ReachNnResult> {
    check_tolerance(opts.tolerance)?;
    if opts.n_sims == 0 {
        return Err(Error::InvalidArgument("number of simulations must be at least 1".into()));
    }
    if input.dim() != net.input_dim() {
        return Err(Error::dims(net.input_dim(), input.dim()));
    }
    let start = Instant::now();
    let eps = opts.tolerance;
    let envelope = sim_envelope(&simulate(net, input, opts.n_sims, opts.seed)?)?;

    let mut heap = BinaryHeap::new();
    heap.push(WorkItem::new(net, input.clone())?);
    let mut accepted = Vec::new();
    let mut bisections = 0usize;

    if opts.threads > 1 {
        let batch_size = 64 * opts.threads;
        with_pool(opts.threads, || -> Result<()> {
            loop {
                let mut batch = Vec::new();
                while batch.len() < batch_size && heap.peek().is_some_and(|w| w.width > eps) {
                    batch.push(heap.pop().expect("peeked"));
                }
                if batch.is_empty() {
                    return Ok(());
                }
                let steps: Vec<Step> = batch
                    .into_par_iter()
                    .map(|item| process(net, &envelope, item))
                    .collect::<Result<_>>()?;
                for step in steps {
                    match step {
                        Step::Accept(item) => accepted.push(item),
                        Step::Split(a, b) => {
                            bisections += 1;
                            heap.push(a);
                            heap.push(b);
                        }
                    }
                }
            }
        })??;
    }

    while let Some(item) = heap.pop() {
        if item.output.is_subset_of(&envelope)? {
            accepted.push(item);
        } else if item.width > eps {
            match process(net, &envelope, item)? {
                Step::Split(a, b) => {
                    bisections += 1;
                    heap.push(a);
                    heap.push(b);
                }
                Step::Accept(_) => unreachable!("checked above"),
            }
        } else {
            accepted.push(item);
            accepted.extend(heap.drain());
            break;
        }
    }

    finish(accepted, Some(envelope), bisections, start)
}

/// Cells of one axis obtained by repeated midpoint halving until every cell
/// is no wider than `eps`. The halving is the same arithmetic as
/// [`IntervalBox::bisect`], so the cells coincide with bisection leaves.
fn axis_cells(iv: Interval, eps: f64, out: &mut Vec<Interval>) {
    if iv.width() > eps {
        let m = iv.mid();
        axis_cells(Interval::raw(iv.lo(), m), eps, out);
        axis_cells(Interval::raw(m, iv.hi()), eps, out);
    } else {
        out.push(iv);
    }
}

/// Uniform partition baseline: every axis is halved until its cells are no
/// wider than the tolerance, and every cell of the product grid is pushed
/// through the interval extension.
pub fn uniform_partition_mlp(
    net: &MlpNetwork,
    input: &IntervalBox,
    tolerance: f64,
    threads: usize,
) -> Result<ReachNnResult> {
    check_tolerance(tolerance)?;
    if input.dim() != net.input_dim() {
        return Err(Error::dims(net.input_dim(), input.dim()));
    }
    let start = Instant::now();
    let axes: Vec<Vec<Interval>> = input
        .dims()
        .iter()
        .map(|&iv| {
            let mut cells = Vec::new();
            axis_cells(iv, tolerance, &mut cells);
            cells
        })
        .collect();
    let total = axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
        .filter(|&n| n <= MAX_UNIFORM_CELLS)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "uniform partition exceeds {MAX_UNIFORM_CELLS} cells; increase the tolerance"
            ))
        })?;

    let cell = |k: usize| -> IntervalBox {
        let mut rem = k;
        let mut dims = vec![Interval::point(0.0); axes.len()];
        for j in (0..axes.len()).rev() {
            dims[j] = axes[j][rem % axes[j].len()];
            rem /= axes[j].len();
        }
        IntervalBox::from_vec(dims)
    };
    let items: Vec<WorkItem> = if threads > 1 {
        with_pool(threads, || {
            (0..total)
                .into_par_iter()
                .map(|k| WorkItem::new(net, cell(k)))
                .collect::<Result<_>>()
        })??
    } else {
        (0..total).map(|k| WorkItem::new(net, cell(k))).collect::<Result<_>>()?
    };
    finish(items, None, 0, start)
}
