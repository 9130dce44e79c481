//! Best-bound branch-and-bound over the discard indicators.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use nalgebra::DVector;

use super::{BnbParams, SolveReport, Status, TuneSummary};
use crate::error::{Error, Result};
use crate::heuristics::alt_opt;
use crate::problem::{Design, Method, Solution};
use crate::relax::{
    initial_weights, round_heuristic, solve_bigm_relaxation, solve_perspective_relaxation, tune_conic_plus,
    tune_weights, Fix, NodeState, RelaxControl, RelaxationResult, TuneParams, WeightVector,
};

struct Node {
    state: NodeState,
    lb: f64,
    id: u64,
    warm_z: Option<Arc<DVector<f64>>>,
    warm_x: Option<Arc<DVector<f64>>>,
    weights: Option<Arc<WeightVector>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then(other.id.cmp(&self.id))
    }
}

struct Child {
    state: NodeState,
    warm_z: Option<Arc<DVector<f64>>>,
    warm_x: Option<Arc<DVector<f64>>>,
    weights: Option<Arc<WeightVector>>,
}

struct Outcome {
    lb: f64,
    candidate: Option<Solution>,
    children: Vec<Child>,
    warning: bool,
}

struct Ctx<'a> {
    design: &'a Design,
    method: Method,
    params: &'a BnbParams,
    deadline: Instant,
}

impl Ctx<'_> {
    fn control(&self, cutoff: f64) -> RelaxControl {
        RelaxControl {
            rel_tol: self.params.relax_tol,
            cutoff,
            deadline: Some(self.deadline),
            ..RelaxControl::default()
        }
    }

    fn relax(&self, node: &Node, cutoff: f64) -> Result<RelaxationResult> {
        let ctl = self.control(cutoff);
        match self.method {
            Method::BigM => {
                solve_bigm_relaxation(self.design, self.params.big_m, &node.state, &ctl, node.warm_x.as_deref())
            }
            _ => {
                let d = node.weights.as_ref().expect("conic nodes carry weights");
                solve_perspective_relaxation(self.design, d, &node.state, &ctl, node.warm_z.as_deref())
            }
        }
    }

    fn process(&self, node: &Node, cutoff: f64, is_root: bool) -> Outcome {
        let mut out = Outcome {
            lb: node.lb,
            candidate: None,
            children: Vec::new(),
            warning: false,
        };
        if node.state.is_leaf() {
            match self.design.fit_subset(&node.state.leaf_flags()) {
                Ok(sol) => {
                    out.lb = out.lb.max(sol.objective);
                    out.candidate = Some(sol);
                }
                Err(_) => out.warning = true,
            }
            return out;
        }
        let mut weights = node.weights.clone();
        let relaxed = if self.params.node_retune && !is_root && self.method == Method::ConicPlus {
            let start = weights.as_deref().cloned().expect("conic nodes carry weights");
            let tp = TuneParams {
                max_iters: self.params.retune_iters,
                ..self.params.tune
            };
            match tune_weights(self.design, &node.state, start, &tp, &self.control(cutoff)) {
                Ok(t) => {
                    out.warning |= t.warning;
                    out.lb = out.lb.max(t.best_lb);
                    out.candidate = t.incumbent;
                    weights = Some(Arc::new(t.weights));
                    t.last_relaxation.ok_or(Error::InvalidInput("no tuning iteration ran".into()))
                }
                Err(e) => Err(e),
            }
        } else {
            self.relax(node, cutoff).inspect(|rel| out.lb = out.lb.max(rel.certified_lb))
        };
        let rel = match relaxed {
            Ok(r) => r,
            Err(_) => {
                // keep the parent bound and split on the first free row
                out.warning = true;
                let i = node.state.free()[0];
                out.children = self.split(&node.state, i, None, None, weights);
                return out;
            }
        };
        if out.lb >= cutoff {
            return out;
        }
        if let Ok(sol) = round_heuristic(&rel, self.design, &node.state) {
            if out.candidate.as_ref().is_none_or(|c| sol.objective < c.objective) {
                out.candidate = Some(sol);
            }
        }
        let i = most_fractional(&rel.z, &node.state);
        let warm_z = Some(Arc::new(rel.z.clone()));
        let warm_x = Some(Arc::new(rel.x.clone()));
        out.children = self.split(&node.state, i, warm_z, warm_x, weights);
        out
    }

    fn split(
        &self,
        state: &NodeState,
        i: usize,
        warm_z: Option<Arc<DVector<f64>>>,
        warm_x: Option<Arc<DVector<f64>>>,
        weights: Option<Arc<WeightVector>>,
    ) -> Vec<Child> {
        [false, true]
            .into_iter()
            .filter_map(|one| state.child(i, one))
            .map(|s| Child {
                state: s,
                warm_z: warm_z.clone(),
                warm_x: warm_x.clone(),
                weights: weights.clone(),
            })
            .collect()
    }
}

/// Free row whose relaxed `z` is farthest from integral, lowest index first.
fn most_fractional(z: &DVector<f64>, state: &NodeState) -> usize {
    let mut best = usize::MAX;
    let mut score = -1.0;
    for i in 0..state.m() {
        if state.fix[i] != Fix::Free {
            continue;
        }
        let s = z[i].min(1.0 - z[i]);
        if s > score {
            score = s;
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq)]
enum Stop {
    Exhausted,
    Gap,
    Time,
    Nodes,
}

struct Shared {
    heap: BinaryHeap<Node>,
    active: HashMap<u64, f64>,
    incumbent: Option<Solution>,
    next_id: u64,
    nodes: usize,
    pruned_min: f64,
    stop: Option<Stop>,
    warning: bool,
    root_bound: Option<f64>,
}

impl Shared {
    fn cutoff(&self, gap_tol: f64) -> f64 {
        match &self.incumbent {
            Some(s) => s.objective - gap_tol * s.objective.abs().max(1e-12),
            None => f64::INFINITY,
        }
    }

    fn open_bound(&self) -> f64 {
        let heap = self.heap.peek().map_or(f64::INFINITY, |n| n.lb);
        let active = self.active.values().copied().fold(f64::INFINITY, f64::min);
        heap.min(active)
    }

    fn offer(&mut self, sol: Solution) {
        if self.incumbent.as_ref().is_none_or(|c| sol.objective < c.objective) {
            self.incumbent = Some(sol);
        }
    }
}

fn worker(ctx: &Ctx, shared: &Mutex<Shared>, cv: &Condvar) {
    loop {
        let (node, cutoff) = {
            let mut s = shared.lock().expect("poisoned");
            loop {
                if s.stop.is_some() {
                    return;
                }
                let cutoff = s.cutoff(ctx.params.gap_tol);
                while s.heap.peek().is_some_and(|n| n.lb >= cutoff) {
                    let n = s.heap.pop().expect("peeked");
                    s.pruned_min = s.pruned_min.min(n.lb);
                }
                if s.heap.is_empty() && s.active.is_empty() {
                    s.stop = Some(Stop::Exhausted);
                    cv.notify_all();
                    return;
                }
                if let Some(inc) = &s.incumbent {
                    let lb = s.open_bound().min(s.pruned_min);
                    if super::relative_gap(lb, inc.objective) <= ctx.params.gap_tol {
                        s.stop = Some(Stop::Gap);
                        cv.notify_all();
                        return;
                    }
                }
                if Instant::now() >= ctx.deadline {
                    s.stop = Some(Stop::Time);
                    cv.notify_all();
                    return;
                }
                if !s.heap.is_empty() {
                    if s.nodes >= ctx.params.node_limit {
                        s.stop = Some(Stop::Nodes);
                        cv.notify_all();
                        return;
                    }
                    let node = s.heap.pop().expect("nonempty");
                    s.nodes += 1;
                    s.active.insert(node.id, node.lb);
                    break (node, cutoff);
                }
                s = cv.wait(s).expect("poisoned");
            }
        };
        let is_root = node.id == 0;
        let out = ctx.process(&node, cutoff, is_root);
        let mut s = shared.lock().expect("poisoned");
        if is_root {
            s.root_bound = Some(out.lb);
        }
        s.warning |= out.warning;
        if let Some(sol) = out.candidate {
            s.offer(sol);
        }
        let cutoff = s.cutoff(ctx.params.gap_tol);
        if out.lb >= cutoff || out.children.is_empty() {
            s.pruned_min = s.pruned_min.min(out.lb);
        } else {
            for c in out.children {
                let id = s.next_id;
                s.next_id += 1;
                s.heap.push(Node {
                    state: c.state,
                    lb: out.lb,
                    id,
                    warm_z: c.warm_z,
                    warm_x: c.warm_x,
                    weights: c.weights,
                });
            }
        }
        s.active.remove(&node.id);
        cv.notify_all();
    }
}

/// Branch-and-bound for one of the mixed-integer formulations on `design`.
pub fn solve_mio(design: &Design, method: Method, params: &BnbParams) -> Result<SolveReport> {
    if !method.is_mio() {
        return Err(Error::InvalidInput(format!("{method} is not a mixed-integer formulation")));
    }
    let start = Instant::now();
    let deadline = start + params.time_limit;
    let mut notes = Vec::new();
    let mut seed_lb = 0.0f64;
    let mut incumbent = None;
    let mut tuning = None;
    let mut warning = false;
    let weights = match method {
        Method::BigM => None,
        Method::Conic => Some(Arc::new(initial_weights(design)?)),
        _ => {
            let ctl = RelaxControl {
                rel_tol: params.relax_tol,
                deadline: Some(deadline),
                ..RelaxControl::default()
            };
            let t = tune_conic_plus(design, &params.tune, &ctl)?;
            if t.floor_lowered {
                notes.push("weight floor lowered to keep the weight LMI feasible".to_string());
            }
            warning |= t.warning;
            seed_lb = seed_lb.max(t.best_lb);
            incumbent = t.incumbent.clone();
            tuning = Some(TuneSummary {
                iterations: t.iterations,
                lb_trace: t.lb_trace.clone(),
                ub_trace: t.ub_trace.clone(),
                stalled: t.stalled,
            });
            Some(Arc::new(t.weights))
        }
    };
    if params.warm_start {
        let warm = alt_opt(design, crate::heuristics::ALT_OPT_MAX_ITERS)?.solution;
        if incumbent.as_ref().is_none_or(|c: &Solution| warm.objective < c.objective) {
            incumbent = Some(warm);
        }
    }
    let root = Node {
        state: NodeState::root(design),
        lb: seed_lb,
        id: 0,
        warm_z: None,
        warm_x: None,
        weights: weights.clone(),
    };
    let mut heap = BinaryHeap::new();
    heap.push(root);
    let shared = Mutex::new(Shared {
        heap,
        active: HashMap::new(),
        incumbent,
        next_id: 1,
        nodes: 0,
        pruned_min: f64::INFINITY,
        stop: None,
        warning,
        root_bound: None,
    });
    let cv = Condvar::new();
    let ctx = Ctx {
        design,
        method,
        params,
        deadline,
    };
    let threads = params.worker_count();
    if threads <= 1 {
        worker(&ctx, &shared, &cv);
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| worker(&ctx, &shared, &cv));
            }
        });
    }
    let s = shared.into_inner().expect("poisoned");
    let incumbent = match s.incumbent.clone() {
        Some(sol) => sol,
        // time ran out before any node finished
        None => design.fit_subset(&design.largest_residuals(&design.y, design.budget))?,
    };
    let lb = s.open_bound().min(s.pruned_min).min(incumbent.objective);
    let lb = if lb.is_finite() { lb } else { seed_lb.min(incumbent.objective) };
    let status = if s.warning {
        Status::WarningNumerical
    } else {
        match s.stop {
            Some(Stop::Exhausted) | Some(Stop::Gap) => Status::Optimal,
            Some(Stop::Nodes) => Status::NodeLimit,
            _ => Status::TimeLimit,
        }
    };
    Ok(SolveReport {
        method,
        status,
        gap: Some(super::relative_gap(lb, incumbent.objective)),
        lower_bound: Some(lb),
        incumbent,
        nodes: Some(s.nodes),
        time_s: start.elapsed().as_secs_f64(),
        root_bound: s.root_bound,
        alg1_iterations: tuning.as_ref().map(|t| t.iterations),
        d_weights: weights.map(|w| w.d.clone()),
        tuning,
        notes,
    })
}
