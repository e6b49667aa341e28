//! Jump process generated by `-D` on the level-L leaves.
//!
//! From leaf `i` the walk leaves at rate `r_i = Σ_{k≠i} K(i,k)·μ_k`. A jump
//! picks the annulus around `i` with probability proportional to
//! `K_a·μ(annulus)`, then a sibling ball inside it and a leaf inside that ball
//! proportionally to measure, which gives `q_i(k) = K(i,k)·μ_k / r_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::VpOperator;
use crate::tree::Hierarchy;

#[derive(Clone, Debug)]
pub struct JumpRates<'a> {
    h: &'a Hierarchy,
    exit: Vec<f64>,
    /// `weights[i·L + l]`: rate of jumping into the annulus of level `l`
    /// around leaf `i`.
    weights: Vec<f64>,
}

pub fn build_rates<'a>(op: &VpOperator<'a>) -> JumpRates<'a> {
    let h = op.hierarchy();
    let depth = h.depth();
    let nodes = h.nodes();
    let per_leaf: Vec<(f64, Vec<f64>)> = (0..h.leaf_count())
        .into_par_iter()
        .map(|leaf| {
            let chain = h.ancestors(leaf);
            let w: Vec<f64> = (0..depth)
                .map(|l| {
                    let (a, inner) = (chain[l], chain[l + 1]);
                    let mass: f64 = h.children(a).filter(|&c| c != inner).map(|c| nodes[c].measure).sum();
                    op.node_kernel(a) * mass
                })
                .collect();
            (w.iter().sum(), w)
        })
        .collect();
    let mut exit = Vec::with_capacity(per_leaf.len());
    let mut weights = Vec::with_capacity(per_leaf.len() * depth);
    for (r, w) in per_leaf {
        exit.push(r);
        weights.extend(w);
    }
    JumpRates { h, exit, weights }
}

impl<'a> JumpRates<'a> {
    pub fn hierarchy(&self) -> &'a Hierarchy {
        self.h
    }

    pub fn exit_rates(&self) -> &[f64] {
        &self.exit
    }

    pub fn annulus_rates(&self, leaf: usize) -> &[f64] {
        let d = self.h.depth();
        &self.weights[leaf * d..(leaf + 1) * d]
    }

    /// Dense jump law `q_i(k)` out of `leaf`.
    pub fn jump_distribution(&self, op: &VpOperator, leaf: usize) -> Vec<f64> {
        let h = self.h;
        let mu = h.leaf_measures();
        (0..h.leaf_count())
            .map(|k| {
                if k == leaf {
                    0.0
                } else {
                    op.node_kernel(h.join(leaf, k)) * mu[k] / self.exit[leaf]
                }
            })
            .collect()
    }

    fn jump<R: Rng>(&self, leaf: usize, rng: &mut R) -> usize {
        let h = self.h;
        let nodes = h.nodes();
        let weights = self.annulus_rates(leaf);
        let mut u = rng.random::<f64>() * self.exit[leaf];
        let mut level = weights.len() - 1;
        for (l, &w) in weights.iter().enumerate() {
            if u < w {
                level = l;
                break;
            }
            u -= w;
        }
        let parent = h.ancestor(leaf, level);
        let inner = h.ancestor(leaf, level + 1);
        let mass: f64 = h.children(parent).filter(|&c| c != inner).map(|c| nodes[c].measure).sum();
        let mut ball = pick_by_measure(h, h.children(parent).filter(|&c| c != inner), mass, rng);
        while nodes[ball].child_count > 0 {
            ball = pick_by_measure(h, h.children(ball), nodes[ball].measure, rng);
        }
        ball - h.leaf_node(0)
    }
}

fn pick_by_measure<R: Rng>(h: &Hierarchy, mut balls: impl Iterator<Item = usize>, total: f64, rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * total;
    let mut last = balls.next().expect("annulus is never empty");
    loop {
        let m = h.node(last).measure;
        if u < m {
            return last;
        }
        u -= m;
        match balls.next() {
            Some(b) => last = b,
            None => return last,
        }
    }
}

/// One trajectory up to the horizon.
#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub initial: usize,
    pub jump_times: Vec<f64>,
    /// States after each jump.
    pub states: Vec<usize>,
}

impl PathSample {
    pub fn final_state(&self) -> usize {
        self.states.last().copied().unwrap_or(self.initial)
    }
}

/// RNG of path `index`: the seed selects the key, the index the stream.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_path(rates: &JumpRates, x0: usize, horizon: f64, rng: &mut ChaCha8Rng, mut on_jump: impl FnMut(f64, usize)) -> usize {
    let mut state = x0;
    let mut time = 0.0;
    loop {
        let r = rates.exit[state];
        if r <= 0.0 {
            return state;
        }
        time += Exp::new(r).expect("positive rate").sample(rng);
        if time > horizon {
            return state;
        }
        state = rates.jump(state, rng);
        on_jump(time, state);
    }
}

fn check_sampling(rates: &JumpRates, x0: usize, horizon: f64) -> Result<()> {
    let n = rates.exit.len();
    if x0 >= n {
        return Err(Error::DimensionMismatch { expected: n, got: x0 });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive and finite")));
    }
    Ok(())
}

pub fn sample_path(rates: &JumpRates, x0: usize, horizon: f64, seed: u64, index: u64) -> Result<PathSample> {
    check_sampling(rates, x0, horizon)?;
    let mut rng = path_rng(seed, index);
    let mut path = PathSample {
        initial: x0,
        jump_times: Vec::new(),
        states: Vec::new(),
    };
    run_path(rates, x0, horizon, &mut rng, |t, s| {
        path.jump_times.push(t);
        path.states.push(s);
    });
    Ok(path)
}

/// Counts of the state at `horizon` over `n_paths` independent paths.
#[derive(Clone, Debug, Serialize)]
pub struct Empirical {
    pub counts: Vec<u64>,
    pub n_paths: u64,
}

impl Empirical {
    pub fn distribution(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n_paths as f64).collect()
    }
}

pub fn sample_paths(rates: &JumpRates, x0: usize, horizon: f64, n_paths: u64, seed: u64) -> Result<Empirical> {
    check_sampling(rates, x0, horizon)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let n = rates.exit.len();
    let counts = (0..n_paths)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, index| {
                let mut rng = path_rng(seed, index);
                acc[run_path(rates, x0, horizon, &mut rng, |_, _| {})] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(Empirical { counts, n_paths })
}

/// Total variation distance `½·Σ|p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
