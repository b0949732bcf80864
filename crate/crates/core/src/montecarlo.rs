//! Replica kernel for ensemble runs and the deterministic parallel driver.
//!
//! [`EnergyWalker`] tracks only what ensembles need: the position, local
//! times (for `I_n`) and one charge sum `W(x)` per charge channel, so several
//! energies (say `K` and `K^(n)`) ride on one walk. Sites are stored in dense
//! tiles of `2^s` cells per axis; the walk moves locally, so the tile of the
//! previous step is checked before the hash index.

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::walk::{Point, SiteCodec, StepLaw, MAX_DIM};

const NO_TILE: usize = usize::MAX;

fn tile_shift(dim: usize) -> u32 {
    match dim {
        1 => 12,
        2 => 4,
        3 => 3,
        4 => 2,
        _ => 1,
    }
}

struct Tile {
    w: Vec<f64>,
    counts: Vec<u32>,
}

struct SiteField {
    dim: usize,
    shift: u32,
    mask: i64,
    channels: usize,
    cells: usize,
    codec: SiteCodec,
    tiles: Vec<Tile>,
    used: usize,
    index: FxHashMap<u128, usize>,
    last_tc: Point,
    last_tile: usize,
}

impl SiteField {
    fn new(dim: usize, channels: usize) -> Self {
        let shift = tile_shift(dim);
        SiteField {
            dim,
            shift,
            mask: (1i64 << shift) - 1,
            channels,
            cells: 1usize << (shift as usize * dim),
            codec: SiteCodec::new(dim),
            tiles: Vec::new(),
            used: 0,
            index: FxHashMap::default(),
            last_tc: [0; MAX_DIM],
            last_tile: NO_TILE,
        }
    }

    fn reset(&mut self) {
        for t in &mut self.tiles[..self.used] {
            t.w.fill(0.0);
            t.counts.fill(0);
        }
        self.used = 0;
        self.index.clear();
        self.last_tile = NO_TILE;
    }

    #[inline]
    fn locate(&mut self, pos: &Point) -> (usize, usize) {
        let mut tc: Point = [0; MAX_DIM];
        let mut off = 0usize;
        for i in 0..self.dim {
            tc[i] = pos[i] >> self.shift;
            off |= ((pos[i] & self.mask) as usize) << (self.shift as usize * i);
        }
        if tc[..self.dim] != self.last_tc[..self.dim] || self.last_tile == NO_TILE {
            self.last_tile = self.tile_for(&tc);
            self.last_tc = tc;
        }
        (self.last_tile, off)
    }

    #[cold]
    fn tile_for(&mut self, tc: &Point) -> usize {
        let key = self.codec.encode(tc);
        if let Some(&t) = self.index.get(&key) {
            return t;
        }
        assert!(
            self.codec.in_range(tc),
            "walk left the encodable lattice box"
        );
        if self.used == self.tiles.len() {
            self.tiles.push(Tile {
                w: vec![0.0; self.cells * self.channels],
                counts: vec![0; self.cells],
            });
        }
        let t = self.used;
        self.used += 1;
        self.index.insert(key, t);
        t
    }
}

/// Energies and `I_n` of a walk at the requested checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    /// `energies[c][j]`: channel `c` at checkpoint `j`.
    pub energies: Vec<Vec<f64>>,
    /// `I_k` at each checkpoint.
    pub silt: Vec<u64>,
}

pub struct EnergyWalker {
    dim: usize,
    field: SiteField,
    pos: Point,
    n: u64,
    silt: u64,
    energies: Vec<f64>,
}

impl EnergyWalker {
    pub fn new(dim: usize, channels: usize) -> Self {
        EnergyWalker {
            dim,
            field: SiteField::new(dim, channels),
            pos: [0; MAX_DIM],
            n: 0,
            silt: 0,
            energies: vec![0.0; channels],
        }
    }

    pub fn reset(&mut self) {
        self.field.reset();
        self.pos = [0; MAX_DIM];
        self.n = 0;
        self.silt = 0;
        self.energies.fill(0.0);
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    pub fn silt(&self) -> u64 {
        self.silt
    }

    pub fn energy(&self, channel: usize) -> f64 {
        self.energies[channel]
    }

    pub fn position(&self) -> &[i64] {
        &self.pos[..self.dim]
    }

    /// Move by `step`, consuming charge `n + 1` of every channel.
    #[inline]
    pub fn step(&mut self, step: &Point, charges: &[&[f64]]) {
        for i in 0..self.dim {
            self.pos[i] += step[i];
        }
        let (t, off) = self.field.locate(&self.pos);
        let channels = self.field.channels;
        let tile = &mut self.field.tiles[t];
        let c = tile.counts[off];
        self.silt += 2 * c as u64 + 1;
        tile.counts[off] = c + 1;
        let k = self.n as usize;
        let base = off * channels;
        for (ch, q) in charges.iter().enumerate() {
            let q = q[k];
            let w = tile.w[base + ch];
            self.energies[ch] += q * w;
            tile.w[base + ch] = w + q;
        }
        self.n += 1;
    }

    /// Reset, then walk to the last checkpoint recording every channel.
    /// `checkpoints` must be increasing; every charge slice must cover it.
    pub fn run_path<R: Rng + ?Sized>(
        &mut self,
        law: &StepLaw,
        charges: &[&[f64]],
        checkpoints: &[u64],
        rng: &mut R,
    ) -> PathRecord {
        debug_assert_eq!(charges.len(), self.field.channels);
        debug_assert!(checkpoints.windows(2).all(|w| w[0] <= w[1]));
        self.reset();
        let mut rec = PathRecord {
            energies: vec![Vec::with_capacity(checkpoints.len()); charges.len()],
            silt: Vec::with_capacity(checkpoints.len()),
        };
        for &c in checkpoints {
            while self.n < c {
                let s = *law.sample_step(rng);
                self.step(&s, charges);
            }
            for (ch, e) in rec.energies.iter_mut().enumerate() {
                e.push(self.energies[ch]);
            }
            rec.silt.push(self.silt);
        }
        rec
    }
}

/// Evaluate `f(state, i)` for `i in 0..count` on `workers` threads
/// (0 = all cores), returning results in index order. Each thread builds its
/// own scratch state with `init`; results must not depend on that state's
/// history, which makes the output independent of scheduling.
pub fn run_replicas<S, T, I, F>(count: usize, workers: usize, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..count)
            .into_par_iter()
            .map_init(&init, |s, i| f(s, i))
            .collect()
    }))
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::hamiltonian::brute_force_energy;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn walker_matches_double_sum(
            d in 1usize..4,
            moves in prop::collection::vec((0usize..3, -1i64..=1), 1..120),
            q in prop::collection::vec(-3.0f64..3.0, 120),
        ) {
            let mut w = EnergyWalker::new(d, 2);
            let neg: Vec<f64> = q.iter().map(|x| -x).collect();
            let mut pos = vec![0i64; d];
            let mut path = Vec::new();
            for &(axis, delta) in &moves {
                let mut step: Point = [0; MAX_DIM];
                step[axis % d] = delta;
                pos[axis % d] += delta;
                path.push(pos.clone());
                w.step(&step, &[&q, &neg]);
            }
            let brute = brute_force_energy(&path, &q);
            prop_assert!((w.energy(0) - brute).abs() <= 1e-9 * (1.0 + brute.abs()));
            // K is quadratic in q
            prop_assert!((w.energy(1) - w.energy(0)).abs() <= 1e-9 * (1.0 + brute.abs()));
            let silt: u64 = {
                let mut counts = std::collections::HashMap::new();
                for p in &path {
                    *counts.entry(p.clone()).or_insert(0u64) += 1;
                }
                counts.values().map(|c| c * c).sum()
            };
            prop_assert_eq!(w.silt(), silt);
        }
    }
}
