//! Lattice random walks and the local-time functionals built on top of them.
//!
//! A [`StepLaw`] is a validated, centered, finite-support step distribution.
//! A [`PolymerWalkState`] advances one step at a time and keeps, exactly and in
//! integer arithmetic, the local times `N_n(x)`, their maximum `N*_n`, the
//! p-fold self-intersection local times `I_n^[p] = sum_x N_n(x)^p` and a
//! windowed copy `N_{a,n}`, `I_{a,n}` restarted by [`PolymerWalkState::reset_window`].
//!
//! Sites live in a hash map keyed by the packed lattice point. Each entry can
//! carry an extra payload `T`, which is how the energy tracker attaches its
//! per-site charge sums without a second lookup.

use nalgebra::DMatrix;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// Lattice point with unused trailing coordinates set to zero.
pub type Point = [i64; MAX_DIM];

const PROB_TOL: f64 = 1e-12;

/// Default largest power `p` tracked for `I_n^[p]`.
pub const DEFAULT_MAX_POWER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    /// Nearest-neighbour walk. Periodic with period 2: return probabilities
    /// vanish at odd times, which the oracles handle, but it is not aperiodic.
    Srw,
    /// Nearest-neighbour walk that stays put with probability `lazy_weight`.
    LazySrw,
    Custom,
}

impl std::str::FromStr for WalkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srw" => Ok(WalkKind::Srw),
            "lazy_srw" => Ok(WalkKind::LazySrw),
            "custom" => Ok(WalkKind::Custom),
            other => Err(Error::InvalidArgument(format!(
                "unknown walk kind {other:?} (expected srw, lazy_srw or custom)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepLaw {
    kind: WalkKind,
    dim: usize,
    lazy_weight: f64,
    /// Law of a step given that the walk does not hold.
    jumps: Vec<(Point, f64)>,
    /// Full one-step law, holding mass merged into the zero step.
    support: Vec<(Point, f64)>,
    covariance: DMatrix<f64>,
    max_step: i64,
    sampler: AliasTable,
}

fn to_point(coords: &[i64], dim: usize) -> Result<Point> {
    if coords.len() != dim {
        return Err(Error::InvalidStepLaw(format!(
            "support point {coords:?} has {} coordinates, expected {dim}",
            coords.len()
        )));
    }
    let mut p = [0; MAX_DIM];
    p[..dim].copy_from_slice(coords);
    Ok(p)
}

fn merge(points: impl IntoIterator<Item = (Point, f64)>) -> Vec<(Point, f64)> {
    let mut out: Vec<(Point, f64)> = Vec::new();
    for (x, p) in points {
        match out.iter_mut().find(|(y, _)| *y == x) {
            Some(entry) => entry.1 += p,
            None => out.push((x, p)),
        }
    }
    out
}

/// Build and validate a step law.
///
/// `lazy_weight` is the probability of a zero step mixed into the jump law.
/// For `Srw` it must be zero; for `LazySrw` it must lie in `(0, 1)`; for
/// `Custom` it is mixed into `custom_support`, which must be given.
pub fn make_step_law(
    kind: WalkKind,
    dim: usize,
    lazy_weight: f64,
    custom_support: Option<&[(Vec<i64>, f64)]>,
) -> Result<StepLaw> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::OutOfRange {
            name: "d",
            value: dim as f64,
            constraint: format!("[1, {MAX_DIM}]"),
        });
    }
    if !(0.0..1.0).contains(&lazy_weight) {
        return Err(Error::OutOfRange {
            name: "lazy_weight",
            value: lazy_weight,
            constraint: "[0, 1)".into(),
        });
    }
    let jumps: Vec<(Point, f64)> = match kind {
        WalkKind::Srw | WalkKind::LazySrw => {
            if kind == WalkKind::Srw && lazy_weight != 0.0 {
                return Err(Error::InvalidStepLaw(
                    "srw has no holding probability; use lazy_srw".into(),
                ));
            }
            if kind == WalkKind::LazySrw && lazy_weight == 0.0 {
                return Err(Error::OutOfRange {
                    name: "lazy_weight",
                    value: lazy_weight,
                    constraint: "(0, 1) for lazy_srw".into(),
                });
            }
            let p = 1.0 / (2 * dim) as f64;
            (0..dim)
                .flat_map(|i| {
                    [1, -1].into_iter().map(move |s| {
                        let mut x = [0; MAX_DIM];
                        x[i] = s;
                        (x, p)
                    })
                })
                .collect()
        }
        WalkKind::Custom => {
            let given = custom_support.ok_or_else(|| {
                Error::InvalidStepLaw("custom walk requires a support list".into())
            })?;
            if given.is_empty() {
                return Err(Error::InvalidStepLaw("empty support".into()));
            }
            let mut pts = Vec::with_capacity(given.len());
            for (coords, p) in given {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::InvalidStepLaw(format!(
                        "probability {p} of {coords:?} not in (0, 1]"
                    )));
                }
                pts.push((to_point(coords, dim)?, *p));
            }
            merge(pts)
        }
    };

    let total: f64 = jumps.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidStepLaw(format!(
            "probabilities sum to {total}, not 1"
        )));
    }

    let zero = [0; MAX_DIM];
    let support = merge(
        std::iter::once((zero, lazy_weight))
            .filter(|(_, p)| *p > 0.0)
            .chain(jumps.iter().map(|&(x, p)| (x, p * (1.0 - lazy_weight)))),
    );

    let mean: Vec<f64> = (0..dim)
        .map(|i| support.iter().map(|(x, p)| p * x[i] as f64).sum())
        .collect();
    if mean.iter().any(|m| m.abs() > PROB_TOL) {
        return Err(Error::InvalidStepLaw(format!(
            "step law is not centered: mean {mean:?}"
        )));
    }
    let covariance = DMatrix::from_fn(dim, dim, |i, j| {
        support
            .iter()
            .map(|(x, p)| p * x[i] as f64 * x[j] as f64)
            .sum::<f64>()
            - mean[i] * mean[j]
    });
    let eig = covariance.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(lo > PROB_TOL * hi.max(1.0)) {
        return Err(Error::InvalidStepLaw(format!(
            "singular covariance matrix (smallest eigenvalue {lo:e})"
        )));
    }

    let max_step = support
        .iter()
        .flat_map(|(x, _)| x[..dim].iter().map(|c| c.abs()))
        .max()
        .unwrap_or(0);
    let sampler = AliasTable::new(&support.iter().map(|(_, p)| *p).collect::<Vec<_>>());

    Ok(StepLaw {
        kind,
        dim,
        lazy_weight,
        jumps,
        support,
        covariance,
        max_step,
        sampler,
    })
}

impl StepLaw {
    pub fn srw(dim: usize) -> Result<Self> {
        make_step_law(WalkKind::Srw, dim, 0.0, None)
    }

    pub fn lazy_srw(dim: usize, lazy_weight: f64) -> Result<Self> {
        make_step_law(WalkKind::LazySrw, dim, lazy_weight, None)
    }

    pub fn custom(dim: usize, support: &[(Vec<i64>, f64)]) -> Result<Self> {
        make_step_law(WalkKind::Custom, dim, 0.0, Some(support))
    }

    pub fn kind(&self) -> WalkKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lazy_weight(&self) -> f64 {
        self.lazy_weight
    }

    /// The full one-step law.
    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    /// The step law conditioned on not holding.
    pub fn jumps(&self) -> &[(Point, f64)] {
        &self.jumps
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn covariance_det(&self) -> f64 {
        self.covariance.determinant()
    }

    /// Largest absolute coordinate of any support point.
    pub fn max_step(&self) -> i64 {
        self.max_step
    }

    /// True when every step changes the coordinate-sum parity, so that
    /// `P(S_m = 0) = 0` for odd `m`.
    pub fn is_bipartite(&self) -> bool {
        self.support
            .iter()
            .all(|(x, _)| x[..self.dim].iter().sum::<i64>().rem_euclid(2) == 1)
    }

    /// Short human-readable descriptor, used in output metadata.
    pub fn describe(&self) -> String {
        match self.kind {
            WalkKind::Srw => format!("srw d={}", self.dim),
            WalkKind::LazySrw => format!("lazy_srw d={} lazy={}", self.dim, self.lazy_weight),
            WalkKind::Custom => format!(
                "custom d={} support={} lazy={}",
                self.dim,
                self.support.len(),
                self.lazy_weight
            ),
        }
    }

    #[inline]
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> &Point {
        &self.support[self.sampler.sample(rng.next_u64())].0
    }
}

/// Walker's alias table driven by a single `u64` per draw: the high half
/// picks a column, the low half is compared with the column's acceptance
/// threshold. Probabilities are resolved to `2^-32`; supports whose size and
/// thresholds are dyadic (simple random walks) are sampled exactly.
#[derive(Clone, Debug)]
struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<usize>,
}

impl AliasTable {
    fn new(probs: &[f64]) -> Self {
        let k = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * k as f64).collect();
        let mut alias: Vec<usize> = (0..k).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..k).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are full columns up to rounding
        for i in small.into_iter().chain(large) {
            scaled[i] = 1.0;
        }
        let threshold = scaled
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 4294967296.0).round() as u64)
            .collect();
        AliasTable { threshold, alias }
    }

    #[inline]
    fn sample(&self, r: u64) -> usize {
        let i = (((r >> 32) * self.threshold.len() as u64) >> 32) as usize;
        if (r & 0xffff_ffff) < self.threshold[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Packs a lattice point into a `u128` hash key, `128 / d` bits per
/// coordinate (at most 64), offset-binary.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SiteCodec {
    dim: usize,
    bits: u32,
    limit: i64,
}

impl SiteCodec {
    pub(crate) fn new(dim: usize) -> Self {
        let bits = (128 / dim as u32).min(64);
        let limit = if bits >= 64 {
            i64::MAX
        } else {
            (1i64 << (bits - 1)) - 1
        };
        SiteCodec { dim, bits, limit }
    }

    #[inline]
    pub(crate) fn encode(&self, p: &Point) -> u128 {
        let mask = (1u128 << self.bits) - 1;
        let offset = 1i128 << (self.bits - 1);
        let mut key = 0u128;
        for (i, &c) in p[..self.dim].iter().enumerate() {
            key |= (((c as i128) + offset) as u128 & mask) << (self.bits as usize * i);
        }
        key
    }

    pub(crate) fn decode(&self, key: u128) -> Point {
        let mask = (1u128 << self.bits) - 1;
        let offset = 1i128 << (self.bits - 1);
        let mut p = [0; MAX_DIM];
        for (i, c) in p[..self.dim].iter_mut().enumerate() {
            *c = (((key >> (self.bits as usize * i)) & mask) as i128 - offset) as i64;
        }
        p
    }

    #[inline]
    pub(crate) fn in_range(&self, p: &Point) -> bool {
        p[..self.dim].iter().all(|c| c.abs() <= self.limit)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SiteEntry<T> {
    pub visits: u64,
    window_visits: u64,
    window_epoch: u64,
    pub data: T,
}

/// Result of one step: the visit count the new site had before the step and
/// mutable access to its payload.
pub struct Visit<'a, T> {
    pub previous_visits: u64,
    pub data: &'a mut T,
}

#[derive(Clone, Debug)]
pub struct PolymerWalkState<T = ()> {
    codec: SiteCodec,
    n: u64,
    position: Point,
    sites: FxHashMap<u128, SiteEntry<T>>,
    max_local_time: u64,
    /// `silt[p - 2] = I_n^[p]` for `p = 2..=max_power`.
    silt: Vec<u128>,
    window_start: u64,
    window_epoch: u64,
    window_silt: u128,
}

impl<T: Default> PolymerWalkState<T> {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_max_power(dim, DEFAULT_MAX_POWER)
    }

    pub fn with_max_power(dim: usize, max_power: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::OutOfRange {
                name: "d",
                value: dim as f64,
                constraint: format!("[1, {MAX_DIM}]"),
            });
        }
        if max_power < 2 {
            return Err(Error::OutOfRange {
                name: "max_power",
                value: max_power as f64,
                constraint: "[2, inf)".into(),
            });
        }
        Ok(PolymerWalkState {
            codec: SiteCodec::new(dim),
            n: 0,
            position: [0; MAX_DIM],
            sites: FxHashMap::default(),
            max_local_time: 0,
            silt: vec![0; max_power - 1],
            window_start: 0,
            window_epoch: 0,
            window_silt: 0,
        })
    }

    /// Sample one step from `law` and record the visit to the new site.
    #[inline]
    pub fn advance<R: Rng + ?Sized>(&mut self, law: &StepLaw, rng: &mut R) -> Visit<'_, T> {
        debug_assert_eq!(law.dim(), self.dim());
        let step = *law.sample_step(rng);
        self.apply(&step)
    }

    /// Move by an explicit step vector of length `d`.
    pub fn apply_step(&mut self, step: &[i64]) -> Result<Visit<'_, T>> {
        let step = to_point(step, self.dim())
            .map_err(|_| Error::Dimension(format!("step {step:?} for a d={} walk", self.dim())))?;
        Ok(self.apply(&step))
    }

    #[inline]
    pub(crate) fn apply(&mut self, step: &Point) -> Visit<'_, T> {
        let dim = self.codec.dim;
        for i in 0..dim {
            self.position[i] += step[i];
        }
        assert!(
            self.codec.in_range(&self.position),
            "walk left the encodable lattice box at {:?}",
            &self.position[..dim]
        );
        self.n += 1;
        let key = self.codec.encode(&self.position);
        let epoch = self.window_epoch;
        let entry = self.sites.entry(key).or_default();

        let m = entry.visits;
        entry.visits = m + 1;
        let (m128, m1) = (m as u128, m as u128 + 1);
        let (mut old_pow, mut new_pow) = (m128 * m128, m1 * m1);
        for s in self.silt.iter_mut() {
            *s += new_pow - old_pow;
            old_pow *= m128;
            new_pow *= m1;
        }
        if m + 1 > self.max_local_time {
            self.max_local_time = m + 1;
        }

        if entry.window_epoch != epoch {
            entry.window_epoch = epoch;
            entry.window_visits = 0;
        }
        let w = entry.window_visits as u128;
        self.window_silt += 2 * w + 1;
        entry.window_visits += 1;

        Visit {
            previous_visits: m,
            data: &mut entry.data,
        }
    }
}

impl<T> PolymerWalkState<T> {
    pub fn dim(&self) -> usize {
        self.codec.dim
    }

    /// Number of steps taken, `n`.
    pub fn steps(&self) -> u64 {
        self.n
    }

    /// Current position `S_n`.
    pub fn position(&self) -> &[i64] {
        &self.position[..self.codec.dim]
    }

    pub fn max_power(&self) -> usize {
        self.silt.len() + 1
    }

    fn key_of(&self, x: &[i64]) -> Option<u128> {
        let p = to_point(x, self.dim()).ok()?;
        self.codec.in_range(&p).then(|| self.codec.encode(&p))
    }

    /// `N_n(x)`.
    pub fn local_time(&self, x: &[i64]) -> u64 {
        self.key_of(x)
            .and_then(|k| self.sites.get(&k))
            .map_or(0, |e| e.visits)
    }

    /// `N_{a,n}(x)` for the current window start `a`.
    pub fn window_local_time(&self, x: &[i64]) -> u64 {
        self.key_of(x)
            .and_then(|k| self.sites.get(&k))
            .filter(|e| e.window_epoch == self.window_epoch)
            .map_or(0, |e| e.window_visits)
    }

    /// `N*_n`.
    pub fn max_local_time(&self) -> u64 {
        self.max_local_time
    }

    /// `I_n^[p]`; `p = 1` gives `n`. `None` above the tracked maximum power.
    pub fn silt(&self, p: usize) -> Option<u128> {
        match p {
            0 => Some(self.sites.len() as u128),
            1 => Some(self.n as u128),
            _ => self.silt.get(p - 2).copied(),
        }
    }

    /// `I_n = I_n^[2]`.
    pub fn intersection_local_time(&self) -> u128 {
        self.silt[0]
    }

    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    /// `I_{a,n}` for the current window start `a`.
    pub fn window_silt(&self) -> u128 {
        self.window_silt
    }

    /// Number of distinct sites visited (the range).
    pub fn range(&self) -> usize {
        self.sites.len()
    }

    /// Restart the windowed counters at `a`, which must equal the current step.
    pub fn reset_window(&mut self, a: u64) -> Result<()> {
        if a != self.n {
            return Err(Error::WindowMismatch {
                requested: a,
                current: self.n,
            });
        }
        self.window_start = a;
        self.window_epoch += 1;
        self.window_silt = 0;
        Ok(())
    }

    /// Visited sites with their local times, in unspecified order.
    pub fn local_times(&self) -> impl Iterator<Item = (Vec<i64>, u64)> + '_ {
        let dim = self.dim();
        self.sites
            .iter()
            .map(move |(k, e)| (self.codec.decode(*k)[..dim].to_vec(), e.visits))
    }

    pub(crate) fn entry_at(&self, x: &[i64]) -> Option<&SiteEntry<T>> {
        self.key_of(x).and_then(|k| self.sites.get(&k))
    }
}
