//! Exact simulation of the two-layer order-flow model.
//!
//! The core layer is a pair of independent Hawkes processes (buy and sell)
//! with baseline `ν` and kernel `a₀ φ₀`. Every event, core or reaction, of
//! sign `s` excites reaction events of sign `s` through `a₁ m₁ φ₁` and of
//! sign `-s` through `a₁ m₂ φ₂`.
//!
//! Sampling uses the Poisson cluster representation. Immigrants are drawn
//! on one reserved random stream; the core descendants of immigrant `r` use
//! stream `2r` and its reaction descendants stream `2r + 1`. Clusters can
//! therefore be generated in any order, on any number of threads, and a
//! run is fully determined by `(params, T, seed)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{PathGrid, UniformGrid};
use crate::kernels::{KernelMatrixSpec, KernelSpec};
use crate::rng::stream_rng;

/// Largest expected number of events a single simulation may produce.
pub const MEMORY_CAP: usize = 40_000_000;

const IMMIGRANT_STREAM: u64 = u64::MAX;
const THINNING_STREAM: u64 = u64::MAX - 1;
/// Stream reserved for callers that draw injected event times.
pub const INJECTION_STREAM: u64 = u64::MAX - 2;
/// Cluster streams of injected events start here.
const INJECTED_ROOT_BASE: u64 = 1 << 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mark {
    CoreBuy,
    CoreSell,
    ReactBuy,
    ReactSell,
}

impl Mark {
    pub const ALL: [Mark; 4] = [Mark::CoreBuy, Mark::CoreSell, Mark::ReactBuy, Mark::ReactSell];

    pub fn is_buy(self) -> bool {
        matches!(self, Mark::CoreBuy | Mark::ReactBuy)
    }

    pub fn is_core(self) -> bool {
        matches!(self, Mark::CoreBuy | Mark::CoreSell)
    }

    pub fn sign(self) -> f64 {
        if self.is_buy() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Mark::CoreBuy => "CB",
            Mark::CoreSell => "CS",
            Mark::ReactBuy => "RB",
            Mark::ReactSell => "RS",
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        Ok(match code {
            "CB" => Mark::CoreBuy,
            "CS" => Mark::CoreSell,
            "RB" => Mark::ReactBuy,
            "RS" => Mark::ReactSell,
            other => return Err(Error::Parse(format!("unknown mark `{other}`"))),
        })
    }

    /// Same layer, opposite side.
    pub fn flipped(self) -> Self {
        match self {
            Mark::CoreBuy => Mark::CoreSell,
            Mark::CoreSell => Mark::CoreBuy,
            Mark::ReactBuy => Mark::ReactSell,
            Mark::ReactSell => Mark::ReactBuy,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn reaction(buy: bool) -> Self {
        if buy {
            Mark::ReactBuy
        } else {
            Mark::ReactSell
        }
    }

    fn core(buy: bool) -> Self {
        if buy {
            Mark::CoreBuy
        } else {
            Mark::CoreSell
        }
    }
}

/// Time-sorted marked events on `[0, horizon]`.
///
/// Times are sorted with ties broken by mark; with continuous delay
/// distributions ties occur with probability zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub times: Vec<f64>,
    pub marks: Vec<Mark>,
    pub horizon: f64,
}

impl EventStream {
    pub fn empty(horizon: f64) -> Self {
        Self { times: Vec::new(), marks: Vec::new(), horizon }
    }

    /// Sorts arbitrary events into a stream.
    pub fn from_events(mut events: Vec<(f64, Mark)>, horizon: f64) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (times, marks) = events.into_iter().unzip();
        Self { times, marks, horizon }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Mark)> + '_ {
        self.times.iter().copied().zip(self.marks.iter().copied())
    }

    pub fn count(&self, mark: Mark) -> usize {
        self.marks.iter().filter(|m| **m == mark).count()
    }

    /// Union of two streams on the same horizon.
    pub fn merged(&self, other: &EventStream) -> Self {
        let events = self.iter().chain(other.iter()).collect();
        Self::from_events(events, self.horizon.max(other.horizon))
    }

    /// Stream with buys and sells exchanged.
    pub fn flipped(&self) -> Self {
        Self::from_events(self.iter().map(|(t, m)| (t, m.flipped())).collect(), self.horizon)
    }

    /// CSV with columns `time,mark`, nine decimals.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "mark"])?;
        for (t, m) in self.iter() {
            w.write_record([format!("{t:.9}"), m.code().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R, horizon: Option<f64>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut events = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let t: f64 = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad time in {rec:?}")))?;
            let m = Mark::from_code(rec.get(1).unwrap_or("").trim())?;
            events.push((t, m));
        }
        let last = events.iter().map(|e| e.0).fold(0.0, f64::max);
        Ok(Self::from_events(events, horizon.unwrap_or(last)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerParams {
    pub nu: f64,
    pub a0: f64,
    pub core_kernel: KernelSpec,
    pub a1: f64,
    pub reaction: KernelMatrixSpec,
}

impl TwoLayerParams {
    pub fn new(nu: f64, a0: f64, core_kernel: KernelSpec, a1: f64, reaction: KernelMatrixSpec) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParams(format!("baseline must be positive, got {nu}")));
        }
        if !(0.0..1.0).contains(&a0) {
            return Err(Error::InvalidParams(format!("core branching ratio must lie in [0, 1), got {a0}")));
        }
        if !(0.0..1.0).contains(&a1) {
            return Err(Error::InvalidParams(format!("reaction branching ratio must lie in [0, 1), got {a1}")));
        }
        Ok(Self { nu, a0, core_kernel, a1, reaction })
    }

    /// Expected total number of events on `[0, T]` without edge losses.
    pub fn expected_total(&self, horizon: f64) -> f64 {
        2.0 * self.nu * horizon / ((1.0 - self.a0) * (1.0 - self.a1))
    }
}

struct Offspring {
    core: Option<Poisson<f64>>,
    same: Option<Poisson<f64>>,
    cross: Option<Poisson<f64>>,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    if mean > 0.0 {
        Poisson::new(mean).ok()
    } else {
        None
    }
}

fn draw(dist: &Option<Poisson<f64>>, rng: &mut ChaCha8Rng) -> usize {
    dist.as_ref().map_or(0, |d| d.sample(rng) as usize)
}

struct Generator<'a> {
    params: &'a TwoLayerParams,
    horizon: f64,
    seed: u64,
    offspring: Offspring,
    reactions: bool,
}

impl<'a> Generator<'a> {
    fn new(params: &'a TwoLayerParams, horizon: f64, seed: u64, reactions: bool) -> Self {
        let m = &params.reaction;
        let a1 = if reactions { params.a1 } else { 0.0 };
        Self {
            params,
            horizon,
            seed,
            offspring: Offspring {
                core: poisson(params.a0),
                same: poisson(a1 * m.same_mass),
                cross: poisson(a1 * m.cross_mass),
            },
            reactions: reactions && a1 > 0.0,
        }
    }

    /// Root event plus all descendants; `spawn_core` false keeps the root
    /// from having core children (it still triggers reactions).
    fn cluster(&self, root: f64, buy: bool, stream: u64, spawn_core: bool) -> Vec<(f64, Mark)> {
        let mut out = vec![(root, Mark::core(buy))];
        if spawn_core {
            if let Some(dist) = &self.offspring.core {
                let mut rng = stream_rng(self.seed, 2 * stream);
                let kernel = &self.params.core_kernel;
                let mut next = 0;
                while next < out.len() {
                    let (t, mark) = out[next];
                    next += 1;
                    let n = dist.sample(&mut rng) as usize;
                    for _ in 0..n {
                        let c = t + kernel.sample_delay(&mut rng);
                        if c <= self.horizon {
                            out.push((c, mark));
                        }
                    }
                }
            }
        }
        if self.reactions {
            let mut rng = stream_rng(self.seed, 2 * stream + 1);
            let m = &self.params.reaction;
            let mut pending: Vec<(f64, bool)> = out.iter().map(|(t, mk)| (*t, mk.is_buy())).collect();
            while let Some((t, buy)) = pending.pop() {
                for _ in 0..draw(&self.offspring.same, &mut rng) {
                    let c = t + m.same.sample_delay(&mut rng);
                    if c <= self.horizon {
                        out.push((c, Mark::reaction(buy)));
                        pending.push((c, buy));
                    }
                }
                for _ in 0..draw(&self.offspring.cross, &mut rng) {
                    let c = t + m.cross.sample_delay(&mut rng);
                    if c <= self.horizon {
                        out.push((c, Mark::reaction(!buy)));
                        pending.push((c, !buy));
                    }
                }
            }
        }
        out
    }

    fn immigrants(&self) -> Vec<(f64, bool)> {
        let mut rng = stream_rng(self.seed, IMMIGRANT_STREAM);
        let dist = poisson(self.params.nu * self.horizon);
        let n_buy = draw(&dist, &mut rng);
        let n_sell = draw(&dist, &mut rng);
        let mut roots = Vec::with_capacity(n_buy + n_sell);
        for i in 0..n_buy + n_sell {
            roots.push((self.horizon * rng.random::<f64>(), i < n_buy));
        }
        roots
    }

    fn run(&self, injected: &[f64], injected_spawn: bool, baseline: bool) -> Vec<(f64, Mark)> {
        let roots = if baseline { self.immigrants() } else { Vec::new() };
        let mut clusters: Vec<Vec<(f64, Mark)>> = roots
            .par_iter()
            .enumerate()
            .map(|(r, &(t, buy))| self.cluster(t, buy, r as u64, true))
            .collect();
        let extra: Vec<Vec<(f64, Mark)>> = injected
            .par_iter()
            .enumerate()
            .filter(|(_, t)| **t <= self.horizon)
            .map(|(j, &t)| self.cluster(t, true, INJECTED_ROOT_BASE + j as u64, injected_spawn))
            .collect();
        clusters.extend(extra);
        clusters.into_iter().flatten().collect()
    }
}

fn check_budget(params: &TwoLayerParams, horizon: f64, injected: usize, baseline: bool) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let base = if baseline { params.expected_total(horizon) } else { 0.0 };
    let expected = base + injected as f64 / ((1.0 - params.a0) * (1.0 - params.a1));
    if expected > MEMORY_CAP as f64 {
        return Err(Error::MemoryCap { expected, cap: MEMORY_CAP });
    }
    Ok(())
}

/// Two independent Hawkes processes (core buys and sells).
pub fn simulate_core(nu: f64, a0: f64, kernel: &KernelSpec, horizon: f64, seed: u64) -> Result<EventStream> {
    let params = TwoLayerParams::new(nu, a0, kernel.clone(), 0.0, KernelMatrixSpec::pareto(0.5, 1.0)?)?;
    check_budget(&params, horizon, 0, true)?;
    let events = Generator::new(&params, horizon, seed, false).run(&[], false, true);
    Ok(EventStream::from_events(events, horizon))
}

/// Full model: core layer plus reaction layer.
pub fn simulate_two_layer(params: &TwoLayerParams, horizon: f64, seed: u64) -> Result<EventStream> {
    check_budget(params, horizon, 0, true)?;
    let events = Generator::new(params, horizon, seed, true).run(&[], false, true);
    Ok(EventStream::from_events(events, horizon))
}

/// Extra core buys at the given times, together with their descendants.
///
/// With `endogenous` the injected buys have core children like any core
/// event; otherwise they only trigger reactions. Clusters of injected
/// events use streams disjoint from the baseline, so
/// `simulate_two_layer(p, T, s)` merged with `simulate_injected(p, T, s, ..)`
/// is the matched-seed path with the injection.
pub fn simulate_injected(
    params: &TwoLayerParams,
    horizon: f64,
    seed: u64,
    times: &[f64],
    endogenous: bool,
) -> Result<EventStream> {
    check_budget(params, horizon, times.len(), false)?;
    let events = Generator::new(params, horizon, seed, true).run(times, endogenous, false);
    Ok(EventStream::from_events(events, horizon))
}

/// Ogata thinning for exponential-mixture kernels, used to cross-check the
/// cluster sampler.
pub fn simulate_thinning(params: &TwoLayerParams, horizon: f64, seed: u64) -> Result<EventStream> {
    let parts = |k: &KernelSpec| match k {
        KernelSpec::ExpMixture { weights, rates } => Ok((weights.clone(), rates.clone())),
        KernelSpec::ShiftedPareto { .. } => {
            Err(Error::UnsupportedKernel("thinning needs exponential-mixture kernels".into()))
        }
    };
    let (w0, r0) = parts(&params.core_kernel)?;
    let (w1, r1) = parts(&params.reaction.same)?;
    let (w2, r2) = parts(&params.reaction.cross)?;
    check_budget(params, horizon, 0, true)?;
    let m1 = params.a1 * params.reaction.same_mass;
    let m2 = params.a1 * params.reaction.cross_mass;

    // Per side: decaying sums over core events (core kernel) and over all
    // events (same- and cross-side reaction kernels).
    let mut core_state = [vec![0.0; r0.len()], vec![0.0; r0.len()]];
    let mut same_state = [vec![0.0; r1.len()], vec![0.0; r1.len()]];
    let mut cross_state = [vec![0.0; r2.len()], vec![0.0; r2.len()]];
    let dot = |w: &[f64], r: &[f64], s: &[f64]| -> f64 { w.iter().zip(r).zip(s).map(|((w, r), s)| w * r * s).sum() };
    let decay = |s: &mut [f64], r: &[f64], dt: f64| {
        for (x, r) in s.iter_mut().zip(r) {
            *x *= (-r * dt).exp();
        }
    };

    let mut rng = stream_rng(seed, THINNING_STREAM);
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        // intensities at t (nonincreasing until the next event)
        let lam = |cs: &[Vec<f64>; 2], ss: &[Vec<f64>; 2], xs: &[Vec<f64>; 2]| -> [f64; 4] {
            [
                params.nu + params.a0 * dot(&w0, &r0, &cs[0]),
                params.nu + params.a0 * dot(&w0, &r0, &cs[1]),
                m1 * dot(&w1, &r1, &ss[0]) + m2 * dot(&w2, &r2, &xs[1]),
                m1 * dot(&w1, &r1, &ss[1]) + m2 * dot(&w2, &r2, &xs[0]),
            ]
        };
        let bound: f64 = lam(&core_state, &same_state, &cross_state).iter().sum();
        let e: f64 = Exp1.sample(&mut rng);
        let dt = e / bound;
        if t + dt > horizon {
            break;
        }
        t += dt;
        for side in 0..2 {
            decay(&mut core_state[side], &r0, dt);
            decay(&mut same_state[side], &r1, dt);
            decay(&mut cross_state[side], &r2, dt);
        }
        let now = lam(&core_state, &same_state, &cross_state);
        let total: f64 = now.iter().sum();
        let u: f64 = rng.random::<f64>() * bound;
        if u >= total {
            continue;
        }
        let mut acc = 0.0;
        let mut mark = Mark::ReactSell;
        for (k, l) in now.iter().enumerate() {
            acc += l;
            if u < acc {
                mark = Mark::ALL[k];
                break;
            }
        }
        let side = if mark.is_buy() { 0 } else { 1 };
        if mark.is_core() {
            core_state[side].iter_mut().for_each(|x| *x += 1.0);
        }
        same_state[side].iter_mut().for_each(|x| *x += 1.0);
        cross_state[side].iter_mut().for_each(|x| *x += 1.0);
        events.push((t, mark));
    }
    Ok(EventStream::from_events(events, horizon))
}

/// Kernel contributions `[core buy, core sell, reaction buy, reaction sell]`
/// of a single past event at lag `dt`, using `f` to turn a kernel and lag
/// into a value (density or distribution function).
fn contributions(params: &TwoLayerParams, mark: Mark, dt: f64, f: impl Fn(&KernelSpec, f64) -> f64) -> [f64; 4] {
    let m = &params.reaction;
    let same = params.a1 * m.same_mass * f(&m.same, dt);
    let cross = params.a1 * m.cross_mass * f(&m.cross, dt);
    let mut out = [0.0; 4];
    if mark.is_core() {
        out[mark.index()] = params.a0 * f(&params.core_kernel, dt);
    }
    if mark.is_buy() {
        out[2] = same;
        out[3] = cross;
    } else {
        out[2] = cross;
        out[3] = same;
    }
    out
}

const COLUMNS: [&str; 4] = ["core_buy", "core_sell", "react_buy", "react_sell"];

fn four_columns(grid: &UniformGrid, cols: [Vec<f64>; 4]) -> PathGrid {
    let mut p = PathGrid::on(grid);
    for (name, c) in COLUMNS.iter().zip(cols) {
        p.push(name, c).expect("equal lengths");
    }
    p
}

/// Conditional intensities of the four event types, from events strictly
/// before each grid time.
pub fn intensity_path(stream: &EventStream, params: &TwoLayerParams, grid: &UniformGrid) -> PathGrid {
    let n = grid.len();
    let mut cols: [Vec<f64>; 4] = std::array::from_fn(|k| vec![if k < 2 { params.nu } else { 0.0 }; n]);
    for i in 0..n {
        let t = grid.time(i);
        for (s, mark) in stream.iter().take_while(|(s, _)| *s < t) {
            let c = contributions(params, mark, t - s, |k, x| k.density(x));
            for k in 0..4 {
                cols[k][i] += c[k];
            }
        }
    }
    four_columns(grid, cols)
}

/// Exact compensators `Λ(t) = ∫_0^t λ` of the four types at each grid time.
pub fn compensator_path(stream: &EventStream, params: &TwoLayerParams, grid: &UniformGrid) -> PathGrid {
    let n = grid.len();
    let mut cols: [Vec<f64>; 4] =
        std::array::from_fn(|k| (0..n).map(|i| if k < 2 { params.nu * grid.time(i) } else { 0.0 }).collect());
    for i in 0..n {
        let t = grid.time(i);
        for (s, mark) in stream.iter().take_while(|(s, _)| *s < t) {
            let c = contributions(params, mark, t - s, |k, x| k.cdf(x));
            for k in 0..4 {
                cols[k][i] += c[k];
            }
        }
    }
    four_columns(grid, cols)
}

/// Right-continuous counts of the four types on the grid.
pub fn counting_path(stream: &EventStream, grid: &UniformGrid) -> PathGrid {
    let n = grid.len();
    let mut cols: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut counts = [0usize; 4];
    let mut next = 0;
    for i in 0..n {
        let t = grid.time(i);
        while next < stream.len() && stream.times[next] <= t {
            counts[stream.marks[next].index()] += 1;
            next += 1;
        }
        for k in 0..4 {
            cols[k][i] = counts[k] as f64;
        }
    }
    four_columns(grid, cols)
}

/// Counting processes minus their exact compensators.
pub fn martingale_residual(stream: &EventStream, params: &TwoLayerParams, grid: &UniformGrid) -> PathGrid {
    let counts = counting_path(stream, grid);
    let comp = compensator_path(stream, params, grid);
    let cols = COLUMNS.map(|name| {
        let c = counts.series(name).expect("column");
        let l = comp.series(name).expect("column");
        c.iter().zip(l).map(|(a, b)| a - b).collect::<Vec<f64>>()
    });
    four_columns(grid, cols)
}

/// Aggregate flows on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateFlows {
    /// All events, `F⁺ + F⁻ + N⁺ + N⁻`.
    pub unsigned: PathGrid,
    /// Signed total, `F⁺ - F⁻ + N⁺ - N⁻`.
    pub signed: PathGrid,
    /// Core events, `F⁺ + F⁻`.
    pub core_unsigned: PathGrid,
    /// Core imbalance, `F⁺ - F⁻`.
    pub core_signed: PathGrid,
}

pub fn aggregate_flows(stream: &EventStream, grid: &UniformGrid) -> AggregateFlows {
    let c = counting_path(stream, grid);
    let col = |name| c.series(name).expect("column");
    let (fb, fs, nb, ns) = (col("core_buy"), col("core_sell"), col("react_buy"), col("react_sell"));
    let n = c.len();
    let build = |name: &str, f: &dyn Fn(usize) -> f64| {
        PathGrid::on(grid).with(name, (0..n).map(f).collect()).expect("single column")
    };
    AggregateFlows {
        unsigned: build("U", &|i| fb[i] + fs[i] + nb[i] + ns[i]),
        signed: build("S", &|i| fb[i] - fs[i] + nb[i] - ns[i]),
        core_unsigned: build("F", &|i| fb[i] + fs[i]),
        core_signed: build("V", &|i| fb[i] - fs[i]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{expected_count, resolvent};
    use crate::rng::derive_seed;

    fn mean_sd(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    fn pareto_params(a0: f64, a1: f64) -> TwoLayerParams {
        TwoLayerParams::new(
            0.5,
            a0,
            KernelSpec::shifted_pareto(0.4).unwrap(),
            a1,
            KernelMatrixSpec::pareto(0.8, 0.7).unwrap(),
        )
        .unwrap()
    }

    fn exp_params(a0: f64, a1: f64) -> TwoLayerParams {
        TwoLayerParams::new(
            0.5,
            a0,
            KernelSpec::exp_mixture(vec![0.5, 0.5], vec![0.5, 3.0]).unwrap(),
            a1,
            KernelMatrixSpec::new(KernelSpec::exponential(2.0).unwrap(), 0.7, KernelSpec::exponential(0.7).unwrap(), 0.3)
                .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn marks_round_trip() {
        for m in Mark::ALL {
            assert_eq!(Mark::from_code(m.code()).unwrap(), m);
            assert_eq!(m.flipped().flipped(), m);
        }
        assert!(Mark::from_code("XX").is_err());
    }

    #[test]
    fn poisson_when_unexcited() {
        let k = KernelSpec::shifted_pareto(0.375).unwrap();
        let counts: Vec<f64> =
            (0..1000).map(|i| simulate_core(1.0, 0.0, &k, 50.0, derive_seed(1, i)).unwrap().len() as f64).collect();
        let (m, sd) = mean_sd(&counts);
        assert!((m - 100.0).abs() < 3.0 * sd / (1000f64).sqrt(), "{m}");
    }

    #[test]
    fn core_mean_matches_resolvent() {
        let (nu, a0, t) = (1.0, 0.7, 100.0);
        let k = KernelSpec::shifted_pareto(0.5).unwrap();
        let counts: Vec<f64> = (0..1000)
            .map(|i| simulate_core(nu, a0, &k, t, derive_seed(2, i)).unwrap().count(Mark::CoreBuy) as f64)
            .collect();
        let (m, sd) = mean_sd(&counts);
        let grid = UniformGrid::over(t, 4000).unwrap();
        let psi = resolvent(&k.sample_on(grid), a0).unwrap();
        let want = expected_count(nu, &psi)[grid.n_steps];
        assert!((m - want).abs() < 3.0 * sd / (1000f64).sqrt(), "{m} vs {want}");
    }

    #[test]
    fn seeded_runs_are_reproducible_across_thread_counts() {
        let p = pareto_params(0.8, 0.8);
        let runs: Vec<EventStream> = [1, 3]
            .iter()
            .map(|&n| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
                pool.install(|| simulate_two_layer(&p, 200.0, 42).unwrap())
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_ne!(runs[0], simulate_two_layer(&p, 200.0, 43).unwrap());
        assert!(runs[0].times.windows(2).all(|w| w[0] <= w[1]));
        assert!(runs[0].times.iter().all(|t| (0.0..=200.0).contains(t)));
    }

    #[test]
    fn reaction_layer_leaves_core_events_untouched() {
        let p = pareto_params(0.6, 0.5);
        let full = simulate_two_layer(&p, 300.0, 9).unwrap();
        let core = simulate_core(p.nu, p.a0, &p.core_kernel, 300.0, 9).unwrap();
        let core_part: Vec<(f64, Mark)> = full.iter().filter(|(_, m)| m.is_core()).collect();
        assert_eq!(core_part, core.iter().collect::<Vec<_>>());
        let off = TwoLayerParams { a1: 0.0, ..p };
        assert_eq!(simulate_two_layer(&off, 300.0, 9).unwrap(), core);
    }

    #[test]
    fn side_symmetry_and_reaction_progeny() {
        let p = pareto_params(0.5, 0.6);
        let t = 200.0;
        let runs: Vec<EventStream> = (0..1000).map(|i| simulate_two_layer(&p, t, derive_seed(3, i)).unwrap()).collect();
        let per = |m: Mark| runs.iter().map(|s| s.count(m) as f64).collect::<Vec<_>>();
        for (a, b) in [(Mark::CoreBuy, Mark::CoreSell), (Mark::ReactBuy, Mark::ReactSell)] {
            let (ma, sa) = mean_sd(&per(a));
            let (mb, sb) = mean_sd(&per(b));
            let se = ((sa * sa + sb * sb) / 1000.0).sqrt();
            assert!((ma - mb).abs() < 3.0 * se, "{a:?}: {ma} vs {mb}");
        }
        // Without edge losses every event has a1/(1-a1) reaction descendants
        // in expectation; compare on an infinite-horizon proxy with short kernels.
        let q = exp_params(0.5, 0.6);
        let runs: Vec<(f64, f64)> = (0..1000)
            .map(|i| {
                let s = simulate_two_layer(&q, 2000.0, derive_seed(4, i)).unwrap();
                let core = (s.count(Mark::CoreBuy) + s.count(Mark::CoreSell)) as f64;
                (core, s.len() as f64 - core)
            })
            .collect();
        let diffs: Vec<f64> = runs.iter().map(|(c, r)| r - c * q.a1 / (1.0 - q.a1)).collect();
        let (m, sd) = mean_sd(&diffs);
        // edge losses at T are a vanishing fraction; allow them on top of MC error
        let edge = 10.0;
        assert!(m.abs() < 3.0 * sd / (1000f64).sqrt() + edge, "{m}");
    }

    fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (n, m) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        d
    }

    #[test]
    fn thinning_agrees_with_cluster_sampler() {
        let p = exp_params(0.5, 0.5);
        let t = 50.0;
        let a: Vec<f64> = (0..1000).map(|i| simulate_two_layer(&p, t, derive_seed(5, i)).unwrap().len() as f64).collect();
        let b: Vec<f64> = (0..1000).map(|i| simulate_thinning(&p, t, derive_seed(6, i)).unwrap().len() as f64).collect();
        let d = ks_two_sample(a, b);
        let critical = 1.628 * (2.0f64 / 1000.0).sqrt();
        assert!(d < critical, "KS {d} vs {critical}");
        assert_eq!(simulate_thinning(&p, t, 1).unwrap(), simulate_thinning(&p, t, 1).unwrap());
        assert!(matches!(simulate_thinning(&pareto_params(0.5, 0.5), t, 1), Err(Error::UnsupportedKernel(_))));
        let quiet = TwoLayerParams { a0: 0.0, a1: 0.0, ..p };
        let counts: Vec<f64> = (0..1000).map(|i| simulate_thinning(&quiet, t, derive_seed(7, i)).unwrap().len() as f64).collect();
        let (m, sd) = mean_sd(&counts);
        assert!((m - 50.0).abs() < 3.0 * sd / (1000f64).sqrt());
    }

    #[test]
    fn intensity_examples() {
        let p = pareto_params(0.5, 0.6);
        let grid = UniformGrid::over(10.0, 20).unwrap();
        let lam = intensity_path(&EventStream::empty(10.0), &p, &grid);
        assert!(lam.series("core_buy").unwrap().iter().all(|v| *v == p.nu));
        assert!(lam.series("react_sell").unwrap().iter().all(|v| *v == 0.0));
        let one = EventStream::from_events(vec![(2.0, Mark::CoreBuy)], 10.0);
        let lam = intensity_path(&one, &p, &grid);
        for i in 0..grid.len() {
            let t = grid.time(i);
            let (rb, rs) = (lam.series("react_buy").unwrap()[i], lam.series("react_sell").unwrap()[i]);
            if t > 2.0 {
                assert!((rb - p.a1 * p.reaction.same_density(t - 2.0)).abs() < 1e-15);
                assert!((rs - p.a1 * p.reaction.cross_density(t - 2.0)).abs() < 1e-15);
            } else {
                assert_eq!(rb, 0.0);
            }
        }
    }

    #[test]
    fn mean_intensity_matches_resolvent() {
        let (nu, a0, t) = (1.0, 0.6, 40.0);
        let k = KernelSpec::shifted_pareto(0.5).unwrap();
        let p = TwoLayerParams::new(nu, a0, k.clone(), 0.0, KernelMatrixSpec::pareto(0.5, 1.0).unwrap()).unwrap();
        let grid = UniformGrid::over(t, 99).unwrap();
        let mut mean = vec![0.0; grid.len()];
        for i in 0..1000 {
            let s = simulate_core(nu, a0, &k, t, derive_seed(8, i)).unwrap();
            let lam = intensity_path(&s, &p, &grid);
            for (m, v) in mean.iter_mut().zip(lam.series("core_buy").unwrap()) {
                *m += v / 1000.0;
            }
        }
        // E λ_t = ν (1 + ∫_0^t ψ)
        let fine = UniformGrid::over(t, 9900).unwrap();
        let psi = resolvent(&k.sample_on(fine), a0).unwrap();
        let mut cum = vec![0.0; fine.len()];
        for i in 1..fine.len() {
            cum[i] = cum[i - 1] + 0.5 * fine.step * (psi.values[i - 1] + psi.values[i]);
        }
        let avg_sim = mean.iter().sum::<f64>() / mean.len() as f64;
        let avg_ref = (0..grid.len()).map(|i| nu * (1.0 + cum[100 * i])).sum::<f64>() / grid.len() as f64;
        assert!((avg_sim - avg_ref).abs() < 0.05 * avg_ref, "{avg_sim} vs {avg_ref}");
    }

    #[test]
    fn residuals_are_centered_with_compensator_variance() {
        let t = 50.0;
        let grid = UniformGrid::over(t, 10).unwrap();
        for p in [TwoLayerParams { a0: 0.0, a1: 0.0, ..pareto_params(0.0, 0.0) }, pareto_params(0.6, 0.5)] {
            let mut res = Vec::new();
            let mut comp = Vec::new();
            for i in 0..1000 {
                let s = simulate_two_layer(&p, t, derive_seed(9, i)).unwrap();
                let r = martingale_residual(&s, &p, &grid);
                let l = compensator_path(&s, &p, &grid);
                res.push(r.series("core_buy").unwrap()[10] + r.series("react_buy").unwrap()[10]);
                comp.push(l.series("core_buy").unwrap()[10] + l.series("react_buy").unwrap()[10]);
            }
            let (m, sd) = mean_sd(&res);
            assert!(m.abs() < 3.0 * sd / (1000f64).sqrt(), "{m}");
            let (lam, _) = mean_sd(&comp);
            assert!((sd * sd - lam).abs() < 0.1 * lam, "var {} vs {lam}", sd * sd);
        }
    }

    #[test]
    fn aggregate_identities() {
        let p = pareto_params(0.7, 0.7);
        let s = simulate_two_layer(&p, 100.0, 17).unwrap();
        let grid = UniformGrid::over(100.0, 50).unwrap();
        let f = aggregate_flows(&s, &grid);
        let u = f.unsigned.series("U").unwrap();
        let sg = f.signed.series("S").unwrap();
        let core = f.core_unsigned.series("F").unwrap();
        assert_eq!(u[50] as usize, s.len());
        assert!(u.iter().zip(sg).all(|(u, s)| s.abs() <= *u));
        let reactions = s.len() - s.count(Mark::CoreBuy) - s.count(Mark::CoreSell);
        assert_eq!((u[50] - core[50]) as usize, reactions);
        assert!(u.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn injected_clusters_merge_into_matched_path() {
        let p = pareto_params(0.6, 0.6);
        let base = simulate_two_layer(&p, 100.0, 5).unwrap();
        let times = [1.0, 2.5, 7.0];
        for endo in [false, true] {
            let inj = simulate_injected(&p, 100.0, 5, &times, endo).unwrap();
            assert_eq!(inj.iter().filter(|(t, m)| *m == Mark::CoreBuy && times.contains(t)).count(), 3);
            let merged = base.merged(&inj);
            assert_eq!(merged.len(), base.len() + inj.len());
            if !endo {
                assert_eq!(inj.count(Mark::CoreBuy), 3);
                assert_eq!(inj.count(Mark::CoreSell), 0);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_cap() {
        let p = pareto_params(0.5, 0.5);
        let s = simulate_two_layer(&p, 20.0, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = EventStream::read_csv(buf.as_slice(), Some(20.0)).unwrap();
        assert_eq!(back.marks, s.marks);
        assert!(back.times.iter().zip(&s.times).all(|(a, b)| (a - b).abs() < 1e-9));
        let hot = TwoLayerParams { a0: 0.999_999, ..p };
        assert!(matches!(simulate_two_layer(&hot, 1e6, 1), Err(Error::MemoryCap { .. })));
    }
}
