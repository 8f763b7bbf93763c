//! Bounded Nelder–Mead matching optimization.
//!
//! The simplex lives in the unit box: each parameter is mapped linearly, or
//! logarithmically when its lower bound is positive, onto `[0, 1]`, and
//! every trial point is clamped back into the box before it is evaluated.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{large_signal_s11, magnitude_db, operating_point};
use crate::hb::{HbEngine, HbOptions, DEFAULT_HARMONICS};
use crate::linear::s_parameters_at;
use crate::netlist::Circuit;
use crate::{Error, Result};

/// Cost charged per target whose solve fails or does not converge.
pub const FAILURE_PENALTY: f64 = 1e6;
/// Initial simplex edge as a fraction of each (log-)range.
pub const INITIAL_EDGE: f64 = 0.05;
/// Relative jitter applied to the initial edges.
const EDGE_JITTER: f64 = 0.2;
/// Simplex diameter (unit box) below which the search stops.
const COLLAPSE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Tunable {
    /// `element.param`, e.g. `L1.l`.
    pub reference: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Port-1 reflection in dB; met when at or below the goal.
    S11Db,
    /// Efficiency in percent; met when at or above the goal.
    Pce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub freq: f64,
    pub pin: f64,
    pub metric: Metric,
    pub goal: f64,
    pub weight: f64,
    /// Load element choosing the `.output` designation for `pce`.
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptSpec {
    pub tunables: Vec<Tunable>,
    pub targets: Vec<Target>,
    pub max_evals: usize,
    /// Stop once the simplex's cost spread falls to this.
    pub tolerance: f64,
    pub seed: u64,
    pub harmonics: usize,
}

impl Default for OptSpec {
    fn default() -> Self {
        Self {
            tunables: Vec::new(),
            targets: Vec::new(),
            max_evals: 400,
            tolerance: 1e-9,
            seed: 1,
            harmonics: DEFAULT_HARMONICS,
        }
    }
}

impl OptSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.tunables.is_empty() {
            return bad("optimization needs at least one tunable".into());
        }
        if self.targets.is_empty() {
            return bad("optimization needs at least one target".into());
        }
        if self.max_evals == 0 {
            return bad("max_evals must be >= 1".into());
        }
        for t in &self.tunables {
            if !(t.lower.is_finite() && t.upper.is_finite() && t.lower < t.upper) {
                return bad(format!("tunable `{}`: bounds must be finite with lower < upper", t.reference));
            }
        }
        for t in &self.targets {
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return bad("target weights must be > 0".into());
            }
            if !(t.freq > 0.0) {
                return bad("target frequencies must be > 0".into());
            }
        }
        Ok(())
    }

    /// Checks the spec and that every tunable names an element parameter.
    pub fn check_against(&self, circuit: &Circuit) -> Result<()> {
        self.check()?;
        for t in &self.tunables {
            circuit.get_param(&t.reference)?;
        }
        Ok(())
    }
}

/// Map between physical parameters and the unit box.
#[derive(Debug, Clone)]
struct Scaling {
    lower: Vec<f64>,
    upper: Vec<f64>,
    log: Vec<bool>,
}

impl Scaling {
    fn new(lower: &[f64], upper: &[f64]) -> Self {
        Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            log: lower.iter().map(|&l| l > 0.0).collect(),
        }
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                let u = if self.log[i] {
                    (x[i].ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (x[i] - lo) / (hi - lo)
                };
                if u.is_nan() {
                    0.0
                } else {
                    u.clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|i| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                // the box faces map to the bounds exactly
                match u[i] {
                    u if u <= 0.0 => lo,
                    u if u >= 1.0 => hi,
                    u if self.log[i] => (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi),
                    u => (lo + u * (hi - lo)).clamp(lo, hi),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub index: usize,
    pub x: Vec<f64>,
    pub cost: f64,
    /// Best cost seen up to and including this evaluation.
    pub best: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxEvals,
    Collapse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub history: Vec<Evaluation>,
    pub reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_evals: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_evals: 1000,
            tolerance: 1e-12,
            seed: 1,
        }
    }
}

/// Evaluates a batch of points; results in input order.
pub type BatchEval<'a> = dyn FnMut(&[Vec<f64>]) -> Vec<f64> + 'a;

struct Tracker<'f, 'a> {
    f: &'f mut BatchEval<'a>,
    scaling: Scaling,
    history: Vec<Evaluation>,
    best: (Vec<f64>, f64),
    max_evals: usize,
}

impl Tracker<'_, '_> {
    fn left(&self) -> usize {
        self.max_evals - self.history.len()
    }

    /// Costs of unit-box points, truncated to the remaining budget.
    fn eval(&mut self, points: &[Vec<f64>]) -> Vec<f64> {
        let take = points.len().min(self.left());
        let xs: Vec<Vec<f64>> = points[..take].iter().map(|u| self.scaling.from_unit(u)).collect();
        let costs = (self.f)(&xs);
        for (x, &c) in xs.into_iter().zip(&costs) {
            let c = if c.is_nan() { f64::INFINITY } else { c };
            if c < self.best.1 || self.history.is_empty() {
                self.best = (x.clone(), c);
            }
            self.history.push(Evaluation {
                index: self.history.len(),
                x,
                cost: c,
                best: self.best.1,
            });
        }
        costs
    }
}

/// Bounded Nelder–Mead over batches of points.
pub fn minimize_batch(
    f: &mut BatchEval<'_>,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &MinimizeOptions,
) -> Minimum {
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let scaling = Scaling::new(lower, upper);
    let u0 = scaling.to_unit(x0);
    let mut t = Tracker {
        f,
        scaling,
        history: Vec::new(),
        best: (Vec::new(), f64::INFINITY),
        max_evals: opts.max_evals.max(1),
    };
    let finish = |t: Tracker, reason| Minimum {
        x: t.best.0,
        cost: t.best.1,
        history: t.history,
        reason,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut simplex = vec![u0.clone()];
    for i in 0..n {
        let jitter = 1.0 + EDGE_JITTER * (rng.random::<f64>() - 0.5);
        let mut v = u0.clone();
        let edge = INITIAL_EDGE * jitter;
        v[i] = if v[i] + edge <= 1.0 { v[i] + edge } else { v[i] - edge };
        simplex.push(v);
    }
    let mut costs = t.eval(&simplex);
    if costs.len() < simplex.len() {
        return finish(t, StopReason::MaxEvals);
    }
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };
    loop {
        // order vertices by cost; stable on ties so runs are reproducible
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        costs = order.iter().map(|&i| costs[i]).collect();

        let spread = costs[n] - costs[0];
        if spread <= opts.tolerance || (costs[0].is_infinite() && costs[n].is_infinite()) {
            return finish(t, StopReason::Tolerance);
        }
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())))
            .fold(0.0, f64::max);
        if diameter < COLLAPSE {
            return finish(t, StopReason::Collapse);
        }
        if t.left() == 0 {
            return finish(t, StopReason::MaxEvals);
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64)
            .collect();
        let along = |s: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + s * (c - w))
                    .collect(),
            )
        };
        let reflected = along(1.0);
        let fr = t.eval(&[reflected.clone()]);
        let Some(&fr) = fr.first() else {
            return finish(t, StopReason::MaxEvals);
        };
        if fr < costs[0] {
            let expanded = along(2.0);
            let fe = t.eval(&[expanded.clone()]);
            match fe.first() {
                Some(&fe) if fe < fr => {
                    simplex[n] = expanded;
                    costs[n] = fe;
                }
                _ => {
                    simplex[n] = reflected;
                    costs[n] = fr;
                }
            }
            continue;
        }
        if fr < costs[n - 1] {
            simplex[n] = reflected;
            costs[n] = fr;
            continue;
        }
        let (contracted, limit) = if fr < costs[n] {
            (along(0.5), fr)
        } else {
            (along(-0.5), costs[n])
        };
        let fc = t.eval(&[contracted.clone()]);
        let Some(&fc) = fc.first() else {
            return finish(t, StopReason::MaxEvals);
        };
        if fc < limit {
            simplex[n] = contracted;
            costs[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        let shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|v| best.iter().zip(v).map(|(b, x)| b + 0.5 * (x - b)).collect())
            .collect();
        let fs = t.eval(&shrunk);
        for (k, c) in fs.iter().enumerate() {
            simplex[k + 1] = shrunk[k].clone();
            costs[k + 1] = *c;
        }
        if fs.len() < shrunk.len() {
            return finish(t, StopReason::MaxEvals);
        }
    }
}

/// Bounded Nelder–Mead on a scalar function.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &MinimizeOptions,
) -> Minimum {
    let mut batch = |xs: &[Vec<f64>]| xs.iter().map(|x| f(x)).collect::<Vec<f64>>();
    minimize_batch(&mut batch, x0, lower, upper, opts)
}

/// Metric value at one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMetric {
    pub target: usize,
    /// dB for `s11_db`, percent for `pce`; NaN when the solve failed.
    pub value: f64,
    pub met: bool,
    pub converged: bool,
}

/// Evaluates one target on a concrete circuit.
pub fn evaluate_target(circuit: &Circuit, target: &Target, index: usize, harmonics: usize) -> TargetMetric {
    let value = match target.metric {
        Metric::S11Db if !circuit.has_diodes() => {
            s_parameters_at(circuit, target.freq, None).ok().map(|s| s.db(1, 1))
        }
        Metric::S11Db => HbEngine::new(circuit, target.freq, harmonics)
            .and_then(|e| {
                e.solve(
                    target.pin,
                    &HbOptions {
                        harmonics,
                        ..HbOptions::default()
                    },
                )
            })
            .ok()
            .and_then(|sol| large_signal_s11(&sol).ok())
            .map(magnitude_db),
        Metric::Pce => operating_point(
            circuit,
            target.freq,
            target.pin,
            None,
            target.output.as_deref(),
            harmonics,
            None,
        )
        .ok()
        .filter(|(_, sol)| sol.converged)
        .map(|(rec, _)| rec.pce),
    };
    let value = value.filter(|v| v.is_finite());
    let met = value.is_some_and(|v| match target.metric {
        Metric::S11Db => v <= target.goal,
        Metric::Pce => v >= target.goal,
    });
    TargetMetric {
        target: index,
        value: value.unwrap_or(f64::NAN),
        met,
        converged: value.is_some(),
    }
}

fn hinge(target: &Target, m: &TargetMetric) -> f64 {
    if !m.converged {
        return FAILURE_PENALTY;
    }
    match target.metric {
        Metric::S11Db => (m.value - target.goal).max(0.0),
        Metric::Pce => (target.goal - m.value).max(0.0),
    }
}

/// Circuit with the tunables set to `x` (projected into bounds).
pub fn apply(circuit: &Circuit, spec: &OptSpec, x: &[f64]) -> Result<Circuit> {
    let mut c = circuit.clone();
    for (t, &v) in spec.tunables.iter().zip(x) {
        c.set_param(&t.reference, v.clamp(t.lower, t.upper))?;
    }
    c.validate()?;
    Ok(c)
}

/// Weighted hinge cost of `x`; failures cost [`FAILURE_PENALTY`] per target.
pub fn objective(circuit: &Circuit, spec: &OptSpec, x: &[f64]) -> f64 {
    let Ok(c) = apply(circuit, spec, x) else {
        let w: f64 = spec.targets.iter().map(|t| t.weight).sum();
        return w * FAILURE_PENALTY;
    };
    spec.targets
        .iter()
        .enumerate()
        .map(|(i, t)| t.weight * hinge(t, &evaluate_target(&c, t, i, spec.harmonics)))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub circuit: Circuit,
    /// Tunable references and their final values.
    pub params: Vec<(String, f64)>,
    pub cost: f64,
    pub history: Vec<Evaluation>,
    pub before: Vec<TargetMetric>,
    pub after: Vec<TargetMetric>,
    pub reason: StopReason,
}

/// Maps a batch of parameter vectors to costs, possibly concurrently.
pub type BatchMap<'a> = dyn Fn(&[Vec<f64>], &(dyn Fn(&[f64]) -> f64 + Sync)) -> Vec<f64> + 'a;

/// Optimizes sequentially; see [`optimize_matching_with`].
pub fn optimize_matching(circuit: &Circuit, spec: &OptSpec) -> Result<OptimizeReport> {
    optimize_matching_with(circuit, spec, &|xs, f| xs.iter().map(|x| f(x)).collect())
}

/// Tunes `spec.tunables` from their netlist values. `map` evaluates each
/// batch of simplex points; results must come back in input order.
pub fn optimize_matching_with(
    circuit: &Circuit,
    spec: &OptSpec,
    map: &BatchMap<'_>,
) -> Result<OptimizeReport> {
    spec.check_against(circuit)?;
    let x0: Vec<f64> = spec
        .tunables
        .iter()
        .map(|t| circuit.get_param(&t.reference))
        .collect::<Result<_>>()?;
    let lower: Vec<f64> = spec.tunables.iter().map(|t| t.lower).collect();
    let upper: Vec<f64> = spec.tunables.iter().map(|t| t.upper).collect();
    let cost = |x: &[f64]| objective(circuit, spec, x);
    let mut batch = |xs: &[Vec<f64>]| map(xs, &cost);
    let opts = MinimizeOptions {
        max_evals: spec.max_evals,
        tolerance: spec.tolerance,
        seed: spec.seed,
    };
    let min = minimize_batch(&mut batch, &x0, &lower, &upper, &opts);
    let metrics = |c: &Circuit| -> Vec<TargetMetric> {
        spec.targets
            .iter()
            .enumerate()
            .map(|(i, t)| evaluate_target(c, t, i, spec.harmonics))
            .collect()
    };
    // the first evaluation is x0 itself; keep the input untouched unless a
    // later point did strictly better
    let improved = min.history.iter().position(|e| e.cost == min.cost) != Some(0);
    let tuned = if improved {
        apply(circuit, spec, &min.x)?
    } else {
        circuit.clone()
    };
    let params = spec
        .tunables
        .iter()
        .map(|t| Ok((t.reference.clone(), tuned.get_param(&t.reference)?)))
        .collect::<Result<_>>()?;
    Ok(OptimizeReport {
        before: metrics(circuit),
        after: metrics(&tuned),
        circuit: tuned,
        params,
        cost: min.cost,
        history: min.history,
        reason: min.reason,
    })
}

impl core::fmt::Display for Metric {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Metric::S11Db => "s11_db",
            Metric::Pce => "pce",
        })
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s11_db" | "s11" => Ok(Metric::S11Db),
            "pce" => Ok(Metric::Pce),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse;
    use core::f64::consts::PI;

    #[test]
    fn quadratic_bowl() {
        let m = minimize(
            |x| (x[0] - 0.3).powi(2) + (x[1] - 0.3).powi(2),
            &[0.9, 0.1],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &MinimizeOptions::default(),
        );
        assert!((m.x[0] - 0.3).abs() < 1e-6 && (m.x[1] - 0.3).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let m = minimize(|x| x[0], &[4.0], &[2.0], &[5.0], &MinimizeOptions::default());
        assert_eq!(m.x, [2.0]);
    }

    #[test]
    fn history_is_monotone_bounded_and_deterministic() {
        let f = |x: &[f64]| (x[0] - 7.0).powi(2) + 3.0 * (x[1].ln() - 1.0).powi(2) + (x[0] * x[1]).sin();
        let opts = MinimizeOptions {
            max_evals: 150,
            seed: 42,
            ..MinimizeOptions::default()
        };
        let a = minimize(f, &[1.0, 1.0], &[-10.0, 0.1], &[10.0, 100.0], &opts);
        let b = minimize(f, &[1.0, 1.0], &[-10.0, 0.1], &[10.0, 100.0], &opts);
        assert_eq!(a, b);
        assert!(a.history.len() <= 150);
        for w in a.history.windows(2) {
            assert!(w[1].best <= w[0].best);
        }
        for e in &a.history {
            assert!((-10.0..=10.0).contains(&e.x[0]) && (0.1..=100.0).contains(&e.x[1]));
        }
    }

    const LMATCH: &str = ".port P1 in 0 z0=50\nL1 in out 10n\nC1 out 0 1p\nRL out 0 200\n";

    fn lmatch_spec() -> OptSpec {
        OptSpec {
            tunables: vec![
                Tunable {
                    reference: "L1.l".into(),
                    lower: 1e-9,
                    upper: 100e-9,
                },
                Tunable {
                    reference: "C1.c".into(),
                    lower: 0.1e-12,
                    upper: 10e-12,
                },
            ],
            targets: vec![Target {
                freq: 925e6,
                pin: -10.0,
                metric: Metric::S11Db,
                goal: -60.0,
                weight: 1.0,
                output: None,
            }],
            ..OptSpec::default()
        }
    }

    /// Lowpass L-match 50 → 200 Ω: Q = √(200/50 − 1).
    fn closed_form() -> (f64, f64) {
        let w = 2.0 * PI * 925e6;
        let q = (200.0f64 / 50.0 - 1.0).sqrt();
        (q * 50.0 / w, q / (200.0 * w))
    }

    #[test]
    fn met_targets_cost_nothing_and_weights_scale() {
        let c = parse(LMATCH).unwrap();
        let (l, cap) = closed_form();
        let mut spec = lmatch_spec();
        assert_eq!(objective(&c, &spec, &[l, cap]), 0.0);
        let x = [20e-9, 2e-12];
        let base = objective(&c, &spec, &x);
        assert!(base > 0.0);
        spec.targets[0].weight = 2.0;
        assert_eq!(objective(&c, &spec, &x), 2.0 * base);
    }

    #[test]
    fn closed_form_beats_random_points() {
        let c = parse(LMATCH).unwrap();
        let spec = lmatch_spec();
        let (l, cap) = closed_form();
        let best = objective(&c, &spec, &[l, cap]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = [
                1e-9 * 100f64.powf(rng.random::<f64>()),
                0.1e-12 * 100f64.powf(rng.random::<f64>()),
            ];
            assert!(best < objective(&c, &spec, &x));
        }
    }

    #[test]
    fn recovers_l_match() {
        let c = parse(LMATCH).unwrap();
        let report = optimize_matching(&c, &lmatch_spec()).unwrap();
        let (l, cap) = closed_form();
        let got_l = report.circuit.get_param("L1.l").unwrap();
        let got_c = report.circuit.get_param("C1.c").unwrap();
        assert!((got_l / l - 1.0).abs() < 0.02, "{got_l} vs {l}");
        assert!((got_c / cap - 1.0).abs() < 0.02, "{got_c} vs {cap}");
        assert!(report.after[0].value < -30.0);
        for w in report.history.windows(2) {
            assert!(w[1].best <= w[0].best);
        }
    }

    #[test]
    fn single_evaluation_returns_input() {
        let c = parse(LMATCH).unwrap();
        let spec = OptSpec {
            max_evals: 1,
            ..lmatch_spec()
        };
        let report = optimize_matching(&c, &spec).unwrap();
        assert_eq!(report.circuit, c);
        assert_eq!(report.history.len(), 1);
        assert_eq!(report.before, report.after);
    }

    #[test]
    fn unknown_tunable_is_reported() {
        let c = parse(LMATCH).unwrap();
        let mut spec = lmatch_spec();
        spec.tunables[0].reference = "L9.l".into();
        assert_eq!(
            optimize_matching(&c, &spec).unwrap_err(),
            Error::UnknownTunable("L9.l".into())
        );
    }

    #[test]
    fn spec_invariants() {
        let mut spec = lmatch_spec();
        spec.tunables[0].upper = spec.tunables[0].lower;
        assert!(spec.check().is_err());
        let mut spec = lmatch_spec();
        spec.targets[0].weight = 0.0;
        assert!(spec.check().is_err());
        let mut spec = lmatch_spec();
        spec.targets.clear();
        assert!(spec.check().is_err());
    }
}
