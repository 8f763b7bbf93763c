//! Time-domain reference simulator for lumped circuits.
//!
//! Trapezoidal companion models (one backward-Euler start-up step) with a
//! Newton solve per step, run period by period until the period-averaged
//! node voltages stop moving. Deliberately independent of the
//! harmonic-balance code: it shares only the netlist and device model.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::hb::source_emf;
use crate::linalg::{Lu, RMatrix};
use crate::linear::{row, Layout};
use crate::netlist::{Circuit, ElementKind};
use crate::{Error, Result};

pub const DEFAULT_STEPS_PER_PERIOD: usize = 2000;
pub const MIN_STEPS_PER_PERIOD: usize = 500;
pub const DEFAULT_MAX_PERIODS: usize = 50_000;
/// Relative change of the period averages accepted as settled.
pub const SETTLE_TOL: f64 = 1e-6;
/// Consecutive quiet periods required.
pub const SETTLE_PERIODS: usize = 3;

const NEWTON_MAX: usize = 60;
const JUNCTION_STEP_LIMIT: f64 = 0.1;

/// Port-1 source waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// `Vs·sin(ω0 t)` with `Vs` set by the available power.
    Sine,
    /// Constant EMF (V) switched on at `t = 0`.
    Dc(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientOptions {
    /// Time step; defaults to `T0 / 2000`. Rounded so a period is a whole
    /// number of steps.
    pub dt: Option<f64>,
    pub max_periods: usize,
    pub drive: Drive,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            dt: None,
            max_periods: DEFAULT_MAX_PERIODS,
            drive: Drive::Sine,
        }
    }
}

/// Energy (J) moved during the final simulated period.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    /// Into the circuit at port 1.
    pub input: f64,
    /// Resistors, diode `rs` and the other ports' terminations.
    pub resistive: f64,
    /// Into the junctions, conduction and charge.
    pub junction: f64,
    /// Increase of energy stored in capacitors and inductors.
    pub stored: f64,
}

impl EnergyLedger {
    pub fn imbalance(&self) -> f64 {
        let out = self.resistive + self.junction + self.stored;
        (self.input - out).abs() / self.input.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub f0: f64,
    pub dt: f64,
    /// Sample times of the final period, both ends included.
    pub time: Vec<f64>,
    /// Final-period samples per node id; entry 0 is ground.
    pub waveforms: Vec<Vec<f64>>,
    pub node_names: Vec<String>,
    /// Final-period average per node id.
    pub averages: Vec<f64>,
    /// Average of the designated output node, when one is declared.
    pub v_odc: Option<f64>,
    pub periods: usize,
    pub settled: bool,
    pub energy: EnergyLedger,
}

impl TransientResult {
    pub fn node(&self, name: &str) -> Option<&[f64]> {
        let id = self.node_names.iter().position(|n| n == name)?;
        Some(&self.waveforms[id])
    }

    /// Peak phasor of harmonic `k` of a node over the final period.
    pub fn phasor(&self, name: &str, k: usize) -> Option<Complex64> {
        let w = self.node(name)?;
        let n = w.len() - 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, v) in w[..n].iter().enumerate() {
            let theta = 2.0 * PI * (k * i % n) as f64 / n as f64;
            acc += Complex64::from_polar(*v, -theta);
        }
        let scale = if k == 0 { 1.0 } else { 2.0 };
        Some(acc * scale / n as f64)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Resistor,
    Capacitor,
    Inductor,
}

#[derive(Clone, Copy)]
struct Branch {
    a: Option<usize>,
    b: Option<usize>,
    kind: Kind,
    value: f64,
}

struct Junction {
    anode: Option<usize>,
    cathode: Option<usize>,
    model: crate::devices::DiodeModel,
}

#[derive(Clone, Copy)]
enum Method {
    BackwardEuler,
    Trapezoidal,
}

/// Simulates `circuit` with port 1 driven at `f0`, available power
/// `pin_dbm`, until the period averages settle or `max_periods` elapse.
pub fn simulate(
    circuit: &Circuit,
    f0: f64,
    pin_dbm: f64,
    opts: &TransientOptions,
) -> Result<TransientResult> {
    if circuit
        .elements
        .iter()
        .any(|e| e.is_distributed())
    {
        return Err(Error::Unsupported(
            "transient oracle supports lumped circuits only".into(),
        ));
    }
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidArgument(format!("f0 must be > 0, got {f0}")));
    }
    let port = circuit.port(1).ok_or(Error::PortCount {
        expected: 1,
        found: 0,
    })?;
    let period = 1.0 / f0;
    let steps = match opts.dt {
        None => DEFAULT_STEPS_PER_PERIOD,
        Some(dt) if dt > 0.0 && dt <= period / MIN_STEPS_PER_PERIOD as f64 => {
            (period / dt).round() as usize
        }
        Some(dt) => {
            return Err(Error::InvalidArgument(format!(
                "dt {dt:e} s exceeds T0/{MIN_STEPS_PER_PERIOD}"
            )))
        }
    };
    let h = period / steps as f64;
    let amplitude = source_emf(port.z0, pin_dbm);
    let emf = |t: f64| match opts.drive {
        Drive::Sine => amplitude * (2.0 * PI * f0 * t).sin(),
        Drive::Dc(v) => v,
    };
    let scale = match opts.drive {
        Drive::Sine => amplitude,
        Drive::Dc(v) => v.abs(),
    }
    .max(1e-3);

    let layout = Layout::new(circuit);
    let n = layout.size();
    let mut branches = Vec::new();
    for e in &circuit.elements {
        let (a, b) = (row(e.nodes[0]), row(e.nodes[1]));
        let (kind, value) = match e.kind {
            ElementKind::Resistor(r) => (Kind::Resistor, r),
            ElementKind::Capacitor(c) => (Kind::Capacitor, c),
            ElementKind::Inductor(l) => (Kind::Inductor, l),
            _ => continue,
        };
        branches.push(Branch { a, b, kind, value });
    }
    for j in &layout.junctions {
        if j.model.rs > 0.0 {
            branches.push(Branch {
                a: j.outer_anode,
                b: j.anode,
                kind: Kind::Resistor,
                value: j.model.rs,
            });
        }
    }
    for p in circuit.ports.iter().filter(|p| p.index != 1) {
        branches.push(Branch {
            a: row(p.pos),
            b: row(p.neg),
            kind: Kind::Resistor,
            value: p.z0,
        });
    }
    let junctions: Vec<Junction> = layout
        .junctions
        .iter()
        .map(|j| Junction {
            anode: j.anode,
            cathode: j.cathode,
            model: j.model.clone(),
        })
        .collect();
    let (pp, pn) = (row(port.pos), row(port.neg));
    let volt = |v: &[f64], r: Option<usize>| r.map_or(0.0, |r| v[r]);

    // state at the current time point
    let mut v = vec![0.0; n];
    let mut i_branch = vec![0.0; branches.len()];
    let mut q: Vec<f64> = junctions.iter().map(|j| j.model.charge(0.0)).collect();
    let mut iq = vec![0.0; junctions.len()];
    let mut i_j = vec![0.0; junctions.len()];

    let out_row = circuit.output(None).and_then(|o| row(o.node));
    let nodes = circuit.nodes.len();
    let mut prev_avg: Option<Vec<f64>> = None;
    let mut quiet = 0;
    let mut t = 0.0;
    let mut step_index = 0usize;
    let mut period_samples = vec![Vec::with_capacity(steps + 1); nodes];
    let mut time = Vec::with_capacity(steps + 1);
    let mut settled = false;
    let mut periods = 0;
    let mut energy = EnergyLedger::default();
    let mut avg = vec![0.0; nodes];

    while periods < opts.max_periods {
        for s in period_samples.iter_mut() {
            s.clear();
        }
        time.clear();
        let record = |v: &[f64], samples: &mut Vec<Vec<f64>>| {
            samples[0].push(0.0);
            for (id, s) in samples.iter_mut().enumerate().skip(1) {
                s.push(v[id - 1]);
            }
        };
        record(&v, &mut period_samples);
        time.push(t);
        let mut ledger = EnergyLedger::default();
        for s in 0..steps {
            let method = if step_index == 0 {
                Method::BackwardEuler
            } else {
                Method::Trapezoidal
            };
            let t_next = period * periods as f64 + h * (s + 1) as f64;
            let e_next = emf(t_next);
            let e_now = emf(t);
            let v_next = newton_step(
                &branches, &junctions, &v, &i_branch, &q, &iq, pp, pn, port.z0, e_next, h,
                method,
            )
            .ok_or_else(|| Error::NoConvergence {
                residual: f64::NAN,
                iterations: step_index,
            })?;
            // branch currents at the new point and energy bookkeeping
            let vp0 = volt(&v, pp) - volt(&v, pn);
            let vp1 = volt(&v_next, pp) - volt(&v_next, pn);
            let ip0 = (e_now - vp0) / port.z0;
            let ip1 = (e_next - vp1) / port.z0;
            ledger.input += h * 0.5 * (vp0 + vp1) * 0.5 * (ip0 + ip1);
            for (k, br) in branches.iter().enumerate() {
                let u0 = volt(&v, br.a) - volt(&v, br.b);
                let u1 = volt(&v_next, br.a) - volt(&v_next, br.b);
                let i1 = branch_current(br, u1, u0, i_branch[k], h, method);
                let work = h * 0.5 * (u0 + u1) * 0.5 * (i_branch[k] + i1);
                match br.kind {
                    Kind::Resistor => ledger.resistive += work,
                    _ => ledger.stored += work,
                }
                i_branch[k] = i1;
            }
            for (k, j) in junctions.iter().enumerate() {
                let u0 = volt(&v, j.anode) - volt(&v, j.cathode);
                let u1 = volt(&v_next, j.anode) - volt(&v_next, j.cathode);
                let i1 = j.model.current(u1);
                let q1 = j.model.charge(u1);
                let iq1 = charge_current(q1, q[k], iq[k], h, method);
                ledger.junction += h * 0.5 * (u0 + u1) * 0.5 * (i_j[k] + i1 + iq[k] + iq1);
                i_j[k] = i1;
                q[k] = q1;
                iq[k] = iq1;
            }
            v = v_next;
            t = t_next;
            step_index += 1;
            record(&v, &mut period_samples);
            time.push(t);
        }
        periods += 1;
        for (id, s) in period_samples.iter().enumerate() {
            // trapezoidal mean over the period
            let sum: f64 = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            avg[id] = sum / steps as f64;
        }
        energy = ledger;
        if let Some(prev) = &prev_avg {
            let quiet_now = avg
                .iter()
                .zip(prev)
                .all(|(a, p)| (a - p).abs() <= SETTLE_TOL * a.abs() + 1e-9 * scale);
            quiet = if quiet_now { quiet + 1 } else { 0 };
            if quiet >= SETTLE_PERIODS {
                settled = true;
                break;
            }
        }
        prev_avg = Some(avg.clone());
    }
    Ok(TransientResult {
        f0,
        dt: h,
        time,
        waveforms: period_samples,
        node_names: circuit.nodes.clone(),
        averages: avg.clone(),
        v_odc: out_row.map(|r| avg[r + 1]),
        periods,
        settled,
        energy,
    })
}

fn branch_current(br: &Branch, u1: f64, u0: f64, i0: f64, h: f64, method: Method) -> f64 {
    match (br.kind, method) {
        (Kind::Resistor, _) => u1 / br.value,
        (Kind::Capacitor, Method::BackwardEuler) => br.value / h * (u1 - u0),
        (Kind::Capacitor, Method::Trapezoidal) => 2.0 * br.value / h * (u1 - u0) - i0,
        (Kind::Inductor, Method::BackwardEuler) => i0 + h / br.value * u1,
        (Kind::Inductor, Method::Trapezoidal) => i0 + 0.5 * h / br.value * (u1 + u0),
    }
}

fn branch_conductance(br: &Branch, h: f64, method: Method) -> f64 {
    match (br.kind, method) {
        (Kind::Resistor, _) => 1.0 / br.value,
        (Kind::Capacitor, Method::BackwardEuler) => br.value / h,
        (Kind::Capacitor, Method::Trapezoidal) => 2.0 * br.value / h,
        (Kind::Inductor, Method::BackwardEuler) => h / br.value,
        (Kind::Inductor, Method::Trapezoidal) => 0.5 * h / br.value,
    }
}

fn charge_current(q1: f64, q0: f64, iq0: f64, h: f64, method: Method) -> f64 {
    match method {
        Method::BackwardEuler => (q1 - q0) / h,
        Method::Trapezoidal => 2.0 * (q1 - q0) / h - iq0,
    }
}

fn charge_scale(h: f64, method: Method) -> f64 {
    match method {
        Method::BackwardEuler => 1.0 / h,
        Method::Trapezoidal => 2.0 / h,
    }
}

/// Solves KCL at the next time point; `None` if Newton fails.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    branches: &[Branch],
    junctions: &[Junction],
    v0: &[f64],
    i0: &[f64],
    q0: &[f64],
    iq0: &[f64],
    pp: Option<usize>,
    pn: Option<usize>,
    z0: f64,
    emf: f64,
    h: f64,
    method: Method,
) -> Option<Vec<f64>> {
    let n = v0.len();
    let volt = |v: &[f64], r: Option<usize>| r.map_or(0.0, |r| v[r]);
    let mut v = v0.to_vec();
    for _ in 0..NEWTON_MAX {
        let mut jac = RMatrix::zeros(n, n);
        let mut f = vec![0.0; n];
        let stamp = |jac: &mut RMatrix, f: &mut [f64], a: Option<usize>, b: Option<usize>, i: f64, g: f64| {
            if let Some(a) = a {
                f[a] += i;
                jac.add_at(a, a, g);
            }
            if let Some(b) = b {
                f[b] -= i;
                jac.add_at(b, b, g);
            }
            if let (Some(a), Some(b)) = (a, b) {
                jac.add_at(a, b, -g);
                jac.add_at(b, a, -g);
            }
        };
        for (k, br) in branches.iter().enumerate() {
            let u1 = volt(&v, br.a) - volt(&v, br.b);
            let u0 = volt(v0, br.a) - volt(v0, br.b);
            let i = branch_current(br, u1, u0, i0[k], h, method);
            stamp(&mut jac, &mut f, br.a, br.b, i, branch_conductance(br, h, method));
        }
        for (k, j) in junctions.iter().enumerate() {
            let u = volt(&v, j.anode) - volt(&v, j.cathode);
            let e = j.model.eval(u);
            let iq = charge_current(e.charge, q0[k], iq0[k], h, method);
            let g = e.conductance + charge_scale(h, method) * e.capacitance;
            stamp(&mut jac, &mut f, j.anode, j.cathode, e.current + iq, g);
        }
        let up = volt(&v, pp) - volt(&v, pn);
        stamp(&mut jac, &mut f, pp, pn, (up - emf) / z0, 1.0 / z0);

        let lu = Lu::factor(jac).ok()?;
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let mut dv = lu.solve(&neg);
        let swing = junctions.iter().fold(0.0, |m: f64, j| {
            m.max((volt(&dv, j.anode) - volt(&dv, j.cathode)).abs())
        });
        if swing > JUNCTION_STEP_LIMIT {
            let s = JUNCTION_STEP_LIMIT / swing;
            dv.iter_mut().for_each(|x| *x *= s);
        }
        let mut big: f64 = 0.0;
        for (x, d) in v.iter_mut().zip(&dv) {
            *x += d;
            big = big.max(d.abs() / (1.0 + x.abs()));
        }
        if !big.is_finite() {
            return None;
        }
        if big < 1e-13 {
            return Some(v);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::ac_node_voltages;
    use crate::netlist::parse;
    use std::string::ToString;

    #[test]
    fn distributed_elements_are_rejected() {
        let c = parse(".substrate er=3.38 h=0.8mm\nMLIN TL1 a 0 w=1mm l=1mm\n.port P1 a 0 z0=50\n")
            .unwrap();
        let err = simulate(&c, 95e6, -10.0, &TransientOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "transient oracle supports lumped circuits only");
    }

    #[test]
    fn coarse_step_is_rejected() {
        let c = parse("R1 a 0 50\n.port P1 a 0 z0=50\n").unwrap();
        let opts = TransientOptions {
            dt: Some(1.0 / 95e6 / 100.0),
            ..TransientOptions::default()
        };
        assert!(matches!(
            simulate(&c, 95e6, -10.0, &opts),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rc_divider_matches_ac_phasor() {
        let c = parse("R1 in out 50\nC1 out 0 20p\nR2 out 0 200\n.port P1 in 0 z0=50\n").unwrap();
        let f0 = 95e6;
        let r = simulate(&c, f0, -10.0, &TransientOptions::default()).unwrap();
        assert!(r.settled);
        let vs = source_emf(50.0, -10.0);
        // sin(ωt) = Re(-j e^{jωt})
        let ac = ac_node_voltages(&c, f0, Complex64::new(0.0, -vs), None).unwrap();
        let got = r.phasor("out", 1).unwrap();
        assert!((got - ac[1]).norm() / ac[1].norm() < 1e-3, "{got} {}", ac[1]);
        assert!(r.energy.imbalance() < 1e-4);
    }

    #[test]
    fn dc_drive_settles_to_divider() {
        let c = parse("L1 in a 10n\nR1 a 0 50\nC1 a 0 10p\n.port P1 in 0 z0=50\n").unwrap();
        let opts = TransientOptions {
            drive: Drive::Dc(2.0),
            ..TransientOptions::default()
        };
        let r = simulate(&c, 95e6, 0.0, &opts).unwrap();
        assert!(r.settled);
        assert!((r.averages[2] - 1.0).abs() < 1e-8);
    }
}
