//! Single-tone harmonic balance and the DC operating point.
//!
//! The linear part of the circuit is reduced, harmonic by harmonic, to a
//! Norton equivalent at the diode junctions ([`network`]). Newton iteration
//! then runs on the stacked real-form junction-voltage spectra, with the
//! junction nonlinearities sampled on a uniform time grid ([`spectral`]).
//! Port 1 is driven by a Thevenin source behind its reference impedance;
//! every other port is a passive termination.

pub mod network;
pub mod spectral;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::analysis::dbm_to_watts;
use crate::linalg::{Lu, RMatrix};
use crate::linear::{row, Layout};
use crate::media::{microstrip_params, mlin_two_port};
use crate::netlist::{Circuit, ElementKind, NodeId};
use crate::{Error, Result};

use network::{Companion, HarmonicNetwork, GMIN};
use spectral::{differentiate, real_len, to_complex, Transform};

pub const DEFAULT_HARMONICS: usize = 8;
pub const MIN_HARMONICS: usize = 3;
/// Largest junction-voltage change allowed in one Newton step (V).
pub const STEP_LIMIT: f64 = 0.1;
/// Source-stepping increment (dB).
pub const SOURCE_STEP_DB: f64 = 2.0;
/// Drives above this level are approached by source stepping (dBm).
pub const STEPPING_START_DBM: f64 = -10.0;
/// Accepted range of available input power (dBm).
pub const PIN_RANGE: (f64, f64) = (-60.0, 20.0);
pub const ABS_TOL: f64 = 1e-12;
pub const REL_TOL: f64 = 1e-9;

const DEFAULT_MAX_ITERATIONS: usize = 200;
const MIN_STEP_DB: f64 = 1.0 / 64.0;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Peak EMF of a Thevenin source with available power `pin_dbm` into `z0`.
pub fn source_emf(z0: f64, pin_dbm: f64) -> f64 {
    2.0 * (2.0 * z0 * dbm_to_watts(pin_dbm)).sqrt()
}

/// Peak phasors of one quantity at harmonics `0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    pub f0: f64,
    pub phasors: Vec<Complex64>,
}

impl HarmonicSpectrum {
    pub fn order(&self) -> usize {
        self.phasors.len() - 1
    }

    pub fn dc(&self) -> f64 {
        self.phasors[0].re
    }

    pub fn harmonic(&self, k: usize) -> Complex64 {
        self.phasors.get(k).copied().unwrap_or(ZERO)
    }

    pub fn fundamental(&self) -> Complex64 {
        self.harmonic(1)
    }

    /// Value at phase `theta = ω0 t`.
    pub fn at(&self, theta: f64) -> f64 {
        let mut acc = self.phasors[0].re;
        for (k, p) in self.phasors.iter().enumerate().skip(1) {
            acc += (p * Complex64::from_polar(1.0, k as f64 * theta)).re;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSpectrum {
    pub name: String,
    pub voltage: HarmonicSpectrum,
    /// Conduction plus displacement current, anode to cathode.
    pub current: HarmonicSpectrum,
}

/// Time-average power bookkeeping of a solution (W).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerLedger {
    /// Available power of the port-1 source.
    pub available: f64,
    /// Power entering port 1, all harmonics.
    pub input: f64,
    /// Power entering port 1 at the fundamental.
    pub delivered_fundamental: f64,
    /// DC power in the designated load elements.
    pub dc_load: f64,
    /// Everything else burnt in resistances: harmonic power in loads, other
    /// resistors, diode `rs`, line loss and the other ports' terminations.
    pub dissipated: f64,
    /// Net power absorbed by the junctions.
    pub junction: f64,
}

impl PowerLedger {
    /// Relative mismatch between input and accounted power.
    pub fn imbalance(&self) -> f64 {
        let out = self.dc_load + self.dissipated + self.junction;
        let scale = self.input.abs().max(f64::MIN_POSITIVE);
        (self.input - out).abs() / scale
    }
}

/// Junction-voltage spectra that can seed a later solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HbState {
    pub pin_dbm: f64,
    pub harmonics: usize,
    /// Real-form spectra stacked per junction.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub pin_dbm: f64,
    pub iteration: usize,
    pub residual: f64,
    /// Stacked real-form junction spectra at this iterate.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbSolution {
    pub f0: f64,
    pub pin_dbm: f64,
    pub harmonics: usize,
    /// Peak EMF of the port-1 source.
    pub emf: f64,
    pub z0: f64,
    /// Indexed by node id; entry 0 is ground.
    pub nodes: Vec<HarmonicSpectrum>,
    pub node_names: Vec<String>,
    pub junctions: Vec<JunctionSpectrum>,
    pub port_voltage: HarmonicSpectrum,
    /// Current into the circuit at port 1.
    pub port_current: HarmonicSpectrum,
    pub iterations: usize,
    /// Final ∞-norm of the harmonic KCL residual (A).
    pub residual: f64,
    pub converged: bool,
    pub power: PowerLedger,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceRecord>,
    pub state: HbState,
}

impl HbSolution {
    pub fn node(&self, name: &str) -> Option<&HarmonicSpectrum> {
        let id = self.node_names.iter().position(|n| n == name)?;
        Some(&self.nodes[id])
    }

    pub fn v_dc(&self, node: NodeId) -> f64 {
        self.nodes[node].dc()
    }

    /// DC junction voltages, usable as a linearization bias.
    pub fn junction_bias(&self) -> Vec<f64> {
        self.junctions.iter().map(|j| j.voltage.dc()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbOptions {
    pub harmonics: usize,
    /// Newton iterations allowed per drive level.
    pub max_iterations: usize,
    pub trace: bool,
    pub warm_start: Option<HbState>,
}

impl Default for HbOptions {
    fn default() -> Self {
        Self {
            harmonics: DEFAULT_HARMONICS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            trace: false,
            warm_start: None,
        }
    }
}

impl HbOptions {
    /// Defaults with the harmonic order taken from the circuit's options.
    pub fn for_circuit(circuit: &Circuit) -> Self {
        Self {
            harmonics: circuit.options.harmonics.unwrap_or(DEFAULT_HARMONICS),
            ..Self::default()
        }
    }
}

/// Harmonic balance at `f0` and available power `pin_dbm` with `k` harmonics.
pub fn solve_hb(circuit: &Circuit, f0: f64, pin_dbm: f64, k: usize) -> Result<HbSolution> {
    let opts = HbOptions {
        harmonics: k,
        ..HbOptions::default()
    };
    HbEngine::new(circuit, f0, k)?.solve(pin_dbm, &opts)
}

struct Outcome {
    values: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// Reusable solver for one circuit at one fundamental: the Norton
/// reductions are computed once and shared by every drive level.
#[derive(Debug, Clone)]
pub struct HbEngine<'a> {
    circuit: &'a Circuit,
    layout: Layout,
    f0: f64,
    harmonics: usize,
    /// Harmonic carrying the source: 1 for HB, 0 for the DC solver.
    drive: usize,
    transform: Transform,
    networks: Vec<HarmonicNetwork>,
    companions: Vec<Companion>,
    z0: f64,
    /// Real form of the block-diagonal-per-harmonic Norton admittance.
    y_lin: RMatrix,
    /// Real-form open-circuit junction voltages per unit EMF.
    v_oc: Vec<f64>,
}

impl<'a> HbEngine<'a> {
    pub fn new(circuit: &'a Circuit, f0: f64, harmonics: usize) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::InvalidArgument(format!("f0 must be > 0, got {f0}")));
        }
        if harmonics < MIN_HARMONICS {
            return Err(Error::InvalidArgument(format!(
                "harmonic order must be >= {MIN_HARMONICS}, got {harmonics}"
            )));
        }
        Self::build(circuit, f0, harmonics, 1)
    }

    fn dc(circuit: &'a Circuit) -> Result<Self> {
        Self::build(circuit, 0.0, 0, 0)
    }

    fn build(circuit: &'a Circuit, f0: f64, harmonics: usize, drive: usize) -> Result<Self> {
        let z0 = circuit
            .port(1)
            .ok_or(Error::PortCount {
                expected: 1,
                found: 0,
            })?
            .z0;
        let layout = Layout::new(circuit);
        let companions: Vec<Companion> = layout
            .junctions
            .iter()
            .map(|j| Companion {
                g0: j.model.zero_bias_conductance(),
                c0: j.model.capacitance(0.0),
            })
            .collect();
        let networks = (0..=harmonics)
            .map(|k| {
                HarmonicNetwork::build(circuit, &layout, &companions, k as f64 * f0, k == drive)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = real_len(harmonics);
        let nj = layout.junctions.len();
        let mut y_lin = RMatrix::zeros(nj * m, nj * m);
        let mut v_oc = vec![0.0; nj * m];
        for (k, net) in networks.iter().enumerate() {
            for a in 0..nj {
                for b in 0..nj {
                    let y = net.y_red[(a, b)];
                    if k == 0 {
                        y_lin[(a * m, b * m)] = y.re;
                    } else {
                        let (r, c) = (a * m + 2 * k - 1, b * m + 2 * k - 1);
                        y_lin[(r, c)] = y.re;
                        y_lin[(r, c + 1)] = -y.im;
                        y_lin[(r + 1, c)] = y.im;
                        y_lin[(r + 1, c + 1)] = y.re;
                    }
                }
                let v = net.v_oc[a];
                if k == 0 {
                    v_oc[a * m] = v.re;
                } else {
                    v_oc[a * m + 2 * k - 1] = v.re;
                    v_oc[a * m + 2 * k] = v.im;
                }
            }
        }
        Ok(Self {
            circuit,
            layout,
            f0,
            harmonics,
            drive,
            transform: Transform::new(harmonics),
            networks,
            companions,
            z0,
            y_lin,
            v_oc,
        })
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    fn unknowns(&self) -> usize {
        self.layout.junctions.len() * real_len(self.harmonics)
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.f0
    }

    /// Real-form excess currents (`i - g0 v + d(q - c0 v)/dt` plus `shunt·v`)
    /// of every junction and, when asked, their Jacobian blocks.
    fn excess(&self, values: &[f64], shunt: f64, jac: Option<&mut RMatrix>) -> Vec<f64> {
        let m = real_len(self.harmonics);
        let t = &self.transform;
        let nt = t.samples();
        let mut out = vec![0.0; values.len()];
        let mut jac = jac;
        for (j, junction) in self.layout.junctions.iter().enumerate() {
            let comp = self.companions[j];
            let v = t.to_time(&values[j * m..(j + 1) * m]);
            let mut i = vec![0.0; nt];
            let mut q = vec![0.0; nt];
            let mut g = vec![0.0; nt];
            let mut c = vec![0.0; nt];
            for n in 0..nt {
                let e = junction.model.eval(v[n]);
                i[n] = e.current - comp.g0 * v[n] + shunt * v[n];
                g[n] = e.conductance - comp.g0 + shunt;
                q[n] = e.charge - comp.c0 * v[n];
                c[n] = e.capacitance - comp.c0;
            }
            let mut ii = t.to_freq(&i);
            let mut iq = t.to_freq(&q);
            differentiate(&mut iq, self.omega());
            for (a, b) in ii.iter_mut().zip(&iq) {
                *a += b;
            }
            out[j * m..(j + 1) * m].copy_from_slice(&ii);
            if let Some(jac) = jac.as_deref_mut() {
                let d = &t.analysis;
                let e = &t.synthesis;
                for r in 0..m {
                    for s in 0..m {
                        let mut acc_g = 0.0;
                        let mut acc_c = 0.0;
                        for n in 0..nt {
                            let de = d[(r, n)] * e[(n, s)];
                            acc_g += de * g[n];
                            acc_c += de * c[n];
                        }
                        jac.add_at(j * m + r, j * m + s, acc_g);
                        // Ω acts on rows: (re, im) -> kω (-im, re)
                        if r > 0 {
                            let h = r.div_ceil(2);
                            let w = h as f64 * self.omega();
                            if r % 2 == 1 {
                                jac.add_at(j * m + r + 1, j * m + s, w * acc_c);
                            } else {
                                jac.add_at(j * m + r - 1, j * m + s, -w * acc_c);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Harmonic KCL residual at the junction ports (A).
    fn residual(&self, values: &[f64], emf: f64, shunt: f64, jac: Option<&mut RMatrix>) -> Vec<f64> {
        let mut f = self.excess(values, shunt, jac);
        let dv: Vec<f64> = values
            .iter()
            .zip(&self.v_oc)
            .map(|(v, o)| v - emf * o)
            .collect();
        for (a, b) in f.iter_mut().zip(self.y_lin.mul_vec(&dv)) {
            *a += b;
        }
        f
    }

    fn tolerance(&self, emf: f64) -> f64 {
        ABS_TOL.max(REL_TOL * emf.abs() / self.z0)
    }

    fn newton(
        &self,
        emf: f64,
        shunt: f64,
        start: Vec<f64>,
        max_iterations: usize,
        trace: &mut Option<(&mut Vec<TraceRecord>, f64)>,
    ) -> Outcome {
        let n = self.unknowns();
        let m = real_len(self.harmonics);
        let tol = self.tolerance(emf);
        let mut values = start;
        let mut count = 0;
        let mut best = Outcome {
            values: values.clone(),
            residual: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
        for iteration in 0..=max_iterations {
            count = iteration;
            let mut jac = self.y_lin.clone();
            let f = self.residual(&values, emf, shunt, Some(&mut jac));
            let norm = f.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
            if let Some((rows, pin)) = trace.as_mut() {
                rows.push(TraceRecord {
                    pin_dbm: *pin,
                    iteration,
                    residual: norm,
                    values: values.clone(),
                });
            }
            if !norm.is_finite() {
                break;
            }
            if norm < best.residual {
                best = Outcome {
                    values: values.clone(),
                    residual: norm,
                    iterations: iteration,
                    converged: false,
                };
            }
            if norm < tol {
                best.converged = true;
                best.iterations = iteration;
                return best;
            }
            if iteration == max_iterations || n == 0 {
                break;
            }
            let Ok(lu) = Lu::factor(jac) else {
                break;
            };
            let neg: Vec<f64> = f.iter().map(|x| -x).collect();
            let mut step = lu.solve(&neg);
            let mut swing: f64 = 0.0;
            for j in 0..self.layout.junctions.len() {
                let dt = self.transform.to_time(&step[j * m..(j + 1) * m]);
                swing = dt.iter().fold(swing, |a, x| a.max(x.abs()));
            }
            if swing > STEP_LIMIT {
                let s = STEP_LIMIT / swing;
                step.iter_mut().for_each(|x| *x *= s);
            }
            for (v, d) in values.iter_mut().zip(&step) {
                *v += d;
            }
        }
        best.iterations = count;
        best
    }

    /// Solves at `pin_dbm`, stepping the source up when needed.
    pub fn solve(&self, pin_dbm: f64, opts: &HbOptions) -> Result<HbSolution> {
        if !(PIN_RANGE.0..=PIN_RANGE.1).contains(&pin_dbm) {
            return Err(Error::InvalidArgument(format!(
                "pin {pin_dbm} dBm outside [{}, {}] dBm",
                PIN_RANGE.0, PIN_RANGE.1
            )));
        }
        let mut trace_rows = Vec::new();
        let mut total = 0;
        let n = self.unknowns();
        let warm = opts
            .warm_start
            .as_ref()
            .filter(|w| w.harmonics == self.harmonics && w.values.len() == n);

        let mut attempt = |from_pin: f64, from: Vec<f64>, direct: bool, total: &mut usize| {
            self.ramp(from_pin, from, pin_dbm, direct, opts, &mut trace_rows, total)
        };
        let outcome = match warm {
            Some(w) => attempt(w.pin_dbm, w.values.clone(), true, &mut total),
            None => {
                let start = pin_dbm.min(STEPPING_START_DBM);
                let o = attempt(start, self.linear_guess(start), true, &mut total);
                let floor = pin_dbm.min(-40.0);
                if o.converged || start == floor {
                    o
                } else {
                    attempt(floor, self.linear_guess(floor), false, &mut total)
                }
            }
        };
        let outcome = if outcome.converged || warm.is_none() {
            outcome
        } else {
            // a stale warm start can be worse than none
            let cold = HbOptions {
                warm_start: None,
                ..opts.clone()
            };
            let mut sol = self.solve(pin_dbm, &cold)?;
            sol.iterations += total;
            let mut rows = trace_rows;
            rows.append(&mut sol.trace);
            sol.trace = rows;
            return Ok(sol);
        };
        let mut sol = self.finish(pin_dbm, &outcome);
        sol.iterations = total;
        sol.trace = trace_rows;
        Ok(sol)
    }

    /// Initial guess: the zero-bias linear response.
    fn linear_guess(&self, pin_dbm: f64) -> Vec<f64> {
        let emf = source_emf(self.z0, pin_dbm);
        self.v_oc.iter().map(|v| v * emf).collect()
    }

    /// Newton at `from_pin` (unless already converged there), then steps of
    /// [`SOURCE_STEP_DB`] towards `target`, halving on failure. With
    /// `direct`, the target is tried first from the converged start.
    #[allow(clippy::too_many_arguments)]
    fn ramp(
        &self,
        from_pin: f64,
        from: Vec<f64>,
        target: f64,
        direct: bool,
        opts: &HbOptions,
        trace_rows: &mut Vec<TraceRecord>,
        total: &mut usize,
    ) -> Outcome {
        let mut run = |pin: f64, start: Vec<f64>, total: &mut usize| {
            let mut tr = if opts.trace {
                Some((&mut *trace_rows, pin))
            } else {
                None
            };
            let emf = source_emf(self.z0, pin);
            let o = self.newton(emf, 0.0, start, opts.max_iterations, &mut tr);
            *total += o.iterations;
            o
        };
        let first = run(from_pin, from, total);
        if !first.converged || from_pin == target {
            return first;
        }
        let (mut pin, mut values) = (from_pin, first.values);
        if direct {
            let o = run(target, values.clone(), total);
            if o.converged {
                return o;
            }
        }
        let mut step = SOURCE_STEP_DB;
        let mut last = None;
        while pin != target {
            let delta = (target - pin).clamp(-step, step);
            let next = if (target - pin).abs() <= step { target } else { pin + delta };
            let o = run(next, values.clone(), total);
            if o.converged {
                pin = next;
                values = o.values.clone();
                last = Some(o);
                step = (step * 2.0).min(SOURCE_STEP_DB);
            } else {
                step /= 2.0;
                if step < MIN_STEP_DB {
                    return o;
                }
            }
        }
        last.expect("loop ran at least once")
    }

    fn finish(&self, pin_dbm: f64, outcome: &Outcome) -> HbSolution {
        let k_max = self.harmonics;
        let m = real_len(k_max);
        let emf = source_emf(self.z0, pin_dbm);
        let t = &self.transform;
        let nj = self.layout.junctions.len();
        let values = &outcome.values;

        let excess = self.excess(values, 0.0, None);
        let mut junctions = Vec::with_capacity(nj);
        for (j, junction) in self.layout.junctions.iter().enumerate() {
            let v = t.to_time(&values[j * m..(j + 1) * m]);
            let i: Vec<f64> = v.iter().map(|&x| junction.model.current(x)).collect();
            let q: Vec<f64> = v.iter().map(|&x| junction.model.charge(x)).collect();
            let mut total = t.to_freq(&i);
            let mut dq = t.to_freq(&q);
            differentiate(&mut dq, self.omega());
            for (a, b) in total.iter_mut().zip(&dq) {
                *a += b;
            }
            junctions.push(JunctionSpectrum {
                name: junction.name.clone(),
                voltage: self.spectrum(to_complex(&values[j * m..(j + 1) * m])),
                current: self.spectrum(to_complex(&total)),
            });
        }

        // layout-row voltages per harmonic
        let mut rows = vec![vec![ZERO; k_max + 1]; self.layout.size()];
        let mut ledger = PowerLedger {
            available: dbm_to_watts(pin_dbm),
            ..PowerLedger::default()
        };
        for (k, net) in self.networks.iter().enumerate() {
            let i_ext: Vec<Complex64> = (0..nj)
                .map(|j| {
                    if k == 0 {
                        Complex64::new(excess[j * m], 0.0)
                    } else {
                        Complex64::new(excess[j * m + 2 * k - 1], excess[j * m + 2 * k])
                    }
                })
                .collect();
            let e = if k == self.drive { emf } else { 0.0 };
            let system = net.node_voltages(Complex64::new(e, 0.0), &i_ext);
            for (r, spectrum) in rows.iter_mut().enumerate() {
                spectrum[k] = net.layout_voltage(&system, Some(r));
            }
            if k == 0 {
                ledger.dissipated += net
                    .gmin_rows
                    .iter()
                    .map(|&r| GMIN * system[r].norm_sqr())
                    .sum::<f64>();
            }
        }
        let at = |r: Option<usize>, k: usize| r.map_or(ZERO, |r| rows[r][k]);
        let weight = |k: usize| if k == 0 { 1.0 } else { 0.5 };

        let port = self.circuit.port(1).expect("checked in build");
        let (pp, pn) = (row(port.pos), row(port.neg));
        let mut port_v = Vec::with_capacity(k_max + 1);
        let mut port_i = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let vp = at(pp, k) - at(pn, k);
            let e = if k == self.drive { emf } else { 0.0 };
            let ip = (e - vp) / self.z0;
            let p = weight(k) * (vp * ip.conj()).re;
            ledger.input += p;
            if k == 1 {
                ledger.delivered_fundamental = p;
            }
            port_v.push(vp);
            port_i.push(ip);
        }

        let loads: Vec<&str> = self.circuit.outputs.iter().map(|o| o.load.as_str()).collect();
        for e in &self.circuit.elements {
            let (a, b) = (row(e.nodes[0]), row(e.nodes[1]));
            match &e.kind {
                ElementKind::Resistor(r) => {
                    for k in 0..=k_max {
                        let p = weight(k) * (at(a, k) - at(b, k)).norm_sqr() / r;
                        if k == 0 && loads.contains(&e.name.as_str()) {
                            ledger.dc_load += p;
                        } else {
                            ledger.dissipated += p;
                        }
                    }
                }
                ElementKind::Microstrip { width, length } => {
                    let sub = self.circuit.substrate.as_ref().expect("validated circuit");
                    for k in 1..=k_max {
                        let params = microstrip_params(sub, *width, k as f64 * self.f0);
                        let y = mlin_two_port(&params, *length);
                        let v = [at(a, k), at(b, k)];
                        for p in 0..2 {
                            let i = y[p][0] * v[0] + y[p][1] * v[1];
                            ledger.dissipated += weight(k) * (v[p] * i.conj()).re;
                        }
                    }
                }
                _ => {}
            }
        }
        for j in &self.layout.junctions {
            if j.model.rs > 0.0 {
                for k in 0..=k_max {
                    ledger.dissipated +=
                        weight(k) * (at(j.outer_anode, k) - at(j.anode, k)).norm_sqr() / j.model.rs;
                }
            }
        }
        for p in self.circuit.ports.iter().filter(|p| p.index != 1) {
            for k in 0..=k_max {
                ledger.dissipated +=
                    weight(k) * (at(row(p.pos), k) - at(row(p.neg), k)).norm_sqr() / p.z0;
            }
        }
        for js in &junctions {
            for k in 0..=k_max {
                ledger.junction +=
                    weight(k) * (js.voltage.harmonic(k) * js.current.harmonic(k).conj()).re;
            }
        }

        let mut warnings = Vec::new();
        if k_max >= 1 {
            for js in &junctions {
                let (top, first) = (js.current.harmonic(k_max).norm(), js.current.fundamental().norm());
                if first > 0.0 && top > 0.01 * first {
                    warnings.push(format!(
                        "harmonic order {k_max} may be too small: junction {} carries {:.2}% of its fundamental current at the top harmonic",
                        js.name,
                        100.0 * top / first
                    ));
                }
            }
        }

        let mut nodes = Vec::with_capacity(self.circuit.nodes.len());
        nodes.push(self.spectrum(vec![ZERO; k_max + 1]));
        for r in 0..self.circuit.nodes.len() - 1 {
            nodes.push(self.spectrum(rows[r].clone()));
        }
        HbSolution {
            f0: self.f0,
            pin_dbm,
            harmonics: k_max,
            emf,
            z0: self.z0,
            nodes,
            node_names: self.circuit.nodes.clone(),
            junctions,
            port_voltage: self.spectrum(port_v),
            port_current: self.spectrum(port_i),
            iterations: outcome.iterations,
            residual: outcome.residual,
            converged: outcome.converged,
            power: ledger,
            warnings,
            trace: Vec::new(),
            state: HbState {
                pin_dbm,
                harmonics: k_max,
                values: values.clone(),
            },
        }
    }

    fn spectrum(&self, phasors: Vec<Complex64>) -> HarmonicSpectrum {
        HarmonicSpectrum {
            f0: self.f0,
            phasors,
        }
    }
}

/// DC operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct DcSolution {
    /// Indexed by node id; entry 0 is ground.
    pub node_voltages: Vec<f64>,
    pub node_names: Vec<String>,
    pub junction_voltages: Vec<f64>,
    pub junction_currents: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DcSolution {
    pub fn node(&self, name: &str) -> Option<f64> {
        let id = self.node_names.iter().position(|n| n == name)?;
        Some(self.node_voltages[id])
    }
}

/// DC operating point with every source at zero.
pub fn solve_dc(circuit: &Circuit) -> Result<DcSolution> {
    solve_dc_with_source(circuit, 0.0)
}

/// DC operating point with a DC EMF `emf` (V) behind port 1's resistance.
/// Falls back to source stepping, then to a decreasing junction shunt.
pub fn solve_dc_with_source(circuit: &Circuit, emf: f64) -> Result<DcSolution> {
    let engine = HbEngine::dc(circuit)?;
    let n = engine.unknowns();
    let max = DEFAULT_MAX_ITERATIONS;
    let mut total = 0;
    let mut none = None;
    let mut best = f64::INFINITY;
    let mut run = |e: f64, shunt: f64, start: Vec<f64>, total: &mut usize| {
        let o = engine.newton(e, shunt, start, max, &mut none);
        *total += o.iterations;
        o
    };
    let mut outcome = run(emf, 0.0, vec![0.0; n], &mut total);
    if !outcome.converged {
        best = best.min(outcome.residual);
        let mut values = vec![0.0; n];
        let mut ok = true;
        for s in 1..=10 {
            let o = run(emf * s as f64 / 10.0, 0.0, values.clone(), &mut total);
            if !o.converged {
                best = best.min(o.residual);
                ok = false;
                break;
            }
            values = o.values.clone();
            outcome = o;
        }
        if !ok {
            let mut values = vec![0.0; n];
            let mut shunt = 1e-2;
            loop {
                let o = run(emf, shunt, values.clone(), &mut total);
                if !o.converged {
                    best = best.min(o.residual);
                    return Err(Error::NoConvergence {
                        residual: best,
                        iterations: total,
                    });
                }
                values = o.values.clone();
                if shunt == 0.0 {
                    outcome = o;
                    break;
                }
                shunt = if shunt > 1e-12 { shunt / 10.0 } else { 0.0 };
            }
        }
    }
    let sol = engine.finish_dc(emf, &outcome);
    Ok(DcSolution {
        iterations: total,
        ..sol
    })
}

impl HbEngine<'_> {
    fn finish_dc(&self, emf: f64, outcome: &Outcome) -> DcSolution {
        let nj = self.layout.junctions.len();
        let excess = self.excess(&outcome.values, 0.0, None);
        let i_ext: Vec<Complex64> = excess.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let net = &self.networks[0];
        let system = net.node_voltages(Complex64::new(emf, 0.0), &i_ext);
        let mut node_voltages = vec![0.0];
        for r in 0..self.circuit.nodes.len() - 1 {
            node_voltages.push(net.layout_voltage(&system, Some(r)).re);
        }
        let junction_voltages = outcome.values[..nj].to_vec();
        let junction_currents = self
            .layout
            .junctions
            .iter()
            .zip(&junction_voltages)
            .map(|(j, &v)| j.model.current(v))
            .collect();
        DcSolution {
            node_voltages,
            node_names: self.circuit.nodes.clone(),
            junction_voltages,
            junction_currents,
            iterations: outcome.iterations,
            residual: outcome.residual,
        }
    }
}

#[cfg(test)]
mod tests;
