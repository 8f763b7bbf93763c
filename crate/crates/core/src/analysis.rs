//! Figures of merit and sweep drivers.
//!
//! Sweeps are cut into fixed-size chunks of [`SWEEP_CHUNK`] grid points.
//! Each chunk starts cold and warm-starts along its own points, so a chunk's
//! records do not depend on which worker ran it or in what order; the
//! sequential driver walks the same chunks.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::hb::{HbEngine, HbOptions, HbSolution, HbState};
use crate::linear::s_parameters_at;
use crate::netlist::{Circuit, ElementKind};
use crate::{Error, Result};

/// Grid points per independently warm-started sweep chunk.
pub const SWEEP_CHUNK: usize = 8;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10.0.powf(dbm / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// RF-to-DC efficiency in percent: `V²/(P·R)·100` with `P` the available
/// power.
pub fn pce(v_odc: f64, r_load: f64, pin_dbm: f64) -> f64 {
    v_odc * v_odc / (dbm_to_watts(pin_dbm) * r_load) * 100.0
}

pub fn magnitude_db(x: Complex64) -> f64 {
    20.0 * x.norm().log10()
}

/// Reflection coefficient at port 1 and the fundamental, from the incident
/// and reflected waves of the port voltage and current.
pub fn large_signal_s11(sol: &HbSolution) -> Result<Complex64> {
    if !sol.converged {
        return Err(Error::NoConvergence {
            residual: sol.residual,
            iterations: sol.iterations,
        });
    }
    let v = sol.port_voltage.fundamental();
    let i = sol.port_current.fundamental();
    let z0 = sol.z0;
    // the common 1/(2√Z0) of a and b cancels
    Ok((v - z0 * i) / (v + z0 * i))
}

/// How the band center in [`fractional_bandwidth`] is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FbwCenter {
    /// Midpoint of the two threshold crossings.
    #[default]
    Midpoint,
    /// Frequency of the deepest sample inside the band.
    Dip,
}

/// Threshold-crossing interval around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub f_lo: f64,
    pub f_hi: f64,
    pub f_center: f64,
    /// `100·(f_hi − f_lo)/f_center`.
    pub fbw: f64,
}

/// Fractional bandwidth (%) of the contiguous stretch of `curve` below
/// `threshold` dB that contains `center`. Crossings are interpolated
/// linearly; a band running off the end of the curve stops at the last
/// sample.
pub fn fractional_bandwidth(
    curve: &[(f64, f64)],
    threshold: f64,
    center: f64,
    mode: FbwCenter,
) -> Result<Band> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument("curve needs at least two points".into()));
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument(
            "curve frequencies must be strictly increasing".into(),
        ));
    }
    let (first, last) = (curve[0].0, curve[curve.len() - 1].0);
    if !(first..=last).contains(&center) {
        return Err(Error::NoBand);
    }
    // segment [i, i+1] holding the center
    let i = curve
        .iter()
        .rposition(|p| p.0 <= center)
        .unwrap()
        .min(curve.len() - 2);
    let (a, b) = (curve[i], curve[i + 1]);
    let at_center = a.1 + (b.1 - a.1) * (center - a.0) / (b.0 - a.0);
    if !(at_center < threshold) {
        return Err(Error::NoBand);
    }
    let cross = |p: (f64, f64), q: (f64, f64)| p.0 + (q.0 - p.0) * (threshold - p.1) / (q.1 - p.1);
    let mut f_lo = first;
    for k in (0..=i).rev() {
        if curve[k].1 >= threshold {
            f_lo = cross(curve[k], curve[k + 1]);
            break;
        }
    }
    let mut f_hi = last;
    for k in i + 1..curve.len() {
        if curve[k].1 >= threshold {
            f_hi = cross(curve[k - 1], curve[k]);
            break;
        }
    }
    let f_center = match mode {
        FbwCenter::Midpoint => 0.5 * (f_lo + f_hi),
        FbwCenter::Dip => curve
            .iter()
            .filter(|p| p.0 >= f_lo && p.0 <= f_hi)
            .fold((center, at_center), |m, p| if p.1 < m.1 { *p } else { m })
            .0,
    };
    Ok(Band {
        f_lo,
        f_hi,
        f_center,
        fbw: 100.0 * (f_hi - f_lo) / f_center,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Freq,
    Pin,
    RLoad,
}

/// One rectifier operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub freq: f64,
    pub pin: f64,
    pub r_load: f64,
    pub s11_db: f64,
    pub v_odc: f64,
    pub pce: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Solver error that prevented a solution, if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    /// Values of the axes not being swept.
    pub freq: f64,
    pub pin: f64,
    /// Load override; the netlist value when `None`.
    pub r_load: Option<f64>,
    /// Load element selecting the `.output` designation; the first if `None`.
    pub output: Option<String>,
    pub harmonics: usize,
}

impl SweepSpec {
    pub fn point(&self, index: usize) -> (f64, f64, Option<f64>) {
        let x = self.grid[index];
        match self.axis {
            Axis::Freq => (x, self.pin, self.r_load),
            Axis::Pin => (self.freq, x, self.r_load),
            Axis::RLoad => (self.freq, self.pin, Some(x)),
        }
    }
}

/// Chunk boundaries of a grid of `len` points.
pub fn chunks(len: usize) -> Vec<Range<usize>> {
    (0..len)
        .step_by(SWEEP_CHUNK)
        .map(|s| s..(s + SWEEP_CHUNK).min(len))
        .collect()
}

/// Output node and load element selected by `load`.
pub fn designated_output<'c>(
    circuit: &'c Circuit,
    load: Option<&str>,
) -> Result<(usize, &'c str, f64)> {
    let out = circuit.output(load).ok_or_else(|| {
        Error::InvalidArgument(match load {
            Some(l) => format!("no .output directive names load `{l}`"),
            None => "circuit has no .output directive".into(),
        })
    })?;
    let r = match circuit.element(&out.load).map(|e| &e.kind) {
        Some(ElementKind::Resistor(r)) => *r,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "output load `{}` is not a resistor",
                out.load
            )))
        }
    };
    Ok((out.node, out.load.as_str(), r))
}

/// Solves one operating point; `warm` seeds the HB Newton iteration.
pub fn operating_point(
    circuit: &Circuit,
    freq: f64,
    pin: f64,
    r_load: Option<f64>,
    output: Option<&str>,
    harmonics: usize,
    warm: Option<HbState>,
) -> Result<(SweepRecord, HbSolution)> {
    let (node, load, r_netlist) = designated_output(circuit, output)?;
    let mut local;
    let circuit = match r_load {
        Some(r) => {
            local = circuit.clone();
            local.set_param(&format!("{load}.r"), r)?;
            local.validate()?;
            &local
        }
        None => circuit,
    };
    let r = r_load.unwrap_or(r_netlist);
    let engine = HbEngine::new(circuit, freq, harmonics)?;
    let opts = HbOptions {
        harmonics,
        warm_start: warm,
        ..HbOptions::default()
    };
    let sol = engine.solve(pin, &opts)?;
    let v = sol.v_dc(node);
    let s11_db = large_signal_s11(&sol).map_or(f64::NAN, magnitude_db);
    let record = SweepRecord {
        freq,
        pin,
        r_load: r,
        s11_db,
        v_odc: v,
        pce: pce(v, r, pin),
        iterations: sol.iterations,
        converged: sol.converged,
        error: None,
    };
    Ok((record, sol))
}

/// Records for grid indices `range`, warm-started along the range.
pub fn sweep_chunk(circuit: &Circuit, spec: &SweepSpec, range: Range<usize>) -> Vec<SweepRecord> {
    let mut warm: Option<HbState> = None;
    range
        .map(|i| {
            let (freq, pin, r_load) = spec.point(i);
            match operating_point(
                circuit,
                freq,
                pin,
                r_load,
                spec.output.as_deref(),
                spec.harmonics,
                warm.take(),
            ) {
                Ok((rec, sol)) => {
                    if sol.converged {
                        warm = Some(sol.state);
                    }
                    rec
                }
                Err(e) => SweepRecord {
                    freq,
                    pin,
                    r_load: r_load.unwrap_or(f64::NAN),
                    s11_db: f64::NAN,
                    v_odc: f64::NAN,
                    pce: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Checks a sweep specification before any solve.
pub fn check_sweep(circuit: &Circuit, spec: &SweepSpec) -> Result<()> {
    if spec.grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if spec.grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("sweep grid has non-finite values".into()));
    }
    designated_output(circuit, spec.output.as_deref())?;
    Ok(())
}

/// Sequential sweep; one record per grid point in grid order.
pub fn sweep(circuit: &Circuit, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    check_sweep(circuit, spec)?;
    Ok(chunks(spec.grid.len())
        .into_iter()
        .flat_map(|r| sweep_chunk(circuit, spec, r))
        .collect())
}

/// |S11| in dB over `freqs`: large-signal at `pin` dBm when the circuit
/// has diodes and a drive level is given, small-signal at zero bias
/// otherwise. Large-signal points are warm-started in chunks as in
/// [`sweep`]; unconverged points come back as NaN.
pub fn s11_curve(
    circuit: &Circuit,
    freqs: &[f64],
    pin: Option<f64>,
    harmonics: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(freqs.len());
    match pin {
        Some(pin) if circuit.has_diodes() => {
            for r in chunks(freqs.len()) {
                let mut warm: Option<HbState> = None;
                for &f in &freqs[r] {
                    let engine = HbEngine::new(circuit, f, harmonics)?;
                    let opts = HbOptions {
                        harmonics,
                        warm_start: warm.take(),
                        ..HbOptions::default()
                    };
                    let sol = engine.solve(pin, &opts)?;
                    let db = large_signal_s11(&sol).map_or(f64::NAN, magnitude_db);
                    if sol.converged {
                        warm = Some(sol.state);
                    }
                    out.push((f, db));
                }
            }
        }
        _ => {
            for &f in freqs {
                let s = s_parameters_at(circuit, f, None)?;
                out.push((f, s.db(1, 1)));
            }
        }
    }
    Ok(out)
}
