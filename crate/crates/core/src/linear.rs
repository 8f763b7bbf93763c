//! Small-signal frequency-domain engine.
//!
//! Nodal admittance assembly, port responses and n-port S-parameters. Every
//! diode gets an internal node between its series resistance and the
//! junction when `rs > 0`; the junction itself is stamped as its
//! small-signal conductance and depletion capacitance at a given bias.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::devices::DiodeModel;
use crate::linalg::{CMatrix, Lu, SingularColumn};
use crate::media::{microstrip_params, mlin_two_port, radial_stub_admittance};
use crate::netlist::{Circuit, ElementKind, NodeId};
use crate::{Error, Result};

/// Frequencies below this are evaluated at this value.
pub const MIN_FREQ: f64 = 1.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Matrix row of a circuit node; ground has none.
pub(crate) fn row(id: NodeId) -> Option<usize> {
    id.checked_sub(1)
}

/// One diode junction as seen by the solvers.
#[derive(Debug, Clone)]
pub struct Junction {
    /// Index into `Circuit::elements`.
    pub element: usize,
    pub name: String,
    pub model: DiodeModel,
    /// Row of the diode's anode node (where `rs` attaches).
    pub outer_anode: Option<usize>,
    /// Row of the junction's anode terminal (internal node when `rs > 0`).
    pub anode: Option<usize>,
    pub cathode: Option<usize>,
}

/// Unknown ordering shared by the linear and harmonic-balance engines.
#[derive(Debug, Clone)]
pub struct Layout {
    pub labels: Vec<String>,
    pub junctions: Vec<Junction>,
}

impl Layout {
    pub fn new(circuit: &Circuit) -> Self {
        let mut labels: Vec<String> = circuit.nodes[1..].to_vec();
        let mut junctions = Vec::new();
        for (index, e) in circuit.elements.iter().enumerate() {
            let Some(model) = circuit.diode_model(e) else {
                continue;
            };
            let outer_anode = row(e.nodes[0]);
            let anode = if model.rs > 0.0 {
                labels.push(format!("{}#j", e.name));
                Some(labels.len() - 1)
            } else {
                outer_anode
            };
            junctions.push(Junction {
                element: index,
                name: e.name.clone(),
                model,
                outer_anode,
                anode,
                cathode: row(e.nodes[1]),
            });
        }
        Self { labels, junctions }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn singular(&self, col: SingularColumn, freq: f64) -> Error {
        Error::Singular {
            freq,
            node: self
                .labels
                .get(col.0)
                .cloned()
                .unwrap_or_else(|| "?".to_string()),
        }
    }
}

/// Adds admittance `y` between rows `a` and `b`.
pub(crate) fn stamp_branch(m: &mut CMatrix, a: Option<usize>, b: Option<usize>, y: Complex64) {
    if let Some(i) = a {
        m.add_at(i, i, y);
    }
    if let Some(j) = b {
        m.add_at(j, j, y);
    }
    if let (Some(i), Some(j)) = (a, b) {
        m.add_at(i, j, -y);
        m.add_at(j, i, -y);
    }
}

/// Adds a ground-referenced two-port admittance matrix between `a` and `b`.
pub(crate) fn stamp_two_port(
    m: &mut CMatrix,
    a: Option<usize>,
    b: Option<usize>,
    y: &[[Complex64; 2]; 2],
) {
    let t = [a, b];
    for (p, ri) in t.iter().enumerate() {
        for (q, rj) in t.iter().enumerate() {
            if let (Some(i), Some(j)) = (ri, rj) {
                m.add_at(*i, *j, y[p][q]);
            }
        }
    }
}

/// Stamps every linear element (including diode series resistance) at
/// `freq > 0`. Junctions and ports are left to the caller.
pub(crate) fn stamp_linear(circuit: &Circuit, layout: &Layout, freq: f64, m: &mut CMatrix) {
    let omega = 2.0 * PI * freq;
    for e in &circuit.elements {
        let (a, b) = (row(e.nodes[0]), row(e.nodes[1]));
        match &e.kind {
            ElementKind::Resistor(r) => stamp_branch(m, a, b, Complex64::new(1.0 / r, 0.0)),
            ElementKind::Inductor(l) => {
                stamp_branch(m, a, b, Complex64::new(0.0, -1.0 / (omega * l)))
            }
            ElementKind::Capacitor(c) => stamp_branch(m, a, b, Complex64::new(0.0, omega * c)),
            ElementKind::Microstrip { width, length } => {
                let sub = circuit.substrate.as_ref().expect("validated circuit");
                let params = microstrip_params(sub, *width, freq);
                stamp_two_port(m, a, b, &mlin_two_port(&params, *length));
            }
            ElementKind::RadialStub { ri, ro, angle } => {
                let sub = circuit.substrate.as_ref().expect("validated circuit");
                let y = radial_stub_admittance(sub, *ri, *ro, *angle, freq, circuit.stub_mode());
                stamp_branch(m, a, None, y);
            }
            ElementKind::Diode { .. } => {}
        }
    }
    for j in &layout.junctions {
        if j.model.rs > 0.0 {
            stamp_branch(m, j.outer_anode, j.anode, Complex64::new(1.0 / j.model.rs, 0.0));
        }
    }
}

/// Small-signal admittance of a junction at DC bias `v`.
pub fn junction_admittance(model: &DiodeModel, v: f64, freq: f64) -> Complex64 {
    let ev = model.eval(v);
    Complex64::new(ev.conductance, 2.0 * PI * freq * ev.capacitance)
}

/// Complex nodal system of a circuit at one frequency, ports excluded.
#[derive(Debug, Clone)]
pub struct AdmittanceSystem {
    pub freq: f64,
    pub matrix: CMatrix,
    /// Node label per row.
    pub labels: Vec<String>,
}

/// Assembles the nodal admittance matrix. `bias` holds one DC junction
/// voltage per diode (in element order); zero bias when absent.
pub fn assemble_admittance(
    circuit: &Circuit,
    freq: f64,
    bias: Option<&[f64]>,
) -> Result<AdmittanceSystem> {
    let layout = Layout::new(circuit);
    let freq = freq.max(MIN_FREQ);
    let matrix = assemble_with_layout(circuit, &layout, freq, bias)?;
    Ok(AdmittanceSystem {
        freq,
        matrix,
        labels: layout.labels,
    })
}

fn assemble_with_layout(
    circuit: &Circuit,
    layout: &Layout,
    freq: f64,
    bias: Option<&[f64]>,
) -> Result<CMatrix> {
    if let Some(b) = bias {
        if b.len() != layout.junctions.len() {
            return Err(Error::InvalidArgument(format!(
                "bias has {} entries for {} diodes",
                b.len(),
                layout.junctions.len()
            )));
        }
    }
    let mut m = CMatrix::zeros(layout.size(), layout.size());
    stamp_linear(circuit, layout, freq, &mut m);
    for (k, j) in layout.junctions.iter().enumerate() {
        let v = bias.map_or(0.0, |b| b[k]);
        stamp_branch(&mut m, j.anode, j.cathode, junction_admittance(&j.model, v, freq));
    }
    Ok(m)
}

fn stamp_port_terminations(circuit: &Circuit, m: &mut CMatrix) {
    for p in &circuit.ports {
        stamp_branch(m, row(p.pos), row(p.neg), Complex64::new(1.0 / p.z0, 0.0));
    }
}

/// Node voltages with port 1 driven by a Thevenin source of EMF `emf` (peak
/// phasor) behind its reference impedance; other ports are terminated.
pub fn ac_node_voltages(
    circuit: &Circuit,
    freq: f64,
    emf: Complex64,
    bias: Option<&[f64]>,
) -> Result<Vec<Complex64>> {
    let port = circuit.port(1).ok_or(Error::PortCount {
        expected: 1,
        found: 0,
    })?;
    let layout = Layout::new(circuit);
    let freq = freq.max(MIN_FREQ);
    let mut m = assemble_with_layout(circuit, &layout, freq, bias)?;
    stamp_port_terminations(circuit, &mut m);
    let lu = Lu::factor(m).map_err(|c| layout.singular(c, freq))?;
    let mut rhs = vec![ZERO; layout.size()];
    let current = emf / port.z0;
    if let Some(i) = row(port.pos) {
        rhs[i] += current;
    }
    if let Some(i) = row(port.neg) {
        rhs[i] -= current;
    }
    Ok(lu.solve(&rhs))
}

/// n-port scattering matrix at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SParameterMatrix {
    pub freq: f64,
    pub n: usize,
    /// Row-major `S[i][j]`, zero-based.
    pub entries: Vec<Complex64>,
    pub z0: Vec<f64>,
}

impl SParameterMatrix {
    /// Zero-based access.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    /// `20 log10 |S_ij|`, one-based indices as in `S21`.
    pub fn db(&self, i: usize, j: usize) -> f64 {
        20.0 * self.get(i - 1, j - 1).norm().log10()
    }

    pub fn max_reciprocity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }

    /// Largest |(I - S^H S)_ij|; zero for a lossless network.
    pub fn unitarity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let mut acc = ZERO;
                for k in 0..self.n {
                    acc += self.get(k, i).conj() * self.get(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - expect).norm());
            }
        }
        worst
    }
}

fn ports_in_order(circuit: &Circuit) -> Vec<&crate::netlist::PortSpec> {
    (1..=circuit.ports.len())
        .filter_map(|k| circuit.port(k))
        .collect()
}

/// S-parameters at one frequency; see [`s_parameters`].
pub fn s_parameters_at(
    circuit: &Circuit,
    freq: f64,
    bias: Option<&[f64]>,
) -> Result<SParameterMatrix> {
    if circuit.ports.is_empty() {
        return Err(Error::PortCount {
            expected: 1,
            found: 0,
        });
    }
    let layout = Layout::new(circuit);
    let freq = freq.max(MIN_FREQ);
    let mut m = assemble_with_layout(circuit, &layout, freq, bias)?;
    stamp_port_terminations(circuit, &mut m);
    let lu = Lu::factor(m).map_err(|c| layout.singular(c, freq))?;
    let ports = ports_in_order(circuit);
    let n = ports.len();
    let mut entries = vec![ZERO; n * n];
    for (j, pj) in ports.iter().enumerate() {
        // incident wave a_j = 1: Norton current 2/sqrt(z0) behind z0
        let drive = Complex64::new(2.0 / pj.z0.sqrt(), 0.0);
        let mut rhs = vec![ZERO; layout.size()];
        if let Some(r) = row(pj.pos) {
            rhs[r] += drive;
        }
        if let Some(r) = row(pj.neg) {
            rhs[r] -= drive;
        }
        let v = lu.solve(&rhs);
        let at = |id: NodeId| row(id).map_or(ZERO, |r| v[r]);
        for (i, pi) in ports.iter().enumerate() {
            let vp = at(pi.pos) - at(pi.neg);
            let delta = if i == j { 1.0 } else { 0.0 };
            entries[i * n + j] = vp / pi.z0.sqrt() - delta;
        }
    }
    Ok(SParameterMatrix {
        freq,
        n,
        entries,
        z0: ports.iter().map(|p| p.z0).collect(),
    })
}

/// S-parameters over a frequency list. Diodes are linearized about `bias`
/// (one DC junction voltage per diode) or zero bias.
pub fn s_parameters(
    circuit: &Circuit,
    freqs: &[f64],
    bias: Option<&[f64]>,
) -> Result<Vec<SParameterMatrix>> {
    freqs
        .iter()
        .map(|&f| s_parameters_at(circuit, f, bias))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplexerRow {
    pub freq: f64,
    pub s11_db: f64,
    pub s21_db: f64,
    pub s31_db: f64,
    pub s23_db: f64,
}

impl DuplexerRow {
    fn from_s(s: &SParameterMatrix) -> Self {
        Self {
            freq: s.freq,
            s11_db: s.db(1, 1),
            s21_db: s.db(2, 1),
            s31_db: s.db(3, 1),
            s23_db: s.db(2, 3),
        }
    }
}

/// Both-band transmission summary of a three-port duplexer
/// (port 1 input, port 2 FM branch, port 3 GSM branch).
#[derive(Debug, Clone, PartialEq)]
pub struct DuplexerReport {
    pub fm: DuplexerRow,
    pub gsm: DuplexerRow,
    /// |S21| > |S31| at the FM frequency and |S31| > |S21| at the GSM one.
    pub selective: bool,
}

pub fn duplexer_report(circuit: &Circuit, f_fm: f64, f_gsm: f64) -> Result<DuplexerReport> {
    if circuit.ports.len() != 3 {
        return Err(Error::PortCount {
            expected: 3,
            found: circuit.ports.len(),
        });
    }
    let fm = DuplexerRow::from_s(&s_parameters_at(circuit, f_fm, None)?);
    let gsm = DuplexerRow::from_s(&s_parameters_at(circuit, f_gsm, None)?);
    let selective = fm.s21_db > fm.s31_db && gsm.s31_db > gsm.s21_db;
    Ok(DuplexerReport { fm, gsm, selective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse;

    #[test]
    fn single_resistor_system() {
        let c = parse("R1 n1 0 14k\n").unwrap();
        let sys = assemble_admittance(&c, 1e6, None).unwrap();
        assert_eq!(sys.matrix.rows(), 1);
        assert_eq!(sys.matrix[(0, 0)], Complex64::new(1.0 / 14000.0, 0.0));
    }

    #[test]
    fn capacitor_entry() {
        let c = parse("C1 n1 0 20p\n").unwrap();
        let f = 95e6;
        let sys = assemble_admittance(&c, f, None).unwrap();
        assert_eq!(sys.matrix[(0, 0)], Complex64::new(0.0, 2.0 * PI * f * 20e-12));
    }

    #[test]
    fn zero_bias_diode_stamp() {
        let c = parse(".model d diode is=3e-6 n=1.06 cj0=0.18p vj=0.35 m=0.5\nD1 a 0 model=d\n")
            .unwrap();
        let f = 925e6;
        let sys = assemble_admittance(&c, f, None).unwrap();
        let m = DiodeModel {
            is: 3e-6,
            n: 1.06,
            ..DiodeModel::default()
        };
        let g = 3e-6 / (1.06 * m.thermal_voltage());
        let y = sys.matrix[(0, 0)];
        assert!((y.re / g - 1.0).abs() < 1e-14);
        assert!((y.im / (2.0 * PI * f * 0.18e-12) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn series_resistance_gets_internal_node() {
        let c = parse(".model d diode is=3e-6 rs=25\nD1 a 0 model=d\nR1 a 0 50\n").unwrap();
        let sys = assemble_admittance(&c, 1e6, None).unwrap();
        assert_eq!(sys.labels, ["a", "D1#j"]);
    }

    #[test]
    fn matched_termination() {
        let c = parse("R1 a 0 50\n.port P1 a 0 z0=50\n").unwrap();
        let s = s_parameters_at(&c, 1e9, None).unwrap();
        assert!(s.get(0, 0).norm() < 1e-15);
    }

    #[test]
    fn series_resistor_two_port() {
        let c = parse("R1 a b 50\n.port P1 a 0 z0=50\n.port P2 b 0 z0=50\n").unwrap();
        let s = s_parameters_at(&c, 1e9, None).unwrap();
        assert!((s.get(0, 0) - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-14);
        assert!((s.get(1, 0) - Complex64::new(2.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn floating_node_is_reported() {
        let mut c = parse("R1 a 0 50\nC1 a b 1p\n.port P1 a 0 z0=50\n").unwrap();
        // zeroing the capacitor after validation leaves b floating
        c.elements[1].kind = ElementKind::Capacitor(0.0);
        match s_parameters_at(&c, 1e9, None).unwrap_err() {
            Error::Singular { node, .. } => assert_eq!(node, "b"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn duplexer_needs_three_ports() {
        let c = parse("R1 a 0 50\n.port P1 a 0 z0=50\n").unwrap();
        assert_eq!(
            duplexer_report(&c, 95e6, 925e6).unwrap_err(),
            Error::PortCount {
                expected: 3,
                found: 1
            }
        );
    }

    #[test]
    fn symmetric_branches_transmit_equally() {
        let c = parse(
            "L1 in a 100n\nL2 in b 100n\nR1 a 0 50\nR2 b 0 50\n\
             .port P1 in 0 z0=50\n.port P2 a 0 z0=50\n.port P3 b 0 z0=50\n",
        )
        .unwrap();
        let r = duplexer_report(&c, 95e6, 925e6).unwrap();
        assert_eq!(r.fm.s21_db, r.fm.s31_db);
        assert!(!r.selective);
    }

    fn lossless_line() -> Circuit {
        parse(
            ".substrate er=3.38 tand=0 h=0.8mm t=35um sigma=1e30\n\
             MLIN TL1 a b w=1.6mm l=37mm\n\
             .port P1 a 0 z0=50\n.port P2 b 0 z0=50\n",
        )
        .unwrap()
    }

    #[test]
    fn lossless_line_is_unitary_and_reciprocal() {
        let c = lossless_line();
        for s in s_parameters(&c, &[95e6, 925e6, 2.4e9], None).unwrap() {
            assert!(s.unitarity_error() < 1e-10, "{}", s.unitarity_error());
            assert!(s.max_reciprocity_error() < 1e-10);
        }
    }

    #[test]
    fn lossy_network_is_passive() {
        let c = parse(
            ".substrate er=3.38 tand=0.0027 h=0.8mm\n\
             MLIN TL1 a b w=1.6mm l=37mm\nMRSTUB S1 b ri=0.5mm ro=6mm ang=90deg\n\
             L1 b c 30n\nC1 c 0 2p\nR1 c 0 200\n\
             .port P1 a 0 z0=50\n.port P2 c 0 z0=50\n",
        )
        .unwrap();
        for s in s_parameters(&c, &[95e6, 925e6], None).unwrap() {
            assert!(s.max_reciprocity_error() < 1e-10);
            for j in 0..2 {
                let p: f64 = (0..2).map(|i| s.get(i, j).norm_sqr()).sum();
                assert!(p < 1.0);
            }
        }
    }

    #[test]
    fn low_frequency_matches_resistive_network() {
        // capacitors open and inductors short: R1 + (R2 || R3) seen from P1
        let c = parse(
            "R1 a b 30\nL1 b c 10n\nR2 c 0 100\nR3 c d 100\nC1 d 0 1p\nC2 a 0 1p\n\
             R4 d 0 100\n.port P1 a 0 z0=50\n",
        )
        .unwrap();
        let z = 30.0 + 100.0 * 200.0 / 300.0;
        let expect = (z - 50.0) / (z + 50.0);
        let s = s_parameters_at(&c, 1e-3, None).unwrap();
        assert_eq!(s.freq, MIN_FREQ);
        assert!((s.get(0, 0).re / expect - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ac_solution_matches_divider() {
        let c = parse("R1 a 0 50\n.port P1 a 0 z0=50\n").unwrap();
        let v = ac_node_voltages(&c, 1e9, Complex64::new(2.0, 0.0), None).unwrap();
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
