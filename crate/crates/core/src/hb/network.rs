//! Per-harmonic Norton reduction of the linear subnetwork onto the junction
//! ports.
//!
//! Each junction is split into a linear companion (its zero-bias conductance
//! and capacitance), which stays in the linear network, and the nonlinear
//! excess current `i_ext`, which is what the Newton loop balances against
//! the reduced network. The companion keeps the network solvable even when a
//! node is isolated at DC by capacitors and diodes only.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::linalg::{CMatrix, Lu};
use crate::linear::{row, stamp_branch, stamp_linear, Layout};
use crate::netlist::{Circuit, ElementKind, UnionFind};
use crate::{Error, Result};

/// Shunt conductance given to nodes that have no DC path to ground.
pub const GMIN: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Linear companion of one junction: zero-bias conductance and capacitance.
#[derive(Debug, Clone, Copy)]
pub struct Companion {
    pub g0: f64,
    pub c0: f64,
}

impl Companion {
    pub fn admittance(&self, freq: f64) -> Complex64 {
        Complex64::new(self.g0, 2.0 * PI * freq * self.c0)
    }
}

/// Reduced network at one harmonic. Voltages and currents are per unit
/// source EMF where a source is involved.
#[derive(Debug, Clone)]
pub struct HarmonicNetwork {
    pub freq: f64,
    /// System row of every layout row; `None` when merged into ground.
    pub rows: Vec<Option<usize>>,
    /// Node response to unit excess current injected at each junction.
    pub x: CMatrix,
    /// Node response to unit EMF.
    pub xs: Vec<Complex64>,
    /// Norton admittance at the junction ports.
    pub y_red: CMatrix,
    /// Open-circuit junction voltage per unit EMF.
    pub v_oc: Vec<Complex64>,
    /// System rows carrying a [`GMIN`] shunt (DC only).
    pub gmin_rows: Vec<usize>,
}

impl HarmonicNetwork {
    /// Builds the reduction at `freq`; `freq == 0` selects the DC network in
    /// which inductors and lines are shorts and capacitors and stubs open.
    pub fn build(
        circuit: &Circuit,
        layout: &Layout,
        companions: &[Companion],
        freq: f64,
        driven: bool,
    ) -> Result<Self> {
        let n = layout.size();
        let (rows, size, mut y, gmin_rows) = if freq == 0.0 {
            dc_system(circuit, layout, companions)
        } else {
            let mut y = CMatrix::zeros(n, n);
            stamp_linear(circuit, layout, freq, &mut y);
            for p in &circuit.ports {
                stamp_branch(&mut y, row(p.pos), row(p.neg), Complex64::new(1.0 / p.z0, 0.0));
            }
            for (j, c) in layout.junctions.iter().zip(companions) {
                stamp_branch(&mut y, j.anode, j.cathode, c.admittance(freq));
            }
            ((0..n).map(Some).collect(), n, y, Vec::new())
        };
        let map = |r: Option<usize>| r.and_then(|r| rows[r]);
        if freq == 0.0 {
            for &r in &gmin_rows {
                y.add_at(r, r, Complex64::new(GMIN, 0.0));
            }
        }
        let nj = layout.junctions.len();
        let mut b = CMatrix::zeros(size, nj);
        for (k, j) in layout.junctions.iter().enumerate() {
            if let Some(r) = map(j.anode) {
                b.add_at(r, k, Complex64::new(1.0, 0.0));
            }
            if let Some(r) = map(j.cathode) {
                b.add_at(r, k, Complex64::new(-1.0, 0.0));
            }
        }
        let mut source = vec![ZERO; size];
        if driven {
            let p = circuit.port(1).ok_or(Error::PortCount {
                expected: 1,
                found: 0,
            })?;
            let i = Complex64::new(1.0 / p.z0, 0.0);
            if let Some(r) = map(row(p.pos)) {
                source[r] += i;
            }
            if let Some(r) = map(row(p.neg)) {
                source[r] -= i;
            }
        }
        let lu = Lu::factor(y).map_err(|c| {
            let node = rows
                .iter()
                .position(|&r| r == Some(c.0))
                .map_or_else(|| "?".into(), |r| layout.labels[r].clone());
            Error::Singular { freq, node }
        })?;
        let x = lu.solve_matrix(&b);
        let xs = lu.solve(&source);
        let bt = b.transpose();
        let z_red = bt.mul(&x);
        let v_oc = bt.mul_vec(&xs);
        let y_red = Lu::factor(z_red)
            .map_err(|c| Error::Singular {
                freq,
                node: format!("junction {}", layout.junctions[c.0].name),
            })?
            .inverse();
        Ok(Self {
            freq,
            rows,
            x,
            xs,
            y_red,
            v_oc,
            gmin_rows,
        })
    }

    /// System-row voltages for EMF `emf` and junction excess currents `i_ext`.
    pub fn node_voltages(&self, emf: Complex64, i_ext: &[Complex64]) -> Vec<Complex64> {
        let xi = self.x.mul_vec(i_ext);
        self.xs
            .iter()
            .zip(xi)
            .map(|(&s, d)| s * emf - d)
            .collect()
    }

    /// Voltage of a layout row given system-row voltages.
    pub fn layout_voltage(&self, system: &[Complex64], layout_row: Option<usize>) -> Complex64 {
        layout_row
            .and_then(|r| self.rows[r])
            .map_or(ZERO, |r| system[r])
    }
}

type DcSystem = (Vec<Option<usize>>, usize, CMatrix, Vec<usize>);

fn dc_system(circuit: &Circuit, layout: &Layout, companions: &[Companion]) -> DcSystem {
    let n = layout.size();
    // ids: 0 is ground, layout row r is r + 1
    let mut shorts = UnionFind::new(n + 1);
    for e in &circuit.elements {
        if matches!(e.kind, ElementKind::Inductor(_) | ElementKind::Microstrip { .. }) {
            shorts.union(e.nodes[0], e.nodes[1]);
        }
    }
    let ground = shorts.find(0);
    let mut root_row = vec![None; n + 1];
    let mut size = 0;
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let root = shorts.find(r + 1);
        if root == ground {
            rows.push(None);
            continue;
        }
        let sys = *root_row[root].get_or_insert_with(|| {
            size += 1;
            size - 1
        });
        rows.push(Some(sys));
    }
    let map = |r: Option<usize>| r.and_then(|r| rows[r]);
    let mut y = CMatrix::zeros(size, size);
    // conductive connectivity over system rows, index `size` is ground
    let mut paths = UnionFind::new(size + 1);
    let sys_id = |s: Option<usize>| s.unwrap_or(size);
    let mut conduct = |y: &mut CMatrix, a: Option<usize>, b: Option<usize>, g: f64| {
        let (a, b) = (map(a), map(b));
        stamp_branch(y, a, b, Complex64::new(g, 0.0));
        paths.union(sys_id(a), sys_id(b));
    };
    for e in &circuit.elements {
        if let ElementKind::Resistor(r) = e.kind {
            conduct(&mut y, row(e.nodes[0]), row(e.nodes[1]), 1.0 / r);
        }
    }
    for p in &circuit.ports {
        conduct(&mut y, row(p.pos), row(p.neg), 1.0 / p.z0);
    }
    for (j, c) in layout.junctions.iter().zip(companions) {
        if j.model.rs > 0.0 {
            conduct(&mut y, j.outer_anode, j.anode, 1.0 / j.model.rs);
        }
        conduct(&mut y, j.anode, j.cathode, c.g0);
    }
    let ground_root = paths.find(size);
    let mut gmin_rows = Vec::new();
    let mut seen = vec![false; size + 1];
    for s in 0..size {
        let root = paths.find(s);
        if root != ground_root && !seen[root] {
            seen[root] = true;
            gmin_rows.push(s);
        }
    }
    (rows, size, y, gmin_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse;

    fn companions(layout: &Layout) -> Vec<Companion> {
        layout
            .junctions
            .iter()
            .map(|j| Companion {
                g0: j.model.zero_bias_conductance(),
                c0: j.model.capacitance(0.0),
            })
            .collect()
    }

    #[test]
    fn single_port_norton_is_textbook() {
        // source 50 Ω, shunt 200 Ω, diode across the port: Thevenin EMF
        // scaled by the divider, Norton admittance 1/50 + 1/200 + g0
        let c = parse(".model d diode is=1e-9\nR1 a 0 200\nD1 a 0 model=d\n.port P1 a 0 z0=50\n")
            .unwrap();
        let layout = Layout::new(&c);
        let comp = companions(&layout);
        let net = HarmonicNetwork::build(&c, &layout, &comp, 1e6, true).unwrap();
        let y = 1.0 / 50.0 + 1.0 / 200.0 + comp[0].g0;
        assert!((net.y_red[(0, 0)].re / y - 1.0).abs() < 1e-12);
        assert!((net.v_oc[0].re * y - 1.0 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn undriven_harmonic_has_no_source() {
        let c = parse(".model d diode\nR1 a 0 200\nD1 a 0 model=d\n.port P1 a 0 z0=50\n").unwrap();
        let layout = Layout::new(&c);
        let net = HarmonicNetwork::build(&c, &layout, &companions(&layout), 2e6, false).unwrap();
        assert!(net.v_oc.iter().chain(&net.xs).all(|v| *v == ZERO));
    }

    #[test]
    fn re_expansion_matches_full_solve() {
        let c = parse(
            ".model d diode is=3e-6 n=1.06 rs=25 cj0=0.18p vj=0.35\n\
             C1 in a 20p\nD1 0 a model=d\nD2 a out model=d\nC2 out 0 20p\nR1 out 0 14k\n\
             L1 in 0 300n\n.port P1 in 0 z0=50\n",
        )
        .unwrap();
        let layout = Layout::new(&c);
        let comp = companions(&layout);
        let f = 95e6;
        let net = HarmonicNetwork::build(&c, &layout, &comp, f, true).unwrap();
        let emf = Complex64::new(0.3, -0.1);
        // arbitrary excess currents through the junctions
        let i_ext = [Complex64::new(1e-4, 2e-5), Complex64::new(-3e-5, 7e-5)];
        let reduced = net.node_voltages(emf, &i_ext);

        let n = layout.size();
        let mut y = CMatrix::zeros(n, n);
        stamp_linear(&c, &layout, f, &mut y);
        stamp_branch(&mut y, Some(0), None, Complex64::new(1.0 / 50.0, 0.0));
        let mut rhs = vec![ZERO; n];
        rhs[0] = emf / 50.0;
        for ((j, cmp), i) in layout.junctions.iter().zip(&comp).zip(&i_ext) {
            stamp_branch(&mut y, j.anode, j.cathode, cmp.admittance(f));
            if let Some(a) = j.anode {
                rhs[a] -= *i;
            }
            if let Some(k) = j.cathode {
                rhs[k] += *i;
            }
        }
        let full = Lu::factor(y).unwrap().solve(&rhs);
        for (a, b) in reduced.iter().zip(&full) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1e-3), "{a} {b}");
        }
        // and the Norton form gives the same junction currents
        let v: Vec<Complex64> = layout
            .junctions
            .iter()
            .map(|j| net.layout_voltage(&reduced, j.anode) - net.layout_voltage(&reduced, j.cathode))
            .collect();
        for (k, i) in i_ext.iter().enumerate() {
            let mut norton = ZERO;
            for l in 0..2 {
                norton += net.y_red[(k, l)] * (net.v_oc[l] * emf - v[l]);
            }
            assert!((norton - i).norm() < 1e-12 * i.norm());
        }
    }

    #[test]
    fn dc_merges_inductors_and_shunts_floating_nodes() {
        let c = parse("L1 a b 10n\nR1 b 0 50\nC1 b c 1p\nC2 c 0 1p\n.port P1 a 0 z0=50\n").unwrap();
        let layout = Layout::new(&c);
        let net = HarmonicNetwork::build(&c, &layout, &[], 0.0, true).unwrap();
        assert_eq!(net.rows, [Some(0), Some(0), Some(1)]);
        assert_eq!(net.gmin_rows, [1]);
    }
}
