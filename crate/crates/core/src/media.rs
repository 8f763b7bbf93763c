//! Quasi-static microstrip and radial-stub models.
//!
//! Microstrip impedance and effective permittivity use the
//! Hammerstad–Jensen closed form for a zero-thickness strip without
//! dispersion correction. At the ≤ 1 GHz bands on a 0.8 mm substrate the
//! dispersive correction is well under a percent.

use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{C0, EPS0, MU0};

/// Free-space wave impedance (Ω).
pub const ETA0: f64 = MU0 * C0;

/// Default metal thickness when `.substrate` omits `t` (m).
pub const DEFAULT_METAL_THICKNESS: f64 = 35e-6;
/// Default metal conductivity (copper, S/m).
pub const DEFAULT_CONDUCTIVITY: f64 = 5.8e7;
/// Feed width assumed for a radial stub declared with `ri = 0` (m).
pub const MIN_FEED_WIDTH: f64 = 0.1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateSpec {
    pub eps_r: f64,
    pub tan_delta: f64,
    /// Dielectric height (m).
    pub height: f64,
    /// Strip thickness (m).
    pub metal_thickness: f64,
    /// Strip conductivity (S/m).
    pub conductivity: f64,
}

impl SubstrateSpec {
    /// RO4003C, 0.8 mm, 35 µm copper.
    pub fn ro4003c() -> Self {
        Self {
            eps_r: 3.38,
            tan_delta: 0.0027,
            height: 0.8e-3,
            metal_thickness: DEFAULT_METAL_THICKNESS,
            conductivity: DEFAULT_CONDUCTIVITY,
        }
    }

    pub fn check(&self) -> Result<(), &'static str> {
        if !(self.eps_r >= 1.0) {
            Err("substrate er must be >= 1")
        } else if !(self.tan_delta >= 0.0) {
            Err("substrate tand must be >= 0")
        } else if !(self.height > 0.0) {
            Err("substrate h must be > 0")
        } else if !(self.metal_thickness > 0.0) {
            Err("substrate t must be > 0")
        } else if !(self.conductivity > 0.0) {
            Err("substrate sigma must be > 0")
        } else {
            Ok(())
        }
    }

    /// Same stack with no dielectric or conductor loss.
    pub fn lossless(&self) -> Self {
        Self {
            tan_delta: 0.0,
            conductivity: f64::INFINITY,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    pub z0: f64,
    pub eps_eff: f64,
    /// Conductor loss (Np/m).
    pub alpha_c: f64,
    /// Dielectric loss (Np/m).
    pub alpha_d: f64,
    /// Phase constant (rad/m).
    pub beta: f64,
}

impl LineParams {
    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.alpha_c + self.alpha_d, self.beta)
    }
}

/// Effective permittivity and the filling factor (eps_eff − 1)/(eps_r − 1).
fn eps_eff_hj(u: f64, eps_r: f64) -> (f64, f64) {
    let u4 = u.powi(4);
    let a = 1.0
        + ((u4 + (u / 52.0).powi(2)) / (u4 + 0.432)).ln() / 49.0
        + (1.0 + (u / 18.1).powi(3)).ln() / 18.7;
    let b = 0.564 * ((eps_r - 0.9) / (eps_r + 3.0)).powf(0.053);
    let f = (1.0 + 10.0 / u).powf(-a * b);
    let fill = 0.5 * (1.0 + f);
    (0.5 * (eps_r + 1.0) + 0.5 * (eps_r - 1.0) * f, fill)
}

/// Air-filled impedance of a strip with width/height ratio `u`.
fn z0_air_hj(u: f64) -> f64 {
    let fu = 6.0 + (2.0 * PI - 6.0) * (-(30.666 / u).powf(0.7528)).exp();
    ETA0 / (2.0 * PI) * (fu / u + (1.0 + (2.0 / u).powi(2)).sqrt()).ln()
}

/// Surface resistance including the finite strip thickness.
fn surface_resistance(sub: &SubstrateSpec, freq: f64) -> f64 {
    if sub.conductivity.is_infinite() {
        return 0.0;
    }
    let skin_depth = 1.0 / (PI * freq * MU0 * sub.conductivity).sqrt();
    let effective = skin_depth * (1.0 - (-sub.metal_thickness / skin_depth).exp());
    1.0 / (sub.conductivity * effective)
}

pub fn microstrip_params(sub: &SubstrateSpec, width: f64, freq: f64) -> LineParams {
    let u = width / sub.height;
    let (eps_eff, fill) = eps_eff_hj(u, sub.eps_r);
    let z0 = z0_air_hj(u) / eps_eff.sqrt();
    let k0 = 2.0 * PI * freq / C0;
    let alpha_d = k0 * sub.eps_r * fill * sub.tan_delta / (2.0 * eps_eff.sqrt());
    let alpha_c = surface_resistance(sub, freq) / (z0 * width);
    LineParams {
        z0,
        eps_eff,
        alpha_c,
        alpha_d,
        beta: k0 * eps_eff.sqrt(),
    }
}

/// ABCD matrix of a line segment.
pub fn mlin_abcd(params: &LineParams, length: f64) -> [[Complex64; 2]; 2] {
    let gl = params.gamma() * length;
    let z0 = Complex64::new(params.z0, 0.0);
    [
        [gl.cosh(), z0 * gl.sinh()],
        [gl.sinh() / z0, gl.cosh()],
    ]
}

/// Two-port admittance matrix of a line segment (S).
pub fn mlin_two_port(params: &LineParams, length: f64) -> [[Complex64; 2]; 2] {
    let gl = params.gamma() * length;
    let (sh, ch) = (gl.sinh(), gl.cosh());
    let y0 = 1.0 / params.z0;
    let self_y = ch / sh * y0;
    let mutual = -y0 / sh;
    [[self_y, mutual], [mutual, self_y]]
}

/// How radial stubs are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubMode {
    /// Lossless radial transmission line (Bessel-function solution).
    #[default]
    Bessel,
    /// Parallel-plate capacitance of the sector.
    Capacitor,
}

/// Inner radius used for the field solution; `ri = 0` maps to the radius at
/// which the sector chord equals [`MIN_FEED_WIDTH`].
pub fn effective_inner_radius(ri: f64, ro: f64, angle: f64) -> f64 {
    if ri > 0.0 {
        ri
    } else {
        (MIN_FEED_WIDTH / (2.0 * (angle / 2.0).sin())).min(0.5 * ro)
    }
}

/// Effective permittivity seen by the stub: that of a microstrip as wide as
/// the sector's mean arc.
pub fn radial_stub_eps_eff(sub: &SubstrateSpec, ri: f64, ro: f64, angle: f64) -> f64 {
    let ri = effective_inner_radius(ri, ro, angle);
    let mean_arc = angle * 0.5 * (ri + ro);
    eps_eff_hj(mean_arc / sub.height, sub.eps_r).0
}

/// Low-frequency parallel-plate capacitance of the sector (F).
pub fn radial_stub_capacitance(sub: &SubstrateSpec, ri: f64, ro: f64, angle: f64) -> f64 {
    let eps_eff = radial_stub_eps_eff(sub, ri, ro, angle);
    let ri = effective_inner_radius(ri, ro, angle);
    EPS0 * eps_eff * (angle / (2.0 * PI)) * PI * (ro * ro - ri * ri) / sub.height
}

/// Input admittance at the apex of an open-ended radial stub (S).
pub fn radial_stub_admittance(
    sub: &SubstrateSpec,
    ri: f64,
    ro: f64,
    angle: f64,
    freq: f64,
    mode: StubMode,
) -> Complex64 {
    let omega = 2.0 * PI * freq;
    match mode {
        StubMode::Capacitor => {
            Complex64::new(0.0, omega * radial_stub_capacitance(sub, ri, ro, angle))
        }
        StubMode::Bessel => {
            if freq == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let eps_eff = radial_stub_eps_eff(sub, ri, ro, angle);
            let ri = effective_inner_radius(ri, ro, angle);
            let k = omega * eps_eff.sqrt() / C0;
            let eta = ETA0 / eps_eff.sqrt();
            let (a, b) = (k * ri, k * ro);
            // open rim: H_phi(ro) = 0
            let num = libm::y1(b) * libm::j1(a) - libm::j1(b) * libm::y1(a);
            let den = libm::y1(b) * libm::j0(a) - libm::j1(b) * libm::y0(a);
            Complex64::new(0.0, -angle * ri / (eta * sub.height) * num / den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_medium_has_unit_eps_eff() {
        let sub = SubstrateSpec {
            eps_r: 1.0,
            ..SubstrateSpec::ro4003c()
        };
        for w in [0.1e-3, 0.8e-3, 1.6e-3, 8e-3] {
            assert_eq!(microstrip_params(&sub, w, 1e9).eps_eff, 1.0);
        }
    }

    #[test]
    fn hammerstad_jensen_oracle_values() {
        // 40-digit evaluation of the closed form at w/h = 2, eps_r = 3.38
        let sub = SubstrateSpec::ro4003c();
        let p = microstrip_params(&sub, 1.6e-3, 1e8);
        assert!((p.eps_eff / 2.645_306_154_172_108 - 1.0).abs() < 1e-12);
        assert!((p.z0 / 54.738_536_762_386_88 - 1.0).abs() < 1e-9);
        assert!((p.eps_eff - 2.64).abs() / 2.64 < 0.01);
        assert!((p.z0 - 55.0).abs() / 55.0 < 0.01);
    }

    #[test]
    fn lossless_limit() {
        let sub = SubstrateSpec::ro4003c().lossless();
        let p = microstrip_params(&sub, 1e-3, 925e6);
        assert_eq!(p.alpha_c, 0.0);
        assert_eq!(p.alpha_d, 0.0);
    }

    #[test]
    fn beta_is_phase_velocity() {
        let sub = SubstrateSpec::ro4003c();
        let f = 925e6;
        let p = microstrip_params(&sub, 1.6e-3, f);
        assert!((p.beta - 2.0 * PI * f * p.eps_eff.sqrt() / C0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_eps_r_and_width() {
        for i in 0..20 {
            let u = 0.1 + 0.5 * i as f64;
            let mut last = 0.0;
            for j in 0..30 {
                let er = 1.0 + 0.4 * j as f64;
                let e = eps_eff_hj(u, er).0;
                assert!(e >= last);
                assert!(e >= 1.0 && e <= er);
                last = e;
            }
        }
        let sub = SubstrateSpec::ro4003c();
        let mut last = f64::INFINITY;
        for i in 1..200 {
            let z = microstrip_params(&sub, i as f64 * 0.05e-3, 1e9).z0;
            assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn half_wave_line_via_abcd_is_identity_up_to_sign() {
        let sub = SubstrateSpec::ro4003c().lossless();
        let f = 925e6;
        let p = microstrip_params(&sub, 1.6e-3, f);
        let m = mlin_abcd(&p, PI / p.beta);
        assert!((m[0][0] + 1.0).norm() < 1e-12);
        assert!((m[1][1] + 1.0).norm() < 1e-12);
        assert!(m[0][1].norm() < 1e-10);
        assert!(m[1][0].norm() < 1e-14);
        // |S21| from ABCD
        let z0 = p.z0;
        let den = m[0][0] + m[0][1] / z0 + m[1][0] * z0 + m[1][1];
        assert!(((2.0 / den).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn admittance_matrix_is_reciprocal_and_passive() {
        let sub = SubstrateSpec::ro4003c();
        let p = microstrip_params(&sub, 1.1e-3, 925e6);
        let y = mlin_two_port(&p, 0.0324);
        assert_eq!(y[0][1], y[1][0]);
        assert!(y[0][0].re > 0.0);
        assert!(y[0][0].re.abs() > (y[0][1].re).abs());
    }

    #[test]
    fn capacitor_mode_is_exact_parallel_plate() {
        let sub = SubstrateSpec::ro4003c();
        let y = radial_stub_admittance(&sub, 1e-3, 6e-3, PI / 2.0, 95e6, StubMode::Capacitor);
        let c = radial_stub_capacitance(&sub, 1e-3, 6e-3, PI / 2.0);
        assert_eq!(y.re, 0.0);
        assert!((y.im - 2.0 * PI * 95e6 * c).abs() < 1e-18);
    }

    #[test]
    fn bessel_stub_is_lossless_and_zero_ri_is_finite() {
        let sub = SubstrateSpec::ro4003c();
        for f in [1e6, 95e6, 925e6, 3e9] {
            let y = radial_stub_admittance(&sub, 0.0, 6e-3, PI / 2.0, f, StubMode::Bessel);
            assert_eq!(y.re, 0.0);
            assert!(y.im.is_finite());
        }
    }
}
