//! Single-qubit polarization algebra.
//!
//! Conventions used throughout the crate:
//!
//! * `|H⟩ = (1, 0)`, `|V⟩ = (0, 1)`; `S_z = +1` is horizontal.
//! * `|D⟩ = (|H⟩ + |V⟩)/√2`, `|A⟩ = (|H⟩ − |V⟩)/√2`.
//! * `|R⟩ = (|H⟩ − i|V⟩)/√2`, `|L⟩ = (|H⟩ + i|V⟩)/√2`, so `S_y = +1` is `|R⟩`.
//! * Waveplates have their fast axis at `θ` from horizontal. The quarter-wave
//!   plate at 0° is `diag(1, −i)` and the half-wave plate at 0° is
//!   `diag(1, −1)`; global phases are dropped. With these choices the
//!   analyzer settings in [`crate::tomography::projection_schedule`] map onto
//!   the six cardinal states when the PBS transmits `|H⟩`.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

/// Tolerance for structural invariants (normalization, hermiticity, trace).
pub const STRUCTURAL_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

/// Oriented so that `|R⟩ = (|H⟩ − i|V⟩)/√2` is the +1 eigenvector, which
/// keeps `ρ = ½(I + S·σ)` consistent with `S_y = (C_R − C_L)/(C_R + C_L)`.
pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, I, -I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// Is `u` unitary to within `tol` (max-abs entry of `U†U − I`)?
pub fn is_unitary(u: &Mat2, tol: f64) -> bool {
    let d = u.adjoint() * u - Mat2::identity();
    d.iter().all(|z| z.norm() <= tol)
}

/// Right-handed rotation of the Stokes vector by the rotation vector `θ`.
///
/// Because [`pauli_y`] is the mirror image of the textbook matrix, this is
/// `exp(+i θ·σ / 2)` in terms of the crate's Pauli operators.
pub fn su2_rotation(theta: [f64; 3]) -> Mat2 {
    let angle = (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]).sqrt();
    if angle == 0.0 {
        return Mat2::identity();
    }
    let (s, c) = (angle / 2.0).sin_cos();
    let n = [theta[0] / angle, theta[1] / angle, theta[2] / angle];
    let generator =
        pauli_x() * C64::from(n[0]) + pauli_y() * C64::from(n[1]) + pauli_z() * C64::from(n[2]);
    Mat2::identity() * C64::from(c) + generator * (I * s)
}

/// Pulls a nearly unitary matrix back onto U(2) via polar decomposition.
///
/// Long products of rotations accumulate rounding error; this keeps them on
/// the group without changing the physical rotation.
pub fn reunitarize(u: &Mat2) -> Mat2 {
    // Gram-Schmidt on the columns.
    let mut c0 = u.column(0).into_owned();
    let n0 = c0.norm();
    c0 /= C64::from(n0);
    let mut c1 = u.column(1).into_owned();
    let proj = c0.dotc(&c1);
    c1 -= c0 * proj;
    let n1 = c1.norm();
    c1 /= C64::from(n1);
    Mat2::from_columns(&[c0, c1])
}

/// A pure polarization state `α|H⟩ + β|V⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    h: C64,
    v: C64,
}

impl PolarizationState {
    /// Normalizes the given amplitudes; fails on a zero vector.
    pub fn new(h: C64, v: C64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain(
                "polarization amplitudes must be non-zero and finite".into(),
            ));
        }
        Ok(Self {
            h: h / norm,
            v: v / norm,
        })
    }

    pub fn h() -> Self {
        Self { h: ONE, v: ZERO }
    }

    pub fn v() -> Self {
        Self { h: ZERO, v: ONE }
    }

    pub fn d() -> Self {
        Self {
            h: C64::from(FRAC_1_SQRT_2),
            v: C64::from(FRAC_1_SQRT_2),
        }
    }

    pub fn a() -> Self {
        Self {
            h: C64::from(FRAC_1_SQRT_2),
            v: C64::from(-FRAC_1_SQRT_2),
        }
    }

    pub fn r() -> Self {
        Self {
            h: C64::from(FRAC_1_SQRT_2),
            v: C64::new(0.0, -FRAC_1_SQRT_2),
        }
    }

    pub fn l() -> Self {
        Self {
            h: C64::from(FRAC_1_SQRT_2),
            v: C64::new(0.0, FRAC_1_SQRT_2),
        }
    }

    /// Point on the Bloch sphere; `(0, 0, 1)` is `|H⟩`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if !(r > 0.0) {
            return Err(Error::Domain("Bloch vector must be non-zero".into()));
        }
        let (x, y, z) = (x / r, y / r, z / r);
        let theta = z.clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        // ⟨σ_y⟩ = +1 for (1, −i)/√2, hence the e^{−iφ} phase on |V⟩.
        Self::new(
            C64::from((theta / 2.0).cos()),
            C64::from_polar((theta / 2.0).sin(), -phi),
        )
    }

    pub fn amplitudes(&self) -> (C64, C64) {
        (self.h, self.v)
    }

    pub fn ket(&self) -> Vector2<C64> {
        Vector2::new(self.h, self.v)
    }

    pub fn projector(&self) -> DensityMatrix {
        let k = self.ket();
        DensityMatrix(k * k.adjoint())
    }

    pub fn stokes(&self) -> StokesVector {
        rho_to_stokes(&self.projector())
    }

    /// `U|ψ⟩`. `U` is assumed unitary.
    pub fn transformed(&self, u: &Mat2) -> Self {
        let k = u * self.ket();
        Self { h: k[0], v: k[1] }
    }

    /// `|⟨self|other⟩|²`
    pub fn overlap(&self, other: &PolarizationState) -> f64 {
        self.ket().dotc(&other.ket()).norm_sqr()
    }

    /// The orthogonal state (up to phase).
    pub fn orthogonal(&self) -> Self {
        Self {
            h: -self.v.conj(),
            v: self.h.conj(),
        }
    }
}

/// A 2×2 polarization density operator.
///
/// Constructed only from Hermitian unit-trace matrices; positivity is not
/// enforced because linear tomographic inversion can leave the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

/// Serialized as `[[[re, im], [re, im]], [[re, im], [re, im]]]`, row major.
impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let m = &self.0;
        let rows = [
            [[m[(0, 0)].re, m[(0, 0)].im], [m[(0, 1)].re, m[(0, 1)].im]],
            [[m[(1, 0)].re, m[(1, 0)].im], [m[(1, 1)].re, m[(1, 1)].im]],
        ];
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let r: [[[f64; 2]; 2]; 2] = Deserialize::deserialize(deserializer)?;
        let c = |i: usize, j: usize| C64::new(r[i][j][0], r[i][j][1]);
        DensityMatrix::from_matrix(Mat2::new(c(0, 0), c(0, 1), c(1, 0), c(1, 1)))
            .map_err(serde::de::Error::custom)
    }
}

impl DensityMatrix {
    pub fn from_matrix(m: Mat2) -> Result<Self> {
        let herm = (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::Domain(format!(
                "matrix is not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Domain(format!("trace is {tr}, expected 1")));
        }
        Ok(Self(m))
    }

    /// Builds without validation. Callers guarantee Hermitian and trace one.
    pub(crate) fn from_matrix_unchecked(m: Mat2) -> Self {
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat2::identity() * C64::from(0.5))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Eigenvalues in ascending order. Closed form for a 2×2 Hermitian matrix.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let b = self.0[(0, 1)];
        let mean = (a + d) / 2.0;
        let half_gap = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
        [mean - half_gap, mean + half_gap]
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol
    }

    /// `U ρ U†`
    pub fn transformed(&self, u: &Mat2) -> Self {
        Self(u * self.0 * u.adjoint())
    }

    /// `½ Tr|ρ − σ|`; for qubits this is half the Bloch-vector distance.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let a = rho_to_stokes(self);
        let b = rho_to_stokes(other);
        0.5 * ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
    }

    /// Convex mixture `w·self + (1−w)·other`.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Self {
        Self(self.0 * C64::from(w) + other.0 * C64::from(1.0 - w))
    }
}

impl From<PolarizationState> for DensityMatrix {
    fn from(s: PolarizationState) -> Self {
        s.projector()
    }
}

/// Normalized Stokes vector `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl StokesVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.norm() <= 1.0 + 1e-9
    }

    /// Radial projection onto the unit ball; identity for physical vectors.
    pub fn clamped_to_ball(&self) -> Self {
        let n = self.norm();
        if n <= 1.0 {
            *self
        } else {
            Self::new(self.x / n, self.y / n, self.z / n)
        }
    }
}

/// Quarter- and half-wave plate angles, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub qwp_deg: f64,
    pub hwp_deg: f64,
}

impl WaveplateSetting {
    pub const fn new(qwp_deg: f64, hwp_deg: f64) -> Self {
        Self { qwp_deg, hwp_deg }
    }
}

fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(C64::from(c), C64::from(-s), C64::from(s), C64::from(c))
}

fn retarder(fast_axis_deg: f64, diag: Mat2) -> Mat2 {
    // Angles only matter modulo 180°.
    let theta = fast_axis_deg.rem_euclid(180.0).to_radians();
    rotation(theta) * diag * rotation(-theta)
}

pub fn quarter_wave_plate(fast_axis_deg: f64) -> Mat2 {
    retarder(fast_axis_deg, Mat2::new(ONE, ZERO, ZERO, -I))
}

pub fn half_wave_plate(fast_axis_deg: f64) -> Mat2 {
    retarder(fast_axis_deg, Mat2::new(ONE, ZERO, ZERO, -ONE))
}

/// Jones matrix of the analyzer optics: the QWP acts first, then the HWP.
pub fn waveplate_unitary(setting: WaveplateSetting) -> Mat2 {
    half_wave_plate(setting.hwp_deg) * quarter_wave_plate(setting.qwp_deg)
}

/// The state an H-transmitting PBS selects after `setting`: `U†|H⟩`.
pub fn analyzer_state(setting: WaveplateSetting) -> PolarizationState {
    PolarizationState::h().transformed(&waveplate_unitary(setting).adjoint())
}

/// Born probability `⟨axis|ρ|axis⟩`.
pub fn project(rho: &DensityMatrix, axis: &PolarizationState) -> f64 {
    let k = axis.ket();
    (k.adjoint() * rho.matrix() * k)[(0, 0)].re
}

/// `F = ⟨ψ_T|ρ|ψ_T⟩`.
pub fn fidelity(rho: &DensityMatrix, target: &PolarizationState) -> f64 {
    project(rho, target)
}

pub fn stokes_to_rho(s: StokesVector) -> DensityMatrix {
    let m = (Mat2::identity()
        + pauli_x() * C64::from(s.x)
        + pauli_y() * C64::from(s.y)
        + pauli_z() * C64::from(s.z))
        * C64::from(0.5);
    DensityMatrix(m)
}

pub fn rho_to_stokes(rho: &DensityMatrix) -> StokesVector {
    let m = rho.matrix();
    StokesVector {
        x: (m * pauli_x()).trace().re,
        y: (m * pauli_y()).trace().re,
        z: (m * pauli_z()).trace().re,
    }
}
