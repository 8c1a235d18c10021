//! Finite-dimensional polarization-state algebra.
//!
//! Single-photon polarization states are 2×2 density matrices in the
//! {∣H⟩, ∣V⟩} basis; photon pairs are 4×4 density matrices in the
//! {∣HH⟩, ∣HV⟩, ∣VH⟩, ∣VV⟩} basis, with arm 1 as the left tensor factor.
//! Angles are given in degrees at every public boundary.
//!
//! Stokes parameters follow S₁ = Tr[ρ(∣H⟩⟨H∣ − ∣V⟩⟨V∣)],
//! S₂ = Tr[ρ(∣45⟩⟨45∣ − ∣135⟩⟨135∣)], S₃ = Tr[ρ(∣R⟩⟨R∣ − ∣L⟩⟨L∣)], so a
//! V-heavy state has negative S₁.

use std::fmt;
use nalgebra::{ Matrix2, Matrix4 };
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Per-element tolerance for the density-matrix invariants.
pub const STATE_TOL: f64 = 1e-12;

/// Tolerance on the completeness relation of a channel.
pub const CHANNEL_TOL: f64 = 1e-10;

/// Projection probabilities below this are treated as impossible outcomes.
pub const MIN_PROBABILITY: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("impossible outcome: projection probability {0:e}")]
    ImpossibleOutcome(f64),

    #[error("channel operators violate completeness (deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("{name} must lie in [0, 1], got {value}")]
    FractionOutOfRange { name: &'static str, value: f64 },

    #[error("invalid Stokes vector: {0}")]
    BadStokes(String),

    #[error("unknown source kind '{0}'")]
    UnknownSource(String),
}

pub type StateResult<T> = Result<T, StateError>;

pub(crate) fn check_fraction(name: &'static str, value: f64) -> StateResult<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(StateError::FractionOutOfRange { name, value })
    }
}

fn c(re: f64) -> C64 { C64::new(re, 0.0) }

/// Real-valued 2-vector for linear polarization at `angle_deg` from
/// horizontal.
fn linear_ket(angle_deg: f64) -> [f64; 2] {
    let t = angle_deg.to_radians();
    [t.cos(), t.sin()]
}

/// Closed-form eigenvalues of a 2×2 Hermitian matrix, ascending.
fn hermitian_eigenvalues2(m: &Matrix2<C64>) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
    [mean - half_gap, mean + half_gap]
}

fn hermitian_deviation<const N: usize>(
    m: &nalgebra::SMatrix<C64, N, N>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        for j in 0..N {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn hermitize<const N: usize>(m: &nalgebra::SMatrix<C64, N, N>)
    -> nalgebra::SMatrix<C64, N, N>
{
    (m + m.adjoint()) * c(0.5)
}

/// A single-photon polarization state.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationDensity(Matrix2<C64>);

impl PolarizationDensity {
    /// Validate and wrap a 2×2 matrix.
    pub fn new(m: Matrix2<C64>) -> StateResult<Self> {
        let herm = hermitian_deviation(&m);
        if herm > STATE_TOL { return Err(StateError::NotHermitian(herm)); }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let [lo, _] = hermitian_eigenvalues2(&m);
        if lo < -STATE_TOL { return Err(StateError::NotPositive(lo)); }
        Ok(Self(hermitize(&m)))
    }

    /// Pure linear polarization at `angle_deg` from horizontal.
    pub fn linear(angle_deg: f64) -> Self {
        let [h, v] = linear_ket(angle_deg);
        Self(Matrix2::new(c(h * h), c(h * v), c(v * h), c(v * v)))
    }

    pub fn horizontal() -> Self { Self::linear(0.0) }

    pub fn vertical() -> Self { Self::linear(90.0) }

    /// The completely unpolarized state, identity/2.
    pub fn maximally_mixed() -> Self { Self(Matrix2::identity() * c(0.5)) }

    /// The idler state after the conditional rotation with trigger
    /// efficiency `eta`: ½[(1 + η)∣V⟩⟨V∣ + (1 − η)∣H⟩⟨H∣].
    pub fn post_transform(eta: f64) -> StateResult<Self> {
        let eta = check_fraction("trigger efficiency", eta)?;
        Ok(Self(Matrix2::new(
            c(0.5 * (1.0 - eta)), C64::default(),
            C64::default(), c(0.5 * (1.0 + eta)),
        )))
    }

    pub fn matrix(&self) -> &Matrix2<C64> { &self.0 }

    /// Eigenvalues in ascending order (closed form).
    pub fn eigenvalues(&self) -> [f64; 2] { hermitian_eigenvalues2(&self.0) }

    /// Tr[ρ·op] for a Hermitian operator, real part.
    pub fn expectation(&self, op: &Matrix2<C64>) -> f64 {
        (self.0 * op).trace().re
    }

    /// Probability that this state passes `proj`, transmittance included.
    pub fn transmission(&self, proj: &Projector) -> f64 {
        self.expectation(&proj.effect()).clamp(0.0, 1.0)
    }

    /// Convex combination `w·self + (1 − w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        Self(self.0 * c(w) + other.0 * c(1.0 - w))
    }

    pub fn purity(&self) -> f64 { (self.0 * self.0).trace().re }
}

impl fmt::Display for PolarizationDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which photon of the pair a measurement acts on.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Arm { One, Two }

/// Two-photon polarization state.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDensity(Matrix4<C64>);

impl JointDensity {
    pub fn new(m: Matrix4<C64>) -> StateResult<Self> {
        let herm = hermitian_deviation(&m);
        if herm > STATE_TOL { return Err(StateError::NotHermitian(herm)); }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let m = hermitize(&m);
        let lo = m.symmetric_eigenvalues().min();
        if lo < -STATE_TOL { return Err(StateError::NotPositive(lo)); }
        Ok(Self(m))
    }

    fn from_ket(ket: [f64; 4]) -> Self {
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = c(ket[i] * ket[j]);
            }
        }
        Self(m)
    }

    pub fn maximally_mixed() -> Self { Self(Matrix4::identity() * c(0.25)) }

    pub fn matrix(&self) -> &Matrix4<C64> { &self.0 }

    /// Tr[(E ⊗ I)ρ] (or Tr[(I ⊗ E)ρ] for arm two) and the unnormalized
    /// reduced state of the other arm.
    fn reduce_with_effect(&self, effect: &Matrix2<C64>, arm: Arm) -> Matrix2<C64> {
        // index = 2·a + b, a = arm one, b = arm two
        let mut out = Matrix2::zeros();
        for r in 0..2 {
            for s in 0..2 {
                let mut acc = C64::default();
                for a in 0..2 {
                    for a2 in 0..2 {
                        let (i, j) = match arm {
                            Arm::One => (2 * a2 + r, 2 * a + s),
                            Arm::Two => (2 * r + a2, 2 * s + a),
                        };
                        acc += effect[(a, a2)] * self.0[(i, j)];
                    }
                }
                out[(r, s)] = acc;
            }
        }
        out
    }

    /// Reduced state of one arm, obtained by tracing out the other.
    pub fn reduced(&self, keep: Arm) -> PolarizationDensity {
        let traced = match keep { Arm::One => Arm::Two, Arm::Two => Arm::One };
        PolarizationDensity(hermitize(&self.reduce_with_effect(&Matrix2::identity(), traced)))
    }

    /// Condition on a measurement effect `effect` (0 ≤ E ≤ I) acting on
    /// `arm`. Returns the outcome probability and the normalized state of
    /// the other arm.
    pub fn condition_on_effect(&self, effect: &Matrix2<C64>, arm: Arm)
        -> StateResult<(f64, PolarizationDensity)>
    {
        let unnorm = self.reduce_with_effect(effect, arm);
        let prob = unnorm.trace().re;
        if prob <= MIN_PROBABILITY {
            return Err(StateError::ImpossibleOutcome(prob));
        }
        Ok((prob, PolarizationDensity(hermitize(&(unnorm / c(prob))))))
    }
}

/// Source states a bench can be configured with.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SourceKind {
    /// (∣HV⟩ + ∣VH⟩)/√2
    PsiPlus,
    /// (∣45,45⟩ − ∣135,135⟩)/√2
    PhiMinus45,
    /// ½(∣HV⟩⟨HV∣ + ∣VH⟩⟨VH∣), the uncompensated type-II output
    MixedHv,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PsiPlus => "psi_plus",
            Self::PhiMinus45 => "phi_minus_45",
            Self::MixedHv => "mixed_hv",
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = StateError;

    fn from_str(s: &str) -> StateResult<Self> {
        match s {
            "psi_plus" => Ok(Self::PsiPlus),
            "phi_minus_45" => Ok(Self::PhiMinus45),
            "mixed_hv" => Ok(Self::MixedHv),
            other => Err(StateError::UnknownSource(other.to_string())),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Build a source state, mixed with white noise when
/// `state_visibility < 1`: v·ρ_ideal + (1 − v)·I/4.
pub fn make_state(kind: SourceKind, state_visibility: f64) -> StateResult<JointDensity> {
    let v = check_fraction("state visibility", state_visibility)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ideal = match kind {
        SourceKind::PsiPlus => JointDensity::from_ket([0.0, s, s, 0.0]),
        SourceKind::PhiMinus45 => {
            let [h45, v45] = linear_ket(45.0);
            let [h135, v135] = linear_ket(135.0);
            let ket = [
                s * (h45 * h45 - h135 * h135),
                s * (h45 * v45 - h135 * v135),
                s * (v45 * h45 - v135 * h135),
                s * (v45 * v45 - v135 * v135),
            ];
            JointDensity::from_ket(ket)
        },
        SourceKind::MixedHv => {
            let mut m = Matrix4::zeros();
            m[(1, 1)] = c(0.5);
            m[(2, 2)] = c(0.5);
            JointDensity(m)
        },
    };
    Ok(JointDensity(ideal.0 * c(v) + JointDensity::maximally_mixed().0 * c(1.0 - v)))
}

/// A linear polarizer at `angle_deg` from horizontal, passing the aligned
/// polarization with probability `transmittance`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Projector {
    pub angle_deg: f64,
    pub transmittance: f64,
}

impl Projector {
    pub fn new(angle_deg: f64, transmittance: f64) -> StateResult<Self> {
        check_fraction("projector transmittance", transmittance)?;
        Ok(Self { angle_deg, transmittance })
    }

    /// Lossless polarizer.
    pub fn ideal(angle_deg: f64) -> Self {
        Self { angle_deg, transmittance: 1.0 }
    }

    /// ε·∣θ⟩⟨θ∣
    pub fn effect(&self) -> Matrix2<C64> {
        PolarizationDensity::linear(self.angle_deg).0 * c(self.transmittance)
    }

    /// I − ε·∣θ⟩⟨θ∣, the "did not pass" outcome.
    pub fn complement_effect(&self) -> Matrix2<C64> {
        Matrix2::identity() - self.effect()
    }
}

/// Project `arm` of `joint` on `trigger`; return the probability of the
/// outcome and the conditional state of the other photon.
pub fn conditional_state(joint: &JointDensity, trigger: &Projector, arm: Arm)
    -> StateResult<(f64, PolarizationDensity)>
{
    joint.condition_on_effect(&trigger.effect(), arm)
}

/// A CPTP map on single-photon polarization states, in operator-sum form.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationChannel {
    kraus: Vec<Matrix2<C64>>,
}

impl PolarizationChannel {
    pub fn new(kraus: Vec<Matrix2<C64>>) -> StateResult<Self> {
        let sum: Matrix2<C64> = kraus.iter().map(|k| k.adjoint() * k).sum();
        let dev = (sum - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > CHANNEL_TOL || kraus.is_empty() {
            return Err(StateError::NotTracePreserving(dev));
        }
        Ok(Self { kraus })
    }

    pub fn identity() -> Self { Self { kraus: vec![Matrix2::identity()] } }

    pub fn operators(&self) -> &[Matrix2<C64>] { &self.kraus }

    /// `self` followed by `then`.
    pub fn then(&self, then: &Self) -> Self {
        let kraus = then.kraus.iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        Self { kraus }
    }

    /// Apply `self` with probability `p`, `other` otherwise.
    pub fn mixture(&self, other: &Self, p: f64) -> StateResult<Self> {
        let p = check_fraction("mixture weight", p)?;
        let (sp, sq) = (c(p.sqrt()), c((1.0 - p).sqrt()));
        let kraus = self.kraus.iter().map(|k| k * sp)
            .chain(other.kraus.iter().map(|k| k * sq))
            .collect();
        Ok(Self { kraus })
    }
}

/// Rotation of linear polarization by `angle_deg` (∣H⟩ → cos φ∣H⟩ + sin φ∣V⟩).
pub fn rotator(angle_deg: f64) -> PolarizationChannel {
    let (s, co) = angle_deg.to_radians().sin_cos();
    PolarizationChannel { kraus: vec![Matrix2::new(c(co), c(-s), c(s), c(co))] }
}

/// Isotropic Stokes contraction: (S₁, S₂, S₃) → q·(S₁, S₂, S₃).
pub fn depolarizer(q: f64) -> StateResult<PolarizationChannel> {
    let q = check_fraction("depolarizer contraction", q)?;
    let i = C64::i();
    let paulis = [
        Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0)),
        Matrix2::new(C64::default(), -i, i, C64::default()),
        Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)),
    ];
    let mut kraus = vec![Matrix2::identity() * c(((1.0 + 3.0 * q) / 4.0).sqrt())];
    let w = c(((1.0 - q) / 4.0).sqrt());
    if w.re > 0.0 {
        kraus.extend(paulis.iter().map(|p| p * w));
    }
    Ok(PolarizationChannel { kraus })
}

pub fn apply_channel(rho: &PolarizationDensity, ch: &PolarizationChannel) -> PolarizationDensity {
    let out: Matrix2<C64> = ch.kraus.iter().map(|k| k * rho.0 * k.adjoint()).sum();
    PolarizationDensity(hermitize(&out))
}

/// Stokes parameters (S₀, S₁, S₂, S₃).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> StateResult<Self> {
        if !(s0 >= 0.0) {
            return Err(StateError::BadStokes(format!("negative intensity {s0}")));
        }
        let pol2 = s1 * s1 + s2 * s2 + s3 * s3;
        if pol2.sqrt() > s0 * (1.0 + 1e-9) + 1e-300 {
            return Err(StateError::BadStokes(format!(
                "polarized intensity {} exceeds total {s0}", pol2.sqrt())));
        }
        Ok(Self { s0, s1, s2, s3 })
    }

    pub fn polarized_intensity(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { s0: k * self.s0, s1: k * self.s1, s2: k * self.s2, s3: k * self.s3 }
    }
}

pub fn stokes_from_density(rho: &PolarizationDensity) -> StokesVector {
    let m = &rho.0;
    StokesVector {
        s0: (m[(0, 0)] + m[(1, 1)]).re,
        s1: (m[(0, 0)] - m[(1, 1)]).re,
        s2: 2.0 * m[(0, 1)].re,
        s3: -2.0 * m[(0, 1)].im,
    }
}

/// Normalized density matrix with the polarization of `s`.
pub fn density_from_stokes(s: &StokesVector) -> StateResult<PolarizationDensity> {
    if !(s.s0 > 0.0) {
        return Err(StateError::BadStokes("zero intensity has no density matrix".into()));
    }
    let n = s.scaled(1.0 / s.s0);
    StokesVector::new(n.s0, n.s1, n.s2, n.s3)?;
    PolarizationDensity::new(Matrix2::new(
        c(0.5 * (1.0 + n.s1)), C64::new(0.5 * n.s2, -0.5 * n.s3),
        C64::new(0.5 * n.s2, 0.5 * n.s3), c(0.5 * (1.0 - n.s1)),
    ))
}

/// P = √(S₁² + S₂² + S₃²)/S₀; zero intensity is reported as unpolarized.
pub fn degree_of_polarization(s: &StokesVector) -> f64 {
    if s.s0 <= 0.0 { return 0.0; }
    (s.polarized_intensity() / s.s0).min(1.0)
}

/// von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &PolarizationDensity) -> f64 {
    rho.eigenvalues().iter()
        .map(|&l| if l > 0.0 { -l * l.log2() } else { 0.0 })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_state() -> impl Strategy<Value = PolarizationDensity> {
        (0.0..1.0f64, 0.0..std::f64::consts::PI, 0.0..2.0 * std::f64::consts::PI)
            .prop_map(|(r, theta, phi)| {
                let s = StokesVector {
                    s0: 1.0,
                    s1: r * theta.cos(),
                    s2: r * theta.sin() * phi.cos(),
                    s3: r * theta.sin() * phi.sin(),
                };
                density_from_stokes(&s).unwrap()
            })
    }

    proptest! {
        #[test]
        fn channel_outputs_are_valid(rho in arb_state(), q in 0.0..=1.0f64, phi in -180.0..180.0f64) {
            let ch = rotator(phi).then(&depolarizer(q).unwrap());
            let out = apply_channel(&rho, &ch);
            prop_assert!(PolarizationDensity::new(*out.matrix()).is_ok());
            prop_assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
        }

        #[test]
        fn depolarizer_commutes_with_rotator(rho in arb_state(), q in 0.0..=1.0f64, phi in -180.0..180.0f64) {
            let d = depolarizer(q).unwrap();
            let r = rotator(phi);
            let a = apply_channel(&rho, &r.then(&d));
            let b = apply_channel(&rho, &d.then(&r));
            for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        #[test]
        fn depolarizer_contracts_stokes(rho in arb_state(), q in 0.0..=1.0f64) {
            let before = stokes_from_density(&rho);
            let after = stokes_from_density(&apply_channel(&rho, &depolarizer(q).unwrap()));
            prop_assert!((after.s0 - before.s0).abs() < 1e-12);
            prop_assert!((after.s1 - q * before.s1).abs() < 1e-12);
            prop_assert!((after.s2 - q * before.s2).abs() < 1e-12);
            prop_assert!((after.s3 - q * before.s3).abs() < 1e-12);
        }

        #[test]
        fn stokes_round_trip(rho in arb_state()) {
            let back = density_from_stokes(&stokes_from_density(&rho)).unwrap();
            for (x, y) in rho.matrix().iter().zip(back.matrix().iter()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
