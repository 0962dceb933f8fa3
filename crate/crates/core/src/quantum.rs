//! Complex linear algebra over one- and two-qubit Hilbert spaces.
//!
//! Conventions used throughout the crate:
//!
//! * two-qubit kets are flattened as `|q1 q2⟩` with `q1` the most significant
//!   bit, so `|HV⟩` is basis index 1 and `|VH⟩` is index 2;
//! * Choi matrices act on `input ⊗ output` with the input space first, i.e.
//!   row index `4 * input + output`, and are built from the unnormalized
//!   `|Φ⁺⟩ = Σ_jk |jk⟩|jk⟩` (norm² = 4).

use std::fmt;
use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Square complex matrix of dimension 2, 4 or 16.
pub type Operator = DMatrix<Complex64>;

/// Dimension of the two-qubit Hilbert space.
pub const QUBIT_PAIR_DIM: usize = 4;
/// Dimension of the Choi space `input ⊗ output`.
pub const CHOI_DIM: usize = 16;
/// Deviation from Hermiticity that is silently symmetrized away.
pub const HERMITIAN_REPAIR_TOL: f64 = 1e-9;
/// Eigenvalue slack used by positivity checks.
pub const PSD_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Six polarization probe states forming three mutually unbiased bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Probe {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Probe {
    pub const ALL: [Probe; 6] = [Probe::H, Probe::V, Probe::D, Probe::A, Probe::R, Probe::L];

    /// Probe from the 1-based index `1..=6` (H, V, D, A, R, L).
    pub fn from_number(j: usize) -> Result<Self> {
        match j {
            1..=6 => Ok(Self::ALL[j - 1]),
            _ => Err(invalid(format!("probe index {j} outside 1..=6"))),
        }
    }

    /// Zero-based position in [`Probe::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> char {
        match self {
            Probe::H => 'H',
            Probe::V => 'V',
            Probe::D => 'D',
            Probe::A => 'A',
            Probe::R => 'R',
            Probe::L => 'L',
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label.trim() {
            "H" => Ok(Probe::H),
            "V" => Ok(Probe::V),
            "D" => Ok(Probe::D),
            "A" => Ok(Probe::A),
            "R" => Ok(Probe::R),
            "L" => Ok(Probe::L),
            other => Err(Error::Parse(format!("unknown probe label {other:?}"))),
        }
    }

    /// Measurement basis the probe belongs to: 0 = H/V, 1 = D/A, 2 = R/L.
    pub fn basis(self) -> usize {
        self.index() / 2
    }

    pub fn ket(self) -> Ket {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = match self {
            Probe::H => (ONE, ZERO),
            Probe::V => (ZERO, ONE),
            Probe::D => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Probe::A => (Complex64::new(s, 0.0), Complex64::new(-s, 0.0)),
            Probe::R => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
            Probe::L => (Complex64::new(s, 0.0), Complex64::new(0.0, -s)),
        };
        Ket(DVector::from_vec(vec![a, b]))
    }

    pub fn projector(self) -> Operator {
        self.ket().projector()
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Single-qubit probe ket for the 1-based index `j` (H, V, D, A, R, L).
pub fn probe_state(j: usize) -> Result<Ket> {
    Ok(Probe::from_number(j)?.ket())
}

/// Product probe `|ψ_j⟩|ψ_k⟩` on two qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProbePair(pub Probe, pub Probe);

impl ProbePair {
    /// Enumerates all 36 pairs, first qubit slowest.
    pub fn all() -> impl Iterator<Item = ProbePair> {
        Probe::ALL
            .into_iter()
            .flat_map(|a| Probe::ALL.into_iter().map(move |b| ProbePair(a, b)))
    }

    /// Position `6 j + k` in the 36-element enumeration.
    pub fn index(self) -> usize {
        6 * self.0.index() + self.1.index()
    }

    pub fn from_index(i: usize) -> Self {
        ProbePair(Probe::ALL[i / 6], Probe::ALL[i % 6])
    }

    pub fn ket(self) -> Ket {
        self.0.ket().tensor(&self.1.ket())
    }

    pub fn projector(self) -> Operator {
        self.ket().projector()
    }
}

impl fmt::Display for ProbePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0, self.1)
    }
}

/// State vector in dimension 2 or 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket(pub DVector<Complex64>);

impl Ket {
    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Ket) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket(self.0.kronecker(&other.0))
    }

    pub fn projector(&self) -> Operator {
        &self.0 * self.0.adjoint()
    }

    pub fn conj(&self) -> Ket {
        Ket(self.0.map(|c| c.conj()))
    }
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

pub fn trace_re(m: &Operator) -> f64 {
    m.diagonal().iter().map(|c| c.re).sum()
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermitian_deviation(m: &Operator) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Returns `(m + m†)/2`.
pub fn hermitian_part(m: &Operator) -> Operator {
    (m + m.adjoint()).scale(0.5)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &Operator) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// All eigenvalues of a Hermitian matrix, ascending.
pub fn eigenvalues(m: &Operator) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Number of eigenvalues above `tol`.
pub fn numerical_rank(m: &Operator, tol: f64) -> usize {
    eigenvalues(m).into_iter().filter(|&e| e > tol).count()
}

/// Positive semidefinite Choi matrix of a (possibly trace-decreasing)
/// two-qubit operation, ordered `input ⊗ output`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix(Operator);

impl ChoiMatrix {
    /// Validates shape, Hermiticity and positivity. Deviations from
    /// Hermiticity below 1e-9 are symmetrized away.
    pub fn new(m: Operator) -> Result<Self> {
        Self::validate(m).map_err(Error::InvalidArgument)
    }

    /// Same checks as [`ChoiMatrix::new`], but a failure indicates that
    /// internal arithmetic went wrong.
    pub(crate) fn from_computed(m: Operator) -> Result<Self> {
        Self::validate(m).map_err(Error::Numerical)
    }

    fn validate(m: Operator) -> std::result::Result<Self, String> {
        if m.nrows() != CHOI_DIM || m.ncols() != CHOI_DIM {
            return Err(format!("Choi matrix must be 16x16, got {}x{}", m.nrows(), m.ncols()));
        }
        if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err("Choi matrix has non-finite entries".into());
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_REPAIR_TOL {
            return Err(format!("Choi matrix is not Hermitian (deviation {dev:.3e})"));
        }
        let m = hermitian_part(&m);
        let scale = trace_re(&m).abs().max(1.0);
        let min_ev = min_eigenvalue(&m);
        if min_ev < -PSD_TOL * scale {
            return Err(format!(
                "Choi matrix is not positive semidefinite (min eigenvalue {min_ev:.3e})"
            ));
        }
        Ok(ChoiMatrix(m))
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid(format!("scale factor {s} must be finite and nonnegative")));
        }
        Ok(ChoiMatrix(self.0.scale(s)))
    }

    /// Rescales so that `Tr[χ] = target`.
    pub fn with_trace(&self, target: f64) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::DegenerateData("Choi matrix has zero trace".into()));
        }
        self.scaled(target / tr)
    }

    /// Convex mixture `(1-w) self + w other`.
    pub fn mix(&self, other: &ChoiMatrix, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(invalid(format!("mixing weight {w} outside [0, 1]")));
        }
        Ok(ChoiMatrix(self.0.scale(1.0 - w) + other.0.scale(w)))
    }

    /// Partial trace over the output space, `X = Tr_out[χ]` (4×4).
    pub fn trace_output(&self) -> Operator {
        let mut x = Operator::zeros(QUBIT_PAIR_DIM, QUBIT_PAIR_DIM);
        for a in 0..QUBIT_PAIR_DIM {
            for b in 0..QUBIT_PAIR_DIM {
                x[(a, b)] = (0..QUBIT_PAIR_DIM).map(|o| self.0[(4 * a + o, 4 * b + o)]).sum();
            }
        }
        x
    }

    /// The maximally mixed operator `I/16` scaled to `Tr = trace`.
    pub fn maximally_mixed(trace: f64) -> Self {
        ChoiMatrix(identity(CHOI_DIM).scale(trace / CHOI_DIM as f64))
    }
}

/// The CZ unitary `diag(1, 1, 1, -1)`.
pub fn cz_unitary() -> Operator {
    let mut u = identity(QUBIT_PAIR_DIM);
    u[(3, 3)] = -ONE;
    u
}

/// The unnormalized maximally entangled vector `|Φ⁺⟩ = Σ_jk |jk⟩|jk⟩`.
pub fn phi_plus() -> DVector<Complex64> {
    let mut v = DVector::zeros(CHOI_DIM);
    for i in 0..QUBIT_PAIR_DIM {
        v[4 * i + i] = ONE;
    }
    v
}

/// Choi matrix `(I ⊗ U)|Φ⁺⟩⟨Φ⁺|(I ⊗ U†)` of a two-qubit unitary.
pub fn unitary_choi(u: &Operator) -> Result<ChoiMatrix> {
    if u.nrows() != QUBIT_PAIR_DIM || u.ncols() != QUBIT_PAIR_DIM {
        return Err(invalid("unitary must be 4x4"));
    }
    let lifted = identity(QUBIT_PAIR_DIM).kronecker(u);
    let v = lifted * phi_plus();
    ChoiMatrix::from_computed(&v * v.adjoint())
}

/// Choi matrix of the ideal CZ gate (rank 1, trace 4).
pub fn cz_choi() -> ChoiMatrix {
    static CZ: LazyLock<ChoiMatrix> = LazyLock::new(|| unitary_choi(&cz_unitary()).expect("CZ Choi matrix is valid"));
    CZ.clone()
}

/// Choi matrix of the identity channel, `|Φ⁺⟩⟨Φ⁺|`.
pub fn identity_choi() -> ChoiMatrix {
    unitary_choi(&identity(QUBIT_PAIR_DIM)).expect("identity Choi matrix is valid")
}

fn check_density_matrix(rho: &Operator) -> Result<Operator> {
    if rho.nrows() != QUBIT_PAIR_DIM || rho.ncols() != QUBIT_PAIR_DIM {
        return Err(invalid("input state must be a 4x4 density matrix"));
    }
    let dev = hermitian_deviation(rho);
    if dev > HERMITIAN_REPAIR_TOL {
        return Err(invalid(format!("input state is not Hermitian (deviation {dev:.3e})")));
    }
    let rho = hermitian_part(rho);
    let min_ev = min_eigenvalue(&rho);
    if min_ev < -PSD_TOL {
        return Err(invalid(format!(
            "input state is not positive semidefinite (min eigenvalue {min_ev:.3e})"
        )));
    }
    let tr = trace_re(&rho);
    if (tr - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("input state has trace {tr}, expected 1")));
    }
    Ok(rho)
}

/// Applies the operation to `ρ_in`: `ρ_out = Tr_in[(ρ_inᵀ ⊗ I) χ]`.
///
/// The output is unnormalized; its trace is the success probability, which
/// is returned alongside it.
pub fn apply_channel(chi: &ChoiMatrix, rho_in: &Operator) -> Result<(Operator, f64)> {
    let rho = check_density_matrix(rho_in)?;
    let chi = chi.matrix();
    let mut out = Operator::zeros(QUBIT_PAIR_DIM, QUBIT_PAIR_DIM);
    for o in 0..QUBIT_PAIR_DIM {
        for o2 in 0..QUBIT_PAIR_DIM {
            let mut acc = ZERO;
            for c in 0..QUBIT_PAIR_DIM {
                for a in 0..QUBIT_PAIR_DIM {
                    acc += rho[(c, a)] * chi[(4 * c + o, 4 * a + o2)];
                }
            }
            out[(o, o2)] = acc;
        }
    }
    let p = trace_re(&out);
    Ok((out, p))
}

/// Normalized overlap `Tr[χ χ_ref] / (Tr[χ] Tr[χ_ref])`.
pub fn process_fidelity(chi: &ChoiMatrix, chi_ref: &ChoiMatrix) -> Result<f64> {
    let (t, t_ref) = (chi.trace(), chi_ref.trace());
    if t.abs() < f64::MIN_POSITIVE || t_ref.abs() < f64::MIN_POSITIVE {
        return Err(Error::DegenerateData(
            "process fidelity of a zero-trace Choi matrix".into(),
        ));
    }
    Ok(hs_overlap(chi.matrix(), chi_ref.matrix()) / (t * t_ref))
}

/// Real part of `Tr[a b]` for Hermitian `a`, `b`.
pub(crate) fn hs_overlap(a: &Operator, b: &Operator) -> f64 {
    // Tr[a b] = Σ_ij a_ij b_ji
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Pauli matrix index `0..=3` for σ₀ (identity), σ₁ (X), σ₂ (Y), σ₃ (Z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliLabel(u8);

impl PauliLabel {
    pub const ALL: [PauliLabel; 4] = [PauliLabel(0), PauliLabel(1), PauliLabel(2), PauliLabel(3)];

    pub fn new(a: usize) -> Result<Self> {
        if a < 4 {
            Ok(PauliLabel(a as u8))
        } else {
            Err(invalid(format!("Pauli index {a} outside 0..=3")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn matrix(self) -> Operator {
        let i = Complex64::new(0.0, 1.0);
        let entries = match self.0 {
            0 => [ONE, ZERO, ZERO, ONE],
            1 => [ZERO, ONE, ONE, ZERO],
            2 => [ZERO, -i, i, ZERO],
            _ => [ONE, ZERO, ZERO, -ONE],
        };
        Operator::from_row_slice(2, 2, &entries)
    }
}

/// `σ_a ⊗ σ_b ⊗ σ_c ⊗ σ_d` on the Choi space.
pub fn pauli_product(labels: [PauliLabel; 4]) -> Operator {
    labels
        .iter()
        .skip(1)
        .fold(labels[0].matrix(), |acc, l| acc.kronecker(&l.matrix()))
}

/// Real coefficients `s_abcd` of a Hermitian 16×16 operator in the
/// four-fold Pauli product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTable([f64; 256]);

impl PauliTable {
    fn slot(a: usize, b: usize, c: usize, d: usize) -> usize {
        64 * a + 16 * b + 4 * c + d
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.0[Self::slot(a, b, c, d)]
    }

    pub fn values(&self) -> &[f64; 256] {
        &self.0
    }

    /// Entries whose magnitude exceeds `tol`, as `((a, b, c, d), s)`.
    pub fn nonzero(&self, tol: f64) -> Vec<([usize; 4], f64)> {
        (0..256)
            .filter(|&i| self.0[i].abs() > tol)
            .map(|i| ([i / 64, (i / 16) % 4, (i / 4) % 4, i % 4], self.0[i]))
            .collect()
    }

    /// Resums `Σ s_abcd σ_a⊗σ_b⊗σ_c⊗σ_d`.
    pub fn resum(&self) -> Operator {
        let mut m = Operator::zeros(CHOI_DIM, CHOI_DIM);
        for (i, &s) in self.0.iter().enumerate() {
            if s != 0.0 {
                m += pauli_product(labels_of(i)).scale(s);
            }
        }
        m
    }
}

fn labels_of(i: usize) -> [PauliLabel; 4] {
    [
        PauliLabel::ALL[i / 64],
        PauliLabel::ALL[(i / 16) % 4],
        PauliLabel::ALL[(i / 4) % 4],
        PauliLabel::ALL[i % 4],
    ]
}

/// `s_abcd = Tr[χ σ_a⊗σ_b⊗σ_c⊗σ_d] / 16` for a Hermitian 16×16 operator.
pub fn pauli_coefficients(op: &Operator) -> Result<PauliTable> {
    if op.nrows() != CHOI_DIM || op.ncols() != CHOI_DIM {
        return Err(invalid("Pauli expansion needs a 16x16 operator"));
    }
    let dev = hermitian_deviation(op);
    if dev > HERMITIAN_REPAIR_TOL {
        return Err(invalid(format!("operator is not Hermitian (deviation {dev:.3e})")));
    }
    let mut table = [0.0; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        *slot = hs_overlap(op, &pauli_product(labels_of(i))) / 16.0;
    }
    Ok(PauliTable(table))
}

/// The two mutually unbiased product bases used by the Hofmann bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HofmannBasis {
    /// `{DH, DV, AH, AV}`
    First,
    /// `{HD, VD, HA, VA}`
    Second,
}

impl HofmannBasis {
    pub const BOTH: [HofmannBasis; 2] = [HofmannBasis::First, HofmannBasis::Second];

    pub fn states(self) -> [ProbePair; 4] {
        use Probe::*;
        match self {
            HofmannBasis::First => [ProbePair(D, H), ProbePair(D, V), ProbePair(A, H), ProbePair(A, V)],
            HofmannBasis::Second => [ProbePair(H, D), ProbePair(V, D), ProbePair(H, A), ProbePair(V, A)],
        }
    }

    /// Product probe equal (up to phase) to `U_CZ |ω⟩` for each basis state.
    pub fn ideal_outputs(self) -> [ProbePair; 4] {
        let u = cz_unitary();
        self.states().map(|w| {
            let out = Ket(&u * w.ket().0);
            ProbePair::all()
                .find(|cand| (cand.ket().inner(&out).norm_sqr() - 1.0).abs() < 1e-12)
                .expect("CZ maps Hofmann probes onto product probes")
        })
    }

    /// Position of `probe` in [`HofmannBasis::states`], if it belongs there.
    pub fn position(self, probe: ProbePair) -> Option<usize> {
        self.states().iter().position(|&p| p == probe)
    }

    pub fn containing(probe: ProbePair) -> Option<(HofmannBasis, usize)> {
        Self::BOTH.into_iter().find_map(|b| b.position(probe).map(|j| (b, j)))
    }
}

/// One of the 36×36 preparation/measurement settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Setting {
    pub input: ProbePair,
    pub output: ProbePair,
}

/// Number of settings in a tomographically complete run.
pub const SETTINGS: usize = 36 * 36;

impl Setting {
    /// Flat index `36 * input + output`.
    pub fn index(self) -> usize {
        36 * self.input.index() + self.output.index()
    }

    pub fn from_index(i: usize) -> Self {
        Setting {
            input: ProbePair::from_index(i / 36),
            output: ProbePair::from_index(i % 36),
        }
    }

    /// Vector `w` with `Π = Ψ_inᵀ ⊗ Ψ_out = |w⟩⟨w|`, i.e.
    /// `w = conj(ψ_in) ⊗ ψ_out`.
    pub fn povm_vector(self) -> DVector<Complex64> {
        self.input.ket().conj().tensor(&self.output.ket()).0
    }

    pub fn povm_element(self) -> Operator {
        let w = self.povm_vector();
        &w * w.adjoint()
    }
}

/// `SETTINGS × 16` matrix whose n-th row is `w_n†`, so that
/// `p_n = (W χ W†)_nn`.
pub fn measurement_matrix() -> &'static Operator {
    static W: LazyLock<Operator> = LazyLock::new(|| {
        let mut w = Operator::zeros(SETTINGS, CHOI_DIM);
        for n in 0..SETTINGS {
            let v = Setting::from_index(n).povm_vector();
            for c in 0..CHOI_DIM {
                w[(n, c)] = v[c].conj();
            }
        }
        w
    });
    &W
}
