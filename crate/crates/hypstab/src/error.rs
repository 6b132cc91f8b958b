//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Model / symbol assembly
    #[error("Dg is not symmetric: asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    NonSymmetricA0 { asymmetry: f64, tol: f64 },
    #[error("wave-operator coefficient matrix is singular or not positive definite: {0}")]
    SingularA(String),
    #[error("A0 = Dg is singular or not positive definite: {0}")]
    SingularA0(String),
    #[error("model evaluation failed: {0}")]
    Domain(String),
    #[error("eigenvalue iteration failed to converge: {0}")]
    Convergence(String),

    // Dissipativity checks
    #[error("eigenvalue clustering ambiguous: {0}")]
    EigenspaceCluster(String),
    #[error("root-to-branch assignment ambiguous: {0}")]
    BranchMatch(String),

    // Profile
    #[error("no connecting orbit found: {0}")]
    NoConnection(String),
    #[error("B^11 is singular along the profile (|det| = {0:.3e})")]
    SingularB11(f64),
    #[error("Rankine-Hugoniot violated: |f1(u+) - f1(u-)| = {0:.3e}")]
    RhViolation(f64),
    #[error("tail is not log-linear: R^2 = {0:.4} < 0.99")]
    DecayFit(f64),
    #[error("endstate is characteristic: |det A1| = {0:.3e}")]
    CharacteristicEndstate(f64),

    // Evans
    #[error("eigenvalue on imaginary axis at {witness} (|Re| = {margin:.3e}): consistent splitting violated")]
    ImaginaryAxisEigenvalue { witness: String, margin: f64 },
    #[error("consistent splitting failed: {0}")]
    Splitting(String),
    #[error("Evans integration blew up at x = {0}")]
    IntegrationBlowup(f64),
    #[error("continuation path left the resolvent region: {0}")]
    Path(String),
    #[error("Evans function too small on contour at sample {index}: |D| = {value:.3e}")]
    ZeroOnContour { index: usize, value: f64 },
    #[error("winding number did not stabilize to an integer: raw value {0}")]
    NonIntegerWinding(f64),
    #[error("interpolation point x = {0} outside the profile grid")]
    InterpolationOutOfRange(f64),
    #[error("no purely imaginary eigenvalue of the slow-mode symbol at the given frequency")]
    NoImaginaryEigenvalue,

    // Glancing
    #[error("no critical point of the characteristic branch inside the search window {0}")]
    WindowExhausted(String),
    #[error("multiplicity detection ambiguous: {0}")]
    MultiplicityAmbiguous(String),
    #[error("characteristic branch tracking failed: {0}")]
    BranchTracking(String),

    // Simulator
    #[error("CFL number {0:.3} exceeds the stability limit")]
    CflViolation(f64),
    #[error("solution blew up: norm grew by x{factor:.1} at t = {t:.3}")]
    BlowupDetected { t: f64, factor: f64 },
    #[error("default scheme requires a semilinear model with constant coefficients")]
    QuasilinearUnsupported,
    #[error("relaxation form requires a semilinear model")]
    NotSemilinear,
    #[error("relaxation form requires g(u) = u")]
    GNotIdentity,
    #[error("compatibility residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    CompatibilityResidualTooLarge { residual: f64, tol: f64 },
    #[error("zero_psi initialization requires psi = 0 (got |psi| = {0:.3e})")]
    PsiNotZero(f64),
    #[error("fit window too short: {decades:.2} decades in 1+t (need >= 1)")]
    WindowTooShort { decades: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
