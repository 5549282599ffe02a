use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate simulation box")]
    DegenerateBox,
    #[error("quadrupole params undefined for spin-1/2")]
    QuadrupoleOnSpinHalf,
    #[error("well too shallow or box too small ({boundary_mass:.3e} of the density at the grid boundary)")]
    Unbound { boundary_mass: f64 },
    #[error("no spinful nuclei: T2* undefined (infinite)")]
    NoSpinfulNuclei,
    #[error("invalid spin I = {0}/2")]
    InvalidSpin(u32),
    #[error("matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("unsupported sequence: n = {0}")]
    UnsupportedSequence(u32),
    #[error("non-integrable noise model: {0}")]
    NonIntegrable(String),
    #[error("inverted contrast: P0 = {p0} <= P_inf = {p_inf}")]
    InvertedContrast { p0: f64, p_inf: f64 },
    #[error("inversion defined for CPn")]
    InversionRequiresCpn,
    #[error("T2 beyond sweep")]
    T2BeyondSweep,
    #[error("T2 below sweep: decay already past 1/e at the first point")]
    T2BelowSweep,
    #[error("fit did not converge (best grid point: T2* = {t2_star:.4e} s, omega0 = {omega0:.4e} rad/s)")]
    FitDiverged { t2_star: f64, omega0: f64 },
    #[error("{0}")]
    Numerical(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
