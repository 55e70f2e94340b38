use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("min over the boundary of (theta_dot - chi) is {0}, but the scheme requires it positive")]
    NonPositiveChi0(f64),
    #[error("coarse mesh needs at least 3 boundary vertices, got {0}")]
    InvalidCoarseMesh(usize),
    #[error("element {element}: map distortion c_K = {ck:.6} is not below 1")]
    CKViolation { element: usize, ck: f64 },
    #[error("element {element}: Jacobian determinant {det:.6e} is not positive")]
    SingularJacobian { element: usize, det: f64 },
    #[error("unsupported quadrature degree/size {0}")]
    UnsupportedDegree(usize),
    #[error("epsilon_tilde = {et} is inadmissible for epsilon = {eps}: sqrt(1-et) + (1-eps)/sqrt(1-et) must stay below 2")]
    BadEpsilonTilde { eps: f64, et: f64 },
    #[error("linear system could not be solved: {0}")]
    SingularSystem(String),
    #[error("this problem carries no exact solution, so error norms are unavailable")]
    MissingExactSolution,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
