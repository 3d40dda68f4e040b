//! Dense operator algebra on the emitter ⊗ cavity space, master-equation
//! propagation and the quantum-regression engine.

pub mod evolution;
pub mod ode;
pub mod regression;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C = Complex64;
pub type Mat = DMatrix<Complex64>;

pub const ZERO: C = C::new(0.0, 0.0);
pub const ONE: C = C::new(1.0, 0.0);
pub const I: C = C::new(0.0, 1.0);

/// Emitter levels ⊗ truncated cavity Fock space. Basis index is
/// `level * (fock_cutoff + 1) + n`, emitter index major.
///
/// Emitter level order is `g, x` for the two-level model and `g, x, y, xx`
/// for the biexciton cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    pub qd_levels: usize,
    pub fock_cutoff: usize,
}

pub const G: usize = 0;
pub const X: usize = 1;
pub const Y: usize = 2;
pub const XX: usize = 3;

impl HilbertSpace {
    pub fn new(qd_levels: usize, fock_cutoff: usize) -> Result<Self> {
        if qd_levels != 2 && qd_levels != 4 {
            return Err(Error::Domain(format!(
                "qd_levels must be 2 or 4, got {qd_levels}"
            )));
        }
        Ok(Self {
            qd_levels,
            fock_cutoff,
        })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.qd_levels * self.fock_dim()
    }

    pub fn has_cavity(&self) -> bool {
        self.fock_cutoff > 0
    }

    pub fn index(&self, level: usize, n: usize) -> usize {
        debug_assert!(level < self.qd_levels && n <= self.fock_cutoff);
        level * self.fock_dim() + n
    }

    pub fn zeros(&self) -> Mat {
        Mat::zeros(self.dim(), self.dim())
    }

    pub fn identity(&self) -> Mat {
        Mat::identity(self.dim(), self.dim())
    }

    /// |i⟩⟨j| on the emitter, identity on the cavity.
    pub fn transition(&self, i: usize, j: usize) -> Mat {
        kron(&unit(self.qd_levels, i, j), &Mat::identity(self.fock_dim(), self.fock_dim()))
    }

    /// Cavity annihilation operator a.
    pub fn annihilation(&self) -> Mat {
        let nf = self.fock_dim();
        let mut a = Mat::zeros(nf, nf);
        for n in 1..nf {
            a[(n - 1, n)] = C::new((n as f64).sqrt(), 0.0);
        }
        kron(&Mat::identity(self.qd_levels, self.qd_levels), &a)
    }

    pub fn number(&self) -> Mat {
        let a = self.annihilation();
        a.adjoint() * a
    }

    /// σ⁻ = |g⟩⟨x|.
    pub fn sigma_minus(&self) -> Mat {
        self.transition(G, X)
    }

    pub fn sigma_plus(&self) -> Mat {
        self.transition(X, G)
    }

    /// |g, 0⟩⟨g, 0|.
    pub fn ground_state(&self) -> Mat {
        let mut rho = self.zeros();
        rho[(0, 0)] = ONE;
        rho
    }

    /// |level, n⟩⟨level, n|.
    pub fn basis_state(&self, level: usize, n: usize) -> Mat {
        let k = self.index(level, n);
        let mut rho = self.zeros();
        rho[(k, k)] = ONE;
        rho
    }
}

fn unit(d: usize, i: usize, j: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Tensor product A ⊗ B with A's index major.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

/// 𝓛[O]ρ = 2OρO† − O†Oρ − ρO†O.
pub fn lindblad_dissipator(o: &Mat, rho: &Mat) -> Result<Mat> {
    if o.shape() != rho.shape() || o.nrows() != o.ncols() {
        return Err(Error::DimensionMismatch {
            expected: o.nrows(),
            got: rho.nrows(),
        });
    }
    let od = o.adjoint();
    let odo = &od * o;
    Ok(o * rho * &od * C::new(2.0, 0.0) - &odo * rho - rho * &odo)
}

/// Tr(AB) without forming the product.
pub fn trace_product(a: &Mat, b: &Mat) -> C {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// ⟨O⟩ = Tr(Oρ).
pub fn expectation(o: &Mat, rho: &Mat) -> C {
    trace_product(o, rho)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_error(m: &Mat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    let h = (m + m.adjoint()) * C::new(0.5, 0.0);
    // The Hermitian eigensolver breaks down (returns −inf) when entries span
    // hundreds of decades, as in long-decayed high Fock levels. Entries below
    // EIG_FLUSH·max|h| are dropped; by Weyl's inequality this moves each
    // eigenvalue by at most d·EIG_FLUSH·max|h|.
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = EIG_FLUSH * scale;
    let h = h.map(|z| if z.norm() < cut { ZERO } else { z });
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

const EIG_FLUSH: f64 = 1e-60;

/// Violations of the density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCheck {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl DensityCheck {
    pub fn of(rho: &Mat) -> Self {
        Self {
            trace_error: (rho.trace() - ONE).norm(),
            hermiticity_error: hermiticity_error(rho),
            min_eigenvalue: min_eigenvalue(rho),
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            trace_error: self.trace_error.max(other.trace_error),
            hermiticity_error: self.hermiticity_error.max(other.hermiticity_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }

    pub fn identity() -> Self {
        Self {
            trace_error: 0.0,
            hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.trace_error < 1e-8 && self.hermiticity_error < 1e-10 && self.min_eigenvalue > -1e-6
    }
}
