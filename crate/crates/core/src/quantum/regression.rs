//! Two-time correlators ⟨A(t) B(t+τ)⟩ = Tr[B e^{Lτ}(χ(t))] by the quantum
//! regression theorem, on the uniform grid of a [`GridEvolution`].

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::evolution::{integrate_blocks, Generator, GridEvolution};
use super::ode::OdeOptions;
use super::{Mat, C, ZERO};

/// One correlator: χ(t, 0) = `prepare(ρ(t))`, traced against `observe`.
pub struct Correlator {
    pub prepare: Box<dyn Fn(&Mat) -> Mat + Sync + Send>,
    pub observe: Mat,
}

impl Correlator {
    /// ⟨A(t) B(t+τ)⟩ with χ = ρA.
    pub fn first_order(a: Mat, b: Mat) -> Self {
        Self {
            prepare: Box::new(move |rho| rho * &a),
            observe: b,
        }
    }

    /// ⟨A†(t) B(t+τ) A(t)⟩ with χ = AρA†.
    pub fn sandwich(a: Mat, b: Mat) -> Self {
        let ad = a.adjoint();
        Self {
            prepare: Box::new(move |rho| &a * rho * &ad),
            observe: b,
        }
    }
}

/// Adjoint vectors r_m = (Pᵀ)^m vec(Bᵀ), so Tr[B P^m χ] = r_m · vec χ.
struct AdjointChain {
    d2: usize,
    data: Vec<C>,
}

impl AdjointChain {
    fn new(p: &DMatrix<C>, b: &Mat, len: usize) -> Self {
        let d2 = p.nrows();
        let pt = p.transpose();
        let mut r = nalgebra::DVector::from_column_slice(b.transpose().as_slice());
        let mut data = Vec::with_capacity(d2 * len);
        for _ in 0..len {
            data.extend_from_slice(r.as_slice());
            r = &pt * r;
        }
        Self { d2, data }
    }

    fn dot(&self, m: usize, v: &[C]) -> C {
        let r = &self.data[m * self.d2..(m + 1) * self.d2];
        let mut s = ZERO;
        for (a, b) in r.iter().zip(v) {
            s += a * b;
        }
        s
    }
}

/// For each `i < n_t`, compute every correlator at τ_j = j·h for
/// `j < n_tau` and hand the rows to `reduce(i, rows)`. Rows are processed in
/// parallel; results come back in index order.
pub fn regression_rows<R, F>(
    gen: &dyn Generator,
    evo: &GridEvolution,
    n_t: usize,
    n_tau: usize,
    correlators: &[Correlator],
    opts: &OdeOptions,
    reduce: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &[Vec<C>]) -> R + Sync,
{
    if evo.len() < n_t {
        return Err(Error::MissingSnapshot(evo.time(n_t.saturating_sub(1))));
    }
    if gen.dim() != evo.dim() {
        return Err(Error::DimensionMismatch {
            expected: evo.dim(),
            got: gen.dim(),
        });
    }
    let d = evo.dim();
    let dd = d * d;
    let s = evo.switch_index;
    let chains: Vec<AdjointChain> = correlators
        .iter()
        .map(|c| AdjointChain::new(&evo.propagator, &c.observe, n_tau))
        .collect();
    let nc = correlators.len();

    (0..n_t)
        .into_par_iter()
        .map(|i| -> Result<R> {
            let chis: Vec<Mat> = correlators.iter().map(|c| (c.prepare)(&evo.states[i])).collect();
            let mut rows = vec![vec![ZERO; n_tau]; nc];
            let (base, anchor) = if i >= s {
                (i, chis)
            } else {
                // Adaptive propagation up to the switch time, reading values
                // off the dense output at each grid point.
                let y0: Vec<C> = chis.iter().flat_map(|c| c.as_slice().iter().cloned()).collect();
                let outputs: Vec<f64> = (i..=s).map(|k| evo.time(k)).collect();
                let y = integrate_blocks(gen, nc, evo.time(i), &y0, &outputs, opts, |k, _, y| {
                    if k < n_tau && i + k < s {
                        for (c, corr) in correlators.iter().enumerate() {
                            let x = Mat::from_column_slice(d, d, &y[c * dd..(c + 1) * dd]);
                            rows[c][k] = super::trace_product(&corr.observe, &x);
                        }
                    }
                    Ok(())
                })?;
                let anchored = (0..nc)
                    .map(|c| Mat::from_column_slice(d, d, &y[c * dd..(c + 1) * dd]))
                    .collect();
                (s, anchored)
            };
            let j0 = base - i;
            for ((row, chain), a) in rows.iter_mut().zip(&chains).zip(&anchor) {
                let v = a.as_slice();
                for (j, r) in row.iter_mut().enumerate().skip(j0) {
                    *r = chain.dot(j - j0, v);
                }
            }
            Ok(reduce(i, &rows))
        })
        .collect()
}

/// Dense (t, τ) grid of one complex correlator.
#[derive(Debug, Clone)]
pub struct TwoTimeGrid {
    pub h: f64,
    pub n_t: usize,
    pub n_tau: usize,
    /// Row-major: `values[i * n_tau + j]` at (t_i, τ_j).
    pub values: Vec<C>,
}

impl TwoTimeGrid {
    pub fn get(&self, i: usize, j: usize) -> C {
        self.values[i * self.n_tau + j]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ps,tau_ps,re,im")?;
        for i in 0..self.n_t {
            for j in 0..self.n_tau {
                let v = self.get(i, j);
                writeln!(
                    w,
                    "{:.10e},{:.10e},{:.12e},{:.12e}",
                    i as f64 * self.h,
                    j as f64 * self.h,
                    v.re,
                    v.im
                )?;
            }
        }
        Ok(())
    }
}

/// Full grid of one correlator.
pub fn regression_correlator(
    gen: &dyn Generator,
    evo: &GridEvolution,
    n_t: usize,
    n_tau: usize,
    correlator: Correlator,
    opts: &OdeOptions,
) -> Result<TwoTimeGrid> {
    let rows = regression_rows(gen, evo, n_t, n_tau, &[correlator], opts, |_, r| r[0].clone())?;
    Ok(TwoTimeGrid {
        h: evo.h,
        n_t,
        n_tau,
        values: rows.into_iter().flatten().collect(),
    })
}
