//! Time-dependent master-equation propagation.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::ode::{dopri5, OdeOptions};
use super::{expectation, DensityCheck, Mat, C};

/// Linear, possibly time-dependent generator dρ/dt = L(t)ρ. `apply` must be
/// linear in `x` and valid for non-Hermitian inputs so it can drive
/// regression-theorem propagation.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, t: f64, x: &Mat, out: &mut Mat) -> Result<()>;

    /// L(t) is constant for all t at or after this time.
    fn stationary_after(&self) -> f64;
}

/// Minimum eigenvalue below which propagation aborts.
pub const POSITIVITY_ABORT: f64 = -1e-4;

/// Matrix of L(t) acting on column-major vec(ρ), index `i + j·d`.
pub fn superoperator_matrix(gen: &dyn Generator, t: f64) -> Result<DMatrix<C>> {
    let d = gen.dim();
    let big = d * d;
    let mut l = DMatrix::zeros(big, big);
    let mut e = Mat::zeros(d, d);
    let mut out = Mat::zeros(d, d);
    for k in 0..big {
        e[k] = C::new(1.0, 0.0);
        gen.apply(t, &e, &mut out)?;
        l.column_mut(k).copy_from_slice(out.as_slice());
        e[k] = C::new(0.0, 0.0);
    }
    Ok(l)
}

/// Integrate `gen` from `t0` with `y0` (a stack of `d×d` blocks in one slice),
/// reporting at each output time.
pub(crate) fn integrate_blocks<O>(
    gen: &dyn Generator,
    blocks: usize,
    t0: f64,
    y0: &[C],
    outputs: &[f64],
    opts: &OdeOptions,
    on_output: O,
) -> Result<Vec<C>>
where
    O: FnMut(usize, f64, &[C]) -> Result<()>,
{
    let d = gen.dim();
    let dd = d * d;
    if y0.len() != blocks * dd {
        return Err(Error::DimensionMismatch {
            expected: blocks * dd,
            got: y0.len(),
        });
    }
    let mut x = Mat::zeros(d, d);
    let mut out = Mat::zeros(d, d);
    let rhs = |t: f64, y: &[C], dy: &mut [C]| -> Result<()> {
        for b in 0..blocks {
            x.as_mut_slice().copy_from_slice(&y[b * dd..(b + 1) * dd]);
            gen.apply(t, &x, &mut out)?;
            dy[b * dd..(b + 1) * dd].copy_from_slice(out.as_slice());
        }
        Ok(())
    };
    let (y, _) = dopri5(rhs, t0, y0, outputs, opts, on_output)?;
    Ok(y)
}

/// Expectation values of named observables on a time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[k][i]` is Re⟨O_k⟩ at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub states: Option<Vec<Mat>>,
    pub check: DensityCheck,
}

impl Trajectory {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k].as_slice())
    }

    /// CSV with a `t_ps` column followed by one column per observable.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t_ps")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t:.10e}")?;
            for v in &self.values {
                write!(w, ",{:.12e}", v[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_state(t: f64, rho: &Mat) -> Result<DensityCheck> {
    let c = DensityCheck::of(rho);
    if c.min_eigenvalue < POSITIVITY_ABORT || !c.trace_error.is_finite() {
        return Err(Error::Positivity {
            t,
            min_eigenvalue: c.min_eigenvalue,
        });
    }
    Ok(c)
}

/// Adaptive propagation of ρ through `times` (strictly increasing, first
/// entry is the initial time).
pub fn propagate(
    gen: &dyn Generator,
    rho0: &Mat,
    times: &[f64],
    observables: &[(String, Mat)],
    store_states: bool,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be strictly increasing".into()));
    }
    let d = gen.dim();
    let mut values = vec![Vec::with_capacity(times.len()); observables.len()];
    let mut states = store_states.then(Vec::new);
    let mut check = DensityCheck::identity();
    integrate_blocks(gen, 1, times[0], rho0.as_slice(), times, opts, |_, t, y| {
        let rho = Mat::from_column_slice(d, d, y);
        check = check.merge(check_state(t, &rho)?);
        for (k, (_, o)) in observables.iter().enumerate() {
            values[k].push(expectation(o, &rho).re);
        }
        if let Some(s) = states.as_mut() {
            s.push(rho);
        }
        Ok(())
    })?;
    Ok(Trajectory {
        times: times.to_vec(),
        names: observables.iter().map(|(n, _)| n.clone()).collect(),
        values,
        states,
        check,
    })
}

/// ρ(t) on the uniform grid t_i = i·h starting at t = 0. Up to the switch
/// index the states come from adaptive integration; after it the constant
/// one-step propagator exp(L h) is applied.
#[derive(Debug, Clone)]
pub struct GridEvolution {
    pub h: f64,
    pub switch_index: usize,
    pub states: Vec<Mat>,
    /// exp(L h) on column-major vec(ρ), valid from the switch index on.
    pub propagator: DMatrix<C>,
    pub check: DensityCheck,
    dim: usize,
}

impl GridEvolution {
    pub fn new(gen: &dyn Generator, rho0: &Mat, h: f64, opts: &OdeOptions) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("grid spacing must be > 0, got {h}")));
        }
        let d = gen.dim();
        let ts = gen.stationary_after().max(0.0);
        let s = (ts / h - 1e-9).ceil().max(0.0) as usize;
        let outputs: Vec<f64> = (0..=s).map(|i| i as f64 * h).collect();
        let mut states = Vec::with_capacity(s + 1);
        let mut check = DensityCheck::identity();
        integrate_blocks(gen, 1, 0.0, rho0.as_slice(), &outputs, opts, |_, t, y| {
            let rho = Mat::from_column_slice(d, d, y);
            check = check.merge(check_state(t, &rho)?);
            states.push(rho);
            Ok(())
        })?;
        let l = superoperator_matrix(gen, s as f64 * h)? * C::new(h, 0.0);
        let propagator = l.exp();
        Ok(Self {
            h,
            switch_index: s,
            states,
            propagator,
            check,
            dim: d,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    fn push_next(&mut self) -> Result<()> {
        let d = self.dim;
        let last = self.states.last().expect("non-empty evolution");
        let v = &self.propagator * nalgebra::DVector::from_column_slice(last.as_slice());
        let rho = Mat::from_column_slice(d, d, v.as_slice());
        let t = self.time(self.states.len());
        self.check = self.check.merge(check_state(t, &rho)?);
        self.states.push(rho);
        Ok(())
    }

    /// Extend so that `len() >= n`.
    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        while self.states.len() < n {
            self.push_next()?;
        }
        Ok(())
    }

    /// Extend until `done(states)` holds, failing after `max_len` states.
    pub fn extend_until<P>(&mut self, mut done: P, max_len: usize) -> Result<()>
    where
        P: FnMut(&[Mat]) -> bool,
    {
        while !done(&self.states) {
            if self.states.len() >= max_len {
                return Err(Error::NotDecayed(format!(
                    "state has not decayed by t = {:.3} ps",
                    self.time(self.states.len() - 1)
                )));
            }
            self.push_next()?;
        }
        Ok(())
    }

    /// Re⟨O⟩ at every stored time.
    pub fn expectation_series(&self, o: &Mat) -> Vec<f64> {
        self.states.iter().map(|r| expectation(o, r).re).collect()
    }

    pub fn complex_series(&self, o: &Mat) -> Vec<C> {
        self.states.iter().map(|r| expectation(o, r)).collect()
    }

    pub fn to_trajectory(&self, observables: &[(String, Mat)], store_states: bool) -> Trajectory {
        Trajectory {
            times: (0..self.len()).map(|i| self.time(i)).collect(),
            names: observables.iter().map(|(n, _)| n.clone()).collect(),
            values: observables
                .iter()
                .map(|(_, o)| self.expectation_series(o))
                .collect(),
            states: store_states.then(|| self.states.clone()),
            check: self.check,
        }
    }
}
