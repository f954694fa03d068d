//! Finite-horizon tracking MPC over the linearized model
//! `x(t+1) = x(t) + B·u(t)`.
//!
//! Stacking `U = [u(0); …; u(H-1)]`, the prediction is
//! `x(t) = x0 + B·Σ_{j<t} u(j)` and the cost
//! `Σ_{t=1..H} ‖x(t) − s(t)‖²_Q + Σ_{t=0..H-1} ‖u(t)‖²_R` is a quadratic in
//! `U`. Its Hessian has blocks `(H − max(i, j))·BᵀQB + δ_ij·R`, which is
//! positive definite whenever `R` is, so the normal equations are solved by
//! Cholesky.

use nalgebra::{DMatrix, DVector};

use crate::error::ControlError;

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSetup {
    pub horizon: usize,
    /// State weight, symmetric positive semidefinite.
    pub q: DMatrix<f64>,
    /// Input weight, symmetric positive definite.
    pub r: DMatrix<f64>,
}

impl MpcSetup {
    pub fn new(horizon: usize, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, ControlError> {
        if horizon == 0 {
            return Err(ControlError::EmptyHorizon);
        }
        check_weight("Q", &q, false)?;
        check_weight("R", &r, true)?;
        Ok(Self { horizon, q, r })
    }

    /// `Q = q_scale·I`, `R = r_scale·I`.
    pub fn diagonal(horizon: usize, state_dim: usize, input_dim: usize, q_scale: f64, r_scale: f64) -> Result<Self, ControlError> {
        Self::new(
            horizon,
            DMatrix::identity(state_dim, state_dim) * q_scale,
            DMatrix::identity(input_dim, input_dim) * r_scale,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }
}

fn check_weight(name: &'static str, m: &DMatrix<f64>, strict: bool) -> Result<(), ControlError> {
    let requirement = if strict { "symmetric positive definite" } else { "symmetric positive semidefinite" };
    let fail = || ControlError::InvalidWeight { name, requirement };
    if !m.is_square() || m.nrows() == 0 {
        return Err(fail());
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(fail());
    }
    let min_eig = m.clone().symmetric_eigenvalues().min();
    let ok = if strict { min_eig > 1e-12 * scale } else { min_eig >= -1e-12 * scale };
    if ok {
        Ok(())
    } else {
        Err(fail())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution {
    /// `u(0) … u(H-1)`.
    pub inputs: Vec<DVector<f64>>,
    /// Predicted `x(1) … x(H)`.
    pub states: Vec<DVector<f64>>,
    /// Optimal predicted cost.
    pub cost: f64,
}

impl MpcSolution {
    pub fn first_input(&self) -> &DVector<f64> {
        &self.inputs[0]
    }
}

fn check_dims(x0: &DVector<f64>, b: &DMatrix<f64>, nominal: &[DVector<f64>], setup: &MpcSetup) -> Result<(), ControlError> {
    let n = setup.state_dim();
    let m = setup.input_dim();
    if x0.len() != n || b.nrows() != n || b.ncols() != m {
        return Err(ControlError::DimensionMismatch(format!(
            "x0 has {}, B is {}x{}, weights expect {n} states and {m} inputs",
            x0.len(),
            b.nrows(),
            b.ncols()
        )));
    }
    if nominal.len() != setup.horizon {
        return Err(ControlError::DimensionMismatch(format!(
            "nominal has {} samples for horizon {}",
            nominal.len(),
            setup.horizon
        )));
    }
    if let Some(s) = nominal.iter().find(|s| s.len() != n) {
        return Err(ControlError::DimensionMismatch(format!("nominal sample has {} entries, expected {n}", s.len())));
    }
    Ok(())
}

/// Predicted cost of an input sequence; `nominal[t-1]` is the reference for `x(t)`.
pub fn mpc_objective(
    x0: &DVector<f64>,
    b: &DMatrix<f64>,
    nominal: &[DVector<f64>],
    setup: &MpcSetup,
    inputs: &[DVector<f64>],
) -> Result<f64, ControlError> {
    check_dims(x0, b, nominal, setup)?;
    if inputs.len() != setup.horizon || inputs.iter().any(|u| u.len() != setup.input_dim()) {
        return Err(ControlError::DimensionMismatch("input sequence does not match horizon".into()));
    }
    let mut x = x0.clone();
    let mut cost = 0.0;
    for (u, s) in inputs.iter().zip(nominal) {
        cost += u.dot(&(&setup.r * u));
        x += b * u;
        let e = &x - s;
        cost += e.dot(&(&setup.q * &e));
    }
    Ok(cost)
}

pub fn solve_mpc(
    x0: &DVector<f64>,
    b: &DMatrix<f64>,
    nominal: &[DVector<f64>],
    setup: &MpcSetup,
) -> Result<MpcSolution, ControlError> {
    check_dims(x0, b, nominal, setup)?;
    let h = setup.horizon;
    let m = setup.input_dim();

    let qb = &setup.q * b;
    let btqb = b.transpose() * &qb;
    let mut hess = DMatrix::<f64>::zeros(h * m, h * m);
    for i in 0..h {
        for j in 0..h {
            let mut block = &btqb * (h - i.max(j)) as f64;
            if i == j {
                block += &setup.r;
            }
            hess.view_mut((i * m, j * m), (m, m)).copy_from(&block);
        }
    }

    // Gradient block j is Bᵀ Q Σ_{t>j} (x0 − s(t)).
    let mut rhs = DVector::<f64>::zeros(h * m);
    let mut tail = DVector::<f64>::zeros(x0.len());
    for j in (0..h).rev() {
        tail += x0 - &nominal[j];
        let g = qb.transpose() * &tail;
        rhs.rows_mut(j * m, m).copy_from(&(-g));
    }

    let chol = hess
        .cholesky()
        .ok_or(ControlError::InvalidWeight { name: "R", requirement: "symmetric positive definite" })?;
    let u = chol.solve(&rhs);

    let inputs: Vec<DVector<f64>> = (0..h).map(|t| u.rows(t * m, m).into_owned()).collect();
    let mut states = Vec::with_capacity(h);
    let mut x = x0.clone();
    let mut cost = 0.0;
    for (ut, s) in inputs.iter().zip(nominal) {
        cost += ut.dot(&(&setup.r * ut));
        x += b * ut;
        let e = &x - s;
        cost += e.dot(&(&setup.q * &e));
        states.push(x.clone());
    }
    Ok(MpcSolution { inputs, states, cost })
}
