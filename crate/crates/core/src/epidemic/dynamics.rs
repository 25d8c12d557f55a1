use super::{ControlPair, EpidemicParams, EpidemicState, SeirState, SisState};

fn seir_rhs(x: [f64; 4], c: ControlPair, p: &EpidemicParams) -> [f64; 4] {
    let [s, e, i, r] = x;
    let infection = (1.0 - c.u1) * p.beta * s * i;
    [
        p.tau - infection - p.tau * s,
        infection - (p.tau + p.alpha) * e,
        p.alpha * e - (p.tau + p.gamma) * i - c.u2 * i,
        p.gamma * i - p.tau * r + c.u2 * i,
    ]
}

fn axpy(x: [f64; 4], a: f64, k: [f64; 4]) -> [f64; 4] {
    [x[0] + a * k[0], x[1] + a * k[1], x[2] + a * k[2], x[3] + a * k[3]]
}

/// One classical RK4 step of length `p.dt` with the control held constant.
pub fn seir_step(state: SeirState, ctrl: ControlPair, p: &EpidemicParams) -> SeirState {
    let h = p.dt;
    let x = [state.s, state.e, state.i, state.r];
    let k1 = seir_rhs(x, ctrl, p);
    let k2 = seir_rhs(axpy(x, h / 2.0, k1), ctrl, p);
    let k3 = seir_rhs(axpy(x, h / 2.0, k2), ctrl, p);
    let k4 = seir_rhs(axpy(x, h, k3), ctrl, p);
    let mut next = [0.0; 4];
    for j in 0..4 {
        next[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    let total: f64 = next.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        for v in &mut next {
            *v /= total;
        }
    }
    SeirState::new(next[0], next[1], next[2], next[3])
}

fn sis_drift(state: SisState, ctrl: ControlPair, p: &EpidemicParams) -> f64 {
    (1.0 - ctrl.u1) * p.beta * state.s * state.i - (p.tau + p.gamma) * state.i - ctrl.u2 * state.i
}

fn sis_finish(delta_i: f64, state: SisState) -> SisState {
    // On the simplex dS = -dI exactly, so S is carried as 1 - I; this also
    // absorbs the clamp.
    let i = (state.i + delta_i).clamp(0.0, 1.0);
    SisState { s: 1.0 - i, i }
}

/// Euler step of the noise-free SIS model.
pub fn sis_deterministic_step(state: SisState, ctrl: ControlPair, p: &EpidemicParams) -> SisState {
    let delta_i = sis_drift(state, ctrl, p) * p.dt;
    sis_finish(delta_i, state)
}

/// Euler–Maruyama step of the stochastic SIS model with Brownian increment
/// `db ~ N(0, dt)`.
pub fn sis_step(state: SisState, ctrl: ControlPair, p: &EpidemicParams, db: f64) -> SisState {
    let delta_i = sis_drift(state, ctrl, p) * p.dt + p.sigma * state.s * state.i * db;
    sis_finish(delta_i, state)
}

/// Advances either model by one epoch. `db` is ignored for SEIR.
pub fn step(state: EpidemicState, ctrl: ControlPair, p: &EpidemicParams, db: f64) -> EpidemicState {
    match state {
        EpidemicState::Seir(s) => EpidemicState::Seir(seir_step(s, ctrl, p)),
        EpidemicState::Sis(s) => EpidemicState::Sis(sis_step(s, ctrl, p, db)),
    }
}
