//! Nonlinear body-frame quadrotor equations of motion.
//!
//! Body frame: x forward, y right, z down (NED-aligned at identity attitude).
//! Rotor layout: 1 front-left, 2 front-right, 3 aft-right, 4 aft-left.
//! The moment model is a per-axis polynomial in the associated body rate and
//! control moment; forces default to collective thrust plus linear drag.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Physical properties of the vehicle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadParams {
    /// Mass [kg]
    pub mass: f64,
    /// Diagonal of the inertia tensor [kg·m²]
    pub inertia_diag: Vector3<f64>,
    /// Gravity vector in the inertial NED frame [m/s²]
    pub gravity: Vector3<f64>,
    /// Diagonal hub-to-hub diameter [m]
    pub hub_diameter: f64,
    /// Thrust coefficient mapping ω² to thrust per rotor [N·s²/rad²]
    pub thrust_coeff: f64,
}

impl QuadParams {
    pub fn validate(&self, allow_gravity_override: bool) -> Result<(), CoreError> {
        if !(self.mass > 0.0) {
            return Err(CoreError::Config(format!("mass must be > 0, got {}", self.mass)));
        }
        if self.inertia_diag.iter().any(|v| !(*v > 0.0)) {
            return Err(CoreError::Config(format!(
                "inertia diagonal must be > 0, got {:?}",
                self.inertia_diag
            )));
        }
        let g = self.gravity.norm();
        if !allow_gravity_override && !(9.0..=10.5).contains(&g) {
            return Err(CoreError::Config(format!(
                "gravity magnitude {g:.3} m/s² outside [9.0, 10.5]; set allow_gravity_override to force"
            )));
        }
        if !(self.hub_diameter > 0.0) || !(self.thrust_coeff > 0.0) {
            return Err(CoreError::Config(
                "hub_diameter and thrust_coeff must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia_diag)
    }

    pub fn inertia_inv(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            1.0 / self.inertia_diag.x,
            1.0 / self.inertia_diag.y,
            1.0 / self.inertia_diag.z,
        ))
    }

    /// Rotor distance from the x and y body axes (X configuration).
    pub fn rotor_arm(&self) -> f64 {
        self.hub_diameter / 2.0 * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Full rigid-body state.
#[derive(Debug, Clone)]
pub struct BodyState {
    /// Position in the inertial NED frame [m]
    pub position: Vector3<f64>,
    /// Translational velocity in the body frame [m/s]
    pub velocity_body: Vector3<f64>,
    /// Attitude quaternion (body → inertial)
    pub attitude: UnitQuaternion<f64>,
    /// Body rotational rates (p, q, r) [rad/s]
    pub rates: Vector3<f64>,
}

impl Default for BodyState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity_body: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            rates: Vector3::zeros(),
        }
    }
}

impl BodyState {
    /// Roll, pitch, yaw in the ZYX convention [rad].
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        self.attitude.euler_angles()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity_body.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.rates.iter().all(|v| v.is_finite())
    }
}

/// Forces and moments acting on the body, expressed in the body frame.
#[derive(Debug, Clone, Copy)]
pub struct BodyWrench {
    /// Force [N]
    pub force: Vector3<f64>,
    /// Moment [N·m]
    pub moment: Vector3<f64>,
}

/// Spin direction of rotor 1 (rotors 1/3 and 2/4 counter-rotate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum SpinSign {
    Clockwise,
    CounterClockwise,
}

impl SpinSign {
    pub fn sign(self) -> f64 {
        match self {
            SpinSign::Clockwise => 1.0,
            SpinSign::CounterClockwise => -1.0,
        }
    }
}

impl TryFrom<i8> for SpinSign {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(SpinSign::Clockwise),
            -1 => Ok(SpinSign::CounterClockwise),
            other => Err(format!("spin sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<SpinSign> for i8 {
    fn from(s: SpinSign) -> i8 {
        match s {
            SpinSign::Clockwise => 1,
            SpinSign::CounterClockwise => -1,
        }
    }
}

/// Control moments: rotor-speed difference combinations enacting roll, pitch
/// and yaw moments [rad/s].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlMoments {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl ControlMoments {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }
}

/// u_p = (ω1+ω4) − (ω2+ω3); u_q = (ω1+ω2) − (ω3+ω4); u_r = S_r·[(ω1+ω3) − (ω2+ω4)].
pub fn control_moments(speeds: &[f64; 4], spin: SpinSign) -> Result<ControlMoments, CoreError> {
    for (i, w) in speeds.iter().enumerate() {
        if !w.is_finite() {
            return Err(CoreError::InvalidInput(format!(
                "rotor speed {} is not finite: {w}",
                i + 1
            )));
        }
        if *w < 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "rotor speed {} is negative: {w}",
                i + 1
            )));
        }
    }
    let [w1, w2, w3, w4] = *speeds;
    Ok(ControlMoments {
        roll: (w1 + w4) - (w2 + w3),
        pitch: (w1 + w2) - (w3 + w4),
        yaw: spin.sign() * ((w1 + w3) - (w2 + w4)),
    })
}

/// Allocation sign of each rotor on each control axis, per the construction
/// of the control moments above. `axis_signs(axis)[i]` is the sign with which
/// rotor i+1 enters that axis.
pub fn axis_signs(axis: usize, spin: SpinSign) -> [f64; 4] {
    let s = spin.sign();
    match axis {
        0 => [1.0, -1.0, -1.0, 1.0],
        1 => [1.0, 1.0, -1.0, -1.0],
        2 => [s, -s, s, -s],
        _ => panic!("axis out of range"),
    }
}

/// One monomial c · rate^i · u^j of an axis moment model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PolyTerm {
    pub rate_exp: u32,
    pub input_exp: u32,
    pub coeff: f64,
}

/// Polynomial moment model for one axis, in the associated body rate and
/// control moment. Total degree at most 4.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxisPoly {
    pub terms: Vec<PolyTerm>,
}

impl AxisPoly {
    pub fn linear(rate_coeff: f64, input_coeff: f64) -> Self {
        Self {
            terms: vec![
                PolyTerm { rate_exp: 1, input_exp: 0, coeff: rate_coeff },
                PolyTerm { rate_exp: 0, input_exp: 1, coeff: input_coeff },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.terms.is_empty() {
            return Err(CoreError::Config("axis moment model has no terms".into()));
        }
        for t in &self.terms {
            if !t.coeff.is_finite() {
                return Err(CoreError::Config(format!("non-finite coefficient {:?}", t)));
            }
            if t.rate_exp + t.input_exp > 4 {
                return Err(CoreError::Config(format!(
                    "term degree {} exceeds 4: {:?}",
                    t.rate_exp + t.input_exp,
                    t
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, rate: f64, input: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * rate.powi(t.rate_exp as i32) * input.powi(t.input_exp as i32))
            .sum()
    }

    pub fn d_rate(&self, rate: f64, input: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.rate_exp > 0)
            .map(|t| {
                t.coeff
                    * t.rate_exp as f64
                    * rate.powi(t.rate_exp as i32 - 1)
                    * input.powi(t.input_exp as i32)
            })
            .sum()
    }

    pub fn d_input(&self, rate: f64, input: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.input_exp > 0)
            .map(|t| {
                t.coeff
                    * t.input_exp as f64
                    * rate.powi(t.rate_exp as i32)
                    * input.powi(t.input_exp as i32 - 1)
            })
            .sum()
    }
}

/// Per-axis aerodynamic moment models M_x(p, u_p), M_y(q, u_q), M_z(r, u_r).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AeroMomentModel {
    pub roll: AxisPoly,
    pub pitch: AxisPoly,
    pub yaw: AxisPoly,
}

impl AeroMomentModel {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.roll.validate()?;
        self.pitch.validate()?;
        self.yaw.validate()
    }

    fn axes(&self) -> [&AxisPoly; 3] {
        [&self.roll, &self.pitch, &self.yaw]
    }
}

/// Evaluate the per-axis moment polynomials. Axis i depends only on its
/// associated rate and control moment.
pub fn aero_moments(rates: Vector3<f64>, u: &ControlMoments, model: &AeroMomentModel) -> Vector3<f64> {
    let uv = u.as_vector();
    let axes = model.axes();
    Vector3::new(
        axes[0].eval(rates.x, uv.x),
        axes[1].eval(rates.y, uv.y),
        axes[2].eval(rates.z, uv.z),
    )
}

/// Ω̇ = I⁻¹ (M_B − Ω × I Ω)
pub fn rate_derivative(state: &BodyState, moment: Vector3<f64>, params: &QuadParams) -> Vector3<f64> {
    let omega = state.rates;
    let gyro = omega.cross(&(params.inertia() * omega));
    params.inertia_inv() * (moment - gyro)
}

/// V̇_B = R_EB · g + F_B / m − Ω × V_B
pub fn translational_derivative(
    state: &BodyState,
    force: Vector3<f64>,
    params: &QuadParams,
) -> Vector3<f64> {
    let g_body = state.attitude.inverse_transform_vector(&params.gravity);
    g_body + force / params.mass - state.rates.cross(&state.velocity_body)
}

/// Plant models beyond the rigid body: aerodynamic moments, linear drag,
/// rotor spin convention.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleModels {
    pub aero: AeroMomentModel,
    /// Linear body-velocity drag coefficients [N·s/m]
    pub drag_coeff: Vector3<f64>,
    pub spin: SpinSign,
}

/// Total body force and moment for the given rotor speeds.
pub fn body_wrench(
    state: &BodyState,
    speeds: &[f64; 4],
    params: &QuadParams,
    models: &VehicleModels,
) -> Result<BodyWrench, CoreError> {
    let u = control_moments(speeds, models.spin)?;
    let thrust: f64 = speeds.iter().map(|w| params.thrust_coeff * w * w).sum();
    let force = Vector3::new(0.0, 0.0, -thrust) - models.drag_coeff.component_mul(&state.velocity_body);
    let moment = aero_moments(state.rates, &u, &models.aero);
    Ok(BodyWrench { force, moment })
}

/// Analytic Jacobian of the rate dynamics f(Ω, u) = I⁻¹(M(Ω, u) − Ω × I Ω)
/// at the scheduling point (Ω, u). Returns (A, B) with A = ∂f/∂Ω and
/// B = ∂f/∂u; B is diagonal because each axis moment depends only on its own
/// control moment.
pub fn rate_jacobian(
    rates: Vector3<f64>,
    u: &ControlMoments,
    params: &QuadParams,
    model: &AeroMomentModel,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let (ixx, iyy, izz) = (params.inertia_diag.x, params.inertia_diag.y, params.inertia_diag.z);
    let (p, q, r) = (rates.x, rates.y, rates.z);
    let uv = u.as_vector();
    let axes = model.axes();

    // ∂(Ω × IΩ)/∂Ω for diagonal I
    let gyro_jac = Matrix3::new(
        0.0,
        r * (izz - iyy),
        q * (izz - iyy),
        r * (ixx - izz),
        0.0,
        p * (ixx - izz),
        q * (iyy - ixx),
        p * (iyy - ixx),
        0.0,
    );
    let moment_rate_jac = Matrix3::from_diagonal(&Vector3::new(
        axes[0].d_rate(p, uv.x),
        axes[1].d_rate(q, uv.y),
        axes[2].d_rate(r, uv.z),
    ));
    let inv = params.inertia_inv();
    let a = inv * (moment_rate_jac - gyro_jac);
    let b = inv
        * Matrix3::from_diagonal(&Vector3::new(
            axes[0].d_input(p, uv.x),
            axes[1].d_input(q, uv.y),
            axes[2].d_input(r, uv.z),
        ));
    (a, b)
}

const STATE_DIM: usize = 13;

fn pack(state: &BodyState) -> [f64; STATE_DIM] {
    let q = state.attitude.as_ref();
    [
        state.position.x,
        state.position.y,
        state.position.z,
        state.velocity_body.x,
        state.velocity_body.y,
        state.velocity_body.z,
        q.w,
        q.i,
        q.j,
        q.k,
        state.rates.x,
        state.rates.y,
        state.rates.z,
    ]
}

fn unpack(x: &[f64; STATE_DIM]) -> BodyState {
    BodyState {
        position: Vector3::new(x[0], x[1], x[2]),
        velocity_body: Vector3::new(x[3], x[4], x[5]),
        attitude: UnitQuaternion::new_normalize(Quaternion::new(x[6], x[7], x[8], x[9])),
        rates: Vector3::new(x[10], x[11], x[12]),
    }
}

fn derivative(
    x: &[f64; STATE_DIM],
    speeds: &[f64; 4],
    params: &QuadParams,
    models: &VehicleModels,
    external_moment: Vector3<f64>,
) -> Result<[f64; STATE_DIM], CoreError> {
    let state = unpack(x);
    let wrench = body_wrench(&state, speeds, params, models)?;
    let v_dot = translational_derivative(&state, wrench.force, params);
    let w_dot = rate_derivative(&state, wrench.moment + external_moment, params);
    let pos_dot = state.attitude.transform_vector(&state.velocity_body);
    // q̇ = ½ q ⊗ (0, Ω), on the raw (unnormalized) quaternion components
    let q = Quaternion::new(x[6], x[7], x[8], x[9]);
    let omega_q = Quaternion::new(0.0, state.rates.x, state.rates.y, state.rates.z);
    let q_dot = q * omega_q * 0.5;

    Ok([
        pos_dot.x, pos_dot.y, pos_dot.z, v_dot.x, v_dot.y, v_dot.z, q_dot.w, q_dot.i, q_dot.j,
        q_dot.k, w_dot.x, w_dot.y, w_dot.z,
    ])
}

/// One classical 4th-order Runge-Kutta step with rotor speeds held constant.
/// The quaternion is renormalized after the step. `t` is the time at the
/// start of the step, used only for divergence reporting.
pub fn integrate_step(
    state: &BodyState,
    speeds: &[f64; 4],
    params: &QuadParams,
    models: &VehicleModels,
    dt: f64,
    t: f64,
) -> Result<BodyState, CoreError> {
    integrate_step_ext(state, speeds, params, models, dt, t, Vector3::zeros())
}

/// [`integrate_step`] with an additional external body moment, held constant
/// over the step (used for injected disturbance torques).
pub fn integrate_step_ext(
    state: &BodyState,
    speeds: &[f64; 4],
    params: &QuadParams,
    models: &VehicleModels,
    dt: f64,
    t: f64,
    external_moment: Vector3<f64>,
) -> Result<BodyState, CoreError> {
    if !(dt > 0.0 && dt <= 0.02) {
        return Err(CoreError::InvalidInput(format!(
            "dt must be in (0, 0.02] s, got {dt}"
        )));
    }
    let x0 = pack(state);
    let k1 = derivative(&x0, speeds, params, models, external_moment)?;
    let mut x = x0;
    for i in 0..STATE_DIM {
        x[i] = x0[i] + 0.5 * dt * k1[i];
    }
    let k2 = derivative(&x, speeds, params, models, external_moment)?;
    for i in 0..STATE_DIM {
        x[i] = x0[i] + 0.5 * dt * k2[i];
    }
    let k3 = derivative(&x, speeds, params, models, external_moment)?;
    for i in 0..STATE_DIM {
        x[i] = x0[i] + dt * k3[i];
    }
    let k4 = derivative(&x, speeds, params, models, external_moment)?;
    for i in 0..STATE_DIM {
        x[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = unpack(&x);
    if !next.is_finite() {
        return Err(CoreError::Diverged {
            t: t + dt,
            what: "non-finite state after integration step".into(),
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn test_params() -> QuadParams {
        QuadParams {
            mass: 0.433,
            inertia_diag: Vector3::new(0.865e-3, 1.07e-3, 1.71e-3),
            gravity: Vector3::new(0.0, 0.0, 9.81),
            hub_diameter: 0.217,
            thrust_coeff: 4.72e-7,
        }
    }

    fn test_models() -> VehicleModels {
        VehicleModels {
            aero: AeroMomentModel {
                roll: AxisPoly::linear(-2.0e-4, 1.086e-4),
                pitch: AxisPoly::linear(-2.0e-4, 1.086e-4),
                yaw: AxisPoly::linear(-5.0e-5, 1.70e-5),
            },
            drag_coeff: Vector3::new(0.30, 0.30, 0.40),
            spin: SpinSign::Clockwise,
        }
    }

    #[test]
    fn control_moments_symmetric_speeds() {
        let u = control_moments(&[100.0, 100.0, 100.0, 100.0], SpinSign::Clockwise).unwrap();
        assert_eq!(u, ControlMoments { roll: 0.0, pitch: 0.0, yaw: 0.0 });
    }

    #[test]
    fn control_moments_roll_pattern() {
        let u = control_moments(&[110.0, 90.0, 90.0, 110.0], SpinSign::Clockwise).unwrap();
        assert_eq!(u, ControlMoments { roll: 40.0, pitch: 0.0, yaw: 0.0 });
    }

    #[test]
    fn control_moments_single_rotor() {
        let u = control_moments(&[1.0, 0.0, 0.0, 0.0], SpinSign::Clockwise).unwrap();
        assert_eq!(u, ControlMoments { roll: 1.0, pitch: 1.0, yaw: 1.0 });
    }

    #[test]
    fn control_moments_rejects_nonfinite() {
        assert!(control_moments(&[f64::NAN, 0.0, 0.0, 0.0], SpinSign::Clockwise).is_err());
        assert!(control_moments(&[-1.0, 0.0, 0.0, 0.0], SpinSign::Clockwise).is_err());
    }

    #[test]
    fn aero_moments_zero_input() {
        let m = test_models();
        let out = aero_moments(
            Vector3::zeros(),
            &ControlMoments::default(),
            &m.aero,
        );
        assert_eq!(out, Vector3::zeros());
    }

    #[test]
    fn aero_moments_hand_values() {
        let model = AeroMomentModel {
            roll: AxisPoly { terms: vec![PolyTerm { rate_exp: 0, input_exp: 1, coeff: 0.5 }] },
            pitch: AxisPoly::linear(0.0, 0.0),
            yaw: AxisPoly::linear(0.0, 0.0),
        };
        let u = ControlMoments { roll: 2.0, pitch: 0.0, yaw: 0.0 };
        let out = aero_moments(Vector3::zeros(), &u, &model);
        assert_relative_eq!(out.x, 1.0);

        let model2 = AeroMomentModel {
            roll: AxisPoly::linear(0.1, 0.5),
            pitch: AxisPoly::linear(0.0, 0.0),
            yaw: AxisPoly::linear(0.0, 0.0),
        };
        let out2 = aero_moments(Vector3::new(1.0, 0.0, 0.0), &u, &model2);
        assert_relative_eq!(out2.x, 1.1);
    }

    #[test]
    fn aero_axis_independence() {
        let m = test_models().aero;
        let u_a = ControlMoments { roll: 1.0, pitch: 0.3, yaw: -0.2 };
        let u_b = ControlMoments { roll: 1.0, pitch: 7.7, yaw: -0.2 };
        let r_a = Vector3::new(0.5, 1.0, 2.0);
        let r_b = Vector3::new(0.5, -4.0, 2.0);
        let ma = aero_moments(r_a, &u_a, &m);
        let mb = aero_moments(r_b, &u_b, &m);
        assert_eq!(ma.x, mb.x); // roll axis unaffected by q or u_q
    }

    #[test]
    fn rate_derivative_equilibrium() {
        let params = test_params();
        let state = BodyState::default();
        let out = rate_derivative(&state, Vector3::zeros(), &params);
        assert_eq!(out, Vector3::zeros());
    }

    #[test]
    fn rate_derivative_axis_aligned_spin() {
        let params = test_params();
        let state = BodyState { rates: Vector3::new(0.0, 0.0, 7.0), ..Default::default() };
        let out = rate_derivative(&state, Vector3::zeros(), &params);
        assert_relative_eq!(out.norm(), 0.0);
    }

    #[test]
    fn rate_derivative_gyroscopic_coupling() {
        let params = test_params();
        let (p, r) = (2.0, 3.0);
        let state = BodyState { rates: Vector3::new(p, 0.0, r), ..Default::default() };
        let out = rate_derivative(&state, Vector3::zeros(), &params);
        let expected_q =
            -p * r * (params.inertia_diag.x - params.inertia_diag.z) / params.inertia_diag.y;
        assert_relative_eq!(out.x, 0.0);
        assert_relative_eq!(out.y, expected_q, max_relative = 1e-12);
        assert_relative_eq!(out.z, 0.0);
    }

    #[test]
    fn translational_hover_balance() {
        let params = test_params();
        let state = BodyState::default();
        let f = Vector3::new(0.0, 0.0, -params.mass * 9.81);
        let out = translational_derivative(&state, f, &params);
        assert_relative_eq!(out.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn translational_free_fall() {
        let params = test_params();
        let out = translational_derivative(&BodyState::default(), Vector3::zeros(), &params);
        assert_relative_eq!(out.z, 9.81);
    }

    #[test]
    fn translational_coriolis_term() {
        let params = test_params();
        let state = BodyState {
            rates: Vector3::new(0.0, 0.0, 1.0),
            velocity_body: Vector3::new(1.0, 0.0, 0.0),
            ..Default::default()
        };
        // force cancels gravity exactly in the body frame
        let g_body = state.attitude.inverse_transform_vector(&params.gravity);
        let f = -g_body * params.mass;
        let out = translational_derivative(&state, f, &params);
        assert_relative_eq!(out.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.y, -1.0, epsilon = 1e-12);
        assert_relative_eq!(out.z, 0.0, epsilon = 1e-12);
    }

    fn hover_speed(params: &QuadParams) -> f64 {
        (params.mass * params.gravity.z / (4.0 * params.thrust_coeff)).sqrt()
    }

    #[test]
    fn integrate_hover_fixed_point() {
        let params = test_params();
        let mut models = test_models();
        models.drag_coeff = Vector3::zeros();
        let wh = hover_speed(&params);
        let state = BodyState::default();
        let next =
            integrate_step(&state, &[wh, wh, wh, wh], &params, &models, 1.0 / 250.0, 0.0).unwrap();
        assert!(next.position.norm() < 1e-9);
        assert!(next.velocity_body.norm() < 1e-9);
        assert!(next.rates.norm() < 1e-9);
    }

    #[test]
    fn integrate_ballistic_single_step() {
        let params = test_params();
        let mut models = test_models();
        models.drag_coeff = Vector3::zeros();
        let dt = 0.004;
        let next =
            integrate_step(&BodyState::default(), &[0.0; 4], &params, &models, dt, 0.0).unwrap();
        // constant acceleration: RK4 is exact on the quadratic position solution
        assert_relative_eq!(next.position.z, 0.5 * 9.81 * dt * dt, max_relative = 1e-12);
        assert_relative_eq!(next.velocity_body.z, 9.81 * dt, max_relative = 1e-12);
    }

    #[test]
    fn integrate_pure_yaw_decoupled() {
        let params = test_params();
        let models = test_models();
        // speed pattern (a, b, a, b) yields u_p = u_q = 0 and u_r ≠ 0
        let speeds = [1200.0, 800.0, 1200.0, 800.0];
        let mut state = BodyState::default();
        for k in 0..100 {
            state =
                integrate_step(&state, &speeds, &params, &models, 1.0 / 250.0, k as f64 / 250.0)
                    .unwrap();
        }
        assert!(state.rates.z.abs() > 0.1);
        assert!(state.rates.x.abs() < 1e-12);
        assert!(state.rates.y.abs() < 1e-12);
    }

    #[test]
    fn rk4_order_on_drag_ballistic() {
        // v̇ = g − (c/m) v has the analytic solution used as the oracle here.
        let params = test_params();
        let mut models = test_models();
        let c = 0.5;
        models.drag_coeff = Vector3::new(0.0, 0.0, c);
        let lam = c / params.mass;
        let z_exact = |t: f64| (9.81 / lam) * t - (9.81 / (lam * lam)) * (1.0 - (-lam * t).exp());

        let run = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let mut state = BodyState::default();
            for k in 0..steps {
                state =
                    integrate_step(&state, &[0.0; 4], &params, &models, dt, k as f64 * dt).unwrap();
            }
            (state.position.z - z_exact(1.0)).abs()
        };
        let e1 = run(0.01);
        let e2 = run(0.005);
        assert!(e1 > 0.0 && e2 > 0.0);
        assert!(e1 / e2 >= 12.0, "error ratio {} below 12", e1 / e2);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let params = test_params();
        // nontrivial polynomial model exercising cross terms up to degree 4
        let poly = AxisPoly {
            terms: vec![
                PolyTerm { rate_exp: 1, input_exp: 0, coeff: -3.1e-4 },
                PolyTerm { rate_exp: 0, input_exp: 1, coeff: 2.2e-4 },
                PolyTerm { rate_exp: 2, input_exp: 1, coeff: 1.5e-6 },
                PolyTerm { rate_exp: 3, input_exp: 0, coeff: -4.0e-7 },
                PolyTerm { rate_exp: 1, input_exp: 2, coeff: 7.0e-9 },
            ],
        };
        let model = AeroMomentModel { roll: poly.clone(), pitch: poly.clone(), yaw: poly };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = |rates: Vector3<f64>, u: &ControlMoments| -> Vector3<f64> {
            let m = aero_moments(rates, u, &model);
            let st = BodyState { rates, ..Default::default() };
            rate_derivative(&st, m, &params)
        };
        for _ in 0..50 {
            let rates = Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let u = ControlMoments {
                roll: rng.random_range(-500.0..500.0),
                pitch: rng.random_range(-500.0..500.0),
                yaw: rng.random_range(-500.0..500.0),
            };
            let (a, b) = rate_jacobian(rates, &u, &params, &model);
            let h = 1e-5;
            for j in 0..3 {
                let mut rp = rates;
                let mut rm = rates;
                rp[j] += h;
                rm[j] -= h;
                let col = (f(rp, &u) - f(rm, &u)) / (2.0 * h);
                for i in 0..3 {
                    let denom = col[i].abs().max(1e-3);
                    assert!(
                        (a[(i, j)] - col[i]).abs() / denom < 1e-5,
                        "A[{i},{j}] analytic {} vs fd {}",
                        a[(i, j)],
                        col[i]
                    );
                }
            }
            let uv = u.as_vector();
            for j in 0..3 {
                let mut up = uv;
                let mut um = uv;
                up[j] += h;
                um[j] -= h;
                let cp = ControlMoments { roll: up.x, pitch: up.y, yaw: up.z };
                let cm = ControlMoments { roll: um.x, pitch: um.y, yaw: um.z };
                let col = (f(rates, &cp) - f(rates, &cm)) / (2.0 * h);
                for i in 0..3 {
                    let denom = col[i].abs().max(1e-3);
                    assert!(
                        (b[(i, j)] - col[i]).abs() / denom < 1e-5,
                        "B[{i},{j}] analytic {} vs fd {}",
                        b[(i, j)],
                        col[i]
                    );
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn control_moments_linearity(
                w in proptest::array::uniform4(0.0..2000.0f64),
                v in proptest::array::uniform4(0.0..2000.0f64),
                a in 0.0..4.0f64,
                b in 0.0..4.0f64,
            ) {
                let s = SpinSign::Clockwise;
                let mut combo = [0.0; 4];
                for i in 0..4 {
                    combo[i] = a * w[i] + b * v[i];
                }
                let lhs = control_moments(&combo, s).unwrap().as_vector();
                let rhs = a * control_moments(&w, s).unwrap().as_vector()
                    + b * control_moments(&v, s).unwrap().as_vector();
                prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.norm()));
            }

            #[test]
            fn quaternion_stays_unit(
                wx in -20.0..20.0f64,
                wy in -20.0..20.0f64,
                wz in -20.0..20.0f64,
                speeds in proptest::array::uniform4(0.0..3000.0f64),
            ) {
                let params = test_params();
                let models = test_models();
                let mut state = BodyState {
                    rates: Vector3::new(wx, wy, wz),
                    ..Default::default()
                };
                for k in 0..20 {
                    state = integrate_step(&state, &speeds, &params, &models, 1.0 / 250.0, k as f64 / 250.0).unwrap();
                    prop_assert!((state.attitude.as_ref().norm() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
