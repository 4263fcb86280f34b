//! Fixed-step integration of the quasi-3D vehicle.
//!
//! Tick order inside [`Vehicle::step`]:
//! 1. steering slew (rate-limited) and per-wheel Ackermann angles;
//! 2. per-corner vertical dynamics (backward Euler with ground contact);
//! 3. tire normal loads: ground reaction plus static load transfer
//!    `dN = -/+ m a_x h / (2 l)` front/rear and `-/+ m a_y h / (2 w)` left/right
//!    from the previous step's body acceleration;
//! 4. planar velocities `(v_x, v_y, yaw rate, wheel spins)` by backward Euler,
//!    solved with Newton iterations on the analytic Jacobian (tire slip makes
//!    these equations far too stiff for an explicit update at the default step);
//! 5. pose and wheel angles from the new velocities (midpoint heading).

use crate::geometry::{OrientedRect, Vec2};
use crate::num::{solve_dense, wrap_angle, Real};
use crate::vehicle::ackermann::wheel_steer_angles;
use crate::vehicle::actuators::{
    drive_torque_with_slope, drive_wheel_inertia, steer_dynamics_full,
};
use crate::vehicle::config::VehicleConfig;
use crate::vehicle::friction::FrictionCurve;
use crate::vehicle::mass::center_of_mass;
use crate::vehicle::state::{
    ActuatorInput, BodyVelocity, Command, Pose, VehicleState, WheelState, REAR_LEFT, REAR_RIGHT,
};
use crate::vehicle::suspension::{step_corner, SuspensionCorner};
use crate::vehicle::tire::slip;
use crate::vehicle::{ConfigError, StepError};

const NDOF: usize = 7;
const MAX_NEWTON: usize = 16;

/// Validated configuration plus derived quantities.
#[derive(Debug, Clone)]
pub struct Vehicle<T> {
    pub config: VehicleConfig<T>,
    pub curve_long: FrictionCurve<T>,
    pub curve_lat: FrictionCurve<T>,
    /// Center of mass in the chassis frame.
    pub com: [T; 3],
    /// Wheel contact points relative to the center of mass, body frame.
    pub wheel_positions: [Vec2<T>; 4],
    /// Chassis plus wheels, kg.
    pub total_mass: T,
    pub yaw_inertia: T,
    pub wheel_inertia: T,
}

struct PlanarContext<T> {
    steer: [T; 4],
    loads: [T; 4],
    throttle: T,
    drive_offset: T,
}

struct WheelForces<T> {
    slip: (T, T),
    force: (T, T),
    torque: T,
}

impl<T: Real> Vehicle<T> {
    pub fn new(config: VehicleConfig<T>) -> Result<Self, ConfigError> {
        config.validate()?;
        let curve_long = FrictionCurve::fit(&config.friction_longitudinal)?;
        let curve_lat = FrictionCurve::fit(&config.friction_lateral)?;
        let com = center_of_mass(&config.mass_layout)?;
        let half = T::lit(0.5);
        let (l, w) = (config.geometry.wheelbase, config.geometry.track);
        let corner = |sx: T, sy: T| Vec2::new(sx * l * half - com[0], sy * w * half - com[1]);
        let one = T::one();
        let wheel_positions = [
            corner(one, one),
            corner(one, -one),
            corner(-one, one),
            corner(-one, -one),
        ];
        let sprung = config.mass_layout.total_mass();
        let mw = config.wheel.mass;
        let total_mass = sprung + T::lit(4.0) * mw;
        let mut yaw_inertia = T::zero();
        for m in &config.mass_layout.sprung_masses {
            let dx = m.position[0] - com[0];
            let dy = m.position[1] - com[1];
            yaw_inertia += m.mass * (dx * dx + dy * dy);
        }
        for p in &wheel_positions {
            yaw_inertia += mw * p.dot(*p);
        }
        // Body shell term keeps the inertia positive for degenerate layouts.
        let (bl, bw) = (config.body.length, config.body.width);
        yaw_inertia += T::lit(0.1) * sprung * (bl * bl + bw * bw) / T::lit(12.0);
        let wheel_inertia = drive_wheel_inertia(mw, config.wheel.radius);
        Ok(Self {
            config,
            curve_long,
            curve_lat,
            com,
            wheel_positions,
            total_mass,
            yaw_inertia,
            wheel_inertia,
        })
    }

    fn corner_template(&self, i: usize) -> SuspensionCorner<T> {
        let cfg = &self.config;
        let ms = cfg.mass_layout.sprung_masses[i].mass;
        SuspensionCorner {
            spring_k: cfg.suspension.spring_k,
            damping_b: cfg.suspension.damping_b,
            sprung_mass: ms,
            wheel_mass: cfg.wheel.mass,
            preload: ms * cfg.gravity,
            natural_gap: cfg.suspension.natural_gap,
            travel_limit: cfg.suspension.travel_limit,
            sprung_height: T::zero(),
            sprung_rate: T::zero(),
            wheel_height: cfg.wheel.radius,
            wheel_rate: T::zero(),
            in_contact: true,
        }
    }

    /// Vehicle at rest on flat ground with every corner at static equilibrium.
    pub fn rest_state(&self, pose: Pose<T>) -> VehicleState<T> {
        let r = self.config.wheel.radius;
        let g = self.config.gravity;
        let corners = std::array::from_fn(|i| {
            let mut c = self.corner_template(i);
            c.sprung_height = r + c.equilibrium_gap();
            c
        });
        let wheels = std::array::from_fn(|i| {
            let c: &SuspensionCorner<T> = &corners[i];
            WheelState {
                radius: r,
                normal_load: c.preload + c.wheel_mass * g,
                ..WheelState::default()
            }
        });
        VehicleState {
            pose,
            velocity: BodyVelocity::default(),
            corners,
            wheels,
            commanded: Command::zero(),
            steer_angle: T::zero(),
            steer_rate: T::zero(),
            steer_torque: T::zero(),
            body_accel: [T::zero(); 2],
            sim_time: T::zero(),
        }
    }

    /// Vehicle footprint rectangle at a pose.
    pub fn footprint(&self, pose: &Pose<T>) -> OrientedRect<T> {
        let half = T::lit(0.5);
        OrientedRect {
            center: Vec2::new(pose.x, pose.y),
            half: Vec2::new(
                self.config.body.length * half,
                self.config.body.width * half,
            ),
            yaw: pose.yaw,
        }
    }

    /// Total mechanical energy: chassis and wheel kinetic energy, spring and gravity potential.
    pub fn mechanical_energy(&self, s: &VehicleState<T>) -> T {
        let half = T::lit(0.5);
        let g = self.config.gravity;
        let v = &s.velocity;
        let mut e = half * self.total_mass * (v.vx * v.vx + v.vy * v.vy)
            + half * self.yaw_inertia * v.yaw_rate * v.yaw_rate;
        for w in &s.wheels {
            e += half * self.wheel_inertia * w.angular_velocity * w.angular_velocity;
        }
        for c in &s.corners {
            e += c.kinetic_energy() + c.potential_energy(g);
        }
        e
    }

    fn wheel_forces(
        &self,
        i: usize,
        u: &[T; NDOF],
        ctx: &PlanarContext<T>,
        jac: Option<&mut [[T; NDOF]; NDOF]>,
        f: &mut [T; NDOF],
    ) -> WheelForces<T> {
        let cfg = &self.config;
        let radius = cfg.wheel.radius;
        let eps = cfg.slip_epsilon;
        let p = self.wheel_positions[i];
        let (s, c) = ctx.steer[i].sin_cos();
        let (vx, vy, r, omega) = (u[0], u[1], u[2], u[3 + i]);
        let vcx = vx - r * p.y;
        let vcy = vy + r * p.x;
        let vt = c * vcx + s * vcy;
        let wt = -s * vcx + c * vcy;
        let d = vt.abs().max(eps);
        let dd = if vt.abs() > eps {
            T::one().copysign(vt)
        } else {
            T::zero()
        };
        let (sx, sy) = slip(radius, omega, vt, wt, eps);

        let load = ctx.loads[i];
        let (ftx, fty, dftx, dfty) = if load > T::zero() {
            (
                load * self.curve_long.eval(sx),
                -load * self.curve_lat.eval(sy),
                load * self.curve_long.slope(sx),
                -load * self.curve_lat.slope(sy),
            )
        } else {
            (T::zero(), T::zero(), T::zero(), T::zero())
        };

        let (drive, drive_slope) = if i == REAR_LEFT || i == REAR_RIGHT {
            drive_torque_with_slope(
                ctx.throttle,
                omega,
                radius,
                &cfg.actuators,
                ctx.drive_offset,
            )
        } else {
            (T::zero(), T::zero())
        };
        let damping = cfg.wheel.rolling_damping;

        let fbx = c * ftx - s * fty;
        let fby = s * ftx + c * fty;
        f[0] += fbx;
        f[1] += fby;
        f[2] += p.x * fby - p.y * fbx;
        f[3 + i] += -radius * ftx + drive - damping * omega;

        if let Some(jac) = jac {
            let gvt = [c, s, -c * p.y + s * p.x];
            let gwt = [-s, c, s * p.y + c * p.x];
            let dsx_dvt = -(T::one() + sx * dd) / d;
            let dsx_dw = radius / d;
            let dsy_dwt = T::one() / d;
            let dsy_dvt = -sy * dd / d;
            let mut dftx_dq = [T::zero(); 3];
            let mut dfty_dq = [T::zero(); 3];
            for k in 0..3 {
                dftx_dq[k] = dftx * dsx_dvt * gvt[k];
                dfty_dq[k] = dfty * (dsy_dwt * gwt[k] + dsy_dvt * gvt[k]);
            }
            let dftx_dw = dftx * dsx_dw;
            let wi = 3 + i;
            for k in 0..3 {
                let dfbx = c * dftx_dq[k] - s * dfty_dq[k];
                let dfby = s * dftx_dq[k] + c * dfty_dq[k];
                jac[0][k] += dfbx;
                jac[1][k] += dfby;
                jac[2][k] += p.x * dfby - p.y * dfbx;
                jac[wi][k] += -radius * dftx_dq[k];
            }
            let dfbx_dw = c * dftx_dw;
            let dfby_dw = s * dftx_dw;
            jac[0][wi] += dfbx_dw;
            jac[1][wi] += dfby_dw;
            jac[2][wi] += p.x * dfby_dw - p.y * dfbx_dw;
            jac[wi][wi] += -radius * dftx_dw + drive_slope - damping;
        }

        WheelForces {
            slip: (sx, sy),
            force: (ftx, fty),
            torque: drive,
        }
    }

    fn planar_forces(
        &self,
        u: &[T; NDOF],
        ctx: &PlanarContext<T>,
        mut jac: Option<&mut [[T; NDOF]; NDOF]>,
    ) -> [T; NDOF] {
        let mut f = [T::zero(); NDOF];
        if let Some(j) = jac.as_deref_mut() {
            *j = [[T::zero(); NDOF]; NDOF];
        }
        for i in 0..4 {
            self.wheel_forces(i, u, ctx, jac.as_deref_mut(), &mut f);
        }
        let m = self.total_mass;
        let (vx, vy, r) = (u[0], u[1], u[2]);
        f[0] += m * r * vy;
        f[1] -= m * r * vx;
        if let Some(j) = jac {
            j[0][1] += m * r;
            j[0][2] += m * vy;
            j[1][0] -= m * r;
            j[1][2] -= m * vx;
        }
        f
    }

    fn masses(&self) -> [T; NDOF] {
        let iw = self.wheel_inertia;
        [
            self.total_mass,
            self.total_mass,
            self.yaw_inertia,
            iw,
            iw,
            iw,
            iw,
        ]
    }

    /// Scaled residual `max_i |M_i (u_i - u0_i) - dt f_i| / M_i`.
    fn residual(
        &self,
        u: &[T; NDOF],
        u0: &[T; NDOF],
        ctx: &PlanarContext<T>,
        dt: T,
    ) -> ([T; NDOF], T) {
        let m = self.masses();
        let f = self.planar_forces(u, ctx, None);
        let mut r = [T::zero(); NDOF];
        let mut norm = T::zero();
        for k in 0..NDOF {
            r[k] = m[k] * (u[k] - u0[k]) - dt * f[k];
            norm = norm.max((r[k] / m[k]).abs());
        }
        (r, norm)
    }

    fn solve_planar(&self, u0: &[T; NDOF], ctx: &PlanarContext<T>, dt: T) -> [T; NDOF] {
        let m = self.masses();
        let mut u = *u0;
        let (mut res, mut norm) = self.residual(&u, u0, ctx, dt);
        let tol = T::lit(1e-13);
        let mut jac = [[T::zero(); NDOF]; NDOF];
        for _ in 0..MAX_NEWTON {
            if norm <= tol {
                break;
            }
            self.planar_forces(&u, ctx, Some(&mut jac));
            let mut a = [T::zero(); NDOF * NDOF];
            for row in 0..NDOF {
                for col in 0..NDOF {
                    a[row * NDOF + col] = -dt * jac[row][col];
                }
                a[row * NDOF + row] += m[row];
            }
            let mut delta = res.map(|x| -x);
            if solve_dense(&mut a, &mut delta, NDOF).is_none() {
                break;
            }
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..12 {
                let mut trial = u;
                for k in 0..NDOF {
                    trial[k] += lambda * delta[k];
                }
                let (r2, n2) = self.residual(&trial, u0, ctx, dt);
                if n2 < norm || !accepted && lambda < T::lit(1e-3) {
                    u = trial;
                    res = r2;
                    norm = n2;
                    accepted = true;
                    break;
                }
                lambda *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        u
    }

    /// Longitudinal and lateral slip of wheel `idx` at the current state.
    pub fn compute_slip(&self, state: &VehicleState<T>, idx: usize) -> (T, T) {
        let p = self.wheel_positions[idx];
        let v = &state.velocity;
        let (s, c) = state.wheels[idx].steer_angle.sin_cos();
        let vcx = v.vx - v.yaw_rate * p.y;
        let vcy = v.vy + v.yaw_rate * p.x;
        slip(
            self.config.wheel.radius,
            state.wheels[idx].angular_velocity,
            c * vcx + s * vcy,
            -s * vcx + c * vcy,
            self.config.slip_epsilon,
        )
    }

    /// Advances the vehicle by `dt` seconds.
    pub fn step(
        &self,
        state: &VehicleState<T>,
        input: &ActuatorInput<T>,
        dt: T,
    ) -> Result<VehicleState<T>, StepError> {
        if !(dt > T::zero() && dt <= T::lit(0.01)) {
            return Err(StepError::InvalidTimeStep(dt.as_f64()));
        }
        if !state.is_finite() {
            return Err(StepError::NonFiniteInput);
        }
        let cfg = &self.config;
        let cmd = input.command.clamped();
        let drive_offset = if input.drive_velocity_offset.is_finite() {
            input.drive_velocity_offset
        } else {
            T::zero()
        };
        let rate_offset = if input.steer_rate_offset.is_finite() {
            input.steer_rate_offset
        } else {
            T::zero()
        };
        let g = cfg.gravity;
        let radius = cfg.wheel.radius;
        let mut next = state.clone();
        next.commanded = cmd;

        // 1. steering
        let (delta, rate, torque) = steer_dynamics_full(
            cmd.steering,
            state.steer_angle,
            state.steer_rate,
            cfg.geometry.max_steer,
            &cfg.actuators,
            dt,
            rate_offset,
        );
        next.steer_angle = delta;
        next.steer_rate = rate;
        next.steer_torque = torque;
        let [fl, fr] = wheel_steer_angles(&cfg.geometry, delta);
        let steer = [fl, fr, T::zero(), T::zero()];

        // 2-3. vertical dynamics and normal loads
        let half = T::lit(0.5);
        let h = cfg.body.cg_height;
        let m = self.total_mass;
        let dn_long = m * state.body_accel[0] * h * half / cfg.geometry.wheelbase;
        let dn_lat = m * state.body_accel[1] * h * half / cfg.geometry.track;
        let mut loads = [T::zero(); 4];
        for i in 0..4 {
            let vs = step_corner(&state.corners[i], g, radius, dt);
            next.corners[i] = vs.corner;
            if vs.corner.in_contact {
                let front = if i < 2 { -T::one() } else { T::one() };
                let left = if i % 2 == 0 { -T::one() } else { T::one() };
                loads[i] = (vs.contact_force + front * dn_long + left * dn_lat).max(T::zero());
            }
        }

        // 4. planar velocities
        let u0 = [
            state.velocity.vx,
            state.velocity.vy,
            state.velocity.yaw_rate,
            state.wheels[0].angular_velocity,
            state.wheels[1].angular_velocity,
            state.wheels[2].angular_velocity,
            state.wheels[3].angular_velocity,
        ];
        let ctx = PlanarContext {
            steer,
            loads,
            throttle: cmd.throttle,
            drive_offset,
        };
        let u = self.solve_planar(&u0, &ctx, dt);

        let mut scratch = [T::zero(); NDOF];
        for i in 0..4 {
            let wf = self.wheel_forces(i, &u, &ctx, None, &mut scratch);
            let w = &mut next.wheels[i];
            w.angular_acceleration = (u[3 + i] - u0[3 + i]) / dt;
            w.angular_velocity = u[3 + i];
            w.cumulative_angle += dt * u[3 + i];
            w.steer_angle = steer[i];
            w.slip_long = wf.slip.0;
            w.slip_lat = wf.slip.1;
            w.force_long = wf.force.0;
            w.force_lat = wf.force.1;
            w.normal_load = loads[i];
            w.torque = wf.torque;
        }

        // 5. pose
        let (vx, vy, r) = (u[0], u[1], u[2]);
        next.body_accel = [(vx - u0[0]) / dt - r * vy, (vy - u0[1]) / dt + r * vx];
        next.velocity = BodyVelocity {
            vx,
            vy,
            yaw_rate: r,
        };
        let mid = state.pose.yaw + half * dt * r;
        let (s, c) = mid.sin_cos();
        next.pose = Pose {
            x: state.pose.x + dt * (c * vx - s * vy),
            y: state.pose.y + dt * (s * vx + c * vy),
            yaw: wrap_angle(state.pose.yaw + dt * r),
        };
        next.sim_time = state.sim_time + dt;

        if !next.is_finite() {
            return Err(StepError::IntegrationFault {
                time: state.sim_time.as_f64(),
            });
        }
        Ok(next)
    }
}

/// Free-function form of [`Vehicle::step`].
pub fn step<T: Real>(
    vehicle: &Vehicle<T>,
    state: &VehicleState<T>,
    cmd: Command<T>,
    dt: T,
) -> Result<VehicleState<T>, StepError> {
    vehicle.step(state, &cmd.into(), dt)
}
