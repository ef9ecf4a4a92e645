//! Sequential-impulse step: motor, ground friction and contacts, followed by
//! semi-implicit position integration and positional correction.
//!
//! The last velocity iteration and the position pass use shock propagation:
//! contacts are processed outward from static bodies and, within a contact,
//! the body nearer to a static support does not move. Without it a heavy robot
//! pressing a light object into a wall needs far more iterations to converge.

use crate::math::{wrap_angle, Vec2};
use crate::real::Real;

use super::collide::{collide, Placed};
use super::{RobotVariant, World};

#[derive(Clone, Copy, Debug)]
struct ContactConstraint<S: Real> {
    a: usize,
    b: usize,
    normal: Vec2<S>,
    ra: Vec2<S>,
    rb: Vec2<S>,
    local_a: Vec2<S>,
    local_b: Vec2<S>,
    separation: S,
    mu: S,
    normal_mass: S,
    tangent_mass: S,
    /// Inverse-mass multipliers for the shock-propagation passes: the body
    /// closer to a static support is treated as immovable.
    shock: [S; 2],
    shock_normal_mass: S,
    normal_impulse: S,
    tangent_impulse: S,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Scratch<S: Real> {
    contacts: Vec<ContactConstraint<S>>,
    ground: Vec<(Vec2<S>, S)>,
    depth: Vec<usize>,
}

/// Force-limited velocity tracking for the robot chassis (body 0).
struct Motor<S: Real> {
    axes: [(Vec2<S>, S); 2],
    omega: S,
    max_linear: S,
    max_angular: S,
    linear_impulse: [S; 2],
    angular_impulse: S,
}

impl<S: Real> Motor<S> {
    fn new(world: &World<S>, cmd: [S; 3], h: S) -> Self {
        let angle = world.motion[0].angle;
        let fwd = Vec2::from_angle(angle);
        let lat = fwd.perp();
        let (axes, omega) = match world.robot.variant {
            RobotVariant::HolonomicPoint => (
                [
                    (Vec2::new(S::one(), S::zero()), cmd[0]),
                    (Vec2::new(S::zero(), S::one()), cmd[1]),
                ],
                S::zero(),
            ),
            RobotVariant::OmniBase => ([(fwd, cmd[0]), (lat, cmd[1])], cmd[2]),
            RobotVariant::DiffDrive => ([(fwd, cmd[0]), (lat, S::zero())], cmd[1]),
        };
        Self {
            axes,
            omega,
            max_linear: world.robot.max_force * h,
            max_angular: world.robot.max_torque * h,
            linear_impulse: [S::zero(); 2],
            angular_impulse: S::zero(),
        }
    }

    fn solve(&mut self, world: &mut World<S>) {
        let p = world.props[0];
        let m = &mut world.motion[0];
        for (k, (axis, target)) in self.axes.iter().enumerate() {
            let delta = p.mass * (*target - m.vel.dot(*axis));
            let old = self.linear_impulse[k];
            let new = (old + delta).max(-self.max_linear).min(self.max_linear);
            self.linear_impulse[k] = new;
            m.vel += *axis * ((new - old) * p.inv_mass);
        }
        let delta = p.inertia * (self.omega - m.omega);
        let old = self.angular_impulse;
        let new = (old + delta).max(-self.max_angular).min(self.max_angular);
        self.angular_impulse = new;
        m.omega = m.omega + (new - old) * p.inv_inertia;
    }
}

fn collect_contacts<S: Real>(world: &World<S>, out: &mut Vec<ContactConstraint<S>>) {
    let margin = world.params.contact_margin;
    let n = world.defs.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (di, dj) = (&world.defs[i], &world.defs[j]);
            if di.is_static && dj.is_static {
                continue;
            }
            let (mi, mj) = (&world.motion[i], &world.motion[j]);
            let reach = world.props[i].bound_radius + world.props[j].bound_radius + margin;
            if (mj.pos - mi.pos).length_squared() > reach * reach {
                continue;
            }
            let pa = Placed::new(&di.shape, mi.pos, mi.angle);
            let pb = Placed::new(&dj.shape, mj.pos, mj.angle);
            let Some(manifold) = collide(&pa, &pb, margin) else {
                continue;
            };
            let mu = (di.friction_coeff * dj.friction_coeff).sqrt();
            let (ia, ib) = (&world.props[i], &world.props[j]);
            let n = manifold.normal;
            let t = n.perp();
            for cp in manifold.iter() {
                let mid = (cp.pa + cp.pb) * S::lit(0.5);
                let ra = mid - mi.pos;
                let rb = mid - mj.pos;
                let rna = ra.cross(n);
                let rnb = rb.cross(n);
                let kn = ia.inv_mass
                    + ib.inv_mass
                    + ia.inv_inertia * rna * rna
                    + ib.inv_inertia * rnb * rnb;
                let rta = ra.cross(t);
                let rtb = rb.cross(t);
                let kt = ia.inv_mass
                    + ib.inv_mass
                    + ia.inv_inertia * rta * rta
                    + ib.inv_inertia * rtb * rtb;
                out.push(ContactConstraint {
                    a: i,
                    b: j,
                    normal: n,
                    ra,
                    rb,
                    local_a: (cp.pa - mi.pos).unrotate_sc(pa.sin, pa.cos),
                    local_b: (cp.pb - mj.pos).unrotate_sc(pb.sin, pb.cos),
                    separation: cp.separation,
                    mu,
                    normal_mass: if kn > S::zero() {
                        S::one() / kn
                    } else {
                        S::zero()
                    },
                    shock: [S::one(); 2],
                    shock_normal_mass: S::zero(),
                    tangent_mass: if kt > S::zero() {
                        S::one() / kt
                    } else {
                        S::zero()
                    },
                    normal_impulse: S::zero(),
                    tangent_impulse: S::zero(),
                });
            }
        }
    }
}

#[inline]
fn apply_impulse<S: Real>(
    world: &mut World<S>,
    c: &ContactConstraint<S>,
    impulse: Vec2<S>,
    scale: [S; 2],
) {
    let (pa, pb) = (world.props[c.a], world.props[c.b]);
    let ma = &mut world.motion[c.a];
    ma.vel -= impulse * (pa.inv_mass * scale[0]);
    ma.omega = ma.omega - pa.inv_inertia * scale[0] * c.ra.cross(impulse);
    let mb = &mut world.motion[c.b];
    mb.vel += impulse * (pb.inv_mass * scale[1]);
    mb.omega = mb.omega + pb.inv_inertia * scale[1] * c.rb.cross(impulse);
}

/// Orders contacts outward from static bodies and fills the shock multipliers.
fn prepare_shock<S: Real>(
    world: &World<S>,
    contacts: &mut [ContactConstraint<S>],
    depth: &mut Vec<usize>,
) {
    let n = world.defs.len();
    depth.clear();
    depth.extend(
        world
            .defs
            .iter()
            .map(|d| if d.is_static { 0 } else { usize::MAX }),
    );
    for _ in 0..n {
        let mut changed = false;
        for c in contacts.iter() {
            let (da, db) = (depth[c.a], depth[c.b]);
            if da != usize::MAX && da + 1 < db {
                depth[c.b] = da + 1;
                changed = true;
            }
            if db != usize::MAX && db + 1 < da {
                depth[c.a] = db + 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for c in contacts.iter_mut() {
        let (da, db) = (depth[c.a], depth[c.b]);
        c.shock = if da < db {
            [S::zero(), S::one()]
        } else if db < da {
            [S::one(), S::zero()]
        } else {
            [S::one(); 2]
        };
        let (pa, pb) = (world.props[c.a], world.props[c.b]);
        let rna = c.ra.cross(c.normal);
        let rnb = c.rb.cross(c.normal);
        let k = c.shock[0] * (pa.inv_mass + pa.inv_inertia * rna * rna)
            + c.shock[1] * (pb.inv_mass + pb.inv_inertia * rnb * rnb);
        c.shock_normal_mass = if k > S::zero() {
            S::one() / k
        } else {
            S::zero()
        };
    }
    // Stable: ties keep body-index order.
    contacts.sort_by_key(|c| depth[c.a].min(depth[c.b]));
}

#[inline]
fn relative_velocity<S: Real>(world: &World<S>, c: &ContactConstraint<S>) -> Vec2<S> {
    let (ma, mb) = (&world.motion[c.a], &world.motion[c.b]);
    (mb.vel + Vec2::cross_scalar(mb.omega, c.rb)) - (ma.vel + Vec2::cross_scalar(ma.omega, c.ra))
}

fn solve_contacts<S: Real>(
    world: &mut World<S>,
    contacts: &mut [ContactConstraint<S>],
    inv_h: S,
    shock: bool,
) {
    let unit = [S::one(); 2];
    for c in contacts.iter_mut() {
        // Normal: forbid approach faster than the remaining gap allows.
        let vn = relative_velocity(world, c).dot(c.normal);
        let bias = c.separation.max(S::zero()) * inv_h;
        let (mass, scale) = if shock {
            (c.shock_normal_mass, c.shock)
        } else {
            (c.normal_mass, unit)
        };
        let delta = -mass * (vn + bias);
        let new = (c.normal_impulse + delta).max(S::zero());
        let applied = new - c.normal_impulse;
        c.normal_impulse = new;
        apply_impulse(world, c, c.normal * applied, scale);

        // Friction, bounded by the cone of the freshly updated normal impulse.
        let t = c.normal.perp();
        let vt = relative_velocity(world, c).dot(t);
        let bound = c.mu * c.normal_impulse;
        let new = (c.tangent_impulse - c.tangent_mass * vt)
            .max(-bound)
            .min(bound);
        let applied = new - c.tangent_impulse;
        c.tangent_impulse = new;
        apply_impulse(world, c, t * applied, unit);
    }
}

fn solve_ground<S: Real>(world: &mut World<S>, ground: &mut [(Vec2<S>, S)], h: S) {
    for (i, acc) in ground.iter_mut().enumerate() {
        let p = world.props[i];
        if p.ground_force <= S::zero() {
            continue;
        }
        let m = &mut world.motion[i];
        let max_lin = p.ground_force * h;
        let old = acc.0;
        let mut new = old - m.vel * p.mass;
        let len = new.length();
        if len > max_lin {
            new = new * (max_lin / len);
        }
        acc.0 = new;
        m.vel += (new - old) * p.inv_mass;

        let max_ang = p.ground_torque * h;
        let old = acc.1;
        let new = (old - m.omega * p.inertia).max(-max_ang).min(max_ang);
        acc.1 = new;
        m.omega = m.omega + (new - old) * p.inv_inertia;
    }
}

fn correct_positions<S: Real>(world: &mut World<S>, contacts: &[ContactConstraint<S>]) {
    let params = world.params;
    for _ in 0..params.position_iterations {
        for c in contacts {
            let (pa, pb) = (world.props[c.a], world.props[c.b]);
            let (ma, mb) = (world.motion[c.a], world.motion[c.b]);
            let wa = ma.pos + c.local_a.rotate(ma.angle);
            let wb = mb.pos + c.local_b.rotate(mb.angle);
            let separation = (wb - wa).dot(c.normal);
            let err = (params.correction_rate * (separation + params.slop))
                .max(-params.max_correction)
                .min(S::zero());
            if err >= S::zero() {
                continue;
            }
            let mid = (wa + wb) * S::lit(0.5);
            let ra = mid - ma.pos;
            let rb = mid - mb.pos;
            let rna = ra.cross(c.normal);
            let rnb = rb.cross(c.normal);
            let [sa, sb] = c.shock;
            let k = sa * (pa.inv_mass + pa.inv_inertia * rna * rna)
                + sb * (pb.inv_mass + pb.inv_inertia * rnb * rnb);
            if k <= S::zero() {
                continue;
            }
            let impulse = c.normal * (-err / k);
            let ma = &mut world.motion[c.a];
            ma.pos -= impulse * (pa.inv_mass * sa);
            ma.angle = ma.angle - pa.inv_inertia * sa * ra.cross(impulse);
            let mb = &mut world.motion[c.b];
            mb.pos += impulse * (pb.inv_mass * sb);
            mb.angle = mb.angle + pb.inv_inertia * sb * rb.cross(impulse);
        }
    }
}

pub(crate) fn step<S: Real>(world: &mut World<S>, cmd: [S; 3], dt: S) {
    let substeps = world.params.substeps.max(1);
    let h = dt / S::from_usize(substeps).expect("substep count");
    let inv_h = S::one() / h;
    let n = world.defs.len();
    world.forces.iter_mut().for_each(|f| *f = S::zero());

    let mut contacts = std::mem::take(&mut world.scratch.contacts);
    let mut ground = std::mem::take(&mut world.scratch.ground);
    let mut depth = std::mem::take(&mut world.scratch.depth);
    for _ in 0..substeps {
        let mut motor = Motor::new(world, cmd, h);
        contacts.clear();
        collect_contacts(world, &mut contacts);
        prepare_shock(world, &mut contacts, &mut depth);
        ground.clear();
        ground.resize(n, (Vec2::zero(), S::zero()));

        let iterations = world.params.velocity_iterations.max(1);
        for it in 0..iterations {
            motor.solve(world);
            solve_ground(world, &mut ground, h);
            solve_contacts(world, &mut contacts, inv_h, it + 1 == iterations);
        }

        for c in &contacts {
            debug_assert!(
                c.tangent_impulse.abs()
                    <= c.mu * c.normal_impulse * (S::one() + S::lit(1e-9))
                        + S::min_positive_value(),
                "friction impulse outside the Coulomb cone"
            );
            world.forces[c.a] = world.forces[c.a] + c.normal_impulse;
            world.forces[c.b] = world.forces[c.b] + c.normal_impulse;
        }

        for (m, d) in world.motion.iter_mut().zip(&world.defs) {
            if d.is_static {
                continue;
            }
            m.pos += m.vel * h;
            m.angle = m.angle + m.omega * h;
        }

        correct_positions(world, &contacts);

        for m in world.motion.iter_mut() {
            m.angle = wrap_angle(m.angle);
        }
    }
    let inv_dt = S::one() / dt;
    world.forces.iter_mut().for_each(|f| *f = *f * inv_dt);
    world.scratch.contacts = contacts;
    world.scratch.ground = ground;
    world.scratch.depth = depth;
}
