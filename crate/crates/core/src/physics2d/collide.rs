//! Narrow-phase contact generation and signed distances for discs and boxes.

use crate::math::Vec2;
use crate::real::Real;

use super::Shape;

/// Placed shape: geometry plus world pose (sin/cos cached).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Placed<'a, S: Real> {
    pub shape: &'a Shape<S>,
    pub pos: Vec2<S>,
    pub sin: S,
    pub cos: S,
}

impl<'a, S: Real> Placed<'a, S> {
    pub fn new(shape: &'a Shape<S>, pos: Vec2<S>, angle: S) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self {
            shape,
            pos,
            sin,
            cos,
        }
    }

    #[inline]
    fn axis(&self, i: usize) -> Vec2<S> {
        if i == 0 {
            Vec2::new(self.cos, self.sin)
        } else {
            Vec2::new(-self.sin, self.cos)
        }
    }

    #[inline]
    fn to_local(&self, p: Vec2<S>) -> Vec2<S> {
        (p - self.pos).unrotate_sc(self.sin, self.cos)
    }

    #[inline]
    fn to_world(&self, p: Vec2<S>) -> Vec2<S> {
        self.pos + p.rotate_sc(self.sin, self.cos)
    }
}

/// One contact point: `pa` lies on A's surface, `pb` on B's, and
/// `separation = (pb − pa)·normal` (negative when penetrating).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ContactPoint<S: Real> {
    pub pa: Vec2<S>,
    pub pb: Vec2<S>,
    pub separation: S,
}

/// Up to two contact points sharing a normal that points from A to B.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Manifold<S: Real> {
    pub normal: Vec2<S>,
    pub points: [ContactPoint<S>; 2],
    pub count: usize,
}

impl<S: Real> Manifold<S> {
    fn single(normal: Vec2<S>, pa: Vec2<S>, pb: Vec2<S>, separation: S) -> Self {
        let p = ContactPoint { pa, pb, separation };
        Self {
            normal,
            points: [p, p],
            count: 1,
        }
    }

    fn flipped(mut self) -> Self {
        self.normal = -self.normal;
        for p in self.points.iter_mut() {
            std::mem::swap(&mut p.pa, &mut p.pb);
        }
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContactPoint<S>> {
        self.points[..self.count].iter()
    }
}

/// Contact manifold for the pair, or `None` when the shapes are further apart
/// than `margin`.
pub(crate) fn collide<S: Real>(a: &Placed<S>, b: &Placed<S>, margin: S) -> Option<Manifold<S>> {
    match (a.shape, b.shape) {
        (Shape::Disc { radius: ra }, Shape::Disc { radius: rb }) => {
            disc_disc(a.pos, *ra, b.pos, *rb, margin)
        }
        (Shape::Box { half_extents }, Shape::Disc { radius }) => {
            box_disc(a, *half_extents, b.pos, *radius, margin)
        }
        (Shape::Disc { radius }, Shape::Box { half_extents }) => {
            box_disc(b, *half_extents, a.pos, *radius, margin).map(Manifold::flipped)
        }
        (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => {
            box_box(a, *ha, b, *hb, margin)
        }
    }
}

fn disc_disc<S: Real>(xa: Vec2<S>, ra: S, xb: Vec2<S>, rb: S, margin: S) -> Option<Manifold<S>> {
    let d = xb - xa;
    let dist = d.length();
    let separation = dist - ra - rb;
    if separation > margin {
        return None;
    }
    let normal = if dist > S::epsilon() {
        d * (S::one() / dist)
    } else {
        Vec2::new(S::one(), S::zero())
    };
    Some(Manifold::single(
        normal,
        xa + normal * ra,
        xb - normal * rb,
        separation,
    ))
}

/// Box is A, disc is B.
fn box_disc<S: Real>(
    bx: &Placed<S>,
    h: [S; 2],
    center: Vec2<S>,
    r: S,
    margin: S,
) -> Option<Manifold<S>> {
    let c = bx.to_local(center);
    let inside = c.x.abs() <= h[0] && c.y.abs() <= h[1];
    let (n_local, on_box, dist) = if inside {
        let dx = h[0] - c.x.abs();
        let dy = h[1] - c.y.abs();
        if dx <= dy {
            let s = if c.x >= S::zero() {
                S::one()
            } else {
                -S::one()
            };
            (Vec2::new(s, S::zero()), Vec2::new(s * h[0], c.y), -dx)
        } else {
            let s = if c.y >= S::zero() {
                S::one()
            } else {
                -S::one()
            };
            (Vec2::new(S::zero(), s), Vec2::new(c.x, s * h[1]), -dy)
        }
    } else {
        let closest = Vec2::new(c.x.max(-h[0]).min(h[0]), c.y.max(-h[1]).min(h[1]));
        let d = c - closest;
        let dist = d.length();
        (d * (S::one() / dist), closest, dist)
    };
    let separation = dist - r;
    if separation > margin {
        return None;
    }
    let normal = n_local.rotate_sc(bx.sin, bx.cos);
    Some(Manifold::single(
        normal,
        bx.to_world(on_box),
        center - normal * r,
        separation,
    ))
}

/// Largest separation of `b` from `a` along `a`'s two face axes.
/// Returns (separation, axis index, outward normal of `a`).
fn max_face_separation<S: Real>(
    a: &Placed<S>,
    ha: [S; 2],
    b: &Placed<S>,
    hb: [S; 2],
) -> (S, usize, Vec2<S>) {
    let d = b.pos - a.pos;
    let ub = [b.axis(0), b.axis(1)];
    let mut best = (S::neg_infinity(), 0, Vec2::zero());
    for i in 0..2 {
        let u = a.axis(i);
        let proj = d.dot(u);
        let extent_b = hb[0] * ub[0].dot(u).abs() + hb[1] * ub[1].dot(u).abs();
        let sep = proj.abs() - ha[i] - extent_b;
        if sep > best.0 {
            let n = if proj >= S::zero() { u } else { -u };
            best = (sep, i, n);
        }
    }
    best
}

fn box_box<S: Real>(
    a: &Placed<S>,
    ha: [S; 2],
    b: &Placed<S>,
    hb: [S; 2],
    margin: S,
) -> Option<Manifold<S>> {
    let (sep_a, axis_a, n_a) = max_face_separation(a, ha, b, hb);
    if sep_a > margin {
        return None;
    }
    let (sep_b, axis_b, n_b) = max_face_separation(b, hb, a, ha);
    if sep_b > margin {
        return None;
    }
    // Prefer A as the reference unless B's face is clearly better; keeps the
    // manifold stable frame to frame.
    let flip = sep_b > sep_a * S::lit(0.95) + S::lit(0.1) * S::lit(0.0005);
    let (reference, h_ref, axis, n_ref, incident, h_inc) = if flip {
        (b, hb, axis_b, n_b, a, ha)
    } else {
        (a, ha, axis_a, n_a, b, hb)
    };

    // Incident face: most anti-parallel to the reference normal.
    let mut inc_axis = 0;
    let mut inc_sign = S::one();
    let mut best_dot = S::infinity();
    for i in 0..2 {
        let u = incident.axis(i);
        for sign in [S::one(), -S::one()] {
            let dp = (u * sign).dot(n_ref);
            if dp < best_dot {
                best_dot = dp;
                inc_axis = i;
                inc_sign = sign;
            }
        }
    }
    let inc_n = incident.axis(inc_axis) * inc_sign;
    let inc_t = incident.axis(1 - inc_axis);
    let inc_center = incident.pos + inc_n * h_inc[inc_axis];
    let half_len = h_inc[1 - inc_axis];
    let mut seg = [inc_center - inc_t * half_len, inc_center + inc_t * half_len];

    let face_center = reference.pos + n_ref * h_ref[axis];
    let tangent = reference.axis(1 - axis);
    let side = h_ref[1 - axis];
    // Clip against both side planes of the reference face.
    for (dir, offset) in [(tangent, side), (-tangent, side)] {
        let d0 = (seg[0] - face_center).dot(dir) - offset;
        let d1 = (seg[1] - face_center).dot(dir) - offset;
        if d0 > S::zero() && d1 > S::zero() {
            return None;
        }
        if d0 > S::zero() {
            seg[0] = seg[0] + (seg[1] - seg[0]) * (d0 / (d0 - d1));
        } else if d1 > S::zero() {
            seg[1] = seg[1] + (seg[0] - seg[1]) * (d1 / (d1 - d0));
        }
    }

    let mut m = Manifold {
        normal: if flip { -n_ref } else { n_ref },
        points: [ContactPoint {
            pa: Vec2::zero(),
            pb: Vec2::zero(),
            separation: S::zero(),
        }; 2],
        count: 0,
    };
    for v in seg {
        let separation = (v - face_center).dot(n_ref);
        if separation > margin {
            continue;
        }
        let on_ref = v - n_ref * separation;
        let (pa, pb) = if flip { (v, on_ref) } else { (on_ref, v) };
        m.points[m.count] = ContactPoint { pa, pb, separation };
        m.count += 1;
    }
    if m.count == 0 {
        None
    } else {
        Some(m)
    }
}

fn point_box_distance<S: Real>(bx: &Placed<S>, h: [S; 2], p: Vec2<S>) -> S {
    let c = bx.to_local(p);
    let dx = c.x.abs() - h[0];
    let dy = c.y.abs() - h[1];
    if dx <= S::zero() && dy <= S::zero() {
        dx.max(dy)
    } else {
        dx.max(S::zero()).hypot(dy.max(S::zero()))
    }
}

fn corners<S: Real>(bx: &Placed<S>, h: [S; 2]) -> [Vec2<S>; 4] {
    let (u, v) = (bx.axis(0) * h[0], bx.axis(1) * h[1]);
    [
        bx.pos + u + v,
        bx.pos - u + v,
        bx.pos - u - v,
        bx.pos + u - v,
    ]
}

/// Exact signed distance between two shapes; negative values are the
/// minimum translation needed to separate them.
pub(crate) fn signed_distance<S: Real>(a: &Placed<S>, b: &Placed<S>) -> S {
    match (a.shape, b.shape) {
        (Shape::Disc { radius: ra }, Shape::Disc { radius: rb }) => {
            (b.pos - a.pos).length() - *ra - *rb
        }
        (Shape::Box { half_extents }, Shape::Disc { radius }) => {
            point_box_distance(a, *half_extents, b.pos) - *radius
        }
        (Shape::Disc { radius }, Shape::Box { half_extents }) => {
            point_box_distance(b, *half_extents, a.pos) - *radius
        }
        (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => {
            let (sa, _, _) = max_face_separation(a, *ha, b, *hb);
            let (sb, _, _) = max_face_separation(b, *hb, a, *ha);
            let sat = sa.max(sb);
            if sat < S::zero() {
                return sat;
            }
            let from_a = corners(a, *ha)
                .iter()
                .map(|&p| point_box_distance(b, *hb, p))
                .fold(S::infinity(), S::min);
            let from_b = corners(b, *hb)
                .iter()
                .map(|&p| point_box_distance(a, *ha, p))
                .fold(S::infinity(), S::min);
            from_a.min(from_b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(r: f64) -> Shape<f64> {
        Shape::Disc { radius: r }
    }
    fn rect(hx: f64, hy: f64) -> Shape<f64> {
        Shape::Box {
            half_extents: [hx, hy],
        }
    }

    #[test]
    fn disc_box_clearance_closed_form() {
        let d = disc(0.2);
        let b = rect(0.5, 0.5);
        let pd = Placed::new(&d, Vec2::new(0.0, 0.0), 0.0);
        let pb = Placed::new(&b, Vec2::new(2.0, 0.0), 0.0);
        assert!((signed_distance(&pd, &pb) - 1.3).abs() < 1e-12);
        // Corner region: closest point is the corner (1.5, 0.5).
        let pd = Placed::new(&d, Vec2::new(1.0, 1.0), 0.0);
        let expect = (0.5f64 * 0.5 + 0.5 * 0.5).sqrt() - 0.2;
        assert!((signed_distance(&pd, &pb) - expect).abs() < 1e-12);
    }

    #[test]
    fn box_box_distance_rotated() {
        let a = rect(0.5, 0.5);
        let pa = Placed::new(&a, Vec2::new(0.0, 0.0), 0.0);
        // Diamond with its left corner at x = 0.8.
        let r = 0.5 * 2f64.sqrt();
        let pb = Placed::new(&a, Vec2::new(0.8 + r, 0.0), std::f64::consts::FRAC_PI_4);
        assert!((signed_distance(&pa, &pb) - 0.3).abs() < 1e-12);
        // Overlap by 0.1 along x.
        let pc = Placed::new(&a, Vec2::new(0.9, 0.0), 0.0);
        assert!((signed_distance(&pa, &pc) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn box_box_face_manifold_has_two_points() {
        let a = rect(0.5, 0.5);
        let b = rect(0.1, 0.1);
        let pa = Placed::new(&a, Vec2::new(0.0, 0.0), 0.0);
        let pb = Placed::new(&b, Vec2::new(0.595, 0.2), 0.0);
        let m = collide(&pa, &pb, 0.01).expect("touching");
        assert_eq!(m.count, 2);
        assert!((m.normal.x - 1.0).abs() < 1e-12);
        for p in m.iter() {
            assert!((p.separation + 0.005).abs() < 1e-12);
            assert!(((p.pb - p.pa).dot(m.normal) - p.separation).abs() < 1e-12);
        }
    }

    #[test]
    fn disc_box_flip_normal_points_a_to_b() {
        let d = disc(0.1);
        let b = rect(0.5, 0.5);
        let pd = Placed::new(&d, Vec2::new(-0.58, 0.0), 0.0);
        let pb = Placed::new(&b, Vec2::new(0.0, 0.0), 0.0);
        let m = collide(&pd, &pb, 0.01).unwrap();
        assert!(m.normal.x > 0.99);
        assert!((m.points[0].separation + 0.02).abs() < 1e-12);
    }

    #[test]
    fn far_apart_no_manifold() {
        let d = disc(0.1);
        let pa = Placed::new(&d, Vec2::new(0.0, 0.0), 0.0);
        let pb = Placed::new(&d, Vec2::new(1.0, 0.0), 0.0);
        assert!(collide(&pa, &pb, 0.05).is_none());
    }
}
