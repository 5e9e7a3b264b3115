//! Convex bodies behind a membership oracle.
//!
//! A [`Body`] couples a shape with its rounding guarantees (an inscribed ball
//! and an enclosing radius) and a query counter. Shapes compose: a body may
//! be intersected with a ball or pushed through an [`AffineMap`], and the
//! composite still answers membership with one query.

mod affine;
mod parse;
mod polytope;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use smallvec::SmallVec;

pub use affine::AffineMap;
pub use parse::{format_body, parse_body, read_body_file};
pub use polytope::Polytope;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::walks::RngStream;

type Scratch = SmallVec<[f64; 16]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    Polytope,
    Ball,
    Cube,
    Simplex,
    IntersectionWithBall,
    Transformed,
}

impl fmt::Display for BodyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BodyKind::Polytope => "polytope",
            BodyKind::Ball => "ball",
            BodyKind::Cube => "cube",
            BodyKind::Simplex => "simplex",
            BodyKind::IntersectionWithBall => "intersection-with-ball",
            BodyKind::Transformed => "transformed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub enum Shape {
    Polytope { poly: Polytope, kind: BodyKind },
    /// Euclidean ball of the given radius centred at the origin.
    Ball { radius: f64 },
    BallIntersection {
        base: Arc<Body>,
        center: DVector<f64>,
        radius: f64,
    },
    Transformed { base: Arc<Body>, map: AffineMap },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

/// Membership oracle plus `(r, R)` rounding bounds.
///
/// `B(inner.center, inner.radius) ⊆ K ⊆ B(inner.center, outer_radius)`.
/// The query counter is telemetry only: it is excluded from equality and
/// tolerates concurrent increments.
#[derive(Debug)]
pub struct Body {
    dim: usize,
    shape: Shape,
    inner: InnerBall,
    outer_radius: f64,
    queries: AtomicU64,
}

impl Clone for Body {
    fn clone(&self) -> Self {
        Body {
            dim: self.dim,
            shape: self.shape.clone(),
            inner: self.inner.clone(),
            outer_radius: self.outer_radius,
            queries: AtomicU64::new(self.queries()),
        }
    }
}

impl PartialEq for Body {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.inner == other.inner
            && self.outer_radius == other.outer_radius
            && match (&self.shape, &other.shape) {
                (Shape::Polytope { poly: a, kind: ka }, Shape::Polytope { poly: b, kind: kb }) => {
                    ka == kb && a == b
                }
                (Shape::Ball { radius: a }, Shape::Ball { radius: b }) => a == b,
                (
                    Shape::BallIntersection {
                        base: a,
                        center: ca,
                        radius: ra,
                    },
                    Shape::BallIntersection {
                        base: b,
                        center: cb,
                        radius: rb,
                    },
                ) => ra == rb && ca == cb && a == b,
                (Shape::Transformed { base: a, map: ma }, Shape::Transformed { base: b, map: mb }) => {
                    a == b && ma.matrix() == mb.matrix() && ma.shift() == mb.shift()
                }
                _ => false,
            }
    }
}

impl Body {
    fn from_parts(dim: usize, shape: Shape, inner: InnerBall, outer_radius: f64) -> Self {
        Body {
            dim,
            shape,
            inner,
            outer_radius,
            queries: AtomicU64::new(0),
        }
    }

    /// General polytope; inner ball from the Chebyshev LP, outer radius from
    /// the bounding box.
    pub fn polytope(poly: Polytope) -> Result<Self> {
        let (center, radius) = poly.chebyshev_ball()?;
        Body::polytope_with_inner(poly, center, radius)
    }

    /// Polytope with a declared inner ball, verified exactly.
    pub fn polytope_with_inner(poly: Polytope, center: DVector<f64>, radius: f64) -> Result<Self> {
        Body::polytope_tagged(poly, BodyKind::Polytope, center, radius)
    }

    fn polytope_tagged(
        poly: Polytope,
        kind: BodyKind,
        center: DVector<f64>,
        radius: f64,
    ) -> Result<Self> {
        let n = poly.dim();
        check_dim(n, center.len())?;
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("inner radius must be positive".into()));
        }
        for j in 0..poly.num_constraints() {
            if poly.slack(j, center.as_slice()) < radius * poly.row_norms()[j] * (1.0 - 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "declared inner ball leaves the body through constraint {j}"
                )));
            }
        }
        let (lo, hi) = poly.bounding_box()?;
        let outer = (0..n)
            .map(|i| {
                let d = (hi[i] - center[i]).abs().max((center[i] - lo[i]).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt();
        Ok(Body::from_parts(
            n,
            Shape::Polytope { poly, kind },
            InnerBall { center, radius },
            outer,
        ))
    }

    /// `[-h, h]^n`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        let poly = Polytope::cube(n, half_width)?;
        Ok(Body::from_parts(
            n,
            Shape::Polytope {
                poly,
                kind: BodyKind::Cube,
            },
            InnerBall {
                center: DVector::zeros(n),
                radius: half_width,
            },
            half_width * (n as f64).sqrt(),
        ))
    }

    /// Standard simplex `{x ≥ 0, Σx ≤ 1}` with its inscribed ball.
    pub fn simplex(n: usize) -> Result<Self> {
        let poly = Polytope::standard_simplex(n)?;
        let nf = n as f64;
        let c = 1.0 / (nf + nf.sqrt());
        let to_origin = c * nf.sqrt();
        let to_vertex = ((1.0 - c).powi(2) + (nf - 1.0) * c * c).sqrt();
        Ok(Body::from_parts(
            n,
            Shape::Polytope {
                poly,
                kind: BodyKind::Simplex,
            },
            InnerBall {
                center: DVector::from_element(n, c),
                radius: c,
            },
            to_origin.max(to_vertex),
        ))
    }

    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        if n == 0 || !(radius > 0.0) {
            return Err(Error::InvalidInput("ball needs n ≥ 1 and radius > 0".into()));
        }
        Ok(Body::from_parts(
            n,
            Shape::Ball { radius },
            InnerBall {
                center: DVector::zeros(n),
                radius,
            },
            radius,
        ))
    }

    /// `base ∩ B(center, radius)`.
    pub fn intersect_ball(base: Arc<Body>, center: DVector<f64>, radius: f64) -> Result<Self> {
        check_dim(base.dim, center.len())?;
        let offset = (&base.inner.center - &center).norm();
        let inner_r = base.inner.radius.min(radius - offset);
        if !(inner_r > 0.0) {
            return Err(Error::InvalidInput(
                "intersecting ball misses the declared inner ball".into(),
            ));
        }
        let outer = base.outer_radius.min(radius + offset);
        let inner = InnerBall {
            center: base.inner.center.clone(),
            radius: inner_r,
        };
        Ok(Body::from_parts(
            base.dim,
            Shape::BallIntersection {
                base,
                center,
                radius,
            },
            inner,
            outer,
        ))
    }

    /// The image `map(base)`.
    pub fn transformed(base: Arc<Body>, map: AffineMap) -> Result<Self> {
        check_dim(base.dim, map.dim())?;
        let inner = InnerBall {
            center: map.apply(base.inner.center.as_slice()),
            radius: base.inner.radius * map.min_singular_value(),
        };
        let loose = base.outer_radius * map.max_singular_value();
        let outer = polyhedral_image_radius(&base, &map, &inner.center).map_or(loose, |r| r.min(loose));
        Ok(Body::from_parts(
            base.dim,
            Shape::Transformed { base, map },
            inner,
            outer,
        ))
    }

    /// Replace the enclosing radius (must still be a valid bound).
    pub fn with_outer_radius(mut self, outer_radius: f64) -> Self {
        self.outer_radius = outer_radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn kind(&self) -> BodyKind {
        match &self.shape {
            Shape::Polytope { kind, .. } => *kind,
            Shape::Ball { .. } => BodyKind::Ball,
            Shape::BallIntersection { .. } => BodyKind::IntersectionWithBall,
            Shape::Transformed { .. } => BodyKind::Transformed,
        }
    }

    pub fn inner_ball(&self) -> &InnerBall {
        &self.inner
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner.radius
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Radius of a ball about the origin that contains the body.
    pub fn origin_outer_radius(&self) -> f64 {
        self.outer_radius + self.inner.center.norm()
    }

    /// The underlying polytope when this body is one.
    pub fn as_polytope(&self) -> Option<&Polytope> {
        match &self.shape {
            Shape::Polytope { poly, .. } => Some(poly),
            _ => None,
        }
    }

    /// Membership query; counts one query.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query point is not finite".into()));
        }
        Ok(self.contains_fast(x))
    }

    /// Counted membership without the dimension check, for walk inner loops.
    #[inline]
    pub fn contains_fast(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.membership(x)
    }

    /// Uncounted membership, used when this body is nested in another.
    pub fn membership(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Polytope { poly, .. } => poly.contains(x),
            Shape::Ball { radius } => linalg::norm_sq(x) <= radius * radius,
            Shape::BallIntersection {
                base,
                center,
                radius,
            } => {
                let d2: f64 = x
                    .iter()
                    .zip(center.iter())
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                d2 <= radius * radius && base.membership(x)
            }
            Shape::Transformed { base, map } => {
                let mut pre: Scratch = SmallVec::from_elem(0.0, self.dim);
                map.pull_back_into(x, &mut pre);
                base.membership(&pre)
            }
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Lower bound on the radius of the largest origin-centred ball inside
    /// `map(self)`; exact for polytopes.
    pub fn image_inner_radius(&self, map: &AffineMap) -> f64 {
        let s = map.shift();
        match &self.shape {
            Shape::Polytope { poly, .. } => poly.image_inner_radius(map),
            Shape::Ball { radius } => (radius - s.norm()) * map.min_singular_value(),
            Shape::BallIntersection {
                base,
                center,
                radius,
            } => {
                let ball_part = (radius - (s - center).norm()) * map.min_singular_value();
                base.image_inner_radius(map).min(ball_part)
            }
            Shape::Transformed { base, map: inner } => match inner.then(map) {
                Ok(composed) => base.image_inner_radius(&composed),
                Err(_) => f64::NEG_INFINITY,
            },
        }
    }

    /// Certified radius of a ball about the origin inside the body.
    pub fn origin_inner_radius(&self) -> f64 {
        self.image_inner_radius(&AffineMap::identity(self.dim))
    }

    /// Heuristic lower bound on the inner radius about `center`: the minimum
    /// exit distance over `64 n` random directions. Diagnostics only.
    pub fn sampled_inner_radius(&self, center: &[f64], rng: &mut RngStream) -> f64 {
        let n = self.dim;
        let hi0 = 2.0 * self.outer_radius.max(self.inner.radius) + 1.0;
        let mut best = f64::INFINITY;
        let mut dir = vec![0.0; n];
        let mut probe = vec![0.0; n];
        for _ in 0..64 * n {
            rng.unit_direction(&mut dir);
            let (mut lo, mut hi) = (0.0, hi0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                for i in 0..n {
                    probe[i] = center[i] + mid * dir[i];
                }
                if self.membership(&probe) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.min(lo);
        }
        best
    }
}

/// `contains(body, T⁻¹ y + x₀)`: membership of `y` in `map(body)` with one
/// query against `body`.
/// Radius about `center` of the bounding box of `map(base)`, for a polytope
/// or a polytope cut by a ball. The ball is replaced by enclosing slabs along
/// the directions that become coordinate axes and principal axes in the image.
fn polyhedral_image_radius(base: &Body, map: &AffineMap, center: &DVector<f64>) -> Option<f64> {
    let (poly, ball) = match &base.shape {
        Shape::Polytope { poly, .. } => (poly, None),
        Shape::BallIntersection { base, center, radius } => match &base.shape {
            Shape::Polytope { poly, .. } => (poly, Some((center, *radius))),
            _ => return None,
        },
        _ => return None,
    };
    let n = base.dim;
    let t = map.matrix();
    let mut rows: Vec<DVector<f64>> = (0..poly.num_constraints())
        .map(|j| DVector::from_column_slice(poly.row(j)))
        .collect();
    let mut rhs: Vec<f64> = poly.b().iter().copied().collect();
    if let Some((c, radius)) = ball {
        let svd = t.clone().svd(false, true);
        let v_t = svd.v_t?;
        let dirs = (0..n)
            .map(|i| t.row(i).transpose())
            .chain((0..n).map(|k| v_t.row(k).transpose()));
        for d in dirs {
            let len = d.norm();
            if !(len > 0.0) {
                continue;
            }
            let mid = d.dot(c);
            rows.push(d.clone());
            rhs.push(mid + radius * len);
            rows.push(-d);
            rhs.push(-mid + radius * len);
        }
    }
    // y = T(x − s) maps {A x ≤ b} to {A T⁻¹ y ≤ b − A s}
    let a = nalgebra::DMatrix::from_fn(rows.len(), n, |j, k| rows[j][k]);
    let b = DVector::from_vec(rhs) - &a * map.shift();
    let image = Polytope::new(a, b).ok()?.linear_image(t).ok()?;
    let (lo, hi) = image.bounding_box().ok()?;
    let r2: f64 = (0..n)
        .map(|i| (hi[i] - center[i]).abs().max((center[i] - lo[i]).abs()).powi(2))
        .sum();
    Some(r2.sqrt())
}

pub fn transformed_membership(map: &AffineMap, body: &Body, y: &[f64]) -> Result<bool> {
    check_dim(map.dim(), y.len())?;
    let pre = map.pull_back(y);
    body.contains(pre.as_slice())
}
