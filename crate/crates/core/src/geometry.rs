//! Sets in state space: intervals, boxes, halfspace polytopes and p-norm balls.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::GeometryError;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::new(c * self.lo, c * self.hi)
        } else {
            Interval::new(c * self.hi, c * self.lo)
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn relu(&self) -> Interval {
        Interval::new(self.lo.max(0.0), self.hi.max(0.0))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Axis-aligned box `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        let b = BoxDomain { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(GeometryError::Dimension(format!(
                "box bounds have lengths {} and {}",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(GeometryError::EmptyBox(format!(
                    "dimension {i} has bounds [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn from_intervals(ivs: &[Interval]) -> Self {
        BoxDomain {
            lo: ivs.iter().map(|i| i.lo).collect(),
            hi: ivs.iter().map(|i| i.hi).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - slack && v <= h + slack)
    }

    /// Map a point of the unit cube affinely into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&s, (&l, &h))| l + s * (h - l))
            .collect()
    }

    /// Distance from `x` to the nearest face of the box, which is the
    /// largest radius of a 1- or inf-norm ball centred at `x` inside the box.
    pub fn inner_radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| (v - l).min(h - v))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn to_polytope(&self) -> Polytope {
        let n = self.dim();
        let mut a = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            a.push(row.clone());
            b.push(self.hi[i]);
            row[i] = -1.0;
            a.push(row);
            b.push(-self.lo[i]);
        }
        Polytope { a, b }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Halfspace polytope `{x | A x <= b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polytope {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Polytope {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, GeometryError> {
        let p = Polytope { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        Ok(BoxDomain::new(lo.to_vec(), hi.to_vec())?.to_polytope())
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.a.is_empty() {
            return Err(GeometryError::Dimension("polytope has no rows".into()));
        }
        if self.a.len() != self.b.len() {
            return Err(GeometryError::Dimension(format!(
                "polytope has {} rows but {} offsets",
                self.a.len(),
                self.b.len()
            )));
        }
        let n = self.a[0].len();
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n || n == 0 {
                return Err(GeometryError::Dimension(format!(
                    "polytope row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            if row.iter().chain(std::iter::once(&self.b[i])).any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite(format!("polytope row {i}")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(GeometryError::ZeroRow(i));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    /// `max_i (a_i x - b_i)`; nonpositive exactly on the polytope, negative on its interior.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &bi)| dot(row, x) - bi)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.max_violation(x) <= slack
    }

    pub fn in_interior(&self, x: &[f64]) -> bool {
        self.max_violation(x) < 0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Norm order of a ball. Only `L1` and `LInf` have linear encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub fn of(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.of(&d)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Norm::L1 => "1",
            Norm::L2 => "2",
            Norm::LInf => "inf",
        }
    }

    pub fn ensure_linear(&self) -> Result<(), GeometryError> {
        match self {
            Norm::L2 => Err(GeometryError::UnsupportedNorm("2".into())),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "infinity" => Ok(Norm::LInf),
            other => Err(GeometryError::UnsupportedNorm(other.to_string())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Norm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            N(f64),
        }
        let s = match Raw::deserialize(d)? {
            Raw::S(s) => s,
            Raw::N(n) => format!("{n}"),
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed p-norm ball `{x | ||x - center||_p <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub norm: Norm,
}

/// Largest dimension for which the 2^n-facet cross-polytope of a 1-norm ball is built.
pub const MAX_L1_COMPLEMENT_DIM: usize = 16;

impl NormBall {
    pub fn new(center: Vec<f64>, radius: f64, norm: Norm) -> Result<Self, GeometryError> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(GeometryError::NonFinite(format!("ball radius {radius}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite("ball center".into()));
        }
        Ok(NormBall { center, radius, norm })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        self.norm.distance(x, &self.center) <= self.radius + slack
    }

    /// Halfspace form: 2n facets for the inf-norm, 2^n for the 1-norm.
    pub fn to_polytope(&self) -> Result<Polytope, GeometryError> {
        let n = self.dim();
        match self.norm {
            Norm::LInf => {
                let lo: Vec<f64> = self.center.iter().map(|c| c - self.radius).collect();
                let hi: Vec<f64> = self.center.iter().map(|c| c + self.radius).collect();
                Ok(BoxDomain { lo, hi }.to_polytope())
            }
            Norm::L1 => {
                if n > MAX_L1_COMPLEMENT_DIM {
                    return Err(GeometryError::TooManyFacets { dim: n });
                }
                let mut a = Vec::with_capacity(1 << n);
                let mut b = Vec::with_capacity(1 << n);
                for mask in 0u32..(1u32 << n) {
                    let row: Vec<f64> = (0..n)
                        .map(|i| if mask & (1 << i) != 0 { -1.0 } else { 1.0 })
                        .collect();
                    b.push(self.radius + dot(&row, &self.center));
                    a.push(row);
                }
                Ok(Polytope { a, b })
            }
            Norm::L2 => Err(GeometryError::UnsupportedNorm("2".into())),
        }
    }

    pub fn bounding_box(&self) -> BoxDomain {
        BoxDomain {
            lo: self.center.iter().map(|c| c - self.radius).collect(),
            hi: self.center.iter().map(|c| c + self.radius).collect(),
        }
    }
}
