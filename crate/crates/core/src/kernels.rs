//! Kernel functions and their exact split into query-side and event-side
//! terms: `K((u + v) / b) = sum_k q_k(u) * a_k(v)`.
//!
//! Polynomial kernels (triangular, epanechnikov) keep the event side free of
//! the bandwidth, so aggregates over them serve any bandwidth. Exponential and
//! cosine terms depend on the bandwidth and an index built over them is tied
//! to it; [`AggLayout::accepts`] enforces this.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Half;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Triangular,
    Epanechnikov,
    Exponential,
    Cosine,
    /// `K(x) = 1`; turns a factor off.
    Constant,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::Triangular,
        KernelKind::Epanechnikov,
        KernelKind::Exponential,
        KernelKind::Cosine,
        KernelKind::Constant,
    ];

    /// Direct evaluation on the normalized distance `x` in `[0, 1]`; zero
    /// outside the domain.
    pub fn evaluate(self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            KernelKind::Triangular => 1.0 - x,
            KernelKind::Epanechnikov => 1.0 - x * x,
            KernelKind::Exponential => (-x).exp(),
            KernelKind::Cosine => x.cos(),
            KernelKind::Constant => 1.0,
        }
    }

    pub fn is_polynomial(self) -> bool {
        matches!(
            self,
            KernelKind::Triangular | KernelKind::Epanechnikov | KernelKind::Constant
        )
    }

    pub fn term_count(self) -> usize {
        match self {
            KernelKind::Triangular => 2,
            KernelKind::Epanechnikov => 3,
            KernelKind::Exponential => 1,
            KernelKind::Cosine => 2,
            KernelKind::Constant => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Exponential => "exponential",
            KernelKind::Cosine => "cosine",
            KernelKind::Constant => "constant",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" => Ok(KernelKind::Triangular),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "exponential" => Ok(KernelKind::Exponential),
            "cosine" => Ok(KernelKind::Cosine),
            "constant" => Ok(KernelKind::Constant),
            "gaussian" => Err(Error::UnsupportedKernel(
                "gaussian (no exact finite decomposition; use exponential or cosine)".into(),
            )),
            other => Err(Error::UnsupportedKernel(other.to_string())),
        }
    }
}

/// Up to three basis terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms {
    len: usize,
    v: [f64; 3],
}

impl Terms {
    pub fn of(values: &[f64]) -> Self {
        let mut v = [0.0; 3];
        v[..values.len()].copy_from_slice(values);
        Terms { len: values.len(), v }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dot(&self, other: &Terms) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// `u` = query-to-endpoint distance, `v` = endpoint-to-event distance.
    Spatial,
    /// `u` = query time, `v` = event time, restricted to one half.
    Temporal(Half),
}

/// A one-dimensional decomposition of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBasis {
    pub kind: KernelKind,
    pub bandwidth: f64,
    pub role: Role,
    /// Subtracted from both `u` and `v` for temporal bases.
    pub origin: f64,
}

fn check_bandwidth(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("bandwidth must be positive, got {b}")))
    }
}

pub fn spatial_basis(kind: KernelKind, b_s: f64) -> Result<KernelBasis> {
    check_bandwidth(b_s)?;
    Ok(KernelBasis {
        kind,
        bandwidth: b_s,
        role: Role::Spatial,
        origin: 0.0,
    })
}

pub fn temporal_basis(kind: KernelKind, b_t: f64, half: Half) -> Result<KernelBasis> {
    temporal_basis_with_origin(kind, b_t, half, 0.0)
}

pub fn temporal_basis_with_origin(kind: KernelKind, b_t: f64, half: Half, origin: f64) -> Result<KernelBasis> {
    check_bandwidth(b_t)?;
    Ok(KernelBasis {
        kind,
        bandwidth: b_t,
        role: Role::Temporal(half),
        origin,
    })
}

impl KernelBasis {
    pub fn len(&self) -> usize {
        self.kind.term_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn query_terms(&self, u: f64) -> Terms {
        let b = self.bandwidth;
        match self.role {
            Role::Spatial => match self.kind {
                KernelKind::Triangular => Terms::of(&[1.0 - u / b, -1.0 / b]),
                KernelKind::Epanechnikov => {
                    let b2 = b * b;
                    Terms::of(&[1.0 - u * u / b2, -2.0 * u / b2, -1.0 / b2])
                }
                KernelKind::Exponential => Terms::of(&[(-u / b).exp()]),
                KernelKind::Cosine => Terms::of(&[(u / b).cos(), -(u / b).sin()]),
                KernelKind::Constant => Terms::of(&[1.0]),
            },
            Role::Temporal(half) => {
                let t = u - self.origin;
                match (self.kind, half) {
                    (KernelKind::Triangular, Half::Earlier) => Terms::of(&[1.0 - t / b, 1.0 / b]),
                    (KernelKind::Triangular, Half::Later) => Terms::of(&[1.0 + t / b, -1.0 / b]),
                    (KernelKind::Epanechnikov, _) => {
                        let b2 = b * b;
                        Terms::of(&[1.0 - t * t / b2, 2.0 * t / b2, -1.0 / b2])
                    }
                    (KernelKind::Exponential, Half::Earlier) => Terms::of(&[(-t / b).exp()]),
                    (KernelKind::Exponential, Half::Later) => Terms::of(&[(t / b).exp()]),
                    (KernelKind::Cosine, _) => Terms::of(&[(t / b).cos(), (t / b).sin()]),
                    (KernelKind::Constant, _) => Terms::of(&[1.0]),
                }
            }
        }
    }

    pub fn event_terms(&self, v: f64) -> Terms {
        let b = self.bandwidth;
        match self.role {
            Role::Spatial => spatial_event_terms(self.kind, b, v),
            Role::Temporal(half) => temporal_event_terms(self.kind, b, half, v - self.origin),
        }
    }

    /// `sum_k q_k(u) a_k(v)`.
    pub fn evaluate(&self, u: f64, v: f64) -> f64 {
        self.query_terms(u).dot(&self.event_terms(v))
    }
}

fn spatial_event_terms(kind: KernelKind, b: f64, v: f64) -> Terms {
    match kind {
        KernelKind::Triangular => Terms::of(&[1.0, v]),
        KernelKind::Epanechnikov => Terms::of(&[1.0, v, v * v]),
        KernelKind::Exponential => Terms::of(&[(-v / b).exp()]),
        KernelKind::Cosine => Terms::of(&[(v / b).cos(), (v / b).sin()]),
        KernelKind::Constant => Terms::of(&[1.0]),
    }
}

fn temporal_event_terms(kind: KernelKind, b: f64, half: Half, tau: f64) -> Terms {
    match (kind, half) {
        (KernelKind::Triangular, _) => Terms::of(&[1.0, tau]),
        (KernelKind::Epanechnikov, _) => Terms::of(&[1.0, tau, tau * tau]),
        (KernelKind::Exponential, Half::Earlier) => Terms::of(&[(tau / b).exp()]),
        (KernelKind::Exponential, Half::Later) => Terms::of(&[(-tau / b).exp()]),
        (KernelKind::Cosine, _) => Terms::of(&[(tau / b).cos(), (tau / b).sin()]),
        (KernelKind::Constant, _) => Terms::of(&[1.0]),
    }
}

pub const MAX_AGG_DIM: usize = 18;

/// Fixed-capacity vector of accumulated event-side terms.
#[derive(Clone, Copy, PartialEq)]
pub struct AggVector {
    len: usize,
    v: [f64; MAX_AGG_DIM],
}

impl fmt::Debug for AggVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl AggVector {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_AGG_DIM, "aggregate dimension {len} exceeds {MAX_AGG_DIM}");
        AggVector {
            len,
            v: [0.0; MAX_AGG_DIM],
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut out = AggVector::zeros(values.len());
        out.v[..values.len()].copy_from_slice(values);
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.len]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.v[..self.len]
    }

    pub fn is_zero(&self) -> bool {
        self.as_slice().iter().all(|&x| x == 0.0)
    }

    pub fn add_slice(&mut self, other: &[f64]) {
        for (a, b) in self.as_mut_slice().iter_mut().zip(other) {
            *a += b;
        }
    }

    pub fn sub_slice(&mut self, other: &[f64]) {
        for (a, b) in self.as_mut_slice().iter_mut().zip(other) {
            *a -= b;
        }
    }
}

impl AddAssign<&AggVector> for AggVector {
    fn add_assign(&mut self, rhs: &AggVector) {
        debug_assert_eq!(self.len, rhs.len);
        self.add_slice(rhs.as_slice());
    }
}

impl SubAssign<&AggVector> for AggVector {
    fn sub_assign(&mut self, rhs: &AggVector) {
        debug_assert_eq!(self.len, rhs.len);
        self.sub_slice(rhs.as_slice());
    }
}

impl Add for AggVector {
    type Output = AggVector;
    fn add(mut self, rhs: AggVector) -> AggVector {
        self += &rhs;
        self
    }
}

impl Sub for AggVector {
    type Output = AggVector;
    fn sub(mut self, rhs: AggVector) -> AggVector {
        self -= &rhs;
        self
    }
}

/// Spatial x temporal product: `q_ij = q_i q_j`, `a_ij = a_i a_j`, laid out
/// row-major with the spatial index outer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductBasis {
    pub spatial: KernelBasis,
    pub temporal: KernelBasis,
}

pub fn product_basis(spatial: KernelBasis, temporal: KernelBasis) -> ProductBasis {
    ProductBasis { spatial, temporal }
}

fn outer(s: &Terms, t: &Terms) -> AggVector {
    let mut out = AggVector::zeros(s.len() * t.len());
    let mut k = 0;
    for &x in s.as_slice() {
        for &y in t.as_slice() {
            out.v[k] = x * y;
            k += 1;
        }
    }
    out
}

impl ProductBasis {
    pub fn len(&self) -> usize {
        self.spatial.len() * self.temporal.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn query_vector(&self, u: f64, t: f64) -> AggVector {
        outer(&self.spatial.query_terms(u), &self.temporal.query_terms(t))
    }
}

/// Event-side terms of one event under a product basis.
pub fn event_term(basis: &ProductBasis, v: f64, t_i: f64) -> AggVector {
    outer(&basis.spatial.event_terms(v), &basis.temporal.event_terms(t_i))
}

/// `Q(u, t) . A`.
pub fn eval_density(basis: &ProductBasis, u: f64, t: f64, agg: &AggVector) -> Result<f64> {
    if agg.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            actual: agg.len(),
        });
    }
    let q = basis.query_vector(u, t);
    Ok(q.as_slice().iter().zip(agg.as_slice()).map(|(a, b)| a * b).sum())
}

/// The pair of kernels applied to every query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelConfig {
    pub spatial: KernelKind,
    pub temporal: KernelKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            spatial: KernelKind::Triangular,
            temporal: KernelKind::Triangular,
        }
    }
}

impl KernelConfig {
    /// Direct (non-decomposed) product `K_s(d / b_s) K_t(|dt| / b_t)`, zero
    /// outside either bandwidth.
    #[inline]
    pub fn weight(&self, distance: f64, b_s: f64, time_gap: f64, b_t: f64) -> f64 {
        if distance > b_s || time_gap > b_t {
            return 0.0;
        }
        self.spatial.evaluate(distance / b_s) * self.temporal.evaluate(time_gap / b_t)
    }
}

/// Endpoint of a target edge from which event distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Distances are the offsets themselves.
    Start,
    /// Distances are `length - offset`.
    End,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Start, Side::End];
}

/// Event-side layout shared by every aggregation index: one block per side
/// of the edge, each a spatial x temporal product. When the temporal event
/// terms differ between halves (exponential), both variants are stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggLayout {
    pub kernels: KernelConfig,
    /// Bandwidths baked into event terms; `None` for polynomial kinds.
    pub spatial_bandwidth: Option<f64>,
    pub temporal_bandwidth: Option<f64>,
    /// Timestamp subtracted before evaluating temporal terms.
    pub time_origin: i64,
}

impl AggLayout {
    pub fn new(kernels: KernelConfig, b_s: f64, b_t: f64, time_origin: i64) -> Self {
        AggLayout {
            kernels,
            spatial_bandwidth: (!kernels.spatial.is_polynomial()).then_some(b_s),
            temporal_bandwidth: (!kernels.temporal.is_polynomial()).then_some(b_t),
            time_origin,
        }
    }

    /// Whether an index with this layout answers queries at these bandwidths.
    pub fn accepts(&self, kernels: &KernelConfig, b_s: f64, b_t: f64) -> bool {
        self.kernels == *kernels
            && self.spatial_bandwidth.is_none_or(|b| b == b_s)
            && self.temporal_bandwidth.is_none_or(|b| b == b_t)
    }

    fn split_halves(&self) -> bool {
        self.kernels.temporal == KernelKind::Exponential
    }

    fn temporal_slots(&self) -> usize {
        let t = self.kernels.temporal.term_count();
        if self.split_halves() {
            2 * t
        } else {
            t
        }
    }

    pub fn side_dim(&self) -> usize {
        self.kernels.spatial.term_count() * self.temporal_slots()
    }

    pub fn dim(&self) -> usize {
        2 * self.side_dim()
    }

    pub fn block_offset(&self, side: Side) -> usize {
        match side {
            Side::Start => 0,
            Side::End => self.side_dim(),
        }
    }

    fn event_bases(&self) -> (KernelBasis, KernelBasis, KernelBasis) {
        let b_s = self.spatial_bandwidth.unwrap_or(1.0);
        let b_t = self.temporal_bandwidth.unwrap_or(1.0);
        let sp = KernelBasis {
            kind: self.kernels.spatial,
            bandwidth: b_s,
            role: Role::Spatial,
            origin: 0.0,
        };
        let tb = |half| KernelBasis {
            kind: self.kernels.temporal,
            bandwidth: b_t,
            role: Role::Temporal(half),
            origin: 0.0,
        };
        (sp, tb(Half::Earlier), tb(Half::Later))
    }

    fn temporal_event_slots(&self, timestamp: i64) -> Terms {
        let (_, early, late) = self.event_bases();
        let tau = (timestamp - self.time_origin) as f64;
        let e = early.event_terms(tau);
        if self.split_halves() {
            let l = late.event_terms(tau);
            let mut all = [0.0; 3];
            all[0] = e.as_slice()[0];
            all[1] = l.as_slice()[0];
            Terms::of(&all[..2])
        } else {
            e
        }
    }

    /// Event-side vector of one event at `offset` on an edge of `length`.
    pub fn event_vector(&self, offset: f64, length: f64, timestamp: i64) -> AggVector {
        let (sp, _, _) = self.event_bases();
        let t = self.temporal_event_slots(timestamp);
        let start = outer(&sp.event_terms(offset), &t);
        let end = outer(&sp.event_terms(length - offset), &t);
        let mut out = AggVector::zeros(self.dim());
        out.v[..start.len()].copy_from_slice(start.as_slice());
        out.v[start.len()..start.len() + end.len()].copy_from_slice(end.as_slice());
        out
    }

    /// Query-side bases for a concrete query.
    pub fn query_bases(&self, b_s: f64, b_t: f64, half: Half) -> Result<ProductBasis> {
        let sp = spatial_basis(self.kernels.spatial, b_s)?;
        let tb = temporal_basis_with_origin(self.kernels.temporal, b_t, half, self.time_origin as f64)?;
        Ok(product_basis(sp, tb))
    }

    /// Temporal query coefficients for one half, padded to the slot layout.
    pub fn temporal_query(&self, basis: &KernelBasis, t: i64, half: Half) -> Terms {
        let q = basis.query_terms(t as f64);
        if self.split_halves() {
            match half {
                Half::Earlier => Terms::of(&[q.as_slice()[0], 0.0]),
                Half::Later => Terms::of(&[0.0, q.as_slice()[0]]),
            }
        } else {
            q
        }
    }

    /// `Q . A[side]` with precomputed spatial and temporal query terms.
    #[inline]
    pub fn dot_side(&self, spatial_q: &Terms, temporal_q: &Terms, agg: &AggVector, side: Side) -> f64 {
        let block = &agg.as_slice()[self.block_offset(side)..self.block_offset(side) + self.side_dim()];
        let tl = temporal_q.len();
        let mut sum = 0.0;
        for (i, &qs) in spatial_q.as_slice().iter().enumerate() {
            let row = &block[i * tl..(i + 1) * tl];
            let mut inner = 0.0;
            for (qt, a) in temporal_q.as_slice().iter().zip(row) {
                inner += qt * a;
            }
            sum += qs * inner;
        }
        sum
    }

    /// Sum over the side's block of the constant-spatial-term row dotted
    /// with the temporal coefficients (used for linear-in-distance kernels).
    pub fn temporal_mass(&self, temporal_q: &Terms, agg: &AggVector, side: Side) -> f64 {
        let block = &agg.as_slice()[self.block_offset(side)..];
        temporal_q.as_slice().iter().zip(block).map(|(q, a)| q * a).sum()
    }

    /// Temporal mass of the spatial row `row` of a side block.
    pub fn spatial_row_mass(&self, row: usize, temporal_q: &Terms, agg: &AggVector, side: Side) -> f64 {
        let tl = temporal_q.len();
        let start = self.block_offset(side) + row * tl;
        let block = &agg.as_slice()[start..start + tl];
        temporal_q.as_slice().iter().zip(block).map(|(q, a)| q * a).sum()
    }
}
