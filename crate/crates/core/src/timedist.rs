//! Random evolution-time distributions.
//!
//! Each distribution knows its characteristic function `Φ(ω) = E[e^{iωT}]`,
//! its cost `⟨|T|⟩`, and how to draw samples from an explicit random stream.

use std::f64::consts::{LN_2, PI, SQRT_2};

use once_cell::sync::Lazy;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::C64;
use crate::quad;

/// Slack used by the inequality checks.
pub const CHECK_SLACK: f64 = 1e-9;

/// Serializable description of a distribution: `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DistSpec {
    PointMass {
        t: f64,
    },
    TwoPoint {
        omega1: f64,
    },
    /// Independent sum of `two_point(ω_j)` over the listed gaps.
    MultiGap {
        gaps: Vec<f64>,
    },
    Sinc4 {
        lambda: f64,
    },
    UniformInt {
        q: u64,
        #[serde(default)]
        shift: i64,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        shift: f64,
        #[serde(default)]
        conditioned: bool,
    },
    Binomial {
        m: u64,
        #[serde(default)]
        shift: i64,
    },
    Exponential {
        rate: f64,
    },
    CompactOptimal {
        delta: f64,
    },
    Repeated {
        base: Box<DistSpec>,
        n: u64,
    },
    IntegerDiscretized {
        base: Box<DistSpec>,
    },
}

impl DistSpec {
    pub fn build(&self) -> Result<TimeDistribution> {
        TimeDistribution::from_spec(self.clone())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DistSpec::PointMass { .. } => "point_mass",
            DistSpec::TwoPoint { .. } => "two_point",
            DistSpec::MultiGap { .. } => "multi_gap",
            DistSpec::Sinc4 { .. } => "sinc4",
            DistSpec::UniformInt { .. } => "uniform_int",
            DistSpec::Gaussian { .. } => "gaussian",
            DistSpec::Binomial { .. } => "binomial",
            DistSpec::Exponential { .. } => "exponential",
            DistSpec::CompactOptimal { .. } => "compact_optimal",
            DistSpec::Repeated { .. } => "repeated",
            DistSpec::IntegerDiscretized { .. } => "integer_discretized",
        }
    }
}

/// Where the samples of a distribution live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    NonnegativeReal,
    Integer,
    NonnegativeInteger,
}

impl Support {
    pub fn is_nonnegative(self) -> bool {
        matches!(self, Support::NonnegativeReal | Support::NonnegativeInteger)
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Support::Integer | Support::NonnegativeInteger)
    }

    fn with_sign(integer: bool, nonnegative: bool) -> Support {
        match (integer, nonnegative) {
            (true, true) => Support::NonnegativeInteger,
            (true, false) => Support::Integer,
            (false, true) => Support::NonnegativeReal,
            (false, false) => Support::Real,
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    PointMass(f64),
    TwoPoint(f64),
    MultiGap(Vec<f64>),
    Sinc4(f64),
    UniformInt { q: u64, shift: i64 },
    Gaussian { sigma: f64, shift: f64 },
    Conditioned { sigma: f64, shift: f64, z: f64 },
    Binomial { m: u64, shift: i64 },
    Exponential(f64),
    CompactOptimal(f64),
    Repeated(Box<TimeDistribution>, u64),
    Lattice(Lattice),
}

/// Probability table on consecutive integers starting at `offset`.
#[derive(Debug, Clone)]
struct Lattice {
    offset: i64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Lattice {
    fn new(offset: i64, probs: Vec<f64>) -> Lattice {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p.max(0.0);
                acc
            })
            .collect();
        Lattice { offset, probs, cdf }
    }

    fn char_fn(&self, omega: f64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (i, p) in self.probs.iter().enumerate() {
            if *p != 0.0 {
                s += C64::from_polar(*p, omega * (self.offset + i as i64) as f64);
            }
        }
        s
    }

    fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * g((self.offset + i as i64) as f64)).sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|c| *c <= u).min(self.probs.len() - 1);
        (self.offset + i as i64) as f64
    }
}

/// An immutable evolution-time distribution.
#[derive(Debug, Clone)]
pub struct TimeDistribution {
    spec: DistSpec,
    repr: Repr,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}

impl TimeDistribution {
    pub fn from_spec(spec: DistSpec) -> Result<Self> {
        let repr = match &spec {
            DistSpec::PointMass { t } => {
                if !t.is_finite() {
                    return Err(Error::param("point mass location must be finite"));
                }
                Repr::PointMass(*t)
            }
            DistSpec::TwoPoint { omega1 } => Repr::TwoPoint(positive("omega1", *omega1)?),
            DistSpec::MultiGap { gaps } => {
                if gaps.is_empty() {
                    return Err(Error::param("multi_gap needs at least one gap"));
                }
                for g in gaps {
                    positive("gap", *g)?;
                }
                Repr::MultiGap(gaps.clone())
            }
            DistSpec::Sinc4 { lambda } => Repr::Sinc4(positive("lambda", *lambda)?),
            DistSpec::UniformInt { q, shift } => {
                if *q == 0 {
                    return Err(Error::param("uniform_int needs Q >= 1"));
                }
                Repr::UniformInt { q: *q, shift: *shift }
            }
            DistSpec::Gaussian { sigma, shift, conditioned } => {
                let sigma = positive("sigma", *sigma)?;
                if !shift.is_finite() {
                    return Err(Error::param("gaussian shift must be finite"));
                }
                if *conditioned {
                    if *shift <= 0.0 {
                        return Err(Error::param(format!("conditioning needs a positive shift, got {shift}")));
                    }
                    Repr::Conditioned { sigma, shift: *shift, z: normal_cdf(shift / sigma) }
                } else {
                    Repr::Gaussian { sigma, shift: *shift }
                }
            }
            DistSpec::Binomial { m, shift } => Repr::Binomial { m: *m, shift: *shift },
            DistSpec::Exponential { rate } => Repr::Exponential(positive("rate", *rate)?),
            DistSpec::CompactOptimal { delta } => Repr::CompactOptimal(positive("delta", *delta)?),
            DistSpec::Repeated { base, n } => {
                if *n == 0 {
                    return Err(Error::param("repeat count must be at least 1"));
                }
                Repr::Repeated(Box::new(base.build()?), *n)
            }
            DistSpec::IntegerDiscretized { base } => {
                let b = base.build()?;
                return discretize_to_integers(&b);
            }
        };
        Ok(TimeDistribution { spec, repr })
    }

    pub fn spec(&self) -> &DistSpec {
        &self.spec
    }

    pub fn point_mass(t: f64) -> Result<Self> {
        DistSpec::PointMass { t }.build()
    }

    pub fn two_point(omega1: f64) -> Result<Self> {
        DistSpec::TwoPoint { omega1 }.build()
    }

    pub fn multi_gap(gaps: &[f64]) -> Result<Self> {
        DistSpec::MultiGap { gaps: gaps.to_vec() }.build()
    }

    pub fn sinc4(lambda: f64) -> Result<Self> {
        DistSpec::Sinc4 { lambda }.build()
    }

    pub fn uniform_int(q: u64, shift: i64) -> Result<Self> {
        DistSpec::UniformInt { q, shift }.build()
    }

    pub fn gaussian(sigma: f64, shift: f64) -> Result<Self> {
        DistSpec::Gaussian { sigma, shift, conditioned: false }.build()
    }

    pub fn binomial(m: u64, shift: i64) -> Result<Self> {
        DistSpec::Binomial { m, shift }.build()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        DistSpec::Exponential { rate }.build()
    }

    pub fn support(&self) -> Support {
        match &self.repr {
            Repr::PointMass(t) => Support::with_sign(t.fract() == 0.0, *t >= 0.0),
            Repr::TwoPoint(_) | Repr::MultiGap(_) | Repr::Exponential(_) | Repr::Conditioned { .. } => Support::NonnegativeReal,
            Repr::Sinc4(_) | Repr::Gaussian { .. } | Repr::CompactOptimal(_) => Support::Real,
            Repr::UniformInt { shift, .. } => Support::with_sign(true, *shift >= 0),
            Repr::Binomial { m, shift } => Support::with_sign(true, *shift >= *m as i64),
            Repr::Repeated(b, _) => b.support(),
            Repr::Lattice(l) => {
                let first = l.probs.iter().position(|p| *p != 0.0).unwrap_or(0) as i64;
                Support::with_sign(true, l.offset + first >= 0)
            }
        }
    }

    /// Characteristic function `Φ(ω) = E[e^{iωT}]`.
    pub fn char_fn(&self, omega: f64) -> C64 {
        match &self.repr {
            Repr::PointMass(t) => C64::from_polar(1.0, omega * t),
            Repr::TwoPoint(w1) => two_point_phi(*w1, omega),
            Repr::MultiGap(gaps) => gaps.iter().map(|w| two_point_phi(*w, omega)).product(),
            Repr::Sinc4(l) => C64::new(sinc4_phi(*l, omega), 0.0),
            Repr::UniformInt { q, shift } => uniform_int_phi(*q, *shift, omega),
            Repr::Gaussian { sigma, shift } => C64::from_polar((-0.5 * (sigma * omega).powi(2)).exp(), omega * shift),
            Repr::Conditioned { sigma, shift, z } => conditioned_phi(*sigma, *shift, *z, omega),
            Repr::Binomial { m, shift } => C64::from_polar((0.5 * omega).cos().powi(2).powf(*m as f64), omega * *shift as f64),
            Repr::Exponential(rate) => C64::new(1.0, 0.0) / C64::new(1.0, -omega / rate),
            Repr::CompactOptimal(delta) => C64::new(compact_phi1(omega / delta), 0.0),
            Repr::Repeated(b, n) => pow_c(b.char_fn(omega), *n),
            Repr::Lattice(l) => l.char_fn(omega),
        }
    }

    /// Mean `⟨T⟩`.
    pub fn mean(&self) -> f64 {
        match &self.repr {
            Repr::PointMass(t) => *t,
            Repr::TwoPoint(w1) => PI / (2.0 * w1),
            Repr::MultiGap(gaps) => gaps.iter().map(|w| PI / (2.0 * w)).sum(),
            Repr::Sinc4(_) | Repr::CompactOptimal(_) => 0.0,
            Repr::UniformInt { q, shift } => *shift as f64 + (*q as f64 - 1.0) / 2.0,
            Repr::Gaussian { shift, .. } => *shift,
            Repr::Conditioned { sigma, shift, z } => shift + sigma * normal_pdf(shift / sigma) / z,
            Repr::Binomial { shift, .. } => *shift as f64,
            Repr::Exponential(rate) => 1.0 / rate,
            Repr::Repeated(b, n) => *n as f64 * b.mean(),
            Repr::Lattice(l) => l.expect(|k| k),
        }
    }

    /// Cost `⟨|T|⟩`.
    pub fn mean_abs_cost(&self) -> f64 {
        if self.support().is_nonnegative() {
            return self.mean();
        }
        match &self.repr {
            Repr::PointMass(t) => t.abs(),
            Repr::Sinc4(l) => 3.0 * LN_2 / (PI * l),
            Repr::UniformInt { q, shift } => (0..*q).map(|j| (j as i64 + shift).abs() as f64).sum::<f64>() / *q as f64,
            Repr::Gaussian { sigma, shift } => gaussian_abs_mean(*sigma, *shift),
            Repr::Binomial { m, shift } => binomial_pmf(*m)
                .iter()
                .enumerate()
                .map(|(k, p)| p * (k as i64 - *m as i64 + shift).abs() as f64)
                .sum(),
            Repr::CompactOptimal(delta) => COMPACT.cost / delta,
            Repr::Lattice(l) => l.expect(f64::abs),
            Repr::Repeated(b, n) => repeated_cost(b, *n),
            _ => unreachable!("nonnegative kinds return their mean"),
        }
    }

    /// Frequency beyond which `Φ` vanishes identically, if any.
    pub fn compact_support(&self) -> Option<f64> {
        match &self.repr {
            Repr::Sinc4(l) => Some(4.0 * l),
            Repr::CompactOptimal(d) => Some(*d),
            Repr::Repeated(b, _) => b.compact_support(),
            _ => None,
        }
    }

    /// Probability table `(offset, probs)` for integer-valued distributions.
    pub fn pmf(&self) -> Option<(i64, Vec<f64>)> {
        match &self.repr {
            Repr::PointMass(t) if t.fract() == 0.0 => Some((*t as i64, vec![1.0])),
            Repr::UniformInt { q, shift } => Some((*shift, vec![1.0 / *q as f64; *q as usize])),
            Repr::Binomial { m, shift } => Some((shift - *m as i64, binomial_pmf(*m))),
            Repr::Lattice(l) => Some((l.offset, l.probs.clone())),
            Repr::Repeated(b, n) => b.pmf().map(|(o, p)| (o * *n as i64, pmf_power(&p, *n))),
            _ => None,
        }
    }

    /// Density at `t` for the continuous kinds that have one in closed form.
    pub fn density(&self, t: f64) -> Option<f64> {
        match &self.repr {
            Repr::Sinc4(l) => Some(3.0 * l / (2.0 * PI) * sinc(l * t).powi(4)),
            Repr::CompactOptimal(d) => Some(d * compact_density1(d * t)),
            Repr::Gaussian { sigma, shift } => Some(normal_pdf((t - shift) / sigma) / sigma),
            Repr::Conditioned { sigma, shift, z } => Some(if t > 0.0 { normal_pdf((t - shift) / sigma) / (sigma * z) } else { 0.0 }),
            Repr::Exponential(rate) => Some(if t >= 0.0 { rate * (-rate * t).exp() } else { 0.0 }),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.repr {
            Repr::PointMass(t) => *t,
            Repr::TwoPoint(w1) => {
                if rng.random::<bool>() {
                    PI / w1
                } else {
                    0.0
                }
            }
            Repr::MultiGap(gaps) => gaps.iter().map(|w| if rng.random::<bool>() { PI / w } else { 0.0 }).sum(),
            Repr::Sinc4(l) => sample_sinc4(rng) / l,
            Repr::UniformInt { q, shift } => (rng.random_range(0..*q) as i64 + shift) as f64,
            Repr::Gaussian { sigma, shift } => shift + sigma * rng.sample::<f64, _>(StandardNormal),
            Repr::Conditioned { sigma, shift, .. } => {
                let normal = Normal::new(*shift, *sigma).expect("validated parameters");
                loop {
                    let t = normal.sample(rng);
                    if t > 0.0 {
                        break t;
                    }
                }
            }
            Repr::Binomial { m, shift } => {
                let b = rand_distr::Binomial::new(2 * m, 0.5).expect("valid binomial");
                (b.sample(rng) as i64 - *m as i64 + shift) as f64
            }
            Repr::Exponential(rate) => Exp::new(*rate).expect("validated rate").sample(rng),
            Repr::CompactOptimal(d) => sample_compact1(rng) / d,
            Repr::Repeated(b, n) => (0..*n).map(|_| b.sample(rng)).sum(),
            Repr::Lattice(l) => l.sample(rng),
        }
    }

    pub fn samples<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// `sup_j |Φ(ω_j)|` over the supplied gaps.
    pub fn dephasing_error(&self, gaps: &[f64]) -> Result<f64> {
        check_gaps(gaps)?;
        Ok(gaps.iter().map(|w| self.char_fn(*w).norm()).fold(0.0, f64::max))
    }

    /// Error bound charged to one randomized measurement: the dephasing error,
    /// except for conditioned Gaussians, where the unconditioned Gaussian's
    /// dephasing plus the conditioning penalty `e^{−x²/(2σ²)}` is reported.
    pub fn error_bound(&self, gaps: &[f64]) -> Result<f64> {
        check_gaps(gaps)?;
        let (phi, penalty) = self.bound_parts(gaps);
        Ok(phi + penalty)
    }

    fn bound_parts(&self, gaps: &[f64]) -> (f64, f64) {
        match &self.repr {
            Repr::Conditioned { sigma, shift, .. } => {
                let sup = gaps.iter().map(|w| (-0.5 * (sigma * w).powi(2)).exp()).fold(0.0, f64::max);
                (sup, conditioning_penalty(*sigma, *shift))
            }
            Repr::Repeated(b, n) => {
                let (phi, pen) = b.bound_parts(gaps);
                (phi.powf(*n as f64), *n as f64 * pen)
            }
            _ => (gaps.iter().map(|w| self.char_fn(*w).norm()).fold(0.0, f64::max), 0.0),
        }
    }

    /// Largest `|Φ(ω)|` over `Δ ≤ |ω| ≤ omega_max` on a grid of `points` frequencies.
    pub fn sup_beyond(&self, delta: f64, omega_max: f64, points: usize) -> f64 {
        if let Some(w) = self.compact_support() {
            if delta >= w {
                return 0.0;
            }
        }
        let points = points.max(2);
        (0..points)
            .map(|i| delta + (omega_max - delta) * i as f64 / (points - 1) as f64)
            .map(|w| self.char_fn(w).norm())
            .fold(0.0, f64::max)
    }

    /// Short human-readable label, e.g. `sinc4(lambda=0.5)`.
    pub fn label(&self) -> String {
        spec_label(&self.spec)
    }
}

fn spec_label(spec: &DistSpec) -> String {
    match spec {
        DistSpec::PointMass { t } => format!("point_mass(t={t})"),
        DistSpec::TwoPoint { omega1 } => format!("two_point(omega1={omega1})"),
        DistSpec::MultiGap { gaps } => format!("multi_gap({} gaps)", gaps.len()),
        DistSpec::Sinc4 { lambda } => format!("sinc4(lambda={lambda})"),
        DistSpec::UniformInt { q, shift } => format!("uniform_int(Q={q},shift={shift})"),
        DistSpec::Gaussian { sigma, shift, conditioned } => {
            format!("gaussian(sigma={sigma},shift={shift}{})", if *conditioned { ",conditioned" } else { "" })
        }
        DistSpec::Binomial { m, shift } => format!("binomial(m={m},shift={shift})"),
        DistSpec::Exponential { rate } => format!("exponential(rate={rate})"),
        DistSpec::CompactOptimal { delta } => format!("compact_optimal(delta={delta})"),
        DistSpec::Repeated { base, n } => format!("repeated({},n={n})", spec_label(base)),
        DistSpec::IntegerDiscretized { base } => format!("integer_discretized({})", spec_label(base)),
    }
}

fn check_gaps(gaps: &[f64]) -> Result<()> {
    if gaps.is_empty() {
        return Err(Error::param("gap list is empty"));
    }
    if let Some(g) = gaps.iter().find(|g| **g == 0.0 || !g.is_finite()) {
        return Err(Error::param(format!("gaps must be nonzero and finite, got {g}")));
    }
    Ok(())
}

fn pow_c(z: C64, n: u64) -> C64 {
    if n <= i32::MAX as u64 {
        z.powi(n as i32)
    } else {
        z.powf(n as f64)
    }
}

fn two_point_phi(w1: f64, omega: f64) -> C64 {
    (C64::new(1.0, 0.0) + C64::from_polar(1.0, PI * omega / w1)) * 0.5
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// Cubic B-spline on [-2, 2], the four-fold self-convolution of the unit box.
fn cubic_bspline(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

fn sinc4_phi(lambda: f64, omega: f64) -> f64 {
    1.5 * cubic_bspline(omega / (2.0 * lambda))
}

/// Upper bound of `sinc(x)^4 (1 + x²)` (attained near x ≈ 0.674, value 1.0692).
const SINC4_ENVELOPE: f64 = 1.07;

/// Standard sinc⁴ variate (λ = 1) by rejection from a Cauchy proposal.
fn sample_sinc4<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x = (PI * (rng.random::<f64>() - 0.5)).tan();
        let u: f64 = rng.random();
        if u * SINC4_ENVELOPE <= sinc(x).powi(4) * (1.0 + x * x) {
            return x;
        }
    }
}

fn uniform_int_phi(q: u64, shift: i64, omega: f64) -> C64 {
    let qf = q as f64;
    let centre = shift as f64 + (qf - 1.0) / 2.0;
    let half = 0.5 * omega;
    let den = half.sin();
    let ratio = if den.abs() > 1e-6 {
        (qf * half).sin() / (qf * den)
    } else {
        // near a multiple of 2π: sum directly about the nearest one
        let k = (omega / (2.0 * PI)).round();
        let r = omega - 2.0 * PI * k;
        let direct: C64 = (0..q).map(|j| C64::from_polar(1.0, r * (j as f64 - (qf - 1.0) / 2.0))).sum::<C64>() / qf;
        let sign = if (k as i64 * (q as i64 - 1)).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        return C64::from_polar(1.0, omega * centre) * direct.re * sign;
    };
    C64::from_polar(1.0, omega * centre) * ratio
}

fn binomial_pmf(m: u64) -> Vec<f64> {
    let n = 2 * m;
    let lg = |k: u64| libm::lgamma(k as f64 + 1.0);
    (0..=n).map(|k| (lg(n) - lg(k) - lg(n - k) - n as f64 * LN_2).exp()).collect()
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E|X|` for `X ~ N(shift, σ²)`.
fn gaussian_abs_mean(sigma: f64, shift: f64) -> f64 {
    sigma * (2.0 / PI).sqrt() * (-shift * shift / (2.0 * sigma * sigma)).exp() + shift * (1.0 - 2.0 * normal_cdf(-shift / sigma))
}

/// Penalty for conditioning `N(x, σ²)` on positive outcomes.
pub fn conditioning_penalty(sigma: f64, shift: f64) -> f64 {
    (-shift * shift / (2.0 * sigma * sigma)).exp()
}

/// `∫_{−∞}^{z} φ(u) e^{iku} du` for the standard normal density φ.
fn normal_tail_transform(z: f64, k: f64) -> C64 {
    if z < -38.0 {
        return C64::new(0.0, 0.0);
    }
    if k.abs() >= 40.0 + 2.0 * z.abs() {
        // repeated integration by parts; converges quickly in this regime
        let ik = C64::new(0.0, k);
        let (mut he_prev, mut he) = (0.0, 1.0);
        let mut ikpow = ik;
        let mut sum = C64::new(0.0, 0.0);
        for n in 0..80 {
            let term = he / ikpow;
            sum += term;
            if term.norm() < 1e-18 * sum.norm().max(1e-300) {
                break;
            }
            let next = z * he - n as f64 * he_prev;
            he_prev = he;
            he = next;
            ikpow *= ik;
        }
        return C64::from_polar(normal_pdf(z), k * z) * sum;
    }
    let lo = z.min(0.0) - 12.0;
    let panels = (16.0f64).max(((z - lo) * k.abs() / PI).ceil()) as usize;
    quad::integrate_c(|u| C64::from_polar(normal_pdf(u), k * u), lo, z, panels)
}

fn conditioned_phi(sigma: f64, shift: f64, z: f64, omega: f64) -> C64 {
    let a = shift / sigma;
    let k = sigma * omega;
    let full = C64::new((-0.5 * k * k).exp(), 0.0);
    C64::from_polar(1.0, omega * shift) * (full - normal_tail_transform(-a, k)) / z
}

/// `n`-fold self-convolution of a probability table.
fn pmf_power(p: &[f64], n: u64) -> Vec<f64> {
    let mut result = vec![1.0];
    let mut base = p.to_vec();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve(&result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = convolve(&base, &base);
        }
    }
    result
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn repeated_cost(base: &TimeDistribution, n: u64) -> f64 {
    match &base.repr {
        Repr::Repeated(b, m) => return repeated_cost(b, n * m),
        Repr::Gaussian { sigma, shift } => return gaussian_abs_mean(sigma * (n as f64).sqrt(), shift * n as f64),
        Repr::PointMass(t) => return n as f64 * t.abs(),
        _ => {}
    }
    if let Some((offset, p)) = base.pmf() {
        let q = pmf_power(&p, n);
        let off = offset * n as i64;
        return q.iter().enumerate().map(|(i, p)| p * (off + i as i64).abs() as f64).sum();
    }
    let w = base.compact_support().expect("signed non-lattice kinds have compact Φ");
    phi_cost(|omega| pow_c(base.char_fn(omega), n).re, w)
}

/// `⟨|T|⟩ = (2/π)[∫_0^W (1 − Re Φ)/ω² dω + 1/W]` for `Φ` vanishing beyond `W`.
fn phi_cost(re_phi: impl Fn(f64) -> f64, w: f64) -> f64 {
    let body = quad::integrate(|omega| (1.0 - re_phi(omega)) / (omega * omega), 0.0, w, 256);
    2.0 / PI * (body + 1.0 / w)
}

// ---- compact_optimal tables -------------------------------------------------

/// Grid nodes per unit frequency for the self-convolution (2^16 over [−2, 2]).
const PHI_PER_UNIT: usize = 16384;
/// Coarser bump grid used for the density's cosine transform.
const DENSITY_STRIDE: usize = 4;
const DENSITY_DT: f64 = 0.02;
const DENSITY_TMAX: f64 = 320.0;
/// Beyond this |t| the unit-gap density is below 1e-18.
const DISCRETIZE_TMAX: f64 = 400.0;

struct CompactTables {
    /// `Φ_1(i / PHI_PER_UNIT)` for `i = 0..=PHI_PER_UNIT`.
    phi: Vec<f64>,
    /// `ĥ(j / PHI_PER_UNIT)` for `j = 0..=PHI_PER_UNIT / 2`.
    bump: Vec<f64>,
    /// `∫ ĥ²`.
    bump_sq: f64,
    /// Cumulative distribution of |T| on `t = i·DENSITY_DT`.
    cdf: Vec<f64>,
    /// Trapezoid mass of the tabulated density before normalization.
    mass: f64,
    cost: f64,
}

fn bump(w: f64) -> f64 {
    let x = 2.0 * w;
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

static COMPACT: Lazy<CompactTables> = Lazy::new(|| {
    let n = PHI_PER_UNIT;
    let half = n / 2;
    let d = 1.0 / n as f64;
    let bump_tab: Vec<f64> = (0..=half).map(|j| bump(j as f64 * d)).collect();
    let hh = |j: i64| -> f64 {
        let a = j.unsigned_abs() as usize;
        if a > half {
            0.0
        } else {
            bump_tab[a]
        }
    };
    let mut phi = vec![0.0; n + 1];
    for (i, slot) in phi.iter_mut().enumerate() {
        let i = i as i64;
        let mut s = 0.0;
        for j in (i - half as i64)..=(half as i64) {
            s += hh(j) * hh(i - j);
        }
        *slot = s * d;
    }
    let bump_sq = phi[0];
    for v in phi.iter_mut() {
        *v /= bump_sq;
    }
    let steps = (DENSITY_TMAX / DENSITY_DT).round() as usize;
    let dens: Vec<f64> = (0..=steps).map(|i| 2.0 * density1_from(&bump_tab, bump_sq, i as f64 * DENSITY_DT)).collect();
    let mut cdf = vec![0.0; steps + 1];
    for i in 1..=steps {
        cdf[i] = cdf[i - 1] + 0.5 * DENSITY_DT * (dens[i - 1] + dens[i]);
    }
    let mass = cdf[steps];
    for c in cdf.iter_mut() {
        *c /= mass;
    }
    let mut t = CompactTables { phi, bump: bump_tab, bump_sq, cdf, mass, cost: 0.0 };
    t.cost = phi_cost(|w| phi1_interp(&t.phi, w), 1.0);
    t
});

/// Unit-gap density `f_1(t) = 2π h(t)² / ∫ĥ²` with `h` the inverse transform of the bump.
fn density1_from(bump_tab: &[f64], bump_sq: f64, t: f64) -> f64 {
    let dw = DENSITY_STRIDE as f64 / PHI_PER_UNIT as f64;
    let step = C64::from_polar(1.0, dw * t);
    let mut rot = C64::new(1.0, 0.0);
    let mut s = 0.5 * bump_tab[0];
    let count = (bump_tab.len() - 1) / DENSITY_STRIDE;
    for j in 1..=count {
        rot = if j % 256 == 0 { C64::from_polar(1.0, j as f64 * dw * t) } else { rot * step };
        s += bump_tab[j * DENSITY_STRIDE] * rot.re;
    }
    let h = s * dw / PI;
    2.0 * PI * h * h / bump_sq
}

fn phi1_interp(phi: &[f64], omega: f64) -> f64 {
    let n = PHI_PER_UNIT;
    let x = omega.abs() * n as f64;
    if x >= n as f64 {
        return 0.0;
    }
    let i = x.floor() as i64;
    let p = x - i as f64;
    let at = |k: i64| -> f64 {
        let a = k.unsigned_abs() as usize;
        if a > n {
            0.0
        } else {
            phi[a]
        }
    };
    let w = [
        -p * (p - 1.0) * (p - 2.0) / 6.0,
        (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0,
        -(p + 1.0) * p * (p - 2.0) / 2.0,
        (p + 1.0) * p * (p - 1.0) / 6.0,
    ];
    w[0] * at(i - 1) + w[1] * at(i) + w[2] * at(i + 1) + w[3] * at(i + 2)
}

fn compact_phi1(omega: f64) -> f64 {
    phi1_interp(&COMPACT.phi, omega)
}

fn compact_density1(t: f64) -> f64 {
    let c = &*COMPACT;
    density1_from(&c.bump, c.bump_sq, t)
}

fn sample_compact1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let cdf = &COMPACT.cdf;
    let u: f64 = rng.random();
    let i = cdf.partition_point(|c| *c < u).clamp(1, cdf.len() - 1);
    let (c0, c1) = (cdf[i - 1], cdf[i]);
    let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
    let t = ((i - 1) as f64 + frac) * DENSITY_DT;
    if rng.random::<bool>() {
        t
    } else {
        -t
    }
}

/// Unit-gap cost `⟨|T|⟩_1` of the compact-support construction.
pub fn compact_optimal_unit_cost() -> f64 {
    COMPACT.cost
}

/// Trapezoid mass of the tabulated unit-gap density over `[−T_max, T_max]`.
pub fn compact_optimal_grid_mass() -> f64 {
    COMPACT.mass
}

/// Minimum of the tabulated unit-gap density.
pub fn compact_optimal_grid_min() -> f64 {
    let steps = (DENSITY_TMAX / DENSITY_DT).round() as usize;
    (0..=steps).map(|i| compact_density1(i as f64 * DENSITY_DT)).fold(f64::INFINITY, f64::min)
}

/// `E|T|^k` of the unit-gap construction truncated to `|t| ≤ t_max`.
pub fn compact_optimal_abs_moment(k: i32, t_max: f64) -> f64 {
    2.0 * quad::integrate(|t| t.powi(k) * compact_density1(t), 0.0, t_max, (t_max * 2.0).ceil() as usize)
}

// ---- distribution-level operations -------------------------------------------

pub fn char_fn(dist: &TimeDistribution, omega: f64) -> C64 {
    dist.char_fn(omega)
}

pub fn dephasing_error(dist: &TimeDistribution, gaps: &[f64]) -> Result<f64> {
    dist.dephasing_error(gaps)
}

pub fn mean_abs_cost(dist: &TimeDistribution) -> f64 {
    dist.mean_abs_cost()
}

/// Cost against the lower bound `(1 − |Φ(ω)|)/|ω|`.
pub fn cost_lower_bound_check(dist: &TimeDistribution, omega: f64) -> Result<(f64, f64, bool)> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::param("cost bound needs a nonzero frequency"));
    }
    let cost = dist.mean_abs_cost();
    let bound = (1.0 - dist.char_fn(omega).norm()) / omega.abs();
    Ok((cost, bound, cost >= bound - CHECK_SLACK))
}

/// Sum of `n` independent copies.
pub fn repeat(dist: &TimeDistribution, n: u64) -> Result<TimeDistribution> {
    DistSpec::Repeated { base: Box::new(dist.spec.clone()), n }.build()
}

/// Conditions a shifted Gaussian on positive outcomes.
pub fn condition_positive(dist: &TimeDistribution) -> Result<TimeDistribution> {
    match dist.spec {
        DistSpec::Gaussian { sigma, shift, .. } => DistSpec::Gaussian { sigma, shift, conditioned: true }.build(),
        _ => Err(Error::param("only Gaussian distributions can be conditioned")),
    }
}

pub fn build_compact_optimal(delta: f64) -> Result<TimeDistribution> {
    DistSpec::CompactOptimal { delta }.build()
}

/// Restricts a distribution whose `Φ` vanishes beyond `Δ ≤ π` to the integers:
/// `prob(k) = f(k)`, without renormalization.
pub fn discretize_to_integers(dist: &TimeDistribution) -> Result<TimeDistribution> {
    let spec = DistSpec::IntegerDiscretized { base: Box::new(dist.spec.clone()) };
    if dist.support().is_integer() {
        return Ok(TimeDistribution { spec, repr: dist.repr.clone() });
    }
    let w = dist
        .compact_support()
        .ok_or_else(|| Error::param(format!("{} has no compactly supported characteristic function", dist.label())))?;
    if w > PI {
        return Err(Error::param(format!("characteristic function support {w} exceeds π")));
    }
    let kmax = match dist.repr {
        Repr::Sinc4(l) => (1e13 / (PI * l.powi(3))).cbrt().ceil(),
        Repr::CompactOptimal(d) => (DISCRETIZE_TMAX / d).ceil(),
        _ => return Err(Error::param(format!("{} has no tabulated density", dist.label()))),
    } as i64;
    let probs = (-kmax..=kmax).map(|k| dist.density(k as f64).expect("continuous kind")).collect();
    Ok(TimeDistribution { spec, repr: Repr::Lattice(Lattice::new(-kmax, probs)) })
}

/// Compares `sup_{|ω|≥Δ} |Φ(ω)|` with `e^{−Δ⟨T⟩π/2}` for a nonnegative time.
pub fn positive_lower_bound_check(dist: &TimeDistribution, delta: f64) -> Result<(f64, f64, bool)> {
    if !dist.support().is_nonnegative() {
        return Err(Error::param(format!("{} takes negative values", dist.label())));
    }
    positive("delta", delta)?;
    let sup = dist.sup_beyond(delta, 100.0 * delta, 9901);
    let bound = (-delta * dist.mean() * PI / 2.0).exp();
    Ok((sup, bound, sup >= bound - CHECK_SLACK))
}
