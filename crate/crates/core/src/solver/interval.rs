//! Closed intervals over `f64` with outward rounding.
//!
//! Every operation widens its result by one ulp on each side, which keeps
//! the enclosure property regardless of the rounding mode of the host.

use std::ops::{Add, Mul, Neg, Sub};

use crate::rational::{self, Rational};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    if x == f64::NEG_INFINITY { x } else { x.next_down() }
}

#[inline]
fn up(x: f64) -> f64 {
    if x == f64::INFINITY { x } else { x.next_up() }
}

impl Interval {
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Tight enclosure of an exact rational.
    pub fn from_rational(r: &Rational) -> Self {
        let (lo, hi) = rational::enclose(r);
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        let m = 0.5 * self.lo + 0.5 * self.hi;
        m.clamp(self.lo, self.hi)
    }

    pub fn rad(&self) -> f64 {
        let m = self.mid();
        (m - self.lo).max(self.hi - m)
    }

    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn interior_of(&self, other: &Interval) -> bool {
        other.lo < self.lo && self.hi < other.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    /// Splits at `lo + t·width`.
    pub fn split_at(&self, t: f64) -> (Interval, Interval) {
        let m = (self.lo + t * self.width()).clamp(self.lo, self.hi);
        (Interval { lo: self.lo, hi: m }, Interval { lo: m, hi: self.hi })
    }

    pub fn inflate(&self, abs: f64, rel: f64) -> Interval {
        let r = abs + rel * self.width();
        Interval { lo: down(self.lo - r), hi: up(self.hi + r) }
    }

    pub fn powi(&self, e: u32) -> Interval {
        match e {
            0 => Interval::point(1.0),
            1 => *self,
            _ => {
                let a = pow_down_up(self.lo, e);
                let b = pow_down_up(self.hi, e);
                if e % 2 == 1 || self.lo >= 0.0 {
                    Interval { lo: a.0, hi: b.1 }
                } else if self.hi <= 0.0 {
                    Interval { lo: b.0, hi: a.1 }
                } else {
                    Interval { lo: 0.0, hi: a.1.max(b.1) }
                }
            }
        }
    }

    /// `self / other`; `None` when `other` contains zero.
    pub fn div(&self, other: &Interval) -> Option<Interval> {
        if other.contains_zero() {
            return None;
        }
        let q = [self.lo / other.lo, self.lo / other.hi, self.hi / other.lo, self.hi / other.hi];
        Some(Interval { lo: down(min4(q)), hi: up(max4(q)) })
    }

    /// Real preimage of `self` under `x ↦ x^e`, intersected with `within`.
    pub fn root_within(&self, e: u32, within: &Interval) -> Option<Interval> {
        match e {
            0 => self.contains(1.0).then_some(*within),
            1 => self.intersect(within),
            _ if e % 2 == 1 => {
                let lo = down(down(odd_root(self.lo, e)));
                let hi = up(up(odd_root(self.hi, e)));
                Interval { lo, hi }.intersect(within)
            }
            _ => {
                if self.hi < 0.0 {
                    return None;
                }
                // `powf` is not correctly rounded; two ulps of slack cover it.
                let r_hi = up(up(self.hi.powf(1.0 / e as f64)));
                let r_lo = if self.lo <= 0.0 { 0.0 } else { down(down(self.lo.powf(1.0 / e as f64))).max(0.0) };
                let pos = Interval { lo: r_lo, hi: r_hi }.intersect(within);
                let neg = Interval { lo: -r_hi, hi: -r_lo }.intersect(within);
                match (pos, neg) {
                    (Some(p), Some(n)) => Some(p.hull(&n)),
                    (p, n) => p.or(n),
                }
            }
        }
    }
}

fn odd_root(x: f64, e: u32) -> f64 {
    x.signum() * x.abs().powf(1.0 / e as f64)
}

fn pow_down_up(x: f64, e: u32) -> (f64, f64) {
    let mut lo = x;
    let mut hi = x;
    // Widening once per multiplication keeps the bracket valid.
    for _ in 1..e {
        let cands = [lo * x, hi * x];
        lo = down(cands[0].min(cands[1]));
        hi = up(cands[0].max(cands[1]));
    }
    (lo, hi)
}

fn min4(v: [f64; 4]) -> f64 {
    v[0].min(v[1]).min(v[2]).min(v[3])
}

fn max4(v: [f64; 4]) -> f64 {
    v[0].max(v[1]).max(v[2]).max(v[3])
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval { lo: down(self.lo + rhs.lo), hi: up(self.hi + rhs.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval { lo: down(self.lo - rhs.hi), hi: up(self.hi - rhs.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        // 0·∞ never occurs for the finite boxes the solver uses.
        Interval { lo: down(min4(p)), hi: up(max4(p)) }
    }
}

/// Axis-aligned box.
pub type IBox = Vec<Interval>;

pub fn max_width(b: &[Interval]) -> f64 {
    b.iter().map(Interval::width).fold(0.0, f64::max)
}

pub fn widest(b: &[Interval]) -> usize {
    let mut best = 0;
    for (k, x) in b.iter().enumerate() {
        if x.width() > b[best].width() {
            best = k;
        }
    }
    best
}

pub fn midpoint(b: &[Interval]) -> Vec<f64> {
    b.iter().map(Interval::mid).collect()
}

pub fn box_subset(a: &[Interval], b: &[Interval]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.subset_of(y))
}

pub fn box_contains(b: &[Interval], p: &[f64]) -> bool {
    b.iter().zip(p).all(|(x, &v)| x.contains(v))
}
