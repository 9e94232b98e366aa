//! Double-double arithmetic for the closed-channel partition sum.
//!
//! At small modulus the closed channel evaluates an exponentially small
//! quantity as an alternating sum of O(1) terms; plain doubles lose it to
//! roundoff (the τ=0.05 grid points need ~23 significant digits). A pair of
//! doubles gives ~31 digits, which is plenty, and keeps the module free of
//! big-number dependencies. Only add/mul/div, exp, sin and sqrt are needed.

#[derive(Clone, Copy, Debug)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

pub const DD_PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.224_646_799_147_353_2e-16 };
pub const DD_LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn scale(self, k: f64) -> Dd {
        self.mul(Dd::from(k))
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.scale(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.scale(q2));
        let q3 = r.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    pub fn recip(self) -> Dd {
        Dd::from(1.0).div(self)
    }

    pub fn sqrt(self) -> Dd {
        debug_assert!(self.hi > 0.0);
        let s = self.hi.sqrt();
        // one Newton correction: s + (x - s²)/(2s)
        let e = self.sub(Dd::from(s).mul(Dd::from(s))).scale(0.5 / s);
        Dd::from(s).add(e)
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// e^self by argument reduction against ln 2 and a Taylor tail.
    pub fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::from(0.0);
        }
        let n = (self.hi / std::f64::consts::LN_2).round();
        let s = self.sub(DD_LN2.scale(n));
        // |s| <= ln2/2; Taylor sum of e^s (divisors applied in dd: 1/k is
        // not exactly representable)
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for k in 1..40 {
            term = term.mul(s).div(Dd::from(k as f64));
            sum = sum.add(term);
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        let scale = 2f64.powi(n as i32);
        Dd { hi: sum.hi * scale, lo: sum.lo * scale }
    }

    /// sin(self) by reduction mod 2π and quadrant dispatch.
    pub fn sin(self) -> Dd {
        let two_pi = DD_PI.scale(2.0);
        let n = (self.hi / (2.0 * std::f64::consts::PI)).round();
        let y = self.sub(two_pi.scale(n));
        // y in [-π, π]; reduce to [-π/4, π/4] with quadrant logic
        let q = (y.hi / std::f64::consts::FRAC_PI_2).round();
        let z = y.sub(DD_PI.scale(0.5 * q));
        match q as i64 {
            0 => sin_taylor(z),
            1 | -3 => cos_taylor(z),
            -1 | 3 => cos_taylor(z).neg(),
            2 | -2 => sin_taylor(z).neg(),
            _ => unreachable!("reduced quadrant out of range"),
        }
    }
}

fn sin_taylor(z: Dd) -> Dd {
    let z2 = z.mul(z);
    let mut term = z;
    let mut sum = z;
    let mut k = 1.0;
    loop {
        // (k+1)(k+2) is an exact small integer; divide in dd
        term = term.mul(z2).div(Dd::from(-(k + 1.0) * (k + 2.0)));
        sum = sum.add(term);
        k += 2.0;
        if term.hi.abs() < 1e-34 || k > 40.0 {
            break;
        }
    }
    sum
}

fn cos_taylor(z: Dd) -> Dd {
    let z2 = z.mul(z);
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    let mut k = 0.0;
    loop {
        term = term.mul(z2).div(Dd::from(-(k + 1.0) * (k + 2.0)));
        sum = sum.add(term);
        k += 2.0;
        if term.hi.abs() < 1e-34 || k > 40.0 {
            break;
        }
    }
    sum
}
