//! Element-level fixed-point arithmetic.
//!
//! Every operation takes raw signed integers held in an 8- or 16-bit
//! container and returns a value already clamped into that container.
//! Intermediate products are formed in a double-width (here `i64`) domain so
//! that no step before the final clamp can overflow.

use serde::{Deserialize, Serialize};

/// Element width selected by the `vew` instruction field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElemWidth {
    E8,
    E16,
}

impl ElemWidth {
    pub const fn bits(self) -> u32 {
        match self {
            ElemWidth::E8 => 8,
            ElemWidth::E16 => 16,
        }
    }

    pub const fn bytes(self) -> usize {
        (self.bits() / 8) as usize
    }

    pub const fn min(self) -> i32 {
        match self {
            ElemWidth::E8 => i8::MIN as i32,
            ElemWidth::E16 => i16::MIN as i32,
        }
    }

    pub const fn max(self) -> i32 {
        match self {
            ElemWidth::E8 => i8::MAX as i32,
            ElemWidth::E16 => i16::MAX as i32,
        }
    }

    /// `vew` field code: 0 = 8-bit, 1 = 16-bit.
    pub const fn code(self) -> u8 {
        match self {
            ElemWidth::E8 => 0,
            ElemWidth::E16 => 1,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ElemWidth::E8),
            1 => Some(ElemWidth::E16),
            _ => None,
        }
    }

    /// Sign-extends the low `bits()` of `raw`.
    pub const fn wrap(self, raw: i64) -> i32 {
        match self {
            ElemWidth::E8 => raw as i8 as i32,
            ElemWidth::E16 => raw as i16 as i32,
        }
    }
}

/// Fixed-point layout `mQn`: `int_bits` includes the sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: i32,
    pub frac_bits: i32,
}

impl QFormat {
    pub const fn new(int_bits: i32, frac_bits: i32) -> Self {
        Self { int_bits, frac_bits }
    }

    /// A format that fills a container of the given width.
    pub fn for_width(width: ElemWidth, frac_bits: i32) -> Self {
        Self::new(width.bits() as i32 - frac_bits, frac_bits)
    }

    pub const fn total_bits(self) -> i32 {
        self.int_bits + self.frac_bits
    }

    /// Full-precision quotient format of `dividend / divisor` with a
    /// pre-shift of `s`: `(a+d+1-s)Q(b+c+s)` for divisor `aQb`, dividend `cQd`.
    pub const fn quotient(dividend: QFormat, divisor: QFormat, s: i32) -> QFormat {
        QFormat::new(
            divisor.int_bits + dividend.frac_bits + 1 - s,
            divisor.frac_bits + dividend.int_bits + s,
        )
    }

    /// Fractional bits carried by the raw integer quotient `(D << s) / V`.
    pub const fn raw_quotient_frac_bits(dividend: QFormat, divisor: QFormat, s: i32) -> i32 {
        dividend.frac_bits - divisor.frac_bits + s
    }

    pub fn to_f64(self, raw: i64) -> f64 {
        raw as f64 / (self.frac_bits as f64).exp2()
    }
}

/// A raw element tagged with its container width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elem {
    pub raw: i32,
    pub width: ElemWidth,
}

impl Elem {
    pub fn new(raw: i32, width: ElemWidth) -> Self {
        Self { raw: saturate(raw as i64, width), width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AddSub {
    Add,
    Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpPred {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Clamps a wide value into the container.
#[inline]
pub fn saturate(v: i64, width: ElemWidth) -> i32 {
    v.clamp(width.min() as i64, width.max() as i64) as i32
}

#[inline]
pub fn sat_addsub(a: i32, b: i32, op: AddSub, width: ElemWidth) -> i32 {
    let wide = match op {
        AddSub::Add => a as i64 + b as i64,
        AddSub::Sub => a as i64 - b as i64,
    };
    saturate(wide, width)
}

/// Full product, arithmetic right shift by `vshamt`, then clamp.
#[inline]
pub fn mul_shift(a: i32, b: i32, vshamt: u32, width: ElemWidth) -> i32 {
    debug_assert!(vshamt <= 31);
    saturate((a as i64 * b as i64) >> vshamt, width)
}

/// Complex multiply as performed by the complex arithmetic unit: the partial
/// products are combined in the wide domain and only the final result is
/// shifted and clamped.
#[inline]
pub fn cplx_mul(ar: i32, ai: i32, br: i32, bi: i32, vshamt: u32, width: ElemWidth) -> (i32, i32) {
    let (ar, ai, br, bi) = (ar as i64, ai as i64, br as i64, bi as i64);
    let re = ar * br - ai * bi;
    let im = ar * bi + ai * br;
    (saturate(re >> vshamt, width), saturate(im >> vshamt, width))
}

/// Outcome of a saturating division.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivResult {
    pub value: i32,
    pub saturated: bool,
    pub divide_by_zero: bool,
}

/// `(dividend << s) / divisor`, truncating toward zero. On overflow the
/// result saturates by the XOR of the operand signs: equal signs give MAX,
/// differing signs give MIN. Division by zero yields the saturated value of
/// the dividend's sign and raises the fault flag.
pub fn sat_div(dividend: i32, divisor: i32, s: u32, width: ElemWidth) -> DivResult {
    debug_assert!(s <= 31);
    if divisor == 0 {
        let value = if dividend < 0 { width.min() } else { width.max() };
        return DivResult { value, saturated: true, divide_by_zero: true };
    }
    let q = ((dividend as i64) << s) / divisor as i64;
    if q > width.max() as i64 || q < width.min() as i64 {
        let negative = (dividend < 0) ^ (divisor < 0);
        let value = if negative { width.min() } else { width.max() };
        DivResult { value, saturated: true, divide_by_zero: false }
    } else {
        DivResult { value: q as i32, saturated: false, divide_by_zero: false }
    }
}

#[inline]
pub fn cmp_mask(a: i32, b: i32, pred: CmpPred) -> bool {
    match pred {
        CmpPred::Eq => a == b,
        CmpPred::Ne => a != b,
        CmpPred::Lt => a < b,
        CmpPred::Le => a <= b,
        CmpPred::Gt => a > b,
        CmpPred::Ge => a >= b,
    }
}

#[inline]
pub fn sat_min(a: i32, b: i32) -> i32 {
    a.min(b)
}

#[inline]
pub fn sat_max(a: i32, b: i32) -> i32 {
    a.max(b)
}

/// Bitwise ops act on the two's-complement container bits.
#[inline]
pub fn bitwise(a: i32, b: i32, f: fn(i32, i32) -> i32, width: ElemWidth) -> i32 {
    width.wrap(f(a, b) as i64)
}
