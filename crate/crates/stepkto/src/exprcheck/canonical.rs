//! Canonical forms and the equivalence decision.
//!
//! Every expression maps to exactly one [`CanonicalForm`]: the `Exact`
//! variant `q * pi^k * sqrt(m)` (with `m` square-free) whenever the whole
//! tree reduces to that shape by rational arithmetic, otherwise a `Numeric`
//! evaluation at [`fixed::WORK_SCALE`] digits. Exact forms compare by field
//! equality; anything else falls back to a tolerance comparison on the
//! numeric values.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::fixed::{Fixed, WORK_SCALE};
use super::{rational_is_zero, rational_one, Expr, ExprError};

/// Trial-division bound for square-free certification. After removing all
/// prime squares up to this bound, a remainder below `BOUND^2` cannot contain
/// a square factor.
const SQUAREFREE_TRIAL_BOUND: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalForm {
    /// `coefficient * pi^pi_degree * sqrt(radicand)` with a square-free
    /// radicand; `radicand == 1` means no radical part.
    Exact {
        coefficient: BigRational,
        pi_degree: i32,
        radicand: BigUint,
    },
    /// High-precision evaluation for expressions outside the exact shape.
    Numeric { value: Fixed, precision: u32 },
}

impl CanonicalForm {
    fn zero() -> Self {
        CanonicalForm::Exact {
            coefficient: BigRational::zero(),
            pi_degree: 0,
            radicand: BigUint::one(),
        }
    }

    fn from_rational(q: BigRational) -> Self {
        Self::exact(q, 0, BigUint::one())
    }

    /// Normalizing constructor: zero coefficients collapse to the canonical
    /// zero so `0 * pi` and `0` share one form.
    fn exact(coefficient: BigRational, pi_degree: i32, radicand: BigUint) -> Self {
        if rational_is_zero(&coefficient) {
            return Self::zero();
        }
        CanonicalForm::Exact { coefficient, pi_degree, radicand }
    }

    fn numeric(value: Fixed) -> Self {
        CanonicalForm::Numeric { value, precision: WORK_SCALE }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, CanonicalForm::Exact { .. })
    }

    /// Evaluates the form numerically at the working precision.
    pub fn to_numeric(&self) -> Result<Fixed, ExprError> {
        match self {
            CanonicalForm::Numeric { value, .. } => Ok(value.clone()),
            CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                let mut v = Fixed::from_ratio(coefficient.numer(), coefficient.denom(), WORK_SCALE)?;
                if *pi_degree != 0 {
                    v = v.mul(&Fixed::pi(WORK_SCALE).powi(*pi_degree)?);
                }
                if !radicand.is_one() {
                    let r = Fixed::from_bigint(&BigInt::from(radicand.clone()), WORK_SCALE);
                    v = v.mul(&r.sqrt()?);
                }
                Ok(v)
            }
        }
    }
}

/// Extracts the largest certifiable square factor: returns `(s, m')` with
/// `m == s^2 * m'` and `m'` square-free, or `None` when the remainder is too
/// large to certify (the caller then takes the numeric path).
fn squarefree_reduce(m: &BigUint) -> Option<(BigUint, BigUint)> {
    debug_assert!(!m.is_zero());
    let mut rest = m.clone();
    let mut extracted = BigUint::one();
    let mut p = 2u64;
    while p <= SQUAREFREE_TRIAL_BOUND {
        let p2 = BigUint::from(p * p);
        while (&rest % &p2).is_zero() {
            rest /= &p2;
            extracted *= BigUint::from(p);
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let bound_sq = BigUint::from(SQUAREFREE_TRIAL_BOUND * SQUAREFREE_TRIAL_BOUND);
    if rest <= bound_sq {
        return Some((extracted, rest));
    }
    // Large remainder: a perfect square still certifies, otherwise give up.
    let root = rest.sqrt();
    if &root * &root == rest {
        return Some((extracted * root, BigUint::one()));
    }
    None
}

fn add_forms(a: CanonicalForm, b: CanonicalForm, subtract: bool) -> Result<CanonicalForm, ExprError> {
    use CanonicalForm::*;
    match (&a, &b) {
        (Exact { coefficient: qa, pi_degree: ka, radicand: ma },
         Exact { coefficient: qb, pi_degree: kb, radicand: mb }) => {
            let qb = if subtract { -qb } else { qb.clone() };
            if rational_is_zero(qa) {
                return Ok(CanonicalForm::exact(qb, *kb, mb.clone()));
            }
            if rational_is_zero(&qb) {
                return Ok(a);
            }
            if ka == kb && ma == mb {
                return Ok(CanonicalForm::exact(qa + qb, *ka, ma.clone()));
            }
        }
        _ => {}
    }
    let va = a.to_numeric()?;
    let vb = b.to_numeric()?;
    let v = if subtract { va.sub(&vb) } else { va.add(&vb) };
    Ok(CanonicalForm::numeric(v))
}

fn mul_forms(a: CanonicalForm, b: CanonicalForm) -> Result<CanonicalForm, ExprError> {
    use CanonicalForm::*;
    if let (Exact { coefficient: qa, pi_degree: ka, radicand: ma },
            Exact { coefficient: qb, pi_degree: kb, radicand: mb }) = (&a, &b)
    {
        if rational_is_zero(qa) || rational_is_zero(qb) {
            return Ok(CanonicalForm::zero());
        }
        let raw = ma * mb;
        if let Some((s, m)) = squarefree_reduce(&raw) {
            let coeff = qa * qb * BigRational::from_integer(BigInt::from(s));
            return Ok(CanonicalForm::exact(coeff, ka + kb, m));
        }
    }
    Ok(CanonicalForm::numeric(a.to_numeric()?.mul(&b.to_numeric()?)))
}

fn div_forms(a: CanonicalForm, b: CanonicalForm) -> Result<CanonicalForm, ExprError> {
    use CanonicalForm::*;
    if let (Exact { coefficient: qa, pi_degree: ka, radicand: ma },
            Exact { coefficient: qb, pi_degree: kb, radicand: mb }) = (&a, &b)
    {
        if rational_is_zero(qb) {
            return Err(ExprError::undefined("division by zero"));
        }
        if rational_is_zero(qa) {
            return Ok(CanonicalForm::zero());
        }
        // sqrt(ma)/sqrt(mb) = sqrt(ma*mb)/mb
        let raw = ma * mb;
        if let Some((s, m)) = squarefree_reduce(&raw) {
            let coeff = qa / qb * BigRational::new(BigInt::from(s), BigInt::from(mb.clone()));
            return Ok(CanonicalForm::exact(coeff, ka - kb, m));
        }
    }
    let vb = b.to_numeric()?;
    Ok(CanonicalForm::numeric(a.to_numeric()?.div(&vb)?))
}

fn sqrt_form(inner: CanonicalForm) -> Result<CanonicalForm, ExprError> {
    use CanonicalForm::*;
    if let Exact { coefficient, pi_degree, radicand } = &inner {
        if rational_is_zero(coefficient) {
            return Ok(CanonicalForm::zero());
        }
        if coefficient.is_negative() && *pi_degree == 0 && radicand.is_one() {
            return Err(ExprError::undefined("square root of a negative value"));
        }
        // sqrt(a/b) = sqrt(a*b)/b, exact only for plain rationals.
        if *pi_degree == 0 && radicand.is_one() && coefficient.is_positive() {
            let a = coefficient.numer().magnitude().clone();
            let b = coefficient.denom().magnitude().clone();
            if let Some((s, m)) = squarefree_reduce(&(&a * &b)) {
                let coeff = BigRational::new(BigInt::from(s), BigInt::from(b));
                return Ok(CanonicalForm::exact(coeff, 0, m));
            }
        }
    }
    Ok(CanonicalForm::numeric(inner.to_numeric()?.sqrt()?))
}

fn pow_form(base: CanonicalForm, exp: i32) -> Result<CanonicalForm, ExprError> {
    use CanonicalForm::*;
    if exp == 0 {
        // x^0 = 1 by convention, including 0^0.
        return Ok(CanonicalForm::from_rational(rational_one()));
    }
    if let Exact { coefficient, pi_degree, radicand } = &base {
        if rational_is_zero(coefficient) {
            if exp < 0 {
                return Err(ExprError::undefined("zero to a negative power"));
            }
            return Ok(CanonicalForm::zero());
        }
        // Build x^|exp| exactly; sqrt(m)^n = m^(n/2) * sqrt(m)^(n%2).
        let n = exp.unsigned_abs();
        let m_pairs = radicand.pow(n / 2);
        let coeff = coefficient.pow(n as i32) * BigRational::from_integer(BigInt::from(m_pairs));
        let rad = if n % 2 == 1 { radicand.clone() } else { BigUint::one() };
        let k_n = pi_degree
            .checked_mul(n as i32)
            .ok_or_else(|| ExprError::undefined("pi degree overflow"))?;
        let pos = CanonicalForm::exact(coeff, k_n, rad);
        if exp > 0 {
            return Ok(pos);
        }
        return div_forms(CanonicalForm::from_rational(rational_one()), pos);
    }
    let v = base.to_numeric()?.powi(exp)?;
    Ok(CanonicalForm::numeric(v))
}

/// Reduces an expression to its canonical form.
pub fn canonical(e: &Expr) -> Result<CanonicalForm, ExprError> {
    match e {
        Expr::Rational(q) => Ok(CanonicalForm::from_rational(q.clone())),
        Expr::Pi => Ok(CanonicalForm::exact(rational_one(), 1, BigUint::one())),
        Expr::Neg(inner) => {
            let form = canonical(inner)?;
            match form {
                CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                    Ok(CanonicalForm::exact(-coefficient, pi_degree, radicand))
                }
                CanonicalForm::Numeric { value, .. } => Ok(CanonicalForm::numeric(value.neg())),
            }
        }
        Expr::Sqrt(inner) => sqrt_form(canonical(inner)?),
        Expr::Add(a, b) => add_forms(canonical(a)?, canonical(b)?, false),
        Expr::Sub(a, b) => add_forms(canonical(a)?, canonical(b)?, true),
        Expr::Mul(a, b) => mul_forms(canonical(a)?, canonical(b)?),
        Expr::Div(a, b) => div_forms(canonical(a)?, canonical(b)?),
        Expr::Pow(base, exp) => pow_form(canonical(base)?, *exp),
    }
}

/// Decides mathematical equivalence. Two exact forms compare field-by-field;
/// otherwise both sides are evaluated numerically and compared with
/// `|a - b| <= 1e-9 * max(1, |a|, |b|)`. Both magnitudes enter the scale so
/// the relation stays symmetric.
pub fn equivalent(a: &Expr, b: &Expr) -> Result<bool, ExprError> {
    let ca = canonical(a)?;
    let cb = canonical(b)?;
    match (&ca, &cb) {
        (CanonicalForm::Exact { .. }, CanonicalForm::Exact { .. }) => Ok(ca == cb),
        _ => {
            let va = ca.to_numeric()?;
            let vb = cb.to_numeric()?;
            let diff = va.sub(&vb).abs();
            let mut scale = Fixed::one(WORK_SCALE);
            for v in [va.abs(), vb.abs()] {
                if v.cmp_value(&scale).is_gt() {
                    scale = v;
                }
            }
            let tol = scale.mul(&Fixed::epsilon(9, WORK_SCALE));
            Ok(diff.cmp_value(&tol).is_le())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprcheck::parse_answer;

    fn canon(text: &str) -> CanonicalForm {
        canonical(&parse_answer(text).unwrap()).unwrap()
    }

    fn equiv(a: &str, b: &str) -> bool {
        equivalent(&parse_answer(a).unwrap(), &parse_answer(b).unwrap()).unwrap()
    }

    #[test]
    fn mul_by_pi_keeps_exact_form() {
        match canon("288\\pi") {
            CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                assert_eq!(coefficient, BigRational::from_integer(288.into()));
                assert_eq!(pi_degree, 1);
                assert!(radicand.is_one());
            }
            other => panic!("expected exact form, got {other:?}"),
        }
    }

    #[test]
    fn rational_reduction() {
        match canon("2/4") {
            CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                assert_eq!(coefficient, BigRational::new(1.into(), 2.into()));
                assert_eq!(pi_degree, 0);
                assert!(radicand.is_one());
            }
            other => panic!("{other:?}"),
        }
    }

    /// Brute-force square-free oracle over small integers.
    #[test]
    fn sqrt_reduction_matches_bruteforce_squarefree() {
        let squarefree = |n: u64| -> (u64, u64) {
            let mut rest = n;
            let mut s = 1u64;
            let mut p = 2u64;
            while p * p <= rest {
                while rest % (p * p) == 0 {
                    rest /= p * p;
                    s *= p;
                }
                p += 1;
            }
            (s, rest)
        };
        for n in 1u64..=300 {
            let (s_expect, m_expect) = squarefree(n);
            match canon(&format!("\\sqrt{{{n}}}")) {
                CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                    assert_eq!(pi_degree, 0);
                    assert_eq!(coefficient, BigRational::from_integer(s_expect.into()), "n={n}");
                    assert_eq!(radicand, BigUint::from(m_expect), "n={n}");
                }
                other => panic!("sqrt({n}) should stay exact, got {other:?}"),
            }
        }
    }

    #[test]
    fn sqrt_eight_is_two_root_two() {
        match canon("\\sqrt{8}") {
            CanonicalForm::Exact { coefficient, pi_degree, radicand } => {
                assert_eq!(coefficient, BigRational::from_integer(2.into()));
                assert_eq!(pi_degree, 0);
                assert_eq!(radicand, BigUint::from(2u32));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equivalence_examples() {
        assert!(equiv("1/2", "0.5"));
        assert!(equiv("288\\pi", "\\frac{576\\pi}{2}"));
        assert!(!equiv("11", "12"));
        assert!(equiv("\\sqrt{8}", "2\\sqrt{2}"));
        assert!(equiv("\\sqrt{2}\\sqrt{2}", "2"));
        assert!(!equiv("\\pi", "3.14159265358979"));
        assert!(equiv("\\pi + 1", "1 + \\pi"));
        assert!(equiv("(1+\\sqrt{5})/2", "0.5 + 0.5\\sqrt{5}"));
    }

    #[test]
    fn division_by_zero_is_undefined() {
        assert!(matches!(canonical(&parse_answer("1/0").unwrap()), Err(ExprError::UndefinedValue(_))));
        assert!(matches!(
            canonical(&parse_answer("\\sqrt{1-2}").unwrap()),
            Err(ExprError::UndefinedValue(_))
        ));
    }

    #[test]
    fn canonicalization_is_idempotent_on_samples() {
        for text in ["2/4", "\\sqrt{18}", "1+\\pi", "3^4", "\\frac{-6}{8}", "2^{-2}"] {
            let e = parse_answer(text).unwrap();
            assert_eq!(canonical(&e).unwrap(), canonical(&e).unwrap(), "{text}");
        }
    }

    #[test]
    fn pow_handles_negative_exponents_and_zero() {
        match canon("2^{-2}") {
            CanonicalForm::Exact { coefficient, .. } => {
                assert_eq!(coefficient, BigRational::new(1.into(), 4.into()));
            }
            other => panic!("{other:?}"),
        }
        match canon("5^0") {
            CanonicalForm::Exact { coefficient, .. } => {
                assert_eq!(coefficient, BigRational::from_integer(1.into()));
            }
            other => panic!("{other:?}"),
        }
        assert!(canonical(&parse_answer("0^{-1}").unwrap()).is_err());
    }

    #[test]
    fn sqrt_powers_reduce_exactly() {
        // sqrt(3)^2 = 3, sqrt(3)^3 = 3 sqrt(3)
        match canon("\\sqrt{3}^2") {
            CanonicalForm::Exact { coefficient, radicand, .. } => {
                assert_eq!(coefficient, BigRational::from_integer(3.into()));
                assert!(radicand.is_one());
            }
            other => panic!("{other:?}"),
        }
        match canon("\\sqrt{3}^3") {
            CanonicalForm::Exact { coefficient, radicand, .. } => {
                assert_eq!(coefficient, BigRational::from_integer(3.into()));
                assert_eq!(radicand, BigUint::from(3u32));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_sums_take_the_numeric_path() {
        match canon("1+\\pi") {
            CanonicalForm::Numeric { precision, .. } => assert!(precision >= 30),
            other => panic!("expected numeric form, got {other:?}"),
        }
    }
}
