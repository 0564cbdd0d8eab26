//! Special functions needed by the envelope and the closed-form information
//! expressions: the scaled complementary error function and the cosine
//! integral.

use num_complex::Complex64;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Scaled complementary error function `exp(x²)·erfc(x)` for `x ≥ 0`.
///
/// Negative arguments are accepted but lose the overflow protection.
pub fn erfcx(x: f64) -> f64 {
    if x < 26.0 {
        // x² = hi + lo exactly, so exp(x²) carries no rounding of the square.
        let hi = x * x;
        let lo = x.mul_add(x, -hi);
        hi.exp() * (1.0 + lo) * libm::erfc(x)
    } else {
        // 1/(x√π) Σ (-1)^k (2k-1)!! / (2x²)^k; five terms reach 1e-16 here.
        let inv2x2 = 0.5 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..6 {
            term *= -((2 * k - 1) as f64) * inv2x2;
            sum += term;
        }
        sum / (x * std::f64::consts::PI.sqrt())
    }
}

/// `Cin(x) = ∫₀ˣ (1 − cos t)/t dt = γ + ln x − Ci(x)`.
///
/// Evaluated from the power series below `x = 4`, which avoids the
/// cancellation between `γ + ln x` and `Ci(x)` at small arguments.
pub fn cin(x: f64) -> f64 {
    let x = x.abs();
    if x <= 4.0 {
        let x2 = x * x;
        let mut sum = 0.0;
        // a_k = (-1)^(k+1) x^(2k) / (2k)!
        let mut a = 1.0;
        for k in 1..=40 {
            let kk = 2 * k;
            a *= -x2 / ((kk - 1) as f64 * kk as f64);
            let term = -a / kk as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        EULER_GAMMA + x.ln() - ci(x)
    }
}

/// Cosine integral `Ci(x) = γ + ln x − ∫₀ˣ (1 − cos t)/t dt` for `x > 0`.
///
/// Power series for `x ≤ 4`; above that the auxiliary functions `f`, `g`
/// with `Ci(x) = f(x) sin x − g(x) cos x` are obtained from the continued
/// fraction of `E₁(ix)`.
pub fn ci(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NAN;
    }
    if x <= 4.0 {
        return EULER_GAMMA + x.ln() - cin(x);
    }
    let (f, g) = auxiliary_fg(x);
    f * x.sin() - g * x.cos()
}

/// Auxiliary functions `f(x)`, `g(x)` of the sine and cosine integrals.
///
/// With `h = e^{ix} E₁(ix)` one has `g = Re h` and `f = −Im h`.
pub fn auxiliary_fg(x: f64) -> (f64, f64) {
    // Modified Lentz on E₁(z) e^{z} = 1/(z+1− 1²/(z+3− 2²/(z+5− ...))), z = ix.
    const TINY: f64 = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 2..10_000 {
        let a = -((i - 1) as f64).powi(2);
        b += Complex64::new(2.0, 0.0);
        d = (d * a + b).inv();
        c = b + Complex64::new(a, 0.0) / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    (-h.im, h.re)
}
