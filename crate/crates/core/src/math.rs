//! Thin wrappers over `libm` so the algorithms read like ordinary float code.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Numerically stable `ln(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = v.iter().map(|&x| exp(x - max)).sum();
    max + ln(s)
}

/// Four independent accumulators so the reduction vectorises.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// `Σ_i (x_i − m_i)² w_i`, accumulated like [`dot`].
#[inline]
pub fn weighted_sq_dist(x: &[f64], m: &[f64], w: &[f64]) -> f64 {
    let n = x.len().min(m.len()).min(w.len());
    let (x, m, w) = (&x[..n], &m[..n], &w[..n]);
    let mut acc = [0.0; 4];
    let split = n - n % 4;
    for ((xc, mc), wc) in x[..split]
        .chunks_exact(4)
        .zip(m[..split].chunks_exact(4))
        .zip(w[..split].chunks_exact(4))
    {
        for k in 0..4 {
            let d = xc[k] - mc[k];
            acc[k] += d * d * wc[k];
        }
    }
    let mut tail = 0.0;
    for i in split..n {
        let d = x[i] - m[i];
        tail += d * d * w[i];
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    sqrt(dot(v, v))
}
