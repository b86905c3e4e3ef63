/// Eigenvalues at or below this are treated as zero variance.
pub const ZERO_VARIANCE: f32 = 1e-12;

/// Quantizer step for a component with variance `eigenvalue`: the range
/// `±clip_sigmas·σ` split into `2^bits` cells. Zero-variance components get
/// a unit step and always quantize to index 0.
pub fn step_size(eigenvalue: f32, clip_sigmas: f32, bits: u32) -> f32 {
    if eigenvalue <= ZERO_VARIANCE {
        return 1.0;
    }
    (2.0 * clip_sigmas as f64 * (eigenvalue as f64).sqrt() / (1u64 << bits) as f64) as f32
}

/// Mid-tread uniform quantizer with round-half-away-from-zero and clamping
/// to the signed `bits`-bit range.
pub fn quantize(value: f64, step: f64, bits: u32) -> i32 {
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    let q = (value / step).round();
    if q.is_nan() {
        return 0;
    }
    (q.clamp(lo as f64, hi as f64)) as i32
}

pub fn dequantize(index: i32, step: f64) -> f64 {
    index as f64 * step
}
