//! Discrete Butterworth low-pass filters designed with the bilinear
//! transform, pre-warped at the cutoff.

use std::f64::consts::{PI, SQRT_2};

/// One direct-form-II-transposed section. First-order sections keep
/// `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
    s: [f64; 2],
}

impl Section {
    fn second_order(k: f64, damping: f64) -> Self {
        let norm = 1.0 / (1.0 + damping * k + k * k);
        let b0 = k * k * norm;
        Section {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - damping * k + k * k) * norm],
            s: [0.0; 2],
        }
    }

    fn first_order(k: f64) -> Self {
        let b0 = k / (1.0 + k);
        Section {
            b: [b0, b0, 0.0],
            a: [(k - 1.0) / (k + 1.0), 0.0],
            s: [0.0; 2],
        }
    }

    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s[0];
        self.s[0] = self.b[1] * x - self.a[0] * y + self.s[1];
        self.s[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Steady state for a constant input `x` (unit DC gain).
    fn hold(&mut self, x: f64) {
        self.s[1] = (self.b[2] - self.a[1]) * x;
        self.s[0] = (self.b[1] - self.a[0]) * x + self.s[1];
    }

    fn response(&self, omega: f64) -> (f64, f64) {
        // H(e^{jw}) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        ((num.0 * den.0 + num.1 * den.1) / d, (num.1 * den.0 - num.0 * den.1) / d)
    }
}

/// Butterworth low-pass filter of arbitrary order.
///
/// Unless [`reset_to`](Self::reset_to) is called first, the delay line is
/// primed with the first sample so a constant signal passes through without
/// a start-up transient.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPassFilter {
    cutoff: f64,
    sample_rate: f64,
    order: usize,
    sections: Vec<Section>,
    primed: bool,
}

impl LowPassFilter {
    pub fn new(cutoff: f64, sample_rate: f64, order: usize) -> Self {
        assert!(order >= 1, "filter order must be at least 1");
        assert!(
            cutoff > 0.0 && cutoff < sample_rate / 2.0,
            "cutoff {cutoff} Hz must lie below Nyquist of {sample_rate} Hz"
        );
        let k = (PI * cutoff / sample_rate).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let theta = (2 * i + 1) as f64 * PI / (2 * order) as f64;
            sections.push(Section::second_order(k, 2.0 * theta.sin()));
        }
        if order % 2 == 1 {
            sections.push(Section::first_order(k));
        }
        LowPassFilter {
            cutoff,
            sample_rate,
            order,
            sections,
            primed: false,
        }
    }

    /// Second-order filter, the configuration used throughout the crate.
    pub fn butterworth2(cutoff: f64, sample_rate: f64) -> Self {
        Self::new(cutoff, sample_rate, 2)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Puts the filter in the steady state of a constant input `value`.
    pub fn reset_to(&mut self, value: f64) {
        for s in &mut self.sections {
            s.hold(value);
        }
        self.primed = true;
    }

    /// Forgets all history; the next sample primes the delay line again.
    pub fn clear(&mut self) {
        for s in &mut self.sections {
            s.s = [0.0; 2];
        }
        self.primed = false;
    }

    /// Advances the recursion by one sample.
    pub fn filter_step(&mut self, sample: f64) -> f64 {
        if !self.primed {
            self.reset_to(sample);
        }
        self.sections.iter_mut().fold(sample, |x, s| s.step(x))
    }

    /// Magnitude of the frequency response at `freq` Hz.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let omega = 2.0 * PI * freq / self.sample_rate;
        let (re, im) = self.sections.iter().fold((1.0, 0.0), |(re, im), s| {
            let (r, i) = s.response(omega);
            (re * r - im * i, re * i + im * r)
        });
        (re * re + im * im).sqrt()
    }

    /// Dominant time constant of the analog prototype, 1 / (ζ·ω_c) for the
    /// least damped pole pair.
    pub fn time_constant(&self) -> f64 {
        let theta = PI / (2 * self.order) as f64;
        let zeta = if self.order == 1 { 1.0 } else { theta.sin() };
        1.0 / (zeta * 2.0 * PI * self.cutoff)
    }
}

/// Analog Butterworth magnitude |H(jω)| = 1 / sqrt(1 + (f/fc)^(2n)).
pub fn analog_magnitude(freq: f64, cutoff: f64, order: usize) -> f64 {
    1.0 / (1.0 + (freq / cutoff).powi(2 * order as i32)).sqrt()
}

/// -3 dB expressed as a linear gain.
pub const HALF_POWER: f64 = SQRT_2 / 2.0;
