use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, MultiChannelSignal, Result};

/// One second-order section, normalized so that `a0 = 1`:
///
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Highpass,
    Lowpass,
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn new(sections: Vec<Biquad>) -> Result<Self> {
        for (i, s) in sections.iter().enumerate() {
            if !s.is_stable() || ![s.b0, s.b1, s.b2, s.a1, s.a2].iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "unstable section {i}: b=[{:e}, {:e}, {:e}] a=[1, {:e}, {:e}]",
                    s.b0, s.b1, s.b2, s.a1, s.a2
                )));
            }
        }
        Ok(Self { sections })
    }

    pub fn response(&self, w: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Magnitude in dB at frequency `f_hz` for sample rate `fs`.
    pub fn gain_db(&self, f_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(2.0 * PI * f_hz / fs).norm().log10()
    }

    /// Runs the cascade over `x` in place (transposed direct form II).
    pub fn apply_in_place(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * y + z2;
                z2 = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }

    pub fn apply(&self, sig: &MultiChannelSignal) -> Result<MultiChannelSignal> {
        let mut data = sig.data().clone();
        for mut row in data.rows_mut() {
            match row.as_slice_mut() {
                Some(s) => self.apply_in_place(s),
                None => {
                    let mut buf = row.to_vec();
                    self.apply_in_place(&mut buf);
                    row.assign(&ndarray::ArrayView1::from(&buf));
                }
            }
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("filter output contains non-finite values".into()));
        }
        sig.with_data(data)
    }
}

fn check_band(f_hz: f64, fs: f64, what: &str) -> Result<()> {
    if !(f_hz > 0.0 && f_hz < fs / 2.0) {
        return Err(Error::param(format!(
            "{what} frequency {f_hz} Hz must lie in (0, {}) for sample rate {fs} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Second-order IIR notch (zeros on the unit circle at `f0`).
pub fn notch_section(f0_hz: f64, q: f64, fs: f64) -> Result<Biquad> {
    check_band(f0_hz, fs, "notch")?;
    if !(q > 0.0) {
        return Err(Error::param(format!("notch Q must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * f0_hz / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    Ok(Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cos / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha) / a0,
    })
}

pub fn notch_filter(sig: &MultiChannelSignal, f0_hz: f64, q: f64) -> Result<MultiChannelSignal> {
    let section = notch_section(f0_hz, q, sig.sample_rate_hz())?;
    SosFilter::new(vec![section])?.apply(sig)
}

/// Butterworth design by bilinear transform with frequency prewarping, one
/// section per conjugate pole pair plus a first-order section for odd orders.
pub fn butterworth_sections(kind: FilterKind, order: usize, fc_hz: f64, fs: f64) -> Result<SosFilter> {
    if order == 0 {
        return Err(Error::param("Butterworth order must be at least 1"));
    }
    check_band(fc_hz, fs, "cutoff")?;
    let k = (PI * fc_hz / fs).tan();
    let k2 = k * k;
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for p in 0..order / 2 {
        // Analog prototype pole angle; q = -1 / (2 cos theta).
        let theta = PI * (2 * p + order + 1) as f64 / (2 * order) as f64;
        let q = -1.0 / (2.0 * theta.cos());
        let norm = 1.0 / (1.0 + k / q + k2);
        let a1 = 2.0 * (k2 - 1.0) * norm;
        let a2 = (1.0 - k / q + k2) * norm;
        let (b0, b1, b2) = match kind {
            FilterKind::Lowpass => (k2 * norm, 2.0 * k2 * norm, k2 * norm),
            FilterKind::Highpass => (norm, -2.0 * norm, norm),
        };
        sections.push(Biquad { b0, b1, b2, a1, a2 });
    }
    if order % 2 == 1 {
        let a1 = (k - 1.0) / (k + 1.0);
        let (b0, b1) = match kind {
            FilterKind::Lowpass => (k / (k + 1.0), k / (k + 1.0)),
            FilterKind::Highpass => (1.0 / (k + 1.0), -1.0 / (k + 1.0)),
        };
        sections.push(Biquad { b0, b1, b2: 0.0, a1, a2: 0.0 });
    }
    SosFilter::new(sections)
}

pub fn butterworth_filter(
    sig: &MultiChannelSignal,
    kind: FilterKind,
    order: usize,
    fc_hz: f64,
) -> Result<MultiChannelSignal> {
    butterworth_sections(kind, order, fc_hz, sig.sample_rate_hz())?.apply(sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Units;

    const FS: f64 = 2048.0;

    fn sine(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / FS).sin()).collect()
    }

    /// Peak amplitude over the trailing `tail` samples.
    fn tail_peak(x: &[f64], tail: usize) -> f64 {
        x[x.len() - tail..].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Analog Butterworth magnitude at the prewarped frequency; the bilinear
    /// transform maps it exactly onto the digital response.
    fn butterworth_oracle_db(kind: FilterKind, order: usize, fc: f64, f: f64) -> f64 {
        let wc = (PI * fc / FS).tan();
        let w = (PI * f / FS).tan();
        let ratio = match kind {
            FilterKind::Lowpass => w / wc,
            FilterKind::Highpass => wc / w,
        };
        -10.0 * (1.0 + ratio.powi(2 * order as i32)).log10()
    }

    #[test]
    fn notch_passes_dc() {
        let sig = MultiChannelSignal::from_rows(&[vec![1.0; 16 * 2048]], FS, Units::Volts).unwrap();
        let out = notch_filter(&sig, 60.0, 35.0).unwrap();
        // Only the start-up transient (time constant ~0.2 s at Q=35) differs.
        for &v in out.channel(0).iter().skip(12 * 2048) {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn notch_rejects_60hz_and_keeps_10hz() {
        let f = notch_section(60.0, 35.0, FS).unwrap();
        let sos = SosFilter::new(vec![f]).unwrap();
        assert!(sos.gain_db(60.0, FS) < -40.0);
        assert!(sos.gain_db(10.0, FS).abs() < 1.0);

        let mut x = sine(60.0, 20 * 2048);
        sos.apply_in_place(&mut x);
        let att = 20.0 * tail_peak(&x, 2048).log10();
        assert!(att <= -40.0, "60 Hz attenuation {att} dB");

        let mut x = sine(10.0, 8 * 2048);
        sos.apply_in_place(&mut x);
        let att = 20.0 * tail_peak(&x, 2048).log10();
        assert!(att.abs() < 1.0, "10 Hz attenuation {att} dB");
    }

    #[test]
    fn notch_rejects_nyquist() {
        assert!(notch_section(1024.0, 35.0, FS).is_err());
        assert!(notch_section(2000.0, 35.0, FS).is_err());
        assert!(notch_section(60.0, 0.0, FS).is_err());
    }

    #[test]
    fn butterworth_matches_analytic_magnitude() {
        for (kind, order, fc) in [
            (FilterKind::Highpass, 6, 20.0),
            (FilterKind::Lowpass, 4, 10.0),
            (FilterKind::Lowpass, 3, 100.0),
            (FilterKind::Highpass, 1, 50.0),
        ] {
            let sos = butterworth_sections(kind, order, fc, FS).unwrap();
            for f in [1.0, 5.0, 10.0, 20.0, 60.0, 100.0, 400.0] {
                let got = sos.gain_db(f, FS);
                let want = butterworth_oracle_db(kind, order, fc, f);
                assert!((got - want).abs() < 1e-6, "{kind:?} {order} {fc}: {f} Hz {got} vs {want}");
            }
        }
    }

    #[test]
    fn highpass_kills_dc() {
        let sig = MultiChannelSignal::from_rows(&[vec![3.0; 8192]], FS, Units::Volts).unwrap();
        let out = butterworth_filter(&sig, FilterKind::Highpass, 6, 20.0).unwrap();
        for &v in out.channel(0).iter().skip(4096) {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn highpass_minus_3db_at_cutoff_steady_state() {
        let sos = butterworth_sections(FilterKind::Highpass, 6, 20.0, FS).unwrap();
        let mut x = sine(20.0, 10 * 2048);
        sos.apply_in_place(&mut x);
        let g = 20.0 * tail_peak(&x, 2048).log10();
        assert!((g + 3.0103).abs() < 0.2, "gain at fc {g} dB");
    }

    #[test]
    fn lowpass_attenuates_100hz_by_60db() {
        let sos = butterworth_sections(FilterKind::Lowpass, 4, 10.0, FS).unwrap();
        let mut x = sine(100.0, 10 * 2048);
        sos.apply_in_place(&mut x);
        let g = 20.0 * tail_peak(&x, 2048).log10();
        assert!(g <= -60.0, "{g}");
    }

    #[test]
    fn rejects_bad_design_parameters() {
        assert!(butterworth_sections(FilterKind::Lowpass, 0, 10.0, FS).is_err());
        assert!(butterworth_sections(FilterKind::Lowpass, 2, 1024.0, FS).is_err());
        let bad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 1.5 };
        assert!(matches!(SosFilter::new(vec![bad]), Err(Error::Numerical(_))));
    }

    #[test]
    fn filtering_preserves_shape() {
        let sig = MultiChannelSignal::from_rows(&[vec![0.5; 100], vec![1.5; 100]], FS, Units::Volts)
            .unwrap();
        let out = butterworth_filter(&sig, FilterKind::Lowpass, 5, 30.0).unwrap();
        assert_eq!(out.n_channels(), 2);
        assert_eq!(out.n_samples(), 100);
    }
}
