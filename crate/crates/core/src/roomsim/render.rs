//! FOA rendering of image sources with a band-limited fractional delay.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::physics::Medium;
use crate::roomsim::images::ImageSource;
use crate::roomsim::room::RoomSpec;

/// Length of the fractional-delay kernel.
pub const DELAY_TAPS: usize = 64;

/// Hann-windowed sinc interpolator for a delay of `delay` samples.
///
/// Tap `i` lands on sample `first + i`, where `first = floor(delay) - 31`.
/// The taps are scaled to unit sum (unit gain at DC); an integer delay
/// yields a single unit tap.
pub fn fractional_delay(delay: f64) -> (i64, [f64; DELAY_TAPS]) {
    let half = (DELAY_TAPS / 2) as i64;
    let base = delay.floor();
    let frac = delay - base;
    let first = base as i64 - (half - 1);
    let mut taps = [0.0; DELAY_TAPS];
    if frac == 0.0 {
        taps[(half - 1) as usize] = 1.0;
        return (first, taps);
    }
    // sin(π(k - frac)) = (-1)^k sin(-π frac) for integer k
    let s = (PI * frac).sin();
    let mut sum = 0.0;
    for (i, tap) in taps.iter_mut().enumerate() {
        let k = i as i64 - (half - 1);
        let x = k as f64 - frac;
        let sign = if k.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
        let sinc = sign * s / (PI * x);
        let window = 0.5 * (1.0 + (2.0 * PI * x / DELAY_TAPS as f64).cos());
        *tap = sinc * window;
        sum += *tap;
    }
    for tap in &mut taps {
        *tap /= sum;
    }
    (first, taps)
}

/// Renders four FOA channels `(W, X, Y, Z)` at `receiver`.
///
/// Each image contributes `a / (4π d)` delayed by `d / c₀` to W, and the
/// same pulse times the unit vector from the receiver toward the image to
/// X, Y and Z (far-field SN3D encoding, `v = p n̂`).
pub fn render_foa(receiver: &[f64; 3], images: &[ImageSource], fs: f64, len: usize, medium: &Medium) -> Result<Array2<f64>> {
    let mut out = Array2::<f64>::zeros((4, len));
    for img in images {
        let diff = [0, 1, 2].map(|a| img.position[a] - receiver[a]);
        let d = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
        if d < 1e-9 {
            return Err(Error::Simulation(format!(
                "receiver {receiver:?} coincides with an image source"
            )));
        }
        let gain = img.amplitude / (4.0 * PI * d);
        let dir = diff.map(|c| c / d);
        let (first, taps) = fractional_delay(d / medium.sound_speed * fs);
        if first >= len as i64 || first + (DELAY_TAPS as i64) <= 0 {
            continue;
        }
        for (i, tap) in taps.iter().enumerate() {
            let n = first + i as i64;
            if n < 0 || n >= len as i64 || *tap == 0.0 {
                continue;
            }
            let p = gain * tap;
            let n = n as usize;
            out[[0, n]] += p;
            out[[1, n]] += p * dir[0];
            out[[2, n]] += p * dir[1];
            out[[3, n]] += p * dir[2];
        }
    }
    Ok(out)
}

/// [`render_foa`] for a receiver that must lie inside the room's target cube.
pub fn render_foa_rir(
    room: &RoomSpec,
    receiver: &[f64; 3],
    images: &[ImageSource],
    fs: f64,
    len: usize,
    medium: &Medium,
) -> Result<Array2<f64>> {
    if !room.in_cube(receiver, 1e-9) {
        return Err(Error::Simulation(format!("receiver {receiver:?} is outside the target region")));
    }
    render_foa(receiver, images, fs, len, medium)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(pos: [f64; 3]) -> Vec<ImageSource> {
        vec![ImageSource {
            position: pos,
            amplitude: 1.0,
            order: 0,
        }]
    }

    #[test]
    fn integer_delay_is_a_unit_tap() {
        let (first, taps) = fractional_delay(24.0);
        assert_eq!(first + 31, 24);
        assert_eq!(taps.iter().filter(|t| **t != 0.0).count(), 1);
        assert_eq!(taps[31], 1.0);
    }

    #[test]
    fn fractional_taps_have_unit_dc_gain() {
        for d in [10.25, 10.5, 33.9] {
            let (_, taps) = fractional_delay(d);
            let sum: f64 = taps.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn free_field_amplitude_and_arrival() {
        let m = Medium::default();
        let fs = 8000.0;
        // 24 samples of travel
        let d = 24.0 * m.sound_speed / fs;
        let rir = render_foa(&[0.0; 3], &direct([d, 0.0, 0.0]), fs, 200, &m).unwrap();
        let (peak_idx, peak) = rir
            .row(0)
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv.abs() { (i, *v) } else { (bi, bv) });
        assert_eq!(peak_idx, 24);
        assert!((peak - 1.0 / (4.0 * PI * d)).abs() < 1e-15);
    }

    #[test]
    fn on_axis_source_encodes_only_x() {
        let m = Medium::default();
        let rir = render_foa(&[1.0, 2.0, 1.5], &direct([3.3, 2.0, 1.5]), 8000.0, 200, &m).unwrap();
        for n in 0..200 {
            assert_eq!(rir[[1, n]], rir[[0, n]]);
            assert!(rir[[2, n]].abs() <= 1e-12 * rir[[1, n]].abs());
            assert!(rir[[3, n]].abs() <= 1e-12 * rir[[1, n]].abs());
        }
    }

    #[test]
    fn coincident_receiver_is_an_error() {
        let m = Medium::default();
        let err = render_foa(&[1.0, 1.0, 1.0], &direct([1.0, 1.0, 1.0]), 8000.0, 10, &m).unwrap_err();
        assert!(matches!(err, Error::Simulation(_)));
    }
}
