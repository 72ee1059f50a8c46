//! Log-mark dynamics: level-n Lévy exponents, the continuous part of the log
//! mark between Poisson events, and the Lamperti integral `∫ v^α` that turns
//! homogeneous time into self-similar time.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dislocation::{effective_drift, jump_measure_level, pow0, small_log, Characteristics};
use crate::error::{arg, precondition, Result};

/// Below this value of `|α·drift·h|` the exact integral uses its limit `h·v₀^α`.
pub const SMALL_EXPONENT: f64 = 1e-8;

/// Relative change tolerated when the trapezoid grid is coarsened by 2.
pub const GRID_SELF_CHECK: f64 = 1e-4;

/// Default trapezoid step for diffusive segments.
pub const DEFAULT_H_GRID: f64 = 1e-3;

/// Drift, Gaussian coefficient and finite jump measure of the level-n log mark.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    pub drift: f64,
    pub gaussian: f64,
    /// `(rate, jump)` pairs.
    pub jumps: Vec<(f64, f64)>,
}

impl LevyTriplet {
    pub fn for_level(ch: &Characteristics, n: usize) -> Self {
        Self {
            drift: effective_drift(ch),
            gaussian: ch.beta(),
            jumps: jump_measure_level(ch, n),
        }
    }
}

/// `A⁽ⁿ⁾(θ) = dθ + βθ²/2 + Σ w·(Σ_{v_i>0} s_iⁿ(v_iᶿ − 1) − θ·log v₁·1{|log v₁| ≤ 1})`.
pub fn moment_exponent(ch: &Characteristics, n: usize, theta: f64) -> f64 {
    let atoms: f64 = ch
        .lambda()
        .atoms()
        .iter()
        .map(|(w, z)| {
            let moved: f64 = z
                .pairs()
                .iter()
                .filter(|p| p.1 > 0.0)
                .map(|&(s, v)| s.powi(n as i32) * (pow0(v, theta) - 1.0))
                .sum();
            w * (moved - theta * small_log(z.first().1))
        })
        .sum();
    ch.d() * theta + 0.5 * ch.beta() * theta * theta + atoms
}

/// The log mark on an interval free of jumps.
///
/// When `gaussian > 0`, `samples` holds the simulated interior points
/// (query times, grid points and null-event times); `grid_step` is set when
/// those points include a full grid of that spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkPathSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub log_mark_start: f64,
    pub log_mark_end: f64,
    pub drift: f64,
    pub gaussian: f64,
    pub samples: Vec<(f64, f64)>,
    pub grid_step: Option<f64>,
}

impl MarkPathSegment {
    /// A deterministic segment, possibly of infinite length.
    pub fn deterministic(t_start: f64, t_end: f64, log_mark_start: f64, drift: f64) -> Self {
        let log_mark_end = if t_end.is_finite() {
            log_mark_start + drift * (t_end - t_start)
        } else {
            log_mark_start + drift * f64::INFINITY
        };
        Self {
            t_start,
            t_end,
            log_mark_start,
            log_mark_end,
            drift,
            gaussian: 0.0,
            samples: Vec::new(),
            grid_step: None,
        }
    }

    pub fn is_diffusive(&self) -> bool {
        self.gaussian > 0.0
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Appends a continuation that starts where `self` ends.
    pub fn extend(&mut self, next: MarkPathSegment) {
        debug_assert_eq!(self.t_end, next.t_start);
        if self.is_diffusive() {
            if self.t_end > self.t_start {
                self.samples.push((self.t_end, self.log_mark_end));
            }
            self.samples.extend(next.samples);
            self.log_mark_end = next.log_mark_end;
            self.grid_step = match (self.grid_step, next.grid_step) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
        } else {
            self.log_mark_end = self.log_mark_start + self.drift * (next.t_end - self.t_start);
        }
        self.t_end = next.t_end;
    }

    /// The log mark at `t`, when it is known exactly: any time for
    /// deterministic segments, endpoints and samples otherwise.
    pub fn log_mark_at(&self, t: f64) -> Option<f64> {
        if !(self.t_start..=self.t_end).contains(&t) {
            return None;
        }
        if t == self.t_start {
            return Some(self.log_mark_start);
        }
        if t == self.t_end {
            return Some(self.log_mark_end);
        }
        if !self.is_diffusive() {
            return Some(self.log_mark_start + self.drift * (t - self.t_start));
        }
        self.samples
            .binary_search_by(|p| p.0.total_cmp(&t))
            .ok()
            .map(|i| self.samples[i].1)
    }

    /// Exact value where known, otherwise linear interpolation between the
    /// surrounding samples.
    pub fn log_mark_interpolated(&self, t: f64) -> Option<f64> {
        if let Some(v) = self.log_mark_at(t) {
            return Some(v);
        }
        if !(self.t_start..=self.t_end).contains(&t) {
            return None;
        }
        let points = self.points();
        let i = points.partition_point(|p| p.0 <= t);
        let (a, b) = (points[i - 1], points[i]);
        Some(a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0))
    }

    /// Start point, interior samples and end point.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut p = Vec::with_capacity(self.samples.len() + 2);
        p.push((self.t_start, self.log_mark_start));
        p.extend_from_slice(&self.samples);
        if self.t_end > self.t_start {
            p.push((self.t_end, self.log_mark_end));
        }
        p
    }
}

/// Simulates the continuous part of the log mark over `[t0, t0 + dt]`.
///
/// Gaussian increments are drawn forward at the query times inside the
/// interval, at the grid points when `grid_step` is given, and at the end.
pub fn evolve_mark<R: Rng + ?Sized>(
    start: (f64, f64),
    dt: f64,
    drift: f64,
    gaussian: f64,
    rng: &mut R,
    query_times: &[f64],
    grid_step: Option<f64>,
) -> MarkPathSegment {
    evolve_mark_until(start, start.0 + dt, drift, gaussian, rng, query_times, grid_step)
}

/// [`evolve_mark`] with an explicit end time, so that segment boundaries
/// coincide exactly with event times.
pub(crate) fn evolve_mark_until<R: Rng + ?Sized>(
    start: (f64, f64),
    t1: f64,
    drift: f64,
    gaussian: f64,
    rng: &mut R,
    query_times: &[f64],
    grid_step: Option<f64>,
) -> MarkPathSegment {
    let (t0, l0) = start;
    if gaussian == 0.0 {
        return MarkPathSegment::deterministic(t0, t1, l0, drift);
    }
    let lo = query_times.partition_point(|&q| q <= t0);
    let hi = query_times.partition_point(|&q| q < t1);
    let mut times: Vec<f64> = query_times[lo..hi].to_vec();
    if let Some(h) = grid_step {
        let mut k = 1.0;
        loop {
            let t = t0 + k * h;
            if t >= t1 {
                break;
            }
            times.push(t);
            k += 1.0;
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
    }
    let sd = gaussian.sqrt();
    let mut samples = Vec::with_capacity(times.len());
    let (mut t, mut l) = (t0, l0);
    for &s in &times {
        let h = s - t;
        let z: f64 = rng.sample(StandardNormal);
        l += drift * h + sd * h.sqrt() * z;
        t = s;
        samples.push((t, l));
    }
    let h = t1 - t;
    let z: f64 = rng.sample(StandardNormal);
    l += drift * h + sd * h.sqrt() * z;
    MarkPathSegment {
        t_start: t0,
        t_end: t1,
        log_mark_start: l0,
        log_mark_end: l,
        drift,
        gaussian,
        samples,
        grid_step,
    }
}

fn exact_integral(base: f64, a: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    if h.is_infinite() {
        return if a < 0.0 { base / -a } else { f64::INFINITY };
    }
    if (a * h).abs() < SMALL_EXPONENT {
        h * base
    } else {
        base * (a * h).exp_m1() / a
    }
}

fn trapezoid(points: &[(f64, f64)], alpha: f64, stride: usize) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).step_by(stride).collect();
    if *idx.last().unwrap() != points.len() - 1 {
        idx.push(points.len() - 1);
    }
    idx.windows(2)
        .map(|w| {
            let (a, b) = (points[w[0]], points[w[1]]);
            0.5 * (b.0 - a.0) * ((alpha * a.1).exp() + (alpha * b.1).exp())
        })
        .sum()
}

/// `∫ exp(α·log_mark(s)) ds` over the segment together with the relative
/// change seen when the grid is coarsened by a factor 2 (0 when exact).
pub fn lamperti_integral_checked(seg: &MarkPathSegment, alpha: f64) -> Result<(f64, f64)> {
    if alpha == 0.0 {
        return Ok((seg.duration(), 0.0));
    }
    if !seg.is_diffusive() {
        let base = (alpha * seg.log_mark_start).exp();
        return Ok((exact_integral(base, alpha * seg.drift, seg.duration()), 0.0));
    }
    if seg.grid_step.is_none() {
        return precondition("diffusive segment has no integration grid");
    }
    let points = seg.points();
    if points.len() < 2 {
        return Ok((0.0, 0.0));
    }
    let fine = trapezoid(&points, alpha, 1);
    let coarse = trapezoid(&points, alpha, 2);
    let change = if fine > 0.0 {
        (fine - coarse).abs() / fine
    } else {
        0.0
    };
    Ok((fine, change))
}

/// `∫ exp(α·log_mark(s)) ds` over the segment: exact without a Gaussian part,
/// trapezoidal on the recorded grid otherwise.
pub fn lamperti_integral(seg: &MarkPathSegment, alpha: f64) -> Result<f64> {
    let (value, change) = lamperti_integral_checked(seg, alpha)?;
    if change > GRID_SELF_CHECK {
        log::warn!(
            "trapezoid grid on [{}, {}] changes by {change:.2e} when coarsened",
            seg.t_start,
            seg.t_end
        );
    }
    Ok(value)
}

/// Sum of [`lamperti_integral`] over consecutive segments.
pub fn lamperti_integral_path(segments: &[MarkPathSegment], alpha: f64) -> Result<f64> {
    segments.iter().map(|s| lamperti_integral(s, alpha)).sum()
}

fn invert_in_segment(seg: &MarkPathSegment, alpha: f64, r: f64) -> f64 {
    if alpha == 0.0 {
        return seg.t_start + r;
    }
    if !seg.is_diffusive() {
        let base = (alpha * seg.log_mark_start).exp();
        let a = alpha * seg.drift;
        let h = seg.duration();
        let u = if a == 0.0 || (h.is_finite() && (a * h).abs() < SMALL_EXPONENT) {
            r / base
        } else {
            (a * r / base).max(-1.0).ln_1p() / a
        };
        return seg.t_start + u.min(h);
    }
    let points = seg.points();
    let mut r = r;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b.0 - a.0;
        let fa = (alpha * a.1).exp();
        let fb = (alpha * b.1).exp();
        let piece = 0.5 * h * (fa + fb);
        if r <= piece {
            // The trapezoid integrand is linear on the piece: solve the quadratic.
            let k = (fb - fa) / h;
            let disc = (fa * fa + 2.0 * k * r).max(0.0);
            let u = 2.0 * r / (fa + disc.sqrt());
            return a.0 + u.min(h);
        }
        r -= piece;
    }
    seg.t_end
}

/// First time `u` at which `∫ exp(α·log_mark)` accumulated from the start of
/// `segments` reaches `target`; `+∞` when the path never accumulates that much.
pub fn lamperti_inverse(segments: &[MarkPathSegment], alpha: f64, target: f64) -> Result<f64> {
    if !(target >= 0.0) {
        return arg(format!("target {target} must be >= 0"));
    }
    let first = match segments.first() {
        Some(s) => s,
        None => return Ok(f64::INFINITY),
    };
    if target == 0.0 {
        return Ok(first.t_start);
    }
    let mut remaining = target;
    for seg in segments {
        let (total, _) = lamperti_integral_checked(seg, alpha)?;
        if remaining <= total {
            return Ok(invert_in_segment(seg, alpha, remaining));
        }
        remaining -= total;
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dislocation::{DislocationMeasure, ZElement};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ch(d: f64, beta: f64, lambda: DislocationMeasure) -> Characteristics {
        Characteristics::new(0.0, 0.0, d, beta, lambda).unwrap()
    }

    #[test]
    fn moment_exponent_examples() {
        let e = ch(0.7, 0.0, DislocationMeasure::empty());
        assert_eq!(moment_exponent(&e, 3, 2.0), 1.4);
        let g = ch(0.0, 1.0, DislocationMeasure::empty());
        assert_eq!(moment_exponent(&g, 3, 3.0), 4.5);
        let z = ZElement::new(vec![(0.5, 0.5), (0.5, 0.5)]).unwrap();
        let h = ch(-(2f64.ln()), 0.0, DislocationMeasure::dirac(1.0, z).unwrap());
        assert!((moment_exponent(&h, 2, 1.0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn moment_exponent_at_zero() {
        let z = ZElement::new(vec![(0.6, 2.0), (0.3, 0.5)]).unwrap();
        let all_positive = ch(0.3, 0.2, DislocationMeasure::dirac(1.5, z).unwrap());
        assert_eq!(moment_exponent(&all_positive, 4, 0.0), 0.0);
        // Landing in a frozen block is a level-n event, so it is not movement.
        let z = ZElement::new(vec![(0.6, 2.0), (0.3, 0.0)]).unwrap();
        let frozen_part = ch(0.0, 0.0, DislocationMeasure::dirac(2.0, z).unwrap());
        assert_eq!(moment_exponent(&frozen_part, 2, 0.0), 0.0);
        let j = crate::dislocation::rate_j(&frozen_part, 2);
        assert!((j - 2.0 * (1.0 - 0.36)).abs() < 1e-15);
    }

    #[test]
    fn evolve_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = evolve_mark((1.0, 0.5), 2.0, -0.25, 0.0, &mut rng, &[1.5, 2.0], None);
        assert_eq!(s.log_mark_end, 0.0);
        assert!(s.samples.is_empty());
        assert_eq!(s.log_mark_at(2.0), Some(0.25));
    }

    #[test]
    fn evolve_records_queries_and_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = evolve_mark((0.0, 0.0), 1.0, 0.0, 1.0, &mut rng, &[0.25, 0.5, 1.5], Some(0.1));
        assert!(s.samples.iter().any(|p| p.0 == 0.25));
        assert!(s.samples.iter().any(|p| p.0 == 0.5));
        assert!(s.samples.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(s.samples.iter().all(|p| p.0 > 0.0 && p.0 < 1.0));
        assert!(s.log_mark_at(0.25).is_some());
        assert!(s.log_mark_at(0.33).is_none());
    }

    #[test]
    fn lamperti_examples() {
        let s = MarkPathSegment::deterministic(0.0, 3.0, 2f64.ln(), 0.0);
        assert!((lamperti_integral(&s, 1.0).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(lamperti_integral(&s, 0.0).unwrap(), 3.0);
        let inf = MarkPathSegment::deterministic(0.0, f64::INFINITY, 0.0, -1.0);
        assert_eq!(lamperti_integral(&inf, 1.0).unwrap(), 1.0);
        assert_eq!(lamperti_integral(&inf, -1.0).unwrap(), f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = evolve_mark((0.0, 0.0), 1.0, 0.0, 1.0, &mut rng, &[], None);
        assert!(lamperti_integral(&g, 1.0).is_err());
        assert_eq!(lamperti_integral(&g, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn exact_integral_matches_quadrature() {
        let s = MarkPathSegment::deterministic(0.5, 2.5, 0.3, -0.7);
        let alpha = 1.3;
        let m = 200_000;
        let h = 2.0 / m as f64;
        let quad: f64 = (0..m)
            .map(|k| {
                let t = 0.5 + (k as f64 + 0.5) * h;
                (alpha * (0.3 - 0.7 * (t - 0.5))).exp() * h
            })
            .sum();
        assert!((lamperti_integral(&s, alpha).unwrap() - quad).abs() < 1e-9);
        let tiny = MarkPathSegment::deterministic(0.0, 1.0, 0.2, 1e-12);
        let v = lamperti_integral(&tiny, 1.0).unwrap();
        assert!((v - 0.2f64.exp()).abs() < 1e-11);
    }

    #[test]
    fn inverse_examples() {
        let s = MarkPathSegment::deterministic(0.0, 10.0, 0.0, 0.0);
        assert_eq!(lamperti_inverse(std::slice::from_ref(&s), 0.0, 3.0).unwrap(), 3.0);
        let v: f64 = 2.5;
        let c = MarkPathSegment::deterministic(0.0, 100.0, v.ln(), 0.0);
        let u = lamperti_inverse(&[c], -1.0, 4.0).unwrap();
        assert!((u - 4.0 * v).abs() < 1e-12);
        assert_eq!(lamperti_inverse(&[s], 1.0, 10.5).unwrap(), f64::INFINITY);
        assert_eq!(lamperti_inverse(&[], 1.0, 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn diffusive_trapezoid_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = evolve_mark((0.0, 0.1), 2.0, 0.2, 0.5, &mut rng, &[], Some(1e-3));
        let total = lamperti_integral(&s, 1.0).unwrap();
        for frac in [0.1, 0.5, 0.9] {
            let u = lamperti_inverse(std::slice::from_ref(&s), 1.0, frac * total).unwrap();
            let mut prefix = s.clone();
            prefix.samples.retain(|p| p.0 < u);
            prefix.t_end = u;
            prefix.log_mark_end = s.log_mark_interpolated(u).unwrap();
            let back = lamperti_integral(&prefix, 1.0).unwrap();
            assert!((back - frac * total).abs() < 1e-6 * total);
        }
    }
}
