//! Closed-form cumulants, their level-n versions, additive martingales, and
//! presets for classical fragmentations, branching Brownian motion and
//! growth-fragmentation cells.

use rayon::prelude::*;

use crate::dislocation::{
    pow0, rate_j, sample_dislocation, small_log, Characteristics, DislocationMeasure, ZElement,
};
use crate::error::{arg, construction, precondition, Result};
use crate::essf_sim::{replicate_rng, simulate_tracked, Level, SimOptions};
use crate::levy_mark::moment_exponent;
use crate::marked_partition::MarkedPartition;

/// `S_θ(x) = Σ_blocks markᶿ` with `0ᶿ = 0`.
pub fn additive_statistic(x: &MarkedPartition, theta: f64) -> f64 {
    x.marks().iter().map(|&v| pow0(v, theta)).sum()
}

/// `κ(θ) = dθ + βθ²/2 + Σ w·(Σ_i v_iᶿ − 1 − θ·log v₁·1{|log v₁| ≤ 1})`.
pub fn cumulant(ch: &Characteristics, theta: f64) -> f64 {
    let atoms: f64 = ch
        .lambda()
        .atoms()
        .iter()
        .map(|(w, z)| {
            let s: f64 = z.pairs().iter().map(|p| pow0(p.1, theta)).sum();
            w * (s - 1.0 - theta * small_log(z.first().1))
        })
        .sum();
    ch.d() * theta + 0.5 * ch.beta() * theta * theta + atoms
}

/// The level-n cumulant `κ⁽ⁿ⁾(θ) = A⁽ⁿ⁾(θ) + J_n·B⁽ⁿ⁾(θ)`.
///
/// Summing the mark-jump and dislocation parts over the whole paintbox law
/// gives `E[S_θ(ρⁿ_z)] = Σ_k v_kᶿ·(1 − (1 − s_k)ⁿ)`, since interval `k` yields
/// a block exactly when one of the `n` uniforms falls in it. Erosion only
/// matters at `n = 1`, where it freezes the single integer.
pub fn cumulant_level(ch: &Characteristics, n: usize, theta: f64) -> f64 {
    let atoms: f64 = ch
        .lambda()
        .atoms()
        .iter()
        .map(|(w, z)| {
            let s: f64 = z
                .pairs()
                .iter()
                .map(|&(s, v)| pow0(v, theta) * (1.0 - (1.0 - s).powi(n as i32)))
                .sum();
            w * (s - 1.0 - theta * small_log(z.first().1))
        })
        .sum();
    let erosion = if n == 1 { -ch.c() } else { 0.0 };
    ch.d() * theta + 0.5 * ch.beta() * theta * theta + atoms + erosion
}

/// Largest paintbox outcome space enumerated exactly.
pub const MAX_ENUMERATED_OUTCOMES: usize = 1 << 21;

/// `J_n·B⁽ⁿ⁾(θ)`: the rate-weighted mean of `S_θ − 1` over the level-n
/// dislocation law, by enumerating every assignment of the `n` paintbox
/// uniforms to intervals (or dust).
pub fn branching_term_enumerated(ch: &Characteristics, n: usize, theta: f64) -> Result<f64> {
    if n == 0 {
        return arg("level must be >= 1");
    }
    let erosion = if n == 1 { -1.0 } else { 0.0 };
    let mut total = n as f64 * ch.c() * erosion;
    for (w, z) in ch.lambda().atoms() {
        let pairs = z.pairs();
        let dust = (1.0 - z.size_sum()).max(0.0);
        // Outcome k < K is interval k, outcome K is dust.
        let mut probs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        probs.push(dust);
        let choices = probs.len();
        let count = choices
            .checked_pow(n as u32)
            .filter(|&c| c <= MAX_ENUMERATED_OUTCOMES)
            .ok_or_else(|| {
                crate::error::EssfError::Precondition(format!(
                    "{choices}^{n} paintbox outcomes are too many to enumerate"
                ))
            })?;
        let mut digits = vec![0usize; n];
        let mut hit = vec![false; choices];
        let mut expectation = 0.0;
        for _ in 0..count {
            let mut p = 1.0;
            hit.iter_mut().for_each(|h| *h = false);
            for &d in &digits {
                p *= probs[d];
                hit[d] = true;
            }
            if p > 0.0 {
                let first = digits[0];
                let one_block = first < pairs.len() && digits.iter().all(|&d| d == first);
                let jump = one_block && pairs[first].1 > 0.0;
                if !jump {
                    let s: f64 = (0..pairs.len())
                        .filter(|&k| hit[k])
                        .map(|k| pow0(pairs[k].1, theta))
                        .sum();
                    expectation += p * (s - 1.0);
                }
            }
            for d in digits.iter_mut() {
                *d += 1;
                if *d < choices {
                    break;
                }
                *d = 0;
            }
        }
        total += w * expectation;
    }
    Ok(total)
}

/// `κ⁽ⁿ⁾(θ)` from [`moment_exponent`] and [`branching_term_enumerated`].
pub fn cumulant_level_enumerated(ch: &Characteristics, n: usize, theta: f64) -> Result<f64> {
    Ok(moment_exponent(ch, n, theta) + branching_term_enumerated(ch, n, theta)?)
}

/// Monte Carlo estimate of `κ⁽ⁿ⁾(θ)` and its standard error, sampling
/// `samples` draws of the level-n dislocation law.
pub fn cumulant_level_monte_carlo(
    ch: &Characteristics,
    n: usize,
    theta: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let a = moment_exponent(ch, n, theta);
    let j = rate_j(ch, n);
    if j == 0.0 {
        return Ok((a, 0.0));
    }
    if samples < 2 {
        return arg("need at least two samples");
    }
    let values = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            sample_dislocation(ch, n, &mut rng).map(|x| additive_statistic(&x, theta) - 1.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_se(&values);
    Ok((a + j * mean, j * se))
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Minimizes a convex function on `[lo, hi]` by golden-section search.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Whether `κ` takes negative values away from 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSummary {
    pub minimizer: f64,
    pub minimum: f64,
    /// A `θ ≠ 0` with `κ(θ) < 0`, if one was found.
    pub negative_at: Option<f64>,
}

/// `κ` and `κ⁽ⁿ⁾` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantReport {
    pub thetas: Vec<f64>,
    pub kappa: Vec<f64>,
    pub levels: Vec<usize>,
    /// `kappa_n[i][j]` is `κ⁽ⁿ⁾` at `levels[i]` and `thetas[j]`.
    pub kappa_n: Vec<Vec<f64>>,
    pub sign: SignSummary,
}

/// Locates the minimum of `κ` on `interval` by golden-section search.
pub fn sign_summary(ch: &Characteristics, interval: (f64, f64)) -> SignSummary {
    let (x, fx) = golden_section_min(|t| cumulant(ch, t), interval.0, interval.1);
    let negative_at = if fx < 0.0 {
        if x != 0.0 {
            Some(x)
        } else {
            [1e-6, -1e-6].into_iter().find(|&t| cumulant(ch, t) < 0.0)
        }
    } else {
        None
    };
    SignSummary {
        minimizer: x,
        minimum: fx,
        negative_at,
    }
}

pub fn cumulant_report(
    ch: &Characteristics,
    thetas: &[f64],
    levels: &[usize],
    interval: (f64, f64),
) -> CumulantReport {
    CumulantReport {
        thetas: thetas.to_vec(),
        kappa: thetas.iter().map(|&t| cumulant(ch, t)).collect(),
        levels: levels.to_vec(),
        kappa_n: levels
            .iter()
            .map(|&n| thetas.iter().map(|&t| cumulant_level(ch, n, t)).collect())
            .collect(),
        sign: sign_summary(ch, interval),
    }
}

impl CumulantReport {
    /// CSV rows `theta,kappa,kappa_n_<n>…,mc_mean,mc_se`; the Monte Carlo
    /// columns are left empty when `mc` is `None`.
    pub fn to_csv(&self, mc: Option<&[(f64, f64)]>) -> String {
        let mut out = String::from("theta,kappa");
        for n in &self.levels {
            out.push_str(&format!(",kappa_n_{n}"));
        }
        out.push_str(",mc_mean,mc_se\n");
        for (j, t) in self.thetas.iter().enumerate() {
            out.push_str(&format!("{t},{}", self.kappa[j]));
            for row in &self.kappa_n {
                out.push_str(&format!(",{}", row[j]));
            }
            match mc.and_then(|m| m.get(j)) {
                Some((m, s)) => out.push_str(&format!(",{m},{s}\n")),
                None => out.push_str(",,\n"),
            }
        }
        out
    }
}

/// Mean of the normalized additive statistic at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Normalizing exponent for [`martingale_samples`]: `κ⁽ⁿ⁾(θ)` at a finite
/// level, `κ(θ)` at the infinite one.
pub fn level_cumulant(ch: &Characteristics, level: Level, theta: f64) -> f64 {
    match level {
        Level::Finite(n) => cumulant_level(ch, n, theta),
        Level::Infinite => cumulant(ch, theta),
    }
}

/// `e^{−tκ}·S_θ(t)` for each replicate (outer) and time (inner) of the
/// tracked particle system at `level`, normalized by `kappa`.
pub fn martingale_samples(
    ch: &Characteristics,
    theta: f64,
    kappa: f64,
    times: &[f64],
    replicates: usize,
    level: Level,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() {
        return arg("need at least one time");
    }
    if ch.alpha() != 0.0 {
        return precondition("martingale estimates use the homogeneous clock (alpha = 0)");
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let horizon = sorted.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let opts = SimOptions::new(horizon).with_query_times(sorted);
    (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let pop = simulate_tracked(ch, level, &opts, &mut rng)?;
            times
                .iter()
                .map(|&t| Ok((-t * kappa).exp() * pop.additive_statistic_at(t, theta)?))
                .collect()
        })
        .collect()
}

/// Monte Carlo means of `e^{−tκ}·S_θ(t)` with 95% normal intervals.
pub fn martingale_estimate(
    ch: &Characteristics,
    theta: f64,
    times: &[f64],
    replicates: usize,
    level: Level,
    seed: u64,
) -> Result<Vec<MartingalePoint>> {
    let kappa = level_cumulant(ch, level, theta);
    let samples = martingale_samples(ch, theta, kappa, times, replicates, level, seed)?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column: Vec<f64> = samples.iter().map(|r| r[j]).collect();
            let (mean, se) = mean_se(&column);
            MartingalePoint {
                t,
                mean,
                se,
                ci_low: mean - 1.959963984540054 * se,
                ci_high: mean + 1.959963984540054 * se,
            }
        })
        .collect())
}

/// A self-similar fragmentation with sizes as marks: `d` is chosen so that
/// `κ(θ) = −cθ + Σ w·(Σ s_iᶿ − 1)`.
pub fn classical_preset(nu: &DislocationMeasure, c: f64, alpha: f64) -> Result<Characteristics> {
    for (_, z) in nu.atoms() {
        if z.pairs().iter().any(|&(s, v)| s != v) {
            return arg("classical preset needs marks equal to sizes in every atom");
        }
    }
    let d = -c + nu
        .atoms()
        .iter()
        .map(|(w, z)| w * small_log(z.first().0))
        .sum::<f64>();
    Characteristics::new(alpha, c, d, 0.0, nu.clone())
}

/// Binary branching Brownian motion with drift `drift`.
pub fn bbm_preset(drift: f64) -> Characteristics {
    let z = ZElement::new(vec![(0.5, 1.0), (0.5, 1.0)]).expect("valid element");
    let lambda = DislocationMeasure::dirac(1.0, z).expect("valid measure");
    Characteristics::new(0.0, 0.0, drift, 1.0, lambda).expect("valid characteristics")
}

/// A growth-fragmentation cell: log-size drift and Gaussian part, negative
/// jumps `y` at the given rates, and killing at rate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFragmentationCell {
    pub alpha: f64,
    pub drift: f64,
    pub beta: f64,
    /// `(rate, y)` with `y < 0`.
    pub jumps: Vec<(f64, f64)>,
    pub killing: f64,
}

impl GrowthFragmentationCell {
    /// `φ(q) = −k + βq²/2 + dq + Σ rate·(e^{yq} − 1 − qy·1{y > −1})`.
    pub fn phi(&self, q: f64) -> f64 {
        let jumps: f64 = self
            .jumps
            .iter()
            .map(|&(r, y)| {
                let comp = if y > -1.0 { q * y } else { 0.0 };
                r * ((y * q).exp() - 1.0 - comp)
            })
            .sum();
        -self.killing + 0.5 * self.beta * q * q + self.drift * q + jumps
    }

    /// `φ(q) + Σ rate·(1 − e^y)^q`.
    pub fn cumulant(&self, q: f64) -> f64 {
        self.phi(q)
            + self
                .jumps
                .iter()
                .map(|&(r, y)| r * pow0(-y.exp_m1(), q))
                .sum::<f64>()
    }
}

/// Size of the first fragment produced by a jump `y` of the cell's log size.
#[derive(Debug, Clone, Copy)]
pub enum S1Choice {
    /// `s₁(y) = e^y·(1 − y)`.
    ExpLinear,
    /// `s₁(y) = e^{−y²}`.
    Gaussian,
    Custom(fn(f64) -> f64),
}

impl S1Choice {
    pub fn apply(&self, y: f64) -> f64 {
        match self {
            S1Choice::ExpLinear => y.exp() * (1.0 - y),
            S1Choice::Gaussian => (-y * y).exp(),
            S1Choice::Custom(f) => f(y),
        }
    }
}

/// Embeds a growth-fragmentation cell as a process on marked partitions.
///
/// Jumps below `−log 2` are first replaced by `log(1 − e^y)`, which swaps the
/// roles of the two fragments and leaves `κ` unchanged once the drift absorbs
/// the change in compensation. Each jump then becomes the element
/// `((s₁(y), e^y), (1 − s₁(y), 1 − e^y))`, and killing becomes a freezing atom.
pub fn gf_embedding(cell: &GrowthFragmentationCell, s1: S1Choice) -> Result<Characteristics> {
    if !(cell.killing >= 0.0 && cell.killing.is_finite()) {
        return construction("killing rate must be finite and >= 0");
    }
    let mut drift = cell.drift;
    let mut atoms = Vec::with_capacity(cell.jumps.len() + 1);
    for &(rate, y) in &cell.jumps {
        if !(rate > 0.0 && rate.is_finite()) {
            return construction(format!("jump rate {rate} must be finite and > 0"));
        }
        if !(y < 0.0 && y.is_finite()) {
            return construction(format!("jump {y} must be finite and < 0"));
        }
        let y_kept = if y < -std::f64::consts::LN_2 {
            let flipped = (-y.exp()).ln_1p();
            let comp = if y > -1.0 { y } else { 0.0 };
            drift += rate * (flipped - comp);
            flipped
        } else {
            y
        };
        let s = s1.apply(y_kept);
        let v1 = y_kept.exp();
        let z = ZElement::new(vec![(s, v1), (1.0 - s, -y_kept.exp_m1())])?;
        atoms.push((rate, z));
    }
    if cell.killing > 0.0 {
        atoms.push((cell.killing, ZElement::unit(0.0)?));
    }
    Characteristics::new(cell.alpha, 0.0, drift, cell.beta, DislocationMeasure::new(atoms)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(v: f64) -> DislocationMeasure {
        DislocationMeasure::dirac(1.0, ZElement::new(vec![(0.5, v), (0.5, v)]).unwrap()).unwrap()
    }

    #[test]
    fn additive_statistic_examples() {
        let x = MarkedPartition::single_block(3, 0.4).unwrap();
        assert_eq!(additive_statistic(&x, 2.0), 0.4f64.powi(2));
        let f = MarkedPartition::single_block(3, 0.0).unwrap();
        assert_eq!(additive_statistic(&f, 0.0), 0.0);
        let two = MarkedPartition::singletons(&[0.5, 0.5]).unwrap();
        assert_eq!(additive_statistic(&two, 1.0), 1.0);
        let frozen = MarkedPartition::singletons(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(additive_statistic(&frozen, -1.0), 0.0);
    }

    #[test]
    fn cumulant_examples() {
        let bbm = bbm_preset(0.3);
        for t in [-2.0, 0.0, 0.5, 3.0] {
            assert!((cumulant(&bbm, t) - (0.3 * t + t * t / 2.0 + 1.0)).abs() < 1e-12);
        }
        assert!((cumulant(&bbm_preset(2.0), -2.0) + 1.0).abs() < 1e-12);
        let c = 0.5;
        let cl = classical_preset(&binary(0.5), c, 0.0).unwrap();
        for t in [0.5, 1.0, 2.0, 3.0] {
            let expected = 2f64.powf(1.0 - t) - 1.0 - c * t;
            assert!((cumulant(&cl, t) - expected).abs() < 1e-12);
        }
        let k = 0.8;
        let freeze = Characteristics::new(
            0.0,
            0.0,
            0.0,
            0.0,
            DislocationMeasure::dirac(k, ZElement::unit(0.0).unwrap()).unwrap(),
        )
        .unwrap();
        for t in [-1.0, 0.0, 2.0] {
            assert_eq!(cumulant(&freeze, t), -k);
        }
    }

    #[test]
    fn classical_preset_examples() {
        let b = classical_preset(&binary(0.5), 0.0, 0.0).unwrap();
        assert_eq!(b.d(), 0.5f64.ln());
        assert!(cumulant(&b, 1.0).abs() < 1e-15);
        let e = classical_preset(&binary(0.5), 0.5, -1.0).unwrap();
        assert!((cumulant(&e, 1.0) + 0.5).abs() < 1e-15);
        let empty = classical_preset(&DislocationMeasure::empty(), 0.0, 0.0).unwrap();
        assert_eq!(cumulant(&empty, 2.3), 0.0);
        assert!(classical_preset(&binary(1.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn bbm_minimum() {
        let s = sign_summary(&bbm_preset(1.0), (-10.0, 10.0));
        assert!((s.minimum - 0.5).abs() < 1e-9);
        assert!(s.negative_at.is_none());
        let s = sign_summary(&bbm_preset(2.0), (-10.0, 10.0));
        assert!(s.minimum < 0.0);
        assert!(cumulant(&bbm_preset(2.0), s.negative_at.unwrap()) < 0.0);
    }

    #[test]
    fn level_cumulant_examples() {
        let b = Characteristics::new(0.0, 0.0, 0.0, 0.0, binary(1.0)).unwrap();
        assert_eq!(cumulant_level(&b, 1, 0.7), 0.0);
        assert_eq!(cumulant_level(&b, 2, 1.3), 0.5);
        assert!((branching_term_enumerated(&b, 2, 1.3).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(moment_exponent(&b, 2, 1.3), 0.0);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let z1 = ZElement::new(vec![(0.5, 2.0), (0.3, 0.5)]).unwrap();
        let z2 = ZElement::new(vec![(0.6, 0.0), (0.2, 0.7), (0.2, 0.1)]).unwrap();
        let z3 = ZElement::unit(0.25).unwrap();
        let lambda = DislocationMeasure::new(vec![(1.5, z1), (0.4, z2), (0.9, z3)]).unwrap();
        let ch = Characteristics::new(0.0, 0.3, -0.1, 0.6, lambda).unwrap();
        for n in 1..=6 {
            for t in [-1.0, 0.0, 0.5, 1.0, 2.5] {
                let a = cumulant_level(&ch, n, t);
                let b = cumulant_level_enumerated(&ch, n, t).unwrap();
                assert!((a - b).abs() < 1e-12, "n={n} θ={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn monte_carlo_level_cumulant() {
        let ch = classical_preset(&binary(0.5), 0.2, 0.0).unwrap();
        let (m, se) = cumulant_level_monte_carlo(&ch, 3, 2.0, 20_000, 11).unwrap();
        let exact = cumulant_level(&ch, 3, 2.0);
        assert!((m - exact).abs() < 4.0 * se + 1e-12, "{m} ± {se} vs {exact}");
    }

    #[test]
    fn gf_examples() {
        let empty = GrowthFragmentationCell {
            alpha: 0.0,
            drift: 0.4,
            beta: 0.3,
            jumps: vec![],
            killing: 0.0,
        };
        let ch = gf_embedding(&empty, S1Choice::ExpLinear).unwrap();
        assert!(ch.lambda().is_empty());
        assert!((cumulant(&ch, 2.0) - (0.8 + 0.6)).abs() < 1e-12);

        let half = GrowthFragmentationCell {
            jumps: vec![(1.0, -std::f64::consts::LN_2)],
            ..empty.clone()
        };
        let ch = gf_embedding(&half, S1Choice::ExpLinear).unwrap();
        let q = 2.0;
        assert!((cumulant(&ch, q) - half.phi(q) - 0.25).abs() < 1e-12);

        let killed = GrowthFragmentationCell {
            killing: 0.7,
            ..half.clone()
        };
        let ck = gf_embedding(&killed, S1Choice::ExpLinear).unwrap();
        for q in [1.0, 2.0, 3.0] {
            assert!((cumulant(&ck, q) - cumulant(&ch, q) + 0.7).abs() < 1e-12);
        }

        let bad = S1Choice::Custom(|_| 0.2);
        assert!(gf_embedding(&half, bad).is_err());
    }

    #[test]
    fn csv_shape() {
        let r = cumulant_report(&bbm_preset(0.0), &[0.0, 1.0], &[1, 2], (-10.0, 10.0));
        let csv = r.to_csv(None);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "theta,kappa,kappa_n_1,kappa_n_2,mc_mean,mc_se");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",,"));
    }
}
