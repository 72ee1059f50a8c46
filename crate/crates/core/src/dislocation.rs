//! Dislocation measures and the level-n event laws they induce.
//!
//! A [`ZElement`] is a finite, lexicographically nonincreasing list of
//! `(size, mark)` pairs; a [`DislocationMeasure`] is a finite weighted list of
//! them. Together with the erosion rate `c`, the log-mark drift `d` and the
//! Gaussian coefficient `beta` they form the [`Characteristics`] of a process.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, construction, precondition, EssfError, Result};
use crate::marked_partition::{lex_cmp, MarkedPartition};

/// Slack allowed on `Σ s_k ≤ 1`.
pub const SIZE_SUM_TOLERANCE: f64 = 1e-12;

/// `v^θ` with the convention `0^θ = 0` for every `θ`.
#[inline]
pub fn pow0(v: f64, theta: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.powf(theta)
    }
}

/// `log v₁ · 1{|log v₁| ≤ 1} · 1{v₁ > 0}`, the compensated part of a jump.
#[inline]
pub(crate) fn small_log(v: f64) -> f64 {
    if v > 0.0 {
        let y = v.ln();
        if y.abs() <= 1.0 {
            return y;
        }
    }
    0.0
}

/// An element of the space of nonincreasing `(size, mark)` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ZElement {
    pairs: Vec<(f64, f64)>,
}

impl ZElement {
    /// Validates and stores `pairs`. Trailing `(0, 0)` pairs are dropped.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (k, &(s, v)) in pairs.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return construction(format!("size {s} is not in [0, 1]"));
            }
            if !v.is_finite() || v < 0.0 {
                return construction(format!("mark {v} is not a finite nonnegative real"));
            }
            if s == 0.0 && v != 0.0 {
                return construction("a pair with size 0 must have mark 0");
            }
            if k > 0 && lex_cmp(pairs[k - 1], (s, v)).is_lt() {
                return construction("pairs must be lexicographically nonincreasing");
            }
            total += s;
        }
        if total > 1.0 + SIZE_SUM_TOLERANCE {
            return construction(format!("sizes sum to {total} > 1"));
        }
        let mut pairs = pairs;
        while pairs.last() == Some(&(0.0, 0.0)) {
            pairs.pop();
        }
        for p in &mut pairs {
            if p.1 == 0.0 {
                p.1 = 0.0;
            }
        }
        Ok(Self { pairs })
    }

    /// Sorts `pairs` into nonincreasing order, then validates.
    pub fn sorted(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| lex_cmp(*b, *a));
        Self::new(pairs)
    }

    /// The element `(1, v)`: no split, mark multiplied by `v`.
    pub fn unit(v: f64) -> Result<Self> {
        Self::new(vec![(1.0, v)])
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// `(s₁, v₁)`, or `(0, 0)` for the empty element.
    pub fn first(&self) -> (f64, f64) {
        self.pairs.first().copied().unwrap_or((0.0, 0.0))
    }

    pub fn size_sum(&self) -> f64 {
        self.pairs.iter().map(|p| p.0).sum()
    }

    /// True for `(1, v)` exactly.
    pub fn is_unit(&self) -> bool {
        self.pairs.len() == 1 && self.pairs[0].0 == 1.0
    }

    /// The integrand `1 − s₁·1{v₁>0} + min((log v₁)², 1)`, with the log term
    /// taken as 0 when `v₁ = 0`.
    pub fn integrability_integrand(&self) -> f64 {
        let (s1, v1) = self.first();
        if v1 > 0.0 {
            1.0 - s1 + v1.ln().powi(2).min(1.0)
        } else {
            1.0
        }
    }
}

/// A finite atomic measure on the space of [`ZElement`]s.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DislocationMeasure {
    atoms: Vec<(f64, ZElement)>,
    cumulative: Vec<f64>,
}

impl DislocationMeasure {
    pub fn new(atoms: Vec<(f64, ZElement)>) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for (w, z) in &atoms {
            if !w.is_finite() || *w <= 0.0 {
                return construction(format!("atom weight {w} is not a finite positive real"));
            }
            if z.pairs() == [(1.0, 1.0)] {
                return construction("the measure must not charge the identity element (1, 1)");
            }
            acc += w;
            cumulative.push(acc);
        }
        Ok(Self { atoms, cumulative })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// A single atom `weight·δ_z`.
    pub fn dirac(weight: f64, z: ZElement) -> Result<Self> {
        Self::new(vec![(weight, z)])
    }

    pub fn atoms(&self) -> &[(f64, ZElement)] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `|Λ|`, the total weight.
    pub fn total_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Draws an atom index with probability proportional to its weight.
    pub fn pick_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.total_mass();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1)
    }

    /// Keeps the atoms selected by `keep` and reports the integrability mass
    /// of the dropped ones.
    pub fn truncate<F>(&self, mut keep: F) -> (DislocationMeasure, f64)
    where
        F: FnMut(f64, &ZElement) -> bool,
    {
        let mut kept = Vec::new();
        let mut dropped = 0.0;
        for (w, z) in &self.atoms {
            if keep(*w, z) {
                kept.push((*w, z.clone()));
            } else {
                dropped += w * z.integrability_integrand();
            }
        }
        let measure = DislocationMeasure::new(kept).expect("subset of a valid measure");
        (measure, dropped)
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.atoms
                .iter()
                .map(|(w, z)| (w * factor, z.clone()))
                .collect(),
        )
    }
}

/// `Σ w·(1 − s₁·1{v₁>0} + min((log v₁)², 1))`.
pub fn integrability_value(lambda: &DislocationMeasure) -> f64 {
    lambda
        .atoms
        .iter()
        .map(|(w, z)| w * z.integrability_integrand())
        .sum()
}

/// The parameters `(α, c, d, β, Λ)` of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristics {
    alpha: f64,
    c: f64,
    d: f64,
    beta: f64,
    lambda: DislocationMeasure,
}

impl Characteristics {
    pub fn new(alpha: f64, c: f64, d: f64, beta: f64, lambda: DislocationMeasure) -> Result<Self> {
        if !alpha.is_finite() || !d.is_finite() {
            return construction("alpha and d must be finite");
        }
        if !c.is_finite() || c < 0.0 {
            return construction(format!("erosion rate c = {c} must be finite and >= 0"));
        }
        if !beta.is_finite() || beta < 0.0 {
            return construction(format!("beta = {beta} must be finite and >= 0"));
        }
        if !integrability_value(&lambda).is_finite() {
            return construction("dislocation measure is not integrable");
        }
        Ok(Self {
            alpha,
            c,
            d,
            beta,
            lambda,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn lambda(&self) -> &DislocationMeasure {
        &self.lambda
    }

    /// The same characteristics with index `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.c, self.d, self.beta, self.lambda.clone())
    }

    /// The homogeneous (`α = 0`) version.
    pub fn homogeneous(&self) -> Self {
        Self {
            alpha: 0.0,
            ..self.clone()
        }
    }

    /// Parses the TOML form described by [`CharacteristicsConfig`].
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CharacteristicsConfig =
            toml::from_str(s).map_err(|e| EssfError::Parse(e.to_string()))?;
        cfg.build()
    }

    pub fn to_config(&self) -> CharacteristicsConfig {
        CharacteristicsConfig {
            alpha: self.alpha,
            c: self.c,
            d: self.d,
            beta: self.beta,
            lambda: self
                .lambda
                .atoms
                .iter()
                .map(|(w, z)| AtomConfig {
                    weight: *w,
                    pairs: z.pairs.iter().map(|&(s, v)| [s, v]).collect(),
                })
                .collect(),
        }
    }
}

/// Serialized form of [`Characteristics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsConfig {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub lambda: Vec<AtomConfig>,
}

/// One weighted atom: `pairs = [[s, v], …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub weight: f64,
    pub pairs: Vec<[f64; 2]>,
}

impl AtomConfig {
    pub fn build(&self) -> Result<(f64, ZElement)> {
        let z = ZElement::new(self.pairs.iter().map(|p| (p[0], p[1])).collect())?;
        Ok((self.weight, z))
    }
}

impl CharacteristicsConfig {
    pub fn build_measure(&self) -> Result<DislocationMeasure> {
        let atoms = self
            .lambda
            .iter()
            .map(AtomConfig::build)
            .collect::<Result<Vec<_>>>()?;
        DislocationMeasure::new(atoms)
    }

    pub fn build(&self) -> Result<Characteristics> {
        Characteristics::new(self.alpha, self.c, self.d, self.beta, self.build_measure()?)
    }
}

/// Draws from the paintbox law `ρⁿ_z`.
pub fn sample_paintbox<R: Rng + ?Sized>(z: &ZElement, n: usize, rng: &mut R) -> MarkedPartition {
    let k = z.pairs.len();
    let mut cumulative = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &(s, _) in &z.pairs {
        acc += s;
        cumulative.push(acc);
    }
    let mut marks: Vec<f64> = z.pairs.iter().map(|p| p.1).collect();
    marks.resize(k + n, 0.0);
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let u = rng.random::<f64>();
            let j = cumulative.partition_point(|&t| t <= u);
            if j < k {
                j
            } else {
                k + i
            }
        })
        .collect();
    MarkedPartition::from_labels_lenient(&labels, &marks).expect("paintbox labels are valid")
}

/// `({[n]∖{i}, {i}}, (1, 0))` with `i` given as a 0-based index.
pub fn erosion_atom(n: usize, i: usize) -> Result<MarkedPartition> {
    if i >= n {
        return arg(format!("erosion index {} is outside 1..={n}", i + 1));
    }
    let labels: Vec<usize> = (0..n).map(|j| usize::from(j == i)).collect();
    MarkedPartition::from_labels_lenient(&labels, &[1.0, 0.0])
}

/// `J_n = n·c + Σ w·(1 − Σ_{v_i>0} s_iⁿ)`.
pub fn rate_j(ch: &Characteristics, n: usize) -> f64 {
    let branching: f64 = ch
        .lambda
        .atoms
        .iter()
        .map(|(w, z)| {
            let kept: f64 = z
                .pairs
                .iter()
                .filter(|p| p.1 > 0.0)
                .map(|p| p.0.powi(n as i32))
                .sum();
            w * (1.0 - kept)
        })
        .sum();
    n as f64 * ch.c + branching
}

/// Draws from the level-n dislocation law `𝒟_n` by thinning Poisson
/// proposals: erosion with probability `nc/(nc + |Λ|)`, otherwise a paintbox
/// draw that is rejected while it is a pure mark jump `(1_n, v > 0)`.
pub fn sample_dislocation<R: Rng + ?Sized>(
    ch: &Characteristics,
    n: usize,
    rng: &mut R,
) -> Result<MarkedPartition> {
    if n == 0 {
        return arg("level must be >= 1");
    }
    if rate_j(ch, n) <= 0.0 {
        return precondition(format!("level {n} never dislocates (J_n = 0)"));
    }
    let erosion = n as f64 * ch.c;
    let total = erosion + ch.lambda.total_mass();
    loop {
        if rng.random::<f64>() * total < erosion {
            return erosion_atom(n, rng.random_range(0..n));
        }
        let (_, z) = &ch.lambda.atoms[ch.lambda.pick_atom(rng)];
        let x = sample_paintbox(z, n, rng);
        if !(x.is_single_block() && x.marks()[0] > 0.0) {
            return Ok(x);
        }
    }
}

/// The level-n jump measure of the log mark: `(w·s_jⁿ, log v_j)` for every
/// pair with `v_j ∉ {0, 1}`, merged when jump values are exactly equal.
pub fn jump_measure_level(ch: &Characteristics, n: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (w, z) in &ch.lambda.atoms {
        for &(s, v) in &z.pairs {
            if v > 0.0 && v != 1.0 {
                let rate = w * s.powi(n as i32);
                let jump = v.ln();
                if rate <= 0.0 {
                    continue;
                }
                match out.iter_mut().find(|e| e.1 == jump) {
                    Some(e) => e.0 += rate,
                    None => out.push((rate, jump)),
                }
            }
        }
    }
    out
}

/// Drift of the log mark between Poisson events:
/// `d − Σ w·log v₁·1{|log v₁| ≤ 1}·1{v₁ > 0}`.
pub fn effective_drift(ch: &Characteristics) -> f64 {
    ch.d - ch
        .lambda
        .atoms
        .iter()
        .map(|(w, z)| w * small_log(z.first().1))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary(v: f64) -> DislocationMeasure {
        DislocationMeasure::dirac(1.0, ZElement::new(vec![(0.5, v), (0.5, v)]).unwrap()).unwrap()
    }

    fn ch(c: f64, d: f64, lambda: DislocationMeasure) -> Characteristics {
        Characteristics::new(0.0, c, d, 0.0, lambda).unwrap()
    }

    #[test]
    fn z_element_validation() {
        assert!(ZElement::new(vec![(0.5, 1.0), (0.6, 1.0)]).is_err());
        assert!(ZElement::new(vec![(0.3, 1.0), (0.5, 1.0)]).is_err());
        assert!(ZElement::new(vec![(0.0, 1.0)]).is_err());
        assert!(ZElement::new(vec![(0.5, -1.0)]).is_err());
        assert!(ZElement::new(vec![(0.5, 1.0), (0.5, 2.0)]).is_err());
        assert!(ZElement::new(vec![(0.5, 2.0), (0.5, 1.0)]).is_ok());
        let third = 1.0 / 3.0;
        assert!(ZElement::new(vec![(third, 1.0); 3]).is_ok());
        assert!(ZElement::new(vec![(0.5 + 1e-11, 1.0), (0.5, 1.0)]).is_err());
        let z = ZElement::new(vec![(0.5, 1.0), (0.0, 0.0)]).unwrap();
        assert_eq!(z.pairs(), &[(0.5, 1.0)]);
        assert!(DislocationMeasure::dirac(1.0, ZElement::unit(1.0).unwrap()).is_err());
        assert!(DislocationMeasure::dirac(0.0, ZElement::unit(0.5).unwrap()).is_err());
    }

    #[test]
    fn integrability_examples() {
        assert_eq!(integrability_value(&binary(1.0)), 0.5);
        let k = 2.5;
        let freeze = DislocationMeasure::dirac(k, ZElement::unit(0.0).unwrap()).unwrap();
        assert_eq!(integrability_value(&freeze), k);
        assert_eq!(integrability_value(&DislocationMeasure::empty()), 0.0);
    }

    #[test]
    fn truncation_reports_dropped_mass() {
        let lambda = DislocationMeasure::new(vec![
            (1.0, ZElement::new(vec![(0.5, 1.0), (0.5, 1.0)]).unwrap()),
            (3.0, ZElement::unit(0.0).unwrap()),
        ])
        .unwrap();
        let (kept, dropped) = lambda.truncate(|w, _| w < 2.0);
        assert_eq!(kept.atoms().len(), 1);
        assert_eq!(dropped, 3.0);
    }

    #[test]
    fn rate_j_examples() {
        let b = ch(0.0, 0.0, binary(1.0));
        assert_eq!(rate_j(&b, 1), 0.0);
        assert_eq!(rate_j(&b, 2), 0.5);
        assert_eq!(rate_j(&b, 3), 0.75);
        let e = ch(0.7, 0.0, DislocationMeasure::empty());
        assert_eq!(rate_j(&e, 5), 5.0 * 0.7);
        let f = ch(0.0, 0.0, DislocationMeasure::dirac(1.3, ZElement::unit(0.0).unwrap()).unwrap());
        for n in 1..6 {
            assert_eq!(rate_j(&f, n), 1.3);
        }
    }

    #[test]
    fn erosion_atom_examples() {
        let e = erosion_atom(3, 1).unwrap();
        assert_eq!(e.assignment(), &[0, 1, 0]);
        assert_eq!(e.marks(), &[1.0, 0.0]);
        let e = erosion_atom(1, 0).unwrap();
        assert_eq!(e, MarkedPartition::single_block(1, 0.0).unwrap());
        assert!(erosion_atom(3, 3).is_err());
        for n in 2..7 {
            for i in 0..n {
                for m in (i + 1)..n {
                    assert_eq!(
                        erosion_atom(n, i).unwrap().restrict(m).unwrap(),
                        erosion_atom(m, i).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn paintbox_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unit = ZElement::unit(0.3).unwrap();
        for n in 1..20 {
            assert_eq!(
                sample_paintbox(&unit, n, &mut rng),
                MarkedPartition::single_block(n, 0.3).unwrap()
            );
        }
        let empty = ZElement::new(vec![]).unwrap();
        let x = sample_paintbox(&empty, 5, &mut rng);
        assert_eq!(x, MarkedPartition::singletons(&[0.0; 5]).unwrap());
    }

    #[test]
    fn sample_dislocation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let freeze = ch(0.0, 0.0, DislocationMeasure::dirac(1.0, ZElement::unit(0.0).unwrap()).unwrap());
        for n in 1..5 {
            let x = sample_dislocation(&freeze, n, &mut rng).unwrap();
            assert_eq!(x, MarkedPartition::single_block(n, 0.0).unwrap());
        }
        let b = ch(0.0, 0.0, binary(1.0));
        for _ in 0..200 {
            let x = sample_dislocation(&b, 2, &mut rng).unwrap();
            assert_eq!(x, MarkedPartition::singletons(&[1.0, 1.0]).unwrap());
        }
        assert!(matches!(
            sample_dislocation(&b, 1, &mut rng),
            Err(EssfError::Precondition(_))
        ));

        let erosion = ch(0.5, 0.0, DislocationMeasure::empty());
        let mut counts = [0usize; 4];
        for _ in 0..8000 {
            let x = sample_dislocation(&erosion, 4, &mut rng).unwrap();
            let i = x.marks().iter().position(|&v| v == 0.0).unwrap();
            let who = x.assignment().iter().position(|&k| k as usize == i).unwrap();
            counts[who] += 1;
        }
        for c in counts {
            assert!((c as f64 - 2000.0).abs() < 4.0 * (8000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn jump_measure_examples() {
        assert!(jump_measure_level(&ch(0.0, 0.0, binary(1.0)), 3).is_empty());
        let y = -0.4f64;
        let unit = ch(0.0, 0.0, DislocationMeasure::dirac(1.0, ZElement::unit(y.exp()).unwrap()).unwrap());
        for n in 1..5 {
            assert_eq!(jump_measure_level(&unit, n), vec![(1.0, y.exp().ln())]);
        }
        let two = ch(
            0.0,
            0.0,
            DislocationMeasure::dirac(1.0, ZElement::new(vec![(0.5, 2.0), (0.5, 0.5)]).unwrap()).unwrap(),
        );
        assert_eq!(
            jump_measure_level(&two, 2),
            vec![(0.25, 2f64.ln()), (0.25, 0.5f64.ln())]
        );
        let merged = ch(0.0, 0.0, binary(0.5));
        assert_eq!(jump_measure_level(&merged, 2), vec![(0.5, 0.5f64.ln())]);
    }

    #[test]
    fn effective_drift_examples() {
        assert_eq!(effective_drift(&ch(0.0, 0.3, binary(1.0))), 0.3);
        let d = effective_drift(&ch(0.0, 0.0, binary(0.5)));
        assert!((d - 2f64.ln()).abs() < 1e-15);
        let big = ch(0.0, 0.0, DislocationMeasure::dirac(1.0, ZElement::unit(3f64.exp()).unwrap()).unwrap());
        assert_eq!(effective_drift(&big), 0.0);
    }

    #[test]
    fn toml_roundtrip() {
        let src = r#"
            alpha = -1.0
            c = 0.5
            d = -0.2
            lambda = [ { weight = 2.0, pairs = [[0.5, 0.5], [0.5, 0.5]] } ]
        "#;
        let ch = Characteristics::from_toml_str(src).unwrap();
        assert_eq!(ch.alpha(), -1.0);
        assert_eq!(ch.lambda().total_mass(), 2.0);
        let back = toml::to_string(&ch.to_config()).unwrap();
        assert_eq!(Characteristics::from_toml_str(&back).unwrap(), ch);
        assert!(Characteristics::from_toml_str("c = -1.0").is_err());
        assert!(Characteristics::from_toml_str("gamma = 1.0").is_err());
        assert!(Characteristics::from_toml_str("lambda = [{ weight = 1.0, pairs = [[1.0, 1.0]] }]").is_err());
    }
}
