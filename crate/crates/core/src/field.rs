//! The law of a single random-field entry and the scalar expectations built on it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::real::{log_cosh, sech2, Real};

/// Relative accuracy of every field expectation.
pub const EXPECTATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldDistribution<T> {
    PointMass { a: T },
    /// Takes value `a` with probability `p`, else `b`.
    TwoPoint { a: T, b: T, p: T },
    Uniform { lo: T, hi: T },
    Gaussian { mean: T, sd: T },
    Empirical { values: Vec<T> },
}

/// Which `g` a [`field_functional`] call averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    Sech2,
    Tanh,
    Tanh2,
    Sech4,
    Sech2Tanh2,
    LogCoshAt,
    TanhAt,
    Sech2At,
}

impl Functional {
    fn name(self) -> &'static str {
        match self {
            Functional::Sech2 => "E[sech^2 h]",
            Functional::Tanh => "E[tanh h]",
            Functional::Tanh2 => "E[tanh^2 h]",
            Functional::Sech4 => "E[sech^4 h]",
            Functional::Sech2Tanh2 => "E[sech^2 h tanh^2 h]",
            Functional::LogCoshAt => "E[log cosh(y + h)]",
            Functional::TanhAt => "E[tanh(y + h)]",
            Functional::Sech2At => "E[sech^2(y + h)]",
        }
    }

    fn is_shifted(self) -> bool {
        matches!(
            self,
            Functional::LogCoshAt | Functional::TanhAt | Functional::Sech2At
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet<T> {
    pub sech2_mean: T,
    pub tanh_mean: T,
    pub tanh_var: T,
    pub sech4_mean: T,
    pub sech2tanh2_mean: T,
}

impl<T: Real> FieldDistribution<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = |x: T, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDistribution(format!("{what} is not finite")))
            }
        };
        match self {
            FieldDistribution::PointMass { a } => finite(*a, "a"),
            FieldDistribution::TwoPoint { a, b, p } => {
                finite(*a, "a")?;
                finite(*b, "b")?;
                if !(*p >= T::zero() && *p <= T::one()) {
                    return Err(Error::InvalidDistribution(format!("p = {p} outside [0, 1]")));
                }
                Ok(())
            }
            FieldDistribution::Uniform { lo, hi } => {
                finite(*lo, "lo")?;
                finite(*hi, "hi")?;
                if lo > hi {
                    return Err(Error::InvalidDistribution(format!("lo = {lo} > hi = {hi}")));
                }
                Ok(())
            }
            FieldDistribution::Gaussian { mean, sd } => {
                finite(*mean, "mean")?;
                finite(*sd, "sd")?;
                if *sd < T::zero() {
                    return Err(Error::InvalidDistribution(format!("sd = {sd} < 0")));
                }
                Ok(())
            }
            FieldDistribution::Empirical { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidDistribution("empty empirical support".into()));
                }
                values.iter().try_for_each(|v| finite(*v, "empirical value"))
            }
        }
    }

    /// Structural symmetry (law of h equals law of -h); never inferred numerically.
    pub fn is_symmetric(&self) -> bool {
        match self {
            FieldDistribution::PointMass { a } => *a == T::zero(),
            FieldDistribution::TwoPoint { a, b, p } => {
                (*a == T::zero() && *b == T::zero())
                    || (*b == -*a && *p == T::lit(0.5))
                    || (*a == T::zero() && *p == T::one())
                    || (*b == T::zero() && *p == T::zero())
            }
            FieldDistribution::Uniform { lo, hi } => *lo == -*hi,
            FieldDistribution::Gaussian { mean, .. } => *mean == T::zero(),
            FieldDistribution::Empirical { values } => {
                let mut v = values.clone();
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let n = v.len();
                (0..n).all(|i| v[i] == -v[n - 1 - i])
            }
        }
    }

    /// `E[g(y + h)]`: exact for discrete laws, adaptive quadrature otherwise.
    pub fn expect_shifted(&self, y: T, what: &'static str, g: impl Fn(T) -> T) -> Result<T> {
        self.validate()?;
        let tol = T::tol(EXPECTATION_TOL);
        match self {
            FieldDistribution::PointMass { a } => Ok(g(y + *a)),
            FieldDistribution::TwoPoint { a, b, p } => {
                let ga = if *p > T::zero() { g(y + *a) } else { T::zero() };
                let gb = if *p < T::one() { g(y + *b) } else { T::zero() };
                Ok(*p * ga + (T::one() - *p) * gb)
            }
            FieldDistribution::Uniform { lo, hi } => {
                if lo == hi {
                    Ok(g(y + *lo))
                } else {
                    quadrature::uniform_mean(y + *lo, y + *hi, tol, what, g)
                }
            }
            FieldDistribution::Gaussian { mean, sd } => {
                if *sd == T::zero() {
                    Ok(g(y + *mean))
                } else {
                    quadrature::gaussian_mean(y + *mean, *sd, tol, what, g)
                }
            }
            FieldDistribution::Empirical { values } => {
                let s: T = values.iter().map(|&v| g(y + v)).sum();
                Ok(s / T::from_usize_lossy(values.len()))
            }
        }
    }

    pub fn expect(&self, what: &'static str, g: impl Fn(T) -> T) -> Result<T> {
        self.expect_shifted(T::zero(), what, g)
    }

    /// Draws `n` i.i.d. entries.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<T>> {
        self.validate()?;
        let mut out = Vec::with_capacity(n);
        self.sample_into(rng, &mut out, n);
        Ok(out)
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<T>, n: usize) {
        out.clear();
        match self {
            FieldDistribution::PointMass { a } => out.resize(n, *a),
            FieldDistribution::TwoPoint { a, b, p } => {
                let p = p.as_f64();
                out.extend((0..n).map(|_| if rng.random::<f64>() < p { *a } else { *b }));
            }
            FieldDistribution::Uniform { lo, hi } => {
                let w = *hi - *lo;
                out.extend((0..n).map(|_| *lo + w * T::lit(rng.random::<f64>())));
            }
            FieldDistribution::Gaussian { mean, sd } => {
                out.extend((0..n).map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    *mean + *sd * T::lit(z)
                }));
            }
            FieldDistribution::Empirical { values } => {
                out.extend((0..n).map(|_| values[rng.random_range(0..values.len())]));
            }
        }
    }

    /// Number of distinct support points, if finite.
    pub fn is_discrete(&self) -> bool {
        match self {
            FieldDistribution::PointMass { .. }
            | FieldDistribution::TwoPoint { .. }
            | FieldDistribution::Empirical { .. } => true,
            FieldDistribution::Uniform { lo, hi } => lo == hi,
            FieldDistribution::Gaussian { sd, .. } => *sd == T::zero(),
        }
    }
}

/// `E[g(sqrt(theta1) x + h)]` for shifted kinds, `E[g(h)]` otherwise.
pub fn field_functional<T: Real>(
    dist: &FieldDistribution<T>,
    kind: Functional,
    x: T,
    theta1: T,
) -> Result<T> {
    let y = if kind.is_shifted() {
        if !x.is_finite() || !theta1.is_finite() || theta1 < T::zero() {
            return Err(Error::InvalidDistribution(format!(
                "shifted functional needs finite x and theta1 >= 0 (x = {x}, theta1 = {theta1})"
            )));
        }
        theta1.sqrt() * x
    } else {
        T::zero()
    };
    let name = kind.name();
    match kind {
        Functional::Sech2 | Functional::Sech2At => dist.expect_shifted(y, name, sech2),
        Functional::Tanh | Functional::TanhAt => dist.expect_shifted(y, name, |v| v.tanh()),
        Functional::Tanh2 => dist.expect(name, |v| v.tanh().powi(2)),
        Functional::Sech4 => dist.expect(name, |v| sech2(v).powi(2)),
        Functional::Sech2Tanh2 => dist.expect(name, |v| sech2(v) * v.tanh().powi(2)),
        Functional::LogCoshAt => dist.expect_shifted(y, name, log_cosh),
    }
}

pub fn moments<T: Real>(dist: &FieldDistribution<T>) -> Result<MomentSet<T>> {
    let f = |k| field_functional(dist, k, T::zero(), T::zero());
    let sech2_mean = f(Functional::Sech2)?;
    let tanh_mean = if dist.is_symmetric() {
        T::zero()
    } else {
        f(Functional::Tanh)?
    };
    let tanh2 = f(Functional::Tanh2)?;
    Ok(MomentSet {
        sech2_mean,
        tanh_mean,
        tanh_var: (tanh2 - tanh_mean * tanh_mean).max(T::zero()),
        sech4_mean: f(Functional::Sech4)?,
        sech2tanh2_mean: f(Functional::Sech2Tanh2)?,
    })
}

/// Free-function form of [`FieldDistribution::sample`].
pub fn sample_field<T: Real, R: Rng + ?Sized>(
    dist: &FieldDistribution<T>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::InvalidSpec("sample_field needs n >= 1".into()));
    }
    dist.sample(n, rng)
}

impl<T: Real> fmt::Display for FieldDistribution<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |x: &T| x.as_f64();
        match self {
            FieldDistribution::PointMass { a } => write!(f, "pointmass(a={})", v(a)),
            FieldDistribution::TwoPoint { a, b, p } => {
                write!(f, "twopoint(a={}, b={}, p={})", v(a), v(b), v(p))
            }
            FieldDistribution::Uniform { lo, hi } => write!(f, "uniform(lo={}, hi={})", v(lo), v(hi)),
            FieldDistribution::Gaussian { mean, sd } => {
                write!(f, "gaussian(mean={}, sd={})", v(mean), v(sd))
            }
            FieldDistribution::Empirical { values } => {
                write!(f, "empirical(")?;
                for (i, x) in values.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", v(x))?;
                }
                write!(f, ")")
            }
        }
    }
}

impl<T: Real> FromStr for FieldDistribution<T> {
    type Err = Error;

    /// Parses `name(args)`; arguments are positional or `key=value`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s
            .strip_prefix("field")
            .map(|r| r.trim_start())
            .and_then(|r| r.strip_prefix('='))
            .unwrap_or(s)
            .trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected name(args), got {s:?}")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("missing closing parenthesis in {s:?}")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let body = &s[open + 1..s.len() - 1];
        let mut positional = Vec::new();
        let mut keyed = Vec::new();
        for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if let Some((k, v)) = tok.split_once('=') {
                keyed.push((k.trim().to_ascii_lowercase(), parse_num::<T>(v)?));
            } else {
                positional.push(parse_num::<T>(tok)?);
            }
        }
        let args = |keys: &[&str]| -> Result<Vec<T>> {
            if !keyed.is_empty() && !positional.is_empty() {
                return Err(Error::Parse(format!("mixed positional and keyed arguments in {s:?}")));
            }
            if keyed.is_empty() {
                if positional.len() != keys.len() {
                    return Err(Error::Parse(format!(
                        "{name} takes {} arguments, got {}",
                        keys.len(),
                        positional.len()
                    )));
                }
                return Ok(positional.clone());
            }
            keys.iter()
                .map(|k| {
                    keyed
                        .iter()
                        .find(|(kk, _)| kk == k)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::Parse(format!("{name} is missing argument {k}")))
                })
                .collect()
        };
        let dist = match name.as_str() {
            "pointmass" | "point" => {
                let a = args(&["a"])?;
                FieldDistribution::PointMass { a: a[0] }
            }
            "twopoint" => {
                let a = args(&["a", "b", "p"])?;
                FieldDistribution::TwoPoint { a: a[0], b: a[1], p: a[2] }
            }
            "uniform" => {
                let a = args(&["lo", "hi"])?;
                FieldDistribution::Uniform { lo: a[0], hi: a[1] }
            }
            "gaussian" | "normal" => {
                let a = args(&["mean", "sd"])?;
                FieldDistribution::Gaussian { mean: a[0], sd: a[1] }
            }
            "empirical" => {
                if !keyed.is_empty() {
                    return Err(Error::Parse("empirical takes positional values only".into()));
                }
                FieldDistribution::Empirical { values: positional }
            }
            other => return Err(Error::Parse(format!("unknown field family {other:?}"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

fn parse_num<T: Real>(s: &str) -> Result<T> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))?;
    Ok(T::lit(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tp() -> FieldDistribution<f64> {
        FieldDistribution::TwoPoint { a: 0.5, b: -0.5, p: 0.5 }
    }

    #[test]
    fn point_mass_at_zero_functionals() {
        let d = FieldDistribution::PointMass { a: 0.0 };
        assert_eq!(field_functional(&d, Functional::Sech2, 0.0, 0.0).unwrap(), 1.0);
        let lc = field_functional(&d, Functional::LogCoshAt, 1.0, 1.0).unwrap();
        assert!((lc - 1f64.cosh().ln()).abs() < 1e-15);
        let m = moments(&d).unwrap();
        assert_eq!(
            m,
            MomentSet { sech2_mean: 1.0, tanh_mean: 0.0, tanh_var: 0.0, sech4_mean: 1.0, sech2tanh2_mean: 0.0 }
        );
    }

    #[test]
    fn two_point_moments() {
        // mpmath: sech(0.5)^2 = 0.786447732965927..., tanh(0.5)^2 = 0.213552267034072...
        let d = tp();
        let s = field_functional(&d, Functional::Sech2, 0.0, 0.0).unwrap();
        assert!((s - 0.786_447_732_965_927_4).abs() < 1e-15);
        let m = moments(&d).unwrap();
        assert_eq!(m.tanh_mean, 0.0);
        assert!((m.tanh_var - 0.213_552_267_034_072_6).abs() < 1e-15);
        assert!(m.sech4_mean <= m.sech2_mean && m.sech2_mean <= 1.0);
    }

    #[test]
    fn gaussian_moments_by_quadrature() {
        let d = FieldDistribution::Gaussian { mean: 0.0f64, sd: 1.0 };
        let m = moments(&d).unwrap();
        // Odd integrand: compute it without the structural shortcut.
        let t = field_functional(&d, Functional::Tanh, 0.0, 0.0).unwrap();
        assert!(t.abs() < 1e-10);
        // mpmath quad: E[sech^2 Z] = 0.605705509602158825...
        assert!((m.sech2_mean - 0.605_705_509_602_158_8).abs() < 1e-10);
    }

    #[test]
    fn uniform_tanh_mean_matches_closed_form() {
        // E[tanh U] on [0,1] = log cosh(1)
        let d = FieldDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let t = field_functional(&d, Functional::Tanh, 0.0, 0.0).unwrap();
        assert!((t - 1f64.cosh().ln()).abs() < 1e-12);
    }

    #[test]
    fn f32_precision_path() {
        let d = FieldDistribution::<f32>::Gaussian { mean: 0.0, sd: 1.0 };
        let s = field_functional(&d, Functional::Sech2, 0.0, 0.0).unwrap();
        assert!((s - 0.605_705_5).abs() < 1e-5);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = FieldDistribution::TwoPoint { a: 1.0, b: 0.0, p: 1.5 };
        assert!(matches!(moments(&bad), Err(Error::InvalidDistribution(_))));
        let bad = FieldDistribution::Gaussian { mean: 0.0, sd: -1.0 };
        assert!(bad.validate().is_err());
        let bad = FieldDistribution::<f64>::Empirical { values: vec![] };
        assert!(bad.validate().is_err());
        let r = field_functional(&tp(), Functional::TanhAt, f64::NAN, 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn structural_symmetry() {
        assert!(tp().is_symmetric());
        assert!(FieldDistribution::Uniform { lo: -1.0, hi: 1.0 }.is_symmetric());
        assert!(!FieldDistribution::Uniform { lo: 0.0, hi: 1.0 }.is_symmetric());
        assert!(FieldDistribution::Empirical { values: vec![0.2, -0.1, 0.1, -0.2] }.is_symmetric());
        assert!(!FieldDistribution::TwoPoint { a: 0.5, b: -0.5, p: 0.4 }.is_symmetric());
    }

    #[test]
    fn parse_and_display() {
        let d: FieldDistribution<f64> = "field = twopoint(a=0.5, b=-0.5, p=0.5)".parse().unwrap();
        assert_eq!(d, tp());
        let d2: FieldDistribution<f64> = "twopoint(0.5,-0.5,0.5)".parse().unwrap();
        assert_eq!(d2, tp());
        assert_eq!(d.to_string(), "twopoint(a=0.5, b=-0.5, p=0.5)");
        let e: FieldDistribution<f64> = "empirical(0.1, -0.3)".parse().unwrap();
        assert_eq!(e.to_string().parse::<FieldDistribution<f64>>().unwrap(), e);
        assert!("twopoint(0.5)".parse::<FieldDistribution<f64>>().is_err());
        assert!("cauchy(0,1)".parse::<FieldDistribution<f64>>().is_err());
        assert!("twopoint(1, 0, 2)".parse::<FieldDistribution<f64>>().is_err());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = FieldDistribution::PointMass { a: 0.3 };
        assert_eq!(sample_field(&d, 4, &mut rng).unwrap(), vec![0.3; 4]);
        assert!(sample_field(&d, 0, &mut rng).is_err());

        let n = 1_000_000;
        let h = sample_field(&FieldDistribution::TwoPoint { a: 1.0, b: -1.0, p: 0.5 }, n, &mut rng).unwrap();
        let t: Vec<f64> = h.iter().map(|x: &f64| x.tanh()).collect();
        let mean = t.iter().sum::<f64>() / n as f64;
        let se = 1f64.tanh() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");

        let u = sample_field(&FieldDistribution::Uniform { lo: 0.0, hi: 1.0 }, n, &mut rng).unwrap();
        let mean = u.iter().sum::<f64>() / n as f64;
        let se = (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let d = FieldDistribution::Gaussian { mean: 0.1, sd: 2.0 };
        let a = d.sample(100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = d.sample(100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
