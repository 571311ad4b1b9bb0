//! Large-`N` moment formulas, the single-searcher small-`r` time scale, the
//! rescaling/log-`N` regime comparison and the inclusion–exclusion identity
//! for maxima.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{gamma_half_integer, Real};

/// Largest list accepted by [`inclusion_exclusion_max`].
pub const MAX_INCLUSION_EXCLUSION_LEN: usize = 20;

/// Which formula produced an [`AsymptoticPrediction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictionModel<T> {
    Diffusive,
    Subdiffusive {
        alpha: T,
    },
    SingleSearcherSmallR {
        dim: u32,
        volume: T,
        radius: T,
    },
    /// `E[σ_1] / N`.
    RescalingApprox {
        mean_single: T,
    },
    /// `max(E[σ_1] / N, L²/(4D ln N))`.
    ConjectureMax {
        mean_single: T,
    },
}

/// A formula evaluation together with its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction<T> {
    pub model: PredictionModel<T>,
    pub length: T,
    /// `D`, or `D_sub` for the subdiffusive model.
    pub diffusivity: T,
    pub searchers: u64,
    pub moment: u32,
    pub value: T,
}

impl<T: Real> AsymptoticPrediction<T> {
    /// Evaluate `model` at the given inputs. `length` is ignored by the
    /// small-`r` and rescaling models.
    pub fn evaluate(
        model: PredictionModel<T>,
        length: T,
        diffusivity: T,
        searchers: u64,
        moment: u32,
    ) -> Result<Self> {
        let n = T::from_u64(searchers).unwrap();
        let value = match &model {
            PredictionModel::Diffusive => theorem1_moment(length, diffusivity, n, moment)?,
            PredictionModel::Subdiffusive { alpha } => {
                theorem2_moment(length, diffusivity, *alpha, n, moment)?
            }
            PredictionModel::SingleSearcherSmallR {
                dim,
                volume,
                radius,
            } => single_searcher_td(*dim, *volume, *radius, diffusivity)?.powi(moment as i32),
            PredictionModel::RescalingApprox { mean_single } => {
                check_moment(moment)?;
                if moment != 1 {
                    return Err(Error::NotSupported(
                        "the rescaling approximation is stated for the mean only".into(),
                    ));
                }
                *mean_single / n
            }
            PredictionModel::ConjectureMax { mean_single } => {
                check_moment(moment)?;
                if moment != 1 {
                    return Err(Error::NotSupported(
                        "the conjectured maximum is stated for the mean only".into(),
                    ));
                }
                conjecture_regimes(*mean_single, length, diffusivity, n)?.max
            }
        };
        Ok(Self {
            model,
            length,
            diffusivity,
            searchers,
            moment,
            value,
        })
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_moment(m: u32) -> Result<()> {
    if m >= 1 {
        Ok(())
    } else {
        Err(Error::Domain("moment order must be at least 1".into()))
    }
}

fn check_searchers<T: Real>(n: T) -> Result<T> {
    if !(n >= T::lit(2.0)) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "the large-N formulas need N >= 2 (ln N > 0), got N = {n}"
        )));
    }
    Ok(n.ln())
}

/// `(L²/(4D ln N))^m`.
pub fn theorem1_moment<T: Real>(length: T, diffusivity: T, searchers: T, m: u32) -> Result<T> {
    check_positive("L", length)?;
    check_positive("D", diffusivity)?;
    check_moment(m)?;
    let log_n = check_searchers(searchers)?;
    Ok((length * length / (T::lit(4.0) * diffusivity * log_n)).powi(m as i32))
}

/// `(α(2−α)^{(2−α)/α} (L²/(4D))^{1/α} / (ln N)^{2/α−1})^m` for `0 < α < 1`.
pub fn theorem2_moment<T: Real>(
    length: T,
    diffusivity: T,
    alpha: T,
    searchers: T,
    m: u32,
) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::Domain(format!(
            "subdiffusion exponent must lie in (0, 1), got {alpha}"
        )));
    }
    subdiffusive_formula(length, diffusivity, alpha, searchers, m)
}

/// The subdiffusive moment formula for `0 < α <= 1`; at `α = 1` it is the
/// diffusive one.
pub fn subdiffusive_formula<T: Real>(
    length: T,
    diffusivity: T,
    alpha: T,
    searchers: T,
    m: u32,
) -> Result<T> {
    check_positive("L", length)?;
    check_positive("D_sub", diffusivity)?;
    check_moment(m)?;
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Domain(format!(
            "subdiffusion exponent must lie in (0, 1], got {alpha}"
        )));
    }
    let log_n = check_searchers(searchers)?;
    let two = T::lit(2.0);
    let inv = T::one() / alpha;
    let prefactor = alpha * (two - alpha).powf((two - alpha) * inv);
    let scale = (length * length / (T::lit(4.0) * diffusivity)).powf(inv);
    let value = prefactor * scale / log_n.powf(two * inv - T::one());
    Ok(value.powi(m as i32))
}

/// Leading-order mean cover time of one searcher as `r → 0`:
/// `(|M|/(πD)) ln²(1/r)` for `d = 2` and
/// `dΓ(d/2)/(2(d−2)π^{d/2}) |M| r^{2−d} ln(1/r) / D` for `d >= 3`.
pub fn single_searcher_td<T: Real>(dim: u32, volume: T, r: T, diffusivity: T) -> Result<T> {
    if dim < 2 {
        return Err(Error::Domain(format!(
            "the small-r time is only defined for d >= 2, got d = {dim}"
        )));
    }
    check_positive("|M|", volume)?;
    check_positive("D", diffusivity)?;
    if !(r > T::zero() && r < T::one()) {
        return Err(Error::Domain(format!("r must lie in (0, 1), got {r}")));
    }
    let log_inv = -r.ln();
    if dim == 2 {
        return Ok(volume / (T::PI() * diffusivity) * log_inv * log_inv);
    }
    let d = T::from_u32(dim).unwrap();
    let two = T::lit(2.0);
    let constant = d * gamma_half_integer::<T>(dim) / (two * (d - two) * T::PI().powf(d / two));
    Ok(constant * volume * r.powf(two - d) * log_inv / diffusivity)
}

/// Which side of the conjectured maximum is larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Rescaling,
    LogN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRegimes<T> {
    /// `E[σ_1] / N`.
    pub rescaling: T,
    /// `L²/(4D ln N)`.
    pub log_n: T,
    pub max: T,
    pub active: Regime,
}

/// Both branches of `E[σ_N] ≈ max(E[σ_1]/N, L²/(4D ln N))`.
pub fn conjecture_regimes<T: Real>(
    mean_single: T,
    length: T,
    diffusivity: T,
    searchers: T,
) -> Result<ConjectureRegimes<T>> {
    check_positive("E[sigma_1]", mean_single).or_else(|e| {
        if mean_single == T::infinity() {
            Ok(())
        } else {
            Err(e)
        }
    })?;
    let rescaling = mean_single / searchers;
    let log_n = theorem1_moment(length, diffusivity, searchers, 1)?;
    let active = if rescaling > log_n {
        Regime::Rescaling
    } else {
        Regime::LogN
    };
    Ok(ConjectureRegimes {
        rescaling,
        log_n,
        max: rescaling.max(log_n),
        active,
    })
}

/// The `N > e` solving `N / ln N = 4D E[σ_1] / L²`, where the two branches
/// of [`conjecture_regimes`] meet. `None` when the right side is below `e`
/// (the branches never meet) or not finite.
pub fn conjecture_crossover<T: Real>(
    mean_single: T,
    length: T,
    diffusivity: T,
) -> Result<Option<T>> {
    check_positive("E[sigma_1]", mean_single)?;
    check_positive("L", length)?;
    check_positive("D", diffusivity)?;
    let c = T::lit(4.0) * diffusivity * mean_single / (length * length);
    let e = T::E();
    if !c.is_finite() || c < e {
        return Ok(None);
    }
    // N / ln N is increasing for N > e; bisect on ln N.
    let (mut lo, mut hi) = (T::one(), T::one());
    while hi.exp() / hi < c {
        hi = hi + hi;
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid.exp() / mid < c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok(Some((T::lit(0.5) * (lo + hi)).exp()))
}

/// Smallest `N >= 2` at which the subdiffusive prediction drops below the
/// diffusive one, searching `N = 2, 3, ...` up to `limit`.
pub fn subdiffusive_crossover<T: Real>(
    length: T,
    diffusivity: T,
    diffusivity_sub: T,
    alpha: T,
    limit: u64,
) -> Result<Option<u64>> {
    for n in 2..=limit {
        let nt = T::from_u64(n).unwrap();
        if theorem2_moment(length, diffusivity_sub, alpha, nt, 1)?
            < theorem1_moment(length, diffusivity, nt, 1)?
        {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// `Σ_{j=1}^k (−1)^{j−1} Σ_{|I|=j} min_{i∈I} l_i`, by direct enumeration of
/// all nonempty subsets. Equals `max_i l_i`.
///
/// Works for any signed ordered field element, so exact rationals give an
/// exact result; floating point sums are compensated.
pub fn inclusion_exclusion_max<V>(values: &[V]) -> Result<V>
where
    V: Clone + PartialOrd + Signed,
{
    if values.is_empty() {
        return Err(Error::InvalidArgument("need at least one value".into()));
    }
    if values.len() > MAX_INCLUSION_EXCLUSION_LEN {
        return Err(Error::Size {
            len: values.len(),
            limit: MAX_INCLUSION_EXCLUSION_LEN,
        });
    }
    let mut acc = NeumaierSum::default();
    for mask in 1u32..(1u32 << values.len()) {
        let mut min: Option<&V> = None;
        let mut bits = mask;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let v = &values[i];
            if min.is_none_or(|m| v < m) {
                min = Some(v);
            }
        }
        let term = min.unwrap().clone();
        if mask.count_ones() % 2 == 1 {
            acc.add(term);
        } else {
            acc.add(-term);
        }
    }
    Ok(acc.total())
}

/// Neumaier compensated summation; exact types simply carry a zero
/// correction.
struct NeumaierSum<V> {
    sum: V,
    correction: V,
}

impl<V: Zero> Default for NeumaierSum<V> {
    fn default() -> Self {
        Self {
            sum: V::zero(),
            correction: V::zero(),
        }
    }
}

impl<V: Clone + PartialOrd + Signed> NeumaierSum<V> {
    fn add(&mut self, x: V) {
        let t = self.sum.clone() + x.clone();
        let c = if self.sum.abs() >= x.abs() {
            (self.sum.clone() - t.clone()) + x
        } else {
            (x - t.clone()) + self.sum.clone()
        };
        self.correction = self.correction.clone() + c;
        self.sum = t;
    }

    fn total(self) -> V {
        self.sum + self.correction
    }
}
