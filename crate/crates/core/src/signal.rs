use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form scalar time signal.
///
/// `Sinusoid` means `gain · sin(t / inv_freq_sq + phase) · envelope(t)`; the
/// phase lets derivatives and primitives stay inside the family
/// (`cos s = sin(s + π/2)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSignal {
    /// Ascending coefficients in `t`.
    Polynomial { coeffs: Vec<f64> },
    Sinusoid {
        gain: f64,
        inv_freq_sq: f64,
        #[serde(default)]
        phase: f64,
        envelope: Box<ControlSignal>,
    },
    Sum { terms: Vec<ControlSignal> },
    /// Piecewise-linear interpolation, held constant outside the samples.
    Sampled { times: Vec<f64>, values: Vec<f64> },
    /// `Σ c_k P_k(t / t_end)` with `P_k` the Legendre polynomials shifted to
    /// `[0, 1]`; evaluated by the three-term recurrence, which stays
    /// accurate where the monomial form of a high-gain series cancels.
    Legendre { coeffs: Vec<f64>, t_end: f64 },
}

/// Values `P_0(s), …, P_n(s)` of the shifted Legendre polynomials.
pub(crate) fn shifted_legendre_values(n: usize, s: f64) -> Vec<f64> {
    let x = 2.0 * s - 1.0;
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for k in 1..n {
        let kf = k as f64;
        p.push(((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0));
    }
    p
}

impl ControlSignal {
    pub fn zero() -> Self {
        ControlSignal::Polynomial { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        ControlSignal::Polynomial { coeffs: vec![c] }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        ControlSignal::Polynomial { coeffs }
    }

    pub fn sinusoid(gain: f64, inv_freq_sq: f64, phase: f64, envelope: ControlSignal) -> Result<Self> {
        if !(inv_freq_sq > 0.0) || !inv_freq_sq.is_finite() {
            return Err(Error::invalid("sinusoid time scale must be positive"));
        }
        Ok(ControlSignal::Sinusoid {
            gain,
            inv_freq_sq,
            phase,
            envelope: Box::new(envelope),
        })
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = ControlSignal::Sampled { times, values };
        s.validate()?;
        Ok(s)
    }

    pub fn sum(terms: Vec<ControlSignal>) -> Self {
        ControlSignal::Sum { terms }
    }

    pub fn legendre(coeffs: Vec<f64>, t_end: f64) -> Result<Self> {
        let s = ControlSignal::Legendre { coeffs, t_end };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlSignal::Polynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("non-finite polynomial coefficient"));
                }
                Ok(())
            }
            ControlSignal::Sinusoid {
                inv_freq_sq,
                envelope,
                gain,
                phase,
            } => {
                if !(*inv_freq_sq > 0.0) || !gain.is_finite() || !phase.is_finite() {
                    return Err(Error::invalid("sinusoid needs finite gain/phase and positive time scale"));
                }
                envelope.validate()
            }
            ControlSignal::Sum { terms } => terms.iter().try_for_each(ControlSignal::validate),
            ControlSignal::Sampled { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::invalid("sampled signal needs equally many (>= 1) times and values"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("sample times must be strictly increasing"));
                }
                Ok(())
            }
            ControlSignal::Legendre { coeffs, t_end } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("non-finite Legendre coefficient"));
                }
                if !(*t_end > 0.0) || !t_end.is_finite() {
                    return Err(Error::invalid("Legendre horizon must be positive"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ControlSignal::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |a, c| a * t + c),
            ControlSignal::Sinusoid {
                gain,
                inv_freq_sq,
                phase,
                envelope,
            } => gain * (t / inv_freq_sq + phase).sin() * envelope.eval(t),
            ControlSignal::Sum { terms } => terms.iter().map(|s| s.eval(t)).sum(),
            ControlSignal::Sampled { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
            ControlSignal::Legendre { coeffs, t_end } => {
                if coeffs.is_empty() {
                    return 0.0;
                }
                let p = shifted_legendre_values(coeffs.len() - 1, t / t_end);
                coeffs.iter().zip(&p).map(|(c, v)| c * v).sum()
            }
        }
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    /// Exact derivative; sampled signals are not differentiable.
    pub fn derivative(&self) -> Result<ControlSignal> {
        Ok(match self {
            ControlSignal::Polynomial { coeffs } => ControlSignal::Polynomial {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| k as f64 * c)
                    .collect(),
            },
            ControlSignal::Sinusoid {
                gain,
                inv_freq_sq,
                phase,
                envelope,
            } => {
                // d/dt [g sin(t/a + φ) e(t)] = (g/a) sin(t/a + φ + π/2) e + g sin(t/a + φ) e'
                let mut terms = vec![ControlSignal::Sinusoid {
                    gain: gain / inv_freq_sq,
                    inv_freq_sq: *inv_freq_sq,
                    phase: phase + FRAC_PI_2,
                    envelope: envelope.clone(),
                }];
                let de = envelope.derivative()?;
                if !de.is_identically_zero() {
                    terms.push(ControlSignal::Sinusoid {
                        gain: *gain,
                        inv_freq_sq: *inv_freq_sq,
                        phase: *phase,
                        envelope: Box::new(de),
                    });
                }
                if terms.len() == 1 {
                    terms.pop().unwrap()
                } else {
                    ControlSignal::Sum { terms }
                }
            }
            ControlSignal::Sum { terms } => ControlSignal::Sum {
                terms: terms.iter().map(|s| s.derivative()).collect::<Result<_>>()?,
            },
            ControlSignal::Sampled { .. } => {
                return Err(Error::Unsupported(
                    "piecewise-linear sampled signal is not continuously differentiable".into(),
                ))
            }
            ControlSignal::Legendre { coeffs, t_end } => {
                // P̃_n' = Σ (2k+1) P̃_k over k = n-1, n-3, … on [-1, 1]; d/dt = (2/T) d/dx
                let mut d = vec![0.0; coeffs.len().saturating_sub(1)];
                for (n, c) in coeffs.iter().enumerate().skip(1) {
                    for k in (0..n).rev().step_by(2) {
                        d[k] += c * (2 * k + 1) as f64 * 2.0 / t_end;
                    }
                }
                ControlSignal::Legendre { coeffs: d, t_end: *t_end }
            }
        })
    }

    /// Closed-form primitive vanishing at `t = 0`. Available for polynomials,
    /// sinusoids with polynomial envelopes, and sums of those.
    pub fn primitive(&self) -> Result<ControlSignal> {
        let raw = self.raw_primitive()?;
        let c0 = raw.eval(0.0);
        Ok(if c0 == 0.0 {
            raw
        } else {
            ControlSignal::Sum {
                terms: vec![raw, ControlSignal::constant(-c0)],
            }
        })
    }

    fn raw_primitive(&self) -> Result<ControlSignal> {
        match self {
            ControlSignal::Polynomial { coeffs } => {
                let mut out = vec![0.0];
                out.extend(coeffs.iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)));
                Ok(ControlSignal::Polynomial { coeffs: out })
            }
            ControlSignal::Sinusoid {
                gain,
                inv_freq_sq,
                phase,
                envelope,
            } => {
                let ControlSignal::Polynomial { coeffs } = envelope.as_ref() else {
                    return Err(Error::Unsupported(
                        "closed-form primitive needs a polynomial envelope".into(),
                    ));
                };
                // ∫ p sin(ωt + φ) = −(1/ω) p sin(ωt + φ + π/2) + (1/ω) ∫ p' sin(ωt + φ + π/2)
                let a = *inv_freq_sq;
                let mut terms = Vec::new();
                let mut p = coeffs.clone();
                let mut ph = *phase;
                let mut g = *gain;
                while p.iter().any(|&c| c != 0.0) {
                    ph += FRAC_PI_2;
                    terms.push(ControlSignal::Sinusoid {
                        gain: -g * a,
                        inv_freq_sq: a,
                        phase: ph,
                        envelope: Box::new(ControlSignal::Polynomial { coeffs: p.clone() }),
                    });
                    g *= a;
                    p = p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
                }
                Ok(ControlSignal::Sum { terms })
            }
            ControlSignal::Sum { terms } => Ok(ControlSignal::Sum {
                terms: terms.iter().map(|s| s.raw_primitive()).collect::<Result<_>>()?,
            }),
            ControlSignal::Sampled { .. } => Err(Error::Unsupported(
                "use integral_to for sampled signals".into(),
            )),
            ControlSignal::Legendre { coeffs, t_end } => {
                // ∫ P̃_n dx = (P̃_{n+1} - P̃_{n-1}) / (2n+1), ∫ P̃_0 dx = P̃_1; dt = (T/2) dx
                let mut out = vec![0.0; coeffs.len() + 1];
                for (n, c) in coeffs.iter().enumerate() {
                    let a = c * t_end / (2.0 * (2 * n + 1) as f64);
                    out[n + 1] += a;
                    if n >= 1 {
                        out[n - 1] -= a;
                    }
                }
                Ok(ControlSignal::Legendre { coeffs: out, t_end: *t_end })
            }
        }
    }

    /// `∫₀ᵗ self`, exact for every variant.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        match self {
            ControlSignal::Sampled { times, .. } => {
                let seg = |a: f64, b: f64| (b - a) * (self.eval(a) + self.eval(b)) / 2.0;
                let (lo, hi, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
                let mut knots = vec![lo];
                knots.extend(times.iter().copied().filter(|&s| s > lo && s < hi));
                knots.push(hi);
                Ok(sign * knots.windows(2).map(|w| seg(w[0], w[1])).sum::<f64>())
            }
            ControlSignal::Sum { terms } => terms.iter().map(|s| s.integral_to(t)).sum(),
            _ => Ok(self.primitive()?.eval(t)),
        }
    }

    /// `c · s(t)`.
    pub fn scaled(&self, c: f64) -> ControlSignal {
        match self {
            ControlSignal::Polynomial { coeffs } => ControlSignal::Polynomial {
                coeffs: coeffs.iter().map(|a| a * c).collect(),
            },
            ControlSignal::Sinusoid {
                gain,
                inv_freq_sq,
                phase,
                envelope,
            } => ControlSignal::Sinusoid {
                gain: gain * c,
                inv_freq_sq: *inv_freq_sq,
                phase: *phase,
                envelope: envelope.clone(),
            },
            ControlSignal::Sum { terms } => ControlSignal::Sum {
                terms: terms.iter().map(|s| s.scaled(c)).collect(),
            },
            ControlSignal::Sampled { times, values } => ControlSignal::Sampled {
                times: times.clone(),
                values: values.iter().map(|v| v * c).collect(),
            },
            ControlSignal::Legendre { coeffs, t_end } => ControlSignal::Legendre {
                coeffs: coeffs.iter().map(|a| a * c).collect(),
                t_end: *t_end,
            },
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            ControlSignal::Polynomial { coeffs } => coeffs.iter().all(|&c| c == 0.0),
            ControlSignal::Sinusoid { gain, envelope, .. } => *gain == 0.0 || envelope.is_identically_zero(),
            ControlSignal::Sum { terms } => terms.iter().all(ControlSignal::is_identically_zero),
            ControlSignal::Sampled { values, .. } => values.iter().all(|&v| v == 0.0),
            ControlSignal::Legendre { coeffs, .. } => coeffs.iter().all(|&c| c == 0.0),
        }
    }
}
