//! Closed-form building blocks referenced by id from experiment configurations.
//!
//! Ids:
//! - terms `x1p-sin1`, `x1p-cos1`, `u2d-<F1>-<F2>`, `ln2d-<i>-<j>`
//! - families `family:sin-cos-1d`, `family:uniform-2d`, `family:lognormal-2d`,
//!   `family:laminate-2d`
//! - observations `x`, `x2`, `x-1psin1`, `x-1pcos1`, `flux`, `flux-p1`, `flux-p2`,
//!   `u2d-obs-<G1>-<G2>-p<p>`, `ln2d-obs-<F1>-<F2>-<G1>-<G2>-p<p>`
//! - observation sets `obs:1d-u0-only`, `obs:1d-u0u1`, `obs:1d-flux`, `obs:uniform-2d`,
//!   `obs:lognormal-2d`

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::coefficient::{PriorKind, TwoScaleCoefficient};
use crate::error::{Error, Result};
use crate::field::{Factor, Field, SeparableProduct};
use crate::observation::Functional;

const FOUR_PI2: f64 = 4.0 * core::f64::consts::PI * core::f64::consts::PI;

/// `y` factors of the 2D uniform family.
const U2D_FACTORS: [(&str, Factor, f64); 4] = [
    ("sin1", Factor::Sin(1), 1.0),
    ("cos1", Factor::Cos(1), 1.0),
    ("qsin2", Factor::Sin(2), 0.25),
    ("qcos2", Factor::Cos(2), 0.25),
];

/// `y` factors of the 2D uniform observations.
const U2D_OBS: [(&str, Factor); 6] = [
    ("sin1", Factor::Sin(1)),
    ("cos1", Factor::Cos(1)),
    ("sin2", Factor::Sin(2)),
    ("cos2", Factor::Cos(2)),
    ("sin3", Factor::Sin(3)),
    ("cos3", Factor::Cos(3)),
];

/// `x` and `y` factors of the 2D log-Gaussian observations.
const LN_OBS: [(&str, Factor); 5] = [
    ("one", Factor::One),
    ("1psin1", Factor::OnePlusSin(1)),
    ("1pcos1", Factor::OnePlusCos(1)),
    ("1psin2", Factor::OnePlusSin(2)),
    ("1pcos2", Factor::OnePlusCos(2)),
];

/// Per-axis periodic eigenfunctions with wave number 0 or 1.
const LN_AXIS: [(Factor, u32); 3] = [(Factor::One, 0), (Factor::Sin(1), 1), (Factor::Cos(1), 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Term,
    Family,
    Observation,
    ObservationSet,
}

impl EntryKind {
    pub fn name(self) -> &'static str {
        match self {
            EntryKind::Term => "term",
            EntryKind::Family => "family",
            EntryKind::Observation => "observation",
            EntryKind::ObservationSet => "observation-set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub kind: EntryKind,
    pub id: String,
    pub formula: String,
}

/// A prior family: kind, mean, log-Gaussian offset and term ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub prior: PriorKind,
    pub dim: usize,
    pub mean: Field,
    pub offset: Field,
    pub terms: Vec<String>,
}

impl Family {
    pub fn build(&self) -> Result<TwoScaleCoefficient> {
        let psis = self.terms.iter().map(|t| term(t)).collect::<Result<Vec<_>>>()?;
        match self.prior {
            PriorKind::Uniform => TwoScaleCoefficient::uniform(self.mean.clone(), psis, None),
            PriorKind::Gaussian => TwoScaleCoefficient::log_gaussian(self.offset.clone(), self.mean.clone(), psis),
        }
    }
}

fn unknown(id: &str) -> Error {
    Error::UnknownId(id.to_string())
}

fn lin() -> Factor {
    Factor::Affine { c0: 1.0, c1: 1.0 }
}

fn ln_index(i: usize) -> Option<((Factor, u32), (Factor, u32))> {
    if !(1..=9).contains(&i) {
        return None;
    }
    Some((LN_AXIS[(i - 1) / 3], LN_AXIS[(i - 1) % 3]))
}

fn factor_name(f: Factor) -> String {
    match f {
        Factor::One => "1".into(),
        Factor::Sin(k) => format!("sin({}πt)", 2 * k),
        Factor::Cos(k) => format!("cos({}πt)", 2 * k),
        Factor::OnePlusSin(k) => format!("(1+sin({}πt))", 2 * k),
        Factor::OnePlusCos(k) => format!("(1+cos({}πt))", 2 * k),
        Factor::Affine { c0, c1: 1.0 } => format!("({c0}+t)"),
        Factor::Affine { c0, c1 } => format!("({c0}+{c1}t)"),
        Factor::Power(p) => format!("t^{p}"),
        Factor::Laminate { width } => format!("L_{width}(t)"),
    }
}

/// Expansion term `ψ` by id.
pub fn term(id: &str) -> Result<SeparableProduct> {
    let parts: Vec<&str> = id.split('-').collect();
    let p = match parts.as_slice() {
        ["x1p", "sin1"] => SeparableProduct::new(1.0, vec![lin()], vec![Factor::Sin(1)]),
        ["x1p", "cos1"] => SeparableProduct::new(1.0, vec![lin()], vec![Factor::Cos(1)]),
        ["u2d", a, b] => {
            let fa = U2D_FACTORS.iter().find(|f| f.0 == *a).ok_or_else(|| unknown(id))?;
            let fb = U2D_FACTORS.iter().find(|f| f.0 == *b).ok_or_else(|| unknown(id))?;
            SeparableProduct::new(0.25 * fa.2 * fb.2, vec![lin(), lin()], vec![fa.1, fb.1])
        }
        ["ln2d", i, j] => {
            let i: usize = i.parse().map_err(|_| unknown(id))?;
            let j: usize = j.parse().map_err(|_| unknown(id))?;
            if i == 1 && j == 1 {
                return Err(unknown(id));
            }
            let ((x1, k1), (x2, k2)) = ln_index(i).ok_or_else(|| unknown(id))?;
            let ((y1, m1), (y2, m2)) = ln_index(j).ok_or_else(|| unknown(id))?;
            let lambda = FOUR_PI2 * (k1 * k1 + k2 * k2) as f64;
            let mu = FOUR_PI2 * (m1 * m1 + m2 * m2) as f64;
            let w = 1.0 / ((lambda + mu) * (lambda + mu));
            SeparableProduct::new(w, vec![x1, x2], vec![y1, y2])
        }
        _ => return Err(unknown(id)),
    };
    p
}

fn term_formula(id: &str) -> String {
    match id {
        "x1p-sin1" => "(1+x) sin(2πy)".into(),
        "x1p-cos1" => "(1+x) cos(2πy)".into(),
        _ => {
            let p = term(id).expect("catalogue ids are valid");
            let axes: Vec<String> = (0..p.dim())
                .map(|k| {
                    format!(
                        "{}[x{}] {}[y{}]",
                        factor_name(p.x[k]).replace('t', "x"),
                        k + 1,
                        factor_name(p.y[k]).replace('t', "y"),
                        k + 1
                    )
                })
                .collect();
            let scale = if p.scale >= 1e-3 {
                format!("{}", p.scale)
            } else {
                format!("{:.6e}", p.scale)
            };
            format!("{scale} · {}", axes.join(" · "))
        }
    }
}

pub fn family(id: &str) -> Result<Family> {
    Ok(match id {
        "family:sin-cos-1d" => Family {
            prior: PriorKind::Uniform,
            dim: 1,
            mean: Field::constant(1, 9.0),
            offset: Field::zero(1),
            terms: vec!["x1p-sin1".into(), "x1p-cos1".into()],
        },
        "family:uniform-2d" => {
            let mut terms = Vec::new();
            for a in U2D_FACTORS {
                for b in U2D_FACTORS {
                    terms.push(format!("u2d-{}-{}", a.0, b.0));
                }
            }
            Family {
                prior: PriorKind::Uniform,
                dim: 2,
                mean: Field::constant(2, 10.0),
                offset: Field::zero(2),
                terms,
            }
        }
        "family:lognormal-2d" => {
            let mut terms = Vec::new();
            for i in 1..=9 {
                for j in 1..=9 {
                    if (i, j) != (1, 1) {
                        terms.push(format!("ln2d-{i}-{j}"));
                    }
                }
            }
            Family {
                prior: PriorKind::Gaussian,
                dim: 2,
                mean: Field::zero(2),
                offset: Field::zero(2),
                terms,
            }
        }
        "family:laminate-2d" => Family {
            prior: PriorKind::Uniform,
            dim: 2,
            mean: Field::new(
                2,
                vec![
                    SeparableProduct::constant(2, 1.0),
                    SeparableProduct::new(9.0, vec![Factor::One, Factor::One], vec![Factor::Laminate { width: 0.02 }, Factor::One])?,
                ],
            )?,
            offset: Field::zero(2),
            terms: vec![],
        },
        _ => return Err(unknown(id)),
    })
}

fn family_formula(id: &str) -> &'static str {
    match id {
        "family:sin-cos-1d" => "uniform: 9 + z1 (1+x) sin(2πy) + z2 (1+x) cos(2πy)",
        "family:uniform-2d" => "uniform: 10 + Σ z_{F1,F2} ¼(1+x1)(1+x2) F1(y1) F2(y2), F in {sin 2π, cos 2π, ¼sin 4π, ¼cos 4π}",
        "family:lognormal-2d" => "log-Gaussian: exp(Σ_{(i,j)≠(1,1)} z_ij ψ_i(x) φ_j(y) / (λ_i + μ_j)²), 80 terms",
        "family:laminate-2d" => "fixed: 1 + 9 L(y1), L a tanh-smoothed indicator of [1/2, 1) with width 0.02",
        _ => "",
    }
}

fn weight2(scale: f64, x: [Factor; 2], y: [Factor; 2]) -> Result<Field> {
    Ok(Field::single(SeparableProduct::new(scale, x.to_vec(), y.to_vec())?))
}

/// Observation functional by id.
pub fn observation(id: &str) -> Result<Functional> {
    let w1 = |x: Factor, y: Factor| -> Result<Functional> {
        Ok(Functional::Weighted {
            weight: Field::single(SeparableProduct::new(1.0, vec![x], vec![y])?),
            component: 0,
        })
    };
    let parse_p = |s: &str| -> Result<usize> {
        match s {
            "p1" => Ok(0),
            "p2" => Ok(1),
            _ => Err(unknown(id)),
        }
    };
    let parts: Vec<&str> = id.split('-').collect();
    match parts.as_slice() {
        ["x"] => w1(Factor::Power(1), Factor::One),
        ["x2"] => w1(Factor::Power(2), Factor::One),
        ["x", "1psin1"] => w1(Factor::Power(1), Factor::OnePlusSin(1)),
        ["x", "1pcos1"] => w1(Factor::Power(1), Factor::OnePlusCos(1)),
        ["flux"] => Ok(Functional::Flux { component: 0, scale: 1.0 }),
        ["flux", p] => Ok(Functional::Flux {
            component: parse_p(p)?,
            scale: 1.0,
        }),
        ["u2d", "obs", a, b, p] => {
            let ga = U2D_OBS.iter().find(|f| f.0 == *a).ok_or_else(|| unknown(id))?;
            let gb = U2D_OBS.iter().find(|f| f.0 == *b).ok_or_else(|| unknown(id))?;
            Ok(Functional::Weighted {
                weight: weight2(1.0, [lin(), lin()], [ga.1, gb.1])?,
                component: parse_p(p)?,
            })
        }
        ["ln2d", "obs", f1, f2, g1, g2, p] => {
            let find = |s: &str| LN_OBS.iter().find(|f| f.0 == s).map(|f| f.1).ok_or_else(|| unknown(id));
            Ok(Functional::Weighted {
                weight: weight2(1000.0, [find(f1)?, find(f2)?], [find(g1)?, find(g2)?])?,
                component: parse_p(p)?,
            })
        }
        _ => Err(unknown(id)),
    }
}

fn observation_formula(id: &str) -> String {
    match observation(id) {
        Ok(Functional::Flux { component, .. }) => format!("∫∫ A ∂_{} u", component + 1),
        Ok(Functional::Weighted { weight, component }) => {
            let t = &weight.terms[0];
            let axes: Vec<String> = (0..t.dim())
                .map(|k| {
                    let xs = match t.x[k] {
                        Factor::Power(1) => "x".into(),
                        Factor::Power(p) => format!("x^{p}"),
                        Factor::Affine { .. } => "(1+x)".into(),
                        f => factor_name(f).replace('t', "x"),
                    };
                    let ys = factor_name(t.y[k]).replace('t', "y");
                    if t.dim() == 1 {
                        format!("{xs} {ys}")
                    } else {
                        format!("{}[{}] {}[{}]", xs, k + 1, ys, k + 1)
                    }
                })
                .collect();
            let scale = if t.scale == 1.0 { String::new() } else { format!("{} · ", t.scale) };
            format!("∫∫ {}{} · ∂_{} u", scale, axes.join(" · "), component + 1)
        }
        Err(_) => String::new(),
    }
}

/// The ids of a named observation set.
pub fn observation_set(id: &str) -> Result<Vec<String>> {
    let v: Vec<String> = match id {
        "obs:1d-u0-only" => vec!["x".into(), "x2".into()],
        "obs:1d-u0u1" => vec!["x-1psin1".into(), "x-1pcos1".into()],
        "obs:1d-flux" => vec!["flux".into()],
        "obs:uniform-2d" => {
            let mut v = Vec::new();
            for a in U2D_OBS {
                for b in U2D_OBS {
                    for p in 1..=2 {
                        v.push(format!("u2d-obs-{}-{}-p{p}", a.0, b.0));
                    }
                }
            }
            v
        }
        "obs:lognormal-2d" => {
            let mut v = Vec::new();
            for f1 in LN_OBS {
                for f2 in LN_OBS {
                    for g1 in LN_OBS {
                        for g2 in LN_OBS {
                            for p in 1..=2 {
                                v.push(format!("ln2d-obs-{}-{}-{}-{}-p{p}", f1.0, f2.0, g1.0, g2.0));
                            }
                        }
                    }
                }
            }
            v
        }
        _ => return Err(unknown(id)),
    };
    Ok(v)
}

const FAMILIES: [&str; 4] = [
    "family:sin-cos-1d",
    "family:uniform-2d",
    "family:lognormal-2d",
    "family:laminate-2d",
];

const OBS_SETS: [&str; 5] = [
    "obs:1d-u0-only",
    "obs:1d-u0u1",
    "obs:1d-flux",
    "obs:uniform-2d",
    "obs:lognormal-2d",
];

/// Every entry, in a fixed order.
pub fn list() -> Vec<Entry> {
    let mut out = Vec::new();
    let mut terms: Vec<String> = vec!["x1p-sin1".into(), "x1p-cos1".into()];
    terms.extend(family("family:uniform-2d").expect("built-in").terms);
    terms.extend(family("family:lognormal-2d").expect("built-in").terms);
    for id in terms {
        out.push(Entry {
            kind: EntryKind::Term,
            formula: term_formula(&id),
            id,
        });
    }
    for id in FAMILIES {
        out.push(Entry {
            kind: EntryKind::Family,
            id: id.into(),
            formula: family_formula(id).into(),
        });
    }
    let mut obs: Vec<String> = vec!["flux-p1".into(), "flux-p2".into()];
    for s in OBS_SETS {
        let ids = observation_set(s).expect("built-in");
        out.push(Entry {
            kind: EntryKind::ObservationSet,
            id: s.into(),
            formula: format!("{} functionals: {}", ids.len(), if ids.len() <= 4 { ids.join(", ") } else { format!("{}, …", ids[..2].join(", ")) }),
        });
        obs.extend(ids);
    }
    for id in obs {
        out.push(Entry {
            kind: EntryKind::Observation,
            formula: observation_formula(&id),
            id,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_build() {
        for id in FAMILIES {
            let f = family(id).unwrap();
            let c = f.build().unwrap();
            assert_eq!(c.dim(), f.dim);
        }
        assert_eq!(family("family:uniform-2d").unwrap().terms.len(), 16);
        assert_eq!(family("family:lognormal-2d").unwrap().terms.len(), 80);
    }

    #[test]
    fn sin_cos_family_value() {
        let c = family("family:sin-cos-1d").unwrap().build().unwrap();
        let v = c.eval_unchecked(&[1.0, 0.0], &[0.5], &[0.25]);
        assert!((v - 10.5).abs() < 1e-14);
    }

    #[test]
    fn every_listed_id_resolves() {
        let entries = list();
        for e in &entries {
            match e.kind {
                EntryKind::Term => assert!(term(&e.id).is_ok()),
                EntryKind::Family => assert!(family(&e.id).is_ok()),
                EntryKind::Observation => assert!(observation(&e.id).is_ok()),
                EntryKind::ObservationSet => assert!(observation_set(&e.id).is_ok()),
            }
            assert!(!e.formula.is_empty(), "{}", e.id);
        }
        assert_eq!(observation_set("obs:uniform-2d").unwrap().len(), 72);
        assert_eq!(observation_set("obs:lognormal-2d").unwrap().len(), 1250);
        assert!(entries.iter().any(|e| e.id == "u2d-qsin2-cos1"));
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(matches!(term("ln2d-1-1"), Err(Error::UnknownId(_))));
        assert!(matches!(observation("u2d-obs-sin9-cos1-p1"), Err(Error::UnknownId(_))));
        assert!(family("family:none").is_err());
    }
}
