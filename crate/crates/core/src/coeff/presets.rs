//! Named coefficient presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_expr, CoefficientSet, Scope};
use crate::error::{Error, Result};

pub const PRESETS: &[&str] = &["identity", "laminate", "smooth-trig", "random-trig", "coupled"];

fn set(c: &mut CoefficientSet, which: char, idx: usize, src: &str) {
    let e = parse_expr(src, Scope::cell(c.dim())).expect("preset expressions are valid");
    match which {
        'a' => c.a[idx] = e,
        'v' => c.v[idx] = e,
        'b' => c.b[idx] = e,
        _ => c.c[idx] = e,
    }
}

/// Builds a preset by name. `seed` only affects `random-trig`.
pub fn preset(name: &str, seed: u64) -> Result<CoefficientSet> {
    let mut c = match name {
        "identity" => CoefficientSet::identity(2, 1, 1.0),
        "laminate" => laminate(),
        "smooth-trig" => smooth_trig(),
        "random-trig" => random_trig(seed),
        "coupled" => coupled(),
        other => {
            return Err(Error::invalid(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    c.name = name.to_string();
    Ok(c)
}

/// `A = (2 + sin 2 pi y1) I`, no lower-order terms.
fn laminate() -> CoefficientSet {
    let mut c = CoefficientSet::identity(2, 1, 1.0);
    let l = c.layout;
    set(&mut c, 'a', l.a(0, 0, 0, 0), "2+sin(2*pi*y1)");
    set(&mut c, 'a', l.a(1, 1, 0, 0), "2+sin(2*pi*y1)");
    c
}

/// Smooth symmetric `A` with off-diagonal coupling and all lower-order terms.
fn smooth_trig() -> CoefficientSet {
    let mut c = CoefficientSet::identity(2, 1, 2.0);
    let l = c.layout;
    set(&mut c, 'a', l.a(0, 0, 0, 0), "2+0.5*sin(2*pi*y1)*cos(2*pi*y2)");
    set(&mut c, 'a', l.a(1, 1, 0, 0), "2+0.5*cos(2*pi*y1)+0.25*sin(2*pi*y2)");
    set(&mut c, 'a', l.a(0, 1, 0, 0), "0.3*sin(2*pi*(y1+y2))");
    set(&mut c, 'a', l.a(1, 0, 0, 0), "0.3*sin(2*pi*(y1+y2))");
    set(&mut c, 'v', l.v(0, 0, 0), "0.3*sin(2*pi*y2)");
    set(&mut c, 'v', l.v(1, 0, 0), "0.2*cos(2*pi*y1)");
    set(&mut c, 'b', l.v(0, 0, 0), "0.2*cos(2*pi*y2)");
    set(&mut c, 'b', l.v(1, 0, 0), "0.3*sin(2*pi*y1)");
    set(&mut c, 'c', l.c(0, 0), "0.5+0.25*sin(2*pi*y1)*sin(2*pi*y2)");
    c.kappa = Some(1.0);
    c
}

fn random_modes(rng: &mut ChaCha8Rng, count: usize, total_amplitude: f64) -> String {
    let mut terms = Vec::with_capacity(count);
    let mut weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w *= total_amplitude / s;
    }
    for w in weights {
        let k1: i32 = rng.random_range(-2..=2);
        let k2: i32 = rng.random_range(if k1 == 0 { 1 } else { -2 }..=2);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        terms.push(format!("{w:.6}*sin(2*pi*({k1}*y1+{k2}*y2)+{phase:.6})"));
    }
    terms.join("+")
}

/// Seeded random trigonometric polynomial coefficients.
fn random_trig(seed: u64) -> CoefficientSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CoefficientSet::identity(2, 1, 2.0);
    let l = c.layout;
    let d1 = format!("2+{}", random_modes(&mut rng, 3, 0.8));
    let d2 = format!("2+{}", random_modes(&mut rng, 3, 0.8));
    let off = random_modes(&mut rng, 2, 0.3);
    set(&mut c, 'a', l.a(0, 0, 0, 0), &d1);
    set(&mut c, 'a', l.a(1, 1, 0, 0), &d2);
    set(&mut c, 'a', l.a(0, 1, 0, 0), &off);
    set(&mut c, 'a', l.a(1, 0, 0, 0), &off);
    for i in 0..2 {
        let v = random_modes(&mut rng, 2, 0.25);
        let b = random_modes(&mut rng, 2, 0.25);
        set(&mut c, 'v', l.v(i, 0, 0), &v);
        set(&mut c, 'b', l.v(i, 0, 0), &b);
    }
    let cc = format!("0.5+{}", random_modes(&mut rng, 2, 0.25));
    set(&mut c, 'c', l.c(0, 0), &cc);
    c.kappa = Some(1.0);
    c
}

/// Two-component system with symmetric coupled `A` and non-symmetric `c`.
fn coupled() -> CoefficientSet {
    let mut c = CoefficientSet::identity(2, 2, 2.0);
    let l = c.layout;
    for i in 0..2 {
        set(&mut c, 'a', l.a(i, i, 0, 0), "2+0.5*sin(2*pi*y1)");
        set(&mut c, 'a', l.a(i, i, 1, 1), "2+0.5*cos(2*pi*y2)");
        set(&mut c, 'a', l.a(i, i, 0, 1), "0.3*sin(2*pi*(y1-y2))");
        set(&mut c, 'a', l.a(i, i, 1, 0), "0.3*sin(2*pi*(y1-y2))");
    }
    set(&mut c, 'v', l.v(0, 0, 1), "0.2*cos(2*pi*y1)");
    set(&mut c, 'v', l.v(1, 1, 0), "0.2*sin(2*pi*y2)");
    set(&mut c, 'b', l.v(0, 1, 0), "0.2*sin(2*pi*y1)");
    set(&mut c, 'b', l.v(1, 0, 1), "0.1*cos(2*pi*y1)");
    set(&mut c, 'c', l.c(0, 0), "0.5");
    set(&mut c, 'c', l.c(0, 1), "0.2");
    set(&mut c, 'c', l.c(1, 0), "-0.1");
    set(&mut c, 'c', l.c(1, 1), "0.5+0.1*sin(2*pi*y2)");
    c.kappa = Some(1.0);
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CellGrid;

    #[test]
    fn all_presets_validate() {
        let g = CellGrid::new(32, 2).unwrap();
        for name in PRESETS {
            let c = preset(name, 7).unwrap();
            let r = c.validate(g, true).unwrap();
            assert!(r.mu_observed > 0.5, "{name}: {}", r.mu_observed);
            assert!(r.symmetric_a_observed, "{name}");
        }
    }

    #[test]
    fn random_preset_is_seeded() {
        let a = preset("random-trig", 3).unwrap();
        let b = preset("random-trig", 3).unwrap();
        let c = preset("random-trig", 4).unwrap();
        assert_eq!(a.a, b.a);
        assert_ne!(a.a, c.a);
    }

    #[test]
    fn unknown_preset() {
        assert!(preset("nope", 0).is_err());
    }
}
