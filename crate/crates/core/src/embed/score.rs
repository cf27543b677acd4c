//! Triple scoring functions and their gradients.
//!
//! | Model    | Score                      |
//! |----------|----------------------------|
//! | TransE   | `-‖h + r - t‖`             |
//! | DistMult | `Σ hᵢ rᵢ tᵢ`               |
//! | ComplEx  | `Re(Σ hᵢ rᵢ conj(tᵢ))`     |
//!
//! ComplEx vectors use the `[real parts | imaginary parts]` layout, so a
//! complex vector of dimension `d` is a slice of length `2d`.

use serde::{Deserialize, Serialize};

use crate::error::EmbeddingError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

fn same_len(h: &[f64], r: &[f64], t: &[f64]) -> Result<(), EmbeddingError> {
    if h.len() != r.len() {
        return Err(EmbeddingError::LengthMismatch(h.len(), r.len()));
    }
    if h.len() != t.len() {
        return Err(EmbeddingError::LengthMismatch(h.len(), t.len()));
    }
    Ok(())
}

pub fn score_transe(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> Result<f64, EmbeddingError> {
    same_len(h, r, t)?;
    let residual = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
    Ok(match norm {
        Norm::L1 => -residual.map(f64::abs).sum::<f64>(),
        Norm::L2 => -residual.map(|x| x * x).sum::<f64>().sqrt(),
    })
}

pub fn score_distmult(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64, EmbeddingError> {
    same_len(h, r, t)?;
    Ok(h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum())
}

pub fn score_complex(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64, EmbeddingError> {
    same_len(h, r, t)?;
    if !h.len().is_multiple_of(2) {
        return Err(EmbeddingError::LengthMismatch(h.len(), h.len() + 1));
    }
    let d = h.len() / 2;
    let (hr, hi) = h.split_at(d);
    let (rr, ri) = r.split_at(d);
    let (tr, ti) = t.split_at(d);
    let mut s = 0.0;
    for k in 0..d {
        // (hr + i hi)(rr + i ri) = (hr rr - hi ri) + i (hr ri + hi rr); times (tr - i ti), real part
        s += (hr[k] * rr[k] - hi[k] * ri[k]) * tr[k] + (hr[k] * ri[k] + hi[k] * rr[k]) * ti[k];
    }
    Ok(s)
}

/// Score plus its partial derivatives with respect to `h`, `r` and `t`.
#[derive(Clone, Debug)]
pub struct ScoreGrad {
    pub score: f64,
    pub dh: Vec<f64>,
    pub dr: Vec<f64>,
    pub dt: Vec<f64>,
}

/// Gradient of the TransE score. At a zero residual the L2 gradient is taken as 0,
/// and L1 uses `sign(0) = 0`.
pub fn transe_grad(h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> ScoreGrad {
    let residual: Vec<f64> = h
        .iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| h + r - t)
        .collect();
    let (score, unit): (f64, Vec<f64>) = match norm {
        Norm::L1 => (
            -residual.iter().map(|x| x.abs()).sum::<f64>(),
            residual
                .iter()
                .map(|&x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        Norm::L2 => {
            let n = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
            let unit = if n > 0.0 {
                residual.iter().map(|x| x / n).collect()
            } else {
                vec![0.0; residual.len()]
            };
            (-n, unit)
        }
    };
    // score = -‖res‖, d score / d res = -unit; res = h + r - t
    let dh: Vec<f64> = unit.iter().map(|u| -u).collect();
    let dt = unit;
    ScoreGrad {
        score,
        dr: dh.clone(),
        dh,
        dt,
    }
}

pub fn distmult_grad(h: &[f64], r: &[f64], t: &[f64]) -> ScoreGrad {
    let score = h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum();
    ScoreGrad {
        score,
        dh: r.iter().zip(t).map(|(r, t)| r * t).collect(),
        dr: h.iter().zip(t).map(|(h, t)| h * t).collect(),
        dt: h.iter().zip(r).map(|(h, r)| h * r).collect(),
    }
}

pub fn complex_grad(h: &[f64], r: &[f64], t: &[f64]) -> ScoreGrad {
    let d = h.len() / 2;
    let (hr, hi) = h.split_at(d);
    let (rr, ri) = r.split_at(d);
    let (tr, ti) = t.split_at(d);
    let mut g = ScoreGrad {
        score: 0.0,
        dh: vec![0.0; 2 * d],
        dr: vec![0.0; 2 * d],
        dt: vec![0.0; 2 * d],
    };
    for k in 0..d {
        g.score += hr[k] * rr[k] * tr[k] - hi[k] * ri[k] * tr[k]
            + hr[k] * ri[k] * ti[k]
            + hi[k] * rr[k] * ti[k];
        g.dh[k] = rr[k] * tr[k] + ri[k] * ti[k];
        g.dh[d + k] = -ri[k] * tr[k] + rr[k] * ti[k];
        g.dr[k] = hr[k] * tr[k] + hi[k] * ti[k];
        g.dr[d + k] = -hi[k] * tr[k] + hr[k] * ti[k];
        g.dt[k] = hr[k] * rr[k] - hi[k] * ri[k];
        g.dt[d + k] = hr[k] * ri[k] + hi[k] * rr[k];
    }
    g
}

/// `max(0, margin - positive + negative)`.
pub fn margin_ranking_loss(positive: f64, negative: f64, margin: f64) -> f64 {
    (margin - positive + negative).max(0.0)
}

/// `log(1 + exp(-label * score))` with `label` in {+1, -1}, computed stably.
pub fn logistic_loss(score: f64, label: f64) -> f64 {
    let z = -label * score;
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `d logistic_loss / d score`.
pub fn logistic_loss_slope(score: f64, label: f64) -> f64 {
    let z = -label * score;
    let sigma = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        z.exp() / (1.0 + z.exp())
    };
    -label * sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transe_examples() {
        assert_eq!(
            score_transe(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 2.0], Norm::L2).unwrap(),
            0.0
        );
        let s = score_transe(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], Norm::L2).unwrap();
        assert!((s + 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            score_transe(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], Norm::L1).unwrap(),
            -2.0
        );
        assert!(score_transe(&[1.0], &[1.0, 2.0], &[1.0], Norm::L1).is_err());
    }

    #[test]
    fn distmult_examples() {
        assert_eq!(
            score_distmult(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap(),
            2.0
        );
        assert_eq!(
            score_distmult(&[3.0, -2.0], &[0.0, 0.0], &[5.0, 7.0]).unwrap(),
            0.0
        );
        assert!(score_distmult(&[1.0], &[1.0], &[]).is_err());
    }

    #[test]
    fn complex_examples() {
        // h = [i], r = [1], t = [i]
        assert_eq!(
            score_complex(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            1.0
        );
        // h = [1], r = [i], t = [i] forward is 1, reversed is -1
        let one = [1.0, 0.0];
        let i = [0.0, 1.0];
        assert_eq!(score_complex(&one, &i, &i).unwrap(), 1.0);
        assert_eq!(score_complex(&i, &i, &one).unwrap(), -1.0);
        // zero imaginary parts reduce to DistMult
        let c = score_complex(
            &[2.0, 3.0, 0.0, 0.0],
            &[1.0, -1.0, 0.0, 0.0],
            &[0.5, 4.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(
            c,
            score_distmult(&[2.0, 3.0], &[1.0, -1.0], &[0.5, 4.0]).unwrap()
        );
        assert!(score_complex(&[1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn grad_scores_agree_with_plain_scores() {
        let h = [0.3, -0.2, 0.9, 0.1];
        let r = [0.5, 0.4, -0.7, 0.2];
        let t = [-0.1, 0.8, 0.3, -0.6];
        assert!(
            (transe_grad(&h, &r, &t, Norm::L2).score - score_transe(&h, &r, &t, Norm::L2).unwrap())
                .abs()
                < 1e-15
        );
        assert!(
            (transe_grad(&h, &r, &t, Norm::L1).score - score_transe(&h, &r, &t, Norm::L1).unwrap())
                .abs()
                < 1e-15
        );
        assert!(
            (distmult_grad(&h, &r, &t).score - score_distmult(&h, &r, &t).unwrap()).abs() < 1e-15
        );
        assert!(
            (complex_grad(&h, &r, &t).score - score_complex(&h, &r, &t).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn logistic_is_stable() {
        assert!((logistic_loss(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(logistic_loss(1000.0, -1.0).is_finite());
        assert!((logistic_loss(1000.0, -1.0) - 1000.0).abs() < 1e-9);
        assert!((logistic_loss_slope(0.0, 1.0) + 0.5).abs() < 1e-15);
    }
}
