//! Context matching: global similarity per reference, saliency, masked
//! softmax over references, feature aggregation and the never-visible mask.

use crate::error::{ensure_dims, Error, Result};
use crate::features::FeatureMap;
use crate::media::{Plane, VisibilityMap};

/// Normalization scope of the per-cell softmax over references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxMode {
    /// Only references visible at the cell take part; the rest get exactly 0.
    #[default]
    Masked,
    /// Every reference takes part, invisible ones with saliency 0.
    Normal,
}

impl std::str::FromStr for SoftmaxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked" => Ok(Self::Masked),
            "normal" => Ok(Self::Normal),
            other => Err(Error::Config(format!("unknown softmax mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for SoftmaxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Masked => "masked",
            Self::Normal => "normal",
        })
    }
}

/// Inputs at feature resolution. Features are expected L2-normalized and
/// references already aligned to the target.
#[derive(Debug, Clone)]
pub struct MatchInput {
    pub target_features: FeatureMap,
    pub ref_features: Vec<FeatureMap>,
    /// `V^t * V^{r->t}`, binary.
    pub joint_visibility: Vec<VisibilityMap>,
    /// `V^{r->t}`, binary.
    pub ref_visibility: Vec<VisibilityMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub theta: Vec<f64>,
    /// False for references with no jointly visible cell.
    pub usable: Vec<bool>,
    pub c_match: Vec<Plane>,
    pub c_out: FeatureMap,
    pub c_mask: Plane,
}

/// Global similarity of one reference with the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub theta: f64,
    pub usable: bool,
}

/// Visibility-weighted mean of per-cell dot products.
pub fn global_similarity(f_t: &FeatureMap, f_r: &FeatureMap, v: &VisibilityMap) -> Result<Similarity> {
    f_t.same_shape(f_r)?;
    ensure_dims(f_t.dims(), v.dims())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, b), &w) in f_t
        .data
        .chunks_exact(f_t.channels)
        .zip(f_r.data.chunks_exact(f_r.channels))
        .zip(v.data())
    {
        if w == 0.0 {
            continue;
        }
        num += w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        den += w;
    }
    if den == 0.0 {
        return Ok(Similarity {
            theta: 0.0,
            usable: false,
        });
    }
    Ok(Similarity {
        theta: (num / den).clamp(-1.0, 1.0),
        usable: true,
    })
}

/// `S = theta * v_ref`.
pub fn saliency(theta: f64, v_ref: &VisibilityMap) -> Plane {
    Plane {
        width: v_ref.width(),
        height: v_ref.height(),
        data: v_ref.data().iter().map(|&v| theta * v).collect(),
    }
}

/// Per-cell softmax over references.
pub fn masked_softmax(
    s: &[Plane],
    v_ref: &[VisibilityMap],
    mode: SoftmaxMode,
) -> Result<Vec<Plane>> {
    if s.len() != v_ref.len() {
        return Err(Error::InvalidInput(format!(
            "{} saliency maps but {} visibility maps",
            s.len(),
            v_ref.len()
        )));
    }
    let Some(first) = s.first() else {
        return Ok(Vec::new());
    };
    let dims = first.dims();
    for (p, v) in s.iter().zip(v_ref) {
        ensure_dims(dims, p.dims())?;
        ensure_dims(dims, v.dims())?;
    }
    let mut out: Vec<Plane> = s.iter().map(|_| Plane::new(dims.0, dims.1, 0.0)).collect();
    let r_count = s.len();
    let mut exps = vec![0.0; r_count];
    for i in 0..dims.0 * dims.1 {
        let participates = |r: usize| mode == SoftmaxMode::Normal || v_ref[r].data()[i] == 1.0;
        let max = (0..r_count)
            .filter(|&r| participates(r))
            .map(|r| s[r].data[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for r in 0..r_count {
            exps[r] = if participates(r) {
                (s[r].data[i] - max).exp()
            } else {
                0.0
            };
            total += exps[r];
        }
        for r in 0..r_count {
            out[r].data[i] = exps[r] / total;
        }
    }
    Ok(out)
}

/// `C_out = sum_r F_r * C_match_r`, `C_mask = 1 - sum_r C_match_r`.
pub fn aggregate(
    f_refs: &[FeatureMap],
    c_match: &[Plane],
    v_ref: &[VisibilityMap],
) -> Result<(FeatureMap, Plane)> {
    if f_refs.len() != c_match.len() || f_refs.len() != v_ref.len() {
        return Err(Error::InvalidInput("reference list lengths differ".into()));
    }
    let Some(first) = f_refs.first() else {
        return Err(Error::InvalidInput("aggregation needs at least one reference".into()));
    };
    for ((f, w), v) in f_refs.iter().zip(c_match).zip(v_ref) {
        first.same_shape(f)?;
        ensure_dims(first.dims(), w.dims())?;
        ensure_dims(first.dims(), v.dims())?;
    }
    let (w, h) = first.dims();
    let c = first.channels;
    let mut c_out = FeatureMap::zeros(w, h, c, first.stride);
    let mut mass = Plane::new(w, h, 0.0);
    for (f, weights) in f_refs.iter().zip(c_match) {
        for i in 0..w * h {
            let wt = weights.data[i];
            if wt == 0.0 {
                continue;
            }
            mass.data[i] += wt;
            let src = &f.data[i * c..(i + 1) * c];
            for (o, s) in c_out.data[i * c..(i + 1) * c].iter_mut().zip(src) {
                *o += wt * s;
            }
        }
    }
    let mut c_mask = mass;
    for m in &mut c_mask.data {
        // partitions of unity may sum to 1 - ulp
        *m = if (*m - 1.0).abs() < 1e-9 { 0.0 } else { 1.0 - *m };
    }
    Ok((c_out, c_mask))
}

/// Runs similarity, saliency, softmax and aggregation. Unusable references
/// keep an all-zero weight map so indices stay aligned with the input.
pub fn context_match(input: &MatchInput, mode: SoftmaxMode) -> Result<MatchResult> {
    let r_count = input.ref_features.len();
    if input.joint_visibility.len() != r_count || input.ref_visibility.len() != r_count {
        return Err(Error::InvalidInput("reference list lengths differ".into()));
    }
    let f_t = &input.target_features;
    let (w, h) = f_t.dims();
    let mut theta = Vec::with_capacity(r_count);
    let mut usable = Vec::with_capacity(r_count);
    for (f_r, v) in input.ref_features.iter().zip(&input.joint_visibility) {
        let sim = global_similarity(f_t, f_r, v)?;
        theta.push(sim.theta);
        usable.push(sim.usable);
    }

    let active: Vec<usize> = (0..r_count).filter(|&r| usable[r]).collect();
    let s: Vec<Plane> = active
        .iter()
        .map(|&r| saliency(theta[r], &input.ref_visibility[r]))
        .collect();
    let v_active: Vec<VisibilityMap> = active
        .iter()
        .map(|&r| input.ref_visibility[r].clone())
        .collect();
    let weights = masked_softmax(&s, &v_active, mode)?;

    let mut c_match: Vec<Plane> = (0..r_count).map(|_| Plane::new(w, h, 0.0)).collect();
    for (k, &r) in active.iter().enumerate() {
        c_match[r] = weights[k].clone();
    }
    let (c_out, c_mask) = if r_count == 0 {
        (
            FeatureMap::zeros(w, h, f_t.channels, f_t.stride),
            Plane::new(w, h, 1.0),
        )
    } else {
        aggregate(&input.ref_features, &c_match, &input.ref_visibility)?
    };
    Ok(MatchResult {
        theta,
        usable,
        c_match,
        c_out,
        c_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vis(w: usize, h: usize, data: Vec<f64>) -> VisibilityMap {
        VisibilityMap::new(w, h, data, true).unwrap()
    }

    #[test]
    fn identical_features_have_unit_similarity() {
        let data: Vec<f64> = (0..16)
            .flat_map(|i| {
                let a = i as f64 * 0.3;
                [a.cos(), a.sin()]
            })
            .collect();
        let f = FeatureMap {
            width: 4,
            height: 4,
            channels: 2,
            stride: 1,
            data,
        };
        let sim = global_similarity(&f, &f, &VisibilityMap::ones(4, 4)).unwrap();
        assert!((sim.theta - 1.0).abs() < 1e-12 && sim.usable);
        let sim = global_similarity(&f, &f, &VisibilityMap::zeros(4, 4)).unwrap();
        assert_eq!(sim, Similarity { theta: 0.0, usable: false });
    }

    #[test]
    fn saliency_examples() {
        let s = saliency(1.0, &VisibilityMap::ones(3, 3));
        assert!(s.data.iter().all(|&v| v == 1.0));
        let mut d = vec![1.0; 4];
        d[0] = 0.0;
        let s = saliency(0.5, &vis(2, 2, d));
        assert_eq!(s.data, vec![0.0, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn softmax_examples() {
        let one = masked_softmax(
            &[Plane::new(3, 3, 0.7)],
            &[VisibilityMap::ones(3, 3)],
            SoftmaxMode::Masked,
        )
        .unwrap();
        assert!(one[0].data.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let w = masked_softmax(
            &[Plane::new(1, 1, 0.0), Plane::new(1, 1, 3f64.ln())],
            &[VisibilityMap::ones(1, 1), VisibilityMap::ones(1, 1)],
            SoftmaxMode::Masked,
        )
        .unwrap();
        assert!((w[0].data[0] - 0.25).abs() < 1e-12);
        assert!((w[1].data[0] - 0.75).abs() < 1e-12);

        let none = masked_softmax(
            &vec![Plane::new(1, 1, 0.0); 3],
            &vec![VisibilityMap::zeros(1, 1); 3],
            SoftmaxMode::Masked,
        )
        .unwrap();
        assert!(none.iter().all(|p| p.data[0] == 0.0));

        assert!(masked_softmax(&[], &[], SoftmaxMode::Masked).unwrap().is_empty());
    }

    #[test]
    fn normal_softmax_includes_invisible_references() {
        let theta = 0.8f64;
        let s = [Plane::new(1, 1, theta), Plane::new(1, 1, 0.0)];
        let v = [VisibilityMap::ones(1, 1), VisibilityMap::zeros(1, 1)];
        let w = masked_softmax(&s, &v, SoftmaxMode::Normal).unwrap();
        let z = theta.exp() + 1.0;
        assert!((w[0].data[0] - theta.exp() / z).abs() < 1e-12);
        assert!((w[1].data[0] - 1.0 / z).abs() < 1e-12);
        let w = masked_softmax(&s, &v, SoftmaxMode::Masked).unwrap();
        assert_eq!((w[0].data[0], w[1].data[0]), (1.0, 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let f = FeatureMap {
            width: 2,
            height: 1,
            channels: 2,
            stride: 1,
            data: vec![0.6, 0.8, 1.0, 0.0],
        };
        let (out, mask) =
            aggregate(&[f.clone()], &[Plane::new(2, 1, 1.0)], &[VisibilityMap::ones(2, 1)])
                .unwrap();
        assert_eq!(out.data, f.data);
        assert_eq!(mask.data, vec![0.0, 0.0]);

        let (out, mask) =
            aggregate(&[f], &[Plane::new(2, 1, 0.0)], &[VisibilityMap::zeros(2, 1)]).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!(mask.data, vec![1.0, 1.0]);
    }

    #[test]
    fn unusable_reference_is_excluded() {
        let f = FeatureMap {
            width: 1,
            height: 1,
            channels: 1,
            stride: 1,
            data: vec![1.0],
        };
        let input = MatchInput {
            target_features: f.clone(),
            ref_features: vec![f.clone(), f],
            joint_visibility: vec![VisibilityMap::ones(1, 1), VisibilityMap::zeros(1, 1)],
            ref_visibility: vec![VisibilityMap::ones(1, 1), VisibilityMap::ones(1, 1)],
        };
        let m = context_match(&input, SoftmaxMode::Masked).unwrap();
        assert_eq!(m.usable, vec![true, false]);
        assert_eq!(m.c_match[0].data[0], 1.0);
        assert_eq!(m.c_match[1].data[0], 0.0);
        assert_eq!(m.c_mask.data[0], 0.0);
    }

    #[test]
    fn no_references_means_everything_never_visible() {
        let f = FeatureMap::zeros(3, 2, 4, 4);
        let input = MatchInput {
            target_features: f,
            ref_features: vec![],
            joint_visibility: vec![],
            ref_visibility: vec![],
        };
        let m = context_match(&input, SoftmaxMode::Masked).unwrap();
        assert!(m.c_mask.data.iter().all(|&v| v == 1.0));
        assert!(m.c_out.data.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn shift_invariance(a in -3.0f64..3.0, b in -3.0f64..3.0, k in -10.0f64..10.0) {
            let v = [VisibilityMap::ones(1, 1), VisibilityMap::ones(1, 1)];
            let w1 = masked_softmax(&[Plane::new(1, 1, a), Plane::new(1, 1, b)], &v, SoftmaxMode::Masked).unwrap();
            let w2 = masked_softmax(&[Plane::new(1, 1, a + k), Plane::new(1, 1, b + k)], &v, SoftmaxMode::Masked).unwrap();
            prop_assert!((w1[0].data[0] - w2[0].data[0]).abs() < 1e-12);
        }

        #[test]
        fn raising_theta_never_lowers_own_weight(t in prop::collection::vec(-1.0f64..1.0, 3), bump in 0.0f64..1.0) {
            let v = vec![VisibilityMap::ones(1, 1); 3];
            let s: Vec<Plane> = t.iter().map(|&x| saliency(x, &v[0])).collect();
            let mut s2 = s.clone();
            s2[0] = saliency(t[0] + bump, &v[0]);
            let w1 = masked_softmax(&s, &v, SoftmaxMode::Masked).unwrap();
            let w2 = masked_softmax(&s2, &v, SoftmaxMode::Masked).unwrap();
            prop_assert!(w2[0].data[0] >= w1[0].data[0] - 1e-15);
        }
    }
}
