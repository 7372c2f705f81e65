use super::params::{Gradients, ModelWeights};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

/// Classical momentum step with weight decay folded into the gradient:
/// `v ← momentum·v + g + wd·w`, then `w ← w − lr·v`.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn sgd_step(w: &mut ModelWeights, g: &Gradients, velocity: &mut Gradients, p: SgdParams) -> Result<()> {
    w.ensure_congruent(g)?;
    w.ensure_congruent(velocity)?;
    if let Some(t) = g.tensors().iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient { tensor: t.name.clone() });
    }
    for ((wt, gt), vt) in w
        .tensors_mut()
        .iter_mut()
        .zip(g.tensors())
        .zip(velocity.tensors_mut())
    {
        for ((wv, &gv), vv) in wt.data.iter_mut().zip(&gt.data).zip(vt.data.iter_mut()) {
            *vv = p.momentum * *vv + gv + p.weight_decay * *wv;
            *wv -= p.lr * *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelArchitecture, Network};

    fn scalarish() -> (Network, ModelWeights) {
        let net = Network::new(ModelArchitecture::mlp(1, &[1], 1, 2)).unwrap();
        let w = net.zeros();
        (net, w)
    }

    fn filled(w: &ModelWeights, v: f32) -> ModelWeights {
        let mut out = w.clone();
        for t in out.tensors_mut() {
            t.data.fill(v);
        }
        out
    }

    #[test]
    fn plain_step() {
        let (_, w0) = scalarish();
        let mut w = filled(&w0, 1.0);
        let g = filled(&w0, 1.0);
        let mut v = w0.zeros_like();
        let p = SgdParams { lr: 0.01, momentum: 0.0, weight_decay: 0.0 };
        sgd_step(&mut w, &g, &mut v, p).unwrap();
        assert!(w.values().all(|x| x == 0.99));
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (_, w0) = scalarish();
        let mut w = filled(&w0, 0.37);
        let before = w.clone();
        let mut v = w0.zeros_like();
        let p = SgdParams { lr: 0.5, momentum: 0.9, weight_decay: 0.0 };
        sgd_step(&mut w, &w0.zeros_like(), &mut v, p).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn two_momentum_steps() {
        let (_, w0) = scalarish();
        let mut w = w0.clone();
        let g = filled(&w0, 1.0);
        let mut v = w0.zeros_like();
        let p = SgdParams { lr: 0.1, momentum: 0.9, weight_decay: 0.0 };
        sgd_step(&mut w, &g, &mut v, p).unwrap();
        sgd_step(&mut w, &g, &mut v, p).unwrap();
        assert!(w.values().all(|x| (x - -0.29).abs() < 1e-6));
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let (_, w0) = scalarish();
        let mut w = w0.clone();
        let mut g = w0.zeros_like();
        g.tensors_mut()[2].data[0] = f32::NAN;
        let mut v = w0.zeros_like();
        let p = SgdParams { lr: 0.1, momentum: 0.0, weight_decay: 0.0 };
        match sgd_step(&mut w, &g, &mut v, p) {
            Err(Error::NonFiniteGradient { tensor }) => assert_eq!(tensor, "projection.0.weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(w, w0);
    }
}
