//! Bias-corrected adaptive-moment (Adam) updates.

use texgan_tensor::{Real, Tensor};

use crate::error::{CoreError, Result};
use crate::nn::ParamStore;

pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T: Real> {
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
}

impl<T: Real> Moments<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One Adam step with 1-based `step` for bias correction. All gradients are
/// checked before anything is modified; a non-finite entry names its slot.
pub fn adam_update<T: Real>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    moments: &mut Moments<T>,
    step: u64,
    lr: f64,
    betas: (f64, f64),
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(CoreError::Config(format!("{} gradients for {} slots", grads.len(), params.len())));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(CoreError::Shape {
                layer: name.to_string(),
                detail: format!("gradient {:?} for parameter {:?}", g.shape(), p.shape()),
            });
        }
        if !g.all_finite() {
            return Err(CoreError::NonFinite {
                what: format!("gradient of `{name}`"),
                step: step as usize,
            });
        }
    }
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let slots = params.tensors_mut().zip(moments.m.tensors_mut()).zip(moments.v.tensors_mut());
    for (((p, m), v), g) in slots.zip(grads) {
        let mut pd = p.to_vec();
        let mut md = m.to_vec();
        let mut vd = v.to_vec();
        for i in 0..pd.len() {
            let gi = g.data()[i].as_f64();
            let mi = b1 * md[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * vd[i].as_f64() + (1.0 - b2) * gi * gi;
            md[i] = T::of(mi);
            vd[i] = T::of(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
            pd[i] = T::of(pd[i].as_f64() - update);
        }
        let shape = p.shape().to_vec();
        *p = Tensor::new(shape.clone(), pd)?;
        *m = Tensor::new(shape.clone(), md)?;
        *v = Tensor::new(shape, vd)?;
    }
    Ok(())
}
