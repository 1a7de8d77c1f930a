use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Vec<T>> = params.into_iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// Applies one bias-corrected update.
    ///
    /// Every gradient is checked before anything is written, so a non-finite
    /// gradient leaves parameters and moments untouched and the error names
    /// the offending tensor.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Vec<T>],
        names: &[String],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Dimension(format!(
                    "gradient of {} has {} entries for {} parameters",
                    name(names, i),
                    g.len(),
                    p.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {}",
                    name(names, i)
                )));
            }
        }

        self.step += 1;
        let (b1, b2): (T, T) = (lit(BETA1), lit(BETA2));
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let lr: T = lit(lr);
        let eps: T = lit(EPSILON);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn name(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("tensor {i}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = scalar(0.7);
        let mut st = AdamState::new([&p]);
        st.step(&mut [&mut p], &[vec![1.0]], &[], 1e-3).unwrap();
        let after_one = p.data()[0];
        let m1 = st.m[0][0];
        st.step(&mut [&mut p], &[vec![0.0]], &[], 1e-3).unwrap();
        assert!((st.m[0][0] - 0.9 * m1).abs() < 1e-18);
        // the decayed moment still moves the parameter; a fresh state does not
        let mut q = scalar(0.7);
        let mut fresh = AdamState::new([&q]);
        fresh.step(&mut [&mut q], &[vec![0.0]], &[], 1e-3).unwrap();
        assert_eq!(q.data()[0], 0.7);
        assert!(p.data()[0] < after_one);
    }

    #[test]
    fn hand_simulated_trace() {
        let grads = [0.5, -1.25, 2.0];
        let lr = 0.01;
        let mut p = scalar(1.0);
        let mut st = AdamState::new([&p]);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            st.step(&mut [&mut p], &[vec![g]], &[], lr).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((p.data()[0] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p.data()[0];
            st.step(&mut [&mut p], &[vec![3.0]], &[], 1e-3).unwrap();
            last = before - p.data()[0];
        }
        assert!((last - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_layer_and_aborts() {
        let mut a = scalar(1.0);
        let mut b = scalar(2.0);
        let mut st = AdamState::new([&a, &b]);
        let names = vec!["sa0.fc0.weight".to_string(), "head.fc1.bias".to_string()];
        let err = st
            .step(&mut [&mut a, &mut b], &[vec![1.0], vec![f64::NAN]], &names, 1e-3)
            .unwrap_err();
        assert!(err.to_string().contains("head.fc1.bias"));
        assert_eq!((a.data()[0], b.data()[0], st.step), (1.0, 2.0, 0));
    }
}
