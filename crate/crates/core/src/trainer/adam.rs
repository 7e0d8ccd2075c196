use tch::Tensor;

/// Adam with bias correction. Moment buffers are kept by parameter name so
/// they can be written to and restored from checkpoints.
#[derive(Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) steps: u64,
    pub(crate) moments: Vec<Moment>,
}

#[derive(Debug)]
pub(crate) struct Moment {
    pub name: String,
    pub m: Tensor,
    pub v: Tensor,
}

impl Adam {
    /// `params` are the named trainable tensors of one network, in a fixed order.
    pub fn new(params: &[(String, Tensor)], beta1: f64, beta2: f64, eps: f64) -> Self {
        let moments = params
            .iter()
            .map(|(name, p)| Moment {
                name: name.clone(),
                m: p.zeros_like().detach(),
                v: p.zeros_like().detach(),
            })
            .collect();
        Adam {
            beta1,
            beta2,
            eps,
            steps: 0,
            moments,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of every parameter that has a gradient. `params` must be in
    /// the order given to [`Adam::new`].
    pub fn step(&mut self, params: &[(String, Tensor)], lr: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        tch::no_grad(|| {
            for ((name, p), mo) in params.iter().zip(self.moments.iter_mut()) {
                debug_assert_eq!(name, &mo.name);
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let m = &mo.m * self.beta1 + &g * (1.0 - self.beta1);
                let v = &mo.v * self.beta2 + g.square() * (1.0 - self.beta2);
                let update = (&m / c1) / ((&v / c2).sqrt() + self.eps) * lr;
                let mut p = p.shallow_clone();
                let _ = p.g_sub_(&update);
                mo.m.copy_(&m);
                mo.v.copy_(&v);
            }
        });
    }

    pub(crate) fn snapshot(&self) -> (u64, Vec<(Tensor, Tensor)>) {
        (
            self.steps,
            self.moments.iter().map(|mo| (mo.m.copy(), mo.v.copy())).collect(),
        )
    }

    pub(crate) fn restore(&mut self, snap: &(u64, Vec<(Tensor, Tensor)>)) {
        self.steps = snap.0;
        tch::no_grad(|| {
            for (mo, (m, v)) in self.moments.iter_mut().zip(&snap.1) {
                mo.m.copy_(m);
                mo.v.copy_(v);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::{Device, Kind};

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let p = Tensor::from_slice(&[1.0f64, -2.0]).set_requires_grad(true);
        let params = vec![("p".to_string(), p.shallow_clone())];
        let mut opt = Adam::new(&params, 0.5, 0.999, 1e-8);
        (&p * Tensor::from_slice(&[3.0f64, -0.5])).sum(None).backward();
        opt.step(&params, 0.1);
        let got = Vec::<f64>::try_from(&p.detach()).unwrap();
        assert!((got[0] - 0.9).abs() < 1e-6 && (got[1] + 1.9).abs() < 1e-6, "{got:?}");
    }

    #[test]
    fn parameters_without_gradients_are_left_alone() {
        let p = Tensor::ones([3], (Kind::Float, Device::Cpu)).set_requires_grad(true);
        let params = vec![("p".to_string(), p.shallow_clone())];
        let mut opt = Adam::new(&params, 0.5, 0.999, 1e-8);
        opt.step(&params, 1.0);
        assert!(p.detach().equal(&Tensor::ones([3], (Kind::Float, Device::Cpu))));
    }
}
