use super::nn::ParamStore;
use super::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let zeros = |p: &super::nn::Param| Tensor::zeros(p.value.rows(), p.value.cols());
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.params.iter().map(zeros).collect(),
            v: store.params.iter().map(zeros).collect(),
        }
    }

    /// One bias-corrected Adam step; `grads[i]` belongs to parameter `i`.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        debug_assert_eq!(grads.len(), store.params.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = store.params[i].value.data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
