use crate::nn::Param;

/// SGD with classical momentum and L2 weight decay:
/// `v <- mu * v + grad + wd * value; value <- value - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f32>] {
        &self.velocity
    }

    /// Updates every trainable parameter in order, then zeroes all gradients.
    /// The parameter list must be presented in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        let trainable = params.iter().filter(|p| p.trainable).count();
        if self.velocity.len() != trainable {
            self.velocity = params
                .iter()
                .filter(|p| p.trainable)
                .map(|p| vec![0.0; p.value.len()])
                .collect();
        }
        let mut slot = 0;
        for p in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let v = &mut self.velocity[slot];
            slot += 1;
            let grad = p.grad.data().to_vec();
            for ((val, vel), g) in p.value.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                *vel = self.momentum * *vel + g + self.weight_decay * *val;
                *val -= self.lr * *vel;
            }
            p.zero_grad();
        }
    }
}
