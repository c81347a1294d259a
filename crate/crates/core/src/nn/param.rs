use super::Tensor;

/// A learnable tensor with its accumulated gradient, or a non-learnable buffer.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    /// Running statistics and other state that is saved but never optimized.
    pub fn buffer(value: Tensor) -> Self {
        Self {
            value,
            grad: Tensor::zeros(&[0]),
            trainable: false,
        }
    }

    pub fn zero_grad(&mut self) {
        if self.trainable {
            self.grad.fill(0.0);
        }
    }
}

/// Name-ordered traversal over every parameter and buffer of a module.
///
/// Visitation order is fixed per module and is what the optimizer state and
/// checkpoints key on.
pub trait Parameterized {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    /// Sum of squares over learnable values.
    fn weight_sq_norm(&self) -> f64 {
        let mut acc = 0.0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                acc += p.value.sum_sq();
            }
        });
        acc
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.value.len();
            }
        });
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
